//! Constructive multiscale procedures on slip fields: projection of
//! low-energy fields onto integer piecewise-constant competitors, dyadic
//! clustering of 1D jump sets, iterative mollification cascades with
//! good-scale detection, approximate-one-dimensionality detection, and
//! integer snapping of 1D profiles.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::energy::{build_interaction_table, dist_to_lattice, nearest_lattice, p_form};
use crate::field::{RegionMask, SlipField};
use crate::kernels::{phi_layer_1d, AngularProfile, LayerIndex};
use crate::quad;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// 1D jump sets and clustering
// ---------------------------------------------------------------------------

/// A finite jump set on an interval together with the {0,1}-valued step
/// function it induces (fixed by the value at the left endpoint).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpSet1D {
    lo: f64,
    hi: f64,
    points: Vec<f64>,
    left_value: bool,
}

impl JumpSet1D {
    pub fn new(interval: (f64, f64), points: Vec<f64>, left_value: bool) -> Result<Self> {
        let (lo, hi) = interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::domain(format!("invalid interval ({lo}, {hi})")));
        }
        for w in points.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::domain(format!(
                    "jump locations must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let (Some(&first), Some(&last)) = (points.first(), points.last()) {
            if first <= lo || last >= hi {
                return Err(Error::domain(
                    "jump locations must lie strictly inside the interval".to_string(),
                ));
            }
        }
        Ok(JumpSet1D { lo, hi, points, left_value })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn left_value(&self) -> bool {
        self.left_value
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Value of the induced step function at `t`.
    pub fn value(&self, t: f64) -> f64 {
        let crossings = self.points.partition_point(|&p| p <= t);
        let v = (self.left_value as usize + crossings) % 2;
        v as f64
    }

    /// Exact L¹ distance between the two induced step functions.
    pub fn l1_distance(&self, other: &JumpSet1D) -> Result<f64> {
        if (self.lo - other.lo).abs() > 1e-12 || (self.hi - other.hi).abs() > 1e-12 {
            return Err(Error::config(
                "l1_distance requires jump sets on the same interval".to_string(),
            ));
        }
        let mut cuts: Vec<f64> =
            self.points.iter().chain(other.points.iter()).copied().collect();
        cuts.sort_by(f64::total_cmp);
        cuts.push(self.hi);
        let mut total = 0.0;
        let mut lo = self.lo;
        for &c in &cuts {
            if c > lo {
                let mid = 0.5 * (lo + c);
                total += (self.value(mid) - other.value(mid)).abs() * (c - lo);
                lo = c;
            }
        }
        Ok(total)
    }
}

/// One level of the dyadic clustering reduction.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterLevel {
    pub h: i32,
    pub jumps: JumpSet1D,
    /// True when the jump set changed going from level h+1 to level h.
    pub critical: bool,
    /// Exact L¹ distance between the step functions at levels h+1 and h.
    pub drift: f64,
    /// Defined for h in [1, k]: levels h..h+m-1 are all non-critical.
    pub good: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterReport {
    /// Levels h = k down to 0, in that order.
    pub levels: Vec<ClusterLevel>,
    pub m: u32,
    pub critical_count: usize,
    pub good_count: usize,
}

impl ClusterReport {
    pub fn level(&self, h: i32) -> Option<&ClusterLevel> {
        self.levels.iter().find(|l| l.h == h)
    }
}

/// Iterate the cluster-removal rule from level k down to 0: at level h a
/// maximal run of jumps with consecutive gaps < 2^{-h} is a cluster; a
/// cluster of odd size is replaced by its leftmost point, one of even size is
/// removed entirely. A level is critical when the jump set changes, and
/// good when it starts a run of m non-critical levels.
pub fn cluster_1d(j: &JumpSet1D, k: i32, m: u32) -> Result<ClusterReport> {
    if k < 0 {
        return Err(Error::domain(format!("cluster_1d needs k >= 0, got {k}")));
    }
    if m < 1 {
        return Err(Error::domain("cluster_1d needs m >= 1".to_string()));
    }
    let mut current = j.points().to_vec();
    let mut prev_fn = j.clone();
    let mut levels = Vec::with_capacity((k + 1) as usize);
    for h in (0..=k).rev() {
        let gap = (-h as f64).exp2();
        let mut next = Vec::new();
        let mut i = 0;
        while i < current.len() {
            let mut last = i;
            while last + 1 < current.len() && current[last + 1] - current[last] < gap {
                last += 1;
            }
            if (last - i + 1) % 2 == 1 {
                next.push(current[i]);
            }
            i = last + 1;
        }
        let critical = next != current;
        let jumps = JumpSet1D::new(j.interval(), next.clone(), j.left_value())?;
        let drift = jumps.l1_distance(&prev_fn)?;
        levels.push(ClusterLevel { h, jumps, critical, drift, good: None });
        current = next;
        prev_fn = levels.last().unwrap().jumps.clone();
    }
    let critical_count = levels.iter().filter(|l| l.critical).count();
    // Levels above k never change the jump set, so they count as
    // non-critical when the goodness window extends past k.
    let crit_flags: Vec<(i32, bool)> = levels.iter().map(|l| (l.h, l.critical)).collect();
    let is_critical =
        |h: i32| -> bool { crit_flags.iter().any(|&(lh, c)| lh == h && c) };
    let mut good_count = 0;
    for lvl in levels.iter_mut() {
        if lvl.h >= 1 {
            let good = (0..m as i32).all(|i| !is_critical(lvl.h + i));
            if good {
                good_count += 1;
            }
            lvl.good = Some(good);
        }
    }
    Ok(ClusterReport { levels, m, critical_count, good_count })
}

// ---------------------------------------------------------------------------
// Isolated jump energy (1D, exponent-2 kernel)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct IsolatedJumpReport {
    pub value: f64,
    /// True when every jump in the window keeps distance 2^{-h} from the
    /// window ends and 2·2^{-h} from its neighbours.
    pub clearance_ok: bool,
}

/// Quadratic form of the induced step function over the window against the
/// 1D exponent-2 layer kernel at scale h. For an isolated jump this equals
/// 2 ln 2 independently of h.
pub fn isolated_jump_energy(
    jumps: &JumpSet1D,
    h: i32,
    window: (f64, f64),
) -> Result<IsolatedJumpReport> {
    let (lo, hi) = window;
    let (ilo, ihi) = jumps.interval();
    if !(lo < hi) || lo < ilo - 1e-12 || hi > ihi + 1e-12 {
        return Err(Error::domain(format!(
            "window ({lo}, {hi}) must lie inside the interval ({ilo}, {ihi})"
        )));
    }
    let layer = LayerIndex::new(h)?;
    if h < 0 {
        return Err(Error::domain("isolated_jump_energy needs h >= 0".to_string()));
    }
    let r = (-h as f64).exp2();
    let inside: Vec<f64> = jumps
        .points()
        .iter()
        .copied()
        .filter(|&x| x > lo && x < hi)
        .collect();
    let mut clearance_ok = inside
        .iter()
        .all(|&x| x - lo >= r - 1e-12 && hi - x >= r - 1e-12);
    for w in inside.windows(2) {
        if w[1] - w[0] < 2.0 * r - 1e-12 {
            clearance_ok = false;
        }
    }
    // Pieces of the step function within the window.
    let mut cuts = vec![lo];
    cuts.extend_from_slice(&inside);
    cuts.push(hi);
    let mut pieces = Vec::new();
    for w in cuts.windows(2) {
        pieces.push((w[0], w[1], jumps.value(0.5 * (w[0] + w[1]))));
    }
    let mut total = 0.0;
    for a in 0..pieces.len() {
        for b in (a + 1)..pieces.len() {
            let (a1, a2, va) = pieces[a];
            let (b1, b2, vb) = pieces[b];
            let dv = va - vb;
            if dv == 0.0 {
                continue;
            }
            // Separation t = y - x for x in the left piece, y in the right.
            let t_lo = (b1 - a2).max(1e-12 * r);
            let t_hi = (b2 - a1).min(r);
            if t_lo >= t_hi {
                continue;
            }
            let knots = [b1 - a1, b2 - a2, 0.5 * r];
            let overlap = |t: f64| -> f64 {
                let m = (a2.min(b2 - t) - a1.max(b1 - t)).max(0.0);
                m * phi_layer_1d(layer, t).unwrap_or(0.0)
            };
            total += 2.0 * dv * dv * quad::integrate_with_knots(overlap, t_lo, t_hi, &knots, 1e-9);
        }
    }
    Ok(IsolatedJumpReport { value: total, clearance_ok })
}

// ---------------------------------------------------------------------------
// Mollifier
// ---------------------------------------------------------------------------

/// Radial mollifier with a flat plateau on the half ball and a cubic
/// smoothstep blend down to zero: constant A on |x| <= 1/2, then
/// A·(1 − 3t² + 2t³) on the blend annulus, zero beyond. A is solved from
/// ∫φ = 1; this satisfies both φ >= 1 on B_{1/2} and unit mass, which a
/// plain polynomial bump cannot do simultaneously.
#[derive(Debug, Clone, Serialize)]
pub struct MollifierSpec {
    amplitude: f64,
    blend_start: f64,
    support: f64,
}

impl MollifierSpec {
    /// Build a mollifier with the given outer support radius in (1/2, 1].
    /// Supports close to 1 are rejected: the plateau amplitude solved from
    /// unit mass would fall below 1, violating φ >= 1 on the half ball.
    pub fn with_support(support: f64) -> Result<Self> {
        if !(support > 0.5 && support <= 1.0) {
            return Err(Error::config(format!(
                "mollifier support must lie in (1/2, 1], got {support}"
            )));
        }
        let trial = MollifierSpec { amplitude: 1.0, blend_start: 0.5, support };
        let amplitude = 1.0 / trial.mass();
        if amplitude < 1.0 {
            return Err(Error::config(format!(
                "support {support} needs plateau amplitude {amplitude:.4} < 1, \
                 breaking the half-ball lower bound; use a smaller support"
            )));
        }
        Ok(MollifierSpec { amplitude, blend_start: 0.5, support })
    }

    pub fn standard() -> Self {
        MollifierSpec::with_support(0.6).expect("default support is feasible")
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn support_radius(&self) -> f64 {
        self.support
    }

    /// Radial profile value at distance r.
    pub fn radial(&self, r: f64) -> f64 {
        if r < self.blend_start {
            self.amplitude
        } else if r < self.support {
            let t = (r - self.blend_start) / (self.support - self.blend_start);
            self.amplitude * (1.0 - t * t * (3.0 - 2.0 * t))
        } else {
            0.0
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.radial(x[0].hypot(x[1]))
    }

    /// Dyadic rescaling φ_h(x) = 2^{2h} φ(2^h x).
    pub fn scaled(&self, h: i32, x: [f64; 2]) -> f64 {
        let s = (h as f64).exp2();
        s * s * self.value([s * x[0], s * x[1]])
    }

    /// Continuous rescaling ψ_r(x) = r^{-2} φ(x/r).
    pub fn rescaled(&self, r: f64, x: [f64; 2]) -> f64 {
        self.value([x[0] / r, x[1] / r]) / (r * r)
    }

    /// Total mass ∫_{R²} φ dx by radial quadrature.
    pub fn mass(&self) -> f64 {
        let f = |r: f64| r * self.radial(r);
        2.0 * std::f64::consts::PI
            * quad::integrate_with_knots(f, 0.0, self.support, &[self.blend_start], 1e-13)
    }

    pub fn validate(&self) -> Result<()> {
        let mass = self.mass();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::internal(format!("mollifier mass {mass} != 1")));
        }
        for i in 0..=200 {
            let r = 0.5 * i as f64 / 200.0;
            if self.radial(r) < 1.0 {
                return Err(Error::internal(format!(
                    "mollifier below 1 at radius {r} inside the half ball"
                )));
            }
        }
        for i in 0..=400 {
            let r = 1.5 * i as f64 / 400.0;
            if self.radial(r) < 0.0 {
                return Err(Error::internal(format!("mollifier negative at radius {r}")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Mollification cascade
// ---------------------------------------------------------------------------

/// Thresholding parameters for the good-scale criterion: a level is good
/// when its total-variation defect is at most budget·m/(k·ζ).
#[derive(Debug, Clone, Serialize)]
pub struct GoodnessParams {
    pub budget: f64,
    pub k: f64,
    pub zeta: f64,
    /// Slack allowed on the "defects are nonnegative" invariant.
    pub tol: f64,
}

impl Default for GoodnessParams {
    fn default() -> Self {
        GoodnessParams { budget: 1.0, k: 1.0, zeta: 1.0, tol: 1e-9 }
    }
}

impl GoodnessParams {
    pub fn threshold(&self, m: u32) -> f64 {
        self.budget * m as f64 / (self.k * self.zeta)
    }
}

#[derive(Debug, Clone)]
pub struct CascadeLevel {
    pub h: i32,
    pub field: SlipField,
    /// Cells whose center keeps distance 2^{-h} from the domain boundary.
    pub region: RegionMask,
    /// Discrete total variation over the region.
    pub tv: f64,
    /// TV of the previous (finer) level minus TV of this level, both
    /// restricted to this level's region. None on the first level.
    pub defect: Option<f64>,
    pub good: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct ScaleCascade {
    pub levels: Vec<CascadeLevel>,
    pub m: u32,
    pub threshold: f64,
    /// True when the shrinking domain became empty before the list ended.
    pub truncated: bool,
}

impl ScaleCascade {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "h,tv,defect,good")?;
        for lvl in &self.levels {
            let defect = lvl.defect.map_or(String::new(), |d| format!("{d:.12e}"));
            let good = lvl.good.map_or(String::new(), |g| g.to_string());
            writeln!(w, "{},{:.12e},{},{}", lvl.h, lvl.tv, defect, good)?;
        }
        Ok(())
    }
}

/// Discrete total variation: forward differences in both directions, ℓ²
/// over all gradient components per cell, summed times cell area. Only
/// differences with both cells in the region contribute.
pub fn total_variation(field: &SlipField, region: &RegionMask) -> Result<f64> {
    if region.nx() != field.nx() || region.ny() != field.ny() {
        return Err(Error::config("region shape does not match field".to_string()));
    }
    let n = field.components();
    let sp = field.spacing();
    let mut tv = 0.0;
    for iy in 0..field.ny() {
        for ix in 0..field.nx() {
            if !region.get(ix, iy) {
                continue;
            }
            let a = field.get(ix, iy);
            let mut g2 = 0.0;
            if ix + 1 < field.nx() && region.get(ix + 1, iy) {
                let b = field.get(ix + 1, iy);
                for c in 0..n {
                    let d = (b[c] - a[c]) / sp;
                    g2 += d * d;
                }
            }
            if iy + 1 < field.ny() && region.get(ix, iy + 1) {
                let b = field.get(ix, iy + 1);
                for c in 0..n {
                    let d = (b[c] - a[c]) / sp;
                    g2 += d * d;
                }
            }
            tv += g2.sqrt();
        }
    }
    Ok(tv * field.cell_area())
}

/// L¹ distance between two fields over an optional region.
pub fn field_l1_distance(
    a: &SlipField,
    b: &SlipField,
    region: Option<&RegionMask>,
) -> Result<f64> {
    if a.nx() != b.nx() || a.ny() != b.ny() || a.components() != b.components() {
        return Err(Error::config("field shapes do not match".to_string()));
    }
    let n = a.components();
    let mut total = 0.0;
    for iy in 0..a.ny() {
        for ix in 0..a.nx() {
            if region.map_or(true, |r| r.get(ix, iy)) {
                let u = a.get(ix, iy);
                let v = b.get(ix, iy);
                let mut d2 = 0.0;
                for c in 0..n {
                    let d = u[c] - v[c];
                    d2 += d * d;
                }
                total += d2.sqrt();
            }
        }
    }
    Ok(total * a.cell_area())
}

fn region_with_margin(field: &SlipField, margin: f64) -> RegionMask {
    let [ox, oy] = field.origin();
    let sx = field.nx() as f64 * field.spacing();
    let sy = field.ny() as f64 * field.spacing();
    RegionMask::from_fn(field.nx(), field.ny(), |ix, iy| {
        let [cx, cy] = field.cell_center(ix, iy);
        cx - ox >= margin
            && ox + sx - cx >= margin
            && cy - oy >= margin
            && oy + sy - cy >= margin
    })
}

/// Convolve with φ_h sampled at cell centers; weights are renormalized to
/// unit discrete mass over the taps that fall inside the grid, so interior
/// cells see an exactly mass-preserving kernel.
fn convolve_scaled(field: &SlipField, spec: &MollifierSpec, h: i32) -> Result<SlipField> {
    let sp = field.spacing();
    let radius = (spec.support_radius() * (-h as f64).exp2() / sp).ceil() as i64;
    let mut taps = Vec::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let w = spec.scaled(h, [dx as f64 * sp, dy as f64 * sp]) * sp * sp;
            if w > 0.0 {
                taps.push((dx, dy, w));
            }
        }
    }
    if taps.is_empty() {
        return Err(Error::internal("mollifier has no taps at this scale".to_string()));
    }
    let n = field.components();
    let nx = field.nx() as i64;
    let ny = field.ny() as i64;
    let mut out = field.clone();
    let mut acc = vec![0.0; n];
    for iy in 0..ny {
        for ix in 0..nx {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut wsum = 0.0;
            for &(dx, dy, w) in &taps {
                let jx = ix + dx;
                let jy = iy + dy;
                if jx < 0 || jx >= nx || jy < 0 || jy >= ny {
                    continue;
                }
                let v = field.get(jx as usize, jy as usize);
                for c in 0..n {
                    acc[c] += w * v[c];
                }
                wsum += w;
            }
            for c in 0..n {
                acc[c] /= wsum;
            }
            out.set(ix as usize, iy as usize, &acc);
        }
    }
    Ok(out)
}

/// Iterated mollification from the finest scale down. `h_list` must be
/// strictly decreasing with a uniform step m >= 3; the first entry labels
/// the input field, each later entry h convolves the previous level with
/// φ_h and restricts the statistics to the shrinking domain Ω_h.
pub fn mollify_cascade(
    field: &SlipField,
    spec: &MollifierSpec,
    h_list: &[i32],
    params: &GoodnessParams,
) -> Result<ScaleCascade> {
    if h_list.len() < 2 {
        return Err(Error::config("mollify_cascade needs at least two levels".to_string()));
    }
    let m = h_list[0] - h_list[1];
    if m < 3 {
        return Err(Error::config(format!("cascade step must be >= 3, got {m}")));
    }
    for w in h_list.windows(2) {
        if w[0] - w[1] != m {
            return Err(Error::config("h_list must descend with a uniform step".to_string()));
        }
    }
    if !(params.k > 0.0 && params.zeta > 0.0) {
        return Err(Error::config("goodness parameters k, zeta must be positive".to_string()));
    }
    let h0 = h_list[0];
    if (-h0 as f64).exp2() < 2.0 * field.spacing() {
        return Err(Error::config(format!(
            "grid spacing {} does not resolve the finest scale 2^-{h0}",
            field.spacing()
        )));
    }
    let m = m as u32;
    let threshold = params.threshold(m);
    let region0 = region_with_margin(field, (-h0 as f64).exp2());
    if region0.count() == 0 {
        return Err(Error::config("domain is empty already at the finest scale".to_string()));
    }
    let tv0 = total_variation(field, &region0)?;
    let mut levels = vec![CascadeLevel {
        h: h0,
        field: field.clone(),
        region: region0,
        tv: tv0,
        defect: None,
        good: None,
    }];
    let mut truncated = false;
    for &h in &h_list[1..] {
        let region = region_with_margin(field, (-h as f64).exp2());
        if region.count() == 0 {
            truncated = true;
            break;
        }
        let prev = levels.last().unwrap();
        let next = convolve_scaled(&prev.field, spec, h)?;
        let tv_prev = total_variation(&prev.field, &region)?;
        let tv = total_variation(&next, &region)?;
        let defect = tv_prev - tv;
        if defect < -params.tol * (1.0 + tv_prev) {
            log::warn!("negative TV defect {defect} at level {h}");
        }
        levels.push(CascadeLevel {
            h,
            field: next,
            region,
            tv,
            defect: Some(defect),
            good: Some(defect <= threshold),
        });
    }
    Ok(ScaleCascade { levels, m, threshold, truncated })
}

// ---------------------------------------------------------------------------
// Approximate one-dimensionality detection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct OneDimReport {
    /// Unit direction of the mollified field at the best candidate point.
    pub nu: Vec<f64>,
    pub x_star: [f64; 2],
    /// η = ∫_Q (|f|∗ψ_r − |f∗ψ_r|) dx.
    pub eta: f64,
    pub eta_tilde_min: f64,
    /// ∫_Q (|f| − f·ν̂) dx.
    pub residual1: f64,
    /// ∫_Q |f − ν̂ (f·ν̂)₊| dx.
    pub residual2: f64,
    /// ‖f‖_{L¹(Q)}, for normalizing residual₂.
    pub l1_norm: f64,
}

/// Detect whether a vector field is approximately scalar: compare the
/// mollified modulus with the modulus of the mollification over the window
/// Q = (−r/8, r/8)² centered in the domain, pick the direction of f∗ψ_r at
/// the point minimizing the local defect, and report the alignment
/// residuals against that fixed direction.
pub fn one_dim_detect(
    field: &SlipField,
    spec: &MollifierSpec,
    r: f64,
) -> Result<OneDimReport> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("radius must be positive, got {r}")));
    }
    let sp = field.spacing();
    if sp > r / 8.0 {
        return Err(Error::config(format!(
            "grid spacing {sp} does not resolve the window of half-side {}",
            r / 8.0
        )));
    }
    let [ox, oy] = field.origin();
    let sx = field.nx() as f64 * sp;
    let sy = field.ny() as f64 * sp;
    let center = [ox + 0.5 * sx, oy + 0.5 * sy];
    let q_half = r / 8.0;
    let reach = q_half + spec.support_radius() * r;
    if reach > 0.5 * sx + 1e-12 || reach > 0.5 * sy + 1e-12 {
        return Err(Error::config(format!(
            "domain too small: window plus mollifier support reaches {reach} from center"
        )));
    }
    let p = field.components();
    let radius = (spec.support_radius() * r / sp).ceil() as i64;
    let mut taps = Vec::new();
    let mut wsum = 0.0;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let w = spec.rescaled(r, [dx as f64 * sp, dy as f64 * sp]) * sp * sp;
            if w > 0.0 {
                taps.push((dx, dy, w));
                wsum += w;
            }
        }
    }
    for t in taps.iter_mut() {
        t.2 /= wsum;
    }
    let q_cells: Vec<(usize, usize)> = (0..field.ny())
        .flat_map(|iy| (0..field.nx()).map(move |ix| (ix, iy)))
        .filter(|&(ix, iy)| {
            let [cx, cy] = field.cell_center(ix, iy);
            (cx - center[0]).abs() < q_half && (cy - center[1]).abs() < q_half
        })
        .collect();
    if q_cells.is_empty() {
        return Err(Error::config("window contains no cells".to_string()));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut field_scale: f64 = 0.0;
    for iy in 0..field.ny() {
        for ix in 0..field.nx() {
            field_scale = field_scale.max(norm(field.get(ix, iy)));
        }
    }
    let nx = field.nx() as i64;
    let ny = field.ny() as i64;
    let mut best: Option<(f64, Vec<f64>, (usize, usize))> = None;
    let mut eta = 0.0;
    for &(ix, iy) in &q_cells {
        let mut conv = vec![0.0; p];
        let mut conv_abs = 0.0;
        for &(dx, dy, w) in &taps {
            let jx = ix as i64 + dx;
            let jy = iy as i64 + dy;
            if jx < 0 || jx >= nx || jy < 0 || jy >= ny {
                return Err(Error::internal("mollifier tap escaped the grid".to_string()));
            }
            let v = field.get(jx as usize, jy as usize);
            for c in 0..p {
                conv[c] += w * v[c];
            }
            conv_abs += w * norm(v);
        }
        let eta_tilde = conv_abs - norm(&conv);
        eta += eta_tilde * field.cell_area();
        let better = match &best {
            None => true,
            Some((e, _, _)) => eta_tilde < *e,
        };
        if better {
            best = Some((eta_tilde, conv.clone(), (ix, iy)));
        }
    }
    let (eta_tilde_min, conv_star, (sx_i, sy_i)) = best.unwrap();
    if norm(&conv_star) <= 1e-12 * (1.0 + field_scale) {
        return Err(Error::domain(
            "mollified field vanishes on the window; direction undefined".to_string(),
        ));
    }
    let cs = norm(&conv_star);
    let nu: Vec<f64> = conv_star.iter().map(|x| x / cs).collect();
    let mut residual1 = 0.0;
    let mut residual2 = 0.0;
    let mut l1_norm = 0.0;
    for &(ix, iy) in &q_cells {
        let f = field.get(ix, iy);
        let fn_ = norm(f);
        let dot: f64 = f.iter().zip(&nu).map(|(a, b)| a * b).sum();
        residual1 += fn_ - dot;
        let pos = dot.max(0.0);
        let mut d2 = 0.0;
        for c in 0..p {
            let d = f[c] - nu[c] * pos;
            d2 += d * d;
        }
        residual2 += d2.sqrt();
        l1_norm += fn_;
    }
    let area = field.cell_area();
    Ok(OneDimReport {
        nu,
        x_star: field.cell_center(sx_i, sy_i),
        eta,
        eta_tilde_min,
        residual1: residual1 * area,
        residual2: residual2 * area,
        l1_norm: l1_norm * area,
    })
}

// ---------------------------------------------------------------------------
// Integer snapping of 1D profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SnapResult {
    pub a: Vec<i64>,
    pub b: Vec<i64>,
    pub lambda: Vec<i64>,
    /// Weighted L¹ distance between the input and the snapped profile.
    pub l1_error: f64,
    /// Weighted L¹ norm of the pointwise distance to the integer lattice.
    pub lattice_l1: f64,
    pub degenerate: bool,
}

/// Snap a sampled 1D profile u(t) onto the form a·λ(t) + b with a, b
/// integer vectors and λ integer-valued: round pointwise to the lattice,
/// take the two most occupied values w₁ (→ b) and w₂, rescale their
/// difference to the shortest collinear lattice vector (→ a), and express
/// each region as an integer multiple where possible, zero elsewhere.
pub fn snap_one_dimensional(
    t: &[f64],
    u: &[Vec<f64>],
    m_bound: f64,
) -> Result<SnapResult> {
    if t.is_empty() || t.len() != u.len() {
        return Err(Error::domain(format!(
            "need matching nonempty samples, got {} abscissae and {} values",
            t.len(),
            u.len()
        )));
    }
    let dim = u[0].len();
    if dim == 0 || u.iter().any(|v| v.len() != dim) {
        return Err(Error::domain("inconsistent sample dimensions".to_string()));
    }
    for w in t.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::domain("abscissae must be strictly increasing".to_string()));
        }
    }
    if !(m_bound >= 0.0) || !m_bound.is_finite() {
        return Err(Error::domain(format!("invalid bound {m_bound}")));
    }
    let n = t.len();
    // Midpoint-based weights, extended symmetrically at the ends.
    let weights: Vec<f64> = (0..n)
        .map(|j| {
            if n == 1 {
                1.0
            } else {
                let prev = if j == 0 { 2.0 * t[0] - t[1] } else { t[j - 1] };
                let next = if j == n - 1 { 2.0 * t[n - 1] - t[n - 2] } else { t[j + 1] };
                0.5 * (next - prev)
            }
        })
        .collect();
    let z: Vec<Vec<i64>> = u.iter().map(|v| nearest_lattice(v)).collect();
    let mut occupancy: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    for (zj, wj) in z.iter().zip(&weights) {
        *occupancy.entry(zj.clone()).or_insert(0.0) += wj;
    }
    let mut ranked: Vec<(&Vec<i64>, f64)> =
        occupancy.iter().map(|(k, &v)| (k, v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let b_star = ranked[0].0.clone();
    let finish = |a_star: Vec<i64>, degenerate: bool| -> Result<SnapResult> {
        let lambda: Vec<i64> = z
            .iter()
            .map(|zj| {
                let e: Vec<i64> = zj.iter().zip(&b_star).map(|(a, b)| a - b).collect();
                if a_star.iter().all(|&c| c == 0) {
                    return 0;
                }
                let i0 = a_star.iter().position(|&c| c != 0).unwrap();
                if e[i0] % a_star[i0] != 0 {
                    return 0;
                }
                let c = e[i0] / a_star[i0];
                if e.iter().zip(&a_star).all(|(&ei, &ai)| ei == c * ai) {
                    c
                } else {
                    0
                }
            })
            .collect();
        let mut l1_error = 0.0;
        let mut lattice_l1 = 0.0;
        for j in 0..n {
            let mut d2 = 0.0;
            for c in 0..dim {
                let d = u[j][c] - (a_star[c] * lambda[j] + b_star[c]) as f64;
                d2 += d * d;
            }
            l1_error += weights[j] * d2.sqrt();
            lattice_l1 += weights[j] * dist_to_lattice(&u[j]);
        }
        Ok(SnapResult { a: a_star, b: b_star.clone(), lambda, l1_error, lattice_l1, degenerate })
    };
    if ranked.len() < 2 {
        return finish(vec![0; dim], true);
    }
    let w2 = ranked[1].0.clone();
    let d: Vec<i64> = w2.iter().zip(&b_star).map(|(a, b)| a - b).collect();
    let max_comp = d.iter().map(|c| c.abs()).max().unwrap();
    let scan_bound = (2.0 * m_bound + 1.0).floor() as i64;
    if max_comp > scan_bound {
        return Err(Error::domain(format!(
            "lattice gap {max_comp} exceeds the stated profile bound {m_bound}"
        )));
    }
    // Shortest collinear lattice vector: largest denominator q <= the
    // lattice bound dividing every component.
    let mut g = 1;
    for q in 1..=max_comp.max(1) {
        if d.iter().all(|&c| c % q == 0) {
            g = q;
        }
    }
    let a_star: Vec<i64> = d.iter().map(|&c| c / g).collect();
    finish(a_star, false)
}

// ---------------------------------------------------------------------------
// BV projection onto integer tile fields
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BvReport {
    pub k: i32,
    pub alpha: f64,
    pub candidates: Vec<(i32, f64)>,
    pub tiles_processed: usize,
    pub dv: f64,
    pub l1_distance: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct BvProjection {
    pub k: i32,
    pub alpha: f64,
    /// Evaluated (k, p_{Γ_k,ω}(u)) pairs over the admissible window.
    pub candidates: Vec<(i32, f64)>,
    /// Integer field on the tile grid (spacing alpha).
    pub v: SlipField,
    /// Tiles that were actually projected (fully inside ω with full
    /// enlarged-square support).
    pub tiles: RegionMask,
    /// Discrete |Dv|(ω): tile edge length times the jump across each
    /// interior tile edge.
    pub dv: f64,
    pub l1_distance: f64,
    /// Truncated rescaled energy of v over the processed tiles.
    pub energy: f64,
}

impl BvProjection {
    pub fn report(&self) -> BvReport {
        BvReport {
            k: self.k,
            alpha: self.alpha,
            candidates: self.candidates.clone(),
            tiles_processed: self.tiles.count(),
            dv: self.dv,
            l1_distance: self.l1_distance,
            energy: self.energy,
        }
    }
}

/// Project a field onto an integer piecewise-constant competitor: choose k
/// in the admissible dyadic window minimizing the single-layer form, tile
/// the inner region with squares of side α = 2^{-k-4}, round pointwise on
/// each enlarged square, average, round the average, and report the total
/// variation, L¹ distance and truncated energy of the result.
pub fn bv_project(
    u: &SlipField,
    profile: &AngularProfile,
    eps: f64,
    delta: f64,
    omega: &RegionMask,
) -> Result<BvProjection> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::domain(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    if omega.nx() != u.nx() || omega.ny() != u.ny() {
        return Err(Error::config("omega shape does not match field".to_string()));
    }
    if omega.count() == 0 {
        return Err(Error::config("omega is empty".to_string()));
    }
    let l = (1.0 / eps).log2();
    let k_min = ((1.0 - delta) * l).ceil() as i32;
    let k_max = ((1.0 - 0.5 * delta) * l).floor() as i32;
    if k_min > k_max || k_max < 0 {
        return Err(Error::config(format!(
            "no integer k with eps^(1-delta/2) <= 2^-k <= eps^(1-delta): \
             window [{:.3}, {:.3}] is empty",
            (1.0 - delta) * l,
            (1.0 - 0.5 * delta) * l
        )));
    }
    let sp = u.spacing();
    let [ox, oy] = u.origin();
    let sx = u.nx() as f64 * sp;
    let sy = u.ny() as f64 * sp;
    // Distance from the marked region to the domain boundary.
    let mut margin = f64::INFINITY;
    for iy in 0..u.ny() {
        for ix in 0..u.nx() {
            if omega.get(ix, iy) {
                let [cx, cy] = u.cell_center(ix, iy);
                margin = margin
                    .min(cx - ox)
                    .min(ox + sx - cx)
                    .min(cy - oy)
                    .min(oy + sy - cy);
            }
        }
    }
    let mut candidates = Vec::new();
    let mut best: Option<(i32, f64)> = None;
    for k in k_min.max(0)..=k_max {
        let alpha = (-(k + 4) as f64).exp2();
        if alpha < sp * (1.0 - 1e-9) {
            log::warn!("skipping k = {k}: grid does not resolve tile side {alpha}");
            continue;
        }
        if margin < 4.0 * (-k as f64).exp2() * (1.0 - 1e-9) {
            log::warn!("skipping k = {k}: omega margin {margin} below 2^-k+2");
            continue;
        }
        let table = build_interaction_table(profile, k, k, sp, 2)?;
        let p = p_form(&table, u, Some(omega))?;
        candidates.push((k, p));
        if best.map_or(true, |(_, bp)| p < bp) {
            best = Some((k, p));
        }
    }
    let (k, _) = best.ok_or_else(|| {
        Error::config(
            "no admissible k is resolvable on this grid with the required margin".to_string(),
        )
    })?;
    let alpha = (-(k + 4) as f64).exp2();
    let n = u.components();
    let nt_x = (sx / alpha + 1e-9).floor() as usize;
    let nt_y = (sy / alpha + 1e-9).floor() as usize;
    // Per-tile accumulation of the rounded field.
    let mut count = vec![0usize; nt_x * nt_y];
    let mut sums = vec![0.0f64; nt_x * nt_y * n];
    let mut inside = vec![true; nt_x * nt_y];
    let mut tile_of = vec![usize::MAX; u.nx() * u.ny()];
    for iy in 0..u.ny() {
        for ix in 0..u.nx() {
            let [cx, cy] = u.cell_center(ix, iy);
            let tx = ((cx - ox) / alpha).floor() as i64;
            let ty = ((cy - oy) / alpha).floor() as i64;
            if tx < 0 || ty < 0 || tx >= nt_x as i64 || ty >= nt_y as i64 {
                continue;
            }
            let ti = ty as usize * nt_x + tx as usize;
            tile_of[iy * u.nx() + ix] = ti;
            count[ti] += 1;
            let z = nearest_lattice(u.get(ix, iy));
            for c in 0..n {
                sums[ti * n + c] += z[c] as f64;
            }
            if !omega.get(ix, iy) {
                inside[ti] = false;
            }
        }
    }
    let mut v = SlipField::constant(nt_x, nt_y, alpha, [ox, oy], &vec![0.0; n])?;
    let mut tiles = RegionMask::empty(nt_x, nt_y);
    for ty in 0..nt_y {
        for tx in 0..nt_x {
            let ti = ty * nt_x + tx;
            if !inside[ti] || count[ti] == 0 {
                continue;
            }
            // Enlarged square: the 3x3 tile neighbourhood must be fully
            // sampled inside the domain.
            if tx == 0 || ty == 0 || tx + 1 >= nt_x || ty + 1 >= nt_y {
                continue;
            }
            let mut total = 0usize;
            let mut mean = vec![0.0; n];
            let mut ok = true;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let tj = (ty as i64 + dy) as usize * nt_x + (tx as i64 + dx) as usize;
                    if count[tj] == 0 {
                        ok = false;
                    } else {
                        total += count[tj];
                        for c in 0..n {
                            mean[c] += sums[tj * n + c];
                        }
                    }
                }
            }
            if !ok {
                continue;
            }
            for c in 0..n {
                mean[c] /= total as f64;
            }
            let vz = nearest_lattice(&mean);
            let vzf: Vec<f64> = vz.iter().map(|&c| c as f64).collect();
            v.set(tx, ty, &vzf);
            tiles.set(tx, ty, true);
        }
    }
    if tiles.count() == 0 {
        return Err(Error::config("no tile fits inside omega".to_string()));
    }
    // |Dv|(ω): jumps across shared edges of processed tiles.
    let mut dv = 0.0;
    for ty in 0..nt_y {
        for tx in 0..nt_x {
            if !tiles.get(tx, ty) {
                continue;
            }
            let a = v.get(tx, ty);
            for (nxt_x, nxt_y) in [(tx + 1, ty), (tx, ty + 1)] {
                if nxt_x < nt_x && nxt_y < nt_y && tiles.get(nxt_x, nxt_y) {
                    let b = v.get(nxt_x, nxt_y);
                    let mut d2 = 0.0;
                    for c in 0..n {
                        let d = a[c] - b[c];
                        d2 += d * d;
                    }
                    dv += alpha * d2.sqrt();
                }
            }
        }
    }
    // L¹ distance on the original grid over the processed tiles.
    let mut l1 = 0.0;
    for iy in 0..u.ny() {
        for ix in 0..u.nx() {
            let ti = tile_of[iy * u.nx() + ix];
            if ti == usize::MAX {
                continue;
            }
            let (tx, ty) = (ti % nt_x, ti / nt_x);
            if !tiles.get(tx, ty) {
                continue;
            }
            let a = u.get(ix, iy);
            let b = v.get(tx, ty);
            let mut d2 = 0.0;
            for c in 0..n {
                let d = a[c] - b[c];
                d2 += d * d;
            }
            l1 += d2.sqrt();
        }
    }
    l1 *= u.cell_area();
    let table = build_interaction_table(profile, 0, k, alpha, 2)?;
    let energy = p_form(&table, &v, Some(&tiles))? / (1.0 / eps).ln();
    Ok(BvProjection { k, alpha, candidates, v, tiles, dv, l1_distance: l1, energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn jumpset(points: &[f64]) -> JumpSet1D {
        JumpSet1D::new((0.0, 1.0), points.to_vec(), false).unwrap()
    }

    #[test]
    fn step_function_and_l1_distance() {
        let a = jumpset(&[0.25, 0.75]);
        assert_eq!(a.value(0.1), 0.0);
        assert_eq!(a.value(0.5), 1.0);
        assert_eq!(a.value(0.9), 0.0);
        let b = jumpset(&[0.25]);
        // Functions differ on (0.75, 1.0) only.
        let d = a.l1_distance(&b).unwrap();
        assert!((d - 0.25).abs() < 1e-14, "distance {d}");
        assert!(JumpSet1D::new((0.0, 1.0), vec![0.5, 0.5], false).is_err());
        assert!(JumpSet1D::new((0.0, 1.0), vec![1.5], false).is_err());
    }

    #[test]
    fn singleton_never_critical_and_pair_merges_once() {
        let single = jumpset(&[0.5]);
        let rep = cluster_1d(&single, 10, 2).unwrap();
        assert_eq!(rep.critical_count, 0);
        assert!(rep.levels.iter().all(|l| l.jumps.points() == [0.5]));
        assert_eq!(rep.good_count, 10);

        let gap = (2.0f64).powi(-6);
        let pair = jumpset(&[0.5, 0.5 + gap]);
        let rep = cluster_1d(&pair, 10, 1).unwrap();
        // Gap < 2^-h first at h = 5; the even pair vanishes there.
        assert_eq!(rep.critical_count, 1);
        assert!(rep.level(6).unwrap().jumps.len() == 2);
        assert!(rep.level(5).unwrap().critical);
        assert!(rep.level(5).unwrap().jumps.is_empty());
        assert!(rep.level(0).unwrap().jumps.is_empty());
        // Drift of the merged pair: the function changed on an interval of
        // width exactly gap.
        let drift = rep.level(5).unwrap().drift;
        assert!((drift - gap).abs() < 1e-15, "drift {drift}");
    }

    #[test]
    fn clustering_bounds_on_random_jump_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let k = 10;
        for trial in 0..1000 {
            let m = 1 + trial % 3;
            let count = 1 + rng.random_range(0..8);
            let mut pts: Vec<f64> = (0..count)
                .map(|_| 0.05 + 0.9 * rng.random::<f64>())
                .collect();
            pts.sort_by(f64::total_cmp);
            pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let j = jumpset(&pts);
            let nj = j.len();
            let rep = cluster_1d(&j, k, m as u32).unwrap();
            assert!(rep.critical_count <= nj, "critical {} > #J {nj}", rep.critical_count);
            assert!(
                rep.good_count as i64 >= k as i64 - (m * nj) as i64,
                "good {} < {} - {}*{}",
                rep.good_count,
                k,
                m,
                nj
            );
            let mut prev_len = nj;
            for lvl in &rep.levels {
                let gap = (-lvl.h as f64).exp2();
                // After processing, survivors are h-isolated.
                for w in lvl.jumps.points().windows(2) {
                    assert!(w[1] - w[0] >= gap - 1e-15, "level {} not isolated", lvl.h);
                }
                assert!(
                    lvl.drift <= prev_len as f64 * gap * (1.0 + 1e-12) + 1e-15,
                    "drift {} > {}·2^-{} at level {}",
                    lvl.drift,
                    prev_len,
                    lvl.h,
                    lvl.h
                );
                prev_len = lvl.jumps.len();
            }
        }
    }

    #[test]
    fn isolated_jump_energy_is_2ln2_and_scale_invariant() {
        let target = 2.0 * (2.0f64).ln();
        for h in 0..=5 {
            let r = (-h as f64).exp2();
            let j = JumpSet1D::new((0.0, 4.0), vec![2.0], false).unwrap();
            let rep = isolated_jump_energy(&j, h, (2.0 - r, 2.0 + r)).unwrap();
            assert!(rep.clearance_ok, "h = {h}");
            assert!(
                (rep.value - target).abs() < 1e-4,
                "h = {h}: value {} vs {target}",
                rep.value
            );
        }
        // Zero jumps.
        let empty = JumpSet1D::new((0.0, 4.0), vec![], false).unwrap();
        let rep = isolated_jump_energy(&empty, 0, (1.0, 3.0)).unwrap();
        assert_eq!(rep.value, 0.0);
        assert!(rep.clearance_ok);
        // Clearance violation flagged, not fatal.
        let tight = JumpSet1D::new((0.0, 4.0), vec![2.0, 2.1], false).unwrap();
        let rep = isolated_jump_energy(&tight, 0, (1.0, 3.0)).unwrap();
        assert!(!rep.clearance_ok);
    }

    #[test]
    fn mollifier_satisfies_all_constraints() {
        let m = MollifierSpec::standard();
        m.validate().unwrap();
        assert!(m.amplitude() >= 1.03 && m.amplitude() <= 1.30, "A = {}", m.amplitude());
        // Closed-form mass for the 0.6 support: 2π·A·(1/8 + 53/2000).
        let predicted = 1.0 / (2.0 * std::f64::consts::PI * (0.125 + 0.0265));
        assert!((m.amplitude() - predicted).abs() < 1e-10);
        // Blending all the way to the unit sphere is infeasible.
        assert!(MollifierSpec::with_support(1.0).is_err());
        // Scaled versions integrate to 1 as well (Riemann check).
        let h = 2;
        let sp = 1e-3;
        let mut s = 0.0;
        let rad = (m.support_radius() * 0.25 / sp).ceil() as i64;
        for dy in -rad..=rad {
            for dx in -rad..=rad {
                s += m.scaled(h, [dx as f64 * sp, dy as f64 * sp]) * sp * sp;
            }
        }
        assert!((s - 1.0).abs() < 1e-4, "scaled mass {s}");
    }

    fn goodness() -> GoodnessParams {
        GoodnessParams { budget: 0.05, k: 1.0, zeta: 1.0, tol: 1e-9 }
    }

    #[test]
    fn cascade_constant_field_all_good() {
        let f = SlipField::constant(48, 48, 1.0 / 64.0, [0.0, 0.0], &[3.0]).unwrap();
        let c = mollify_cascade(&f, &MollifierSpec::standard(), &[5, 2], &goodness()).unwrap();
        assert!(!c.truncated);
        assert_eq!(c.levels.len(), 2);
        for lvl in &c.levels {
            assert!(lvl.tv.abs() < 1e-14);
        }
        assert_eq!(c.levels[1].defect, Some(0.0));
        assert_eq!(c.levels[1].good, Some(true));
        // Shrinking to an empty domain truncates with a flag.
        let c = mollify_cascade(&f, &MollifierSpec::standard(), &[5, 2, -1], &goodness()).unwrap();
        assert!(c.truncated);
        assert_eq!(c.levels.len(), 2);
        // Step below 3 rejected.
        assert!(mollify_cascade(&f, &MollifierSpec::standard(), &[5, 3], &goodness()).is_err());
    }

    #[test]
    fn cascade_preserves_mass_and_bounds_drift() {
        // Compactly supported bump well inside the domain.
        let sp = 0.75 / 64.0;
        let f = SlipField::from_fn(64, 64, 1, sp, [0.0, 0.0], |[x, y]| {
            let r2 = (x - 0.375).powi(2) + (y - 0.375).powi(2);
            let r = r2.sqrt();
            vec![if r < 0.1 { (1.0 - r / 0.1).powi(2) } else { 0.0 }]
        })
        .unwrap();
        let c = mollify_cascade(&f, &MollifierSpec::standard(), &[5, 2], &goodness()).unwrap();
        let mass = |g: &SlipField| -> f64 {
            let mut s = 0.0;
            for iy in 0..g.ny() {
                for ix in 0..g.nx() {
                    s += g.get(ix, iy)[0];
                }
            }
            s * g.cell_area()
        };
        let m0 = mass(&c.levels[0].field);
        let m1 = mass(&c.levels[1].field);
        assert!((m0 - m1).abs() < 1e-10 * m0.max(1.0), "mass {m0} vs {m1}");
        // L¹ drift against 2^{-h}·TV on random block fields.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let blocks: Vec<f64> = (0..36).map(|_| rng.random_range(0..4) as f64).collect();
            let g = SlipField::from_fn(48, 48, 1, 1.0 / 64.0, [0.0, 0.0], |[x, y]| {
                let bx = ((x * 64.0 / 8.0) as usize).min(5);
                let by = ((y * 64.0 / 8.0) as usize).min(5);
                vec![blocks[by * 6 + bx]]
            })
            .unwrap();
            let c = mollify_cascade(&g, &MollifierSpec::standard(), &[5, 2], &goodness()).unwrap();
            let lvl = &c.levels[1];
            let drift =
                field_l1_distance(&c.levels[0].field, &lvl.field, Some(&lvl.region)).unwrap();
            let tv = c.levels[0].tv;
            let bound = (-lvl.h as f64).exp2() * tv;
            assert!(drift <= 2.0 * bound + 1e-12, "drift {drift} vs bound {bound}");
        }
    }

    #[test]
    fn cascade_straight_interface_every_level_good() {
        // Sharp vertical interface: a monotone 1D profile loses no TV under
        // mollification, so all defects vanish up to discretization.
        let sp = 1.5 / 96.0;
        let f = SlipField::from_fn(96, 96, 1, sp, [0.0, 0.0], |[x, _]| {
            vec![if x < 0.75 { 1.0 } else { 0.0 }]
        })
        .unwrap();
        let c = mollify_cascade(&f, &MollifierSpec::standard(), &[5, 2], &goodness()).unwrap();
        let lvl = &c.levels[1];
        assert_eq!(lvl.good, Some(true));
        let d = lvl.defect.unwrap();
        assert!(d.abs() < 0.02, "defect {d}");
        assert!(d >= -1e-9, "defect {d} negative beyond slack");
    }

    fn detect_domain(f: impl Fn(f64, f64) -> Vec<f64>) -> SlipField {
        // Domain [-0.75, 0.75]² resolving r = 1 windows.
        SlipField::from_fn(96, 96, 2, 1.5 / 96.0, [-0.75, -0.75], |[x, y]| f(x, y)).unwrap()
    }

    #[test]
    fn detect_exactly_one_dimensional_fields() {
        let nu0 = [0.6, 0.8];
        let f = detect_domain(|x, y| {
            let g = 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin() * (2.0 * y).cos();
            vec![g * nu0[0], g * nu0[1]]
        });
        let rep = one_dim_detect(&f, &MollifierSpec::standard(), 1.0).unwrap();
        assert!(rep.eta.abs() < 1e-10, "eta {}", rep.eta);
        assert!(rep.residual2 < 1e-10, "residual2 {}", rep.residual2);
        let dot = rep.nu[0] * nu0[0] + rep.nu[1] * nu0[1];
        assert!((dot - 1.0).abs() < 1e-10, "direction {:?}", rep.nu);

        // Ramp-gradient style field: nonconstant magnitude, zero set, fixed
        // direction with positive multiple.
        let f = detect_domain(|x, _| {
            let g = (0.3 - x.abs()).max(0.0);
            vec![g, 0.0]
        });
        let rep = one_dim_detect(&f, &MollifierSpec::standard(), 1.0).unwrap();
        assert!(rep.residual2 < 1e-10, "residual2 {}", rep.residual2);
        assert!(rep.residual1 < 1e-10);

        // Vanishing field: direction undefined, a distinct error.
        let z = detect_domain(|_, _| vec![0.0, 0.0]);
        let err = one_dim_detect(&z, &MollifierSpec::standard(), 1.0);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn detect_residual_bounds_on_mixed_direction_families() {
        let nu1 = [1.0, 0.0];
        let nu2 = [0.0, 1.0];
        let stripes = |freq: f64, frac: f64, amp: f64| {
            detect_domain(move |x, _| {
                let s = (2.0 * std::f64::consts::PI * freq * x).sin();
                let v = if s > 1.0 - 2.0 * frac { nu2 } else { nu1 };
                vec![amp * v[0], amp * v[1]]
            })
        };
        let spec = MollifierSpec::standard();
        let ratio = |f: &SlipField| -> (f64, OneDimReport) {
            let rep = one_dim_detect(f, &spec, 1.0).unwrap();
            assert!(rep.eta > 0.0);
            // Pigeonhole bound from the minimizing candidate.
            assert!(
                rep.residual1 <= 16.0 * rep.eta + 1e-12,
                "residual1 {} vs 16η = {}",
                rep.residual1,
                16.0 * rep.eta
            );
            let c = rep.residual2 / (rep.l1_norm * rep.eta).sqrt();
            (c, rep)
        };
        // Calibration family: frequency 1 stripes at two mixing fractions
        // and amplitudes (the bound is scaling invariant in amplitude).
        let mut cal: f64 = 0.0;
        for &(frac, amp) in &[(0.2, 1.0), (0.3, 1.0), (0.25, 2.0)] {
            cal = cal.max(ratio(&stripes(1.0, frac, amp)).0);
        }
        // Validation family: frequency 2.
        let mut val: f64 = 0.0;
        for &(frac, amp) in &[(0.2, 1.0), (0.3, 1.0), (0.25, 2.0)] {
            val = val.max(ratio(&stripes(2.0, frac, amp)).0);
        }
        assert!(cal.is_finite() && val.is_finite() && cal > 0.0 && val > 0.0);
        assert!(
            val <= 2.0 * cal && val >= 0.5 * cal,
            "fitted constants unstable: calibration {cal}, validation {val}"
        );
    }

    #[test]
    fn snap_recovers_integer_profiles_exactly() {
        let t: Vec<f64> = (0..30).map(|j| 0.05 + 0.1 * j as f64).collect();
        let a = [2i64, 3];
        let b = [1i64, -1];
        let u: Vec<Vec<f64>> = t
            .iter()
            .map(|&tj| {
                let lam = if tj < 1.0 { 0 } else if tj < 2.0 { 1 } else { 2 };
                vec![(a[0] * lam + b[0]) as f64, (a[1] * lam + b[1]) as f64]
            })
            .collect();
        let r = snap_one_dimensional(&t, &u, 10.0).unwrap();
        assert!(!r.degenerate);
        // The base point and sign of a are only determined up to which of
        // the equally occupied values ranks first; the span must match.
        assert!(
            r.a == vec![2, 3] || r.a == vec![-2, -3],
            "direction {:?} not collinear with (2, 3)",
            r.a
        );
        assert!(r.l1_error < 1e-12, "error {}", r.l1_error);
        // Constant profile: degenerate branch.
        let flat: Vec<Vec<f64>> = t.iter().map(|_| vec![1.0, 2.0]).collect();
        let r = snap_one_dimensional(&t, &flat, 10.0).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.a, vec![0, 0]);
        assert!(r.l1_error < 1e-12);
        // Dimension mismatch.
        let bad = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(snap_one_dimensional(&t[..2], &bad, 10.0).is_err());
    }

    #[test]
    fn snap_counterexample_has_irreducible_gap() {
        // u = aλ with a = (1, 1/k) and λ ∈ {0, 1, k} on thirds of (0, 3):
        // the three rounded values do not lie on an integer line, so any
        // snapped profile misses by at least 1/2 even though the pointwise
        // lattice distance is only 2/k.
        for k in [8i64, 12, 16] {
            let t: Vec<f64> = (0..60).map(|j| 0.025 + 0.05 * j as f64).collect();
            let u: Vec<Vec<f64>> = t
                .iter()
                .map(|&tj| {
                    let lam = if tj < 1.0 { 0.0 } else if tj < 2.0 { 1.0 } else { k as f64 };
                    vec![lam, lam / k as f64]
                })
                .collect();
            let r = snap_one_dimensional(&t, &u, k as f64).unwrap();
            assert!(
                r.l1_error >= 0.5,
                "k = {k}: error {} below the structural gap",
                r.l1_error
            );
            assert!(r.lattice_l1 <= 2.0 / k as f64 + 1e-9);
        }
    }

    #[test]
    fn snap_near_integer_profiles_within_lattice_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let t: Vec<f64> = (0..40).map(|j| 0.05 + 0.1 * j as f64).collect();
            let a = [1i64, 2];
            let b = [0i64, 1];
            let u: Vec<Vec<f64>> = t
                .iter()
                .map(|_| {
                    let lam = rng.random_range(0..4);
                    let nx: f64 = rng.random_range(-0.2..0.2);
                    let ny: f64 = rng.random_range(-0.2..0.2);
                    vec![(a[0] * lam + b[0]) as f64 + nx, (a[1] * lam + b[1]) as f64 + ny]
                })
                .collect();
            let r = snap_one_dimensional(&t, &u, 10.0).unwrap();
            assert!(
                r.l1_error <= 1.5 * r.lattice_l1 + 1e-12,
                "error {} vs lattice distance {}",
                r.l1_error,
                r.lattice_l1
            );
        }
    }

    fn bv_profile() -> AngularProfile {
        AngularProfile::isotropic(1, 1.0).unwrap()
    }

    /// Grid at spacing 2^-6 on [-1.625, 1.625]² with ω = [-0.5, 0.5]².
    fn bv_grid(f: impl Fn(f64, f64) -> Vec<f64>) -> (SlipField, RegionMask) {
        let sp = (2.0f64).powi(-6);
        let u = SlipField::from_fn(208, 208, 1, sp, [-1.625, -1.625], |[x, y]| f(x, y)).unwrap();
        let omega = RegionMask::from_fn(208, 208, |ix, iy| {
            let [cx, cy] = u.cell_center(ix, iy);
            cx.abs() <= 0.5 && cy.abs() <= 0.5
        });
        (u, omega)
    }

    #[test]
    fn bv_project_is_identity_on_aligned_integer_fields() {
        let (u, omega) = bv_grid(|x, _| vec![if x < 0.0 { 1.0 } else { 0.0 }]);
        // eps = 2^-2.5, delta = 0.3: admissible window [1.75, 2.125] forces k = 2.
        let p = bv_project(&u, &bv_profile(), (2.0f64).powf(-2.5), 0.3, &omega).unwrap();
        assert_eq!(p.k, 2);
        assert!((p.alpha - (2.0f64).powi(-6)).abs() < 1e-15);
        assert!(p.tiles.count() > 0);
        assert!(p.l1_distance < 1e-12, "l1 {}", p.l1_distance);
        // Integer values, and exactly the input on each processed tile.
        for ty in 0..p.tiles.ny() {
            for tx in 0..p.tiles.nx() {
                if p.tiles.get(tx, ty) {
                    let val = p.v.get(tx, ty)[0];
                    assert_eq!(val, val.round());
                }
            }
        }
        // |Dv| is the tile-resolved interface length inside ω.
        assert!(p.dv > 0.8 && p.dv < 1.2, "dv {}", p.dv);
        assert!(p.energy > 0.0);
    }

    #[test]
    fn bv_project_snaps_mollified_interfaces() {
        let eps_w = 0.125;
        let (u, omega) = bv_grid(|x, _| {
            let t = ((0.5 - x / eps_w).clamp(0.0, 1.0) * std::f64::consts::PI).cos();
            vec![0.5 - 0.5 * t]
        });
        let p = bv_project(&u, &bv_profile(), (2.0f64).powf(-2.5), 0.3, &omega).unwrap();
        assert_eq!(p.k, 2);
        for ty in 0..p.tiles.ny() {
            for tx in 0..p.tiles.nx() {
                if p.tiles.get(tx, ty) {
                    let val = p.v.get(tx, ty)[0];
                    assert_eq!(val, val.round(), "non-integer tile value {val}");
                }
            }
        }
        assert!(p.l1_distance > 1e-4 && p.l1_distance < 0.2, "l1 {}", p.l1_distance);
        assert!(p.dv > 0.5 && p.dv < 3.0, "dv {}", p.dv);
        assert!(p.energy.is_finite() && p.energy > 0.0);
        assert!(!p.candidates.is_empty());
    }

    #[test]
    fn bv_project_rejects_empty_windows() {
        let (u, omega) = bv_grid(|_, _| vec![0.0]);
        let err = bv_project(&u, &bv_profile(), 0.2, 0.05, &omega);
        match err {
            Err(Error::Config(msg)) => assert!(msg.contains("window"), "message: {msg}"),
            other => panic!("expected configuration error, got {other:?}"),
        }
    }
}
