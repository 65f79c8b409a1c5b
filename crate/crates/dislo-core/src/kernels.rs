//! The singular interaction kernel |z|^-3 Γ̂(z/|z|), its dyadic layers and
//! truncations, and the elementary layer integrals used as golden values
//! elsewhere in the crate.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::quad;

/// Index of a dyadic layer. `k = -1` is the far-field layer; `k >= 0` layers
/// are supported on the ball of radius 2^-k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerIndex(i32);

impl LayerIndex {
    pub fn new(k: i32) -> Result<Self> {
        if k < -1 {
            return Err(Error::domain(format!("layer index {k} < -1")));
        }
        Ok(LayerIndex(k))
    }

    pub fn k(self) -> i32 {
        self.0
    }

    /// Outer support radius 2^-k (infinite for the far-field layer).
    pub fn outer_radius(self) -> f64 {
        if self.0 < 0 {
            f64::INFINITY
        } else {
            (-self.0 as f64).exp2()
        }
    }
}

/// Radial layer profile: for k >= 0 a plateau 2^{3(k+1)} - 2^{3k} inside
/// radius 2^{-k-1}, then r^-3 - 2^{3k} out to 2^-k, zero beyond. The k = -1
/// layer is 1 inside the unit ball and r^-3 outside.
pub fn phi_layer(k: LayerIndex, r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("phi_layer needs r > 0, got {r}")));
    }
    let k = k.k();
    if k == -1 {
        return Ok(if r < 1.0 { 1.0 } else { r.powi(-3) });
    }
    let outer = (-k as f64).exp2();
    let plateau_cut = 0.5 * outer;
    let base = (3.0 * k as f64).exp2(); // 2^{3k}
    Ok(if r <= plateau_cut {
        7.0 * base
    } else if r <= outer {
        r.powi(-3) - base
    } else {
        0.0
    })
}

/// Closed-form partial sum of layers k_lo..=k_hi (k_lo >= 0). Telescopes to
/// min(r^-3, 2^{3(k+1)}) - 2^{3 k_lo} truncated at the supports.
pub fn phi_partial_sum(k_lo: i32, k_hi: i32, r: f64) -> Result<f64> {
    if k_lo < 0 || k_hi < k_lo {
        return Err(Error::domain(format!(
            "invalid layer range {k_lo}..={k_hi} for partial sum"
        )));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("partial sum needs r > 0, got {r}")));
    }
    Ok(trunc_sum(k_hi, r, 3) - trunc_sum(k_lo - 1, r, 3))
}

/// Same partial sum for the one-dimensional kernel family with exponent 2.
pub fn phi_partial_sum_1d(k_lo: i32, k_hi: i32, r: f64) -> Result<f64> {
    if k_lo < 0 || k_hi < k_lo {
        return Err(Error::domain(format!(
            "invalid layer range {k_lo}..={k_hi} for partial sum"
        )));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("partial sum needs r > 0, got {r}")));
    }
    Ok(trunc_sum(k_hi, r, 2) - trunc_sum(k_lo - 1, r, 2))
}

// Sum of layers 0..=k for the exponent-p kernel; 0 for k < 0 or r > 1.
fn trunc_sum(k: i32, r: f64, p: i32) -> f64 {
    if k < 0 || r > 1.0 {
        return 0.0;
    }
    let cap = ((p * (k + 1)) as f64).exp2();
    r.powi(-p).min(cap) - 1.0
}

/// 1D layer profile with exponent 2 (the scalar two-well functional's kernel).
pub fn phi_layer_1d(k: LayerIndex, r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("phi_layer_1d needs r > 0, got {r}")));
    }
    let k = k.k();
    if k == -1 {
        return Ok(if r < 1.0 { 1.0 } else { r.powi(-2) });
    }
    let outer = (-k as f64).exp2();
    let base = (2.0 * k as f64).exp2(); // 2^{2k}
    Ok(if r <= 0.5 * outer {
        3.0 * base
    } else if r <= outer {
        r.powi(-2) - base
    } else {
        0.0
    })
}

/// ∫_0^∞ ρ² φ_k(ρ) dρ, assembled from the antiderivatives of the two pieces.
/// Equals ln 2 for every k >= 0.
pub fn layer_second_moment(k: LayerIndex) -> Result<f64> {
    let k = k.k();
    if k < 0 {
        return Err(Error::domain("second moment requires k >= 0".to_string()));
    }
    let base = (3.0 * k as f64).exp2();
    let inner = (-(k + 1) as f64).exp2();
    let outer = (-k as f64).exp2();
    // Plateau: 7·2^{3k} · r³/3 on [0, 2^{-k-1}].
    let plateau = 7.0 * base * inner.powi(3) / 3.0;
    // Ring: ∫ (1/ρ - 2^{3k} ρ²) dρ on [2^{-k-1}, 2^{-k}].
    let ring = (outer / inner).ln() - base * (outer.powi(3) - inner.powi(3)) / 3.0;
    Ok(plateau + ring)
}

/// Radial first moment ∫ r φ_k(r) dr; the polar-coordinates factor of the
/// layer L¹ norm. Computed by adaptive quadrature split at the plateau edge.
fn radial_first_moment(k: i32, tol: f64) -> f64 {
    let outer = (-k as f64).exp2();
    let li = LayerIndex(k);
    quad::integrate_with_knots(
        |r| if r <= 0.0 { 0.0 } else { r * phi_layer(li, r).unwrap() },
        0.0,
        outer,
        &[0.5 * outer],
        tol,
    )
}

type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum ProfileMode {
    Isotropic { scale: f64 },
    Table { thetas: Vec<f64>, mats: Vec<DMatrix<f64>> },
    Custom { id: String, f: MatrixFn },
    Rotated { inner: Arc<AngularProfile>, angle: f64 },
}

/// The matrix-valued angular factor Γ̂ on the unit circle. Every evaluation
/// must be symmetric positive definite with eigenvalues in [1/c, c].
#[derive(Clone)]
pub struct AngularProfile {
    n: usize,
    bound: f64,
    mode: ProfileMode,
}

impl AngularProfile {
    /// Scalar multiple of the identity, independent of angle.
    pub fn isotropic(n: usize, scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("profile dimension must be positive".to_string()));
        }
        if !(scale > 0.0) {
            return Err(Error::domain(format!("isotropic scale must be > 0, got {scale}")));
        }
        Ok(AngularProfile {
            n,
            bound: scale.max(1.0 / scale),
            mode: ProfileMode::Isotropic { scale },
        })
    }

    /// Piecewise-linear interpolation of sampled matrices. Angles must be
    /// strictly increasing in [0, 2π); the table wraps around.
    pub fn from_table(n: usize, samples: Vec<(f64, DMatrix<f64>)>, bound: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("profile dimension must be positive".to_string()));
        }
        if samples.len() < 2 {
            return Err(Error::config("profile table needs at least two angles".to_string()));
        }
        if !(bound >= 1.0) {
            return Err(Error::config(format!("eigenvalue bound must be >= 1, got {bound}")));
        }
        let mut thetas = Vec::with_capacity(samples.len());
        let mut mats = Vec::with_capacity(samples.len());
        for (theta, m) in samples {
            if !(0.0..2.0 * PI).contains(&theta) {
                return Err(Error::config(format!(
                    "table angle {theta} outside [0, 2π)"
                )));
            }
            if let Some(&last) = thetas.last() {
                if theta <= last {
                    return Err(Error::config("table angles must be strictly increasing".to_string()));
                }
            }
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::config(format!(
                    "table matrix is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            check_spd(&m, bound, theta)?;
            thetas.push(theta);
            mats.push(m);
        }
        Ok(AngularProfile {
            n,
            bound,
            mode: ProfileMode::Table { thetas, mats },
        })
    }

    /// Closed-form profile given by a callback; the id names it in reports.
    pub fn custom(
        n: usize,
        bound: f64,
        id: impl Into<String>,
        f: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("profile dimension must be positive".to_string()));
        }
        Ok(AngularProfile {
            n,
            bound,
            mode: ProfileMode::Custom { id: id.into(), f: Arc::new(f) },
        })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Declared eigenvalue bound c (spectrum within [1/c, c]).
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn mode_name(&self) -> &str {
        match &self.mode {
            ProfileMode::Isotropic { .. } => "isotropic",
            ProfileMode::Table { .. } => "table",
            ProfileMode::Custom { id, .. } => id,
            ProfileMode::Rotated { inner, .. } => inner.mode_name(),
        }
    }

    /// Same profile read in a frame rotated by `angle`: the returned profile
    /// evaluated at θ gives the original at θ + angle. Used to run grid
    /// computations in interface-aligned coordinates.
    pub fn rotated(&self, angle: f64) -> AngularProfile {
        AngularProfile {
            n: self.n,
            bound: self.bound,
            mode: ProfileMode::Rotated { inner: Arc::new(self.clone()), angle },
        }
    }

    /// Angles at which a table profile is merely continuous (interpolation
    /// knots); quadratures split panels there. Empty for smooth modes.
    pub fn knot_angles(&self) -> Vec<f64> {
        match &self.mode {
            ProfileMode::Table { thetas, .. } => thetas.clone(),
            ProfileMode::Rotated { inner, angle } => inner
                .knot_angles()
                .iter()
                .map(|t| (t - angle).rem_euclid(2.0 * PI))
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn evaluate(&self, theta: f64) -> DMatrix<f64> {
        match &self.mode {
            ProfileMode::Isotropic { scale } => DMatrix::identity(self.n, self.n) * *scale,
            ProfileMode::Custom { f, .. } => {
                let m = f(theta);
                symmetrize(m)
            }
            ProfileMode::Rotated { inner, angle } => inner.evaluate(theta + angle),
            ProfileMode::Table { thetas, mats } => {
                let two_pi = 2.0 * PI;
                let t = theta.rem_euclid(two_pi);
                let last = thetas.len() - 1;
                // Segment [theta_i, theta_{i+1}) containing t, with the final
                // segment wrapping from thetas[last] back to thetas[0] + 2π.
                let (i, j, span, local) = if t < thetas[0] || t >= thetas[last] {
                    let span = thetas[0] + two_pi - thetas[last];
                    let local = if t >= thetas[last] { t - thetas[last] } else { t + two_pi - thetas[last] };
                    (last, 0, span, local)
                } else {
                    let i = match thetas.binary_search_by(|a| a.total_cmp(&t)) {
                        Ok(i) => i,
                        Err(i) => i - 1,
                    };
                    (i, i + 1, thetas[i + 1] - thetas[i], t - thetas[i])
                };
                let w = local / span;
                symmetrize(&mats[i] * (1.0 - w) + &mats[j] * w)
            }
        }
    }

    /// Spot-check symmetry and eigenvalue bounds at `samples` angles.
    pub fn validate(&self, samples: usize) -> Result<()> {
        for i in 0..samples.max(1) {
            let theta = 2.0 * PI * i as f64 / samples.max(1) as f64;
            check_spd(&self.evaluate(theta), self.bound, theta)?;
        }
        Ok(())
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let mt = m.transpose();
    (m + mt) * 0.5
}

fn check_spd(m: &DMatrix<f64>, bound: f64, theta: f64) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-10 * (1.0 + m.norm()) {
        return Err(Error::config(format!(
            "profile matrix at θ={theta} is not symmetric (defect {asym:.3e})"
        )));
    }
    let eig = m.clone().symmetric_eigenvalues();
    let slack = 1e-9 * bound;
    for &l in eig.iter() {
        if l < 1.0 / bound - slack || l > bound + slack {
            return Err(Error::config(format!(
                "profile eigenvalue {l} at θ={theta} outside [1/{bound}, {bound}]"
            )));
        }
    }
    Ok(())
}

/// Full singular kernel Γ(z) = |z|^-3 Γ̂(z/|z|).
pub struct SingularKernel<'a> {
    pub profile: &'a AngularProfile,
}

impl SingularKernel<'_> {
    pub fn evaluate(&self, z: [f64; 2]) -> Result<DMatrix<f64>> {
        let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
        if r == 0.0 {
            return Err(Error::domain("singular kernel undefined at z = 0".to_string()));
        }
        Ok(self.profile.evaluate(z[1].atan2(z[0])) * r.powi(-3))
    }
}

/// Γ_k(z) = φ_k(|z|) Γ̂(z/|z|); the zero matrix outside the layer support.
pub fn layer_kernel(profile: &AngularProfile, k: LayerIndex, z: [f64; 2]) -> Result<DMatrix<f64>> {
    let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
    if r == 0.0 {
        return Err(Error::domain("layer kernel undefined at z = 0".to_string()));
    }
    let phi = phi_layer(k, r)?;
    if phi == 0.0 {
        return Ok(DMatrix::zeros(profile.dimension(), profile.dimension()));
    }
    Ok(profile.evaluate(z[1].atan2(z[0])) * phi)
}

/// Truncated kernel Γ_{k_lo..k_hi}(z) for the interaction tables.
pub fn kernel_partial_sum(
    profile: &AngularProfile,
    k_lo: i32,
    k_hi: i32,
    z: [f64; 2],
) -> Result<DMatrix<f64>> {
    let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
    if r == 0.0 {
        return Err(Error::domain("kernel undefined at z = 0".to_string()));
    }
    let phi = phi_partial_sum(k_lo, k_hi, r)?;
    if phi == 0.0 {
        return Ok(DMatrix::zeros(profile.dimension(), profile.dimension()));
    }
    Ok(profile.evaluate(z[1].atan2(z[0])) * phi)
}

/// ∫ |Γ_k| dz with the Frobenius norm; separates into an angular integral of
/// |Γ̂|_F times the radial first moment of φ_k. Scales as 2^k.
pub fn layer_l1_norm(
    profile: &AngularProfile,
    k: LayerIndex,
    angular_panels: usize,
    tol: f64,
) -> Result<f64> {
    if k.k() < 0 {
        return Err(Error::domain("L¹ norm defined for k >= 0 layers".to_string()));
    }
    if angular_panels == 0 {
        return Err(Error::config("layer_l1_norm: empty quadrature grid".to_string()));
    }
    if !(tol > 0.0) {
        return Err(Error::config(format!("quadrature tolerance must be > 0, got {tol}")));
    }
    let knots = profile.knot_angles();
    let two_pi = 2.0 * PI;
    let mut angular = 0.0;
    for p in 0..angular_panels {
        let a = two_pi * p as f64 / angular_panels as f64;
        let b = two_pi * (p + 1) as f64 / angular_panels as f64;
        angular += quad::integrate_with_knots(
            |theta| profile.evaluate(theta).norm(),
            a,
            b,
            &knots,
            tol / angular_panels as f64,
        );
    }
    Ok(angular * radial_first_moment(k.k(), tol))
}

#[derive(Deserialize)]
struct ProfileFileEntry {
    theta_degrees: f64,
    matrix: Vec<f64>,
}

#[derive(Deserialize)]
struct ProfileFile {
    dimension: usize,
    mode: String,
    scale: Option<f64>,
    bound: Option<f64>,
    #[serde(default)]
    entry: Vec<ProfileFileEntry>,
}

/// Parse a profile definition. Table entries give angles in degrees and
/// row-major matrix entries.
pub fn profile_from_toml(text: &str) -> Result<AngularProfile> {
    let pf: ProfileFile = toml::from_str(text).map_err(|e| Error::parse(format!("profile: {e}")))?;
    match pf.mode.as_str() {
        "isotropic" => AngularProfile::isotropic(pf.dimension, pf.scale.unwrap_or(1.0)),
        "table" => {
            let n = pf.dimension;
            let mut samples = Vec::with_capacity(pf.entry.len());
            for e in &pf.entry {
                if e.matrix.len() != n * n {
                    return Err(Error::parse(format!(
                        "profile entry at {} deg has {} values, expected {}",
                        e.theta_degrees,
                        e.matrix.len(),
                        n * n
                    )));
                }
                let m = DMatrix::from_row_slice(n, n, &e.matrix);
                samples.push((e.theta_degrees.to_radians(), m));
            }
            let bound = pf.bound.ok_or_else(|| {
                Error::parse("table profile requires an eigenvalue `bound`".to_string())
            })?;
            AngularProfile::from_table(n, samples, bound)
        }
        other => Err(Error::parse(format!("unknown profile mode `{other}`"))),
    }
}

pub fn profile_from_file(path: &std::path::Path) -> Result<AngularProfile> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read profile file {}: {e}", path.display()))
    })?;
    profile_from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn li(k: i32) -> LayerIndex {
        LayerIndex::new(k).unwrap()
    }

    #[test]
    fn phi_layer_hand_values() {
        let v = phi_layer(li(0), 0.75).unwrap();
        assert!((v - (0.75f64.powi(-3) - 1.0)).abs() < 1e-14);
        assert_eq!(phi_layer(li(3), 0.2).unwrap(), 0.0);
        assert!(phi_layer(li(0), 0.0).is_err());
        assert!(phi_layer(li(0), -1.0).is_err());
    }

    #[test]
    fn partition_of_unity() {
        // Layers -1..=K sum back to r^-3 on a log grid of radii.
        for i in 0..1000 {
            let r = (-12.0 + 12.0 * i as f64 / 1000.0).exp2().min(0.999);
            let mut s = phi_layer(li(-1), r).unwrap();
            for k in 0..=40 {
                s += phi_layer(li(k), r).unwrap();
            }
            let exact = r.powi(-3);
            assert!(
                (s - exact).abs() <= 1e-12 * exact,
                "r={r}: sum {s} vs {exact}"
            );
        }
    }

    #[test]
    fn partial_sum_matches_layer_sum() {
        for &r in &[0.01, 0.03, 0.1, 0.26, 0.5, 0.77, 1.0, 1.5] {
            for (lo, hi) in [(0, 0), (0, 5), (2, 7), (3, 3)] {
                let direct: f64 = (lo..=hi).map(|k| phi_layer(li(k), r).unwrap()).sum();
                let closed = phi_partial_sum(lo, hi, r).unwrap();
                assert!(
                    (direct - closed).abs() <= 1e-11 * (1.0 + direct),
                    "r={r} range {lo}..={hi}: {direct} vs {closed}"
                );
                let direct1: f64 = (lo..=hi).map(|k| phi_layer_1d(li(k), r).unwrap()).sum();
                let closed1 = phi_partial_sum_1d(lo, hi, r).unwrap();
                assert!((direct1 - closed1).abs() <= 1e-11 * (1.0 + direct1));
            }
        }
    }

    #[test]
    fn second_moment_is_ln2() {
        for k in 0..=9 {
            let v = layer_second_moment(li(k)).unwrap();
            assert!((v - LN_2).abs() < 1e-14, "k={k}: {v}");
        }
        // Independent quadrature oracle at k = 3.
        let oracle = quad::integrate_with_knots(
            |r| if r <= 0.0 { 0.0 } else { r * r * phi_layer(li(3), r).unwrap() },
            0.0,
            0.125,
            &[0.0625],
            1e-13,
        );
        assert!((oracle - LN_2).abs() < 1e-10, "oracle {oracle}");
    }

    #[test]
    fn l1_norm_scaling_and_oracle() {
        let p = AngularProfile::isotropic(1, 1.0).unwrap();
        let mut prev = layer_l1_norm(&p, li(0), 4, 1e-10).unwrap();
        // Closed form: 2π · (3/2)·2^k for the scalar identity profile.
        assert!((prev - 2.0 * PI * 1.5).abs() < 1e-8, "{prev}");
        for k in 1..=8 {
            let cur = layer_l1_norm(&p, li(k), 4, 1e-10).unwrap();
            assert!(((cur / prev) - 2.0).abs() < 1e-6, "k={k} ratio {}", cur / prev);
            prev = cur;
        }
        assert!(layer_l1_norm(&p, li(0), 0, 1e-10).is_err());

        // Brute-force 2D Riemann sum on a 2048² grid over the support square.
        let n = 2048usize;
        let h = 2.0 / n as f64;
        let mut s = 0.0;
        for iy in 0..n {
            let y = -1.0 + (iy as f64 + 0.5) * h;
            for ix in 0..n {
                let x = -1.0 + (ix as f64 + 0.5) * h;
                let r = (x * x + y * y).sqrt();
                if r > 0.0 && r <= 1.0 {
                    s += phi_layer(li(0), r).unwrap();
                }
            }
        }
        s *= h * h;
        let quad_val = layer_l1_norm(&p, li(0), 4, 1e-10).unwrap();
        assert!(
            (s - quad_val).abs() <= 1e-4 * quad_val,
            "riemann {s} vs quadrature {quad_val}"
        );
    }

    fn sample_table() -> AngularProfile {
        // N=2 anisotropic table, symmetric SPD everywhere.
        let mut samples = Vec::new();
        for i in 0..16 {
            let t = 2.0 * PI * i as f64 / 16.0;
            let m = DMatrix::from_row_slice(
                2,
                2,
                &[
                    1.0 + 0.3 * (2.0 * t).cos(),
                    0.2 * (2.0 * t).sin(),
                    0.2 * (2.0 * t).sin(),
                    1.0 - 0.3 * (2.0 * t).cos(),
                ],
            );
            samples.push((t, m));
        }
        AngularProfile::from_table(2, samples, 4.0).unwrap()
    }

    #[test]
    fn table_interpolation_and_wraparound() {
        let p = sample_table();
        p.validate(257).unwrap();
        // At a knot the table value is reproduced.
        let at_knot = p.evaluate(2.0 * PI * 3.0 / 16.0);
        assert!((at_knot[(0, 0)] - (1.0 + 0.3 * (2.0 * PI * 6.0 / 16.0).cos())).abs() < 1e-12);
        // Wraparound segment: θ just below 2π interpolates toward θ=0.
        let eps = 1e-9;
        let near_wrap = p.evaluate(2.0 * PI - eps);
        let at_zero = p.evaluate(0.0);
        assert!((near_wrap[(0, 0)] - at_zero[(0, 0)]).abs() < 1e-6);
        // Layer kernel on the diagonal picks up the θ=π/4 table value.
        let z = [0.3, 0.3];
        let lk = layer_kernel(&p, li(0), z).unwrap();
        let r = (2.0f64 * 0.09).sqrt();
        let expect = p.evaluate(PI / 4.0) * phi_layer(li(0), r).unwrap();
        assert!((lk - expect).norm() < 1e-12);
    }

    #[test]
    fn layer_kernel_support_and_isotropic_value() {
        let p = AngularProfile::isotropic(1, 1.0).unwrap();
        let v = layer_kernel(&p, li(0), [0.75, 0.0]).unwrap();
        assert!((v[(0, 0)] - 1.3703703703703702).abs() < 1e-12);
        let z = layer_kernel(&sample_table(), li(2), [0.3, 0.3]).unwrap();
        assert_eq!(z.norm(), 0.0);
        assert!(layer_kernel(&p, li(0), [0.0, 0.0]).is_err());
    }

    #[test]
    fn kernel_outputs_spd_random_samples() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let p = sample_table();
        for _ in 0..10_000 {
            let k = li(rng.random_range(0..6));
            let r = rng.random_range(0.001f64..1.0) * k.outer_radius();
            let t = rng.random_range(0.0..2.0 * PI);
            let z = [r * t.cos(), r * t.sin()];
            let m = layer_kernel(&p, k, z).unwrap();
            assert!((&m - m.transpose()).norm() < 1e-12);
            for l in m.symmetric_eigenvalues().iter() {
                assert!(*l >= -1e-12, "negative eigenvalue {l}");
            }
        }
    }

    #[test]
    fn profile_file_roundtrip() {
        let text = r#"
dimension = 1
mode = "isotropic"
scale = 2.0
"#;
        let p = profile_from_toml(text).unwrap();
        assert_eq!(p.dimension(), 1);
        assert!((p.evaluate(1.0)[(0, 0)] - 2.0).abs() < 1e-15);

        let table = r#"
dimension = 1
mode = "table"
bound = 3.0
[[entry]]
theta_degrees = 0.0
matrix = [1.0]
[[entry]]
theta_degrees = 90.0
matrix = [2.0]
[[entry]]
theta_degrees = 180.0
matrix = [1.0]
[[entry]]
theta_degrees = 270.0
matrix = [2.0]
"#;
        let p = profile_from_toml(table).unwrap();
        assert!((p.evaluate(PI / 4.0)[(0, 0)] - 1.5).abs() < 1e-12);
        assert!(profile_from_toml("mode = \"table\"").is_err());
    }
}
