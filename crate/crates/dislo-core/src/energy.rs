//! Discretization of the nonlocal quadratic form p_{Γ',Ω}(u) over gridded
//! fields, via precomputed per-offset interaction matrices, plus the full
//! rescaled energy with its integer-lattice penalty term.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{RegionMask, SlipField};
use crate::kernels::{kernel_partial_sum, AngularProfile};

#[derive(Debug, Clone)]
pub struct OffsetEntry {
    pub dx: i64,
    pub dy: i64,
    pub w: DMatrix<f64>,
}

/// Precomputed cell-pair interaction matrices W(Δ) = ∫∫ Γ_{k_lo..k_hi}(x−y)
/// over a representative cell pair at grid offset Δ. Entries exist for every
/// nonzero offset within the truncation support; the Δ = 0 self-offset is
/// identically zero for piecewise-constant fields and is omitted.
pub struct InteractionTable {
    n: usize,
    k_lo: i32,
    k_hi: i32,
    spacing: f64,
    near_field_level: u32,
    entries: Vec<OffsetEntry>,
    radius: i64,
}

impl InteractionTable {
    pub fn entries(&self) -> &[OffsetEntry] {
        &self.entries
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn layer_range(&self) -> (i32, i32) {
        (self.k_lo, self.k_hi)
    }
    pub fn dimension(&self) -> usize {
        self.n
    }
    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn entry(&self, dx: i64, dy: i64) -> Option<&OffsetEntry> {
        // Entries are generated in row-major (dy, dx) order; binary search.
        self.entries
            .binary_search_by(|e| (e.dy, e.dx).cmp(&(dy, dx)))
            .ok()
            .map(|i| &self.entries[i])
    }
}

/// One representative cell-pair integral at offset Δ (in cells). Far pairs
/// use the midpoint rule; near pairs a tensorized subcell rule with 2^level
/// subdivisions per axis. The kernel is even, so W(−Δ) = W(Δ).
fn pair_weight(
    profile: &AngularProfile,
    k_lo: i32,
    k_hi: i32,
    spacing: f64,
    level: u32,
    dx: i64,
    dy: i64,
) -> Result<DMatrix<f64>> {
    let z = [dx as f64 * spacing, dy as f64 * spacing];
    let center_dist = (z[0] * z[0] + z[1] * z[1]).sqrt();
    let diag = spacing * std::f64::consts::SQRT_2;
    if center_dist > 3.0 * diag {
        let area2 = (spacing * spacing) * (spacing * spacing);
        return Ok(kernel_partial_sum(profile, k_lo, k_hi, z)? * area2);
    }
    let m = 1usize << level;
    let sub = spacing / m as f64;
    let subarea2 = (sub * sub) * (sub * sub);
    let n = profile.dimension();
    let mut acc = DMatrix::zeros(n, n);
    for ay in 0..m {
        for ax in 0..m {
            for by in 0..m {
                for bx in 0..m {
                    let zz = [
                        z[0] + (ax as f64 - bx as f64) * sub,
                        z[1] + (ay as f64 - by as f64) * sub,
                    ];
                    acc += kernel_partial_sum(profile, k_lo, k_hi, zz)?;
                }
            }
        }
    }
    Ok(acc * subarea2)
}

/// Build the offset table for the truncated kernel with layers k_lo..=k_hi.
pub fn build_interaction_table(
    profile: &AngularProfile,
    k_lo: i32,
    k_hi: i32,
    spacing: f64,
    near_field_level: u32,
) -> Result<InteractionTable> {
    if k_lo < 0 || k_hi < k_lo {
        return Err(Error::config(format!("invalid layer range {k_lo}..={k_hi}")));
    }
    if near_field_level < 1 {
        return Err(Error::config("near_field_level must be >= 1".to_string()));
    }
    let support = (-k_lo as f64).exp2();
    if !(spacing <= support) {
        return Err(Error::config(format!(
            "spacing {spacing} violates spacing <= 2^-k ({support}) for k = {k_lo}"
        )));
    }
    // Corners of adjacent cells can interact even when centers are outside
    // the support, so pad the candidate radius by the cell diagonal.
    let radius = ((support / spacing) + std::f64::consts::SQRT_2).ceil() as i64;
    let mut entries = Vec::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx == 0 && dy == 0 {
                continue;
            }
            // Exploit evenness: compute one half-plane, mirror afterwards.
            if (dy, dx) < (0, 0) {
                continue;
            }
            let w = pair_weight(profile, k_lo, k_hi, spacing, near_field_level, dx, dy)?;
            if w.norm() > 0.0 {
                entries.push(OffsetEntry { dx, dy, w });
            }
        }
    }
    let mirrored: Vec<OffsetEntry> = entries
        .iter()
        .map(|e| OffsetEntry { dx: -e.dx, dy: -e.dy, w: e.w.clone() })
        .collect();
    entries.extend(mirrored);
    entries.sort_by(|a, b| (a.dy, a.dx).cmp(&(b.dy, b.dx)));
    Ok(InteractionTable {
        n: profile.dimension(),
        k_lo,
        k_hi,
        spacing,
        near_field_level,
        entries,
        radius,
    })
}

impl InteractionTable {
    pub fn near_field_level(&self) -> u32 {
        self.near_field_level
    }
}

/// Deterministic pairwise summation (bit-stable regardless of thread count
/// since subtotals are collected in offset order first).
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

fn check_compat(table: &InteractionTable, field: &SlipField, mask: Option<&RegionMask>) -> Result<()> {
    if field.components() != table.n {
        return Err(Error::config(format!(
            "field has {} components, table expects {}",
            field.components(),
            table.n
        )));
    }
    if (field.spacing() - table.spacing).abs() > 1e-12 * table.spacing {
        return Err(Error::config(format!(
            "field spacing {} does not match table spacing {}",
            field.spacing(),
            table.spacing
        )));
    }
    if let Some(m) = mask {
        if m.nx() != field.nx() || m.ny() != field.ny() {
            return Err(Error::config(format!(
                "mask is {}x{}, field is {}x{}",
                m.nx(),
                m.ny(),
                field.nx(),
                field.ny()
            )));
        }
    }
    Ok(())
}

/// Quadratic form p_{Γ',Ω}(u) = Σ over ordered cell pairs (a, b), both in the
/// mask, of (u_a − u_b)ᵀ W(Δ) (u_a − u_b). Offset-sweep implementation (the
/// accelerated autocorrelation path); `p_form_direct` is the O(n²) oracle.
pub fn p_form(table: &InteractionTable, field: &SlipField, mask: Option<&RegionMask>) -> Result<f64> {
    check_compat(table, field, mask)?;
    if let Some(m) = mask {
        if m.count() == 0 {
            log::warn!("p_form over empty mask returns 0");
            return Ok(0.0);
        }
    }
    let nx = field.nx() as i64;
    let ny = field.ny() as i64;
    let n = table.n;
    let vals = field.values();
    let cells = mask.map(|m| m.cells());
    let mut subtotals = Vec::with_capacity(table.entries.len());
    for e in &table.entries {
        let x0 = 0.max(-e.dx);
        let x1 = nx.min(nx - e.dx);
        let y0 = 0.max(-e.dy);
        let y1 = ny.min(ny - e.dy);
        if x0 >= x1 || y0 >= y1 {
            subtotals.push(0.0);
            continue;
        }
        let mut acc = 0.0;
        if n == 1 {
            let w = e.w[(0, 0)];
            for iy in y0..y1 {
                // x0 >= -dx, so both bases are in range for ix in [x0, x1).
                let arow = (iy * nx + x0) as usize;
                let brow = ((iy + e.dy) * nx + e.dx + x0) as usize;
                let len = (x1 - x0) as usize;
                if let Some(cells) = cells {
                    for ix in 0..len {
                        if cells[arow + ix] && cells[brow + ix] {
                            let d = vals[arow + ix] - vals[brow + ix];
                            acc += d * d;
                        }
                    }
                } else {
                    for ix in 0..len {
                        let d = vals[arow + ix] - vals[brow + ix];
                        acc += d * d;
                    }
                }
            }
            acc *= w;
        } else {
            let mut d = vec![0.0; n];
            for iy in y0..y1 {
                let arow = (iy * nx + x0) as usize;
                let brow = ((iy + e.dy) * nx + e.dx + x0) as usize;
                let len = (x1 - x0) as usize;
                for ix in 0..len {
                    if let Some(cells) = cells {
                        if !cells[arow + ix] || !cells[brow + ix] {
                            continue;
                        }
                    }
                    let a = &vals[(arow + ix) * n..(arow + ix) * n + n];
                    let b = &vals[(brow + ix) * n..(brow + ix) * n + n];
                    for c in 0..n {
                        d[c] = a[c] - b[c];
                    }
                    let mut q = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            q += d[i] * e.w[(i, j)] * d[j];
                        }
                    }
                    acc += q;
                }
            }
        }
        subtotals.push(acc);
    }
    Ok(pairwise_sum(&subtotals))
}

/// Reference O(cells²) evaluation looping over explicit cell pairs; used as
/// the correctness oracle for `p_form` on small grids.
pub fn p_form_direct(
    table: &InteractionTable,
    field: &SlipField,
    mask: Option<&RegionMask>,
) -> Result<f64> {
    check_compat(table, field, mask)?;
    let nx = field.nx() as i64;
    let ny = field.ny() as i64;
    let n = table.n;
    let mut total = 0.0;
    for ay in 0..ny {
        for ax in 0..nx {
            if let Some(m) = mask {
                if !m.get(ax as usize, ay as usize) {
                    continue;
                }
            }
            let a = field.get(ax as usize, ay as usize);
            for by in 0..ny {
                for bx in 0..nx {
                    if (ax, ay) == (bx, by) {
                        continue;
                    }
                    if let Some(m) = mask {
                        if !m.get(bx as usize, by as usize) {
                            continue;
                        }
                    }
                    let Some(e) = table.entry(bx - ax, by - ay) else {
                        continue;
                    };
                    let b = field.get(bx as usize, by as usize);
                    let mut q = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            q += (a[i] - b[i]) * e.w[(i, j)] * (a[j] - b[j]);
                        }
                    }
                    total += q;
                }
            }
        }
    }
    Ok(total)
}

/// Componentwise rounding with ties away from zero.
pub fn nearest_lattice(v: &[f64]) -> Vec<i64> {
    v.iter().map(|&x| x.round() as i64).collect()
}

/// Euclidean distance from v to the nearest integer vector.
pub fn dist_to_lattice(v: &[f64]) -> f64 {
    v.iter()
        .map(|&x| {
            let d = x - x.round();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescaled energy decomposition: per-layer quadratic forms for h = 0..k_max,
/// the (1/ε) lattice penalty, and the 1/ln(1/ε) rescale factor.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyBreakdown {
    pub layer_values: Vec<f64>,
    pub penalty: f64,
    pub rescale: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn assemble(layer_values: Vec<f64>, penalty: f64, rescale: f64) -> Self {
        let total = (pairwise_sum(&layer_values) + penalty) * rescale;
        EnergyBreakdown { layer_values, penalty, rescale, total }
    }
}

/// Full rescaled energy over the masked region: per-layer p-forms plus the
/// lattice penalty. Layers finer than the grid carry no variation for
/// piecewise-constant fields and are recorded as exact zeros.
pub fn energy_total(
    profile: &AngularProfile,
    field: &SlipField,
    mask: Option<&RegionMask>,
    eps: f64,
    k_max: i32,
    near_field_level: u32,
) -> Result<EnergyBreakdown> {
    if !(eps > 0.0 && eps < (-1.0f64).exp()) {
        return Err(Error::domain(format!("eps must lie in (0, 1/e), got {eps}")));
    }
    if k_max < 0 {
        return Err(Error::domain(format!("k_max must be >= 0, got {k_max}")));
    }
    let spacing = field.spacing();
    if (-k_max as f64).exp2() > 4.0 * spacing {
        return Err(Error::config(format!(
            "k_max = {k_max} too shallow: 2^-k_max must be <= 4·spacing = {}",
            4.0 * spacing
        )));
    }
    let mut layer_values = Vec::with_capacity((k_max + 1) as usize);
    for k in 0..=k_max {
        if (-k as f64).exp2() < spacing {
            layer_values.push(0.0);
            continue;
        }
        let table = build_interaction_table(profile, k, k, spacing, near_field_level)?;
        layer_values.push(p_form(&table, field, mask)?);
    }
    let mut dist2 = Vec::with_capacity(field.nx() * field.ny());
    for iy in 0..field.ny() {
        for ix in 0..field.nx() {
            if mask.map_or(true, |m| m.get(ix, iy)) {
                let d = dist_to_lattice(field.get(ix, iy));
                dist2.push(d * d);
            }
        }
    }
    let penalty = pairwise_sum(&dist2) * field.cell_area() / eps;
    let rescale = 1.0 / (1.0 / eps).ln();
    Ok(EnergyBreakdown::assemble(layer_values, penalty, rescale))
}
