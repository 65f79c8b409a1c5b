//! Experiment orchestration: run configuration, drivers for the Γ-limit
//! scans and relaxation sweeps, and deterministic artifact emission
//! (results.json, table.csv, log.txt).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{dist_to_lattice, energy_total, EnergyBreakdown};
use crate::field::{RegionMask, SlipField};
use crate::kernels::{
    layer_l1_norm, layer_second_moment, phi_layer, phi_partial_sum, profile_from_file,
    AngularProfile, LayerIndex,
};
use crate::line_tension::{gamma0, kco_line_tension};
use crate::multiscale::{mollify_cascade, GoodnessParams, MollifierSpec};
use crate::relaxation::{
    relax_parallel, relax_zigzag, KcoTension, ProfileTension, TensionProvider,
};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Experiments and configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    KernelCheck,
    Energy,
    LineTension,
    Relax,
    #[value(name = "gamma-limit-2d")]
    GammaLimit2d,
    #[value(name = "gamma-limit-1d")]
    GammaLimit1d,
    ScanScales,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::KernelCheck => "kernel-check",
            Experiment::Energy => "energy",
            Experiment::LineTension => "line-tension",
            Experiment::Relax => "relax",
            Experiment::GammaLimit2d => "gamma-limit-2d",
            Experiment::GammaLimit1d => "gamma-limit-1d",
            Experiment::ScanScales => "scan-scales",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    /// Path to a profile TOML file; omitted means built-in isotropic.
    pub path: Option<PathBuf>,
    pub dimension: Option<usize>,
    pub scale: Option<f64>,
}

impl ProfileConfig {
    pub fn resolve(&self) -> Result<AngularProfile> {
        match &self.path {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::config(format!(
                        "profile file not found: {}",
                        p.display()
                    )));
                }
                profile_from_file(p)
            }
            None => AngularProfile::isotropic(
                self.dimension.unwrap_or(1),
                self.scale.unwrap_or(1.0),
            ),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelCheckConfig {
    pub radii: usize,
    pub ratio_k_max: i32,
    pub partition_tol: f64,
    pub ratio_tol: f64,
}

impl Default for KernelCheckConfig {
    fn default() -> Self {
        KernelCheckConfig {
            radii: 1000,
            ratio_k_max: 6,
            partition_tol: 1e-12,
            ratio_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub field_csv: Option<PathBuf>,
    pub field_binary: Option<PathBuf>,
    /// Spacing and origin for CSV input (the binary format is
    /// self-describing).
    pub spacing: f64,
    pub origin: [f64; 2],
    pub components: usize,
    pub eps: f64,
    pub k_max: Option<i32>,
    pub near_field_level: u32,
    /// Random block field used when no input file is given.
    pub random_size: usize,
    pub random_blocks: usize,
    pub random_max: i64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            field_csv: None,
            field_binary: None,
            spacing: 1.0 / 64.0,
            origin: [0.0, 0.0],
            components: 1,
            eps: 0.05,
            k_max: None,
            near_field_level: 2,
            random_size: 64,
            random_blocks: 8,
            random_max: 3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineTensionConfig {
    pub theta_degrees: Vec<f64>,
    pub s: Vec<f64>,
    /// Switch to the closed-form cubic kernel with this Poisson ratio.
    pub nu_tilde: Option<f64>,
    pub tol: f64,
}

impl Default for LineTensionConfig {
    fn default() -> Self {
        LineTensionConfig {
            theta_degrees: (0..12).map(|i| 15.0 * i as f64).collect(),
            s: vec![1.0],
            nu_tilde: None,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxConfig {
    pub nu_tilde: Option<f64>,
    pub s: Vec<i64>,
    pub theta_start_degrees: f64,
    pub theta_stop_degrees: f64,
    pub theta_steps: usize,
    pub zigzag_grid: usize,
    pub radius: i64,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig {
            nu_tilde: Some(0.3),
            s: vec![1, 1],
            theta_start_degrees: 0.0,
            theta_stop_degrees: 90.0,
            theta_steps: 7,
            zigzag_grid: 32,
            radius: 3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gamma2dConfig {
    pub eps: Vec<f64>,
    pub resolution: usize,
    pub nu_degrees: f64,
    pub s: Vec<f64>,
    pub rel_tol: f64,
    pub k_max: Option<i32>,
    pub near_field_level: u32,
}

impl Default for Gamma2dConfig {
    fn default() -> Self {
        Gamma2dConfig {
            // Geometric ladder with ratio 1/√2 inside the window the default
            // grid resolves; the coarsest scales carry a strong boundary
            // deficit and are left out.
            eps: (5..=10).map(|i| (-0.5 * i as f64).exp2()).collect(),
            resolution: 256,
            nu_degrees: 90.0,
            s: vec![1.0],
            rel_tol: 0.10,
            k_max: None,
            near_field_level: 2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gamma1dConfig {
    pub eps: Vec<f64>,
    pub resolution: usize,
    pub jumps: usize,
    pub rel_tol: f64,
}

impl Default for Gamma1dConfig {
    fn default() -> Self {
        Gamma1dConfig {
            eps: vec![0.04, 0.02, 0.01, 0.005],
            resolution: 6400,
            jumps: 1,
            rel_tol: 0.10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanScalesConfig {
    pub field_csv: Option<PathBuf>,
    pub spacing: f64,
    pub origin: [f64; 2],
    pub components: usize,
    pub h_start: i32,
    pub step: i32,
    pub levels: usize,
    pub budget: f64,
    pub k: f64,
    pub zeta: f64,
    pub random_size: usize,
    pub random_blocks: usize,
    pub random_max: i64,
}

impl Default for ScanScalesConfig {
    fn default() -> Self {
        ScanScalesConfig {
            field_csv: None,
            spacing: 1.0 / 64.0,
            origin: [0.0, 0.0],
            components: 1,
            h_start: 5,
            step: 3,
            levels: 2,
            budget: 0.5,
            k: 1.0,
            zeta: 1.0,
            random_size: 64,
            random_blocks: 8,
            random_max: 3,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional cross-check against the experiment named on the command line.
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub kernel_check: KernelCheckConfig,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub line_tension: LineTensionConfig,
    #[serde(default)]
    pub relax: RelaxConfig,
    #[serde(default)]
    pub gamma_limit_2d: Gamma2dConfig,
    #[serde(default)]
    pub gamma_limit_1d: Gamma1dConfig,
    #[serde(default)]
    pub scan_scales: ScanScalesConfig,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config(format!("cannot read config {}: {e}", path.display()))
    })?;
    toml::from_str(&text)
        .map_err(|e| Error::parse(format!("config {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Convergence records and intercept fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRecord {
    pub eps: f64,
    pub energy: f64,
    /// ln(1/ε).
    pub rescale: f64,
    pub skipped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    /// Γ-limit estimate: value at 1/ln(1/ε) → 0.
    pub intercept: f64,
    pub slope: f64,
    pub residual: f64,
    /// Energies monotone along decreasing ε, up to the fit residual.
    pub monotone: bool,
}

/// Least squares of energy ≈ intercept + slope/ln(1/ε) over the records
/// that were not skipped.
pub fn fit_intercept(records: &[ConvergenceRecord]) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| !r.skipped)
        .map(|r| (1.0 / r.rescale, r.energy))
        .collect();
    if pts.len() < 2 {
        return Err(Error::config(format!(
            "need at least 2 resolvable eps values for the fit, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-30 {
        return Err(Error::config("degenerate eps list for the fit".to_string()));
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    let mut rss = 0.0;
    for &(x, y) in &pts {
        let e = y - (intercept + slope * x);
        rss += e * e;
    }
    let residual = (rss / n).sqrt();
    let mut sorted = pts.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let slack = 2.0 * residual + 1e-9;
    let increasing = sorted.windows(2).all(|w| w[1].1 >= w[0].1 - slack);
    let decreasing = sorted.windows(2).all(|w| w[1].1 <= w[0].1 + slack);
    Ok(FitResult { intercept, slope, residual, monotone: increasing || decreasing })
}

fn check_eps_list(eps: &[f64]) -> Result<()> {
    let cap = (-1.0f64).exp();
    if eps.is_empty() {
        return Err(Error::config("eps list is empty".to_string()));
    }
    for &e in eps {
        if !(e > 0.0 && e < cap) {
            return Err(Error::config(format!("eps {e} outside (0, 1/e)")));
        }
    }
    for w in eps.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::config("eps list must be strictly decreasing".to_string()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mollified interface profiles
// ---------------------------------------------------------------------------

/// Tabulated one-dimensional marginal CDF of the 2D mollifier: the profile
/// of a sharp interface convolved with φ at unit scale.
pub struct InterfaceProfile {
    support: f64,
    table: Vec<f64>,
}

impl InterfaceProfile {
    pub fn new(spec: &MollifierSpec) -> Self {
        let support = spec.support_radius();
        let samples = 800usize;
        let dt = 2.0 * support / samples as f64;
        let marginal = |t: f64| -> f64 {
            let w = (support * support - t * t).max(0.0).sqrt();
            if w == 0.0 {
                return 0.0;
            }
            crate::quad::integrate(|y| spec.value([t, y]), -w, w, 1e-12)
        };
        let mut table = Vec::with_capacity(samples + 1);
        table.push(0.0);
        let mut acc = 0.0;
        let mut prev = marginal(-support);
        for i in 1..=samples {
            let t = -support + i as f64 * dt;
            let cur = marginal(t);
            acc += 0.5 * (prev + cur) * dt;
            table.push(acc);
            prev = cur;
        }
        // The trapezoid sum carries a small discretization error; rescale so
        // the profile ends exactly at 1.
        let total = *table.last().unwrap();
        for v in table.iter_mut() {
            *v /= total;
        }
        InterfaceProfile { support, table }
    }

    /// Value of the mollified step at signed distance t (unit scale).
    pub fn value(&self, t: f64) -> f64 {
        if t <= -self.support {
            return 0.0;
        }
        if t >= self.support {
            return 1.0;
        }
        let n = self.table.len() - 1;
        let x = (t + self.support) / (2.0 * self.support) * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let f = x - i as f64;
        self.table[i] * (1.0 - f) + self.table[i + 1] * f
    }
}

// ---------------------------------------------------------------------------
// Gamma-limit drivers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GammaOutcome {
    pub records: Vec<ConvergenceRecord>,
    pub breakdowns: Vec<Option<EnergyBreakdown>>,
    pub fit: FitResult,
    pub target: f64,
    pub rel_tol: f64,
    pub pass: bool,
}

/// Recovery-sequence check in 2D: sharp interface s·χ_{x·ν >= 0} mollified
/// at scale ε, energy over the unit disc, intercept of the 1/ln(1/ε) fit
/// compared against 2·γ₀(ν, s).
pub fn gamma_limit_2d(
    profile: &AngularProfile,
    cfg: &Gamma2dConfig,
    log: &mut Vec<String>,
) -> Result<GammaOutcome> {
    check_eps_list(&cfg.eps)?;
    let n = profile.dimension();
    if cfg.s.len() != n {
        return Err(Error::config(format!(
            "jump vector has {} components, profile expects {n}",
            cfg.s.len()
        )));
    }
    if cfg.resolution < 16 {
        return Err(Error::config("resolution must be at least 16".to_string()));
    }
    let theta = cfg.nu_degrees.to_radians();
    let nu = [theta.cos(), theta.sin()];
    let gamma = gamma0(profile, nu, 1e-9)?;
    let target = 2.0 * gamma.value(&cfg.s);
    let res = cfg.resolution;
    let sp = 2.0 / res as f64;
    let k_max = cfg
        .k_max
        .unwrap_or_else(|| (1.0 / sp).log2().ceil() as i32);
    let shape = InterfaceProfile::new(&MollifierSpec::standard());
    let mask = RegionMask::from_fn(res, res, |ix, iy| {
        let cx = -1.0 + (ix as f64 + 0.5) * sp;
        let cy = -1.0 + (iy as f64 + 0.5) * sp;
        cx * cx + cy * cy <= 1.0
    });
    let mut records = Vec::new();
    let mut breakdowns = Vec::new();
    for &eps in &cfg.eps {
        // Mollification width: the kernel diameter at scale ε.
        if 2.0 * eps < 8.0 * sp {
            log.push(format!(
                "skipping eps = {eps}: mollification width {} under 8 cells",
                2.0 * eps
            ));
            records.push(ConvergenceRecord {
                eps,
                energy: f64::NAN,
                rescale: (1.0 / eps).ln(),
                skipped: true,
            });
            breakdowns.push(None);
            continue;
        }
        let u = SlipField::from_fn(res, res, n, sp, [-1.0, -1.0], |[x, y]| {
            let g = shape.value((x * nu[0] + y * nu[1]) / eps);
            cfg.s.iter().map(|&si| si * g).collect()
        })?;
        let b = energy_total(profile, &u, Some(&mask), eps, k_max, cfg.near_field_level)?;
        log.push(format!("eps = {eps}: energy {}", b.total));
        records.push(ConvergenceRecord {
            eps,
            energy: b.total,
            rescale: (1.0 / eps).ln(),
            skipped: false,
        });
        breakdowns.push(Some(b));
    }
    let fit = fit_intercept(&records)?;
    let pass = if target.abs() < 1e-12 {
        fit.intercept.abs() < 1e-9
    } else {
        (fit.intercept - target).abs() <= cfg.rel_tol * target.abs()
    };
    log.push(format!(
        "intercept {} vs target {target} (rel_tol {}): {}",
        fit.intercept,
        cfg.rel_tol,
        if pass { "PASS" } else { "FAIL" }
    ));
    Ok(GammaOutcome { records, breakdowns, fit, target, rel_tol: cfg.rel_tol, pass })
}

/// Scalar two-well functional on (−1, 1) with the exponent-2 truncated
/// kernel: staircase profiles with the given number of jumps, smoothed at
/// scale ε; the Γ-limit is 2 per jump.
pub fn gamma_limit_1d(cfg: &Gamma1dConfig, log: &mut Vec<String>) -> Result<GammaOutcome> {
    check_eps_list(&cfg.eps)?;
    if cfg.resolution < 64 {
        return Err(Error::config("resolution must be at least 64".to_string()));
    }
    let jumps: Vec<f64> = (0..cfg.jumps)
        .map(|i| -1.0 + 2.0 * (i + 1) as f64 / (cfg.jumps + 1) as f64)
        .collect();
    let n = cfg.resolution;
    let sp = 2.0 / n as f64;
    let smooth = |t: f64| -> f64 {
        let t = (t + 0.5).clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    };
    let mut records = Vec::new();
    let mut breakdowns = Vec::new();
    for &eps in &cfg.eps {
        if eps < 8.0 * sp {
            log.push(format!("skipping eps = {eps}: ramp width under 8 cells"));
            records.push(ConvergenceRecord {
                eps,
                energy: f64::NAN,
                rescale: (1.0 / eps).ln(),
                skipped: true,
            });
            breakdowns.push(None);
            continue;
        }
        let u: Vec<f64> = (0..n)
            .map(|i| {
                let x = -1.0 + (i as f64 + 0.5) * sp;
                let mut v = 0.0;
                for (j, &xj) in jumps.iter().enumerate() {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    v += sign * smooth((x - xj) / eps);
                }
                v
            })
            .collect();
        let k_cap = (1.0 / eps).log2().floor() as i32;
        // Per-layer offset sweeps: layer h lives on |t| <= 2^-h.
        let mut layer_values = Vec::with_capacity((k_cap + 1) as usize);
        for h in 0..=k_cap {
            let layer = LayerIndex::new(h)?;
            let reach = ((-h as f64).exp2() / sp).ceil() as usize + 1;
            let mut acc = 0.0;
            for d in 1..=reach.min(n - 1) {
                // Cell-averaged kernel weight; subdivide the near field.
                let w = if d <= 4 {
                    let mut s = 0.0;
                    let sub = 8;
                    for a in 0..sub {
                        for b in 0..sub {
                            let off = (a as f64 - b as f64) / sub as f64;
                            let t = (d as f64 + off) * sp;
                            s += phi_layer_1d_abs(layer, t)?;
                        }
                    }
                    s / (sub * sub) as f64
                } else {
                    phi_layer_1d_abs(layer, d as f64 * sp)?
                };
                if w == 0.0 {
                    continue;
                }
                let mut diff2 = 0.0;
                for i in 0..n - d {
                    let e = u[i + d] - u[i];
                    diff2 += e * e;
                }
                acc += 2.0 * w * diff2 * sp * sp;
            }
            layer_values.push(acc);
        }
        let mut penalty = 0.0;
        for &v in &u {
            let d = dist_to_lattice(&[v]);
            penalty += d * d;
        }
        penalty *= sp / eps;
        let rescale = 1.0 / (1.0 / eps).ln();
        let b = EnergyBreakdown::assemble(layer_values, penalty, rescale);
        log.push(format!("eps = {eps}: energy {}", b.total));
        records.push(ConvergenceRecord {
            eps,
            energy: b.total,
            rescale: (1.0 / eps).ln(),
            skipped: false,
        });
        breakdowns.push(Some(b));
    }
    let fit = fit_intercept(&records)?;
    let target = 2.0 * cfg.jumps as f64;
    let pass = if target == 0.0 {
        fit.intercept.abs() < 1e-9
    } else {
        (fit.intercept - target).abs() <= cfg.rel_tol * target
    };
    log.push(format!(
        "intercept {} vs target {target}: {}",
        fit.intercept,
        if pass { "PASS" } else { "FAIL" }
    ));
    Ok(GammaOutcome {
        records,
        breakdowns,
        fit,
        target,
        rel_tol: cfg.rel_tol,
        pass,
    })
}

fn phi_layer_1d_abs(layer: LayerIndex, t: f64) -> Result<f64> {
    crate::kernels::phi_layer_1d(layer, t.abs())
}

// ---------------------------------------------------------------------------
// Remaining experiment drivers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
struct KernelCheckReport {
    max_partition_residual: f64,
    second_moment_error: f64,
    l1_ratios: Vec<f64>,
    max_ratio_error: f64,
    pass: bool,
}

fn run_kernel_check(
    cfg: &KernelCheckConfig,
    profile: &AngularProfile,
    log: &mut Vec<String>,
) -> Result<(serde_json::Value, String, Option<bool>)> {
    if cfg.radii < 2 {
        return Err(Error::config("need at least 2 radii".to_string()));
    }
    let mut max_res: f64 = 0.0;
    for i in 0..cfg.radii {
        let t = i as f64 / (cfg.radii - 1) as f64;
        let r = 1e-3_f64.powf(1.0 - t) * 0.999_f64.powf(t);
        let depth = (1.0 / r).log2().ceil() as i32 + 2;
        let total = phi_layer(LayerIndex::new(-1)?, r)? + phi_partial_sum(0, depth, r)?;
        let exact = r.powi(-3);
        max_res = max_res.max((total - exact).abs() / exact);
    }
    let moment_err = (layer_second_moment(LayerIndex::new(0)?)? - (2.0f64).ln()).abs();
    let mut norms = Vec::new();
    for k in 0..=cfg.ratio_k_max {
        norms.push(layer_l1_norm(profile, LayerIndex::new(k)?, 512, 1e-10)?);
    }
    let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
    let max_ratio_err = ratios
        .iter()
        .map(|r| (r - 2.0).abs() / 2.0)
        .fold(0.0f64, f64::max);
    let pass = max_res <= cfg.partition_tol
        && moment_err <= 1e-10
        && max_ratio_err <= cfg.ratio_tol;
    log.push(format!(
        "partition residual {max_res:.3e}, moment error {moment_err:.3e}, \
         ratio error {max_ratio_err:.3e}"
    ));
    let report = KernelCheckReport {
        max_partition_residual: max_res,
        second_moment_error: moment_err,
        l1_ratios: ratios.clone(),
        max_ratio_error: max_ratio_err,
        pass,
    };
    let mut csv = String::from("k,l1_norm,ratio_to_next\n");
    for (k, w) in norms.iter().enumerate() {
        let ratio = ratios
            .get(k)
            .map_or(String::new(), |r| format!("{r:.12e}"));
        let _ = writeln!(csv, "{k},{w:.12e},{ratio}");
    }
    Ok((serde_json::to_value(report)?, csv, Some(pass)))
}

fn random_block_field(
    size: usize,
    blocks: usize,
    max: i64,
    components: usize,
    spacing: f64,
    origin: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> Result<SlipField> {
    let b = blocks.max(1);
    let vals: Vec<f64> = (0..b * b * components)
        .map(|_| rng.random_range(0..=max) as f64)
        .collect();
    SlipField::from_fn(size, size, components, spacing, origin, |[x, y]| {
        let bx = (((x - origin[0]) / (size as f64 * spacing) * b as f64) as usize).min(b - 1);
        let by = (((y - origin[1]) / (size as f64 * spacing) * b as f64) as usize).min(b - 1);
        (0..components).map(|c| vals[(by * b + bx) * components + c]).collect()
    })
}

fn load_or_random_field(
    csv: &Option<PathBuf>,
    binary: &Option<PathBuf>,
    spacing: f64,
    origin: [f64; 2],
    size: usize,
    blocks: usize,
    max: i64,
    components: usize,
    rng: &mut ChaCha8Rng,
    log: &mut Vec<String>,
) -> Result<SlipField> {
    if let Some(p) = binary {
        log.push(format!("loading binary field {}", p.display()));
        let bytes = std::fs::read(p)?;
        return SlipField::read_binary(&bytes[..]);
    }
    if let Some(p) = csv {
        log.push(format!("loading CSV field {}", p.display()));
        let file = std::fs::File::open(p)?;
        return SlipField::read_csv(file, spacing, origin);
    }
    log.push("generating random block field".to_string());
    random_block_field(size, blocks, max, components, spacing, origin, rng)
}

fn run_energy(
    cfg: &EnergyConfig,
    profile: &AngularProfile,
    rng: &mut ChaCha8Rng,
    log: &mut Vec<String>,
) -> Result<(serde_json::Value, String, Option<bool>)> {
    let field = load_or_random_field(
        &cfg.field_csv,
        &cfg.field_binary,
        cfg.spacing,
        cfg.origin,
        cfg.random_size,
        cfg.random_blocks,
        cfg.random_max,
        cfg.components,
        rng,
        log,
    )?;
    let k_max = cfg
        .k_max
        .unwrap_or_else(|| (1.0 / field.spacing()).log2().ceil() as i32);
    let b = energy_total(profile, &field, None, cfg.eps, k_max, cfg.near_field_level)?;
    log.push(format!("total rescaled energy {}", b.total));
    let mut csv = String::from("layer,value\n");
    for (k, v) in b.layer_values.iter().enumerate() {
        let _ = writeln!(csv, "{k},{v:.12e}");
    }
    let _ = writeln!(csv, "penalty,{:.12e}", b.penalty);
    Ok((serde_json::to_value(&b)?, csv, None))
}

fn run_line_tension(
    cfg: &LineTensionConfig,
    profile: &AngularProfile,
    log: &mut Vec<String>,
) -> Result<(serde_json::Value, String, Option<bool>)> {
    #[derive(Serialize)]
    struct Row {
        theta_degrees: f64,
        value: f64,
        matrix: Vec<Vec<f64>>,
    }
    let mut rows = Vec::new();
    let mut csv = String::from("theta_degrees,value\n");
    for &deg in &cfg.theta_degrees {
        let theta = deg.to_radians();
        let nu = [theta.cos(), theta.sin()];
        let (value, matrix) = match cfg.nu_tilde {
            Some(nt) => {
                let (v, m) = kco_line_tension(nt, theta, &cfg.s)?;
                (v, m)
            }
            None => {
                let m = gamma0(profile, nu, cfg.tol)?;
                (m.value(&cfg.s), m)
            }
        };
        let _ = writeln!(csv, "{deg},{value:.12e}");
        rows.push(Row { theta_degrees: deg, value, matrix: matrix.rows() });
    }
    log.push(format!("evaluated {} directions", rows.len()));
    Ok((serde_json::json!({ "rows": rows }), csv, None))
}

fn run_relax(
    cfg: &RelaxConfig,
    profile: &AngularProfile,
    log: &mut Vec<String>,
) -> Result<(serde_json::Value, String, Option<bool>)> {
    let profile_tension;
    let kco_tension;
    let provider: &dyn TensionProvider = match cfg.nu_tilde {
        Some(nt) => {
            kco_tension = KcoTension { poisson: nt };
            &kco_tension
        }
        None => {
            profile_tension = ProfileTension { profile, tol: 1e-8 };
            &profile_tension
        }
    };
    if cfg.theta_steps < 2 {
        return Err(Error::config("theta sweep needs at least 2 steps".to_string()));
    }
    #[derive(Serialize)]
    struct Row {
        theta_degrees: f64,
        gamma0: f64,
        parallel: f64,
        zigzag: f64,
        upper: f64,
        construction: String,
        degenerate: bool,
    }
    let mut rows = Vec::new();
    let mut csv = String::from("theta_degrees,gamma0,parallel,zigzag,upper,construction\n");
    let mut ok = true;
    for i in 0..cfg.theta_steps {
        let t = i as f64 / (cfg.theta_steps - 1) as f64;
        let deg = cfg.theta_start_degrees + t * (cfg.theta_stop_degrees - cfg.theta_start_degrees);
        let theta = deg.to_radians();
        let nu = [theta.cos(), theta.sin()];
        let direct = provider.value_int(nu, &cfg.s)?;
        let par = relax_parallel(provider, nu, &cfg.s, cfg.radius)?;
        let zz = relax_zigzag(provider, nu, &cfg.s, cfg.zigzag_grid, cfg.radius)?;
        let (upper, construction, degenerate) = if zz.value < par.value - 1e-12 {
            (zz.value, zz.construction.clone(), zz.degenerate)
        } else {
            (par.value, par.construction.clone(), par.degenerate)
        };
        if upper > direct + 1e-9 {
            ok = false;
            log.push(format!("upper bound {upper} above gamma0 {direct} at {deg} deg"));
        }
        let _ = writeln!(
            csv,
            "{deg},{direct:.12e},{:.12e},{:.12e},{upper:.12e},{construction}",
            par.value, zz.value
        );
        rows.push(Row {
            theta_degrees: deg,
            gamma0: direct,
            parallel: par.value,
            zigzag: zz.value,
            upper,
            construction,
            degenerate,
        });
    }
    log.push(format!("swept {} angles", rows.len()));
    Ok((serde_json::json!({ "rows": rows }), csv, Some(ok)))
}

fn gamma_csv(outcome: &GammaOutcome) -> String {
    let mut csv = String::from("eps,inv_log,energy,skipped\n");
    for r in &outcome.records {
        let energy = if r.skipped {
            String::new()
        } else {
            format!("{:.12e}", r.energy)
        };
        let _ = writeln!(csv, "{},{:.12e},{energy},{}", r.eps, 1.0 / r.rescale, r.skipped);
    }
    csv
}

fn run_scan_scales(
    cfg: &ScanScalesConfig,
    rng: &mut ChaCha8Rng,
    log: &mut Vec<String>,
) -> Result<(serde_json::Value, String, Option<bool>)> {
    let field = load_or_random_field(
        &cfg.field_csv,
        &None,
        cfg.spacing,
        cfg.origin,
        cfg.random_size,
        cfg.random_blocks,
        cfg.random_max,
        cfg.components,
        rng,
        log,
    )?;
    if cfg.levels < 2 {
        return Err(Error::config("scan needs at least 2 levels".to_string()));
    }
    let h_list: Vec<i32> = (0..cfg.levels)
        .map(|i| cfg.h_start - cfg.step * i as i32)
        .collect();
    let params = GoodnessParams {
        budget: cfg.budget,
        k: cfg.k,
        zeta: cfg.zeta,
        tol: 1e-9,
    };
    let cascade = mollify_cascade(&field, &MollifierSpec::standard(), &h_list, &params)?;
    let mut csv = Vec::new();
    cascade.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv).expect("csv is utf-8");
    #[derive(Serialize)]
    struct LevelRow {
        h: i32,
        tv: f64,
        defect: Option<f64>,
        good: Option<bool>,
    }
    let levels: Vec<LevelRow> = cascade
        .levels
        .iter()
        .map(|l| LevelRow { h: l.h, tv: l.tv, defect: l.defect, good: l.good })
        .collect();
    log.push(format!(
        "{} levels, truncated: {}",
        cascade.levels.len(),
        cascade.truncated
    ));
    let value = serde_json::json!({
        "levels": levels,
        "m": cascade.m,
        "threshold": cascade.threshold,
        "truncated": cascade.truncated,
    });
    Ok((value, csv, None))
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub seed: u64,
    pub verdict: Option<bool>,
    pub results_path: PathBuf,
    pub table_path: PathBuf,
    pub log_path: PathBuf,
}

/// Execute one experiment and write results.json, table.csv and log.txt
/// into the output directory. The verdict is None for report-only
/// experiments and Some(pass) for those with a target.
pub fn run(
    experiment: Experiment,
    config: &RunConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<RunSummary> {
    if let Some(name) = &config.experiment {
        if name != experiment.name() {
            return Err(Error::config(format!(
                "config is for experiment '{name}', command line says '{}'",
                experiment.name()
            )));
        }
    }
    let seed = seed_override.or(config.seed).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log: Vec<String> = vec![format!("experiment: {}", experiment.name()), format!("seed: {seed}")];
    let profile = config.profile.resolve()?;
    let (payload, csv, verdict) = match experiment {
        Experiment::KernelCheck => run_kernel_check(&config.kernel_check, &profile, &mut log)?,
        Experiment::Energy => run_energy(&config.energy, &profile, &mut rng, &mut log)?,
        Experiment::LineTension => run_line_tension(&config.line_tension, &profile, &mut log)?,
        Experiment::Relax => run_relax(&config.relax, &profile, &mut log)?,
        Experiment::GammaLimit2d => {
            let outcome = gamma_limit_2d(&profile, &config.gamma_limit_2d, &mut log)?;
            let csv = gamma_csv(&outcome);
            let pass = outcome.pass;
            (serde_json::to_value(&outcome)?, csv, Some(pass))
        }
        Experiment::GammaLimit1d => {
            let outcome = gamma_limit_1d(&config.gamma_limit_1d, &mut log)?;
            let csv = gamma_csv(&outcome);
            let pass = outcome.pass;
            (serde_json::to_value(&outcome)?, csv, Some(pass))
        }
        Experiment::ScanScales => run_scan_scales(&config.scan_scales, &mut rng, &mut log)?,
    };
    std::fs::create_dir_all(out_dir)?;
    let results = serde_json::json!({
        "experiment": experiment.name(),
        "seed": seed,
        "verdict": verdict,
        "payload": payload,
    });
    let results_path = out_dir.join("results.json");
    let table_path = out_dir.join("table.csv");
    let log_path = out_dir.join("log.txt");
    std::fs::write(&results_path, serde_json::to_string_pretty(&results)? + "\n")?;
    std::fs::write(&table_path, &csv)?;
    std::fs::write(&log_path, log.join("\n") + "\n")?;
    Ok(RunSummary {
        experiment: experiment.name().to_string(),
        seed,
        verdict,
        results_path,
        table_path,
        log_path,
    })
}

/// Convenience entry point used by the CLI: load the config file, then run.
pub fn run_from_file(
    experiment: Experiment,
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<RunSummary> {
    let config = load_config(config_path)?;
    run(experiment, &config, out_dir, seed_override)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing_reports_location_and_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.toml");
        std::fs::write(&p, "seed = \"not a number\"\n").unwrap();
        match load_config(&p) {
            Err(Error::Parse(msg)) => {
                assert!(msg.contains("line"), "no location in: {msg}")
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&p, "no_such_key = 3\n").unwrap();
        assert!(load_config(&p).is_err());
        std::fs::write(&p, "seed = 7\n[gamma_limit_1d]\njumps = 2\n").unwrap();
        let cfg = load_config(&p).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.gamma_limit_1d.jumps, 2);
        // Missing profile file is a distinct configuration error.
        let cfg = RunConfig {
            profile: ProfileConfig {
                path: Some(dir.path().join("nope.toml")),
                ..Default::default()
            },
            ..Default::default()
        };
        match cfg.profile.resolve() {
            Err(Error::Config(msg)) => assert!(msg.contains("not found")),
            Err(other) => panic!("expected config error, got {other:?}"),
            Ok(_) => panic!("expected config error, got a profile"),
        }
    }

    #[test]
    fn fit_recovers_synthetic_expansions() {
        let records: Vec<ConvergenceRecord> = [0.1f64, 0.05, 0.02, 0.01]
            .iter()
            .map(|&eps| {
                let l = (1.0 / eps).ln();
                ConvergenceRecord { eps, energy: 5.0 - 3.0 / l, rescale: l, skipped: false }
            })
            .collect();
        let fit = fit_intercept(&records).unwrap();
        assert!((fit.intercept - 5.0).abs() < 1e-12);
        assert!((fit.slope + 3.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(fit.monotone);
        assert!(fit_intercept(&records[..1]).is_err());
    }

    #[test]
    fn interface_profile_is_a_monotone_cdf() {
        let p = InterfaceProfile::new(&MollifierSpec::standard());
        assert_eq!(p.value(-1.0), 0.0);
        assert_eq!(p.value(1.0), 1.0);
        assert!((p.value(0.0) - 0.5).abs() < 1e-6, "midpoint {}", p.value(0.0));
        let mut prev = -1.0;
        for i in 0..=100 {
            let t = -0.7 + 1.4 * i as f64 / 100.0;
            let v = p.value(t);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn eps_list_validation() {
        assert!(check_eps_list(&[0.1, 0.05]).is_ok());
        assert!(check_eps_list(&[]).is_err());
        assert!(check_eps_list(&[0.05, 0.1]).is_err());
        assert!(check_eps_list(&[0.5, 0.1]).is_err()); // 0.5 > 1/e
    }

    #[test]
    fn gamma_1d_single_jump_intercept_near_two() {
        let cfg = Gamma1dConfig {
            eps: vec![0.04, 0.02, 0.01],
            resolution: 2048,
            jumps: 1,
            rel_tol: 0.1,
        };
        let mut log = Vec::new();
        let out = gamma_limit_1d(&cfg, &mut log).unwrap();
        assert!(out.pass, "intercept {} target {}", out.fit.intercept, out.target);
        // Zero jumps cost nothing.
        let cfg = Gamma1dConfig { jumps: 0, ..cfg };
        let out = gamma_limit_1d(&cfg, &mut log).unwrap();
        assert!(out.fit.intercept.abs() < 1e-9);
        assert!(out.pass);
    }

    #[test]
    fn gamma_2d_smoke_at_low_resolution() {
        let profile = AngularProfile::isotropic(1, 1.0).unwrap();
        let cfg = Gamma2dConfig {
            eps: vec![0.25, 0.125],
            resolution: 64,
            nu_degrees: 90.0,
            s: vec![1.0],
            rel_tol: 0.5,
            k_max: None,
            near_field_level: 2,
        };
        let mut log = Vec::new();
        let out = gamma_limit_2d(&profile, &cfg, &mut log).unwrap();
        assert!((out.target - 8.0).abs() < 1e-9, "target {}", out.target);
        assert!(out.fit.intercept.is_finite());
        assert!(out.records.iter().all(|r| !r.skipped));
        // Zero jump vector: every energy vanishes.
        let cfg = Gamma2dConfig { s: vec![0.0], ..cfg };
        let out = gamma_limit_2d(&profile, &cfg, &mut log).unwrap();
        assert!(out.pass);
        assert!(out.records.iter().all(|r| r.energy.abs() < 1e-12));
        // Under-resolved eps values are skipped, loudly.
        let cfg = Gamma2dConfig {
            s: vec![1.0],
            eps: vec![0.25, 0.125, 0.01],
            resolution: 64,
            ..Default::default()
        };
        let mut log = Vec::new();
        let out = gamma_limit_2d(&profile, &cfg, &mut log).unwrap();
        assert!(out.records[2].skipped);
        assert!(log.iter().any(|l| l.contains("skipping eps")));
    }

    #[test]
    fn run_writes_deterministic_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig::default();
        let out1 = dir.path().join("a");
        let out2 = dir.path().join("b");
        let s1 = run(Experiment::ScanScales, &config, &out1, Some(9)).unwrap();
        let s2 = run(Experiment::ScanScales, &config, &out2, Some(9)).unwrap();
        for name in ["results.json", "table.csv", "log.txt"] {
            let a = std::fs::read(out1.join(name)).unwrap();
            let b = std::fs::read(out2.join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs between identical runs");
        }
        assert_eq!(s1.verdict, s2.verdict);
        // Different seed changes the random-field experiment output.
        let out3 = dir.path().join("c");
        run(Experiment::ScanScales, &config, &out3, Some(10)).unwrap();
        let a = std::fs::read(out1.join("results.json")).unwrap();
        let c = std::fs::read(out3.join("results.json")).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn kernel_check_passes_on_defaults() {
        let config = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let s = run(Experiment::KernelCheck, &config, dir.path(), None).unwrap();
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&s.results_path).unwrap()).unwrap();
        assert_eq!(s.verdict, Some(true), "report: {}", json["payload"]);
        assert_eq!(json["experiment"], "kernel-check");
        assert_eq!(json["verdict"], true);
    }

    #[test]
    fn relax_sweep_upper_bounds_hold() {
        let config = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let s = run(Experiment::Relax, &config, dir.path(), None).unwrap();
        assert_eq!(s.verdict, Some(true));
        let csv = std::fs::read_to_string(s.table_path).unwrap();
        assert!(csv.lines().count() > 3);
        assert!(csv.starts_with("theta_degrees,"));
    }

    #[test]
    fn experiment_name_cross_check() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            experiment: Some("relax".to_string()),
            ..Default::default()
        };
        assert!(run(Experiment::KernelCheck, &config, dir.path(), None).is_err());
    }
}
