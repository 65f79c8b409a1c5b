//! Python bindings: kernel evaluations, angular profiles, slip fields and
//! energies, line tensions with relaxation bounds, 1D multiscale tools, and
//! the experiment runner.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dislo_core::energy::{energy_total, EnergyBreakdown};
use dislo_core::field::SlipField;
use dislo_core::kernels::{self, AngularProfile, LayerIndex};
use dislo_core::line_tension;
use dislo_core::multiscale::{
    cluster_1d, isolated_jump_energy, snap_one_dimensional, JumpSet1D, MollifierSpec,
};
use dislo_core::relaxation::{
    relax_parallel, relax_upper_bound, relax_zigzag, KcoTension, ProfileTension,
    TensionProvider,
};
use dislo_core::{harness, Error};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

#[pyfunction]
fn phi_layer(k: i32, r: f64) -> PyResult<f64> {
    kernels::phi_layer(LayerIndex::new(k).map_err(err)?, r).map_err(err)
}

#[pyfunction]
fn phi_layer_1d(k: i32, r: f64) -> PyResult<f64> {
    kernels::phi_layer_1d(LayerIndex::new(k).map_err(err)?, r).map_err(err)
}

#[pyfunction]
fn phi_partial_sum(k_lo: i32, k_hi: i32, r: f64) -> PyResult<f64> {
    kernels::phi_partial_sum(k_lo, k_hi, r).map_err(err)
}

#[pyfunction]
fn layer_second_moment(k: i32) -> PyResult<f64> {
    kernels::layer_second_moment(LayerIndex::new(k).map_err(err)?).map_err(err)
}

#[pyfunction]
fn dist_to_lattice(v: Vec<f64>) -> f64 {
    dislo_core::energy::dist_to_lattice(&v)
}

#[pyfunction]
fn nearest_lattice(v: Vec<f64>) -> Vec<i64> {
    dislo_core::energy::nearest_lattice(&v)
}

// ---------------------------------------------------------------------------
// Profiles and line tensions
// ---------------------------------------------------------------------------

/// Matrix-valued angular kernel factor on the unit circle.
#[pyclass(name = "Profile", from_py_object)]
#[derive(Clone)]
struct PyProfile {
    inner: AngularProfile,
}

#[pymethods]
impl PyProfile {
    #[staticmethod]
    fn isotropic(n: usize, scale: f64) -> PyResult<Self> {
        Ok(PyProfile { inner: AngularProfile::isotropic(n, scale).map_err(err)? })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(PyProfile { inner: kernels::profile_from_file(&path).map_err(err)? })
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn layer_l1_norm(&self, k: i32, angular_panels: usize, tol: f64) -> PyResult<f64> {
        kernels::layer_l1_norm(&self.inner, LayerIndex::new(k).map_err(err)?, angular_panels, tol)
            .map_err(err)
    }

    /// Line-tension matrix for the interface normal at `theta` radians;
    /// returns (value at s, matrix rows).
    fn gamma0(&self, theta: f64, s: Vec<f64>, tol: f64) -> PyResult<(f64, Vec<Vec<f64>>)> {
        let m = line_tension::gamma0(&self.inner, [theta.cos(), theta.sin()], tol).map_err(err)?;
        Ok((m.value(&s), m.rows()))
    }
}

#[pyfunction]
fn kco_line_tension(poisson: f64, theta: f64, s: Vec<f64>) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let (v, m) = line_tension::kco_line_tension(poisson, theta, &s).map_err(err)?;
    Ok((v, m.rows()))
}

fn relax_result_dict<'py>(
    py: Python<'py>,
    r: &dislo_core::relaxation::RelaxationResult,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", r.value)?;
    d.set_item("construction", &r.construction)?;
    d.set_item("degenerate", r.degenerate)?;
    Ok(d)
}

/// Relaxation upper bounds (parallel splitting, zigzag, and their minimum)
/// for the cubic kernel with Poisson ratio `poisson`, or for a profile when
/// one is given instead.
#[pyfunction]
#[pyo3(signature = (theta, s, poisson=None, profile=None, grid=32, radius=3))]
fn relax<'py>(
    py: Python<'py>,
    theta: f64,
    s: Vec<i64>,
    poisson: Option<f64>,
    profile: Option<PyProfile>,
    grid: usize,
    radius: i64,
) -> PyResult<Bound<'py, PyDict>> {
    let nu = [theta.cos(), theta.sin()];
    let kco;
    let pt;
    let provider: &dyn TensionProvider = match (poisson, &profile) {
        (Some(p), None) => {
            kco = KcoTension { poisson: p };
            &kco
        }
        (None, Some(pr)) => {
            pt = ProfileTension { profile: &pr.inner, tol: 1e-8 };
            &pt
        }
        _ => {
            return Err(PyValueError::new_err(
                "pass exactly one of poisson= or profile=",
            ))
        }
    };
    let gamma = provider.value_int(nu, &s).map_err(err)?;
    let par = relax_parallel(provider, nu, &s, radius).map_err(err)?;
    let zig = relax_zigzag(provider, nu, &s, grid, radius).map_err(err)?;
    let best = relax_upper_bound(provider, nu, &s, grid, radius).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("gamma0", gamma)?;
    d.set_item("parallel", relax_result_dict(py, &par)?)?;
    d.set_item("zigzag", relax_result_dict(py, &zig)?)?;
    d.set_item("upper", relax_result_dict(py, &best)?)?;
    Ok(d)
}

// ---------------------------------------------------------------------------
// Slip fields and energies
// ---------------------------------------------------------------------------

/// Piecewise-constant vector field on a uniform grid, values indexed as
/// values[iy][ix][component].
#[pyclass(name = "SlipField", from_py_object)]
#[derive(Clone)]
struct PySlipField {
    inner: SlipField,
}

#[pymethods]
impl PySlipField {
    #[new]
    #[pyo3(signature = (values, spacing, origin=(0.0, 0.0)))]
    fn new(values: Vec<Vec<Vec<f64>>>, spacing: f64, origin: (f64, f64)) -> PyResult<Self> {
        let ny = values.len();
        let nx = values.first().map_or(0, |r| r.len());
        let n = values
            .first()
            .and_then(|r| r.first())
            .map_or(0, |c| c.len());
        if nx == 0 || ny == 0 || n == 0 {
            return Err(PyValueError::new_err("values must be a nonempty 3D nested list"));
        }
        for row in &values {
            if row.len() != nx || row.iter().any(|c| c.len() != n) {
                return Err(PyValueError::new_err("ragged values array"));
            }
        }
        let inner = SlipField::from_fn(nx, ny, n, spacing, [origin.0, origin.1], |[x, y]| {
            let ix = (((x - origin.0) / spacing) - 0.5).round() as usize;
            let iy = (((y - origin.1) / spacing) - 0.5).round() as usize;
            values[iy][ix].clone()
        })
        .map_err(err)?;
        Ok(PySlipField { inner })
    }

    #[staticmethod]
    fn read_csv(path: PathBuf, spacing: f64, origin: (f64, f64)) -> PyResult<Self> {
        let file = std::fs::File::open(&path)
            .map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
        let inner = SlipField::read_csv(file, spacing, [origin.0, origin.1]).map_err(err)?;
        Ok(PySlipField { inner })
    }

    #[getter]
    fn nx(&self) -> usize {
        self.inner.nx()
    }

    #[getter]
    fn ny(&self) -> usize {
        self.inner.ny()
    }

    #[getter]
    fn components(&self) -> usize {
        self.inner.components()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    fn get(&self, ix: usize, iy: usize) -> PyResult<Vec<f64>> {
        if ix >= self.inner.nx() || iy >= self.inner.ny() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(ix, iy).to_vec())
    }

    /// Rescaled energy decomposition as a dict with per-layer values, the
    /// lattice penalty and the total.
    #[pyo3(signature = (profile, eps, k_max, near_field_level=2))]
    fn energy<'py>(
        &self,
        py: Python<'py>,
        profile: PyProfile,
        eps: f64,
        k_max: i32,
        near_field_level: u32,
    ) -> PyResult<Bound<'py, PyDict>> {
        let b: EnergyBreakdown =
            energy_total(&profile.inner, &self.inner, None, eps, k_max, near_field_level)
                .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("layers", b.layer_values)?;
        d.set_item("penalty", b.penalty)?;
        d.set_item("rescale", b.rescale)?;
        d.set_item("total", b.total)?;
        Ok(d)
    }
}

// ---------------------------------------------------------------------------
// Multiscale tools
// ---------------------------------------------------------------------------

/// Iterated jump clustering of a 1D jump set over levels h = k..0; returns a
/// dict with per-level survivors, drift and goodness.
#[pyfunction]
fn cluster_jumps<'py>(
    py: Python<'py>,
    interval: (f64, f64),
    points: Vec<f64>,
    k: i32,
    m: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let j = JumpSet1D::new(interval, points, false).map_err(err)?;
    let rep = cluster_1d(&j, k, m).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("critical_count", rep.critical_count)?;
    d.set_item("good_count", rep.good_count)?;
    let levels: Vec<Bound<'py, PyDict>> = rep
        .levels
        .iter()
        .map(|l| {
            let ld = PyDict::new(py);
            ld.set_item("h", l.h)?;
            ld.set_item("jumps", l.jumps.points().to_vec())?;
            ld.set_item("critical", l.critical)?;
            ld.set_item("drift", l.drift)?;
            ld.set_item("good", l.good)?;
            Ok(ld)
        })
        .collect::<PyResult<_>>()?;
    d.set_item("levels", levels)?;
    Ok(d)
}

/// Energy of isolated jumps against the level-h 1D kernel over a window.
#[pyfunction]
fn jump_energy(interval: (f64, f64), points: Vec<f64>, h: i32, window: (f64, f64)) -> PyResult<(f64, bool)> {
    let j = JumpSet1D::new(interval, points, false).map_err(err)?;
    let rep = isolated_jump_energy(&j, h, window).map_err(err)?;
    Ok((rep.value, rep.clearance_ok))
}

/// Snap a sampled profile onto a·λ(t) + b with integer a, b, λ.
#[pyfunction]
fn snap_profile<'py>(
    py: Python<'py>,
    t: Vec<f64>,
    u: Vec<Vec<f64>>,
    m_bound: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = snap_one_dimensional(&t, &u, m_bound).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("a", r.a)?;
    d.set_item("b", r.b)?;
    d.set_item("lambda", r.lambda)?;
    d.set_item("l1_error", r.l1_error)?;
    d.set_item("lattice_l1", r.lattice_l1)?;
    d.set_item("degenerate", r.degenerate)?;
    Ok(d)
}

#[pyfunction]
fn mollifier_value(x: f64, y: f64) -> f64 {
    MollifierSpec::standard().value([x, y])
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

/// Run one experiment from a TOML config; returns the run summary as a dict.
#[pyfunction]
#[pyo3(signature = (experiment, config, out, seed=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    experiment: &str,
    config: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let exp = [
        harness::Experiment::KernelCheck,
        harness::Experiment::Energy,
        harness::Experiment::LineTension,
        harness::Experiment::Relax,
        harness::Experiment::GammaLimit2d,
        harness::Experiment::GammaLimit1d,
        harness::Experiment::ScanScales,
    ]
    .into_iter()
    .find(|e| e.name() == experiment)
    .ok_or_else(|| PyValueError::new_err(format!("unknown experiment '{experiment}'")))?;
    let summary = harness::run_from_file(exp, &config, &out, seed).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("experiment", summary.experiment)?;
    d.set_item("seed", summary.seed)?;
    d.set_item("verdict", summary.verdict)?;
    d.set_item("results_path", summary.results_path)?;
    d.set_item("table_path", summary.table_path)?;
    d.set_item("log_path", summary.log_path)?;
    Ok(d)
}

#[pymodule]
fn dislo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(phi_layer, m)?)?;
    m.add_function(wrap_pyfunction!(phi_layer_1d, m)?)?;
    m.add_function(wrap_pyfunction!(phi_partial_sum, m)?)?;
    m.add_function(wrap_pyfunction!(layer_second_moment, m)?)?;
    m.add_function(wrap_pyfunction!(dist_to_lattice, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_lattice, m)?)?;
    m.add_function(wrap_pyfunction!(kco_line_tension, m)?)?;
    m.add_function(wrap_pyfunction!(relax, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_jumps, m)?)?;
    m.add_function(wrap_pyfunction!(jump_energy, m)?)?;
    m.add_function(wrap_pyfunction!(snap_profile, m)?)?;
    m.add_function(wrap_pyfunction!(mollifier_value, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PyProfile>()?;
    m.add_class::<PySlipField>()?;
    Ok(())
}
