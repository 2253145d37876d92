//! Python bindings for `iodm-core`.
//!
//! ```python
//! import iodm
//! f = iodm.Instance.gaussian_mab([0.5, 0.0])
//! fam, dropped = iodm.Family.grid(f, 0.0, 1.0, 0.1)
//! alloc = iodm.solve_complexity(f, fam, 1e6)
//! ```

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use iodm_core::complexity::{self, Allocation, Complexity};
use iodm_core::divergence::{self, RenyiOrder};
use iodm_core::families::{
    build_grid_family, build_instance, BernoulliMabParams, GaussianMabParams, GridSpec, LinearBanditParams, Model,
    Params, TabularMdpParams,
};
use iodm_core::harness::{self, ExperimentConfig};
use iodm_core::t2c::{self, InfeasiblePolicy, T2cSchedule, TestCalibration};
use iodm_core::{Decision, Error, HypothesisFamily, Observation, RunRecord};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Numeric(_) | Error::Solver(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn params_of(model: &Model) -> Params {
    match model {
        Model::GaussianMab(p) => p.clone().into(),
        Model::BernoulliMab(p) => p.clone().into(),
        Model::LinearBandit(p) => p.clone().into(),
        Model::TabularMdp(m) => m.params().clone().into(),
    }
}

/// A validated environment: one observation distribution per decision.
#[pyclass(name = "Instance", module = "iodm", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: iodm_core::Instance,
}

impl PyInstance {
    fn build(p: impl Into<Params>) -> PyResult<Self> {
        Ok(Self { inner: build_instance(p).map_err(to_py)? })
    }
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn gaussian_mab(means: Vec<f64>) -> PyResult<Self> {
        Self::build(GaussianMabParams { means })
    }

    #[staticmethod]
    fn bernoulli_mab(probs: Vec<f64>) -> PyResult<Self> {
        Self::build(BernoulliMabParams { probs })
    }

    #[staticmethod]
    fn linear_bandit(actions: Vec<Vec<f64>>, theta: Vec<f64>) -> PyResult<Self> {
        Self::build(LinearBanditParams { actions, theta })
    }

    /// `transitions[s][a]` is a distribution over the next layer's states
    /// (empty lists for the last layer); `reward_means[s][a]` in `[-1, 1]`.
    #[staticmethod]
    fn tabular_mdp(
        layers: Vec<usize>,
        actions: usize,
        transitions: Vec<Vec<Vec<f64>>>,
        reward_means: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        Self::build(TabularMdpParams { layers, actions, transitions, reward_means })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn num_decisions(&self) -> usize {
        self.inner.num_decisions()
    }

    #[getter]
    fn expected_rewards(&self) -> Vec<f64> {
        self.inner.expected_rewards().to_vec()
    }

    #[getter]
    fn gaps(&self) -> Vec<f64> {
        self.inner.gaps().to_vec()
    }

    #[getter]
    fn optimal_decision(&self) -> usize {
        self.inner.optimal_decision().index()
    }

    /// Free parameters in grid-axis order.
    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.flat_params()
    }

    /// Draw `count` observation rewards for `decision` (trajectory rewards
    /// are summed).
    #[pyo3(signature = (decision, count=1, seed=0))]
    fn sample(&self, decision: usize, count: usize, seed: u64) -> PyResult<Vec<f64>> {
        check_decision(&self.inner, decision)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count).map(|_| self.inner.sample(Decision(decision), &mut rng).reward()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Instance({}, params={:?})", self.kind(), self.inner.flat_params())
    }
}

fn check_decision(f: &iodm_core::Instance, d: usize) -> PyResult<()> {
    if d < f.num_decisions() {
        Ok(())
    } else {
        Err(PyValueError::new_err(format!("decision {d} out of range (0..{})", f.num_decisions())))
    }
}

/// A finite hypothesis family.
#[pyclass(name = "Family", module = "iodm", frozen)]
struct PyFamily {
    inner: HypothesisFamily,
}

#[pymethods]
impl PyFamily {
    #[new]
    fn new(instances: Vec<PyRef<'_, PyInstance>>) -> PyResult<Self> {
        let members = instances.iter().map(|i| i.inner.clone()).collect();
        Ok(Self { inner: HypothesisFamily::new(members).map_err(to_py)? })
    }

    /// Lattice family sharing `template`'s structure, with every free
    /// parameter ranging over `lo..=hi` in steps of `step`. Returns
    /// `(family, dropped_ties)`.
    #[staticmethod]
    fn grid(template: &PyInstance, lo: f64, hi: f64, step: f64) -> PyResult<(Self, usize)> {
        let params = params_of(template.inner.model());
        let spec = GridSpec::uniform(params.free_len(), lo, hi, step);
        let g = build_grid_family(&params, &spec).map_err(to_py)?;
        Ok((Self { inner: g.family }, g.dropped_ties))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn instance(&self, index: usize) -> PyResult<PyInstance> {
        if index >= self.inner.len() {
            return Err(PyValueError::new_err(format!("index {index} out of range (0..{})", self.inner.len())));
        }
        Ok(PyInstance { inner: self.inner.instance(index).clone() })
    }

    /// Index of a member with the same parameters, if any.
    fn position(&self, f: &PyInstance) -> Option<usize> {
        self.inner.position(&f.inner)
    }

    fn __repr__(&self) -> String {
        format!("Family({}, size={})", self.inner.kind().as_str(), self.inner.len())
    }
}

/// Solution of the allocation program.
#[pyclass(name = "Allocation", module = "iodm", frozen, get_all)]
struct PyAllocation {
    weights: Vec<f64>,
    objective: f64,
    binding_alternatives: Vec<usize>,
    n_cap: f64,
    iterations: usize,
    cap_binds: bool,
}

impl From<Allocation> for PyAllocation {
    fn from(a: Allocation) -> Self {
        Self {
            weights: a.weights,
            objective: a.objective,
            binding_alternatives: a.binding_alternatives,
            n_cap: a.n_cap,
            iterations: a.iterations,
            cap_binds: a.cap_binds,
        }
    }
}

#[pymethods]
impl PyAllocation {
    fn __repr__(&self) -> String {
        format!("Allocation(objective={}, weights={:?})", self.objective, self.weights)
    }
}

fn allocation(c: Complexity) -> Option<PyAllocation> {
    c.into_allocation().map(PyAllocation::from)
}

/// One simulated run.
#[pyclass(name = "RunRecord", module = "iodm", frozen)]
struct PyRunRecord {
    inner: RunRecord,
}

#[pymethods]
impl PyRunRecord {
    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn init_end(&self) -> usize {
        self.inner.init_end
    }

    #[getter]
    fn ident_end(&self) -> usize {
        self.inner.ident_end
    }

    #[getter]
    fn accepted(&self) -> bool {
        self.inner.accepted
    }

    #[getter]
    fn mle_index(&self) -> Option<usize> {
        self.inner.mle_index
    }

    #[getter]
    fn committed_decision(&self) -> Option<usize> {
        self.inner.committed_decision.map(Decision::index)
    }

    /// `"rejected"`, `"identification-infeasible"`, `"budget-exhausted"` or `None`.
    #[getter]
    fn fallback(&self) -> Option<&'static str> {
        use iodm_core::decision::FallbackReason::*;
        self.inner.fallback.map(|r| match r {
            Rejected => "rejected",
            IdentificationInfeasible => "identification-infeasible",
            BudgetExhausted => "budget-exhausted",
        })
    }

    #[getter]
    fn ident_budget(&self) -> Option<f64> {
        self.inner.ident_budget
    }

    #[getter]
    fn decisions(&self) -> Vec<usize> {
        self.inner.rounds.iter().map(|r| r.decision.index()).collect()
    }

    #[getter]
    fn rewards(&self) -> Vec<f64> {
        self.inner.rounds.iter().map(|r| r.observation.reward()).collect()
    }

    #[getter]
    fn cumulative_regret(&self) -> f64 {
        self.inner.cumulative_regret()
    }

    fn regret_at(&self, checkpoints: Vec<usize>) -> Vec<f64> {
        self.inner.regret_at(&checkpoints)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunRecord(n={}, accepted={}, regret={})",
            self.inner.horizon(),
            self.inner.accepted,
            self.inner.cumulative_regret()
        )
    }
}

#[pyfunction]
fn kl(f: &PyInstance, g: &PyInstance, decision: usize) -> PyResult<f64> {
    divergence::kl(&f.inner, &g.inner, Decision(decision)).map_err(to_py)
}

#[pyfunction]
fn renyi(f: &PyInstance, g: &PyInstance, decision: usize, zeta: f64) -> PyResult<f64> {
    let order = RenyiOrder::new(zeta).map_err(to_py)?;
    divergence::renyi(&f.inner, &g.inner, Decision(decision), order).map_err(to_py)
}

#[pyfunction]
fn weighted_kl(f: &PyInstance, g: &PyInstance, w: Vec<f64>) -> PyResult<f64> {
    divergence::weighted_kl(&f.inner, &g.inner, &w).map_err(to_py)
}

/// `C(f, n)`; `None` when no allocation within the cap separates `f`.
#[pyfunction]
fn solve_complexity(py: Python<'_>, f: &PyInstance, family: &PyFamily, n: f64) -> PyResult<Option<PyAllocation>> {
    let c = py.detach(|| complexity::solve_complexity(&f.inner, &family.inner, n)).map_err(to_py)?;
    Ok(allocation(c))
}

/// Most violated alternative `(family_index, violation)` for `w`, if any.
#[pyfunction]
fn separation_oracle(f: &PyInstance, family: &PyFamily, w: Vec<f64>) -> PyResult<Option<(usize, f64)>> {
    complexity::separation_oracle(&f.inner, &family.inner, &w).map_err(to_py)
}

/// `[(n, C(f, n))]` with `inf` where infeasible.
#[pyfunction]
fn complexity_curve(py: Python<'_>, f: &PyInstance, family: &PyFamily, schedule: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    py.detach(|| complexity::complexity_curve(&f.inner, &family.inner, &schedule))
        .map(|c| c.points)
        .map_err(to_py)
}

#[pyfunction]
fn mab_closed_form_weights(gaps: Vec<f64>, n: f64) -> PyResult<Vec<f64>> {
    complexity::mab_closed_form_weights(&gaps, n).map_err(to_py)
}

/// Allocation over the continuous parameter set of a linear bandit.
#[pyfunction]
fn linear_bandit_allocation(actions: Vec<Vec<f64>>, theta: Vec<f64>, n: f64) -> PyResult<Option<PyAllocation>> {
    let c = complexity::linear_bandit_allocation(&LinearBanditParams { actions, theta }, n).map_err(to_py)?;
    Ok(allocation(c))
}

/// Likelihood-ratio test on scalar observations.
#[pyfunction]
fn llr_accept(f_hat: &PyInstance, family: &PyFamily, decisions: Vec<usize>, rewards: Vec<f64>, c: f64) -> PyResult<bool> {
    if decisions.len() != rewards.len() {
        return Err(PyValueError::new_err("decisions and rewards differ in length"));
    }
    for &d in &decisions {
        check_decision(&f_hat.inner, d)?;
    }
    let ds: Vec<Decision> = decisions.into_iter().map(Decision).collect();
    let obs: Vec<Observation> = rewards.into_iter().map(Observation::Reward).collect();
    if !family.inner.instances().iter().all(|g| g.is_compatible(&f_hat.inner)) {
        return Err(PyValueError::new_err("f_hat does not match the family's kind and shape"));
    }
    Ok(t2c::llr_accept(&f_hat.inner, &family.inner, &ds, &obs, c))
}

/// `(false_accept_bound, false_reject_bound)`.
#[pyfunction]
fn chernoff_stein_bounds(lam: f64, beta: f64, m: usize, c: f64) -> PyResult<(f64, f64)> {
    let calib = TestCalibration::new(lam, beta, m, c).map_err(to_py)?;
    Ok(t2c::chernoff_stein_bounds(&calib))
}

#[pyfunction]
#[pyo3(signature = (family, truth_index, n, seed=0, on_infeasible="ucb"))]
fn run_t2c(
    py: Python<'_>,
    family: &PyFamily,
    truth_index: usize,
    n: usize,
    seed: u64,
    on_infeasible: &str,
) -> PyResult<PyRunRecord> {
    if truth_index >= family.inner.len() {
        return Err(PyValueError::new_err(format!("truth_index {truth_index} out of range")));
    }
    let policy: InfeasiblePolicy = on_infeasible.parse().map_err(to_py)?;
    let schedule = T2cSchedule::new(n, family.inner.num_decisions()).map_err(to_py)?.with_policy(policy);
    let rec = py.detach(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        t2c::run_t2c(&family.inner, truth_index, &schedule, &mut rng)
    });
    Ok(PyRunRecord { inner: rec.map_err(to_py)? })
}

#[pyfunction]
#[pyo3(signature = (instance, n, seed=0))]
fn run_ucb(py: Python<'_>, instance: &PyInstance, n: usize, seed: u64) -> PyRunRecord {
    let inner = py.detach(|| t2c::run_ucb(&instance.inner, n, &mut ChaCha8Rng::seed_from_u64(seed)));
    PyRunRecord { inner }
}

/// Run the experiment described by a config file; returns the aggregate
/// as a dict and writes CSVs when `out` is given.
#[pyfunction]
#[pyo3(signature = (config, out=None, seeds=None, threads=None, n=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: PathBuf,
    out: Option<PathBuf>,
    seeds: Option<usize>,
    threads: Option<usize>,
    n: Option<usize>,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let cfg = ExperimentConfig::from_file(&config)
        .and_then(|c| c.with_overrides(n, seeds, threads, out.clone()))
        .map_err(to_py)?;
    let output = py
        .detach(|| {
            let o = harness::execute(&cfg)?;
            if let Some(dir) = &out {
                harness::write_outputs(&cfg, &o, dir)?;
            }
            Ok::<_, Error>(o)
        })
        .map_err(to_py)?;
    let a = &output.aggregate;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("algorithm", a.algorithm.as_str())?;
    d.set_item("n", a.n)?;
    d.set_item("seeds", a.seeds)?;
    d.set_item("instance_id", a.instance_id)?;
    d.set_item("family_size", a.family_size)?;
    d.set_item("checkpoints", a.checkpoints.clone())?;
    d.set_item("mean_regret", a.mean_regret.clone())?;
    d.set_item("ci_half_width", a.ci_half_width.clone())?;
    d.set_item("accept_rate", a.accept_rate)?;
    d.set_item("correct_commit_rate", a.correct_commit_rate)?;
    d.set_item("false_commit_rate", a.false_commit_rate)?;
    d.set_item("mle_correct_rate", a.mle_correct_rate)?;
    d.set_item("fallback_rate", a.fallback_rate)?;
    d.set_item("reference_budget", a.reference_budget)?;
    d.set_item("reference", a.reference)?;
    d.set_item("final_regret", output.runs.iter().map(|r| r.final_regret).collect::<Vec<_>>())?;
    Ok(d)
}

/// Run the `iodm` command line in-process; returns the exit code.
#[pyfunction]
fn cli(py: Python<'_>, argv: Vec<String>) -> i32 {
    py.detach(|| {
        let args = std::iter::once("iodm".to_string()).chain(argv);
        harness::cli::cli_main(args, &mut std::io::stdout(), &mut std::io::stderr())
    })
}

#[pymodule]
fn iodm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyFamily>()?;
    m.add_class::<PyAllocation>()?;
    m.add_class::<PyRunRecord>()?;
    m.add_function(wrap_pyfunction!(kl, m)?)?;
    m.add_function(wrap_pyfunction!(renyi, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_kl, m)?)?;
    m.add_function(wrap_pyfunction!(solve_complexity, m)?)?;
    m.add_function(wrap_pyfunction!(separation_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(complexity_curve, m)?)?;
    m.add_function(wrap_pyfunction!(mab_closed_form_weights, m)?)?;
    m.add_function(wrap_pyfunction!(linear_bandit_allocation, m)?)?;
    m.add_function(wrap_pyfunction!(llr_accept, m)?)?;
    m.add_function(wrap_pyfunction!(chernoff_stein_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(run_t2c, m)?)?;
    m.add_function(wrap_pyfunction!(run_ucb, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
