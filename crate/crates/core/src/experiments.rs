//! Full-versus-reduced comparisons over a range of ε, convergence-order
//! fits and invariant monitors for full runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_laplacian, Field, Grid1D};
use crate::integrator::{integrate, IntegratorConfig, Record, SolverStats, Trajectory};
use crate::models::{
    project_initial_values, slow_manifold_c, DiffusionConstants, FullState, Model, ModelKind,
    ModelSpec, RateConstants, ReducedState,
};
use crate::mol::{interleave, MolSystem};
use crate::profiles::{build_initial_profiles, InitialConditionSpec};

/// Errors at or below this level are solver noise and excluded from fits.
pub const NOISE_FLOOR: f64 = 1e-13;

/// How errors are aggregated; stored in every report.
pub const ERROR_NORM: &str = "linf-space-at-final-time";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub full: ModelKind,
    pub reduced: ModelKind,
    pub epsilons: Vec<f64>,
    pub rates: RateConstants,
    pub diffusion: DiffusionConstants,
    pub grid: Grid1D,
    pub initial: InitialConditionSpec,
    pub t_end: f64,
    pub integrator: IntegratorConfig,
}

impl SweepSpec {
    /// The reference setup: `L = 1`, `N = 100`, unit rates, `d_s = d_e = 1`,
    /// `T = 0.005`, `ε ∈ {1, …, 1e-4}`. With `big_delta` the complex diffuses
    /// with `d_c = 2` (δ = 1), otherwise with `d_c = 1` (δ = 0) against the
    /// reduction without the δ term.
    pub fn reference(big_delta: bool) -> Self {
        let d_c = if big_delta { 2.0 } else { 1.0 };
        Self {
            full: ModelKind::FullScaledIrrev,
            reduced: if big_delta {
                ModelKind::ReducedIrrevBigDelta
            } else {
                ModelKind::ReducedIrrevSmallDelta
            },
            epsilons: vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4],
            rates: RateConstants::irreversible(1.0, 1.0, 1.0).expect("unit rates are valid"),
            diffusion: DiffusionConstants::new(1.0, 1.0, d_c, 1.0).expect("valid diffusion"),
            grid: Grid1D::new(1.0, 100).expect("valid grid"),
            initial: InitialConditionSpec::default(),
            t_end: 0.005,
            integrator: IntegratorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilon list is empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("epsilon values must be positive, got {e}")));
        }
        if !self.full.is_full() {
            return Err(Error::Config(format!("{} is not a full model", self.full)));
        }
        if !self.reduced.is_reduced() || self.reduced == ModelKind::SlowComplexFormation {
            return Err(Error::Config(format!(
                "{} is not a QSS reduction of a full model",
                self.reduced
            )));
        }
        if self.full.is_reversible() != self.reduced.is_reversible() {
            return Err(Error::Config(format!(
                "{} and {} differ in reversibility",
                self.full, self.reduced
            )));
        }
        if !self.reduced.keeps_delta_term() && self.diffusion.delta() != 0.0 {
            return Err(Error::Config(format!(
                "{} drops the delta term but d_c - d_e = {}",
                self.reduced,
                self.diffusion.delta()
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        self.rates.validate()?;
        self.diffusion.validate()?;
        self.initial.validate()?;
        self.integrator
            .validate(self.t_end)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.full.is_irreversible() && !self.rates.is_irreversible() {
            return Err(Error::Config("irreversible models need k_m2 = 0".into()));
        }
        Ok(())
    }
}

/// Invariant measurements over a full-model trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantReport {
    /// Smallest component value over all recorded states.
    pub min_component: f64,
    /// max over time of `|Σ y*(t) − Σ y*(0)| / |Σ y*(0)|`.
    pub y_star_sum_drift: f64,
    /// Same for `Σ (s + e + 2c + p)` in unscaled variables, reversible only.
    pub conserved_sum_drift: Option<f64>,
    pub max_y_star_initial: f64,
    pub max_y_star: f64,
    /// `‖c* − manifold(s, y*, p)‖∞` at the final time.
    pub manifold_distance: f64,
}

fn rel_drift(values: &[f64]) -> f64 {
    let first = values[0];
    let scale = if first != 0.0 { first.abs() } else { 1.0 };
    values.iter().fold(0.0_f64, |m, v| m.max((v - first).abs())) / scale
}

/// Evaluates the monitors on a trajectory produced by integrating `sys`
/// (states in the interleaved layout of [`MolSystem`]).
pub fn monitor_invariants(traj: &Trajectory, sys: &MolSystem) -> Result<InvariantReport> {
    let spec = sys.model().spec();
    if !spec.kind.is_full() {
        return Err(Error::InvalidParameter(format!(
            "invariant monitors need a full model, got {}",
            spec.kind
        )));
    }
    let eps = spec.epsilon()?;
    let n = sys.model().cells();
    let rev = spec.kind.is_reversible();
    let mut min_component = f64::INFINITY;
    let mut y_sums = Vec::with_capacity(traj.states.len());
    let mut conserved = Vec::with_capacity(traj.states.len());
    let mut max_y = f64::NEG_INFINITY;
    let mut max_y0 = f64::NEG_INFINITY;
    for (k, state) in traj.states.iter().enumerate() {
        let st = FullState::from_blocked(&sys.deinterleave(state)?, n, rev);
        min_component = state.iter().fold(min_component, |m, v| m.min(*v));
        y_sums.push(st.y_star.sum());
        let ymax = st.y_star.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        max_y = max_y.max(ymax);
        if k == 0 {
            max_y0 = ymax;
        }
        if let Some(p) = &st.p {
            // e = ε(y* − c*), c = ε c*, so s + e + 2c + p = s + p + ε(y* + c*)
            conserved.push(st.s.sum() + p.sum() + eps * (st.y_star.sum() + st.c_star.sum()));
        }
    }
    let last = FullState::from_blocked(&sys.deinterleave(traj.final_state())?, n, rev);
    let manifold = slow_manifold_c(&last.s, &last.y_star, last.p.as_ref(), &spec.rates)?;
    Ok(InvariantReport {
        min_component,
        y_star_sum_drift: rel_drift(&y_sums),
        conserved_sum_drift: rev.then(|| rel_drift(&conserved)),
        max_y_star_initial: max_y0,
        max_y_star: max_y,
        manifold_distance: last.c_star.max_abs_diff(&manifold),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub epsilon: f64,
    pub err_s: f64,
    pub err_cstar: f64,
    pub err_ystar: f64,
    pub err_p: Option<f64>,
    /// Present when either integration failed; errors are then NaN.
    pub failure: Option<String>,
    pub full_stats: SolverStats,
    pub reduced_stats: SolverStats,
    pub invariants: Option<InvariantReport>,
}

impl ErrorRecord {
    fn failed(epsilon: f64, reversible: bool, why: String) -> Self {
        Self {
            epsilon,
            err_s: f64::NAN,
            err_cstar: f64::NAN,
            err_ystar: f64::NAN,
            err_p: reversible.then_some(f64::NAN),
            failure: Some(why),
            full_stats: SolverStats::default(),
            reduced_stats: SolverStats::default(),
            invariants: None,
        }
    }

    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Final states of a full and a reduced run from the same raw data.
#[derive(Debug, Clone)]
pub struct ComparisonRun {
    pub full: FullState,
    pub reduced: ReducedState,
    /// `c*` of the reduced run, reconstructed on the manifold.
    pub reduced_c_star: Field,
    pub record: ErrorRecord,
}

/// Integrates the full model from the raw profiles and the reduced model
/// from their projection, both to `spec.t_end`, and measures the errors.
/// Integration failures are reported in the record, not as `Err`.
pub fn run_comparison(spec: &SweepSpec, epsilon: f64) -> Result<ComparisonRun> {
    spec.validate()?;
    let rev = spec.full.is_reversible();
    let lap = build_laplacian(spec.grid);
    let n = spec.grid.cell_count();
    let raw = build_initial_profiles(&spec.initial, &spec.grid, rev)?;

    let full_model = Model::new(ModelSpec::new(spec.full, spec.rates, spec.diffusion, Some(epsilon))?, lap)?;
    let full_sys = MolSystem::new(full_model);
    let full_cfg = IntegratorConfig { record: Record::All, ..spec.integrator.clone() };
    let y0 = interleave(&raw.to_blocked(), full_sys.model().species().len(), n);
    let full_traj = match integrate(&full_sys, &y0, spec.t_end, &full_cfg) {
        Ok(t) => t,
        Err(e) => return Ok(failed_run(&raw, epsilon, rev, format!("full model: {e}"))),
    };

    let (reduced0, _) = project_initial_values(&raw, &spec.rates)?;
    let red_model = Model::new(ModelSpec::new(spec.reduced, spec.rates, spec.diffusion, None)?, lap)?;
    let red_sys = MolSystem::new(red_model);
    let r0 = interleave(&reduced0.to_blocked(), red_sys.model().species().len(), n);
    let red_traj = match integrate(&red_sys, &r0, spec.t_end, &spec.integrator) {
        Ok(t) => t,
        Err(e) => return Ok(failed_run(&raw, epsilon, rev, format!("reduced model: {e}"))),
    };

    let full = FullState::from_blocked(&full_sys.deinterleave(full_traj.final_state())?, n, rev);
    let reduced = ReducedState::from_blocked(&red_sys.deinterleave(red_traj.final_state())?, n, rev);
    let reduced_c_star = slow_manifold_c(&reduced.s, &reduced.y_star, reduced.p.as_ref(), &spec.rates)?;
    let invariants = monitor_invariants(&full_traj, &full_sys)?;

    let record = ErrorRecord {
        epsilon,
        err_s: full.s.max_abs_diff(&reduced.s),
        err_cstar: full.c_star.max_abs_diff(&reduced_c_star),
        err_ystar: full.y_star.max_abs_diff(&reduced.y_star),
        err_p: match (&full.p, &reduced.p) {
            (Some(a), Some(b)) => Some(a.max_abs_diff(b)),
            _ => None,
        },
        failure: None,
        full_stats: full_traj.stats,
        reduced_stats: red_traj.stats,
        invariants: Some(invariants),
    };
    Ok(ComparisonRun { full, reduced, reduced_c_star, record })
}

fn failed_run(raw: &FullState, epsilon: f64, rev: bool, why: String) -> ComparisonRun {
    let (reduced, c) = (
        ReducedState { s: raw.s.clone(), y_star: raw.y_star.clone(), p: raw.p.clone() },
        raw.c_star.clone(),
    );
    ComparisonRun {
        full: raw.clone(),
        reduced,
        reduced_c_star: c,
        record: ErrorRecord::failed(epsilon, rev, why),
    }
}

/// Least-squares slope of `log err` against `log ε`, ignoring points at the
/// noise floor and non-finite errors. `None` with fewer than three usable
/// points.
pub fn fit_convergence_order(epsilons: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(errors)
        .filter(|(e, r)| **e > 0.0 && r.is_finite() && **r > NOISE_FLOOR)
        .map(|(e, r)| (e.ln(), r.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub error_norm: &'static str,
    pub full: ModelKind,
    pub reduced: ModelKind,
    pub t_end: f64,
    /// Ordered by decreasing ε.
    pub records: Vec<ErrorRecord>,
    pub slope_s: Option<f64>,
    pub slope_cstar: Option<f64>,
    pub slope_ystar: Option<f64>,
    pub slope_p: Option<f64>,
    /// Fitted order of the slow-manifold distance of the full runs at `T`.
    pub slope_manifold: Option<f64>,
}

impl ConvergenceReport {
    pub fn from_records(spec: &SweepSpec, mut records: Vec<ErrorRecord>) -> Self {
        records.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        let ok: Vec<&ErrorRecord> = records.iter().filter(|r| r.ok()).collect();
        let eps: Vec<f64> = ok.iter().map(|r| r.epsilon).collect();
        let fit = |f: &dyn Fn(&ErrorRecord) -> f64| {
            let errs: Vec<f64> = ok.iter().map(|r| f(r)).collect();
            fit_convergence_order(&eps, &errs)
        };
        let rev = spec.full.is_reversible();
        Self {
            error_norm: ERROR_NORM,
            full: spec.full,
            reduced: spec.reduced,
            t_end: spec.t_end,
            slope_s: fit(&|r| r.err_s),
            slope_cstar: fit(&|r| r.err_cstar),
            slope_ystar: fit(&|r| r.err_ystar),
            slope_p: if rev { fit(&|r| r.err_p.unwrap_or(f64::NAN)) } else { None },
            slope_manifold: fit(&|r| r.invariants.map_or(f64::NAN, |i| i.manifold_distance)),
            records,
        }
    }
}

/// Runs every ε of the sweep, concurrently on `jobs` threads (all cores
/// when `None`).
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<ConvergenceReport> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let records: Result<Vec<ErrorRecord>> = pool.install(|| {
        spec.epsilons
            .par_iter()
            .map(|&e| run_comparison(spec, e).map(|run| run.record))
            .collect()
    });
    Ok(ConvergenceReport::from_records(spec, records?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_first_order() {
        let eps = [1.0, 0.1, 0.01, 0.001];
        let errs: Vec<f64> = eps.iter().map(|e| 3.0 * e).collect();
        assert!((fit_convergence_order(&eps, &errs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_second_order() {
        let eps = [1.0, 0.5, 0.25, 0.125];
        let errs: Vec<f64> = eps.iter().map(|e| e * e).collect();
        assert!((fit_convergence_order(&eps, &errs).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noise_floor_points_are_dropped() {
        let eps = [1.0, 0.1, 0.01, 0.001];
        assert_eq!(fit_convergence_order(&eps, &[1e-3, 1e-4, 1e-14, 0.0]), None);
        let s = fit_convergence_order(&eps, &[1.0, 0.1, 0.01, 1e-14]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(fit_convergence_order(&eps[..2], &[1.0, 0.1]), None);
    }

    fn tiny_spec() -> SweepSpec {
        SweepSpec {
            grid: Grid1D::new(1.0, 8).unwrap(),
            epsilons: vec![0.1, 0.01],
            t_end: 0.01,
            ..SweepSpec::reference(true)
        }
    }

    #[test]
    fn inconsistent_pairs_are_rejected() {
        let mut s = tiny_spec();
        s.reduced = ModelKind::ReducedRevBigDelta;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = tiny_spec();
        s.reduced = ModelKind::ReducedIrrevSmallDelta;
        assert!(s.validate().is_err());
        let mut s = tiny_spec();
        s.epsilons = vec![0.1, -1.0];
        assert!(s.validate().is_err());
        let mut s = tiny_spec();
        s.full = ModelKind::ReducedIrrevBigDelta;
        assert!(s.validate().is_err());
    }

    #[test]
    fn identical_dynamics_agree_to_solver_noise() {
        // no diffusion and data on the manifold with c* independent of s:
        // with k1 s ≪ k_m1 + k2 nothing moves at all
        let spec = SweepSpec {
            diffusion: DiffusionConstants::zero(),
            initial: InitialConditionSpec::constant(0.0, 0.0, 1.0, 0.0),
            ..tiny_spec()
        };
        let run = run_comparison(&spec, 0.05).unwrap();
        let r = run.record;
        assert!(r.ok());
        assert!(r.err_s <= 1e-10 && r.err_cstar <= 1e-10 && r.err_ystar <= 1e-10, "{r:?}");
    }

    #[test]
    fn reversible_run_conserves_sums() {
        let spec = SweepSpec {
            full: ModelKind::FullScaledRev,
            reduced: ModelKind::ReducedRevBigDelta,
            rates: RateConstants { k1: 1.0, k_m1: 1.0, k2: 0.0, k_m2: 0.0 },
            initial: InitialConditionSpec { p_value: 0.3, ..Default::default() },
            ..tiny_spec()
        };
        let run = run_comparison(&spec, 0.1).unwrap();
        let inv = run.record.invariants.unwrap();
        assert!(inv.y_star_sum_drift <= 1e-12, "{inv:?}");
        assert!(inv.conserved_sum_drift.unwrap() <= 1e-12, "{inv:?}");
        assert!(inv.min_component >= -1e-12);
    }

    #[test]
    fn sweep_is_ordered_and_parallel_safe() {
        let spec = SweepSpec { epsilons: vec![0.01, 0.1, 0.05], ..tiny_spec() };
        let a = run_sweep(&spec, Some(3)).unwrap();
        let b = run_sweep(&spec, Some(1)).unwrap();
        let eps: Vec<f64> = a.records.iter().map(|r| r.epsilon).collect();
        assert_eq!(eps, vec![0.1, 0.05, 0.01]);
        assert_eq!(a, b);
        assert!(a.records.iter().all(|r| r.ok()));
        // errors shrink with ε
        assert!(a.records[2].err_s < a.records[0].err_s);
    }
}
