//! Turnpike diagnostics: distance to the steady optimum, entry time,
//! exponential-rate fits, the averaged-cost sweep, the representation
//! formula for `J_T`, and the approach-then-hold strategy.
//!
//! Thresholds and windows here are tunable defaults; the underlying
//! constants are existence-level and have no closed form.

use rayon::prelude::*;
use serde::Serialize;

use crate::discrete::DiscreteProblem;
use crate::error::{Error, Result};
use crate::grid::linf;
use crate::optimize::{DescentOptions, OptimizationResult, Termination};
use crate::parabolic::{energy, steady_operator, Control, Trajectory};
use crate::problem::{DiscretizationSpec, ProblemSpec};
use crate::steady::{SteadyOptions, SteadyPair};

/// `d_y(t_k) = ‖y(t_k) − ȳ‖_∞` and `d_u(t_k) = ‖u(t_k) − ū‖_{∞,ω}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceCurves {
    pub t: Vec<f64>,
    pub dy: Vec<f64>,
    pub du: Vec<f64>,
}

impl DistanceCurves {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Largest `d_y` over samples with `t_a ≤ t ≤ t_b`.
    pub fn max_dy_on(&self, t_a: f64, t_b: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.dy)
            .filter(|(t, _)| **t >= t_a && **t <= t_b)
            .fold(0.0_f64, |m, (_, d)| m.max(*d))
    }
}

/// Distances of an optimization result to the steady pair. The control at
/// the final time stamp is taken from the optimality relation `u = −q χ_ω`,
/// which gives `u(T) = 0`.
pub fn distance_curves(
    problem: &DiscreteProblem,
    state: &Trajectory,
    control: &Control,
    adjoint: &Trajectory,
    pair: &SteadyPair,
) -> Result<DistanceCurves> {
    let nx = problem.nx();
    let nt = state.nt();
    for (name, len) in [
        ("distance state", state.nx()),
        ("distance control", control.nx()),
        ("distance adjoint", adjoint.nx()),
        ("distance steady state", pair.state.len()),
        ("distance steady control", pair.control.len()),
    ] {
        crate::error::ensure_len(name, nx, len)?;
    }
    crate::error::ensure_len("distance control steps", nt, control.nt())?;
    let support = problem.control_mask.support();
    let mut t = Vec::with_capacity(nt + 1);
    let mut dy = Vec::with_capacity(nt + 1);
    let mut du = Vec::with_capacity(nt + 1);
    for k in 0..=nt {
        t.push(state.time(k));
        let yk = state.snapshot(k);
        dy.push(
            yk.iter()
                .zip(&pair.state)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())),
        );
        let d = if k < nt {
            let uk = control.step(k);
            support
                .clone()
                .fold(0.0_f64, |m, i| m.max((uk[i] - pair.control[i]).abs()))
        } else {
            let qk = adjoint.snapshot(k);
            support
                .clone()
                .fold(0.0_f64, |m, i| m.max((-qk[i] - pair.control[i]).abs()))
        };
        du.push(d);
    }
    Ok(DistanceCurves { t, dy, du })
}

/// First snapshot time with `‖y(t)‖_∞ ≤ δ`, or `T` if there is none.
pub fn entry_time(state: &Trajectory, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} must be > 0"
        )));
    }
    Ok(state
        .snapshots()
        .position(|y| linf(y) <= delta)
        .map(|k| state.time(k))
        .unwrap_or(state.time(state.nt())))
}

/// Samples below this are clipped before taking logarithms.
pub const FIT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialFit {
    /// `exp(intercept)`.
    pub k: f64,
    /// `−slope`.
    pub mu: f64,
    /// RMS of the log misfit.
    pub residual: f64,
    pub samples: usize,
    /// True if some sample was below [`FIT_FLOOR`].
    pub clipped: bool,
}

/// Least-squares fit of `log d(t) ≈ log K − μ t` over `t_a ≤ t ≤ t_b`.
pub fn fit_exponential_rates(t: &[f64], d: &[f64], t_a: f64, t_b: f64) -> Result<ExponentialFit> {
    crate::error::ensure_len("fit series", t.len(), d.len())?;
    let mut clipped = false;
    let points: Vec<(f64, f64)> = t
        .iter()
        .zip(d)
        .filter(|(ti, _)| **ti >= t_a && **ti <= t_b)
        .map(|(&ti, &di)| {
            if !(di >= FIT_FLOOR) {
                clipped = true;
            }
            (ti, di.max(FIT_FLOOR).ln())
        })
        .collect();
    let n = points.len();
    if n < 3 {
        return Err(Error::FitWindow { samples: n });
    }
    let nf = n as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_l = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut stt, mut stl) = (0.0, 0.0);
    for &(ti, li) in &points {
        stt += (ti - mean_t) * (ti - mean_t);
        stl += (ti - mean_t) * (li - mean_l);
    }
    let slope = stl / stt;
    let intercept = mean_l - slope * mean_t;
    let residual = (points
        .iter()
        .map(|&(ti, li)| {
            let e = li - (intercept + slope * ti);
            e * e
        })
        .sum::<f64>()
        / nf)
        .sqrt();
    Ok(ExponentialFit {
        k: intercept.exp(),
        mu: -slope,
        residual,
        samples: n,
        clipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct TurnpikeOptions {
    /// Threshold for the entry time; `None` uses
    /// `1.1·‖ȳ‖_∞ + 0.05·‖y₀‖_∞`.
    pub delta: Option<f64>,
    /// Fit window length; `None` uses `min(T/4, 2)`.
    pub fit_window: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Confirmed,
    NotConfirmed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnpikeReport {
    pub horizon: f64,
    pub delta: f64,
    pub entry_time: f64,
    pub entry_fit: Option<ExponentialFit>,
    pub exit_fit: Option<ExponentialFit>,
    /// `max(d_y + d_u)` over `[T/4, 3T/4]`.
    pub plateau: f64,
    /// `max d_y` over `[T/4, 3T/4]`.
    pub plateau_dy: f64,
    pub initial_distance: f64,
    pub optimal_cost: f64,
    pub steady_cost: f64,
    /// `J_T(u^T) − T·J_s(ū)`.
    pub cost_gap: f64,
    pub zero_control_cost: f64,
    pub steady_control_cost: f64,
    /// `J_T(u^T) ≤ J_T(0)` and `J_T(u^T) ≤ J_T(ū)`.
    pub sanity_bounds_hold: bool,
    pub verdict: Verdict,
    pub optimizer_iterations: usize,
    pub optimizer_grad_norm: f64,
    pub optimizer_converged: bool,
    pub stepsize: f64,
    #[serde(skip)]
    pub curves: DistanceCurves,
}

pub fn default_delta(problem: &DiscreteProblem, pair: &SteadyPair) -> f64 {
    1.1 * linf(&pair.state) + 0.05 * linf(&problem.initial)
}

/// Assembles every diagnostic for one optimized horizon.
pub fn turnpike_report(
    problem: &DiscreteProblem,
    result: &OptimizationResult,
    pair: &SteadyPair,
    opts: &TurnpikeOptions,
) -> Result<TurnpikeReport> {
    let horizon = problem.horizon();
    let curves = distance_curves(
        problem,
        &result.state,
        &result.control,
        &result.adjoint,
        pair,
    )?;
    let delta = opts.delta.unwrap_or_else(|| default_delta(problem, pair));
    let t_s = entry_time(&result.state, delta)?;
    let window = opts.fit_window.unwrap_or((horizon / 4.0).min(2.0));

    let entry_fit = fit_exponential_rates(&curves.t, &curves.dy, t_s, t_s + window).ok();
    let reversed_t: Vec<f64> = curves.t.iter().rev().map(|t| horizon - t).collect();
    let reversed_d: Vec<f64> = curves.dy.iter().rev().copied().collect();
    let exit_fit = fit_exponential_rates(&reversed_t, &reversed_d, 0.0, window).ok();

    let (lo, hi) = (0.25 * horizon, 0.75 * horizon);
    let plateau = curves
        .t
        .iter()
        .zip(curves.dy.iter().zip(&curves.du))
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .fold(0.0_f64, |m, (_, (a, b))| m.max(a + b));
    let plateau_dy = curves.max_dy_on(lo, hi);
    let initial_distance = curves.dy[0];

    let zero_control_cost = problem
        .evaluate_cost(&Control::zeros(problem.nx(), problem.nt()))?
        .total;
    let steady_control_cost = problem
        .evaluate_cost(&Control::constant_in_time(
            &pair.control,
            &problem.control_mask,
            problem.nt(),
        ))?
        .total;
    let optimal_cost = result.cost.total;
    let sanity_bounds_hold =
        optimal_cost <= zero_control_cost && optimal_cost <= steady_control_cost;

    let confirmed = entry_fit.is_some_and(|f| f.mu > 0.0) && plateau_dy <= 0.1 * initial_distance;
    Ok(TurnpikeReport {
        horizon,
        delta,
        entry_time: t_s,
        entry_fit,
        exit_fit,
        plateau,
        plateau_dy,
        initial_distance,
        optimal_cost,
        steady_cost: pair.cost,
        cost_gap: optimal_cost - horizon * pair.cost,
        zero_control_cost,
        steady_control_cost,
        sanity_bounds_hold,
        verdict: if confirmed {
            Verdict::Confirmed
        } else {
            Verdict::NotConfirmed
        },
        optimizer_iterations: result.iterations,
        optimizer_grad_norm: result.grad_norm(),
        optimizer_converged: result.termination == Termination::Converged,
        stepsize: result.stepsize,
        curves,
    })
}

/// Resolution policy for sweeps: `h` and `Δt` stay fixed, `nt` scales
/// with `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPolicy {
    pub nx: usize,
    pub dt: f64,
}

impl SweepPolicy {
    pub fn discretization(&self, horizon: f64) -> Result<DiscretizationSpec> {
        DiscretizationSpec::from_dt(self.nx, horizon, self.dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub horizon: f64,
    pub optimal_cost: f64,
    pub cost_over_horizon: f64,
    pub steady_cost: f64,
    pub gap: f64,
    /// `‖y_t‖_{L²((0,T)×Ω)}` by forward differences.
    pub yt_l2: f64,
    /// `(‖u^T‖_∞ + ‖y^T‖_∞)/(‖y₀‖_∞ + ‖z‖_∞)`.
    pub ratio: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// `None` on success, otherwise the optimizer failure.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    /// `"averages"` when `ω = Ω`, else `"upper-bound check only"`.
    pub averages_label: String,
    pub steady_cost: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, horizon: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.horizon == horizon)
    }
}

/// `‖y_t‖_{L²((0,T)×Ω)}` with forward differences.
pub fn time_derivative_norm(problem: &DiscreteProblem, y: &Trajectory) -> f64 {
    let dt = y.dt();
    let mut acc = 0.0;
    for k in 1..=y.nt() {
        let (a, b) = (y.snapshot(k - 1), y.snapshot(k));
        acc += a.iter().zip(b).map(|(p, c)| (c - p) * (c - p)).sum::<f64>();
    }
    (acc * problem.grid.h() / dt).sqrt()
}

/// Optimizes every horizon in `horizons` (rows run on a pool of `jobs`
/// threads) and tabulates averaged costs against the steady optimum.
pub fn averages_sweep(
    spec: &ProblemSpec,
    policy: SweepPolicy,
    horizons: &[f64],
    descent: &DescentOptions,
    steady: &SteadyOptions,
    jobs: usize,
) -> Result<SweepTable> {
    if horizons.is_empty() {
        return Err(Error::InvalidParameter("empty horizon list".into()));
    }
    let mut horizons = horizons.to_vec();
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();

    let base = DiscreteProblem::new(
        &spec.clone().with_horizon(horizons[0]),
        policy.discretization(horizons[0])?,
    )?;
    let pair = base.solve_steady_optimum(steady)?;
    let data_scale = linf(&base.initial) + linf(&base.target);

    let run_row = |horizon: f64| -> Result<SweepRow> {
        let problem = DiscreteProblem::new(
            &spec.clone().with_horizon(horizon),
            policy.discretization(horizon)?,
        )?;
        Ok(match problem.minimize_from_zero(descent) {
            Ok(r) => SweepRow {
                horizon,
                optimal_cost: r.cost.total,
                cost_over_horizon: r.cost.total / horizon,
                steady_cost: pair.cost,
                gap: r.cost.total - horizon * pair.cost,
                yt_l2: time_derivative_norm(&problem, &r.state),
                ratio: (r.control.sup_norm() + r.state.sup_norm()) / data_scale,
                iterations: r.iterations,
                grad_norm: r.grad_norm(),
                failure: (r.termination != Termination::Converged)
                    .then(|| "maximum iterations reached".to_owned()),
            },
            Err(e) => SweepRow {
                horizon,
                optimal_cost: f64::NAN,
                cost_over_horizon: f64::NAN,
                steady_cost: pair.cost,
                gap: f64::NAN,
                yt_l2: f64::NAN,
                ratio: f64::NAN,
                iterations: 0,
                grad_norm: f64::NAN,
                failure: Some(e.to_string()),
            },
        })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        horizons
            .par_iter()
            .map(|&t| run_row(t))
            .collect::<Result<Vec<_>>>()
    })?;

    Ok(SweepTable {
        averages_label: if spec.controls_everywhere() {
            "averages".into()
        } else {
            "upper-bound check only".into()
        },
        steady_cost: pair.cost,
        rows,
    })
}

/// Terms of `J_T = ∫J_s(−Δy + f(y))dt + ½∫∫|y_t|² + ½[‖∇y‖² + 2∫F(y)]₀^T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Representation {
    pub steady_integral: f64,
    pub time_derivative: f64,
    pub boundary: f64,
    pub reconstructed: f64,
    pub direct: f64,
    /// `|reconstructed − direct| / max(|direct|, 1)`.
    pub mismatch: f64,
}

/// Evaluates the representation formula for `J_T(u)`. Only meaningful when
/// the control acts on the whole domain.
pub fn representation_decomposition(
    problem: &DiscreteProblem,
    u: &Control,
) -> Result<Representation> {
    if !problem.control_mask.is_full() {
        return Err(Error::NotApplicable(
            "representation formula requires the control region to be the whole domain".into(),
        ));
    }
    let y = problem.solve_forward(u)?;
    let direct = problem.cost_of(u, &y).total;
    let grid = &problem.grid;
    let f = &problem.spec.nonlinearity;
    let nx = problem.nx();
    let dt = problem.dt;

    let mut lap = vec![0.0; nx];
    let mut steady_control = vec![0.0; nx];
    let mut steady_integral = 0.0;
    let mut yt_sq = 0.0;
    for k in 1..=problem.nt() {
        let (prev, cur) = (y.snapshot(k - 1), y.snapshot(k));
        steady_operator(grid, f, cur, &mut lap, &mut steady_control);
        let (c, t) = problem.steady_cost_of_state(&steady_control, cur);
        steady_integral += c + t;
        yt_sq += prev
            .iter()
            .zip(cur)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>();
    }
    steady_integral *= dt;
    let time_derivative = 0.5 * yt_sq * grid.h() / dt;
    let boundary = 0.5 * (energy(grid, f, y.last()) - energy(grid, f, y.snapshot(0)));
    let reconstructed = steady_integral + time_derivative + boundary;
    Ok(Representation {
        steady_integral,
        time_derivative,
        boundary,
        reconstructed,
        direct,
        mismatch: (reconstructed - direct).abs() / direct.abs().max(1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiOptimal {
    #[serde(skip)]
    pub control: Control,
    pub switch_time: f64,
    pub gain: f64,
    pub cost: f64,
    pub optimal_cost: Option<f64>,
    /// `cost − optimal_cost`.
    pub excess: Option<f64>,
}

/// Builds the approach-then-hold control: on `[0, τ)` the feedback
/// `u = ū − κ(y − ȳ)` on `ω`, afterwards `u ≡ ū`. No final arc is needed
/// since the cost has no terminal constraint.
pub fn quasi_optimal_strategy(
    problem: &DiscreteProblem,
    pair: &SteadyPair,
    switch_time: f64,
    gain: f64,
    optimal_cost: Option<f64>,
) -> Result<QuasiOptimal> {
    let horizon = problem.horizon();
    if !(switch_time > 0.0 && switch_time < horizon) {
        return Err(Error::InvalidParameter(format!(
            "switch time {switch_time} must lie in (0, {horizon})"
        )));
    }
    let nx = problem.nx();
    let nt = problem.nt();
    crate::error::ensure_len("quasi-optimal steady control", nx, pair.control.len())?;
    crate::error::ensure_len("quasi-optimal steady state", nx, pair.state.len())?;
    let f = &problem.spec.nonlinearity;
    let solver = crate::grid::ShiftedLaplacian::new(&problem.grid, 1.0 / problem.dt)?;
    let cw = problem.control_mask.weights();
    let hold = problem.control_mask.apply(&pair.control);

    let mut control = Control::zeros(nx, nt);
    let mut y = problem.initial.clone();
    let mut rhs = vec![0.0; nx];
    let mut next = vec![0.0; nx];
    let inv_dt = 1.0 / problem.dt;
    for k in 0..nt {
        let t = k as f64 * problem.dt;
        let uk = control.step_mut(k);
        if t < switch_time {
            for i in 0..nx {
                uk[i] = cw[i] * (pair.control[i] - gain * (y[i] - pair.state[i]));
            }
        } else {
            uk.copy_from_slice(&hold);
        }
        for i in 0..nx {
            rhs[i] = y[i] * inv_dt - f.value(y[i]) + uk[i];
        }
        solver.solve_into(&rhs, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: k + 1,
                suggested_dt: crate::parabolic::suggested_dt(f, linf(&problem.initial), problem.dt),
            });
        }
        std::mem::swap(&mut y, &mut next);
    }
    let cost = problem.evaluate_cost(&control)?.total;
    Ok(QuasiOptimal {
        control,
        switch_time,
        gain,
        cost,
        optimal_cost,
        excess: optimal_cost.map(|c| cost - c),
    })
}
