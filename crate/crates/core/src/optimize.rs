//! Time-horizon cost, its adjoint gradient and constant-step gradient
//! descent.
//!
//! The discrete cost is
//!
//! ```text
//! J_T(U) = ½ Δt h Σ_{k<nt} Σ_{ω} U_k² + (β/2) Δt h Σ_{k=1}^{nt} Σ_{ω₀} (Y_k − z)²
//! ```
//!
//! and its gradient with respect to the same weighted inner product is
//! `(U_k + q_k) χ_ω`, with `q` from [`DiscreteProblem::solve_adjoint`].

use serde::Serialize;

use crate::discrete::DiscreteProblem;
use crate::error::{ensure_len, Error, Result};
use crate::parabolic::{Control, Trajectory};

/// Relative size of cost changes treated as rounding noise by the
/// divergence detector.
pub const COST_NOISE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub control: f64,
    pub tracking: f64,
}

/// Cost, gradient and the trajectories used to compute them.
#[derive(Debug, Clone)]
pub struct GradientEval {
    pub cost: CostBreakdown,
    pub gradient: Control,
    pub state: Trajectory,
    pub adjoint: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum StepSize {
    /// `1/(1 + β/λ_h²)`, the inverse of a bound on the cost Hessian.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescentOptions {
    pub stepsize: StepSize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Halve-and-restart attempts after divergence or blow-up.
    pub max_restarts: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            stepsize: StepSize::Auto,
            max_iters: 5000,
            grad_tol: 1e-6,
            max_restarts: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

/// Outcome of a gradient-descent run. The control is a stationary point,
/// not necessarily a global minimizer.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub control: Control,
    pub state: Trajectory,
    pub adjoint: Trajectory,
    pub cost: CostBreakdown,
    pub cost_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    pub termination: Termination,
    pub stepsize: f64,
    pub iterations: usize,
    pub restarts: usize,
}

impl OptimizationResult {
    pub fn grad_norm(&self) -> f64 {
        *self.grad_norm_history.last().unwrap_or(&f64::NAN)
    }
}

impl DiscreteProblem {
    pub fn cost_of(&self, u: &Control, y: &Trajectory) -> CostBreakdown {
        let h = self.grid.h();
        let dt = self.dt;
        let cw = self.control_mask.weights();
        let ow = self.observation_mask.weights();
        let mut control = 0.0;
        for k in 0..self.nt() {
            control += u
                .step(k)
                .iter()
                .zip(cw)
                .map(|(a, w)| w * a * a)
                .sum::<f64>();
        }
        let mut tracking = 0.0;
        for k in 1..=self.nt() {
            tracking += y
                .snapshot(k)
                .iter()
                .zip(&self.target)
                .zip(ow)
                .map(|((a, z), w)| w * (a - z) * (a - z))
                .sum::<f64>();
        }
        let control = 0.5 * dt * h * control;
        let tracking = 0.5 * self.spec.beta * dt * h * tracking;
        CostBreakdown {
            total: control + tracking,
            control,
            tracking,
        }
    }

    pub fn evaluate_cost(&self, u: &Control) -> Result<CostBreakdown> {
        let y = self.solve_forward(u)?;
        Ok(self.cost_of(u, &y))
    }

    pub fn gradient(&self, u: &Control) -> Result<GradientEval> {
        let state = self.solve_forward(u)?;
        let cost = self.cost_of(u, &state);
        let adjoint = self.solve_adjoint(&state)?;
        let gradient = self.gradient_from_adjoint(u, &adjoint);
        Ok(GradientEval {
            cost,
            gradient,
            state,
            adjoint,
        })
    }

    fn gradient_from_adjoint(&self, u: &Control, q: &Trajectory) -> Control {
        let mut g = Control::zeros(self.nx(), self.nt());
        let support = self.control_mask.support();
        for k in 0..self.nt() {
            let (uk, qk) = (u.step(k), q.snapshot(k));
            let gk = g.step_mut(k);
            for i in support.clone() {
                gk[i] = uk[i] + qk[i];
            }
        }
        g
    }

    /// Discrete `L²((0,T)×Ω)` norm of a control-shaped field.
    pub fn control_norm(&self, u: &Control) -> f64 {
        u.l2_norm(self.dt, self.grid.h())
    }

    pub fn default_stepsize(&self) -> f64 {
        let lambda = self.grid.principal_eigenvalue();
        1.0 / (1.0 + self.spec.beta / (lambda * lambda))
    }

    fn resolve_stepsize(&self, mode: StepSize) -> Result<f64> {
        let s = match mode {
            StepSize::Auto => self.default_stepsize(),
            StepSize::Fixed(s) => s,
        };
        if s > 0.0 && s.is_finite() {
            Ok(s)
        } else {
            Err(Error::InvalidParameter(format!("stepsize {s} must be > 0")))
        }
    }

    /// Plain gradient descent `u ← u − s·∇J(u)` with a fixed stepsize.
    /// Fails with [`Error::Divergence`] once the cost has increased by more
    /// than [`COST_NOISE`] on three consecutive iterations.
    pub fn gradient_descent(
        &self,
        u0: &Control,
        stepsize: f64,
        max_iters: usize,
        grad_tol: f64,
    ) -> Result<OptimizationResult> {
        if !(stepsize > 0.0 && stepsize.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "stepsize {stepsize} must be > 0"
            )));
        }
        ensure_len("initial control steps", self.nt(), u0.nt())?;
        ensure_len("initial control nodes", self.nx(), u0.nx())?;
        u0.check_support(&self.control_mask)?;

        let mut u = u0.clone();
        let mut cost_history = Vec::<f64>::new();
        let mut grad_norm_history = Vec::new();
        let mut increases = 0;
        let mut iteration = 0;
        loop {
            let eval = self.gradient(&u)?;
            let gnorm = self.control_norm(&eval.gradient);
            if let Some(&prev) = cost_history.last() {
                if eval.cost.total > prev + COST_NOISE * prev.abs().max(1.0) {
                    increases += 1;
                    if increases >= 3 {
                        return Err(Error::Divergence {
                            iteration,
                            stepsize,
                        });
                    }
                } else {
                    increases = 0;
                }
            }
            cost_history.push(eval.cost.total);
            grad_norm_history.push(gnorm);
            let termination = if gnorm <= grad_tol {
                Some(Termination::Converged)
            } else if iteration >= max_iters {
                Some(Termination::MaxIterations)
            } else {
                None
            };
            if let Some(termination) = termination {
                return Ok(OptimizationResult {
                    control: u,
                    state: eval.state,
                    adjoint: eval.adjoint,
                    cost: eval.cost,
                    cost_history,
                    grad_norm_history,
                    termination,
                    stepsize,
                    iterations: iteration,
                    restarts: 0,
                });
            }
            u.axpy(-stepsize, &eval.gradient);
            iteration += 1;
        }
    }

    /// Gradient descent from `u0` that halves the stepsize and restarts
    /// after divergence or blow-up, up to `opts.max_restarts` times.
    pub fn minimize(&self, u0: &Control, opts: &DescentOptions) -> Result<OptimizationResult> {
        let mut stepsize = self.resolve_stepsize(opts.stepsize)?;
        let mut restarts = 0;
        loop {
            match self.gradient_descent(u0, stepsize, opts.max_iters, opts.grad_tol) {
                Ok(mut result) => {
                    result.restarts = restarts;
                    return Ok(result);
                }
                Err(e @ (Error::Divergence { .. } | Error::BlowUp { .. })) => {
                    if restarts >= opts.max_restarts {
                        return Err(e);
                    }
                    restarts += 1;
                    stepsize *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// [`Self::minimize`] from `u ≡ 0`.
    pub fn minimize_from_zero(&self, opts: &DescentOptions) -> Result<OptimizationResult> {
        self.minimize(&Control::zeros(self.nx(), self.nt()), opts)
    }

    /// Residual of the discrete optimality system with the control replaced
    /// by `−q χ_ω`: the largest of the space-time `L²` norms of the forward
    /// and backward scheme residuals.
    pub fn optimality_system_residual(&self, y: &Trajectory, q: &Trajectory) -> Result<f64> {
        let (nx, nt) = (self.nx(), self.nt());
        for t in [y, q] {
            ensure_len("optimality system steps", nt, t.nt())?;
            ensure_len("optimality system nodes", nx, t.nx())?;
        }
        let f = &self.spec.nonlinearity;
        let cw = self.control_mask.weights();
        let ow = self.observation_mask.weights();
        let dt = self.dt;
        let mut lap = vec![0.0; nx];
        let mut forward = 0.0;
        let mut backward = 0.0;
        for k in 0..nt {
            let (y0, y1) = (y.snapshot(k), y.snapshot(k + 1));
            let (q0, q1) = (q.snapshot(k), q.snapshot(k + 1));
            self.grid.laplacian_into(y1, &mut lap);
            forward += (0..nx)
                .map(|i| {
                    let r = (y1[i] - y0[i]) / dt - lap[i] + f.value(y0[i]) + cw[i] * q0[i];
                    r * r
                })
                .sum::<f64>();
            self.grid.laplacian_into(q0, &mut lap);
            backward += (0..nx)
                .map(|i| {
                    let r = (q0[i] - q1[i]) / dt - lap[i] + f.derivative(y1[i]) * q1[i]
                        - self.spec.beta * ow[i] * (y1[i] - self.target[i]);
                    r * r
                })
                .sum::<f64>();
        }
        let w = dt * self.grid.h();
        Ok((w * forward).sqrt().max((w * backward).sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{DiscretizationSpec, Interval, Nonlinearity, ProblemSpec, Profile};

    fn small(beta: f64, z: f64, y0: Profile) -> DiscreteProblem {
        let spec = ProblemSpec {
            domain: Interval::new(0.0, 1.0),
            control_region: Interval::new(0.0, 1.0),
            observation_region: Interval::new(0.0, 1.0),
            beta,
            horizon: 2.0,
            target: Profile::constant(z),
            initial: y0,
            nonlinearity: Nonlinearity::cubic(),
        };
        DiscreteProblem::new(&spec, DiscretizationSpec::new(15, 40).unwrap()).unwrap()
    }

    #[test]
    fn zero_everything_costs_nothing() {
        let p = small(1000.0, 0.0, Profile::constant(0.0));
        assert_eq!(p.evaluate_cost(&Control::zeros(15, 40)).unwrap().total, 0.0);
    }

    #[test]
    fn zero_state_tracking_cost() {
        let p = small(1000.0, 1.0, Profile::constant(0.0));
        let c = p.evaluate_cost(&Control::zeros(15, 40)).unwrap();
        // (β/2)·T·h·nx, the discrete measure of (0,1) being 1 − h.
        let expected = 500.0 * 2.0 * p.grid.h() * 15.0;
        assert!((c.total - expected).abs() <= 1e-9 * expected);
        assert!((c.total - 1000.0).abs() <= 1000.0 * p.grid.h() + 1e-9);
        assert_eq!(c.control, 0.0);
    }

    #[test]
    fn gradient_is_control_without_tracking() {
        let p = small(0.0, 1.0, Profile::sine(2.0));
        let u = Control::from_fn(&p.grid, &p.control_mask, 40, p.dt, |t, x| t * x - 0.3);
        let g = p.gradient(&u).unwrap().gradient;
        assert_eq!(g, u);
    }

    #[test]
    fn descent_without_tracking_is_geometric() {
        let p = small(0.0, 1.0, Profile::sine(2.0));
        let u0 = Control::from_fn(&p.grid, &p.control_mask, 40, p.dt, |t, x| 1.0 + t - x);
        let s = 0.3;
        let k = 7;
        let r = p.gradient_descent(&u0, s, k, 0.0).unwrap();
        assert_eq!(r.iterations, k);
        let factor = (1.0 - s).powi(k as i32);
        for (a, b) in r.control.values().iter().zip(u0.values()) {
            assert!((a - factor * b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn descent_stops_immediately_at_zero() {
        let p = small(10.0, 0.0, Profile::constant(0.0));
        let r = p.minimize_from_zero(&DescentOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.termination, Termination::Converged);
        assert_eq!(r.cost.total, 0.0);
    }

    #[test]
    fn huge_stepsize_diverges_then_recovers() {
        let p = small(10.0, 1.0, Profile::constant(2.0));
        let err = p
            .gradient_descent(&Control::zeros(15, 40), 5.0, 200, 1e-8)
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
        let opts = DescentOptions {
            stepsize: StepSize::Fixed(5.0),
            max_restarts: 5,
            ..DescentOptions::default()
        };
        let r = p.minimize_from_zero(&opts).unwrap();
        assert!(r.restarts >= 1);
        assert_eq!(r.termination, Termination::Converged);
    }

    #[test]
    fn converged_result_satisfies_optimality_system() {
        let p = small(10.0, 1.0, Profile::constant(2.0));
        let opts = DescentOptions {
            grad_tol: 1e-8,
            ..DescentOptions::default()
        };
        let r = p.minimize_from_zero(&opts).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.grad_norm() <= 1e-8);
        let res = p.optimality_system_residual(&r.state, &r.adjoint).unwrap();
        assert!(res <= 10.0 * opts.grad_tol, "residual {res}");
        // Costs never go up under the default stepsize.
        assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
        let zero = p.evaluate_cost(&Control::zeros(15, 40)).unwrap().total;
        assert!(r.cost.total <= zero);
    }

    #[test]
    fn rejects_control_off_support() {
        let spec = ProblemSpec::reference().with_horizon(0.01);
        let p = DiscreteProblem::new(&spec, DiscretizationSpec::new(9, 10).unwrap()).unwrap();
        let mut u = Control::zeros(9, 10);
        u.step_mut(0)[8] = 1.0;
        assert!(p.gradient_descent(&u, 0.1, 3, 1e-6).is_err());
    }
}
