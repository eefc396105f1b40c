//! Steady problem: Newton solves of `−Δ_h y + f(y) = u χ_ω`, the steady cost
//! and its optimum by gradient descent with Armijo backtracking.
//!
//! The optimum found is a local minimizer reached from `ū = 0`. For large
//! targets the steady problem can have several minimizers and only the basin
//! of the zero control is explored.

use serde::Serialize;

use crate::discrete::DiscreteProblem;
use crate::error::{Error, Result};
use crate::grid::{solve_tridiagonal, Grid};
use crate::parabolic::steady_operator;
use crate::problem::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    pub state: Vec<f64>,
    pub iterations: usize,
    /// `‖G(y_k)‖_{L²}` for every iterate, the initial guess included.
    pub residuals: Vec<f64>,
}

/// Residual `G(y) = −Δ_h y + f(y) − u` into `out`.
fn elliptic_residual(
    grid: &Grid,
    f: &Nonlinearity,
    y: &[f64],
    u: &[f64],
    lap: &mut [f64],
    out: &mut [f64],
) {
    steady_operator(grid, f, y, lap, out);
    for (o, ui) in out.iter_mut().zip(u) {
        *o -= ui;
    }
}

/// Damped Newton iteration for `−Δ_h y + f(y) = u`, with `u` already
/// restricted to the control region. The Jacobian `−Δ_h + diag f'(y)` is
/// tridiagonal and SPD for monotone `f`.
pub fn newton_elliptic(
    grid: &Grid,
    f: &Nonlinearity,
    u: &[f64],
    guess: &[f64],
    opts: NewtonOptions,
) -> Result<NewtonSolution> {
    grid.check("newton control", u)?;
    grid.check("newton guess", guess)?;
    let n = grid.nx();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let off = vec![-inv_h2; n];
    let mut y = guess.to_vec();
    let mut lap = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];

    elliptic_residual(grid, f, &y, u, &mut lap, &mut g);
    let mut res = grid.l2(&g);
    let mut residuals = vec![res];

    for it in 0..opts.max_iters {
        if res <= opts.tol {
            return Ok(NewtonSolution {
                state: y,
                iterations: it,
                residuals,
            });
        }
        let diag: Vec<f64> = y.iter().map(|&v| 2.0 * inv_h2 + f.derivative(v)).collect();
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = solve_tridiagonal(&off, &diag, &off, &neg_g);

        let mut damping = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = y[i] + damping * step[i];
            }
            elliptic_residual(grid, f, &trial, u, &mut lap, &mut g_trial);
            let r = grid.l2(&g_trial);
            if r.is_finite() && r < res {
                accepted = true;
                res = r;
                break;
            }
            damping *= 0.5;
        }
        if !accepted {
            // The residual cannot be evaluated more accurately than the
            // rounding error of its largest terms.
            if res <= roundoff_floor(grid, f, &y, u) {
                return Ok(NewtonSolution {
                    state: y,
                    iterations: it,
                    residuals,
                });
            }
            return Err(Error::NewtonFailure {
                iterations: it + 1,
                residual: res,
            });
        }
        std::mem::swap(&mut y, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        residuals.push(res);
    }
    if res <= opts.tol {
        Ok(NewtonSolution {
            iterations: residuals.len() - 1,
            state: y,
            residuals,
        })
    } else {
        Err(Error::NewtonFailure {
            iterations: opts.max_iters,
            residual: res,
        })
    }
}

fn roundoff_floor(grid: &Grid, f: &Nonlinearity, y: &[f64], u: &[f64]) -> f64 {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let scale: f64 = y
        .iter()
        .zip(u)
        .map(|(&v, &w)| 4.0 * v.abs() * inv_h2 + f.value(v).abs() + w.abs())
        .fold(0.0, f64::max);
    64.0 * f64::EPSILON * scale * grid.domain().length().sqrt()
}

/// Steady cost and its two terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyCost {
    pub total: f64,
    pub control: f64,
    pub tracking: f64,
    #[serde(skip)]
    pub state: Vec<f64>,
}

/// Steady optimum `(ū, ȳ, q̄)` with its cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyPair {
    pub control: Vec<f64>,
    pub state: Vec<f64>,
    pub adjoint: Vec<f64>,
    pub cost: f64,
    pub control_cost: f64,
    pub tracking_cost: f64,
    pub residual: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyOptions {
    /// First trial step of the backtracking search.
    pub initial_step: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// State solves inside the descent. Tighter than the standalone
    /// default so state errors stay below the gradient tolerance.
    pub newton: NewtonOptions,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            max_iters: 20_000,
            grad_tol: 1e-11,
            armijo: 1e-4,
            newton: NewtonOptions {
                tol: 1e-12,
                ..NewtonOptions::default()
            },
        }
    }
}

impl DiscreteProblem {
    /// Solves `−Δ_h y + f(y) = u·χ_ω` from a zero initial guess.
    pub fn solve_elliptic(&self, u: &[f64]) -> Result<NewtonSolution> {
        self.solve_elliptic_from(u, &vec![0.0; self.nx()], NewtonOptions::default())
    }

    pub fn solve_elliptic_from(
        &self,
        u: &[f64],
        guess: &[f64],
        opts: NewtonOptions,
    ) -> Result<NewtonSolution> {
        self.grid.check("solve_elliptic control", u)?;
        let masked = self.control_mask.apply(u);
        newton_elliptic(&self.grid, &self.spec.nonlinearity, &masked, guess, opts)
    }

    /// Terms of `½‖u‖²_{L²(ω)} + (β/2)‖y − z‖²_{L²(ω₀)}` for a given state.
    pub fn steady_cost_of_state(&self, u: &[f64], y: &[f64]) -> (f64, f64) {
        let h = self.grid.h();
        let cw = self.control_mask.weights();
        let ow = self.observation_mask.weights();
        let control = 0.5 * h * u.iter().zip(cw).map(|(a, w)| w * a * a).sum::<f64>();
        let tracking = 0.5
            * self.spec.beta
            * h
            * y.iter()
                .zip(&self.target)
                .zip(ow)
                .map(|((a, z), w)| w * (a - z) * (a - z))
                .sum::<f64>();
        (control, tracking)
    }

    pub fn steady_cost(&self, u: &[f64]) -> Result<SteadyCost> {
        let y = self.solve_elliptic(u)?.state;
        Ok(self.cost_from_state(u, y))
    }

    fn cost_from_state(&self, u: &[f64], y: Vec<f64>) -> SteadyCost {
        let (control, tracking) = self.steady_cost_of_state(u, &y);
        SteadyCost {
            total: control + tracking,
            control,
            tracking,
            state: y,
        }
    }

    /// Solves `(−Δ_h + f'(ȳ)) q = β χ_ω₀ (ȳ − z)`.
    pub fn steady_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.grid.check("steady_adjoint state", y)?;
        let n = self.nx();
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        let f = &self.spec.nonlinearity;
        let off = vec![-inv_h2; n];
        let diag: Vec<f64> = y.iter().map(|&v| 2.0 * inv_h2 + f.derivative(v)).collect();
        let rhs: Vec<f64> = (0..n)
            .map(|i| self.spec.beta * self.observation_mask.weights()[i] * (y[i] - self.target[i]))
            .collect();
        Ok(solve_tridiagonal(&off, &diag, &off, &rhs))
    }

    /// Gradient descent on the steady cost from `ū = 0` with Armijo
    /// backtracking. The gradient is `(u + q̄)χ_ω`.
    pub fn solve_steady_optimum(&self, opts: &SteadyOptions) -> Result<SteadyPair> {
        let n = self.nx();
        let mask = self.control_mask.weights().to_vec();
        let newton = opts.newton;

        let mut u = vec![0.0; n];
        let mut cost = self.cost_from_state(
            &u,
            self.solve_elliptic_from(&u, &vec![0.0; n], newton)?.state,
        );
        let mut history = vec![cost.total];
        let mut step = opts.initial_step;
        let mut iterations = 0;
        let mut converged = false;
        let mut adjoint;
        let mut grad = vec![0.0; n];
        let mut grad_norm;

        loop {
            adjoint = self.steady_adjoint(&cost.state)?;
            for i in 0..n {
                grad[i] = mask[i] * (u[i] + adjoint[i]);
            }
            grad_norm = self.grid.l2(&grad);
            if grad_norm <= opts.grad_tol {
                converged = true;
                break;
            }
            if iterations >= opts.max_iters {
                break;
            }
            let g2 = grad_norm * grad_norm;
            // Below this, cost differences are rounding noise and the
            // gradient norm decides acceptance instead.
            let noise = 64.0 * f64::EPSILON * cost.total.abs().max(1.0);
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = (0..n).map(|i| u[i] - step * grad[i]).collect();
                if trial == u {
                    break;
                }
                if let Ok(sol) = self.solve_elliptic_from(&trial, &cost.state, newton) {
                    let c = self.cost_from_state(&trial, sol.state);
                    let decrease = cost.total - c.total;
                    if decrease >= opts.armijo * step * g2 && decrease > 0.0 {
                        accepted = Some((trial, c));
                        break;
                    }
                    if decrease.abs() <= noise {
                        let q = self.steady_adjoint(&c.state)?;
                        let g: Vec<f64> = (0..n).map(|i| mask[i] * (trial[i] + q[i])).collect();
                        if self.grid.l2(&g) < grad_norm {
                            accepted = Some((trial, c));
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            match accepted {
                Some((trial, c)) => {
                    u = trial;
                    cost = c;
                    history.push(cost.total);
                    iterations += 1;
                    step *= 2.0;
                }
                None => break,
            }
        }
        let mut pair = SteadyPair {
            control: self.control_mask.apply(&u),
            state: cost.state,
            adjoint,
            cost: cost.total,
            control_cost: cost.control,
            tracking_cost: cost.tracking,
            residual: 0.0,
            gradient_norm: grad_norm,
            iterations,
            converged,
            cost_history: history,
        };
        pair.residual = self.steady_optimality_residual(&pair)?;
        Ok(pair)
    }

    /// Largest of the state-equation residual, the adjoint residual and
    /// `‖ū + q̄‖_{L²(ω)}`, all in the discrete `L²` norm.
    pub fn steady_optimality_residual(&self, pair: &SteadyPair) -> Result<f64> {
        let grid = &self.grid;
        let n = self.nx();
        grid.check("residual control", &pair.control)?;
        grid.check("residual state", &pair.state)?;
        grid.check("residual adjoint", &pair.adjoint)?;
        let f = &self.spec.nonlinearity;
        let cw = self.control_mask.weights();
        let ow = self.observation_mask.weights();
        let mut lap = vec![0.0; n];
        let mut r = vec![0.0; n];

        let u = self.control_mask.apply(&pair.control);
        elliptic_residual(grid, f, &pair.state, &u, &mut lap, &mut r);
        let state_res = grid.l2(&r);

        grid.laplacian_into(&pair.adjoint, &mut lap);
        for i in 0..n {
            r[i] = -lap[i] + f.derivative(pair.state[i]) * pair.adjoint[i]
                - self.spec.beta * ow[i] * (pair.state[i] - self.target[i]);
        }
        let adjoint_res = grid.l2(&r);

        for i in 0..n {
            r[i] = cw[i] * (pair.control[i] + pair.adjoint[i]);
        }
        let stationarity = grid.l2(&r);
        Ok(state_res.max(adjoint_res).max(stationarity))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{DiscretizationSpec, Interval, ProblemSpec, Profile};

    fn whole_domain(f: Nonlinearity, nx: usize) -> DiscreteProblem {
        let spec = ProblemSpec {
            domain: Interval::new(0.0, 1.0),
            control_region: Interval::new(0.0, 1.0),
            observation_region: Interval::new(0.0, 1.0),
            beta: 1.0,
            horizon: 1.0,
            target: Profile::constant(0.0),
            initial: Profile::constant(0.0),
            nonlinearity: f,
        };
        DiscreteProblem::new(&spec, DiscretizationSpec::new(nx, 1).unwrap()).unwrap()
    }

    #[test]
    fn linear_elliptic_is_exact_on_quadratic() {
        let p = whole_domain(Nonlinearity::zero(), 99);
        let y = p.solve_elliptic(&vec![1.0; 99]).unwrap().state;
        for (i, yi) in y.iter().enumerate() {
            let x = p.grid.x(i);
            assert!((yi - x * (1.0 - x) / 2.0).abs() <= 1e-10);
        }
        assert!((y[49] - 0.125).abs() <= 1e-10);
    }

    #[test]
    fn zero_control_gives_zero_state() {
        let p = whole_domain(Nonlinearity::cubic(), 40);
        let sol = p.solve_elliptic(&vec![0.0; 40]).unwrap();
        assert!(sol.state.iter().all(|&v| v == 0.0));
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn cubic_state_is_below_linear_state() {
        let p = whole_domain(Nonlinearity::cubic(), 80);
        let y = p.solve_elliptic(&vec![1.0; 80]).unwrap().state;
        for (i, yi) in y.iter().enumerate() {
            let x = p.grid.x(i);
            assert!(*yi >= 0.0 && *yi <= x * (1.0 - x) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn newton_converges_for_large_forcing() {
        let p = whole_domain(Nonlinearity::cubic(), 60);
        let sol = p.solve_elliptic(&vec![5000.0; 60]).unwrap();
        assert!(sol.iterations > 2);
        let fails = newton_elliptic(
            &p.grid,
            &p.spec.nonlinearity,
            &vec![5000.0; 60],
            &vec![0.0; 60],
            NewtonOptions {
                tol: 1e-10,
                max_iters: 1,
            },
        );
        assert!(matches!(fails, Err(Error::NewtonFailure { .. })));
    }

    #[test]
    fn steady_cost_of_zero_control() {
        let p = whole_domain(Nonlinearity::cubic(), 30);
        assert_eq!(p.steady_cost(&vec![0.0; 30]).unwrap().total, 0.0);
    }

    #[test]
    fn zero_target_gives_zero_optimum() {
        let p = whole_domain(Nonlinearity::cubic(), 30);
        let pair = p.solve_steady_optimum(&SteadyOptions::default()).unwrap();
        assert!(pair.converged);
        assert_eq!(pair.cost, 0.0);
        assert!(pair.control.iter().chain(&pair.state).all(|&v| v == 0.0));
        assert_eq!(pair.residual, 0.0);
    }

    #[test]
    fn zero_weight_gives_zero_control() {
        let mut p = whole_domain(Nonlinearity::cubic(), 30);
        p.spec.beta = 0.0;
        p.target = vec![3.0; 30];
        let pair = p.solve_steady_optimum(&SteadyOptions::default()).unwrap();
        assert!(pair.control.iter().all(|&v| v == 0.0));
    }
}
