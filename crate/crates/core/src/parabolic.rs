//! Semi-implicit time stepping of the state equation, the exact discrete
//! adjoint, and the discrete energy identity.
//!
//! One step of the forward scheme reads
//!
//! ```text
//! (Y_{k+1} − Y_k)/Δt − Δ_h Y_{k+1} + f(Y_k) = U_k χ_ω,
//! ```
//!
//! i.e. implicit diffusion and explicit reaction. With `M = I/Δt − Δ_h` the
//! backward sweep
//!
//! ```text
//! q_nt = 0,
//! M q_k = (I/Δt − f'(Y_{k+1})) q_{k+1} + β χ_ω₀ (Y_{k+1} − z),
//! ```
//!
//! is the transpose of the linearized forward map, so `u + q χ_ω` is the
//! exact gradient of the discrete cost (states `Y_1..Y_nt` tracked, controls
//! `U_0..U_{nt−1}` penalized, all with weight `Δt·h`).

use serde::Serialize;

use crate::discrete::DiscreteProblem;
use crate::error::{ensure_len, Error, Result};
use crate::grid::{linf, Grid, Mask, ShiftedLaplacian};
use crate::problem::{DiscretizationSpec, Nonlinearity, ProblemSpec};

/// `nt + 1` snapshots on a uniform time grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    nx: usize,
    nt: usize,
    dt: f64,
    data: Vec<f64>,
    /// Free-form note on what produced the trajectory.
    pub provenance: String,
}

impl Trajectory {
    fn zeros(nx: usize, nt: usize, dt: f64, provenance: impl Into<String>) -> Self {
        Self {
            nx,
            nt,
            dt,
            data: vec![0.0; (nt + 1) * nx],
            provenance: provenance.into(),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn snapshot(&self, k: usize) -> &[f64] {
        &self.data[k * self.nx..(k + 1) * self.nx]
    }

    fn snapshot_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.nx..(k + 1) * self.nx]
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.nx)
    }

    pub fn last(&self) -> &[f64] {
        self.snapshot(self.nt)
    }

    /// Sup norm over all space-time nodes.
    pub fn sup_norm(&self) -> f64 {
        linf(&self.data)
    }
}

/// Piecewise-constant control: `U_k` acts on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    nx: usize,
    nt: usize,
    data: Vec<f64>,
}

impl Control {
    pub fn zeros(nx: usize, nt: usize) -> Self {
        Self {
            nx,
            nt,
            data: vec![0.0; nx * nt],
        }
    }

    /// Builds a control from row-major values, rejecting entries off `mask`.
    pub fn from_values(nx: usize, nt: usize, data: Vec<f64>, mask: &Mask) -> Result<Self> {
        ensure_len("control values", nx * nt, data.len())?;
        ensure_len("control mask", nx, mask.weights().len())?;
        let c = Self { nx, nt, data };
        c.check_support(mask)?;
        Ok(c)
    }

    /// `U_k(x_i) = g(t_k, x_i)` on the mask support, zero elsewhere.
    pub fn from_fn(
        grid: &Grid,
        mask: &Mask,
        nt: usize,
        dt: f64,
        g: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let nx = grid.nx();
        let mut data = vec![0.0; nx * nt];
        for k in 0..nt {
            let t = k as f64 * dt;
            for i in mask.support() {
                data[k * nx + i] = g(t, grid.x(i));
            }
        }
        Self { nx, nt, data }
    }

    /// The same spatial profile at every step, masked.
    pub fn constant_in_time(profile: &[f64], mask: &Mask, nt: usize) -> Self {
        let masked = mask.apply(profile);
        let nx = masked.len();
        let mut data = Vec::with_capacity(nx * nt);
        for _ in 0..nt {
            data.extend_from_slice(&masked);
        }
        Self { nx, nt, data }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn step(&self, k: usize) -> &[f64] {
        &self.data[k * self.nx..(k + 1) * self.nx]
    }

    pub fn step_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.nx..(k + 1) * self.nx]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sup_norm(&self) -> f64 {
        linf(&self.data)
    }

    /// `Δt·h·Σ a·b`, the discrete `L²((0,T)×Ω)` inner product.
    pub fn inner(&self, other: &Control, dt: f64, h: f64) -> f64 {
        dt * h
            * self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn l2_norm(&self, dt: f64, h: f64) -> f64 {
        self.inner(self, dt, h).sqrt()
    }

    /// `self + alpha·other`.
    pub fn axpy(&mut self, alpha: f64, other: &Control) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Control {
        Control {
            nx: self.nx,
            nt: self.nt,
            data: self.data.iter().map(|a| alpha * a).collect(),
        }
    }

    pub fn check_support(&self, mask: &Mask) -> Result<()> {
        for k in 0..self.nt {
            for (i, (v, w)) in self.step(k).iter().zip(mask.weights()).enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "control value at step {k}, node {i} is not finite"
                    )));
                }
                if *w == 0.0 && *v != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "control is nonzero off the control region (step {k}, node {i})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Step size below which the explicit reaction term is expected to be
/// stable for states of size `state_bound`: `1/(2 f'(state_bound))`.
pub fn suggested_dt(f: &Nonlinearity, state_bound: f64, current_dt: f64) -> f64 {
    let slope = f.derivative(state_bound.abs().max(1.0));
    if slope > 0.0 {
        (0.5 / slope).min(0.5 * current_dt)
    } else {
        0.5 * current_dt
    }
}

/// One semi-implicit step: solves `(1/Δt − Δ_h) Y = y/Δt − f(y) + u`.
/// `u` must already be supported on the control region.
pub fn step_semi_implicit(
    grid: &Grid,
    y: &[f64],
    u: &[f64],
    dt: f64,
    f: &Nonlinearity,
) -> Result<Vec<f64>> {
    grid.check("step_semi_implicit state", y)?;
    grid.check("step_semi_implicit control", u)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    if y.iter().chain(u).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite input to step".into()));
    }
    let solver = ShiftedLaplacian::new(grid, 1.0 / dt)?;
    let mut rhs = vec![0.0; grid.nx()];
    let mut out = vec![0.0; grid.nx()];
    step_into(&solver, y, u, dt, f, &mut rhs, &mut out);
    Ok(out)
}

#[inline]
fn step_into(
    solver: &ShiftedLaplacian,
    y: &[f64],
    u: &[f64],
    dt: f64,
    f: &Nonlinearity,
    rhs: &mut [f64],
    out: &mut [f64],
) {
    let inv_dt = 1.0 / dt;
    for i in 0..y.len() {
        rhs[i] = y[i] * inv_dt - f.value(y[i]) + u[i];
    }
    solver.solve_into(rhs, out);
}

impl DiscreteProblem {
    /// Integrates the state equation from the sampled initial datum.
    pub fn solve_forward(&self, u: &Control) -> Result<Trajectory> {
        self.solve_forward_from(&self.initial, u)
    }

    pub fn solve_forward_from(&self, y0: &[f64], u: &Control) -> Result<Trajectory> {
        let (nx, nt) = (self.nx(), self.nt());
        ensure_len("control steps", nt, u.nt())?;
        ensure_len("control nodes", nx, u.nx())?;
        self.grid.check("initial state", y0)?;
        let f = &self.spec.nonlinearity;
        let solver = ShiftedLaplacian::new(&self.grid, 1.0 / self.dt)?;
        let mut traj = Trajectory::zeros(nx, nt, self.dt, "forward");
        traj.snapshot_mut(0).copy_from_slice(y0);
        let mut rhs = vec![0.0; nx];
        let mut next = vec![0.0; nx];
        for k in 0..nt {
            step_into(
                &solver,
                traj.snapshot(k),
                u.step(k),
                self.dt,
                f,
                &mut rhs,
                &mut next,
            );
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp {
                    step: k + 1,
                    suggested_dt: suggested_dt(f, linf(y0), self.dt),
                });
            }
            traj.snapshot_mut(k + 1).copy_from_slice(&next);
        }
        Ok(traj)
    }

    /// Backward sweep of the discrete adjoint from `q(T) = 0`.
    pub fn solve_adjoint(&self, y: &Trajectory) -> Result<Trajectory> {
        let (nx, nt) = (self.nx(), self.nt());
        ensure_len("adjoint state steps", nt, y.nt())?;
        ensure_len("adjoint state nodes", nx, y.nx())?;
        let f = &self.spec.nonlinearity;
        let beta = self.spec.beta;
        let obs = self.observation_mask.weights();
        let solver = ShiftedLaplacian::new(&self.grid, 1.0 / self.dt)?;
        let inv_dt = 1.0 / self.dt;
        let mut q = Trajectory::zeros(nx, nt, self.dt, "adjoint");
        let mut rhs = vec![0.0; nx];
        let mut next = vec![0.0; nx];
        for k in (0..nt).rev() {
            let yk = y.snapshot(k + 1);
            let qk = q.snapshot(k + 1);
            for i in 0..nx {
                rhs[i] = qk[i] * (inv_dt - f.derivative(yk[i]))
                    + beta * obs[i] * (yk[i] - self.target[i]);
            }
            solver.solve_into(&rhs, &mut next);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp {
                    step: k,
                    suggested_dt: suggested_dt(f, y.sup_norm(), self.dt),
                });
            }
            q.snapshot_mut(k).copy_from_slice(&next);
        }
        Ok(q)
    }

    /// Both sides of the discrete energy identity for a trajectory `y`
    /// driven by `source` on the whole domain.
    pub fn energy_identity(&self, y: &Trajectory, source: &Control) -> Result<EnergyIdentity> {
        let (nx, nt) = (self.nx(), self.nt());
        ensure_len("energy identity steps", nt, y.nt())?;
        ensure_len("energy identity nodes", nx, y.nx())?;
        ensure_len("energy identity source steps", nt, source.nt())?;
        ensure_len("energy identity source nodes", nx, source.nx())?;
        let grid = &self.grid;
        let f = &self.spec.nonlinearity;
        let dt = self.dt;

        let source_sq: f64 = (0..nt)
            .map(|k| grid.l2_squared(source.step(k)))
            .sum::<f64>()
            * dt;

        let mut yt_sq = 0.0;
        let mut op_sq = 0.0;
        let mut lap = vec![0.0; nx];
        let mut work = vec![0.0; nx];
        for k in 1..=nt {
            let (prev, cur) = (y.snapshot(k - 1), y.snapshot(k));
            for i in 0..nx {
                work[i] = (cur[i] - prev[i]) / dt;
            }
            yt_sq += grid.l2_squared(&work);
            steady_operator(grid, f, cur, &mut lap, &mut work);
            op_sq += grid.l2_squared(&work);
        }
        yt_sq *= dt;
        op_sq *= dt;

        let boundary = energy(grid, f, y.last()) - energy(grid, f, y.snapshot(0));
        let lhs = source_sq;
        let rhs = yt_sq + op_sq + boundary;
        Ok(EnergyIdentity {
            lhs,
            time_derivative: yt_sq,
            steady_operator: op_sq,
            boundary,
            rhs,
            residual: (lhs - rhs).abs() / lhs.max(1.0),
        })
    }
}

/// `−Δ_h y + f(y)` into `out`; `lap` is scratch.
pub(crate) fn steady_operator(
    grid: &Grid,
    f: &Nonlinearity,
    y: &[f64],
    lap: &mut [f64],
    out: &mut [f64],
) {
    grid.laplacian_into(y, lap);
    for i in 0..y.len() {
        out[i] = -lap[i] + f.value(y[i]);
    }
}

/// `‖y‖²_{H¹₀} + 2∫F(y)`.
pub(crate) fn energy(grid: &Grid, f: &Nonlinearity, y: &[f64]) -> f64 {
    grid.h10_squared(y) + 2.0 * grid.h() * y.iter().map(|&v| f.primitive(v)).sum::<f64>()
}

/// Terms of `∫∫|h|² = ∫∫|y_t|² + ∫∫|−Δy + f(y)|² + [‖∇y‖² + 2∫F(y)]₀^T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyIdentity {
    pub lhs: f64,
    pub time_derivative: f64,
    pub steady_operator: f64,
    pub boundary: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / max(lhs, 1)`.
    pub residual: f64,
}

pub fn solve_forward(
    spec: &ProblemSpec,
    disc: DiscretizationSpec,
    u: &Control,
) -> Result<Trajectory> {
    DiscreteProblem::new(spec, disc)?.solve_forward(u)
}

pub fn solve_adjoint(
    spec: &ProblemSpec,
    disc: DiscretizationSpec,
    y: &Trajectory,
) -> Result<Trajectory> {
    DiscreteProblem::new(spec, disc)?.solve_adjoint(y)
}

/// Relative residual of the energy identity. The source acts on the whole
/// domain regardless of the configured control region.
pub fn energy_identity_residual(
    spec: &ProblemSpec,
    disc: DiscretizationSpec,
    y: &Trajectory,
    source: &Control,
) -> Result<f64> {
    Ok(DiscreteProblem::new(spec, disc)?
        .energy_identity(y, source)?
        .residual)
}
