//! A problem instance sampled on a grid: masks, initial datum, target and
//! the time step, shared by the forward, adjoint and optimization code.

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::problem::{DiscretizationSpec, ProblemSpec};

#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub spec: ProblemSpec,
    pub disc: DiscretizationSpec,
    pub grid: Grid,
    pub control_mask: Mask,
    pub observation_mask: Mask,
    pub initial: Vec<f64>,
    pub target: Vec<f64>,
    pub dt: f64,
}

impl DiscreteProblem {
    /// Validates `spec` and samples it on the grid described by `disc`.
    pub fn new(spec: &ProblemSpec, disc: DiscretizationSpec) -> Result<Self> {
        let spec = spec.clone().validated()?;
        let disc = DiscretizationSpec::new(disc.nx, disc.nt)?;
        let grid = Grid::for_problem(&spec, &disc)?;
        let control_mask = if spec.controls_everywhere() {
            Mask::full(&grid)
        } else {
            Mask::new(&grid, spec.control_region)?
        };
        let observation_mask = Mask::new(&grid, spec.observation_region)?;
        let domain = spec.domain;
        let initial = grid.sample(|x| spec.initial.eval(x, &domain));
        let target = grid.sample(|x| spec.target.eval(x, &domain));
        if initial.iter().chain(&target).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "initial datum or target is not finite on the grid".into(),
            ));
        }
        let dt = disc.dt(&spec);
        Ok(Self {
            spec,
            disc,
            grid,
            control_mask,
            observation_mask,
            initial,
            target,
            dt,
        })
    }

    pub fn nx(&self) -> usize {
        self.disc.nx
    }

    pub fn nt(&self) -> usize {
        self.disc.nt
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    /// Same problem on the same grid with a different horizon and step count.
    pub fn with_horizon(&self, horizon: f64, nt: usize) -> Result<Self> {
        let spec = self.spec.clone().with_horizon(horizon);
        Self::new(&spec, DiscretizationSpec::new(self.disc.nx, nt)?)
    }

    /// Same problem with the initial datum replaced by nodal values.
    pub fn with_initial_values(&self, values: Vec<f64>) -> Result<Self> {
        self.grid.check("initial values", &values)?;
        Ok(Self {
            initial: values,
            ..self.clone()
        })
    }
}
