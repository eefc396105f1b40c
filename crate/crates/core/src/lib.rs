//! Solvers and diagnostics for optimal control of the semilinear heat
//! equation `y_t − y_xx + f(y) = u·χ_ω` on an interval, with the tracking
//! cost `½∫∫_ω |u|² + (β/2)∫∫_ω₀ |y − z|²`.
//!
//! The crate computes time-horizon optima by gradient descent on the exact
//! discrete adjoint gradient, steady optima by Newton plus gradient descent,
//! and compares the two: distance curves, entry times, exponential-rate
//! fits, averaged-cost sweeps over the horizon, and the energy and
//! representation identities for `J_T`.
//!
//! ```no_run
//! use turnpike_core::prelude::*;
//!
//! let spec = ProblemSpec::reference();
//! let disc = DiscretizationSpec::from_dt(100, spec.horizon, 1e-4).unwrap();
//! let problem = DiscreteProblem::new(&spec, disc).unwrap();
//! let pair = problem.solve_steady_optimum(&SteadyOptions::default()).unwrap();
//! let result = problem.minimize_from_zero(&DescentOptions::default()).unwrap();
//! let report = turnpike_report(&problem, &result, &pair, &TurnpikeOptions::default()).unwrap();
//! println!("entry time {}", report.entry_time);
//! ```

pub mod discrete;
pub mod error;
pub mod grid;
pub mod optimize;
pub mod parabolic;
pub mod problem;
pub mod steady;
pub mod turnpike;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::discrete::DiscreteProblem;
    pub use crate::error::{Error, Result};
    pub use crate::grid::{Grid, Mask, Norm};
    pub use crate::optimize::{
        CostBreakdown, DescentOptions, OptimizationResult, StepSize, Termination,
    };
    pub use crate::parabolic::{Control, EnergyIdentity, Trajectory};
    pub use crate::problem::{
        validate_spec, DiscretizationSpec, Interval, Nonlinearity, ProblemSpec, Profile, Violation,
    };
    pub use crate::steady::{SteadyOptions, SteadyPair};
    pub use crate::turnpike::{
        averages_sweep, distance_curves, entry_time, fit_exponential_rates, quasi_optimal_strategy,
        representation_decomposition, turnpike_report, SweepPolicy, SweepTable, TurnpikeOptions,
        TurnpikeReport,
    };
}
