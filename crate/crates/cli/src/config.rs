//! Run configuration: a TOML file with `[problem]`, `[disc]`,
//! `[optimizer]`, `[steady]`, `[turnpike]`, `[sweep]` and `[output]`
//! sections. Every omitted key resolves to an explicit default, and the
//! resolved form is what reports embed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use std::result::Result;
use turnpike_core::optimize::{DescentOptions, StepSize};
use turnpike_core::prelude::*;
use turnpike_core::steady::NewtonOptions;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::out")]
    pub out: PathBuf,
    #[serde(default)]
    pub problem: ProblemConfig,
    pub disc: DiscConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub steady: SteadyConfig,
    #[serde(default)]
    pub turnpike: TurnpikeConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: [f64; 2],
    pub control_region: [f64; 2],
    pub observation_region: [f64; 2],
    pub beta: f64,
    pub horizon: f64,
    pub initial: Profile,
    pub target: Profile,
    pub nonlinearity: NonlinearityConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            domain: [0.0, 1.0],
            control_region: [0.0, 0.5],
            observation_region: [0.0, 1.0],
            beta: 1000.0,
            horizon: 5.0,
            initial: Profile::constant(10.0),
            target: Profile::constant(1.0),
            nonlinearity: NonlinearityConfig::default(),
        }
    }
}

/// `f(y) = coefficient·|y|^(exponent−1)·y`, or `f ≡ 0` for `kind = "zero"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub kind: NonlinearityKind,
    pub coefficient: f64,
    pub exponent: f64,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self {
            kind: NonlinearityKind::Power,
            coefficient: 1.0,
            exponent: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    Power,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscConfig {
    pub nx: usize,
    #[serde(default)]
    pub nt: Option<usize>,
    #[serde(default)]
    pub dt: Option<f64>,
}

/// `stepsize` is `"auto"` or a positive number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub stepsize: StepSizeConfig,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub max_restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let d = DescentOptions::default();
        Self {
            stepsize: StepSizeConfig::Auto("auto".into()),
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            max_restarts: d.max_restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSizeConfig {
    Fixed(f64),
    Auto(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadyConfig {
    pub initial_step: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub armijo: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        let d = SteadyOptions::default();
        Self {
            initial_step: d.initial_step,
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            armijo: d.armijo,
            newton_tol: d.newton.tol,
            newton_max_iters: d.newton.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurnpikeConfig {
    /// Entry-time threshold; omitted means `1.1‖ȳ‖∞ + 0.05‖y₀‖∞`.
    pub delta: Option<f64>,
    /// Fit window length; omitted means `min(T/4, 2)`.
    pub fit_window: Option<f64>,
    pub kappa: f64,
    /// Switch time of the quasi-optimal strategy; omitted means
    /// `min(1, T/2)`.
    pub tau: Option<f64>,
}

impl Default for TurnpikeConfig {
    fn default() -> Self {
        Self {
            delta: None,
            fit_window: None,
            kappa: defaults::kappa(),
            tau: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub horizons: Vec<f64>,
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            horizons: defaults::horizons(),
            jobs: defaults::jobs(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Every `stride`-th time snapshot goes into trajectory CSVs; omitted
    /// means about 500 snapshots per file.
    pub stride: Option<usize>,
}

mod defaults {
    use std::path::PathBuf;

    pub fn seed() -> u64 {
        7
    }
    pub fn out() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn kappa() -> f64 {
        10.0
    }
    pub fn horizons() -> Vec<f64> {
        vec![2.0, 4.0, 8.0, 16.0]
    }
    pub fn jobs() -> usize {
        1
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses, validates and resolves every default.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::ConfigParse(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    fn resolve(&mut self) -> Result<(), CliError> {
        if let StepSizeConfig::Auto(s) = &self.optimizer.stepsize {
            if s != "auto" {
                return Err(CliError::ConfigParse(format!(
                    "optimizer.stepsize must be \"auto\" or a number, got {s:?}"
                )));
            }
        }
        let violations = validate_spec(&self.problem_spec());
        if !violations.is_empty() {
            return Err(CliError::Violations(violations));
        }
        let horizon = self.problem.horizon;
        let nt = match (self.disc.nt, self.disc.dt) {
            // A resolved config carries both; accept them when they agree.
            (Some(nt), Some(dt)) => {
                if ((nt as f64) * dt - horizon).abs() > 1e-9 * horizon {
                    return Err(CliError::ConfigParse(format!(
                        "disc.nt = {nt} and disc.dt = {dt} disagree with horizon {horizon}"
                    )));
                }
                nt
            }
            (None, None) => {
                return Err(CliError::ConfigParse(
                    "disc.nt or disc.dt is required".into(),
                ))
            }
            (Some(nt), None) => nt,
            (None, Some(dt)) => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(CliError::ConfigParse(format!("disc.dt = {dt} must be > 0")));
                }
                DiscretizationSpec::from_dt(self.disc.nx, horizon, dt)?.nt
            }
        };
        let disc = DiscretizationSpec::new(self.disc.nx, nt)?;
        self.disc.nt = Some(disc.nt);
        self.disc.dt = Some(horizon / disc.nt as f64);
        self.output.stride.get_or_insert(nt.div_ceil(500).max(1));
        if self.output.stride == Some(0) {
            return Err(CliError::ConfigParse("output.stride must be >= 1".into()));
        }
        if self.sweep.horizons.iter().any(|t| !(*t > 0.0)) || self.sweep.horizons.is_empty() {
            return Err(CliError::ConfigParse(
                "sweep.horizons must be a nonempty list of positive values".into(),
            ));
        }
        let tau = *self.turnpike.tau.get_or_insert((0.5 * horizon).min(1.0));
        if !(tau > 0.0 && tau < horizon) {
            return Err(CliError::ConfigParse(format!(
                "turnpike.tau = {tau} must lie in (0, {horizon})"
            )));
        }
        self.sweep.jobs = self.sweep.jobs.max(1);
        Ok(())
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let p = &self.problem;
        let interval = |v: [f64; 2]| Interval::new(v[0], v[1]);
        ProblemSpec {
            domain: interval(p.domain),
            control_region: interval(p.control_region),
            observation_region: interval(p.observation_region),
            beta: p.beta,
            horizon: p.horizon,
            target: p.target.clone(),
            initial: p.initial.clone(),
            nonlinearity: match p.nonlinearity.kind {
                NonlinearityKind::Zero => Nonlinearity::zero(),
                NonlinearityKind::Power => Nonlinearity::Power {
                    coefficient: p.nonlinearity.coefficient,
                    exponent: p.nonlinearity.exponent,
                },
            },
        }
    }

    pub fn discretization(&self) -> DiscretizationSpec {
        DiscretizationSpec {
            nx: self.disc.nx,
            nt: self.disc.nt.expect("resolved"),
        }
    }

    /// Time step of the resolved discretization.
    pub fn dt(&self) -> f64 {
        self.disc.dt.expect("resolved")
    }

    pub fn problem(&self) -> Result<DiscreteProblem, CliError> {
        Ok(DiscreteProblem::new(
            &self.problem_spec(),
            self.discretization(),
        )?)
    }

    pub fn descent_options(&self) -> DescentOptions {
        let o = &self.optimizer;
        DescentOptions {
            stepsize: match o.stepsize {
                StepSizeConfig::Fixed(s) => StepSize::Fixed(s),
                StepSizeConfig::Auto(_) => StepSize::Auto,
            },
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            max_restarts: o.max_restarts,
        }
    }

    pub fn steady_options(&self) -> SteadyOptions {
        let s = &self.steady;
        SteadyOptions {
            initial_step: s.initial_step,
            max_iters: s.max_iters,
            grad_tol: s.grad_tol,
            armijo: s.armijo,
            newton: NewtonOptions {
                tol: s.newton_tol,
                max_iters: s.newton_max_iters,
            },
        }
    }

    pub fn turnpike_options(&self) -> TurnpikeOptions {
        TurnpikeOptions {
            delta: self.turnpike.delta,
            fit_window: self.turnpike.fit_window,
        }
    }

    pub fn tau(&self) -> f64 {
        self.turnpike.tau.expect("resolved")
    }

    pub fn stride(&self) -> usize {
        self.output.stride.expect("resolved")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[disc]\nnx = 20\nnt = 40\n";

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.problem, ProblemConfig::default());
        assert_eq!(cfg.disc.dt, Some(5.0 / 40.0));
        assert_eq!(cfg.stride(), 1);
        assert_eq!(cfg.tau(), 1.0);
        assert_eq!(cfg.descent_options(), DescentOptions::default());
        assert_eq!(cfg.steady_options(), SteadyOptions::default());
        // Resolving twice is idempotent.
        let again = RunConfig::parse(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn dt_resolves_to_step_count() {
        let cfg =
            RunConfig::parse("[problem]\nhorizon = 2.0\n[disc]\nnx = 10\ndt = 0.01\n").unwrap();
        assert_eq!(cfg.discretization().nt, 200);
        assert_eq!(cfg.tau(), 1.0);
        let short =
            RunConfig::parse("[problem]\nhorizon = 0.5\n[disc]\nnx = 10\nnt = 5\n").unwrap();
        assert_eq!(short.tau(), 0.25);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        for text in [
            "[disc]\nnx = 10\n",
            "[disc]\nnx = 10\nnt = 5\ndt = 0.1\n",
            "[disc]\nnx = 10\nnt = 5\ndt = -1.0\n",
            "[disc]\nnx = 10\nnt = 5\nbogus = 1\n",
            "[optimizer]\nstepsize = \"fast\"\n[disc]\nnx = 10\nnt = 5\n",
            "[output]\nstride = 0\n[disc]\nnx = 10\nnt = 5\n",
            "[sweep]\nhorizons = []\n[disc]\nnx = 10\nnt = 5\n",
        ] {
            let err = RunConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG, "{text}");
        }
    }

    #[test]
    fn violations_are_listed() {
        let err = RunConfig::parse(
            "[problem]\nbeta = -1.0\ncontrol_region = [2.0, 3.0]\n[disc]\nnx = 10\nnt = 5\n",
        )
        .unwrap_err();
        match err {
            CliError::Violations(v) => assert_eq!(v.len(), 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn fixed_stepsize_and_zero_nonlinearity() {
        let cfg = RunConfig::parse(
            "[problem]\nnonlinearity = { kind = \"zero\" }\n[optimizer]\nstepsize = 0.25\n[disc]\nnx = 10\nnt = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.descent_options().stepsize, StepSize::Fixed(0.25));
        assert!(cfg.problem_spec().nonlinearity.is_zero());
    }

    #[test]
    fn bundled_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
        for name in ["sec54.toml", "averages.toml", "zero_target.toml"] {
            RunConfig::load(&dir.join(name)).unwrap();
        }
        let reference = RunConfig::load(&dir.join("sec54.toml")).unwrap();
        assert_eq!(reference.discretization().nt, 50_000);
        assert_eq!(reference.problem_spec().horizon, 5.0);
    }
}
