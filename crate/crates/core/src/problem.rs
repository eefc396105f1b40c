//! Problem instances: domain, subdomains, nonlinearity, data and weights.
//!
//! Everything here is one-dimensional. The domain is an interval `(a, b)`,
//! the control region `ω` and the observation region `ω₀` are subintervals,
//! and the state equation is
//!
//! ```text
//! y_t - y_xx + f(y) = u·χ_ω   in (0,T)×(a,b),   y(a) = y(b) = 0,   y(0) = y₀
//! ```
//!
//! with cost `½∫∫_ω |u|² + (β/2)∫∫_ω₀ |y − z|²`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Strict membership, `lo < x < hi`.
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    fn is_nonempty(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi
    }

    fn is_within(&self, outer: &Interval) -> bool {
        outer.lo <= self.lo && self.hi <= outer.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied nonlinearity given by closures for `f`, `f'` and `f''`.
///
/// The primitive `F` is obtained by Gauss-Legendre quadrature of `f`.
#[derive(Clone)]
pub struct CustomNonlinearity {
    pub name: String,
    value: ScalarFn,
    derivative: ScalarFn,
    second_derivative: ScalarFn,
}

impl fmt::Debug for CustomNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomNonlinearity")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

/// The reaction term `f` of the state equation.
#[derive(Debug, Clone)]
pub enum Nonlinearity {
    /// `f(y) = coefficient · sign(y)·|y|^exponent`.
    Power {
        coefficient: f64,
        exponent: f64,
    },
    Custom(CustomNonlinearity),
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Self::cubic()
    }
}

impl Nonlinearity {
    /// `f(y) = y³`.
    pub fn cubic() -> Self {
        Self::power(3.0)
    }

    /// `f ≡ 0`, the linear heat equation.
    pub fn zero() -> Self {
        Self::Power {
            coefficient: 0.0,
            exponent: 1.0,
        }
    }

    pub fn power(exponent: f64) -> Self {
        Self::Power {
            coefficient: 1.0,
            exponent,
        }
    }

    pub fn custom<F, D, D2>(name: impl Into<String>, f: F, df: D, d2f: D2) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::Custom(CustomNonlinearity {
            name: name.into(),
            value: Arc::new(f),
            derivative: Arc::new(df),
            second_derivative: Arc::new(d2f),
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Power { coefficient, .. } if *coefficient == 0.0)
    }

    pub fn value(&self, y: f64) -> f64 {
        match self {
            Self::Power {
                coefficient,
                exponent,
            } => coefficient * y.signum() * abs_pow(y, *exponent),
            Self::Custom(c) => (c.value)(y),
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            Self::Power {
                coefficient,
                exponent,
            } => coefficient * exponent * abs_pow(y, exponent - 1.0),
            Self::Custom(c) => (c.derivative)(y),
        }
    }

    pub fn second_derivative(&self, y: f64) -> f64 {
        match self {
            Self::Power {
                coefficient,
                exponent,
            } => {
                if *exponent == 1.0 {
                    0.0
                } else {
                    coefficient
                        * exponent
                        * (exponent - 1.0)
                        * y.signum()
                        * abs_pow(y, exponent - 2.0)
                }
            }
            Self::Custom(c) => (c.second_derivative)(y),
        }
    }

    /// `F(y) = ∫₀^y f(ξ) dξ`.
    pub fn primitive(&self, y: f64) -> f64 {
        match self {
            Self::Power {
                coefficient,
                exponent,
            } => coefficient * abs_pow(y, exponent + 1.0) / (exponent + 1.0),
            Self::Custom(c) => gauss_legendre(&*c.value, 0.0, y, 32),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Power {
                coefficient,
                exponent,
            } => format!("{coefficient}*sign(y)|y|^{exponent}"),
            Self::Custom(c) => c.name.clone(),
        }
    }
}

/// `|y|^p`, exact for integer `p` so that polynomial nonlinearities carry no
/// rounding from `powf`.
fn abs_pow(y: f64, p: f64) -> f64 {
    let a = y.abs();
    if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
        a.powi(p as i32)
    } else {
        a.powf(p)
    }
}

/// Composite 5-point Gauss-Legendre rule on `[a, b]` with `panels` panels.
fn gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    if a == b {
        return 0.0;
    }
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        for (node, weight) in NODES.iter().zip(WEIGHTS.iter()) {
            total += weight * f(mid + half * node) * half;
        }
    }
    total
}

/// A spatial profile used for the initial datum and the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `amplitude · sin(modes·π·(x − a)/(b − a))` on the domain `(a, b)`.
    Sine {
        amplitude: f64,
        #[serde(default = "one")]
        modes: f64,
    },
    /// `amplitude · 4(x − a)(b − x)/(b − a)²`, peaking at `amplitude`.
    Parabola {
        amplitude: f64,
    },
    /// Piecewise-linear interpolation through `(x, values)`, held constant
    /// outside the table. Sampling at a tabulated abscissa returns the
    /// tabulated value exactly.
    Tabulated {
        x: Vec<f64>,
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Profile {
    pub const fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub const fn sine(amplitude: f64) -> Self {
        Self::Sine {
            amplitude,
            modes: 1.0,
        }
    }

    /// Evaluates the profile at `x` for a domain `(a, b)`.
    pub fn eval(&self, x: f64, domain: &Interval) -> f64 {
        let (a, b) = (domain.lo, domain.hi);
        match self {
            Self::Constant { value } => *value,
            Self::Sine { amplitude, modes } => {
                amplitude * (modes * std::f64::consts::PI * (x - a) / (b - a)).sin()
            }
            Self::Parabola { amplitude } => {
                amplitude * 4.0 * (x - a) * (b - x) / ((b - a) * (b - a))
            }
            Self::Tabulated { x: xs, values } => interpolate(xs, values, x),
        }
    }

    /// Largest absolute value on a fine sampling of the domain.
    pub fn sup_norm(&self, domain: &Interval) -> f64 {
        const SAMPLES: usize = 1001;
        let mut sup: f64 = 0.0;
        for k in 0..SAMPLES {
            let x = domain.lo + domain.length() * k as f64 / (SAMPLES - 1) as f64;
            let v = self.eval(x, domain).abs();
            if v.is_nan() {
                return f64::NAN;
            }
            sup = sup.max(v);
        }
        if let Self::Tabulated { values, .. } = self {
            for v in values {
                sup = sup.max(v.abs());
            }
        }
        sup
    }

    fn table_problem(&self) -> Option<String> {
        match self {
            Self::Tabulated { x, values } => {
                if x.is_empty() {
                    Some("tabulated profile is empty".into())
                } else if x.len() != values.len() {
                    Some(format!(
                        "tabulated profile has {} abscissae but {} values",
                        x.len(),
                        values.len()
                    ))
                } else if x.windows(2).any(|w| !(w[0] < w[1])) {
                    Some("tabulated abscissae must be strictly increasing".into())
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

fn interpolate(xs: &[f64], values: &[f64], x: f64) -> f64 {
    if xs.is_empty() || xs.len() != values.len() {
        return f64::NAN;
    }
    let last = xs.len() - 1;
    if x <= xs[0] {
        return values[0];
    }
    if x >= xs[last] {
        return values[last];
    }
    let j = xs.partition_point(|&t| t <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let (v0, v1) = (values[j - 1], values[j]);
    if x == x0 {
        return v0;
    }
    v0 + (x - x0) / (x1 - x0) * (v1 - v0)
}

/// A full problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: Interval,
    /// Control region `ω`.
    pub control_region: Interval,
    /// Observation region `ω₀`.
    pub observation_region: Interval,
    /// Tracking weight `β`.
    pub beta: f64,
    /// Time horizon `T`.
    pub horizon: f64,
    pub target: Profile,
    pub initial: Profile,
    pub nonlinearity: Nonlinearity,
}

impl ProblemSpec {
    /// The reference experiment: `y' − y'' + y³ = u·χ_(0,½)` on `(0,1)` with
    /// `y₀ ≡ 10`, `z ≡ 1`, `β = 1000`, `ω₀ = (0,1)` and `T = 5`.
    pub fn reference() -> Self {
        Self {
            domain: Interval::new(0.0, 1.0),
            control_region: Interval::new(0.0, 0.5),
            observation_region: Interval::new(0.0, 1.0),
            beta: 1000.0,
            horizon: 5.0,
            target: Profile::constant(1.0),
            initial: Profile::constant(10.0),
            nonlinearity: Nonlinearity::cubic(),
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// True when the control acts on the whole domain.
    pub fn controls_everywhere(&self) -> bool {
        self.control_region.lo <= self.domain.lo && self.control_region.hi >= self.domain.hi
    }

    /// Returns `Err(InvalidSpec)` listing every violation, if any.
    pub fn validated(self) -> Result<Self> {
        let violations = validate_spec(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidSpec(violations))
        }
    }
}

/// One violated structural hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every structural hypothesis of a problem instance. An empty list
/// means the instance is admissible.
pub fn validate_spec(spec: &ProblemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let domain = spec.domain;

    if !domain.is_nonempty() {
        out.push(Violation::new(
            "domain",
            format!("domain {domain} must be a nonempty bounded interval"),
        ));
    }
    for (name, region) in [
        ("control_region", spec.control_region),
        ("observation_region", spec.observation_region),
    ] {
        if !region.is_nonempty() {
            out.push(Violation::new(name, format!("{region} is empty")));
        } else if !region.is_within(&domain) {
            out.push(Violation::new(
                name,
                format!("{region} is not contained in the domain {domain}"),
            ));
        }
    }

    if !(spec.beta >= 0.0 && spec.beta.is_finite()) {
        out.push(Violation::new(
            "beta",
            format!("weight beta = {} must be finite and >= 0", spec.beta),
        ));
    }
    if !(spec.horizon > 0.0 && spec.horizon.is_finite()) {
        out.push(Violation::new(
            "horizon",
            format!("horizon T = {} must be finite and > 0", spec.horizon),
        ));
    }

    let mut data_bound: f64 = 1.0;
    for (name, profile) in [("initial", &spec.initial), ("target", &spec.target)] {
        if let Some(msg) = profile.table_problem() {
            out.push(Violation::new(name, msg));
            continue;
        }
        if domain.is_nonempty() {
            let sup = profile.sup_norm(&domain);
            if sup.is_finite() {
                data_bound = data_bound.max(sup);
            } else {
                out.push(Violation::new(name, "profile is unbounded or not finite"));
            }
        }
    }

    out.extend(check_nonlinearity(&spec.nonlinearity, 2.0 * data_bound));
    out
}

/// Samples `f` on `[-range, range]` and checks `f(0) = 0`, monotonicity,
/// nonnegativity of `F` and `F' = f`.
fn check_nonlinearity(f: &Nonlinearity, range: f64) -> Vec<Violation> {
    const SAMPLES: usize = 201;
    let mut out = Vec::new();

    if let Nonlinearity::Power { exponent, .. } = f {
        if !(*exponent >= 1.0) {
            out.push(Violation::new(
                "nonlinearity",
                format!("power exponent {exponent} must be >= 1"),
            ));
            return out;
        }
    }
    if f.value(0.0) != 0.0 {
        out.push(Violation::new(
            "nonlinearity",
            format!("f(0) = {} but must vanish", f.value(0.0)),
        ));
    }

    let sample = |k: usize| -range + 2.0 * range * k as f64 / (SAMPLES - 1) as f64;
    if let Some(y) = (0..SAMPLES).map(sample).find(|&y| f.derivative(y) < 0.0) {
        out.push(Violation::new(
            "nonlinearity",
            format!("monotonicity fails: f'({y}) = {} < 0", f.derivative(y)),
        ));
        // The remaining checks follow from monotonicity.
        return out;
    }
    if let Some(y) = (0..SAMPLES).map(sample).find(|&y| f.primitive(y) < 0.0) {
        out.push(Violation::new(
            "nonlinearity",
            format!("primitive is negative: F({y}) = {}", f.primitive(y)),
        ));
    }
    let primitive_mismatch = (0..SAMPLES).map(sample).find(|&y| {
        let step = 1e-5 * y.abs().max(1.0);
        let fd = (f.primitive(y + step) - f.primitive(y - step)) / (2.0 * step);
        (fd - f.value(y)).abs() > 1e-8 * f.value(y).abs().max(1.0)
    });
    if let Some(y) = primitive_mismatch {
        out.push(Violation::new(
            "nonlinearity",
            format!("primitive derivative does not reproduce f at y = {y}"),
        ));
    }
    out
}

/// Grid resolution: `nx` interior nodes and `nt` time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub nx: usize,
    pub nt: usize,
}

impl DiscretizationSpec {
    pub fn new(nx: usize, nt: usize) -> Result<Self> {
        if nx < 2 {
            return Err(Error::InvalidParameter(format!("nx = {nx} must be >= 2")));
        }
        if nt < 1 {
            return Err(Error::InvalidParameter("nt must be >= 1".into()));
        }
        Ok(Self { nx, nt })
    }

    /// Picks `nt = round(horizon / dt)` (at least one step).
    pub fn from_dt(nx: usize, horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
        }
        let nt = (horizon / dt).round().max(1.0) as usize;
        Self::new(nx, nt)
    }

    pub fn h(&self, spec: &ProblemSpec) -> f64 {
        spec.domain.length() / (self.nx + 1) as f64
    }

    pub fn dt(&self, spec: &ProblemSpec) -> f64 {
        spec.horizon / self.nt as f64
    }
}
