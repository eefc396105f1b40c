//! Uniform 1D Dirichlet grid, the second-difference Laplacian, subdomain
//! masks, discrete norms and tridiagonal solves.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::problem::{DiscretizationSpec, Interval, ProblemSpec};

/// Interior nodes `x_i = a + i·h`, `i = 1..=nx`, with `h = (b − a)/(nx + 1)`.
/// Field values at `a` and `b` are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Interval,
    nx: usize,
    h: f64,
}

impl Grid {
    pub fn new(domain: Interval, nx: usize) -> Result<Self> {
        if nx < 2 {
            return Err(Error::InvalidParameter(format!("nx = {nx} must be >= 2")));
        }
        if !(domain.lo < domain.hi) {
            return Err(Error::InvalidParameter(format!("empty domain {domain}")));
        }
        Ok(Self {
            domain,
            nx,
            h: domain.length() / (nx + 1) as f64,
        })
    }

    pub fn for_problem(spec: &ProblemSpec, disc: &DiscretizationSpec) -> Result<Self> {
        Self::new(spec.domain, disc.nx)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// Coordinate of interior node `i` (zero-based).
    pub fn x(&self, i: usize) -> f64 {
        self.domain.lo + (i + 1) as f64 * self.h
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.nx).map(|i| f(self.x(i))).collect()
    }

    pub fn check(&self, context: &'static str, v: &[f64]) -> Result<()> {
        ensure_len(context, self.nx, v.len())
    }

    /// `(v_{i−1} − 2v_i + v_{i+1})/h²` with zero ghost values.
    pub fn laplacian_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check("laplacian_apply", v)?;
        let mut out = vec![0.0; self.nx];
        self.laplacian_into(v, &mut out);
        Ok(out)
    }

    pub(crate) fn laplacian_into(&self, v: &[f64], out: &mut [f64]) {
        let n = v.len();
        let inv_h2 = 1.0 / (self.h * self.h);
        for i in 0..n {
            let left = if i > 0 { v[i - 1] } else { 0.0 };
            let right = if i + 1 < n { v[i + 1] } else { 0.0 };
            out[i] = (left - 2.0 * v[i] + right) * inv_h2;
        }
    }

    /// `h·Σ u_i v_i`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, v: &[f64], kind: Norm) -> Result<f64> {
        self.check("norm", v)?;
        Ok(match kind {
            Norm::L2 => self.l2(v),
            Norm::Linf => linf(v),
            Norm::H10 => self.h10_squared(v).sqrt(),
        })
    }

    pub(crate) fn l2(&self, v: &[f64]) -> f64 {
        self.l2_squared(v).sqrt()
    }

    pub(crate) fn l2_squared(&self, v: &[f64]) -> f64 {
        self.h * v.iter().map(|a| a * a).sum::<f64>()
    }

    /// `Σ (v_{i+1} − v_i)²/h` over all `nx + 1` edges, boundary included.
    pub(crate) fn h10_squared(&self, v: &[f64]) -> f64 {
        let n = v.len();
        let mut acc = 0.0;
        let mut prev = 0.0;
        for &vi in v {
            acc += (vi - prev) * (vi - prev);
            prev = vi;
        }
        if n > 0 {
            acc += prev * prev;
        }
        acc / self.h
    }

    /// Solves `(σ − Δ_h) v = rhs`.
    pub fn solve_shifted_laplacian(&self, sigma: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check("solve_shifted_laplacian", rhs)?;
        let solver = ShiftedLaplacian::new(self, sigma)?;
        let mut out = vec![0.0; self.nx];
        solver.solve_into(rhs, &mut out);
        Ok(out)
    }

    /// Principal eigenvalue of `−Δ_h`, `(2 − 2cos(πh/L))/h²` for a domain
    /// of length `L`.
    pub fn principal_eigenvalue(&self) -> f64 {
        let theta = std::f64::consts::PI * self.h / self.domain.length();
        (2.0 - 2.0 * theta.cos()) / (self.h * self.h)
    }
}

/// Maximum absolute value, zero for an empty slice.
pub fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
    H10,
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Norm::L2),
            "linf" | "inf" => Ok(Norm::Linf),
            "h10" | "h1_0" => Ok(Norm::H10),
            other => Err(Error::InvalidParameter(format!(
                "unknown norm kind '{other}'"
            ))),
        }
    }
}

/// Indicator of the grid nodes lying strictly inside a subinterval.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    weights: Vec<f64>,
    first: usize,
    end: usize,
}

impl Mask {
    pub fn new(grid: &Grid, region: Interval) -> Result<Self> {
        let inside: Vec<usize> = (0..grid.nx())
            .filter(|&i| region.contains(grid.x(i)))
            .collect();
        let (first, end) = match (inside.first(), inside.last()) {
            (Some(&f), Some(&l)) => (f, l + 1),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "subdomain {region} contains no grid node at nx = {}",
                    grid.nx()
                )))
            }
        };
        let mut weights = vec![0.0; grid.nx()];
        weights[first..end].iter_mut().for_each(|w| *w = 1.0);
        Ok(Self {
            weights,
            first,
            end,
        })
    }

    pub fn full(grid: &Grid) -> Self {
        Self {
            weights: vec![1.0; grid.nx()],
            first: 0,
            end: grid.nx(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index range of the support.
    pub fn support(&self) -> std::ops::Range<usize> {
        self.first..self.end
    }

    pub fn contains(&self, i: usize) -> bool {
        self.first <= i && i < self.end
    }

    pub fn count(&self) -> usize {
        self.end - self.first
    }

    /// `v·χ`, a copy with the entries off the support set to zero.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.weights).map(|(a, w)| a * w).collect()
    }

    pub fn is_full(&self) -> bool {
        self.first == 0 && self.end == self.weights.len()
    }
}

/// Pre-factored Thomas elimination for `(σ − Δ_h)`.
///
/// The matrix has diagonal `σ + 2/h²` and off-diagonals `−1/h²`; it is
/// strictly diagonally dominant for `σ > 0`, so no pivoting is needed.
#[derive(Debug, Clone)]
pub struct ShiftedLaplacian {
    off: f64,
    /// Reciprocals of the eliminated pivots.
    inv_pivot: Vec<f64>,
    /// Modified super-diagonal `c'_i`.
    upper: Vec<f64>,
}

impl ShiftedLaplacian {
    pub fn new(grid: &Grid, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "shift sigma = {sigma} must be > 0"
            )));
        }
        let n = grid.nx();
        let inv_h2 = 1.0 / (grid.h() * grid.h());
        let diag = sigma + 2.0 * inv_h2;
        let off = -inv_h2;
        let mut inv_pivot = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut pivot = diag;
        for i in 0..n {
            if i > 0 {
                pivot = diag - off * upper[i - 1];
            }
            inv_pivot[i] = 1.0 / pivot;
            upper[i] = off / pivot;
        }
        Ok(Self {
            off,
            inv_pivot,
            upper,
        })
    }

    pub fn solve_into(&self, rhs: &[f64], out: &mut [f64]) {
        let n = rhs.len();
        debug_assert_eq!(n, self.inv_pivot.len());
        debug_assert_eq!(n, out.len());
        let mut prev = 0.0;
        for i in 0..n {
            prev = (rhs[i] - self.off * prev) * self.inv_pivot[i];
            out[i] = prev;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            out[i] -= self.upper[i] * out[i + 1];
        }
    }
}

/// Thomas algorithm for a general tridiagonal system. `lower[0]` and
/// `upper[n − 1]` are ignored. The caller guarantees diagonal dominance.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0];
    c[0] = upper[0] / pivot;
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / pivot;
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(nx: usize) -> Grid {
        Grid::new(Interval::new(0.0, 1.0), nx).unwrap()
    }

    fn discrete_eigenvalue(h: f64) -> f64 {
        (2.0 - 2.0 * (PI * h).cos()) / (h * h)
    }

    #[test]
    fn nodes_are_uniform() {
        let g = unit(9);
        assert!((g.x(0) - 0.1).abs() < 1e-15);
        assert!((1.0 - g.x(8) - 0.1).abs() < 1e-15);
        for i in 0..8 {
            assert!((g.x(i + 1) - g.x(i) - g.h()).abs() < 1e-15);
        }
    }

    #[test]
    fn laplacian_is_exact_on_quadratics() {
        let g = unit(37);
        let v = g.sample(|x| x * (1.0 - x));
        for lv in g.laplacian_apply(&v).unwrap() {
            assert_relative_eq!(lv, -2.0, epsilon = 1e-9);
        }
        assert!(g
            .laplacian_apply(&[0.0; 37])
            .unwrap()
            .iter()
            .all(|&a| a == 0.0));
    }

    #[test]
    fn laplacian_eigenvector() {
        let g = unit(99);
        let lam = discrete_eigenvalue(g.h());
        let v = g.sample(|x| (PI * x).sin());
        let lv = g.laplacian_apply(&v).unwrap();
        // Relative to the sup of λ_h v: near the walls v ~ h, and per-node
        // ratios there sit at the ulp-amplification floor 4/(h²λ_h) · eps.
        let err = lv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a + lam * b).abs())
            .fold(0.0, f64::max);
        let rel = err / (lam * linf(&v));
        assert!(rel <= 1e-12, "relative error {rel:e}");
        assert_relative_eq!(g.principal_eigenvalue(), lam, max_relative = 1e-14);
    }

    #[test]
    fn laplacian_rejects_wrong_length() {
        let g = unit(5);
        assert!(matches!(
            g.laplacian_apply(&[1.0; 4]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rayleigh_quotient_converges_to_pi_squared() {
        let g = unit(999);
        let v = g.sample(|x| (PI * x).sin());
        let lv = g.laplacian_apply(&v).unwrap();
        let rq = -g.inner(&v, &lv) / g.inner(&v, &v);
        assert!((rq - PI * PI).abs() < 1e-4);
    }

    #[test]
    fn shifted_solve_recovers_eigenvector() {
        let g = unit(99);
        let lam = discrete_eigenvalue(g.h());
        let rhs = g.sample(|x| (lam + 1.0) * (PI * x).sin());
        let v = g.solve_shifted_laplacian(1.0, &rhs).unwrap();
        for (i, vi) in v.iter().enumerate() {
            assert!((vi - (PI * g.x(i)).sin()).abs() <= 1e-10);
        }
        let zero = g.solve_shifted_laplacian(1.0, &[0.0; 99]).unwrap();
        assert!(zero.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn shifted_solve_three_by_three() {
        // h = 0.25: diagonal 1 + 32 = 33, off-diagonal -16. Eliminating by
        // hand with rhs = 1: symmetric solution (a, b, a) with
        // 33a - 16b = 1 and -32a + 33b = 1, so a = 49/577, b = 65/577.
        let g = unit(3);
        assert_eq!(g.h(), 0.25);
        let v = g.solve_shifted_laplacian(1.0, &[1.0; 3]).unwrap();
        assert_relative_eq!(v[0], 49.0 / 577.0, epsilon = 1e-15);
        assert_relative_eq!(v[1], 65.0 / 577.0, epsilon = 1e-15);
        assert_relative_eq!(v[2], 49.0 / 577.0, epsilon = 1e-15);
    }

    #[test]
    fn shifted_solve_rejects_nonpositive_shift() {
        let g = unit(4);
        assert!(g.solve_shifted_laplacian(0.0, &[1.0; 4]).is_err());
        assert!(g.solve_shifted_laplacian(-2.0, &[1.0; 4]).is_err());
    }

    #[test]
    fn norms() {
        let g = unit(9);
        assert_eq!(g.norm(&[1.0; 9], Norm::Linf).unwrap(), 1.0);
        for kind in [Norm::L2, Norm::Linf, Norm::H10] {
            assert_eq!(g.norm(&[0.0; 9], kind).unwrap(), 0.0);
        }
        let g = unit(999);
        let v = g.sample(|x| (PI * x).sin());
        assert!((g.norm(&v, Norm::L2).unwrap() - 0.5f64.sqrt()).abs() < 1e-3);
        // |sin'|² integrates to π²/2.
        assert!((g.norm(&v, Norm::H10).unwrap() - (PI * PI / 2.0).sqrt()).abs() < 1e-3);
        assert!("bogus".parse::<Norm>().is_err());
        assert_eq!("H10".parse::<Norm>().unwrap(), Norm::H10);
    }

    #[test]
    fn masks_use_strict_membership() {
        let g = unit(9);
        let m = Mask::new(&g, Interval::new(0.0, 0.5)).unwrap();
        // Node 0.5 is on the boundary and excluded.
        assert_eq!(m.support(), 0..4);
        assert_eq!(m.weights()[4], 0.0);
        assert!(Mask::new(&g, Interval::new(0.51, 0.59)).is_err());
        assert!(Mask::new(&g, Interval::new(0.0, 1.0)).unwrap().is_full());
    }

    #[test]
    fn general_tridiagonal_matches_constant_factorization() {
        let g = unit(17);
        let inv_h2 = 1.0 / (g.h() * g.h());
        let rhs = g.sample(|x| (3.0 * x).cos() + x);
        let n = g.nx();
        let v = solve_tridiagonal(
            &vec![-inv_h2; n],
            &vec![2.5 + 2.0 * inv_h2; n],
            &vec![-inv_h2; n],
            &rhs,
        );
        let w = g.solve_shifted_laplacian(2.5, &rhs).unwrap();
        for (a, b) in v.iter().zip(&w) {
            assert_relative_eq!(a, b, max_relative = 1e-13);
        }
    }

    proptest! {
        #[test]
        fn laplacian_is_linear(
            u in prop::collection::vec(-5.0f64..5.0, 12),
            v in prop::collection::vec(-5.0f64..5.0, 12),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let g = unit(12);
            let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lc = g.laplacian_apply(&combo).unwrap();
            let lu = g.laplacian_apply(&u).unwrap();
            let lv = g.laplacian_apply(&v).unwrap();
            let scale = 20.0 / (g.h() * g.h());
            for i in 0..12 {
                prop_assert!((lc[i] - (a * lu[i] + b * lv[i])).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn shifted_solve_round_trip(
            rhs in prop::collection::vec(-10.0f64..10.0, 2..60),
            sigma in 1e-3f64..1e4,
        ) {
            let g = unit(rhs.len());
            let v = g.solve_shifted_laplacian(sigma, &rhs).unwrap();
            let lv = g.laplacian_apply(&v).unwrap();
            let res: Vec<f64> = (0..rhs.len()).map(|i| sigma * v[i] - lv[i] - rhs[i]).collect();
            let rn = g.l2(&rhs).max(1e-300);
            prop_assert!(g.l2(&res) <= 1e-10 * rn);
        }

        #[test]
        fn negative_laplacian_is_positive_definite(
            v in prop::collection::vec(-1.0f64..1.0, 3..40),
        ) {
            prop_assume!(v.iter().any(|a| a.abs() > 1e-6));
            let g = unit(v.len());
            let lv = g.laplacian_apply(&v).unwrap();
            prop_assert!(-g.inner(&v, &lv) > 0.0);
            // Summation by parts: ⟨v, −Δ_h v⟩ equals the discrete H¹₀ seminorm.
            let h10 = g.h10_squared(&v);
            prop_assert!((-g.inner(&v, &lv) - h10).abs() <= 1e-9 * h10.max(1.0));
        }
    }
}
