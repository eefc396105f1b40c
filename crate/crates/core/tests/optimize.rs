mod common;

use rand::Rng;
use turnpike_core::prelude::*;

use common::*;

fn fd_instance() -> DiscreteProblem {
    let mut s = spec(
        10.0,
        0.5,
        Profile::sine(1.5),
        Profile::Parabola { amplitude: 1.0 },
        Nonlinearity::cubic(),
    );
    s.control_region = Interval::new(0.1, 0.7);
    problem(&s, 20, 20)
}

#[test]
fn gradient_matches_central_differences() {
    let p = fd_instance();
    let mut r = rng(20_240_601);
    let u = random_control(&p, &mut r, 2.0);
    let g = p.gradient(&u).unwrap().gradient;
    let eps = 1e-5;
    for _ in 0..5 {
        let d = random_control(&p, &mut r, 1.0);
        let mut plus = u.clone();
        plus.axpy(eps, &d);
        let mut minus = u.clone();
        minus.axpy(-eps, &d);
        let fd = (p.evaluate_cost(&plus).unwrap().total - p.evaluate_cost(&minus).unwrap().total)
            / (2.0 * eps);
        let adj = g.inner(&d, p.dt, p.grid.h());
        let rel = (fd - adj).abs() / adj.abs();
        assert!(
            rel <= 1e-6,
            "relative error {rel:e} (fd {fd}, adjoint {adj})"
        );
    }
}

#[test]
fn gradient_vanishes_off_the_control_region() {
    let p = fd_instance();
    let u = random_control(&p, &mut rng(1), 1.0);
    let g = p.gradient(&u).unwrap().gradient;
    for k in 0..p.nt() {
        for i in 0..p.nx() {
            if !p.control_mask.contains(i) {
                assert_eq!(g.step(k)[i], 0.0);
            }
        }
    }
}

#[test]
fn zero_control_cost_matches_independent_quadrature() {
    let s = ProblemSpec::reference().with_horizon(0.5);
    let p = DiscreteProblem::new(&s, DiscretizationSpec::from_dt(40, 0.5, 1e-4).unwrap()).unwrap();
    let zero = Control::zeros(p.nx(), p.nt());
    let y = p.solve_forward(&zero).unwrap();
    let h = 1.0 / 41.0;
    let mut acc = 0.0;
    for k in 1..=p.nt() {
        for v in y.snapshot(k) {
            acc += h * (v - 1.0) * (v - 1.0);
        }
    }
    let expected = 0.5 * 1000.0 * 1e-4 * acc;
    let cost = p.evaluate_cost(&zero).unwrap();
    assert!((cost.total - expected).abs() <= 1e-10 * expected);
    assert_eq!(cost.control, 0.0);
}

#[test]
fn constant_state_tracking_cost() {
    let mut s = spec(
        1000.0,
        2.0,
        Profile::constant(0.0),
        Profile::constant(1.0),
        Nonlinearity::cubic(),
    );
    s.control_region = Interval::new(0.0, 0.5);
    let p = problem(&s, 99, 50);
    let cost = p.evaluate_cost(&Control::zeros(99, 50)).unwrap().total;
    // Discrete measure of (0, 1) is h·nx.
    let measure = p.grid.h() * 99.0;
    assert!((cost - 1000.0 * measure * 2.0 / 2.0).abs() <= 1e-9);
    assert!((cost - 1000.0).abs() <= 1000.0 * p.grid.h() + 1e-9);
}

#[test]
fn converged_optimum_satisfies_optimality_system() {
    let mut s = spec(
        20.0,
        1.0,
        Profile::sine(2.0),
        Profile::constant(0.5),
        Nonlinearity::cubic(),
    );
    s.control_region = Interval::new(0.0, 0.5);
    let p = problem(&s, 30, 200);
    let opts = DescentOptions {
        grad_tol: 1e-8,
        ..DescentOptions::default()
    };
    let r = p.minimize_from_zero(&opts).unwrap();
    assert_eq!(r.termination, Termination::Converged);
    assert!(r.grad_norm() <= 1e-8);
    let res = p.optimality_system_residual(&r.state, &r.adjoint).unwrap();
    assert!(res <= 10.0 * opts.grad_tol, "residual {res:e}");
    for w in r.cost_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12));
    }
    let zero = p.evaluate_cost(&Control::zeros(30, 200)).unwrap().total;
    assert!(r.cost.total <= zero);
}

#[test]
fn halved_stepsize_reaches_the_same_cost() {
    // Reference instance on a coarser grid.
    let s = ProblemSpec::reference();
    let p = DiscreteProblem::new(&s, DiscretizationSpec::from_dt(40, 5.0, 5e-4).unwrap()).unwrap();
    let base = p.default_stepsize();
    let run = |step: f64| {
        p.minimize_from_zero(&DescentOptions {
            stepsize: StepSize::Fixed(step),
            grad_tol: 1e-6,
            max_iters: 10_000,
            ..DescentOptions::default()
        })
        .unwrap()
    };
    let (a, b) = (run(base), run(0.5 * base));
    assert_eq!(a.termination, Termination::Converged);
    assert_eq!(b.termination, Termination::Converged);
    let rel = (a.cost.total - b.cost.total).abs() / a.cost.total;
    assert!(rel <= 5e-3, "relative cost difference {rel:e}");
}

#[test]
fn pure_control_cost_decays_geometrically() {
    let s = spec(
        0.0,
        1.0,
        Profile::sine(1.0),
        Profile::constant(1.0),
        Nonlinearity::cubic(),
    );
    let p = problem(&s, 10, 10);
    let mut r = rng(5);
    let u0 = random_control(&p, &mut r, 1.0);
    let step = r.gen_range(0.1..0.9);
    let res = p.gradient_descent(&u0, step, 7, 0.0).unwrap();
    let expected = u0.scaled((1.0 - step).powi(7));
    for (a, b) in res.control.values().iter().zip(expected.values()) {
        assert!((a - b).abs() <= 1e-14);
    }
}
