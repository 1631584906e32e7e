use bcm::media::{build_eikonal, sl_solution, Catalog};
use bcm::numerics::{
    apply_volterra2, cholesky_posdef, derivative, inner, seeded_smooth_probes, solve_volterra2, time_reverse, DenseOperator,
    SampledFunction, TimeGrid,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn quadratic(c: [f64; 3]) -> impl Fn(f64) -> f64 {
    move |t| c[0] + c[1] * t + c[2] * t * t
}

proptest! {
    #[test]
    fn trapezoid_product_of_quadratics_converges_at_second_order(
        a in prop::array::uniform3(-2.0f64..2.0),
        b in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let (fa, fb) = (quadratic(a), quadratic(b));
        let prod = |t: f64| fa(t) * fb(t);
        let dprod = |t: f64| (a[1] + 2.0 * a[2] * t) * fb(t) + fa(t) * (b[1] + 2.0 * b[2] * t);
        // leading error term is h^2/12 (p'(1) - p'(0)); keep it away from zero
        prop_assume!((dprod(1.0) - dprod(0.0)).abs() > 0.5);
        // exact integral of the quartic product by 3-point Gauss-Legendre on [0, 1]
        let nodes = [(0.5 - 0.5 * (0.6f64).sqrt(), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + 0.5 * (0.6f64).sqrt(), 5.0 / 18.0)];
        let exact: f64 = nodes.iter().map(|(t, w)| w * prod(*t)).sum();
        let err = |n: usize| {
            let g = TimeGrid::new(1.0, n).unwrap();
            let f = SampledFunction::from_fn(g, &fa).unwrap();
            let h = SampledFunction::from_fn(g, &fb).unwrap();
            (inner(&f, &h).unwrap() - exact).abs()
        };
        let ratio = err(32) / err(64);
        prop_assert!((3.5..=4.5).contains(&ratio), "ratio {}", ratio);
    }

    #[test]
    fn volterra_solve_then_apply_reproduces_rhs(
        c in prop::array::uniform3(-1.0f64..1.0),
        alpha in 0.5f64..2.0,
        n in 8usize..64,
    ) {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let kernel = move |t: f64, s: f64| c[0] + c[1] * (t - s) + c[2] * (t * s).cos();
        let rhs = SampledFunction::from_fn(grid, |t| (3.0 * t).sin() + 1.0).unwrap();
        let diag = SampledFunction::from_fn(grid, |t| alpha + 0.1 * t).unwrap();
        let f = solve_volterra2(kernel, &rhs, &diag).unwrap();
        let back = apply_volterra2(kernel, &f, &diag).unwrap();
        for (x, y) in back.values().iter().zip(rhs.values()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_succeeds_iff_spectrum_is_positive(
        n in 2usize..50,
        seed in 0u64..1000,
        shift in -2.0f64..2.0,
    ) {
        let b = DMatrix::from_fn(n, n, |i, j| (((i * 31 + j * 17) as u64 + seed) as f64 * 0.618).sin() / (n as f64).sqrt());
        let a = &b * b.transpose() + DMatrix::identity(n, n) * shift;
        let eig = a.clone().symmetric_eigen().eigenvalues;
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assume!(lo.abs() > 1e-6 * hi.max(1.0));
        let op = DenseOperator::new(a, vec![1.0; n], true).unwrap();
        prop_assert_eq!(cholesky_posdef(&op).unwrap().is_success(), lo > 0.0);
    }

    #[test]
    fn time_reverse_preserves_trapezoid_norm(values in prop::collection::vec(-10.0f64..10.0, 3..200)) {
        let grid = TimeGrid::new(2.0, values.len() - 1).unwrap();
        let f = SampledFunction::new(grid, values).unwrap();
        let r = time_reverse(&f);
        let (a, b) = (inner(&f, &f).unwrap(), inner(&r, &r).unwrap());
        prop_assert!((a - b).abs() <= 1e-13 * a.max(1.0));
        prop_assert_eq!(time_reverse(&r), f);
    }

    #[test]
    fn seeded_probes_are_reproducible_and_vanish_at_zero(seed in any::<u64>()) {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let a = seeded_smooth_probes(seed, 3, grid);
        prop_assert_eq!(&a, &seeded_smooth_probes(seed, 3, grid));
        for f in &a {
            prop_assert!(f.values()[0].abs() < 1e-15);
        }
    }
}

#[test]
fn eikonal_slope_converges_at_second_order() {
    let err = |n: usize| {
        let m = Catalog::KreinExp.profile(1.0, n).unwrap();
        let e = build_eikonal(&m).unwrap();
        let d = derivative(e.tau().values(), m.step(), 1).unwrap();
        d.iter().enumerate().map(|(j, v)| (v - m.rho_at(m.x(j)).sqrt()).abs()).fold(0.0, f64::max)
    };
    let ratio = err(100) / err(200);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn sturm_oracle_residual_is_second_order() {
    for c in [Catalog::GlRational, Catalog::ScatterBump, Catalog::Unit] {
        let m = c.profile(2.0, 400).unwrap();
        let y = sl_solution(&m, 0.0, 1.0).unwrap();
        let h = m.step();
        let d2 = derivative(y.values(), h, 2).unwrap();
        let sup = y.max_abs();
        for (j, d) in d2.iter().enumerate() {
            let res = -d + m.q()[j] * y.values()[j];
            assert!(res.abs() <= 10.0 * h * h * sup, "{} at node {j}: {res}", c.name());
        }
    }
}

#[test]
fn extended_density_keeps_travel_time_slope() {
    for c in Catalog::ALL {
        let m = c.profile(1.0, 200).unwrap();
        let long = m.resampled(3.0, 600).unwrap();
        let e = build_eikonal(&long).unwrap();
        let slope_floor = m.min_rho().sqrt();
        for w in e.tau().values().windows(2) {
            assert!((w[1] - w[0]) / long.step() >= slope_floor * (1.0 - 1e-12), "{}", c.name());
        }
    }
}
