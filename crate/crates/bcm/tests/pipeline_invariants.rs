use bcm::bcp::{solve_full_family, solve_special_family, FamilyTarget};
use bcm::forward::{
    apply_control_operator, extract_response_kernel, solve_wave, ExtractConfig, FdConfig, ResponseKernel, WaveSystem,
};
use bcm::inverse::{reconstruct_from_medium, reconstruct_krein, roundtrip, Method, RoundtripConfig};
use bcm::media::{build_eikonal, make_test_medium, sl_integrate, MediumProfile};
use bcm::numerics::{seeded_smooth_probes, trapezoid_weights_for, SampledFunction, TimeGrid};
use bcm::operators::{apply_response, assemble_connecting, ResponseMode};
use proptest::prelude::*;

fn kernel(system: WaveSystem, m: &MediumProfile, n: usize) -> ResponseKernel {
    extract_response_kernel(system, m, 1.0, &ExtractConfig::new(n)).unwrap()
}

/// `sin(pi t)^4`: flat onset, so fronts carry no kinks.
fn flat_onset(grid: TimeGrid, delay: f64) -> SampledFunction {
    SampledFunction::from_fn(grid, |t| {
        let s = t - delay;
        if s <= 0.0 {
            0.0
        } else {
            (std::f64::consts::PI * s).sin().powi(4)
        }
    })
    .unwrap()
}

#[test]
fn leapfrog_self_converges_at_second_order() {
    let m = make_test_medium("gl_rational").unwrap();
    let final_slice = |hx: f64| {
        let grid = TimeGrid::new(1.0, 2000).unwrap();
        solve_wave(WaveSystem::Dirichlet, &m, &flat_onset(grid, 0.0), 1.0, &FdConfig::new(hx)).unwrap()
    };
    let fields: Vec<_> = [0.01, 0.005, 0.0025].iter().map(|&h| final_slice(h)).collect();
    let xs: Vec<f64> = (0..=40).map(|i| i as f64 * 0.025).collect();
    let diff = |a: usize, b: usize| xs.iter().map(|&x| (fields[a].sample(x, 1.0) - fields[b].sample(x, 1.0)).abs()).fold(0.0, f64::max);
    let order = (diff(0, 1) / diff(1, 2)).log2();
    assert!(order >= 1.9, "observed order {order}");
}

#[test]
fn delayed_control_delays_the_field() {
    let m = make_test_medium("gl_rational").unwrap();
    let grid = TimeGrid::new(1.0, 2000).unwrap();
    let cfg = FdConfig::new(0.0025);
    let plain = solve_wave(WaveSystem::Dirichlet, &m, &flat_onset(grid, 0.0), 1.0, &cfg).unwrap();
    let delayed = solve_wave(WaveSystem::Dirichlet, &m, &flat_onset(grid, 0.25), 1.0, &cfg).unwrap();
    let scale = plain.max_abs();
    for i in 0..=30 {
        let x = i as f64 * 0.025;
        let e = (delayed.sample(x, 1.0) - plain.sample(x, 0.75)).abs();
        assert!(e <= 1e-3 * scale, "x = {x}: {e} vs scale {scale}");
    }
}

#[test]
fn control_states_reproduce_connecting_pairing() {
    for name in ["gl_rational", "krein_exp"] {
        let m = make_test_medium(name).unwrap();
        let k = kernel(WaveSystem::Dirichlet, &m, 256);
        let c = assemble_connecting(&k, 1.0).unwrap();
        let probes = seeded_smooth_probes(42, 3, TimeGrid::new(1.0, 256).unwrap());
        let states: Vec<SampledFunction> =
            probes.iter().map(|f| apply_control_operator(WaveSystem::Dirichlet, &m, f, 1.0).unwrap()).collect();
        for i in 0..3 {
            for j in i..3 {
                let (u, v) = (&states[i], &states[j]);
                let w = trapezoid_weights_for(u.len(), u.step());
                let energy: f64 =
                    (0..u.len()).map(|l| w[l] * m.rho_at(u.grid().node(l)) * u.values()[l] * v.values()[l]).sum();
                let pairing = c.bilinear(probes[i].values(), probes[j].values());
                let norm = (c.bilinear(probes[i].values(), probes[i].values()) * c.bilinear(probes[j].values(), probes[j].values())).sqrt();
                assert!((energy - pairing).abs() <= 0.02 * norm, "{name} ({i},{j}): {energy} vs {pairing}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn connecting_operators_are_symmetric(
        c in prop::array::uniform4(-1.0f64..1.0),
        d in prop::array::uniform4(-1.0f64..1.0),
        sys in 0usize..3,
    ) {
        let system = [WaveSystem::Dirichlet, WaveSystem::Neumann, WaveSystem::Scattering][sys];
        let base = ResponseKernel::trivial(system, 2.0, 64).unwrap();
        let r = SampledFunction::from_fn(base.r().grid(), |t| base.r().eval(t) + 0.2 * (c[0] * t).sin() + 0.1 * c[1] * t * t).unwrap();
        let k = match system {
            WaveSystem::Dirichlet => ResponseKernel::dirichlet(r, 1.0, 0.1 * c[2]).unwrap(),
            WaveSystem::Neumann => ResponseKernel::neumann(r, 1.0, 0.0).unwrap(),
            WaveSystem::Scattering => ResponseKernel::scattering(r, 1.0).unwrap(),
        };
        let op = assemble_connecting(&k, 1.0).unwrap();
        let n = op.size();
        let f: Vec<f64> = (0..n).map(|i| (c[3] * i as f64 + d[0]).cos()).collect();
        let g: Vec<f64> = (0..n).map(|i| d[1] + d[2] * (i as f64 * 0.1).sin() + d[3] * i as f64 / n as f64).collect();
        let (a, b) = (op.bilinear(&f, &g), op.bilinear(&g, &f));
        let scale = op.bilinear(&f, &f).abs().max(1.0) * op.bilinear(&g, &g).abs().max(1.0);
        prop_assert!((a - b).abs() <= 1e-12 * scale.sqrt().max(1.0));
    }

    #[test]
    fn response_adjoint_is_consistent(
        c in prop::array::uniform3(-1.0f64..1.0),
        w in 0.5f64..3.0,
    ) {
        let grid = TimeGrid::new(2.0, 256).unwrap();
        let r = SampledFunction::from_fn(grid, |t| c[0] + c[1] * (w * t).sin() + c[2] * t).unwrap();
        let k = ResponseKernel::dirichlet(r, 1.0 + 0.5 * c[0].abs(), 0.3 * c[1]).unwrap();
        let tg = TimeGrid::new(1.0, 128).unwrap();
        let f = SampledFunction::from_fn(tg, |t| (w * t).sin() * t).unwrap();
        let g = SampledFunction::from_fn(tg, |t| (1.0 - t) * (1.0 + c[2] * t)).unwrap();
        let rf = apply_response(&k, &f, ResponseMode::Forward).unwrap();
        let rg = apply_response(&k, &g, ResponseMode::Adjoint).unwrap();
        let wts = trapezoid_weights_for(tg.len(), tg.step());
        let lhs: f64 = (0..tg.len()).map(|i| wts[i] * rf.values()[i] * g.values()[i]).sum();
        let rhs: f64 = (0..tg.len()).map(|i| wts[i] * f.values()[i] * rg.values()[i]).sum();
        let scale = rf.max_abs() * g.max_abs() + f.max_abs() * rg.max_abs();
        prop_assert!((lhs - rhs).abs() <= 1e-3 * scale, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn delayed_controls_shift_the_response(shift in 1usize..40) {
        let m = make_test_medium("gl_rational").unwrap();
        let k = kernel(WaveSystem::Dirichlet, &m, 128);
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let f = flat_onset(grid, 0.0);
        let g = SampledFunction::new(
            grid,
            (0..grid.len()).map(|i| if i < shift { 0.0 } else { f.values()[i - shift] }).collect(),
        )
        .unwrap();
        let rf = apply_response(&k, &f, ResponseMode::Forward).unwrap();
        let rg = apply_response(&k, &g, ResponseMode::Forward).unwrap();
        // one-sided derivative stencils at both ends are not shift invariant
        for i in shift + 1..grid.len() - 1 {
            prop_assert!((rg.values()[i] - rf.values()[i - shift]).abs() <= 1e-9 * rf.max_abs());
        }
        // nodes whose derivative stencil stays inside the zero region
        for i in (0..shift.saturating_sub(1)).filter(|&i| i > 0 || shift > 2) {
            prop_assert!(rg.values()[i].abs() <= 1e-12);
        }
    }
}

#[test]
fn family_members_solve_their_equations() {
    let m = make_test_medium("gl_rational").unwrap();
    let k = kernel(WaveSystem::Dirichlet, &m, 128);
    let idx = [16, 64, 128];
    let fam = solve_special_family(&k, &idx, FamilyTarget::GELFAND_LEVITAN, 0.0).unwrap();
    for (pos, &j) in idx.iter().enumerate() {
        let xi = j as f64 * k.step();
        let c = assemble_connecting(&k, xi).unwrap();
        let out = c.apply(&fam.solutions()[pos]);
        for (i, v) in out.iter().enumerate() {
            let rhs = xi - i as f64 * k.step();
            assert!((v - rhs).abs() <= 1e-9, "xi = {xi}, node {i}: {}", v - rhs);
        }
    }
}

#[test]
fn dirichlet_readout_follows_the_density() {
    let m = make_test_medium("krein_exp").unwrap();
    let k = kernel(WaveSystem::Dirichlet, &m, 128);
    let fam = solve_full_family(&k, FamilyTarget::GELFAND_LEVITAN, 0.0).unwrap();
    let e = build_eikonal(&m).unwrap();
    let rho0 = m.rho_at(0.0);
    for (xi, f0) in fam.xi_values().iter().zip(fam.readouts()).skip(8) {
        let x = e.x_at(*xi);
        let expected = (m.rho_at(x) / rho0).powf(0.25) * x;
        assert!((f0 - expected).abs() <= 0.02 * expected, "xi = {xi}: {f0} vs {expected}");
    }
}

#[test]
fn neumann_readout_follows_the_density() {
    let m = make_test_medium("krein_exp").unwrap();
    let k = kernel(WaveSystem::Neumann, &m, 128);
    let fam = solve_full_family(&k, FamilyTarget::KREIN, 0.0).unwrap();
    let e = build_eikonal(&m).unwrap();
    let rho0 = m.rho_at(0.0);
    for (xi, f0) in fam.xi_values().iter().zip(fam.readouts()) {
        let expected = (rho0 * m.rho_at(e.x_at(*xi))).powf(0.25);
        assert!((f0.abs() - expected).abs() <= 0.02 * expected, "xi = {xi}");
    }
}

#[test]
fn scattering_readout_matches_backward_oracle() {
    let m = make_test_medium("scatter_bump").unwrap();
    let kp = 1.0;
    let k = kernel(WaveSystem::Scattering, &m, 256);
    let fam = solve_full_family(&k, FamilyTarget::Wavenumber(kp), 0.0).unwrap();
    let x0 = 1.5 + 0.1;
    let steps = 3200;
    let h = -x0 / steps as f64;
    let y = sl_integrate(|x| m.q_at(x), x0, h, steps, (-kp * x0).exp(), -kp * (-kp * x0).exp(), -kp * kp);
    for (xi, v) in fam.xi_values().iter().zip(fam.readouts()) {
        let oracle = if *xi >= x0 { (-kp * xi).exp() } else { y[((x0 - xi) / -h).round() as usize] };
        assert!((v - oracle).abs() <= 0.02 * oracle, "xi = {xi}: {v} vs {oracle}");
    }
}

#[test]
fn krein_ignores_density_beyond_the_horizon() {
    let base = make_test_medium("krein_exp").unwrap();
    // x(T) for T = 1 is ln 1.5; freeze the density shortly after it
    let cut = 1.5f64.ln() + 0.02;
    let padded = MediumProfile::from_fn(4.0, 4000, |x| 4.0 * (2.0 * x.min(cut)).exp(), |_| 0.0, None).unwrap();
    let a = reconstruct_krein(&kernel(WaveSystem::Neumann, &base, 256), 0.0).unwrap();
    let b = reconstruct_krein(&kernel(WaveSystem::Neumann, &padded, 256), 0.0).unwrap();
    for (u, v) in a.recovered.rho().iter().zip(b.recovered.rho()) {
        assert!((u - v).abs() <= 1e-6 * u, "{u} vs {v}");
    }
    assert!(a.front.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn zero_potential_reconstructions_stay_flat() {
    let m = make_test_medium("unit").unwrap();
    for method in [Method::Gl, Method::Marchenko] {
        let rep = reconstruct_from_medium(&m, method, 256, &RoundtripConfig::default()).unwrap();
        assert!(rep.recovered.q().iter().all(|q| q.abs() <= 1e-2), "{}", method.name());
    }
}

#[test]
fn krein_and_marchenko_errors_halve_under_refinement() {
    let cfg = RoundtripConfig::default();
    for (name, method) in [("krein_exp", Method::Krein), ("scatter_bump", Method::Marchenko)] {
        let rep = roundtrip(&make_test_medium(name).unwrap(), method, &[128, 256], &cfg).unwrap();
        let order = rep.orders[0].expect("errors above roundoff");
        assert!(order >= 1.5, "{name}: order {order}");
    }
}
