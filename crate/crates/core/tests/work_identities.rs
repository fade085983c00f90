use std::f64::consts::PI;

use feqj::dynamics::{ConditionedState, IntegratorConfig, Rk4, Scenario};
use feqj::feqj::{EnsembleSpec, FeqjConfig, TrajectoryEngine};
use feqj::matrix::Mat2;
use feqj::model::{power_operator, CalorimeterModel, DriveProtocol, Resolution, SectorSpace};
use feqj::work::{
    poa_moments, propagate, propagate_work, sampled_moments, tmp_moments_per_initial_state,
    tmp_moments_propagated,
};

fn scenario(n: usize, g2: f64, drive: DriveProtocol<f64>, beta: f64) -> Scenario<f64> {
    let model = CalorimeterModel::uniform_tls(n, g2, Resolution::Microcanonical).unwrap();
    Scenario::new(SectorSpace::new(model).unwrap(), drive, beta).unwrap()
}

#[test]
fn rwa_drive_gives_identical_means() {
    let sc = scenario(10, 1e-3, DriveProtocol::rwa_resonant(0.05, 100.0), 1.0);
    let sweep = propagate_work(&sc, IntegratorConfig::rk4(50_000), 1, &[12_345, 50_000]).unwrap();
    for p in &sweep.points {
        assert!((p.tmp.first() - p.poa.first()).abs() < 1e-9, "{p:?}");
        assert!(p.diagnostic.abs() < 1e-12);
        assert!(p.boundary.abs() < 1e-12);
        assert!(p.tmp.first() > 1e-3, "drive should do work");
    }
}

#[test]
fn diagnostic_equals_difference_where_drive_vanishes() {
    for w in [0.9, 1.0, 1.1] {
        let k = 9.0;
        let tau = k * PI / w;
        let sc = scenario(10, 1e-2, DriveProtocol::sinusoidal(0.05, w, tau), 1.0);
        let sweep = propagate_work(&sc, IntegratorConfig::rk4(30_000), 1, &[10_000, 30_000]).unwrap();
        let end = &sweep.points[1];
        let diff = end.tmp.first() - end.poa.first();
        assert!((end.diagnostic - diff).abs() < 1e-9, "ω={w}: {} vs {diff}", end.diagnostic);
        assert!(end.diagnostic.abs() > 1e-6 || w == 1.0);
        for p in &sweep.points {
            assert!((p.drive_inclusive_difference() - p.diagnostic).abs() < 1e-9);
            assert!((p.generator_integral - p.diagnostic).abs() < 1e-12);
        }
    }
}

// n·(τ/n) can round past τ; the last RK4 stage must still see the drive.
#[test]
fn final_stage_lands_on_the_window_end() {
    let w = 0.9;
    let tau = 29.0 * PI / w;
    let sc = scenario(10, 1e-3, DriveProtocol::sinusoidal(0.05, w, tau), 1.0);
    for n in [50_000, 100_000, 400_000] {
        let p = &propagate_work(&sc, IntegratorConfig::rk4(n), 1, &[n]).unwrap().points[0];
        assert_eq!(p.tau, tau);
        let err = p.diagnostic - (p.tmp.first() - p.poa.first());
        assert!(err.abs() < 1e-12, "n = {n}: {err:e}");
    }
}

#[test]
fn closed_system_tmp_equals_poa() {
    for (w, beta) in [(0.9, 1.0), (1.0, 0.3), (1.3, f64::INFINITY)] {
        let tau = 12.0 * PI / w;
        let sc = scenario(3, 0.0, DriveProtocol::sinusoidal(0.2, w, tau), beta);
        let cfg = IntegratorConfig::rk4(40_000);
        let tmp = tmp_moments_propagated(&sc, cfg, 2).unwrap();
        let poa = poa_moments(&sc, cfg).unwrap();
        assert!((tmp.first() - poa.first()).abs() < 1e-10, "{tmp:?} {poa:?}");
        assert!((tmp.second() - poa.second()).abs() < 1e-10, "{tmp:?} {poa:?}");
    }
}

#[test]
fn pi_pulse_pumps_one_quantum() {
    let lambda0 = 0.05;
    let sc = scenario(10, 0.0, DriveProtocol::rwa_resonant(lambda0, PI / lambda0), f64::INFINITY);
    let cfg = IntegratorConfig::rk4(20_000);
    let sweep = propagate_work(&sc, cfg, 2, &[cfg.n_steps]).unwrap();
    let p = &sweep.points[0];
    assert!((p.excited_population - 1.0).abs() < 1e-10);
    assert!((p.tmp.first() - 1.0).abs() < 1e-10);
    assert!((p.tmp.second() - 1.0).abs() < 1e-10);
    assert!((p.poa.first() - 1.0).abs() < 1e-10);
}

#[test]
fn chi_propagation_is_linear() {
    let sc = scenario(4, 2e-2, DriveProtocol::sinusoidal(0.1, 1.1, 20.0), 1.0);
    let cfg = IntegratorConfig::rk4(4_000);
    let n = sc.space.len();
    let mut a = ConditionedState::zeros(n);
    a.blocks[1] = Mat2::diag(0.3, 0.0);
    let mut b = ConditionedState::zeros(n);
    b.blocks[3] = Mat2::diag(0.0, 0.7);
    let (wa, wb) = (0.25, 1.75);
    let mut sum = ConditionedState::zeros(n);
    for k in 0..n {
        sum.blocks[k] = a.blocks[k].scale(wa) + b.blocks[k].scale(wb);
    }
    let (pa, _) = propagate(&sc, cfg, a).unwrap();
    let (pb, _) = propagate(&sc, cfg, b).unwrap();
    let (ps, _) = propagate(&sc, cfg, sum).unwrap();
    let scale = ps.max_abs();
    for k in 0..n {
        let lin = pa.blocks[k].scale(wa) + pb.blocks[k].scale(wb);
        assert!((lin - ps.blocks[k]).max_abs() / scale < 1e-12);
    }
}

#[test]
fn chi_route_matches_single_pass() {
    let sc = scenario(10, 1e-3, DriveProtocol::sinusoidal(0.05, 0.9, 40.0), 1.0);
    let cfg = IntegratorConfig::rk4(20_000);
    let a = tmp_moments_propagated(&sc, cfg, 3).unwrap();
    let (b, report) = tmp_moments_per_initial_state(&sc, cfg, 3).unwrap();
    assert!(report.within(&cfg.tolerances));
    for (x, y) in a.moments.iter().zip(&b.moments) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

/// `2 ∫₀^τ dt1 ∫₀^t1 dt2 Re Tr{P(t1) V(t1,t2)[P(t2) ρ(t2)]}` by brute force on
/// a coarse grid: one propagation per inner time, trapezoid rule in both.
#[allow(clippy::needless_range_loop)]
fn literal_double_integral(sc: &Scenario<f64>, grid: usize, substeps: usize) -> f64 {
    let tau = sc.total_time();
    let dt = tau / grid as f64;
    let h = dt / substeps as f64;
    let eq = sc.master_equation();
    let n = sc.space.len();
    let mut rk = Rk4::new(n);
    let f = |t, y: &[Mat2<f64>], d: &mut [Mat2<f64>]| eq.liouvillian_into(t, y, d);
    let advance = |rk: &mut Rk4<f64>, y: &mut [Mat2<f64>], t0: f64| {
        for s in 0..substeps {
            rk.step(f, t0 + s as f64 * h, h, y);
        }
    };
    let trace_p = |t: f64, y: &[Mat2<f64>]| -> f64 {
        let p = power_operator(&sc.drive, t);
        y.iter().map(|b| (p * *b).trace().re).sum()
    };
    let mut rho = sc.initial_state().unwrap().blocks;
    // corr[k1][k2] for k2 ≤ k1
    let mut corr = vec![vec![0.0; grid + 1]; grid + 1];
    for k2 in 0..=grid {
        let t2 = k2 as f64 * dt;
        let p = power_operator(&sc.drive, t2);
        let mut x: Vec<Mat2<f64>> = rho.iter().map(|b| p * *b).collect();
        corr[k2][k2] = trace_p(t2, &x);
        for k1 in k2 + 1..=grid {
            advance(&mut rk, &mut x, (k1 - 1) as f64 * dt);
            corr[k1][k2] = trace_p(k1 as f64 * dt, &x);
        }
        if k2 < grid {
            advance(&mut rk, &mut rho, t2);
        }
    }
    let trap = |v: &[f64]| -> f64 {
        if v.len() < 2 {
            return 0.0;
        }
        dt * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]))
    };
    let inner: Vec<f64> = (0..=grid).map(|k1| trap(&corr[k1][..=k1])).collect();
    2.0 * trap(&inner)
}

#[test]
fn auxiliary_matrix_matches_literal_double_integral() {
    let sc = scenario(4, 2e-2, DriveProtocol::sinusoidal(0.2, 1.1, 10.0), 1.0);
    let poa = poa_moments(&sc, IntegratorConfig::rk4(10_000)).unwrap();
    let coarse = literal_double_integral(&sc, 200, 10);
    let fine = literal_double_integral(&sc, 400, 5);
    // trapezoid error is O(Δ²): Richardson-extrapolate the two grids
    let extrapolated = (4.0 * fine - coarse) / 3.0;
    let rel = (extrapolated - poa.second()).abs() / poa.second().abs();
    assert!(rel < 1e-5, "{extrapolated} vs {} (coarse {coarse}, fine {fine})", poa.second());
    assert!((fine - poa.second()).abs() < (coarse - poa.second()).abs());
}

#[test]
fn sampled_moments_agree_with_propagated() {
    let sc = scenario(6, 1e-2, DriveProtocol::sinusoidal(0.1, 1.0, 30.0), 1.0);
    let n_steps = 6_000;
    let checkpoints = [2_000, 4_000, 6_000];
    let sweep = propagate_work(&sc, IntegratorConfig::rk4(n_steps), 2, &checkpoints).unwrap();
    let eng = TrajectoryEngine::new(sc, FeqjConfig::new(n_steps, 2024)).unwrap();
    let res = eng
        .run_ensemble(&EnsembleSpec {
            n_trajectories: 5_000,
            measurements: checkpoints.to_vec(),
            ..Default::default()
        })
        .unwrap();
    for (p, works) in sweep.points.iter().zip(&res.works) {
        let mc = sampled_moments(works, 2).unwrap();
        for n in 1..=2 {
            let z = (mc.moment(n).unwrap() - p.tmp.moment(n).unwrap()).abs() / mc.std_error(n).unwrap();
            assert!(z < 3.0, "τ={} n={n} z={z}", p.tau);
        }
    }
}
