use super::*;
use crate::grid::{mass, Grid1D};
use crate::initial_data::InitialData;

#[test]
fn source_solution_support_and_mass() {
    let a = 1.3;
    for t in [0.01, 0.02, 0.5] {
        let edge = a * f64::powf(t, 0.2);
        assert_eq!(exact_source_n1(edge * 1.000001, t, a).unwrap(), 0.0);
        assert_eq!(exact_source_n1(-edge * 1.000001, t, a).unwrap(), 0.0);
        assert!(exact_source_n1(edge * 0.999, t, a).unwrap() > 0.0);
    }
    let g = Grid1D::new(-1.5, 1.5, 60001).unwrap();
    let m1 = mass(&source_profile(g, 0.01, a).unwrap());
    let m2 = mass(&source_profile(g, 0.5, a).unwrap());
    assert!((m1 - m2).abs() <= 1e-10 * m1, "{m1} vs {m2}");
    assert!((m1 - 16.0 * a.powi(5) / 1800.0).abs() <= 1e-9 * m1);
    assert!(exact_source_n1(0.0, 0.0, a).is_err());
}

/// Plugs the closed form into `u_t + (u u_xxx)_x` with high-order
/// difference quotients; the polynomial structure in `x` makes the spatial
/// stencils exact up to round-off.
#[test]
fn source_solution_substitution() {
    let a = 1.0;
    let u = |x: f64, t: f64| exact_source_n1(x, t, a).unwrap();
    let h = 1e-2;
    let uxxx = |x: f64, t: f64| {
        let c = [0.125, -1.0, 1.625, 0.0, -1.625, 1.0, -0.125];
        (0..7).map(|j| c[j] * u(x + (j as f64 - 3.0) * h, t)).sum::<f64>() / (h * h * h)
    };
    let flux = |x: f64, t: f64| u(x, t) * uxxx(x, t);
    for t in [0.01, 0.015, 0.02] {
        let edge = a * f64::powf(t, 0.2);
        for i in 0..9 {
            let x = -0.6 * edge + 1.2 * edge * i as f64 / 8.0;
            let hx = 1e-3;
            let fx = (flux(x - 2.0 * hx, t) - 8.0 * flux(x - hx, t) + 8.0 * flux(x + hx, t) - flux(x + 2.0 * hx, t)) / (12.0 * hx);
            let d = |k: f64| (u(x, t + k) - u(x, t - k)) / (2.0 * k);
            let k = 1e-4 * t;
            let ut = (4.0 * d(0.5 * k) - d(k)) / 3.0;
            let res = ut + fx;
            assert!(res.abs() < 1e-8 * ut.abs().max(1.0), "t = {t}, x = {x}: u_t = {ut}, residual {res}");
        }
    }
}

#[test]
fn public_residual_agrees() {
    for t in [0.01, 0.02] {
        let r = source_residual(1.0, t, 9).unwrap();
        assert!(r < 1e-8, "t = {t}: {r}");
    }
    assert!(source_residual(1.0, 0.0, 9).is_err());
}

#[test]
fn loglog_fit() {
    let xs = [0.5, 1.0, 2.0, 4.0];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-2.5)).collect();
    let f = fit_loglog(&xs, &ys, 4).unwrap();
    assert!((f.slope + 2.5).abs() < 1e-12 && f.stderr < 1e-12);
    assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(matches!(fit_loglog(&xs[..3], &ys[..3], 4), Err(Error::NoFit(_))));
    assert!(fit_loglog(&[1.0, 1.0], &[1.0, 2.0], 2).is_err());
}

#[test]
fn classification_rules() {
    use Classification::*;
    assert_eq!(classify(&[Some(0.03), Some(0.017), Some(0.012)]), Instantaneous);
    assert_eq!(classify(&[Some(0.1256), Some(0.1220), Some(0.1204)]), Waiting);
    assert_eq!(classify(&[None, None, None]), Waiting);
    assert_eq!(classify(&[Some(0.1), None]), Inconclusive);
    assert_eq!(classify(&[Some(0.1), Some(0.08), Some(0.07)]), Inconclusive);
    assert_eq!(classify(&[Some(0.1)]), Inconclusive);
}

#[test]
fn convergence_zero_span_is_exact() {
    let cc = ConvergenceConfig {
        grids: vec![64, 128],
        t1: 0.01,
        ..Default::default()
    };
    let s = convergence_study(&cc, &SolverConfig::with_n(1.0)).unwrap();
    assert!(s.rows.iter().all(|r| r.l1 == 0.0 && r.sup == 0.0));
}

#[test]
fn convergence_is_second_order_on_coarse_grids() {
    let cc = ConvergenceConfig {
        grids: vec![64, 128, 256],
        ..Default::default()
    };
    let s = convergence_study(&cc, &SolverConfig::with_n(1.0)).unwrap();
    assert!(s.monotone);
    for r in &s.l1_ratios {
        assert!((3.0..=5.0).contains(r), "{:?}", s.l1_ratios);
    }
}

#[test]
fn covariant_kappa_sweep_recovers_the_exponent() {
    let n = 2.5;
    let sc = KappaSweepConfig {
        grid: crate::grid::GridSpec {
            x_min: -0.5,
            x_max: 1.5,
            n_nodes: 129,
        },
        shape: InitialData::PowerLaw {
            x0: 0.0,
            beta: 4.0 / n,
            amplitude: 1.0,
            width: 1.0,
        },
        x0: None,
        kappas: vec![4.0, 0.5, 2.0, 1.0],
        t_max: 0.3,
        thetas: vec![1e-7, 1e-6],
        margin_cells: 4.0,
        dt_policy: DtPolicy::Covariant { kappa_ref: 1.0 },
        normalize: false,
        records: 5,
    };
    let cfg = SolverConfig {
        dt_max: 1e-3,
        ..SolverConfig::with_n(n)
    };
    let r = kappa_sweep(&sc, &cfg, 2).unwrap();
    assert_eq!(r.runs.iter().map(|r| r.kappa).collect::<Vec<_>>(), vec![0.5, 1.0, 2.0, 4.0]);
    assert!((r.fit.slope + n).abs() < 0.01 * n, "slope {}", r.fit.slope);
    assert!(r.c_est <= r.big_c_est && r.spread() < 1.0 + 1e-6);

    let dir = tempfile::tempdir().unwrap();
    let m = crate::manifest::RunManifest::new("sweep", &sc, serde_json::Value::Null, &[]).unwrap();
    let mut out = StudyOutput::create(dir.path(), m).unwrap();
    r.write(&mut out).unwrap();
    let m = out.finish().unwrap();
    assert!(m.outputs.contains(&"summary.json".to_string()));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["slope"].as_f64().unwrap(), r.fit.slope);
    assert!(dir.path().join("runs/kappa_03.csv").exists());
}

#[test]
fn all_censored_sweep_is_no_fit() {
    let sc = KappaSweepConfig {
        grid: crate::grid::GridSpec {
            x_min: -0.5,
            x_max: 1.5,
            n_nodes: 65,
        },
        shape: InitialData::PowerLaw {
            x0: 0.0,
            beta: 1.6,
            amplitude: 1.0,
            width: 1.0,
        },
        x0: None,
        kappas: vec![0.5, 1.0, 2.0, 4.0],
        t_max: 1e-6,
        thetas: vec![1e-7],
        margin_cells: 4.0,
        dt_policy: DtPolicy::Fixed,
        normalize: true,
        records: 2,
    };
    let err = kappa_sweep(&sc, &SolverConfig::with_n(2.5), 1).unwrap_err();
    assert!(matches!(err, Error::NoFit(ref m) if m.contains("raise t_max")), "{err}");
}
