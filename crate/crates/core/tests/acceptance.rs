//! Acceptance suite for criteria 1–9. Prints one line per criterion and
//! exits nonzero when a criterion fails that is not listed in
//! [`KNOWN_FAILURES`].

use std::process::ExitCode;

use thinfilm::diagnostics::{
    bernis_gruen_check, degeneracy_cascade, energy_balance_monitor, gns_theta, monotonicity_monitor, positive_corpus,
    Cutoff, CylinderMode,
};
use thinfilm::experiments::{
    beta_sweep, convergence_study, counterexample_study, kappa_sweep, source_residual, BetaSweepConfig,
    Classification, ConvergenceConfig, CounterexampleConfig, DtLaw, DtPolicy, KappaSweepConfig,
};
use thinfilm::grid::{GridSpec, Profile};
use thinfilm::initial_data::{parabola, InitialData};
use thinfilm::solver::{run, SolverConfig, TimeSeries};
use thinfilm::Grid1D;

/// Criteria whose wording cannot hold; each is still evaluated and printed.
/// The reason names the measured behaviour that is asserted instead.
const KNOWN_FAILURES: &[(u8, &str)] = &[(
    5,
    "the stated orientation is reversed: beta above 4/n waits and beta below 4/n moves at once",
)];

struct Verdict {
    pass: bool,
    detail: String,
    /// For a known failure: whether the behaviour asserted in its place holds.
    substitute: Option<bool>,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict {
        pass,
        detail,
        substitute: None,
    }
}

fn drop_run(n: f64, nodes: usize, t_end: f64, dt_max: f64, observe: f64) -> TimeSeries {
    let g = Grid1D::new(-1.0, 1.0, nodes).unwrap();
    let u0 = parabola(g, 0.0, 0.5, 1.0).unwrap();
    let cfg = SolverConfig {
        dt_max,
        ..SolverConfig::with_n(n)
    };
    run(&u0, &cfg, t_end, observe, &mut []).unwrap()
}

fn mass_conservation() -> Verdict {
    let mut worst = 0.0f64;
    let mut min_steps = usize::MAX;
    for n in [1.5, 2.5, 2.95] {
        let s = drop_run(n, 512, 0.02, 1e-5, 0.0);
        let m0 = s.records[0].mass;
        let drift = s.records.iter().map(|r| (r.mass - m0).abs() / m0).fold(s.max_mass_drift, f64::max);
        worst = worst.max(drift);
        min_steps = min_steps.min(s.accepted_steps);
    }
    verdict(
        worst <= 1e-10 && min_steps >= 1000,
        format!("max relative drift {worst:.2e} over at least {min_steps} steps (N = 512)"),
    )
}

fn energy_dissipation() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut steps = 0;
    for n in [1.5, 2.5, 2.95] {
        let s = drop_run(n, 256, 0.02, 1e-4, 0.0);
        let tol = SolverConfig::default().newton_tol;
        for w in s.records.windows(2) {
            let slack = 10.0 * tol * (w[1].t - w[0].t);
            worst = worst.max(w[1].energy - w[0].energy - slack);
        }
        steps += s.records.len() - 1;
    }
    verdict(
        worst <= 0.0,
        format!("largest increase beyond 10 newton_tol dt: {worst:.2e} over {steps} steps"),
    )
}

fn source_convergence() -> Verdict {
    let cc = ConvergenceConfig {
        grids: vec![128, 256, 512, 1024],
        dt_law: DtLaw::Diffusive { c: 1.0 },
        ..Default::default()
    };
    let residual = [cc.t0, cc.t1]
        .iter()
        .map(|&t| source_residual(cc.a, t, 17).unwrap())
        .fold(0.0, f64::max);
    if !(residual < 1e-8) {
        return verdict(false, format!("substitution residual {residual:.2e} is not below 1e-8"));
    }
    let st = convergence_study(&cc, &SolverConfig::with_n(1.0)).unwrap();
    let ok = st.l1_ratios.len() == 3 && st.l1_ratios.iter().all(|r| (3.0..=5.0).contains(r));
    let ratios: Vec<String> = st.l1_ratios.iter().map(|r| format!("{r:.3}")).collect();
    verdict(
        ok,
        format!("substitution residual {residual:.1e}; L1 ratios {}", ratios.join(", ")),
    )
}

fn waiting_time_scaling() -> Verdict {
    let n = 2.5;
    let sc = KappaSweepConfig {
        grid: GridSpec {
            x_min: -0.5,
            x_max: 1.5,
            n_nodes: 1025,
        },
        shape: InitialData::PowerLaw {
            x0: 0.0,
            beta: 4.0 / n,
            amplitude: 1.0,
            width: 1.0,
        },
        x0: None,
        kappas: vec![0.5, 1.0, 2.0, 5.0],
        t_max: 1.0,
        thetas: vec![1e-7, 1e-6, 1e-8],
        margin_cells: 4.0,
        dt_policy: DtPolicy::Fixed,
        normalize: false,
        records: 20,
    };
    let cfg = SolverConfig {
        dt_max: 2e-5,
        ..SolverConfig::with_n(n)
    };
    let r = kappa_sweep(&sc, &cfg, 0).unwrap();
    let all_finite = r.runs.iter().all(|k| k.estimates.iter().all(|e| !e.censored));
    let slopes: Vec<f64> = r.fits_per_theta.iter().map(|f| f.as_ref().map_or(f64::NAN, |f| f.slope)).collect();
    let theta_ok = all_finite && slopes.iter().all(|s| (s + n).abs() <= 0.15);
    let ok = (r.fit.slope + n).abs() <= 0.15 && r.spread() <= 5.0 && theta_ok;
    verdict(
        ok,
        format!(
            "slope {:.4}, t* kappa^n spread {:.3}, slopes per theta {:?}, kappa in [0.5, 5]",
            r.fit.slope,
            r.spread(),
            slopes.iter().map(|s| (s * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

fn criticality_dichotomy() -> Verdict {
    let n = 2.5;
    let (above, below) = (4.0 / n + 0.3, 4.0 / n - 0.3);
    let bc = BetaSweepConfig {
        x_min: -0.1,
        x_max: 2.0,
        grids: vec![2049, 4097, 8193],
        x0: 0.0,
        betas: vec![below, above],
        amplitude: 1.0,
        width: 1.0,
        t_max: 1.0,
        thetas: vec![1e-7, 1e-6, 1e-8],
        margin_cells: 4.0,
        steps_per_horizon: 200.0,
    };
    let res = beta_sweep(&bc, &SolverConfig::with_n(n), 0).unwrap();
    let class = |b: f64| res.class_of(b).unwrap();
    let (ca, cb) = (class(above), class(below));
    let literal = ca.classification == Classification::Instantaneous && cb.classification == Classification::Waiting;
    let measured = ca.classification == Classification::Waiting
        && cb.classification == Classification::Instantaneous
        && ca.theta_consistent
        && cb.theta_consistent;
    let t_stars = |b: f64| -> Vec<String> {
        res.cells
            .iter()
            .filter(|c| c.beta == b)
            .map(|c| {
                let e = &c.run.estimates[0];
                if e.censored { "censored".into() } else { format!("{:.4}", e.t_star) }
            })
            .collect()
    };
    Verdict {
        pass: literal,
        detail: format!(
            "beta = 4/n + 0.3: {:?} (t* = {}); beta = 4/n - 0.3: {:?} (t* = {}); N = 2049, 4097, 8193",
            ca.classification,
            t_stars(above).join(", "),
            cb.classification,
            t_stars(below).join(", ")
        ),
        substitute: Some(measured),
    }
}

fn monotonicity() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for (n, alpha, gamma) in [(2.5, -0.775, -2.0), (2.95, -0.975, -1.1)] {
        let s = drop_run(n, 513, 0.05, 1e-4, 0.0);
        for x0 in [0.6, 0.7, 0.9] {
            let rep = monotonicity_monitor(&s, x0, n).unwrap();
            let params = (rep.params.alpha - alpha).abs() < 1e-12 && rep.params.gamma == gamma;
            ok &= params && rep.is_monotone() && rep.values.len() >= 10;
            parts.push(format!(
                "n = {n}, x0 = {x0}: {} records, {} violations",
                rep.values.len(),
                rep.violations.len()
            ));
        }
    }
    verdict(ok, parts.join("; "))
}

fn counterexamples() -> Verdict {
    let cc = CounterexampleConfig::default();
    let rep = counterexample_study(&cc, &SolverConfig::with_n(2.5), 0).unwrap();
    let checks = [
        ("mass bounded", rep.mass_bounded()),
        ("energy grows", rep.energy_grows()),
        ("oscillatory waits", rep.oscillatory_waits()),
        ("concentrated mass increasing", rep.concentrated_mass_increasing()),
        ("concentrated t* decreasing", rep.concentrated_t_star_decreasing()),
    ];
    let (lo, hi) = rep.oscillatory.mass_ratio_range;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let fmt = |ts: &mut dyn Iterator<Item = Option<f64>>| -> String {
        ts.map(|t| t.map_or("censored".into(), |t| format!("{t:.3e}"))).collect::<Vec<_>>().join(", ")
    };
    verdict(
        failed.is_empty(),
        format!(
            "mass ratio [{lo:.3}, {hi:.3}], energy growth {:?}, oscillatory t* {}, concentrated t* {}{}",
            rep.oscillatory.energy_growth.iter().map(|g| (g * 1e3).round() / 1e3).collect::<Vec<_>>(),
            fmt(&mut rep.oscillatory.t_star.iter().copied()),
            fmt(&mut rep.concentrated.iter().map(|c| c.t_star)),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

fn cascade_covariance() -> Verdict {
    let n = 2.5;
    let lambda: f64 = 2.0;
    let scale = lambda.powf(-n);
    let g = Grid1D::new(-1.0, 1.0, 513).unwrap();
    let u0 = parabola(g, 0.0, 0.5, 1.0).unwrap();
    let (dt, horizon) = (1e-5, 0.01);
    let base = SolverConfig {
        dt_init: dt,
        dt_max: dt,
        ..SolverConfig::with_n(n)
    };
    let scaled = SolverConfig {
        dt_init: dt * scale,
        dt_max: dt * scale,
        dt_min: base.dt_min * scale,
        ..base
    };
    let a = run(&u0, &base, horizon, horizon / 100.0, &mut []).unwrap();
    let b = run(&u0.scaled(lambda).unwrap(), &scaled, horizon * scale, horizon * scale / 100.0, &mut []).unwrap();
    let mode = CylinderMode::for_n(n);
    let (beta, delta) = (mode.default_beta(n), mode.default_delta(n));
    let cascade = |s: &TimeSeries, t: f64| degeneracy_cascade(s, 0.5, 0.25, 3, t, beta, 1.0, delta, mode).unwrap();
    let (ra, rb) = (cascade(&a, horizon), cascade(&b, horizon * scale));
    let drift = ra
        .levels
        .iter()
        .zip(&rb.levels)
        .flat_map(|(x, y)| {
            [
                (x.margin_mass - y.margin_mass).abs() / x.margin_mass.abs(),
                (x.margin_second - y.margin_second).abs() / x.margin_second.abs(),
            ]
        })
        .fold(0.0, f64::max);
    let same_verdicts = ra.levels.iter().zip(&rb.levels).all(|(x, y)| x.pass == y.pass);
    verdict(
        drift <= 0.02 && same_verdicts && ra.levels.len() == 4,
        format!("largest relative margin drift {drift:.2e} over k = 0..3, lambda = 2"),
    )
}

fn max_bernis_gruen(nodes: usize, cutoff: &Cutoff) -> f64 {
    let g = Grid1D::new(-1.0, 1.0, nodes).unwrap();
    positive_corpus(g, 100, 2024)
        .iter()
        .map(|p: &Profile| bernis_gruen_check(p, cutoff, 2.5).unwrap().ratio)
        .fold(0.0, f64::max)
}

fn inequality_monitors() -> Verdict {
    let theta = gns_theta(1, 1, 2.0, 6.0, 2.0).unwrap();
    let cutoff = Cutoff::Plateau {
        center: 0.0,
        inner: 0.4,
        outer: 0.8,
    };
    let (coarse, fine) = (max_bernis_gruen(201, &cutoff), max_bernis_gruen(401, &cutoff));
    let bg_drift = (fine - coarse).abs() / coarse;
    let s = drop_run(2.5, 513, 0.05, 1e-4, 0.0);
    let plateau = Cutoff::Plateau {
        center: 0.0,
        inner: 0.3,
        outer: 0.6,
    };
    let eb = energy_balance_monitor(&s, &plateau, 0.6, 2.5).unwrap();
    let frac = eb.fraction_satisfied();
    verdict(
        theta == 1.0 / 3.0 && bg_drift <= 0.1 && frac >= 0.95,
        format!(
            "theta = {theta:?}; Bernis-Gruen max ratio {coarse:.5} -> {fine:.5} (drift {bg_drift:.2e}); energy balance holds on {:.1}% of {} intervals",
            100.0 * frac,
            eb.intervals.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u8, &str, fn() -> Verdict); 9] = [
        (1, "mass conservation", mass_conservation),
        (2, "energy dissipation", energy_dissipation),
        (3, "source-solution convergence, n = 1", source_convergence),
        (4, "waiting-time scaling", waiting_time_scaling),
        (5, "criticality dichotomy", criticality_dichotomy),
        (6, "weighted-entropy monotonicity", monotonicity),
        (7, "oscillatory and concentrated data", counterexamples),
        (8, "degeneracy-cascade covariance", cascade_covariance),
        (9, "inequality monitors", inequality_monitors),
    ];
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = std::time::Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id} {}: {name}: {} [{secs:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        match KNOWN_FAILURES.iter().find(|k| k.0 == id) {
            Some((_, reason)) if !v.pass => {
                let held = v.substitute == Some(true);
                println!(
                    "  known failure: {reason}; measured orientation {}",
                    if held { "confirmed" } else { "NOT confirmed" }
                );
                if !held {
                    unexpected += 1;
                }
            }
            Some(_) => {
                println!("  listed as a known failure but passed; update the list");
                unexpected += 1;
            }
            None if !v.pass => unexpected += 1,
            None => {}
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} unexpected outcome(s)");
        ExitCode::FAILURE
    }
}
