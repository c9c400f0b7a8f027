use std::fs;

use thinfilm::config::parse_config;
use thinfilm::free_boundary::{waiting_time, WaitingTimeTracker};
use thinfilm::grid::mass;
use thinfilm::initial_data::InitialData;
use thinfilm::manifest::RunManifest;
use thinfilm::solver::{run, Observer};
use thinfilm::{Error, Grid1D, Profile};

const DROP: &str = r#"
[grid]
x_min = -1.0
x_max = 1.0
n_nodes = 257

[initial_data]
kind = "parabola"
center = 0.0
radius = 0.5

[solver]
n = 1.5
dt_max = 1e-4

[run]
t_end = 0.02
observe_every = 0.0

[diagnostics]
x0 = 0.53
thetas = [1e-7, 1e-5]
"#;

#[test]
fn tracker_matches_posthoc_scan() {
    let cfg = parse_config(DROP).unwrap();
    let g = cfg.grid.build().unwrap();
    let u0 = cfg.initial_data.build(g, cfg.solver.n).unwrap();
    let x0 = cfg.x0().unwrap();
    let margin = cfg.diagnostics.margin_cells as f64 * g.h();
    let mut tracker = WaitingTimeTracker::new(&u0, x0, &cfg.diagnostics.thetas, margin).unwrap();
    let mut never = Keep;
    let series = {
        let mut obs: [&mut dyn Observer; 2] = [&mut tracker, &mut never];
        run(&u0, &cfg.solver, cfg.run.t_end, cfg.run.observe_every, &mut obs).unwrap()
    };
    let est = tracker.estimates();
    assert_eq!(est.len(), 2);
    for (e, &th) in est.iter().zip(&cfg.diagnostics.thetas) {
        assert!(!e.censored, "front never reached x0 at theta {th}");
        let scan = waiting_time(&series, x0, th, margin).unwrap();
        assert_eq!(scan.t_star, e.t_star);
        assert!(e.bracket.0 < e.t_star && e.t_star == e.bracket.1);
    }
    // a smaller threshold sees the front no later
    assert!(est[0].t_star <= est[1].t_star);
    let m0 = mass(&u0);
    assert!((series.last().unwrap().mass - m0).abs() <= 1e-10 * m0);
}

struct Keep;
impl Observer for Keep {}

#[test]
fn file_initial_data_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u0.csv");
    let g = Grid1D::new(-1.0, 1.0, 101).unwrap();
    let p = Profile::from_fn(g, |x| (0.25 - x * x).max(0.0)).unwrap();
    p.save_csv(&path).unwrap();

    let data = InitialData::File { path: path.clone() };
    let back = data.build(g, 2.0).unwrap();
    assert_eq!(back.values(), p.values());

    let other = Grid1D::new(-1.0, 1.0, 103).unwrap();
    assert!(matches!(data.build(other, 2.0), Err(Error::GridMismatch(_))));
    let shifted = Grid1D::new(-0.9, 1.1, 101).unwrap();
    assert!(matches!(data.build(shifted, 2.0), Err(Error::GridMismatch(_))));
}

#[test]
fn manifest_hash_is_deterministic_and_sensitive() {
    let cfg = parse_config(DROP).unwrap();
    let g = cfg.grid.build().unwrap();
    let u0 = cfg.initial_data.build(g, cfg.solver.n).unwrap();
    let input = serde_json::json!({ "initial_data": cfg.initial_data, "seed": 0 });
    let a = RunManifest::new("run", &cfg, input.clone(), &[&u0]).unwrap();
    let b = RunManifest::new("run", &parse_config(&cfg.to_toml().unwrap()).unwrap(), input.clone(), &[&u0]).unwrap();
    assert_eq!(a.content_hash, b.content_hash);

    let mut changed = cfg.clone();
    changed.solver.dt_max *= 0.5;
    let c = RunManifest::new("run", &changed, input.clone(), &[&u0]).unwrap();
    assert_ne!(a.content_hash, c.content_hash);

    let u1 = u0.scaled(1.0 + 1e-15).unwrap();
    let d = RunManifest::new("run", &cfg, input, &[&u1]).unwrap();
    assert_ne!(a.content_hash, d.content_hash);

    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path()).unwrap();
    assert_eq!(RunManifest::read(&dir.path().join("manifest.json")).unwrap(), a);
}

#[test]
fn series_and_interface_csv_layout() {
    let cfg = parse_config(DROP).unwrap();
    let g = cfg.grid.build().unwrap();
    let u0 = cfg.initial_data.build(g, cfg.solver.n).unwrap();
    let series = run(&u0, &cfg.solver, 1e-3, 5e-4, &mut []).unwrap();
    assert_eq!(series.times(), vec![0.0, 5e-4, 1e-3]);

    let mut buf = Vec::new();
    series.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,mass,energy,max_height,left,right");
    assert_eq!(lines.count(), 3);

    let mut buf = Vec::new();
    thinfilm::free_boundary::write_interface_csv(&series, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,left,right");
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(f[1] < -0.45 && f[2] > 0.45);
    }
}

#[test]
fn snapshot_csv_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snap.csv");
    let g = Grid1D::new(0.0, 1.0, 33).unwrap();
    let p = Profile::from_fn(g, |x| (x * (1.0 - x)).powf(1.5)).unwrap();
    p.save_csv(&path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("x,u\n"));
    let q = Profile::load_csv(&path).unwrap();
    assert_eq!(q.values(), p.values());
    assert_eq!(q.grid().n_nodes(), 33);
}
