use std::path::{Path, PathBuf};

use serde_json::Value;
use thinfilm_cli::{execute, Command, Options, EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUN_FAILURE};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn opts(config: PathBuf, out: &Path) -> Options {
    Options {
        config,
        out: Some(out.to_path_buf()),
        workers: 1,
        seed: None,
    }
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const DROP: &str = r#"
[grid]
x_min = -1.0
x_max = 1.0
n_nodes = 129

[initial_data]
kind = "parabola"
center = 0.0
radius = 0.5

[solver]
dt_max = 1e-3
"#;

#[test]
fn criteria_on_zero_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = execute(Command::Criteria, &opts(configs().join("zero_criteria.toml"), &out));
    assert_eq!(o.code, EXIT_OK, "{:?}", o.errors);
    let s = json(&out.join("summary.json"));
    assert_eq!(s["supremum"], 0.0);
    for kind in ["mass", "energy", "pnorm"] {
        assert_eq!(s["criteria"][kind]["supremum"], 0.0, "{kind}");
        let csv = std::fs::read_to_string(out.join(format!("criterion_{kind}.csv"))).unwrap();
        assert!(csv.starts_with("r,value\n"));
    }
    assert!(!out.join("errors.json").exists());
}

#[test]
fn run_with_zero_end_time_writes_one_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{DROP}\n[run]\nt_end = 0.0\n"));
    let out = tmp.path().join("out");
    let o = execute(Command::Run, &opts(cfg, &out));
    assert_eq!(o.code, EXIT_OK, "{:?}", o.errors);
    let series = std::fs::read_to_string(out.join("series.csv")).unwrap();
    let lines: Vec<&str> = series.lines().collect();
    assert_eq!(lines.len(), 2);
    // the drop edge is the default point, where the weight is singular
    assert_eq!(lines[0], "t,mass,energy,max_height,left,right,weighted_entropy");
    assert!(lines[1].ends_with(",nan"));
    assert!(lines[1].starts_with("0.0000000000000000e0,"));
    let interface = std::fs::read_to_string(out.join("interface.csv")).unwrap();
    assert!(interface.starts_with("t,left,right\n"));
    let snap = std::fs::read_to_string(out.join("snapshots/00000.csv")).unwrap();
    assert!(snap.starts_with("x,u\n"));
    assert_eq!(snap.lines().count(), 130);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["command"], "run");
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for f in ["series.csv", "interface.csv", "snapshots/00000.csv", "snapshots/index.csv", "summary.json"] {
        assert!(outputs.contains(&f), "{f}");
    }
}

#[test]
fn run_records_weighted_entropy_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{DROP}\n[run]\nt_end = 2e-3\nobserve_every = 1e-3\n[diagnostics]\nx0 = 0.7\n"),
    );
    let out = tmp.path().join("out");
    assert_eq!(execute(Command::Run, &opts(cfg, &out)).code, EXIT_OK);
    let series = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert_eq!(series.lines().next().unwrap(), "t,mass,energy,max_height,left,right,weighted_entropy");
    assert_eq!(series.lines().count(), 4);
    let s = json(&out.join("summary.json"));
    assert_eq!(s["waiting"]["estimates"][0]["censored"], true);
}

#[test]
fn out_of_range_exponent_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{DROP}").replace("dt_max = 1e-3", "n = 3.5"));
    let out = tmp.path().join("out");
    let o = execute(Command::Run, &opts(cfg, &out));
    assert_eq!(o.code, EXIT_CONFIG_ERROR);
    let e = json(&out.join("errors.json"));
    assert_eq!(e["exit_code"], 2);
    assert_eq!(e["errors"][0]["kind"], "invalid_argument");
    assert!(e["errors"][0]["message"].as_str().unwrap().contains("(0, 3)"));
}

#[test]
fn misspelled_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{DROP}\n[run]\nt_edn = 1.0\n"));
    let out = tmp.path().join("out");
    let o = execute(Command::Run, &opts(cfg, &out));
    assert_eq!(o.code, EXIT_CONFIG_ERROR);
    let e = json(&out.join("errors.json"));
    assert_eq!(e["errors"][0]["kind"], "parse");
    assert!(e["errors"][0]["message"].as_str().unwrap().contains("t_edn"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = execute(Command::Run, &opts(tmp.path().join("nope.toml"), tmp.path()));
    assert_eq!(o.code, EXIT_CONFIG_ERROR);
    assert!(tmp.path().join("errors.json").exists());
}

#[test]
fn sweep_without_experiment_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), DROP);
    let o = execute(Command::Sweep, &opts(cfg, tmp.path()));
    assert_eq!(o.code, EXIT_CONFIG_ERROR);
}

#[test]
fn domain_exhaustion_is_a_run_failure_with_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let text = DROP.replace("x_min = -1.0\nx_max = 1.0", "x_min = -0.6\nx_max = 0.6")
        + "\n[solver.mobility]\nkind = \"upwind\"\n[run]\nt_end = 1000.0\nobserve_every = 1.0\n";
    let text = text.replace("[solver]\ndt_max = 1e-3", "[solver]\nn = 1.0\ndt_max = 0.1");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = execute(Command::Run, &opts(cfg, &out));
    assert_eq!(o.code, EXIT_RUN_FAILURE, "{:?}", o.errors);
    let e = json(&out.join("errors.json"));
    assert_eq!(e["errors"][0]["kind"], "run_failed");
    let s = json(&out.join("summary.json"));
    assert_eq!(s["run"]["failure"]["kind"], "domain_exhausted");
    assert!(std::fs::read_to_string(out.join("series.csv")).unwrap().lines().count() >= 2);
}

#[test]
fn validate_convergence_reports_second_order() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("convergence_n1.toml"))
        .unwrap()
        .replace("grids = [128, 256, 512, 1024]", "grids = [128, 256, 512]");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = execute(Command::Validate, &opts(cfg, &out));
    assert_eq!(o.code, EXIT_OK, "{:?}", o.errors);
    let v = json(&out.join("validation.json"));
    assert_eq!(v["pass"], true);
    let fitted = v["properties"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["name"] == "fitted_order")
        .unwrap()["value"]
        .as_f64()
        .unwrap();
    assert!((1.7..=2.3).contains(&fitted), "{fitted}");
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn validate_fails_when_a_property_fails() {
    // far too coarse in time: the error stalls and the ratios leave [3, 5]
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("convergence_n1.toml"))
        .unwrap()
        .replace("grids = [128, 256, 512, 1024]", "grids = [64, 128]")
        .replace("dt_law = { kind = \"diffusive\", c = 1.0 }", "dt_law = { kind = \"fixed\", dt = 0.005 }");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = execute(Command::Validate, &opts(cfg, &out));
    assert_eq!(o.code, EXIT_RUN_FAILURE);
    assert_eq!(json(&out.join("validation.json"))["pass"], false);
    assert_eq!(json(&out.join("errors.json"))["errors"][0]["kind"], "property_failed");
}

#[test]
fn validate_without_experiment_checks_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{DROP}\n[run]\nt_end = 5e-3\nobserve_every = 1e-3\n"));
    let out = tmp.path().join("out");
    let o = execute(Command::Validate, &opts(cfg, &out));
    assert_eq!(o.code, EXIT_OK, "{:?}", o.errors);
    let v = json(&out.join("validation.json"));
    assert_eq!(v["study"], "run");
    assert_eq!(v["properties"].as_array().unwrap().len(), 2);
}

#[test]
fn diagnose_writes_every_monitor() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = execute(Command::Diagnose, &opts(configs().join("drop_run.toml"), &out));
    assert_eq!(o.code, EXIT_OK, "{:?}", o.errors);
    let s = json(&out.join("summary.json"));
    let m = &s["monitors"];
    assert_eq!(m["monotonicity"]["monotone"], true);
    assert_eq!(m["energy_balance"]["fraction_satisfied"], 1.0);
    assert_eq!(m["inequalities"]["gns_theta"].as_f64().unwrap(), 1.0 / 3.0);
    assert!(m["cascade"]["all_pass"].is_boolean());
    let heads = [
        ("monotonicity.csv", "t,value,increment,violation"),
        ("cascade.csv", "k,r_k,M_k,second,margin_mass,margin_second,pass"),
        ("inequalities.csv", "index,bernis_gruen_ratio,gns_ratio"),
    ];
    for (f, h) in heads {
        let text = std::fs::read_to_string(out.join(f)).unwrap();
        assert_eq!(text.lines().next().unwrap(), h, "{f}");
    }
    assert!(std::fs::read_to_string(out.join("energy_balance.csv"))
        .unwrap()
        .starts_with("t0,t1,"));
}

#[test]
fn seed_changes_the_corpus_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("drop_run.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    execute(Command::Diagnose, &opts(cfg.clone(), &a));
    let mut o = opts(cfg, &b);
    o.seed = Some(7);
    execute(Command::Diagnose, &o);
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "series.csv"), read(&b, "series.csv"));
    assert_ne!(read(&a, "inequalities.csv"), read(&b, "inequalities.csv"));
}

#[test]
fn manifest_replay_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut o = opts(configs().join("drop_run.toml"), &a);
    o.seed = Some(11);
    assert_eq!(execute(Command::Diagnose, &o).code, EXIT_OK);
    let replay = opts(a.join("manifest.json"), &b);
    assert_eq!(execute(Command::Diagnose, &replay).code, EXIT_OK);
    let ma = json(&a.join("manifest.json"));
    let mb = json(&b.join("manifest.json"));
    assert_eq!(ma, mb);
    for f in ma["outputs"].as_array().unwrap() {
        let f = f.as_str().unwrap();
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_thinfilm");
    let tmp = tempfile::tempdir().unwrap();
    let ok = std::process::Command::new(bin)
        .args(["criteria", "--config"])
        .arg(configs().join("zero_criteria.toml"))
        .arg("--out")
        .arg(tmp.path().join("ok"))
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = std::process::Command::new(bin)
        .args(["run", "--config"])
        .arg(tmp.path().join("missing.toml"))
        .arg("--out")
        .arg(tmp.path().join("bad"))
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error"));
}
