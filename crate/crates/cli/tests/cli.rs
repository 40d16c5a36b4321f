use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otcal_cli::report::anchor;
use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn otcal(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otcal"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn run(cmd: &str, conf: &str, out: &Path) -> (i32, Value) {
    let o = otcal(&[cmd, "--config", config(conf).to_str().unwrap()], out);
    let code = o.status.code().unwrap();
    let text = std::fs::read_to_string(out.join("report.json")).unwrap_or_else(|_| {
        panic!("no report; stderr: {}", String::from_utf8_lossy(&o.stderr))
    });
    (code, serde_json::from_str(&text).unwrap())
}

fn record<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["records"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["name"] == name)
        .unwrap_or_else(|| panic!("no record {name}"))
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

fn keys_sorted(v: &Value) -> bool {
    match v {
        Value::Object(m) => {
            let k: Vec<&String> = m.keys().collect();
            k.windows(2).all(|w| w[0] < w[1]) && m.values().all(keys_sorted)
        }
        Value::Array(a) => a.iter().all(keys_sorted),
        _ => true,
    }
}

fn well_formed(report: &Value, dir: &Path) {
    assert!(keys_sorted(report));
    for r in report["records"].as_array().unwrap() {
        assert!(anchor::ALL.contains(&r["anchor"].as_str().unwrap()), "{r}");
    }
    for t in report["tables"].as_array().unwrap() {
        let h = header(&dir.join(t.as_str().unwrap()));
        assert!(!h.is_empty());
    }
}

#[test]
fn uniform_monotone_map_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run("verify-map", "uniform-monotone.conf", dir.path());
    assert_eq!(code, 0, "{rep:#}");
    assert_eq!(rep["verdict"], "pass");
    well_formed(&rep, dir.path());
    assert_eq!(header(&dir.path().join("calibration.csv")), ["x1", "sqrt_det_g", "rho", "phi"]);
    for name in ["twist", "nondegeneracy", "spacelike", "lagrangian", "pushforward", "calibration", "mean_curvature"] {
        assert_eq!(record(&rep, name)["passed"], true, "{name}");
    }
}

#[test]
fn rotation_is_not_lagrangian() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run("verify-map", "rotation-gaussian.conf", dir.path());
    assert_eq!(code, 1);
    assert_eq!(rep["verdict"], "fail");
    assert_eq!(record(&rep, "lagrangian")["passed"], false);
    assert_eq!(record(&rep, "pushforward")["passed"], true);
}

#[test]
fn comass_of_calibration_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run("comass", "comass-uniform.conf", dir.path());
    assert_eq!(code, 0, "{rep:#}");
    well_formed(&rep, dir.path());
    assert!((record(&rep, "comass")["value"].as_f64().unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn negative_volume_form_is_unbounded() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run("comass", "comass-negative.conf", dir.path());
    assert_eq!(code, 1);
    assert_eq!(record(&rep, "comass_bounded")["passed"], false);
}

#[test]
fn optimal_map_ranks_first_among_rotations() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run("mass-compare", "mass-rotations.conf", dir.path());
    assert_eq!(code, 0, "{rep:#}");
    well_formed(&rep, dir.path());
    let mut rows = csv::Reader::from_path(dir.path().join("mass_ranking.csv")).unwrap();
    let h = rows.headers().unwrap().clone();
    let name = h.iter().position(|c| c == "name").unwrap();
    let first = rows.records().next().unwrap().unwrap();
    assert_eq!(&first[name], "identity");
}

#[test]
fn tent_competitor_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run("mass-compare", "mass-tent.conf", dir.path());
    assert_eq!(code, 0, "{rep:#}");
    let tent = record(&rep, "mass:tent");
    assert_eq!(tent["value"], "-inf");
    assert!(tent["flagged"].as_u64().unwrap() > 0);
}

#[test]
fn conformal_identity_holds_for_nonquadratic_cost() {
    let dir = tempfile::tempdir().unwrap();
    let (code, rep) = run("curvature", "curvature-sqrt1p.conf", dir.path());
    assert_eq!(code, 0, "{rep:#}");
    well_formed(&rep, dir.path());
    assert!(header(&dir.path().join("curvature.csv")).contains(&"relative_error".to_string()));
}

#[test]
fn suite_passes_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (code, rep) = run("suite", "suite.conf", a.path());
    assert_eq!(code, 0, "{rep:#}");
    well_formed(&rep, a.path());
    run("suite", "suite.conf", b.path());
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let c = config("comass-uniform.conf");
    let o = otcal(&["comass", "--config", c.to_str().unwrap(), "--seed", "11"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let rep: Value = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["environment"]["seed"], 11);
}

#[test]
fn mutated_suite_fails() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("mutant.conf");
    std::fs::write(&conf, "run.seed = 0\nsuite.mutation = exponent\n").unwrap();
    let o = otcal(&["suite", "--config", conf.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL calibration_equality"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("absent.conf");
    assert_eq!(otcal(&["suite", "--config", missing.to_str().unwrap()], &out).status.code(), Some(2));

    let bad = dir.path().join("bad.conf");
    for text in [
        "cost.id = nope\n",
        "run.bogus = 1\n",
        "cost.id = custom-grid\ncost.file = nowhere.csv\n",
        "source.lo = 0\n",
    ] {
        std::fs::write(&bad, text).unwrap();
        let o = otcal(&["verify-map", "--config", bad.to_str().unwrap()], &out);
        assert_eq!(o.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(!out.join("report.json").exists());
}
