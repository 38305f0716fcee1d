use parstab::synthesis::{synthesize, Sensors, SynthesisOptions};
use parstab::{PlantConfig, SeparableBasis};
use parstab_cli::report::{matrix_from, CSV_COLUMNS};
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn example_config() -> Value {
    json!({
        "plant": {"preset": "example", "delta": 0.5},
        "sensors": {"xi1": [PI / 2.0, PI / 3.0], "xi2": [PI / 3.0, PI / 4.0]},
        "synthesis": {"n": 30, "gamma_base": 1.0, "spread": 1.0},
        "certification": {"n_start": 30, "n_max": 60, "enforce": false},
        "simulation": {"t_end": 20.0, "z0": {"modes": [
            {"index": [1, 1], "value": 1.0},
            {"index": [1, 2], "value": 1.0},
            {"index": [2, 1], "value": 1.0},
            {"index": [2, 2], "value": 1.0},
            {"index": [1, 3], "value": 1.0}
        ]}}
    })
}

struct Run {
    out: PathBuf,
    output: Output,
    _dir: tempfile::TempDir,
}

impl Run {
    fn code(&self) -> Option<i32> {
        self.output.status.code()
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out.join(name)).unwrap()).unwrap()
    }
}

fn run_text(command: &str, text: &str, env: &[(&str, &str)]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, text).unwrap();
    let out = dir.path().join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_parstab"))
        .arg(command)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .envs(env.iter().copied())
        .output()
        .unwrap();
    Run {
        out,
        output,
        _dir: dir,
    }
}

fn run(command: &str, config: &Value) -> Run {
    run_text(command, &config.to_string(), &[])
}

fn exists(dir: &Path, names: &[&str]) -> bool {
    names.iter().all(|n| dir.join(n).is_file())
}

#[test]
fn pipeline_meets_the_decay_target() {
    let r = run("pipeline", &example_config());
    assert_eq!(r.code(), Some(0), "{}", r.stderr());
    assert!(exists(&r.out, &["synthesis.json", "certificate.json", "timeseries.csv", "summary.json"]));
    let summary = r.json("summary.json");
    assert_eq!(summary["schema_version"], 1);
    let rate = summary["decay_rate"].as_f64().unwrap();
    let delta = summary["delta"].as_f64().unwrap();
    assert_eq!(delta, 0.5);
    assert!(rate <= -delta, "{rate}");
    assert_eq!(summary["certificate"]["status"], "failed");
    let csv = fs::read_to_string(r.out.join("timeseries.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
}

#[test]
fn enforced_certificate_failure_exits_3_after_writing_everything() {
    let mut c = example_config();
    c["certification"]["enforce"] = json!(true);
    let r = run("pipeline", &c);
    assert_eq!(r.code(), Some(3), "{}", r.stderr());
    assert!(exists(&r.out, &["synthesis.json", "certificate.json", "timeseries.csv", "summary.json"]));
    assert!(r.stderr().contains("theta1_max"));
}

#[test]
fn certification_with_too_small_n_exits_3() {
    let mut c = example_config();
    c["certification"] = json!({"n_start": 10, "n_max": 10});
    let r = run("certify", &c);
    assert_eq!(r.code(), Some(3), "{}", r.stderr());
}

#[test]
fn bad_sensor_placement_exits_2() {
    // on the diagonal the (1,2) and (2,1) modes cannot be told apart
    let mut c = example_config();
    c["sensors"] = json!({"xi1": [1.0, 1.0], "xi2": [0.5, 0.5]});
    let r = run("synthesize", &c);
    assert_eq!(r.code(), Some(2));
    assert!(r.stderr().contains("sensor-placement"), "{}", r.stderr());
}

#[test]
fn config_errors_exit_1_with_a_pointer() {
    let mut c = example_config();
    c["synthesis"]["gamma_ladder_x"] = json!(2);
    let r = run("synthesize", &c);
    assert_eq!(r.code(), Some(1));
    assert!(r.stderr().contains("/synthesis"), "{}", r.stderr());

    let text = example_config()
        .to_string()
        .replacen(r#""delta":0.5"#, r#""delta":0.5,"delta":0.4"#, 1);
    let r = run_text("synthesize", &text, &[]);
    assert_eq!(r.code(), Some(1));
    assert!(r.stderr().contains("/plant/delta: duplicate key"), "{}", r.stderr());

    let mut c = example_config();
    c["sensors"]["xi2"] = json!([PI, 1.0]);
    let r = run("synthesize", &c);
    assert_eq!(r.code(), Some(1));
    assert!(r.stderr().contains("/sensors/xi2/0"), "{}", r.stderr());
}

#[test]
fn divergence_exits_4() {
    let mut c = example_config();
    c["simulation"]["open_loop"] = json!(true);
    c["simulation"]["divergence_factor"] = json!(10.0);
    let r = run("simulate", &c);
    assert_eq!(r.code(), Some(4), "{}", r.stderr());
}

#[test]
fn synthesis_report_round_trips_to_full_precision() {
    let r = run("synthesize", &example_config());
    assert_eq!(r.code(), Some(0), "{}", r.stderr());
    let report = r.json("synthesis.json");
    for key in ["eigenvalues", "eta", "gamma", "B", "Bk", "A", "L", "C0", "F_abscissa"] {
        assert!(!report[key].is_null(), "missing {key}");
    }
    let basis = SeparableBasis::new(&PlantConfig::example_2d(0.5), 401).unwrap();
    let sensors = Sensors::new(vec![PI / 2.0, PI / 3.0], vec![PI / 3.0, PI / 4.0]);
    let opts = SynthesisOptions {
        gamma_base: 1.0,
        spread: Some(1.0),
        ..SynthesisOptions::default()
    };
    let art = synthesize(&basis, &sensors, 30, &opts).unwrap();
    assert_eq!(matrix_from(&report["A"]).unwrap(), art.ladder.a);
    assert_eq!(matrix_from(&report["L"]).unwrap(), art.l);
    assert_eq!(matrix_from(&report["C0"]).unwrap(), art.c0);
    assert_eq!(matrix_from(&report["Bk"][2]).unwrap(), art.ladder.bk[2]);
    assert_eq!(report["eta"].as_f64().unwrap(), art.eta);
    let lambdas: Vec<f64> = serde_json::from_value(report["eigenvalues"].clone()).unwrap();
    assert_eq!(lambdas, art.lambdas);
}

#[test]
fn sweep_runs_each_entry_in_its_own_directory() {
    let mut c = example_config();
    c["simulation"]["t_end"] = json!(4.0);
    c["sweep"] = json!([
        {"synthesis": {"spread": 0.5}},
        {"sensors": {"xi1": [1.0, 1.0], "xi2": [0.5, 0.5]}}
    ]);
    let r = run_text("sweep", &c.to_string(), &[("PARSTAB_THREADS", "2")]);
    assert_eq!(r.code(), Some(2), "{}", r.stderr());
    let index = r.json("sweep.json");
    let runs = index["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["exit_code"], 0);
    assert_eq!(runs[1]["exit_code"], 2);
    assert!(exists(&r.out.join("sweep-000"), &["summary.json", "timeseries.csv"]));
}
