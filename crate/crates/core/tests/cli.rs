use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "n_bs = 32\nn_ut = 8\nm_subcarriers = 4\nq_bs = 6\nn_rf_bs = 2\nn_rf_ut = 2\nn_streams = 2\n\
                    t_iter = 15\nl_max = 3\n[lattice]\nrho = 1\ns_rings = 4\neta = 5.7\n";

fn ilsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ilsc")).args(args).output().expect("spawn ilsc")
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line on stderr");
    serde_json::from_str(line).expect("stderr ends with a JSON error record")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2_with_a_record() {
    let out = ilsc(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["kind"], "usage");

    let out = ilsc(&["sweep", "--profile", "huge"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = ilsc(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("sweep"));
}

#[test]
fn runtime_errors_exit_1_with_a_typed_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = ilsc(&["locate", "--channel", path(&dir.path().join("missing.csv")), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["command"], "locate");
    assert_eq!(rec["error"]["kind"], "io");

    let spec = dir.path().join("bad.toml");
    std::fs::write(&spec, "trials = 0\n").unwrap();
    let out = ilsc(&["sweep", "--config", path(&spec), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"]["kind"], "config");

    let out = ilsc(&["sweep", "--schemes", "amp-polar-fd,bogus", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"]["kind"], "invalid_argument");
}

#[test]
fn sweep_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    let mut text = String::from(
        "name = \"cli\"\ntrials = 2\nestimators = [\"omp-polar-fd\", \"omp-dft\"]\nbeamformers = [\"proposed\"]\n\
         [sweep]\nvariable = \"uplink-snr\"\nvalues = [10, 30]\n[config]\n",
    );
    text.push_str(&TINY.replace("[lattice]", "[config.lattice]"));
    std::fs::write(&spec, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = ilsc(&["sweep", "--config", path(&spec), "--out", path(&out_dir), "--seed", "5", "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ilsc::harness::OUTPUT_FILES {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["spec"]["seed"], 5);
    assert_eq!(manifest["trial_seeds"].as_array().unwrap().len(), 2);
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics.lines().any(|l| l.contains("omp-dft") && l.contains("nmse_db")));
}

#[test]
fn simulate_then_locate_then_beamform() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let sim = dir.path().join("sim");
    let out = ilsc(&["simulate", "--config", path(&cfg), "--seed", "3", "--out", path(&sim), "--schemes", "amp-polar-fd,proposed"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.json", "scenario.json", "channel_uplink.csv", "measurements.csv", "estimate_amp-polar-fd.csv", "summary.json"] {
        assert!(sim.join(f).is_file(), "{f} missing");
    }

    let loc = dir.path().join("loc");
    let out = ilsc(&["locate", "--config", path(&cfg), "--seed", "3", "--channel", path(&sim.join("channel_uplink.csv")), "--out", path(&loc)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(loc.join("report.json").is_file());

    let bf = dir.path().join("bf");
    let out = ilsc(&[
        "beamform",
        "--config",
        path(&cfg),
        "--report",
        path(&loc.join("report.json")),
        "--channel",
        path(&sim.join("channel_uplink.csv")),
        "--schemes",
        "proposed,focused",
        "--out",
        path(&bf),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let se = std::fs::read_to_string(bf.join("se.csv")).unwrap();
    assert_eq!(se.lines().count(), 1 + 2 * 4);

    // a channel dump of the wrong size is a shape error
    let out = ilsc(&["locate", "--seed", "3", "--channel", path(&sim.join("channel_uplink.csv")), "--out", path(&loc)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"]["kind"], "shape");
}
