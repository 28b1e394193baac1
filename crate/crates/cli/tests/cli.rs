use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const HASH_LINE: &str = "# manifest_sha256=";

fn instablab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_instablab"))
        .args(args)
        .current_dir(dir)
        .env_remove("INSTABLAB_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// The JSON error record on the last stderr line.
fn error_record(o: &Output) -> Value {
    let err = stderr(o);
    let line = err.lines().last().expect("stderr has an error record");
    serde_json::from_str::<Value>(line).expect("error record is JSON")["error"].clone()
}

fn manifest_hash(dir: &Path) -> String {
    read_json(&dir.join("manifest.json"))["manifest_sha256"].as_str().unwrap().to_string()
}

/// A coarse bubble run that finishes in well under a second.
const SMALL_EVOLVE: [&str; 7] = ["evolve", "--r-max", "30", "--nodes", "513", "--t-max", "2"];

#[test]
fn classify_reports_unstable_below_p_c() {
    let tmp = tempfile::tempdir().unwrap();
    let o = instablab(tmp.path(), &["classify", "--n", "12", "--p", "3.5", "--out", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(printed["classification"], "unstable");
    let saved = read_json(&tmp.path().join("out/classify.json"));
    assert_eq!(saved["classification"], "unstable");
    assert_eq!(saved["manifest_sha256"].as_str().unwrap(), manifest_hash(&tmp.path().join("out")));

    let o = instablab(tmp.path(), &["classify", "--n", "12", "--p", "4.5", "--out", "out"]);
    assert!(stdout(&o).contains("\"linearly_stable\""));
}

#[test]
fn minimal_flags_echo_every_default() {
    let tmp = tempfile::tempdir().unwrap();
    let o = instablab(tmp.path(), &["classify", "--n", "5", "--p", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = read_json(&tmp.path().join("instablab-out/manifest.json"));
    let config = manifest["config"].as_object().unwrap();
    assert_eq!(config["grid.nodes"], 4097);
    assert_eq!(config["solver.dt_floor"], 1e-12);
    assert_eq!(config["spec.n"], 5);
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["command"], "classify");
    let keys: Vec<&String> = config.keys().collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]), "config echo is sorted");
    assert!(manifest.get("wall_time_seconds").is_none());
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "spec.n = 3\n[solver]\ncapp = 1.0\n").unwrap();
    let o = instablab(tmp.path(), &["classify", "--p", "5", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let record = error_record(&o);
    assert_eq!(record["kind"], "config");
    assert!(record["message"].as_str().unwrap().contains("solver.capp"), "{record}");

    let o = instablab(tmp.path(), &["classify", "--p", "5", "--set", "grid.nodez=100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["message"].as_str().unwrap().contains("grid.nodez"));
}

#[test]
fn negative_node_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = instablab(tmp.path(), &["steady", "--nodes", "-5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["message"].as_str().unwrap().contains("grid.nodes"));

    fs::write(tmp.path().join("neg.toml"), "grid.nodes = -64\n").unwrap();
    let o = instablab(tmp.path(), &["steady", "--config", "neg.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["message"].as_str().unwrap().contains("grid.nodes"));
    assert!(!tmp.path().join("instablab-out").exists(), "nothing is written for a rejected config");
}

#[test]
fn mistyped_values_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("t.toml"), "spec.equation = \"diffusion\"\n").unwrap();
    let o = instablab(tmp.path(), &["steady", "--config", "t.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["message"].as_str().unwrap().contains("spec.equation"));

    let o = instablab(tmp.path(), &["steady", "--set", "solver.dt_floor=-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["message"].as_str().unwrap().contains("solver.dt_floor"));
}

#[test]
fn flags_override_the_file_and_the_conflict_is_logged() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.toml"), "grid.nodes = 1025\ngrid.r_max = 30.0\nseed = 7\n").unwrap();
    let o = instablab(tmp.path(), &["steady", "--config", "run.toml", "--nodes", "257"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("grid.nodes") && err.contains("257") && err.contains("1025"), "{err}");
    let manifest = read_json(&tmp.path().join("instablab-out/manifest.json"));
    assert_eq!(manifest["config"]["grid.nodes"], 257);
    assert_eq!(manifest["config"]["grid.r_max"], 30.0);
    assert_eq!(manifest["seed"], 7);
    let steady = read_json(&tmp.path().join("instablab-out/steady.json"));
    assert_eq!(steady["nodes"], 257);
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.toml"), "output.dir = \"from_file\"\n").unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_instablab"))
            .args(args)
            .current_dir(tmp.path())
            .env("INSTABLAB_OUT", "from_env")
            .output()
            .unwrap()
    };
    assert!(run(&["classify", "--p", "3", "--config", "run.toml"]).status.success());
    assert!(tmp.path().join("from_env/classify.json").exists());
    assert!(!tmp.path().join("from_file").exists());
    assert!(run(&["classify", "--p", "3", "--config", "run.toml", "--out", "from_flag"]).status.success());
    assert!(tmp.path().join("from_flag/classify.json").exists());
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn identical_config_gives_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("instablab-out");
    let mut args = SMALL_EVOLVE.to_vec();
    args.extend(["--equation", "wave", "--amplitude", "1e-3", "--plot"]);
    assert!(instablab(tmp.path(), &args).status.success());
    let first = snapshot(&out);
    fs::remove_dir_all(&out).unwrap();
    assert!(instablab(tmp.path(), &args).status.success());
    let second = snapshot(&out);
    assert_eq!(first.len(), 4);
    assert!(first == second, "outputs differ between identical runs");

    args.extend(["--seed", "2"]);
    assert!(instablab(tmp.path(), &args).status.success());
    assert_ne!(snapshot(&out), second, "the seed enters the manifest hash");
}

#[test]
fn wall_time_is_opt_in_and_outside_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(instablab(tmp.path(), &["classify", "--p", "3", "--out", "a"]).status.success());
    assert!(instablab(tmp.path(), &["classify", "--p", "3", "--out", "a", "--wall-time"]).status.success());
    let timed = read_json(&tmp.path().join("a/manifest.json"));
    assert!(timed["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(timed["config"]["output.wall_time"], true);
}

fn assert_hashed(dir: &Path) {
    let hash = manifest_hash(dir);
    for (name, bytes) in snapshot(dir) {
        let text = String::from_utf8(bytes).unwrap();
        let ok = match Path::new(&name).extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str::<Value>(&text).unwrap()["manifest_sha256"] == hash.as_str(),
            Some("svg") => text.contains(&format!("<!-- manifest_sha256={hash} -->")),
            _ => text.starts_with(&format!("{HASH_LINE}{hash}\n")),
        };
        assert!(ok, "{name} lacks the manifest hash");
    }
}

#[test]
fn every_output_carries_the_manifest_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 5] = [
        &["steady", "--r-max", "20", "--nodes", "257", "--plot", "--out", "steady"],
        &["spectrum", "--r-max", "20", "--nodes", "257", "--plot", "--out", "spectrum"],
        &["evolve", "--r-max", "30", "--nodes", "513", "--t-max", "1", "--plot", "--out", "evolve"],
        &["ode", "--forcing", "trig", "--plot", "--out", "ode"],
        &["sweep", "--n", "5", "--p", "2:4:0.5", "--op", "classify", "--out", "sweep"],
    ];
    for args in runs {
        let o = instablab(tmp.path(), args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        let dir = tmp.path().join(args.last().unwrap());
        assert!(snapshot(&dir).len() >= 2);
        assert_hashed(&dir);
    }
}

#[test]
fn text_reports_still_parse_behind_the_hash_line() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(instablab(tmp.path(), &["spectrum", "--r-max", "20", "--nodes", "257"]).status.success());
    let out = tmp.path().join("instablab-out");
    let spectrum = fs::read_to_string(out.join("spectrum.txt")).unwrap();
    let report = instablab::spectrum::SpectralReport::from_text(&spectrum).unwrap();
    let summary = read_json(&out.join("spectrum.json"));
    assert_eq!(report.eigenvalue, summary["eigenvalue"].as_f64().unwrap());
    assert!(report.eigenvalue < 0.0);

    assert!(instablab(tmp.path(), &["steady", "--r-max", "20", "--nodes", "257"]).status.success());
    let profile = fs::read_to_string(out.join("profile.txt")).unwrap();
    let profile = instablab::steady::SteadyStateProfile::from_text(&profile).unwrap();
    assert_eq!(profile.grid().len(), 257);
}

#[test]
fn evolve_heat_flags_blow_up_in_the_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let o = instablab(tmp.path(), &SMALL_EVOLVE);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("instablab-out");
    let report = read_json(&out.join("evolve.json"));
    let t = report["blowup"]["time_estimate"].as_f64().unwrap();
    assert!(t > 0.0 && t < 2.0);
    assert!(report["pairing"].as_f64().unwrap() > 0.0);
    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("t,G,Gprime,sup_norm,energy_norm,flags"));
    assert!(csv.trim_end().ends_with("blowup_amplitude_cap") || csv.trim_end().ends_with("blowup_step_collapse"));
}

#[test]
fn wave_rate_tracks_lambda2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = instablab(
        tmp.path(),
        &["evolve", "--equation", "wave", "--damping", "1", "--psi1", "lambda2", "--amplitude", "1e-4", "--r-max", "30", "--nodes", "1025", "--t-max", "5"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&tmp.path().join("instablab-out/evolve.json"));
    let expected = report["expected_rate"].as_f64().unwrap();
    let rate = report["linear_rate"].as_f64().unwrap();
    assert!((rate - expected).abs() <= 0.1 * expected, "{rate} vs {expected}");
    assert!(report["pairing"].as_f64().unwrap() > 0.0);
}

#[test]
fn ode_subcommand_reports_both_lemmas() {
    let tmp = tempfile::tempdir().unwrap();
    let o = instablab(tmp.path(), &["ode", "--a", "1", "--b", "2", "--forcing", "random", "--seed", "5", "--out", "one"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let one = read_json(&tmp.path().join("one/ode.json"));
    assert_eq!(one["holds"], true);
    assert_eq!(one["problem"]["forcing"]["kind"], "steps");

    let o = instablab(tmp.path(), &["ode", "--lemma", "ode2", "--a", "-0.5", "--y0", "1", "--yp0", "0.2", "--out", "two"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let two = read_json(&tmp.path().join("two/ode.json"));
    let time = two["estimate"]["time"].as_f64().unwrap();
    assert!(time.is_finite() && time <= two["energy_bound"].as_f64().unwrap());
}

#[test]
fn sweep_crosses_zero_near_p_c_in_parameter_order() {
    let tmp = tempfile::tempdir().unwrap();
    let o = instablab(tmp.path(), &["sweep", "--n", "12", "--p", "3.0:5.0:0.1", "--op", "ground_state", "--out", "a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&tmp.path().join("a/sweep.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 21);
    let ps: Vec<f64> = rows.iter().map(|r| r["p"].as_f64().unwrap()).collect();
    assert!(ps.windows(2).all(|w| w[0] < w[1]));
    let changes = report["sign_changes"].as_array().unwrap();
    assert_eq!(changes.len(), 1, "{changes:?}");
    let (lo, hi) = (changes[0][0].as_f64().unwrap(), changes[0][1].as_f64().unwrap());
    let p_c = report["p_c"].as_f64().unwrap();
    assert!((p_c - 3.9266).abs() < 1e-4);
    assert!(lo - 0.15 <= p_c && p_c <= hi + 0.15, "[{lo}, {hi}] vs {p_c}");
    let csv = fs::read_to_string(tmp.path().join("a/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 23);

    // The worker count changes the manifest but never the rows.
    let o = instablab(tmp.path(), &["sweep", "--n", "12", "--p", "3.0:5.0:0.1", "--threads", "3", "--out", "b"]);
    assert!(o.status.success());
    let body = |d: &str| fs::read_to_string(tmp.path().join(d).join("sweep.csv")).unwrap().split_once('\n').unwrap().1.to_string();
    assert_eq!(body("a"), body("b"));
}

#[test]
fn module_failures_produce_an_error_record() {
    let tmp = tempfile::tempdir().unwrap();
    // A potential family with no potential: shooting rejects it.
    let o = instablab(tmp.path(), &["steady", "--family", "potential", "--n", "3", "--p", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let record = error_record(&o);
    assert_eq!(record["kind"], "compute");
    assert_eq!(record["command"], "steady");
    assert!(!record["message"].as_str().unwrap().is_empty());

    let o = instablab(tmp.path(), &["classify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["message"].as_str().unwrap().contains("spec.p"));

    let o = instablab(tmp.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["kind"], "usage");
}

#[test]
fn verify_runs_a_subset_and_audits_the_directory() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(instablab(tmp.path(), &["classify", "--p", "3"]).status.success());
    let o = instablab(tmp.path(), &["verify", "--criteria", "2,3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 2, "{out}");
    assert!(out.contains("2/2 criteria passed"));
    assert!(out.contains("audit: all"));
    let report = read_json(&tmp.path().join("instablab-out/verify.json"));
    assert_eq!(report["failed"].as_array().unwrap().len(), 0);

    fs::write(tmp.path().join("instablab-out/stray.csv"), "a,b\n1,2\n").unwrap();
    let o = instablab(tmp.path(), &["verify", "--criteria", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let record = error_record(&o);
    assert_eq!(record["kind"], "verification");
    assert!(record["message"].as_str().unwrap().contains("stray.csv"));

    let o = instablab(tmp.path(), &["verify", "--criteria", "99"]);
    assert_eq!(o.status.code(), Some(2));
}
