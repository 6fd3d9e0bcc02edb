use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lossmanifold"));
    cmd.env("NO_COLOR", "1");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// The single `error: code=.. exit=.. message=..` line, checked for shape.
fn error_line(out: &Output) -> String {
    let err = stderr(out);
    let line = err
        .lines()
        .find(|l| l.starts_with("error: "))
        .unwrap_or_else(|| panic!("no error line in {err:?}"))
        .to_string();
    let expected_exit = format!("exit={}", code(out));
    assert!(line.starts_with("error: code="), "{line}");
    assert!(line.contains(&expected_exit), "{line} vs {}", code(out));
    assert!(line.contains(" message="), "{line}");
    line
}

const SCALAR_CFG: &str = r#"
seed = 3
[network]
input_dim = 1
hidden_widths = [2]
[data]
points = 2
"#;

fn worked_example_dataset(dir: &Path) -> PathBuf {
    let doc = serde_json::json!({
        "format_version": 1,
        "seed": 0,
        "generator": "uniform",
        "dataset": {"input_dim": 1, "output_dim": 1, "inputs": [0.0, 1.0], "labels": [1.0, 2.0]}
    });
    let path = dir.join("worked.json");
    fs::write(&path, doc.to_string()).unwrap();
    path
}

#[test]
fn gen_data_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 11\n[network]\ninput_dim = 3\nhidden_widths = [8]\n[data]\npoints = 5\n",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert_eq!(code(&run(&["gen-data", "--config", s(&cfg), "--out", s(&a)])), 0);
    assert_eq!(code(&run(&["gen-data", "--config", s(&cfg), "--out", s(&b)])), 0);
    assert_eq!(code(&run(&["gen-data", "--config", s(&cfg), "--seed", "12", "--out", s(&c)])), 0);
    let da = fs::read(a.join("dataset.json")).unwrap();
    assert_eq!(da, fs::read(b.join("dataset.json")).unwrap());
    assert_ne!(da, fs::read(c.join("dataset.json")).unwrap());
    let doc = read_json(&c.join("dataset.json"));
    assert_eq!(doc["seed"], 12);
    assert_eq!(doc["format_version"], 1);
    assert_eq!(doc["dataset"]["inputs"].as_array().unwrap().len(), 15);
}

#[test]
fn teacher_labels_are_supported() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 1\n[network]\ninput_dim = 2\nhidden_widths = [4]\n[data]\npoints = 3\ngenerator = \"teacher\"\n",
    );
    let out = tmp.path().join("o");
    assert_eq!(code(&run(&["gen-data", "--config", s(&cfg), "--out", s(&out)])), 0);
    assert_eq!(read_json(&out.join("dataset.json"))["generator"], "teacher");
}

#[test]
fn fit_exact_reproduces_worked_example() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SCALAR_CFG);
    let data = worked_example_dataset(tmp.path());
    let out = tmp.path().join("fit");
    let res = run(&["fit-exact", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["command"], "fit-exact");
    let payload = &report["payload"];
    assert_eq!(payload["kind"], "fit-exact");
    assert!(payload["max_residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(payload["n"], 7);
    let params = read_json(&out.join("params.json"));
    assert_eq!(params["params"].as_array().unwrap().len(), 7);
}

#[test]
fn narrow_layer_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 3\n[network]\ninput_dim = 1\nhidden_widths = [1]\n[data]\npoints = 2\n",
    );
    let data = worked_example_dataset(tmp.path());
    let out = tmp.path().join("fit");
    let res = run(&["fit-exact", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&res), 2);
    assert!(error_line(&res).contains("code=too-narrow"));
    assert!(!out.join("report.json").exists());
}

#[test]
fn two_output_fit_and_analysis() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 21\n[network]\ninput_dim = 2\nhidden_widths = [8]\noutput_dim = 2\n[data]\npoints = 3\n",
    );
    let run_dir = tmp.path().join("run");
    assert_eq!(code(&run(&["gen-data", "--config", s(&cfg), "--out", s(&run_dir)])), 0);
    let data = run_dir.join("dataset.json");
    let fit = run_dir.join("fit");
    let res = run(&["fit-exact", "--config", s(&cfg), "--data", s(&data), "--out", s(&fit)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let an = run_dir.join("an");
    let params = fit.join("params.json");
    let res = run(&["analyze", "--config", s(&cfg), "--data", s(&data), "--params", s(&params), "--out", s(&an)]);
    assert_eq!(code(&res), 0);
    assert!(stdout(&res).starts_with("PASS"), "{}", stdout(&res));
    let p = &read_json(&an.join("report.json"))["payload"];
    // n = 2*8 + 8 + 8*2 + 2 = 42 parameters, 6 constraints.
    assert_eq!(p["n"], 42);
    assert_eq!(p["manifold_dimension"], 36);
    assert_eq!(p["expected"]["positive"], 6);
}

#[test]
fn deep_network_fit_passes_analysis() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 4\n[network]\ninput_dim = 2\nhidden_widths = [3, 2, 5]\n[data]\npoints = 4\n",
    );
    let data = tmp.path().join("d");
    assert_eq!(code(&run(&["gen-data", "--config", s(&cfg), "--out", s(&data)])), 0);
    let data = data.join("dataset.json");
    let fit = tmp.path().join("fit");
    let res = run(&["fit-exact", "--config", s(&cfg), "--data", s(&data), "--out", s(&fit)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let an = tmp.path().join("an");
    let params = fit.join("params.json");
    let res = run(&["analyze", "--config", s(&cfg), "--data", s(&data), "--params", s(&params), "--out", s(&an)]);
    assert!(stdout(&res).starts_with("PASS"), "{}", stdout(&res));
}

const TRAIN_CFG: &str = r#"
seed = 2
[network]
input_dim = 1
hidden_widths = [6]
[data]
points = 3
[train]
lr = 0.02
max_iters = 200000
target_loss = 1e-8
"#;

fn scalar_data(dir: &Path) -> PathBuf {
    let doc = serde_json::json!({
        "format_version": 1,
        "seed": 0,
        "generator": "uniform",
        "dataset": {"input_dim": 1, "output_dim": 1, "inputs": [-0.8, 0.1, 0.7], "labels": [0.3, -0.2, 0.5]}
    });
    let path = dir.join("data.json");
    fs::write(&path, doc.to_string()).unwrap();
    path
}

#[test]
fn train_converges_and_records_trace() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TRAIN_CFG);
    let data = scalar_data(tmp.path());
    let out = tmp.path().join("train");
    let res = run(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let p = &read_json(&out.join("report.json"))["payload"];
    assert_eq!(p["converged"], true);
    let trace = p["trace"].as_array().unwrap();
    assert_eq!(trace.len(), p["iterations"].as_u64().unwrap() as usize + 1);
    assert!(trace.last().unwrap().as_f64().unwrap() <= 1e-8);
}

#[test]
fn train_trace_is_bounded_by_iteration_budget() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &TRAIN_CFG.replace("max_iters = 200000", "max_iters = 5"));
    let data = scalar_data(tmp.path());
    let out = tmp.path().join("train");
    let res = run(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&res), 0);
    let p = &read_json(&out.join("report.json"))["payload"];
    assert_eq!(p["converged"], false);
    assert!(p["trace"].as_array().unwrap().len() <= 6);
}

#[test]
fn divergent_training_is_reported() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &TRAIN_CFG.replace("lr = 0.02", "lr = 1e6"));
    let data = scalar_data(tmp.path());
    let out = tmp.path().join("train");
    let res = run(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(code(&res), 3);
    assert!(error_line(&res).contains("code=divergence"));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["error"]["code"], "divergence");
    assert!(report["payload"].is_null());
    assert!(!out.join("params.json").exists());
}

#[test]
fn analyze_off_the_zero_set() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &TRAIN_CFG.replace("max_iters = 200000", "max_iters = 10"));
    let data = scalar_data(tmp.path());
    let train = tmp.path().join("train");
    assert_eq!(code(&run(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&train)])), 0);
    let params = train.join("params.json");
    let an = tmp.path().join("an");
    let res = run(&["analyze", "--config", s(&cfg), "--data", s(&data), "--params", s(&params), "--out", s(&an)]);
    assert_eq!(code(&res), 0);
    assert!(stdout(&res).starts_with("not on M"), "{}", stdout(&res));
    let p = &read_json(&an.join("report.json"))["payload"];
    assert_eq!(p["on_manifold"], false);
    assert!(p["manifold_dimension"].is_null());

    let walk = tmp.path().join("walk");
    let res = run(&["walk", "--config", s(&cfg), "--data", s(&data), "--params", s(&params), "--out", s(&walk)]);
    assert_eq!(code(&res), 2);
    assert!(error_line(&res).contains("code=not-on-manifold"));
}

fn fitted_run(tmp: &Path, cfg_body: &str) -> (PathBuf, PathBuf, PathBuf) {
    let cfg = write_config(tmp, "c.toml", cfg_body);
    let data = tmp.join("data");
    assert_eq!(code(&run(&["gen-data", "--config", s(&cfg), "--out", s(&data)])), 0);
    let data = data.join("dataset.json");
    let fit = tmp.join("fit");
    let res = run(&["fit-exact", "--config", s(&cfg), "--data", s(&data), "--out", s(&fit)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    (cfg, data, fit.join("params.json"))
}

const WALK_CFG: &str = r#"
seed = 9
[network]
input_dim = 2
hidden_widths = [6]
[data]
points = 4
[walk]
steps = 100
step_size = 0.01
"#;

#[test]
fn walk_stays_on_the_zero_set() {
    let tmp = TempDir::new().unwrap();
    let (cfg, data, params) = fitted_run(tmp.path(), WALK_CFG);
    let out = tmp.path().join("walk");
    let res = run(&["walk", "--config", s(&cfg), "--data", s(&data), "--params", s(&params), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let p = &read_json(&out.join("report.json"))["payload"];
    assert_eq!(p["points"], 101);
    assert!(p["max_loss"].as_f64().unwrap() <= 1e-16);
    assert!(p["displacement"].as_f64().unwrap() >= 0.3);
    assert!(p["probe_drift"].as_f64().unwrap() >= 1e-4);
    let path = read_json(&out.join("path.json"));
    assert_eq!(path["points"].as_array().unwrap().len(), 101);
}

#[test]
fn walk_with_no_steps_returns_the_start() {
    let tmp = TempDir::new().unwrap();
    let (cfg, data, params) = fitted_run(tmp.path(), &WALK_CFG.replace("steps = 100", "steps = 0"));
    let out = tmp.path().join("walk");
    let res = run(&["walk", "--config", s(&cfg), "--data", s(&data), "--params", s(&params), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let p = &read_json(&out.join("report.json"))["payload"];
    assert_eq!(p["points"], 1);
    assert_eq!(p["arc_length"], 0.0);
    let start = &read_json(&params)["params"];
    assert_eq!(&read_json(&out.join("path.json"))["points"][0], start);
}

#[test]
fn outputs_are_never_overwritten() {
    let tmp = TempDir::new().unwrap();
    let (cfg, data, _) = fitted_run(tmp.path(), WALK_CFG);
    let fit = tmp.path().join("fit");
    let before = fs::read(fit.join("report.json")).unwrap();
    let res = run(&["fit-exact", "--config", s(&cfg), "--data", s(&data), "--out", s(&fit)]);
    assert_eq!(code(&res), 4);
    assert!(error_line(&res).contains("code=io"));
    assert_eq!(fs::read(fit.join("report.json")).unwrap(), before);
}

#[test]
fn error_paths_print_one_machine_readable_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SCALAR_CFG);
    let bad_cfg = write_config(
        tmp.path(),
        "bad.toml",
        "seed = 1\n[network]\ninput_dim = 0\nhidden_widths = [2]\n[data]\npoints = 2\n",
    );
    let unknown = write_config(tmp.path(), "unknown.toml", &format!("{SCALAR_CFG}\nbogus = 1\n"));
    let out = tmp.path().join("o");
    let cases: Vec<(Vec<&str>, i32, &str)> = vec![
        (vec!["frobnicate"], 2, "code=usage"),
        (vec!["gen-data", "--out", s(&out)], 2, "code=usage"),
        (vec!["gen-data", "--config", "/nonexistent/c.toml", "--out", s(&out)], 4, "code=io"),
        (vec!["gen-data", "--config", s(&bad_cfg), "--out", s(&out)], 2, "code=invalid-input"),
        (vec!["gen-data", "--config", s(&unknown), "--out", s(&out)], 2, "code=config"),
        (vec!["fit-exact", "--config", s(&cfg), "--data", s(&cfg), "--out", s(&out)], 2, "code=parse"),
        (vec!["gen-data", "--config", s(&cfg), "--seed", "-1", "--out", s(&out)], 2, "code=usage"),
    ];
    for (args, exit, tag) in cases {
        let res = run(&args);
        assert_eq!(code(&res), exit, "{args:?}: {}", stderr(&res));
        let line = error_line(&res);
        assert!(line.contains(tag), "{args:?}: {line}");
        assert_eq!(stderr(&res).lines().count(), 1, "{args:?}: {}", stderr(&res));
    }
}

#[test]
fn report_of_nothing_is_a_header() {
    let res = run(&["report"]);
    assert_eq!(code(&res), 0);
    assert_eq!(stdout(&res).lines().count(), 1);
    assert!(stdout(&res).starts_with("file"));
}

#[test]
fn report_skips_non_reports_and_flags_failures() {
    let tmp = TempDir::new().unwrap();
    let (cfg, data, params) = fitted_run(tmp.path(), WALK_CFG);
    let an = tmp.path().join("an");
    let res = run(&["analyze", "--config", s(&cfg), "--data", s(&data), "--params", s(&params), "--out", s(&an)]);
    assert_eq!(code(&res), 0);
    let good = tmp.path().join("fit/report.json");
    let analysis = an.join("report.json");

    let res = run(&["report", s(&good), s(&analysis), s(&cfg)]);
    assert_eq!(code(&res), 2);
    assert!(error_line(&res).contains("code=schema"));
    assert!(stderr(&res).contains("skipped"));
    assert_eq!(stdout(&res).lines().count(), 3);

    let mut failed = read_json(&good);
    failed["error"] = serde_json::json!({"code": "certificate", "message": "residual too large"});
    let failed_path = tmp.path().join("failed.json");
    fs::write(&failed_path, failed.to_string()).unwrap();
    let out = tmp.path().join("summary");
    let res = run(&["report", "--out", s(&out), s(&good), s(&failed_path)]);
    assert_eq!(code(&res), 3);
    assert!(error_line(&res).contains("code=failed-reports"));
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",PASS") && lines[2].ends_with(",FAIL"), "{csv}");
    assert!(!stdout(&res).contains('\x1b'));

    let res = run(&["report", s(&good), s(&analysis)]);
    assert_eq!(code(&res), 0);
    let table = stdout(&res);
    assert!(table.lines().nth(2).unwrap().contains("analyze"));
}

#[test]
fn report_handles_fifty_runs() {
    let tmp = TempDir::new().unwrap();
    let (_, _, _) = fitted_run(tmp.path(), WALK_CFG);
    let base = read_json(&tmp.path().join("fit/report.json"));
    let mut files = Vec::new();
    for i in 0..50 {
        let path = tmp.path().join(format!("r{i:02}.json"));
        let mut doc = base.clone();
        doc["config"]["seed"] = i.into();
        fs::write(&path, doc.to_string()).unwrap();
        files.push(path);
    }
    let mut args = vec!["report", "--plain"];
    args.extend(files.iter().map(|p| s(p)));
    let res = run(&args);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let lines: Vec<String> = stdout(&res).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 51);
    // Columns line up: every row has the status in the same place.
    let col = lines[0].find("status").unwrap();
    assert!(lines[1..].iter().all(|l| l[col..].trim() == "PASS"));
}

/// Generate, fit and analyze many random problems; a failing analysis gets
/// one retry with slightly perturbed labels.
#[test]
fn pipeline_is_sound_across_seeds() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 0\n[network]\ninput_dim = 2\nhidden_widths = [5]\n[data]\npoints = 4\n",
    );
    let mut passed = 0;
    let mut retries = Vec::new();
    for seed in 0..50u64 {
        let seed_arg = seed.to_string();
        let dir = tmp.path().join(format!("s{seed}"));
        let gen = run(&["gen-data", "--config", s(&cfg), "--seed", &seed_arg, "--out", s(&dir)]);
        assert_eq!(code(&gen), 0);
        let data = dir.join("dataset.json");
        let attempt = |name: &str, extra: &[&str]| -> bool {
            let fit = dir.join(format!("fit-{name}"));
            let mut args = vec!["fit-exact", "--config", s(&cfg), "--seed", &seed_arg, "--data", s(&data)];
            args.extend_from_slice(extra);
            args.extend(["--out", s(&fit)]);
            if code(&run(&args)) != 0 {
                return false;
            }
            let fitted_data = if fit.join("dataset.json").exists() { fit.join("dataset.json") } else { data.clone() };
            let params = fit.join("params.json");
            let an = dir.join(format!("an-{name}"));
            let res = run(&[
                "analyze",
                "--config",
                s(&cfg),
                "--seed",
                &seed_arg,
                "--data",
                s(&fitted_data),
                "--params",
                s(&params),
                "--out",
                s(&an),
            ]);
            code(&res) == 0 && stdout(&res).starts_with("PASS")
        };
        if attempt("plain", &[]) {
            passed += 1;
        } else {
            retries.push(seed);
            if attempt("retry", &["--perturb-eps", "1e-3"]) {
                passed += 1;
            }
        }
    }
    eprintln!("pipeline: {passed}/50 passed, retried seeds {retries:?}");
    assert!(passed >= 49, "{passed}/50");
    assert!(retries.len() <= 1, "retried {retries:?}");
}
