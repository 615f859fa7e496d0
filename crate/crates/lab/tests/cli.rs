use std::path::Path;
use std::process::{Command, Output};

use elstm_lab::output::read_metrics_csv;
use tempfile::TempDir;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elstm-lab"))
        .args(args)
        .env("ELSTM_LAB_THREADS", "1")
        .output()
        .expect("spawn elstm-lab")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &TempDir, n: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.path().join(format!("letters-{n}-{seed}.txt"));
    let out = lab(&[
        "gen-data",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        p(&path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

/// CSV text with the seconds column removed.
fn without_seconds(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn gen_data_writes_requested_letters_deterministically() {
    let dir = TempDir::new().unwrap();
    let a = gen(&dir, 11000, 7);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes.len(), 11000);
    assert!(bytes.iter().all(|b| b.is_ascii_lowercase()));
    let b = dir.path().join("again.txt");
    assert_eq!(
        code(&lab(&[
            "gen-data",
            "--n",
            "11000",
            "--seed",
            "7",
            "--out",
            p(&b)
        ])),
        0
    );
    assert_eq!(bytes, std::fs::read(&b).unwrap());
}

#[test]
fn gen_data_usage_and_io_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let out = lab(&["gen-data", "--n", "1", "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&out), 1);
    let out = lab(&[
        "gen-data",
        "--n",
        "10",
        "--out",
        p(&dir.path().join("no/such/dir/x.txt")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no/such/dir"));
}

#[test]
fn unknown_flags_and_help() {
    assert_eq!(code(&lab(&["train", "--data", "x", "--bogus"])), 1);
    assert_eq!(code(&lab(&["frobnicate"])), 1);
    let help = lab(&["train", "--help"]);
    assert_eq!(code(&help), 0);
    let text = String::from_utf8_lossy(&help.stdout);
    for default in ["100", "25", "0.1", "5", "80", "0.001"] {
        assert!(
            text.contains(&format!("[default: {default}]")),
            "missing default {default}"
        );
    }
}

#[test]
fn train_missing_data_names_the_path() {
    let out = lab(&[
        "train",
        "--data",
        "/definitely/missing.txt",
        "--epochs",
        "1",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("/definitely/missing.txt"));
}

#[test]
fn train_writes_one_row_per_epoch_and_a_checkpoint() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, 300, 1);
    let csv = dir.path().join("m.csv");
    let ckpt = dir.path().join("c.json");
    let out = lab(&[
        "train",
        "--model",
        "elstm",
        "--data",
        p(&data),
        "--hidden",
        "8",
        "--epochs",
        "2",
        "--egate-window",
        "5",
        "--metrics-out",
        p(&csv),
        "--checkpoint-out",
        p(&ckpt),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("loss=")
            && stdout.contains("accuracy=")
            && stdout.contains("mean_epoch_seconds=")
    );
    let rows = read_metrics_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.model == "elstm" && r.seconds > 0.0));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&ckpt).unwrap()).unwrap();
    assert_eq!(doc["model"], "elstm");
    assert!(doc["egate"].is_object());
}

#[test]
fn gain_zero_cli_csv_matches_lstm() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, 400, 2);
    let run = |model: &str, name: &str| {
        let csv = dir.path().join(name);
        let out = lab(&[
            "train",
            "--model",
            model,
            "--data",
            p(&data),
            "--hidden",
            "10",
            "--epochs",
            "3",
            "--seed",
            "5",
            "--egate-gain",
            "0",
            "--egate-window",
            "4",
            "--metrics-out",
            p(&csv),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        without_seconds(&csv).replace(model, "MODEL")
    };
    assert_eq!(run("lstm", "l.csv"), run("elstm", "e.csv"));
}

#[test]
fn gradcheck_exit_codes() {
    for model in ["lstm", "elstm"] {
        let out = lab(&["gradcheck", "--model", model, "--tolerance", "1e-5"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("max_rel_error="));
    }
    assert_eq!(code(&lab(&["gradcheck", "--tolerance", "0"])), 1);
    let out = lab(&["gradcheck", "--tolerance", "1e-300"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("block"));
}

#[test]
fn sample_contract() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, 200, 3);
    let ckpt = dir.path().join("c.json");
    let out = lab(&[
        "train",
        "--model",
        "lstm",
        "--data",
        p(&data),
        "--hidden",
        "6",
        "--epochs",
        "1",
        "--checkpoint-out",
        p(&ckpt),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let sample = |extra: &[&str]| {
        let mut args = vec!["sample", "--checkpoint", p(&ckpt)];
        args.extend_from_slice(extra);
        let out = lab(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        String::from_utf8(out.stdout)
            .unwrap()
            .trim_end_matches('\n')
            .to_string()
    };
    let five = sample(&["--length", "5", "--seed", "9"]);
    assert_eq!(five.chars().count(), 5);
    assert!(five.chars().all(|c| c.is_ascii_lowercase()));
    assert_eq!(five, sample(&["--length", "5", "--seed", "9"]));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format_version\": 1").unwrap();
    assert_eq!(code(&lab(&["sample", "--checkpoint", p(&bad)])), 1);
    assert_eq!(
        code(&lab(&[
            "sample",
            "--checkpoint",
            p(&ckpt),
            "--temperature",
            "0"
        ])),
        1
    );
    assert_eq!(
        code(&lab(&["sample", "--checkpoint", p(&ckpt), "--length", "0"])),
        1
    );
}

#[test]
fn compare_report_and_csv() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, 300, 4);
    let report = dir.path().join("r.json");
    let csv = dir.path().join("m.csv");
    let out = lab(&[
        "compare",
        "--data",
        p(&data),
        "--hidden",
        "8",
        "--epochs",
        "3",
        "--egate-window",
        "5",
        "--egate-gain",
        "0",
        "--targets",
        "100,0.001",
        "--report-out",
        p(&report),
        "--metrics-out",
        p(&csv),
        "--serial",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert!(doc["overhead_pct"].is_number());
    assert!(doc["models"]["lstm"]["mean_epoch_seconds"].is_number());
    assert!(doc["models"]["elstm"]["mean_epoch_seconds"].is_number());
    let rows = doc["epochs_to_target"].as_array().unwrap();
    assert_eq!(rows[0]["ratio"], 1.0);
    assert_eq!(rows[0]["lstm"], 1);
    assert!(rows[1]["ratio"].is_null() && rows[1]["lstm"].is_null() && rows[1]["elstm"].is_null());
    assert_eq!(doc["config"]["schedule"], "serial");
    let rows = read_metrics_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.iter().filter(|r| r.model == "lstm").count(), 3);
    assert_eq!(rows.iter().filter(|r| r.model == "elstm").count(), 3);
}

#[test]
fn training_blowup_exits_two_with_context() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, 300, 6);
    let out = lab(&[
        "train",
        "--model",
        "lstm",
        "--data",
        p(&data),
        "--hidden",
        "4",
        "--epochs",
        "3",
        "--lr",
        "1e308",
        "--clip",
        "1e308",
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("epoch") && err.contains("segment"), "{err}");
}
