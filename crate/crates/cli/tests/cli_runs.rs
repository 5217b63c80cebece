//! Behavior checks through the compiled binary: exit codes, config
//! merging, protocol CSV inputs, and report rendering.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dnd_core::metrics::{BiasReport, ThresholdRule};

fn dnd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dnd"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawning dnd")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// A tiny two-group dataset most tests share.
fn gen_small(dir: &Path) -> String {
    let data = dir.join("d.feat").display().to_string();
    let out = run(dnd().args([
        "gen-data",
        "--seed",
        "3",
        "--group",
        "a:2:0.3",
        "--group",
        "b:2:0.3",
        "--samples-per-id",
        "4",
        "--input-dim",
        "8",
        "--out",
        &data,
    ]));
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    data
}

fn train_small_teacher(dir: &Path, data: &str) -> String {
    let ckpt = dir.join("t.ckpt").display().to_string();
    let out = run(dnd().args([
        "train-teacher",
        "--data",
        data,
        "--high",
        "a",
        "--low",
        "b",
        "--epochs",
        "4",
        "--batch-size",
        "8",
        "--seed",
        "1",
        "--hidden",
        "6",
        "--embed-dim",
        "4",
        "--out",
        &ckpt,
    ]));
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    ckpt
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<(&str, Vec<String>)> = vec![
        ("unknown flag", vec!["gen-data".into(), "--bogus".into()]),
        ("missing output", vec![
            "gen-data".into(),
            "--seed".into(),
            "1".into(),
        ]),
        ("duplicate group label", vec![
            "gen-data".into(),
            "--group".into(),
            "a:2:0.3".into(),
            "--group".into(),
            "a:2:0.5".into(),
            "--out".into(),
            dir.path().join("x.feat").display().to_string(),
        ]),
        ("malformed group spec", vec![
            "gen-data".into(),
            "--group".into(),
            "a:2".into(),
            "--out".into(),
            dir.path().join("x.feat").display().to_string(),
        ]),
    ];
    for (what, args) in cases {
        let out = run(dnd().args(&args));
        assert_eq!(code(&out), 2, "{what}: {}", stderr_of(&out));
    }

    let data = gen_small(dir.path());
    let ckpt = train_small_teacher(dir.path(), &data);
    let out = run(dnd().args([
        "eval", "--net", &ckpt, "--data", &data, "--fpr", "0",
    ]));
    assert_eq!(code(&out), 2, "zero FPR target: {}", stderr_of(&out));
    let out = run(dnd().env("DND_THREADS", "zero").args([
        "eval", "--net", &ckpt, "--data", &data,
    ]));
    assert_eq!(code(&out), 2, "bad thread cap: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("DND_THREADS"));
}

#[test]
fn domain_errors_exit_1_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path());
    let missing = dir.path().join("absent.ckpt").display().to_string();
    let out = run(dnd().args(["eval", "--net", &missing, "--data", &data]));
    assert_eq!(code(&out), 1);
    let err = stderr_of(&out);
    let diagnostics: Vec<&str> = err
        .lines()
        .filter(|l| l.starts_with("error:"))
        .collect();
    assert_eq!(diagnostics.len(), 1, "stderr: {err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("train.toml");
    std::fs::write(&config, "epochs = 4\nlerning_rate = 0.1\n").unwrap();
    let out = run(dnd().args([
        "train-teacher",
        "--config",
        &config.display().to_string(),
    ]));
    assert_eq!(code(&out), 2, "{}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("lerning_rate"), "stderr: {err}");
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
}

#[test]
fn config_file_matches_flags_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path());
    let by_flags = train_small_teacher(dir.path(), &data);

    let config = dir.path().join("teacher.toml");
    std::fs::write(
        &config,
        format!(
            "data = {data:?}\nhigh = \"a\"\nlow = \"b\"\nepochs = 4\n\
             batch_size = 8\nseed = 1\nhidden = \"6\"\nembed_dim = 4\n"
        ),
    )
    .unwrap();
    let from_config = dir.path().join("t2.ckpt").display().to_string();
    let out = run(dnd().args([
        "train-teacher",
        "--config",
        &config.display().to_string(),
        "--out",
        &from_config,
    ]));
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert_eq!(
        std::fs::read(&by_flags).unwrap(),
        std::fs::read(&from_config).unwrap(),
        "config run should reproduce the flag run"
    );

    let overridden = dir.path().join("t3.ckpt").display().to_string();
    let out = run(dnd().args([
        "train-teacher",
        "--config",
        &config.display().to_string(),
        "--epochs",
        "6",
        "--out",
        &overridden,
    ]));
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert_ne!(
        std::fs::read(&by_flags).unwrap(),
        std::fs::read(&overridden).unwrap(),
        "the flag must override the file value"
    );
    let manifest = std::fs::read_to_string(dir.path().join("t3.manifest.json")).unwrap();
    assert!(manifest.contains("\"epochs\": 6"), "{manifest}");
}

#[test]
fn osd_source_flags_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path());
    let ckpt = train_small_teacher(dir.path(), &data);
    let out_path = dir.path().join("s.ckpt").display().to_string();
    let base = |extra: &[&str]| {
        let mut cmd = dnd();
        cmd.args([
            "train-osd", "--data", &data, "--high", "a", "--low", "b", "--epochs", "2",
            "--batch-size", "8", "--out", &out_path,
        ])
        .args(extra);
        run(&mut cmd)
    };
    let cases: Vec<(&str, Vec<&str>)> = vec![
        ("both sources", vec!["--teacher", &ckpt, "--from-scratch"]),
        ("no source", vec![]),
        ("scratch with lambda", vec!["--from-scratch", "--lambda", "0.5"]),
        ("teacher with arch flags", vec!["--teacher", &ckpt, "--hidden", "6"]),
    ];
    for (what, extra) in cases {
        let out = base(&extra);
        assert_eq!(code(&out), 2, "{what}: {}", stderr_of(&out));
    }
}

#[test]
fn explicit_protocol_csvs_drive_the_scores() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path());
    let ckpt = train_small_teacher(dir.path(), &data);

    // Four identities with four samples each, in generation order: two
    // templates per identity, then all same-group pairs.
    let mut membership = String::from("sample_id,template_id\n");
    for id in 0..4 {
        for s in 0..4 {
            writeln!(membership, "{},t{}_{}", id * 4 + s, id, s / 2).unwrap();
        }
    }
    let membership_path = dir.path().join("members.csv");
    std::fs::write(&membership_path, membership).unwrap();

    let mut pairs = String::from("template_a_id,template_b_id,genuine\n");
    for id in 0..4 {
        writeln!(pairs, "t{id}_0,t{id}_1,1").unwrap();
    }
    for (x, y) in [(0, 1), (2, 3)] {
        for sx in 0..2 {
            for sy in 0..2 {
                writeln!(pairs, "t{x}_{sx},t{y}_{sy},0").unwrap();
            }
        }
    }
    let pairs_path = dir.path().join("pairs.csv");
    std::fs::write(&pairs_path, pairs).unwrap();

    let out = run(dnd().args([
        "eval",
        "--net",
        &ckpt,
        "--data",
        &data,
        "--membership",
        &membership_path.display().to_string(),
        "--pairs",
        &pairs_path.display().to_string(),
        "--fpr",
        "0.25,1.0",
        "--method",
        "csv-protocol",
    ]));
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let report: BiasReport = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(report.method, "csv-protocol");
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.rows[0].fpr, 0.25);
    let groups: Vec<&String> = report.rows[0].tpr_per_group.keys().collect();
    assert_eq!(groups, ["a", "b"]);
    // Every template holds two samples, so the all-pairs default would
    // have seen a different protocol; four genuine pairs pin this one.
    assert_eq!(report.rows[1].fpr, 1.0);
    assert_eq!(report.rows[1].tpr_overall, 1.0);
}

#[test]
fn interpolation_reaches_below_the_quantization_floor() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path());
    let ckpt = train_small_teacher(dir.path(), &data);
    let args = |rest: &[&str]| {
        let mut cmd = dnd();
        cmd.args(["eval", "--net", &ckpt, "--data", &data, "--fpr", "1e-9"])
            .args(rest);
        run(&mut cmd)
    };
    let out = args(&[]);
    assert_eq!(code(&out), 1, "conservative should reject a sub-floor target");
    assert!(stderr_of(&out).starts_with("error:"), "{}", stderr_of(&out));
    let out = args(&["--interpolate"]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let report: BiasReport = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(report.rule, ThresholdRule::Interpolated);
}

#[test]
fn attention_out_writes_group_mean_maps() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path());
    let ckpt = train_small_teacher(dir.path(), &data);
    let maps = dir.path().join("maps.csv");
    let out = run(dnd().args([
        "eval",
        "--net",
        &ckpt,
        "--data",
        &data,
        "--fpr",
        "0.25",
        "--attention-out",
        &maps.display().to_string(),
        "--out",
        &dir.path().join("r.json").display().to_string(),
    ]));
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let csv = std::fs::read_to_string(&maps).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("input_index,a,b"));
    assert_eq!(lines.count(), 8, "one row per input coordinate");
    assert!(
        stderr_of(&out).contains("group similarity"),
        "{}", stderr_of(&out)
    );
}

#[test]
fn report_renders_multiple_methods_side_by_side() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path());
    let ckpt = train_small_teacher(dir.path(), &data);
    let mut jsons: Vec<PathBuf> = Vec::new();
    for name in ["alpha", "beta"] {
        let path = dir.path().join(format!("{name}.json"));
        let out = run(dnd().args([
            "eval",
            "--net",
            &ckpt,
            "--data",
            &data,
            "--fpr",
            "0.25",
            "--method",
            name,
            "--out",
            &path.display().to_string(),
        ]));
        assert_eq!(code(&out), 0, "{}", stderr_of(&out));
        jsons.push(path);
    }
    let out = run(dnd().arg("report").args(jsons.iter().map(|p| p.as_os_str())));
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let table = stdout_of(&out);
    assert!(table.contains("alpha") && table.contains("beta"), "{table}");

    let rendered = dir.path().join("summary.txt");
    let out = run(
        dnd()
            .arg("report")
            .args(jsons.iter().map(|p| p.as_os_str()))
            .args(["--out", &rendered.display().to_string()]),
    );
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert_eq!(std::fs::read_to_string(&rendered).unwrap(), table);

    let out = run(dnd().arg("report"));
    assert_eq!(code(&out), 2, "report with no files is a usage error");
}

#[test]
fn three_groups_need_an_explicit_bias_pair() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tri.feat").display().to_string();
    let out = run(dnd().args([
        "gen-data",
        "--seed",
        "5",
        "--group",
        "a:2:0.3",
        "--group",
        "b:2:0.3",
        "--group",
        "c:2:0.3",
        "--samples-per-id",
        "4",
        "--input-dim",
        "8",
        "--out",
        &data,
    ]));
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let ckpt = dir.path().join("t.ckpt").display().to_string();
    let out = run(dnd().args([
        "train-teacher", "--data", &data, "--high", "a", "--low", "b", "--epochs", "2",
        "--batch-size", "8", "--hidden", "6", "--embed-dim", "4", "--out", &ckpt,
    ]));
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let out = run(dnd().args(["eval", "--net", &ckpt, "--data", &data, "--fpr", "0.25"]));
    assert_eq!(code(&out), 2, "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("--bias-high"), "{}", stderr_of(&out));

    let out = run(dnd().args([
        "eval", "--net", &ckpt, "--data", &data, "--fpr", "0.25", "--bias-high", "a",
        "--bias-low", "c",
    ]));
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let report: BiasReport = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(report.bias_pair, ("a".to_string(), "c".to_string()));
    assert!(report.rows[0].std.is_some(), "three groups carry a spread column");
}
