use std::fs;
use std::process::{Command, Output};

fn bpg_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpg-lab"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn preset_list_names_every_preset() {
    let out = bpg_lab(&["presets", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for p in bpg_lab::harness::presets::PRESETS {
        assert!(
            text.lines().any(|l| l.starts_with(p.name)),
            "missing {}",
            p.name
        );
    }
}

#[test]
fn preset_show_round_trips() {
    let out = bpg_lab(&["presets", "show", "lqr-grad"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text,
        bpg_lab::harness::presets::find("lqr-grad").unwrap().text
    );
}

#[test]
fn grad_compare_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/bandit.csv");
    let args = [
        "grad-compare",
        "--config",
        "preset:bandit-grad",
        "--set",
        "repetitions=2",
        "--set",
        "M=5",
        "--out",
        path.to_str().unwrap(),
    ];
    let out = bpg_lab(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# schema=1");
    assert_eq!(lines[1], "estimator,M,rep,mse,angular_error_deg");
    // 3 estimators x 2 repetitions, then mean and stderr per estimator
    assert_eq!(lines.len(), 2 + 6 + 6);
    // same seed, same bytes
    let again = bpg_lab(&args[..args.len() - 2]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), csv);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.cfg");
    fs::write(
        &path,
        "experiment = tiny\nenv = bandit-linear\nestimators = mc\nM = 3\nrepetitions = 1\n",
    )
    .unwrap();
    let out = bpg_lab(&[
        "grad-compare",
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8(out.stdout).unwrap().contains("mc,3,0,"));
}

#[test]
fn errors_exit_nonzero_with_message() {
    let out = bpg_lab(&["grad-compare", "--config", "preset:nope"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("unknown preset `nope`"));
    let out = bpg_lab(&[
        "grad-compare",
        "--config",
        "preset:bandit-grad",
        "--set",
        "no_equals",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("KEY=VALUE"));
    let out = bpg_lab(&[
        "grad-compare",
        "--config",
        "preset:bandit-grad",
        "--set",
        "bogus_key=1",
    ]);
    assert!(!out.status.success());
}
