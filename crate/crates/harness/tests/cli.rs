use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const TINY: &str = r#"
[data]
packets_per_zone = 10
ood_packets = 12

[train]
epochs_stage1 = 2
epochs_stage2 = 1
epochs_sequential = 1
batch = 16

[adblock]
epochs = 1
batch = 16

[link]
n_symbols = 2

[sweeps]
knn_k = [1, 3]
fine_tune_sizes = [20, 40]
fine_tune_epochs = 1
"#;

fn fpnet(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpnet")).arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = fpnet(out, args);
    assert!(o.status.success(), "fpnet {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn tiny_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let run = dir.path().join("run");

    let files = ok(&run, &["--config", cfg.to_str().unwrap(), "--seed", "3", "gen-data"]);
    assert_eq!(files.lines().count(), 4);
    let stored = std::fs::read(run.join("config.toml")).unwrap();
    let digest = std::fs::read_to_string(run.join("config.sha256")).unwrap();
    assert_eq!(digest.trim(), hex::encode(Sha256::digest(&stored)));

    let early = fpnet(&run, &["eval"]);
    assert!(!early.status.success());
    assert!(String::from_utf8_lossy(&early.stderr).contains("fpnet train"));

    ok(&run, &["train"]);
    let eval = ok(&run, &["eval"]);
    let ids: Vec<&str> = eval.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(ids, ["fpnet", "type0", "type1"]);
    assert!(eval.contains("feedback_bits=100.000000") && eval.contains("feedback_bits=672.000000"));

    let summary = ok(&run, &["report"]);
    assert!(summary.contains("## eval") && summary.contains("## Missing") && summary.contains("`baseline`"));
    let first = std::fs::read(run.join("summary.md")).unwrap();
    ok(&run, &["report"]);
    assert_eq!(std::fs::read(run.join("summary.md")).unwrap(), first);
    assert!(run.join("report/eval.csv").exists());

    let rep = ok(&run, &["reproduce", "--metric", "eval/fpnet/sgcs"]);
    assert!(rep.contains("identical true"), "{rep}");
    assert!(ok(&run, &["reproduce"]).contains("identical true"));
    assert!(!fpnet(&run, &["reproduce", "--metric", "eval/nothing/sgcs"]).status.success());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nalpah = 3.0\n").unwrap();
    let o = fpnet(&dir.path().join("run"), &["--config", cfg.to_str().unwrap(), "gen-data"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpah"));
}
