use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn holoverify(dataset: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holoverify"))
        .arg("--dataset")
        .arg(dataset)
        .arg("--out")
        .arg(out)
        .args(["--set", "synth.n_models=2", "--set", "synth.frames_per_clip=5"])
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn holoverify")
}

fn ok(o: Output) -> String {
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(o.status.success(), "exit {:?}\nstdout:\n{stdout}\nstderr:\n{}", o.status, String::from_utf8_lossy(&o.stderr));
    stdout
}

#[test]
fn synth_split_train_calibrate_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("out"));
    ok(holoverify(&data, &out, &["synth"]));
    ok(holoverify(&data, &out, &["split", "--runs", "1"]));
    ok(holoverify(&data, &out, &["train", "--run", "0", "--epochs", "1", "--batch-size", "4"]));
    let run = out.join("contrastive/run_0");
    assert!(run.join("model.ckpt").is_file());
    assert!(run.join("history.json").is_file());
    ok(holoverify(&data, &out, &["calibrate", "--run", "0"]));
    for s in ["whole", "cumulative"] {
        assert!(run.join(format!("calibration_{s}.json")).is_file(), "missing {s} calibration");
    }
    let table = ok(holoverify(&data, &out, &["evaluate", "--runs", "1"]));
    assert!(table.contains("contrastive"), "{table}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.get("config_hash").is_some());
    assert!(out.join("report.txt").is_file());
}

#[test]
fn missing_checkpoint_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = tmp.path().join("nope.ckpt");
    let o = holoverify(
        tmp.path(),
        tmp.path(),
        &["infer", "--checkpoint", ckpt.to_str().unwrap(), "--calibration", "x.json", "--clip", "c"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.ckpt"));
}

#[test]
fn split_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(holoverify(&data, &a, &["--set", "synth.frames_per_clip=2", "synth"]));
    ok(holoverify(&data, &a, &["--seed", "7", "split", "--runs", "2"]));
    ok(holoverify(&data, &b, &["--seed", "7", "split", "--runs", "2"]));
    for r in 0..2 {
        let name = format!("splits/run_{r}.split");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
}
