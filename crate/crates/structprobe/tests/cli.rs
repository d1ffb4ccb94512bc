mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use structprobe::write_container;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_structprobe"));
    c.env_remove("STRUCTPROBE_THREADS").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Setup {
    dir: tempfile::TempDir,
    embeddings: PathBuf,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let embeddings = dir.path().join("fixture.spb");
    write_container(&common::fixture_embeddings(3, 1, 5), &embeddings).unwrap();
    Setup { dir, embeddings }
}

fn train_args<'a>(
    st: &'a Setup,
    out: &'a str,
    train: &'a str,
    dev: &'a str,
    test: &'a str,
) -> Vec<&'a str> {
    vec![
        "train",
        "--treebank-train",
        train,
        "--treebank-dev",
        dev,
        "--treebank-test",
        test,
        "--embeddings",
        s(&st.embeddings),
        "--layer",
        "1",
        "--rank",
        "5",
        "--epochs",
        "20",
        "--lr",
        "0.01",
        "--seed",
        "11",
        "--out",
        out,
    ]
}

fn fixture_paths() -> [String; 3] {
    ["train", "dev", "test"].map(|n| {
        common::fixture(&format!("{n}.conllu"))
            .to_str()
            .unwrap()
            .to_string()
    })
}

#[test]
fn train_eval_viz_end_to_end() {
    let st = setup();
    let [train, dev, test] = fixture_paths();
    let out = st.dir.path().join("run");
    let o = run(&train_args(&st, s(&out), &train, &dev, &test));
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "config.json",
        "metrics.csv",
        "checkpoint.spp",
        "report.json",
        "eval_dev.json",
        "eval_test.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,train_loss,dev_loss,lr\n"));

    let report = st.dir.path().join("eval.json");
    let o = run(&[
        "eval",
        "--checkpoint",
        s(&out.join("checkpoint.spp")),
        "--treebank",
        &test,
        "--embeddings",
        s(&st.embeddings),
        "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("UUAS "));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["config"]["layer"], 1);
    // the run dir's own test evaluation used the same probe and data
    let in_run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("eval_test.json")).unwrap()).unwrap();
    assert_eq!(json["uuas"], in_run["uuas"]);

    let arcs = st.dir.path().join("arcs");
    let o = run(&[
        "viz",
        "arcs",
        "--report",
        s(&report),
        "--sent-id",
        "test-01",
        "--out",
        s(&arcs),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(arcs.join("test-01.svg")).unwrap();
    assert!(svg.contains("<path"));

    let o = run(&[
        "viz",
        "arcs",
        "--report",
        s(&report),
        "--sent-id",
        "nope",
        "--out",
        s(&st.dir.path().join("a2")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seeded_runs_write_identical_checkpoints() {
    let st = setup();
    let [train, dev, test] = fixture_paths();
    let a = st.dir.path().join("a");
    let b = st.dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&train_args(&st, s(out), &train, &dev, &test));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(a.join("checkpoint.spp")).unwrap(),
        fs::read(b.join("checkpoint.spp")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("metrics.csv")).unwrap(),
        fs::read(b.join("metrics.csv")).unwrap()
    );
}

#[test]
fn clobber_refused_then_overwritten() {
    let st = setup();
    let [train, dev, test] = fixture_paths();
    let out = st.dir.path().join("run");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("notes.txt"), "keep").unwrap();
    let mut args = train_args(&st, s(&out), &train, &dev, &test);
    let epochs = args.iter().position(|a| *a == "20").unwrap();
    args[epochs] = "2";
    let o = run(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--overwrite"));
    args.push("--overwrite");
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("checkpoint.spp").exists());
    assert_eq!(fs::read_to_string(out.join("notes.txt")).unwrap(), "keep");
}

#[test]
fn usage_errors_exit_2() {
    let st = setup();
    let [train, dev, test] = fixture_paths();
    let out = st.dir.path().join("run");

    let mut args = train_args(&st, s(&out), &train, &dev, &test);
    args.extend(["--kernel", "rbff"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for k in ["linear", "poly", "rbf", "sigmoid", "bilinear-ref"] {
        assert!(err.contains(k), "{err}");
    }

    let o = run(&[
        "train",
        "--treebank-dev",
        &dev,
        "--embeddings",
        s(&st.embeddings),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--treebank-train"), "{}", stderr(&o));

    let missing = st.dir.path().join("missing.conllu");
    let o = run(&train_args(&st, s(&out), s(&missing), &dev, &test));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.conllu"));

    let mut args = train_args(&st, s(&out), &train, &dev, &test);
    let layer = args.iter().position(|a| *a == "--layer").unwrap() + 1;
    args[layer] = "3";
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("layer"));

    let o = run(&[
        "sweep",
        "--mode",
        "ranks",
        "--ranks",
        "2,8,2",
        "--treebank-train",
        &train,
        "--treebank-dev",
        &dev,
        "--embeddings",
        s(&st.embeddings),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = bin()
        .args(train_args(&st, s(&out), &train, &dev, &test))
        .env("STRUCTPROBE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("STRUCTPROBE_THREADS"));
    assert!(!out.exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let st = setup();
    let [train, dev, _] = fixture_paths();
    let cfg = st.dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"train": {"rank": 3, "max_epochs": 2, "kernel": "poly", "layer": 1}}"#,
    )
    .unwrap();
    let out = st.dir.path().join("run");
    let o = run(&[
        "train",
        "--config",
        s(&cfg),
        "--treebank-train",
        &train,
        "--treebank-dev",
        &dev,
        "--embeddings",
        s(&st.embeddings),
        "--rank",
        "4",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let written: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["train"]["rank"], 4);
    assert_eq!(written["train"]["max_epochs"], 2);
    assert_eq!(written["train"]["kernel"], "poly");
    assert!(!out.join("eval_test.json").exists());

    fs::write(&cfg, r#"{"train": {"rnak": 3}}"#).unwrap();
    let o = run(&[
        "train",
        "--config",
        s(&cfg),
        "--treebank-train",
        &train,
        "--treebank-dev",
        &dev,
        "--embeddings",
        s(&st.embeddings),
        "--out",
        s(&st.dir.path().join("run2")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_then_chart() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = run(&[
        "synth",
        "--out",
        s(&data),
        "--train",
        "20",
        "--dev",
        "5",
        "--test",
        "5",
        "--layers",
        "2",
        "--planted-layer",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "train.conllu",
        "dev.conllu",
        "test.conllu",
        "embeddings.spb",
    ] {
        assert!(data.join(f).exists(), "{f}");
    }
    let csv = dir.path().join("a.csv");
    fs::write(
        &csv,
        "sweep_key,uuas_dev,uuas_test\n0,40.5,41\n1,90,88.25\n",
    )
    .unwrap();
    let svg = dir.path().join("c.svg");
    let o = run(&[
        "viz",
        "chart",
        "--csv",
        s(&csv),
        "--out",
        s(&svg),
        "--x-label",
        "layer",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read(&svg).unwrap();
    let o = run(&[
        "viz",
        "chart",
        "--csv",
        s(&csv),
        "--out",
        s(&svg),
        "--x-label",
        "layer",
        "--overwrite",
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(&svg).unwrap(), first);
}
