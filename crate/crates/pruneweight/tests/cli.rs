use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pruneweight::tables;

const SMALL: &str = r#"seed = 5

[dataset]
generator = "gaussian_mixture"
classes = 3
per_class = 20
dim = 2

[encoder]
kind = "identity"

[prune]
method = "moderate_ds"
ratio = 0.25

[model]
hidden = [8]

[reference]
epochs = 5

[dro]
epochs = 2

[train]
epochs = 5

[sample]
per_class = 10
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pruneweight"))
        .args(args)
        .output()
        .expect("spawn pruneweight")
}

fn stage(cmd: &str, cfg: &Path, out: &Path) -> Output {
    run(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn ok(o: &Output) -> &Output {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(text: &str) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    (dir, cfg, out)
}

fn with_line(base: &str, section: &str, line: &str) -> String {
    base.replace(&format!("[{section}]\n"), &format!("[{section}]\n{line}\n"))
}

#[test]
fn missing_config_file_exits_2() {
    let o = run(&["gen-data", "--config", "/nonexistent/cfg.toml", "--out", "/tmp"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let (_d, cfg, out) = setup(&with_line(SMALL, "prune", "ratoi = 0.5"));
    let o = stage("gen-data", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ratoi"), "{}", stderr(&o));
}

#[test]
fn missing_stage_input_names_the_producer() {
    let (_d, cfg, out) = setup(SMALL);
    ok(&stage("gen-data", &cfg, &out));
    let o = stage("train", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("coreset.csv") && stderr(&o).contains("prune"), "{}", stderr(&o));
}

#[test]
fn missing_encoder_path_is_named() {
    let (_d, cfg, out) = setup(&with_line(SMALL, "encoder", "path = \"no_such.enc\""));
    let o = stage("prune", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such.enc"), "{}", stderr(&o));
}

#[test]
fn truncated_dataset_exits_3_and_future_version_exits_4() {
    let (_d, cfg, out) = setup(SMALL);
    ok(&stage("gen-data", &cfg, &out));
    let data = out.join("data.lds");
    let bytes = std::fs::read(&data).unwrap();

    std::fs::write(&data, &bytes[..bytes.len() - 3]).unwrap();
    assert_eq!(stage("prune", &cfg, &out).status.code(), Some(3));

    let mut future = bytes.clone();
    future[4..8].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(&data, &future).unwrap();
    let o = stage("prune", &cfg, &out);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("99"), "{}", stderr(&o));
}

#[test]
fn seed_flag_overrides_config() {
    let (_d, cfg, out) = setup(SMALL);
    let c = cfg.to_str().unwrap();
    let read = |p: &Path| std::fs::read(p.join("data.lds")).unwrap();
    let a = out.join("a");
    let b = out.join("b");
    let s = out.join("s");
    ok(&run(&["gen-data", "--config", c, "--out", a.to_str().unwrap()]));
    ok(&run(&["gen-data", "--config", c, "--out", b.to_str().unwrap(), "--seed", "5"]));
    ok(&run(&["gen-data", "--config", c, "--out", s.to_str().unwrap(), "--seed", "6"]));
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&s));
}

#[test]
fn full_ratio_keeps_every_sample() {
    let (_d, cfg, out) = setup(&SMALL.replace("ratio = 0.25", "ratio = 1.0"));
    ok(&stage("gen-data", &cfg, &out));
    ok(&stage("prune", &cfg, &out));
    let c = tables::read_coreset(&out.join("coreset.csv")).unwrap();
    assert_eq!(c.indices, (0..60).collect::<Vec<_>>());
    assert_eq!(c.per_class_counts, vec![20, 20, 20]);
}

#[test]
fn disabled_dro_writes_uniform_weights_without_a_reference() {
    let (_d, cfg, out) = setup(&with_line(SMALL, "dro", "enabled = false"));
    for s in ["gen-data", "prune", "reweight", "train"] {
        ok(&stage(s, &cfg, &out));
    }
    assert!(!out.join("reference.dmc").exists());
    let w = tables::read_weights(&out.join("weights.csv")).unwrap();
    assert_eq!(w.alpha(), &[1.0 / 3.0; 3]);
    assert_eq!(w.steps(), 0);
}

#[test]
fn real_against_itself_scores_zero() {
    let (_d, cfg, out) = setup(SMALL);
    ok(&stage("gen-data", &cfg, &out));
    ok(&stage("prune", &cfg, &out));
    std::fs::copy(out.join("data.lds"), out.join("samples.lds")).unwrap();
    ok(&stage("eval", &cfg, &out));
    let r = tables::read_report(&out.join("report.csv")).unwrap();
    assert!(r.get("frechet", "all").unwrap().abs() < 1e-9);
    assert_eq!(r.get("mmd_sq", "all").unwrap(), 0.0);
    for c in 0..3 {
        assert!(r.get("frechet", &c.to_string()).unwrap().abs() < 1e-9);
    }
    assert!(out.join("plot.svg").exists());
}

#[test]
fn full_pipeline_then_compare_refuses_other_encoders() {
    let (dir, cfg, out) = setup(SMALL);
    for s in ["gen-data", "train-ref", "prune", "reweight", "train", "sample", "eval"] {
        ok(&stage(s, &cfg, &out));
    }
    let report = out.join("report.csv");
    let o = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--compare",
        report.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&ok(&o).stdout).contains("delta"));

    let pca = dir.path().join("pca.toml");
    std::fs::write(
        &pca,
        SMALL.replace("kind = \"identity\"", "kind = \"pca\"\ncomponents = 1"),
    )
    .unwrap();
    let other = dir.path().join("other");
    for s in ["gen-data", "prune"] {
        ok(&stage(s, &pca, &other));
    }
    std::fs::copy(out.join("samples.lds"), other.join("samples.lds")).unwrap();
    let o = run(&[
        "eval",
        "--config",
        pca.to_str().unwrap(),
        "--out",
        other.to_str().unwrap(),
        "--compare",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("different encoders"), "{}", stderr(&o));
}

#[test]
fn speedup_rejects_mismatched_epochs() {
    let (dir, cfg, out) = setup(SMALL);
    let base = dir.path().join("base.toml");
    std::fs::write(&base, SMALL.replace("[train]\nepochs = 5", "[train]\nepochs = 6")).unwrap();
    let o = run(&[
        "speedup",
        "--config",
        cfg.to_str().unwrap(),
        "--baseline",
        base.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stage_rerun_reproduces_artifacts() {
    let (_d, cfg, out) = setup(SMALL);
    for s in ["gen-data", "train-ref", "prune", "reweight"] {
        ok(&stage(s, &cfg, &out));
    }
    let first = std::fs::read(out.join("weights.csv")).unwrap();
    ok(&stage("reweight", &cfg, &out));
    assert_eq!(first, std::fs::read(out.join("weights.csv")).unwrap());
}

#[test]
fn shipped_example_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    let cfg = pruneweight::config::PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg.prune.ratio, 0.1);
    assert!(cfg.out_dir.unwrap().ends_with("runs/toy"));
}
