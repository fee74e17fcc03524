//! The `mdfg` binary: exit codes, artifacts and the α-sweep equivalence.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 11
[data]
seg_len = 64
stride_clutter = 64
stride_target = 16
[synth]
target_len = 1280
clutter_cells = 2
clutter_len = 2560
[features]
g_len = 9
h_len = 31
[model]
seg_len = 64
proj_dim = 8
embed_dim = 4
[model.encoder]
blocks = 1
channels = 4
kernel = 3
repr_dim = 8
stem_stride = 2
[train]
batch_size = 16
epochs = 2
finetune_epochs = 2
alpha = 0.0
[detect]
preset_pfa = 0.1
[ablate]
alphas = [0.0]
"#;

fn mdfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdfg"))
        .args(args)
        .env("MDFG_LOG", "error")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_exits_2_and_names_path() {
    let o = mdfg(&["--config", "/definitely/missing.toml", "pipeline"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/missing.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[train]\nlearning_rate = 0.1\n");
    let o = mdfg(&["--config", &cfg, "synth-gen"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn stage_without_inputs_exits_3_with_stage_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = mdfg(&["--out", out.to_str().unwrap(), "gini-weights"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("gini-weights"), "{}", stderr(&o));
}

#[test]
fn divergent_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("alpha = 0.0", "alpha = 0.0\nlr = 1e300"));
    let out = dir.path().join("out");
    let o = mdfg(&["--config", &cfg, "--out", out.to_str().unwrap(), "pipeline"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("pretrain"), "{}", stderr(&o));
}

#[test]
fn stages_run_individually_and_sweep_matches_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    for stage in ["synth-gen", "extract-features", "gini-weights", "pretrain", "finetune", "calibrate", "evaluate"] {
        let o = mdfg(&["--config", &cfg, "--out", out_s, "--threads", "1", stage]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let data = std::fs::read(out.join("data.rds")).unwrap();
    assert!(mdfg(&["--config", &cfg, "--out", out_s, "synth-gen"]).status.success());
    assert_eq!(std::fs::read(out.join("data.rds")).unwrap(), data);

    assert!(mdfg(&["--config", &cfg, "--out", out_s, "ablate-alpha"]).status.success());
    let alpha0 = out.join("ablate").join("alpha_0");
    for name in ["pretrained.ckpt", "pretrain_log.csv", "finetuned.ckpt", "threshold.toml", "report.toml", "scores.csv"] {
        assert_eq!(std::fs::read(out.join(name)).unwrap(), std::fs::read(alpha0.join(name)).unwrap(), "{name}");
    }
    let rows = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2);
    assert!(rows.lines().nth(1).unwrap().starts_with("0,"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = mdfg(&["--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap(), "synth-gen"]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("data.rds")).unwrap()
    };
    assert_eq!(run("11", "a"), run("11", "b"));
    assert_ne!(run("11", "c"), run("12", "d"));
}
