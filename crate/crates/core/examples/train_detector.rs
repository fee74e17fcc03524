//! The whole detector on a reduced scenario: synthesize, extract features,
//! fit weights, pre-train, fine-tune, calibrate and evaluate.
//!
//! Pass an output directory as the first argument (default: a temp dir).

use mdfg::config::RunConfig;
use mdfg::model::EncoderConfig;
use mdfg::pipeline::{run_pipeline, Workspace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::default();
    cfg.data.seg_len = 128;
    cfg.data.stride_clutter = 128;
    cfg.data.stride_target = 32;
    cfg.synth.target_len = 128 * 60;
    cfg.synth.clutter_cells = 4;
    cfg.synth.clutter_len = 128 * 60;
    cfg.features.g_len = 17;
    cfg.features.h_len = 63;
    cfg.model.seg_len = 128;
    cfg.model.encoder = EncoderConfig {
        blocks: 2,
        channels: 8,
        kernel: 5,
        repr_dim: 32,
        stem_stride: 4,
    };
    cfg.model.proj_dim = 32;
    cfg.model.embed_dim = 16;
    cfg.train.epochs = 5;
    cfg.train.finetune_epochs = 10;
    cfg.detect.preset_pfa = 0.05;
    cfg.validate()?;

    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| tmp.path().to_path_buf());
    let run = run_pipeline(&cfg, &Workspace::new(&out))?;

    let first = &run.pretrain_log[0].report;
    let last = &run.pretrain_log.last().unwrap().report;
    println!("pretrain l_total {:.4} -> {:.4}", first.l_total, last.l_total);
    print!("{}", run.report.to_toml());
    println!("artifacts in {}", out.display());
    Ok(())
}
