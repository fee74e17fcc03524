//! The six shallow features of clutter and target segments, raw and
//! normalized against a clutter reference pool.

use mdfg::features::{extract_raw, extract_shallow, fit_reference, spwvd, to_c64, FeatureConfig, FEATURE_NAMES};
use mdfg::synth::{gen_clutter, gen_target_in_clutter, ClutterConfig, TargetConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = FeatureConfig::default();
    let clutter_cfg = |seed| ClutterConfig {
        shape_nu: 0.5,
        mean_power: 1.0,
        speckle_corr_rho: 0.9,
        seed,
    };
    let pool: Vec<_> = (0..20)
        .map(|s| gen_clutter(512, 1000.0, &clutter_cfg(s)).map(|c| to_c64(&c.samples)))
        .collect::<Result<_, _>>()?;
    let reference = fit_reference(&pool, &cfg)?;
    println!("reference: {reference:?}");

    let clutter = gen_clutter(512, 1000.0, &clutter_cfg(100))?;
    let target = gen_target_in_clutter(
        &clutter,
        &TargetConfig {
            doppler_hz: 100.0,
            scr_db: 15.0,
            amp_jitter: 0.1,
            seed: 101,
        },
    )?;
    for (name, series) in [("clutter", &clutter), ("target", &target)] {
        let x = to_c64(&series.samples);
        let raw = extract_raw(&x, &reference, &cfg)?.to_array();
        let norm = extract_shallow(&x, &reference, &cfg)?.to_array();
        println!("{name}:");
        for i in 0..FEATURE_NAMES.len() {
            println!("  {:>4}  raw {:>10.4}  normalized {:.4}", FEATURE_NAMES[i], raw[i], norm[i]);
        }
    }

    let map = spwvd(&to_c64(&target.samples), cfg.g_len, cfg.h_len, cfg.time_stride)?;
    let peak = map.row(0).iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(c, _)| c).unwrap();
    let tone_bin = (100.0_f64 / 1000.0 * 512.0).round() as usize;
    println!(
        "time-frequency map {}x{}; first-row ridge at column {peak}, tone column {}",
        map.times,
        map.freq_bins,
        map.column_of_bin(tone_bin)
    );
    Ok(())
}
