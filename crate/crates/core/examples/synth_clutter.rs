//! K-distributed sea clutter and a Doppler target injected at a given SCR.

use mdfg::synth::{gen_clutter, gen_target_in_clutter, ClutterConfig, TargetConfig};

fn power(x: &[num_complex::Complex32]) -> f64 {
    x.iter().map(|s| s.norm_sqr() as f64).sum::<f64>() / x.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clutter_cfg = ClutterConfig {
        shape_nu: 0.5,
        mean_power: 1.0,
        speckle_corr_rho: 0.9,
        seed: 7,
    };
    let clutter = gen_clutter(1 << 16, 1000.0, &clutter_cfg)?;
    println!("clutter: {} samples, mean power {:.4}", clutter.samples.len(), power(&clutter.samples));

    // spikiness: ratio of the 4th moment to the squared 2nd moment (2 for Gaussian)
    let m2 = power(&clutter.samples);
    let m4 = clutter.samples.iter().map(|s| (s.norm_sqr() as f64).powi(2)).sum::<f64>() / clutter.samples.len() as f64;
    println!("normalized 4th moment {:.2} (Gaussian speckle gives 2)", m4 / (m2 * m2));

    for scr_db in [0.0, 10.0, 15.0] {
        let target = gen_target_in_clutter(
            &clutter,
            &TargetConfig {
                doppler_hz: 100.0,
                scr_db,
                amp_jitter: 0.1,
                seed: 8,
            },
        )?;
        let added: Vec<_> = target.samples.iter().zip(&clutter.samples).map(|(a, b)| a - b).collect();
        let measured = 10.0 * (power(&added) / m2).log10();
        println!("requested SCR {scr_db:5.1} dB, measured {measured:6.2} dB");
    }
    Ok(())
}
