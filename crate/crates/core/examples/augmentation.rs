//! The contrastive views: crop-and-resample, additive disturbance, flip.

use mdfg::augment::{ad, flip, make_views, rcrs, AugmentConfig, Resampler};
use num_complex::Complex64;

fn power(x: &[Complex64]) -> f64 {
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 512;
    let x: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 40.0 * k as f64 / n as f64))
        .collect();

    println!("flip twice is the identity: {}", flip(&flip(&x)) == x);
    println!("crop_frac 1 is the identity: {}", rcrs(&x, 1.0, 3, Resampler::Linear) == x);

    let noisy = ad(&x, 15.0, 4)?;
    let noise: Vec<Complex64> = noisy.iter().zip(&x).map(|(a, b)| a - b).collect();
    println!("disturbance SNR {:.3} dB", 10.0 * (power(&x) / power(&noise)).log10());

    let cfg = AugmentConfig::default();
    for seed in 0..3 {
        let views = make_views(&x, &cfg, seed)?;
        let kinds: Vec<_> = views.iter().map(|(k, v)| format!("{k:?}[{}]", v.len())).collect();
        println!("seed {seed}: {}", kinds.join(", "));
    }
    Ok(())
}
