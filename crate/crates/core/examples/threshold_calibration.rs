//! Calibrating a detection threshold on clutter-only scores at a preset
//! false-alarm rate, then checking it on fresh clutter.

use mdfg::dataio::Label;
use mdfg::detector::{calibrate_threshold, confusion, decide, metrics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let calib: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
    let th = calibrate_threshold(&calib, 0.01)?;
    println!("{}", th.to_toml());

    let fresh: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
    let alarms = fresh.iter().filter(|&&s| decide(s, &th) == Label::Target).count();
    println!("false-alarm rate on fresh clutter: {:.4}", alarms as f64 / fresh.len() as f64);

    // a mixed test set where targets score higher on average
    let mut truth = Vec::new();
    let mut decisions = Vec::new();
    for i in 0..2000 {
        let label = if i % 2 == 0 { Label::Target } else { Label::Clutter };
        let s: f64 = match label {
            Label::Target => 0.97 + 0.03 * rng.gen::<f64>(),
            Label::Clutter => rng.gen(),
        };
        truth.push(label);
        decisions.push(decide(s, &th));
    }
    let cm = confusion(&truth, &decisions)?;
    println!("{cm:?}");
    println!("{:?}", metrics(&cm)?);
    Ok(())
}
