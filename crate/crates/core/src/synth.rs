//! Compound-Gaussian (K-distributed) sea clutter and Doppler-shifted target
//! echoes, for exercising the pipeline without recorded data.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{CellKind, ComplexSeries};

/// Samples per piecewise-constant texture block.
pub const TEXTURE_BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("|doppler| {doppler_hz} Hz must be below prf/2 = {half_prf} Hz")]
    DopplerAliased { doppler_hz: f64, half_prf: f64 },
    #[error("invalid synthesis parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterConfig {
    /// K-distribution shape ν; small values give spikier clutter.
    pub shape_nu: f64,
    pub mean_power: f64,
    /// One-lag correlation of the speckle.
    pub speckle_corr_rho: f64,
    pub seed: u64,
}

impl ClutterConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.shape_nu > 0.0 && self.shape_nu.is_finite()) {
            return Err(SynthError::InvalidParameter(format!("shape_nu {}", self.shape_nu)));
        }
        if !(self.mean_power > 0.0 && self.mean_power.is_finite()) {
            return Err(SynthError::InvalidParameter(format!("mean_power {}", self.mean_power)));
        }
        if !(0.0..1.0).contains(&self.speckle_corr_rho) {
            return Err(SynthError::InvalidParameter(format!(
                "speckle_corr_rho {} outside [0, 1)",
                self.speckle_corr_rho
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub doppler_hz: f64,
    /// Signal-to-clutter ratio in dB; `-inf` adds nothing.
    pub scr_db: f64,
    pub amp_jitter: f64,
    pub seed: u64,
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// `x[k] = √τ_k · g[k]`: Gamma texture held over [`TEXTURE_BLOCK`]-sample
/// blocks, unit-power AR(1) complex Gaussian speckle.
pub fn gen_clutter(n: usize, prf_hz: f64, cfg: &ClutterConfig) -> Result<ComplexSeries, SynthError> {
    cfg.validate()?;
    if n == 0 {
        return Err(SynthError::InvalidParameter("n must be ≥ 1".into()));
    }
    if !(prf_hz > 0.0) {
        return Err(SynthError::InvalidParameter(format!("prf_hz {prf_hz}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let texture = Gamma::new(cfg.shape_nu, cfg.mean_power / cfg.shape_nu)
        .map_err(|e| SynthError::InvalidParameter(e.to_string()))?;
    let rho = cfg.speckle_corr_rho;
    let innov = (1.0 - rho * rho).sqrt();

    let mut g = complex_normal(&mut rng);
    let mut tau = 0.0;
    let samples = (0..n)
        .map(|k| {
            if k % TEXTURE_BLOCK == 0 {
                tau = texture.sample(&mut rng);
            }
            if k > 0 {
                g = g * rho + complex_normal(&mut rng) * innov;
            }
            let x = g * tau.sqrt();
            Complex32::new(x.re as f32, x.im as f32)
        })
        .collect();
    Ok(ComplexSeries {
        samples,
        prf_hz,
        cell_id: 0,
        cell_kind: CellKind::PureClutter,
    })
}

/// Adds `A·(1 + jitter_k)·exp(j2π·f_d·k/prf)` with `A` set so the target to
/// clutter power ratio equals `scr_db`.
pub fn gen_target_in_clutter(clutter: &ComplexSeries, cfg: &TargetConfig) -> Result<ComplexSeries, SynthError> {
    if clutter.samples.is_empty() {
        return Err(SynthError::InvalidParameter("empty clutter".into()));
    }
    let half_prf = clutter.prf_hz / 2.0;
    if cfg.doppler_hz.abs() >= half_prf {
        return Err(SynthError::DopplerAliased {
            doppler_hz: cfg.doppler_hz,
            half_prf,
        });
    }
    if cfg.amp_jitter < 0.0 {
        return Err(SynthError::InvalidParameter(format!("amp_jitter {}", cfg.amp_jitter)));
    }
    let mut out = clutter.clone();
    out.cell_kind = CellKind::PrimaryTarget;
    if cfg.scr_db == f64::NEG_INFINITY {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = 2.0 * PI * cfg.doppler_hz / clutter.prf_hz;
    let unit: Vec<Complex64> = (0..clutter.samples.len())
        .map(|k| {
            let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.amp_jitter;
            Complex64::from_polar(1.0 + jitter, step * k as f64)
        })
        .collect();
    let n = unit.len() as f64;
    let unit_power = unit.iter().map(|s| s.norm_sqr()).sum::<f64>() / n;
    let clutter_power = clutter
        .samples
        .iter()
        .map(|s| (s.re as f64).powi(2) + (s.im as f64).powi(2))
        .sum::<f64>()
        / n;
    let amp = (clutter_power * 10f64.powf(cfg.scr_db / 10.0) / unit_power).sqrt();
    for (o, s) in out.samples.iter_mut().zip(&unit) {
        let v = Complex64::new(o.re as f64, o.im as f64) + s * amp;
        *o = Complex32::new(v.re as f32, v.im as f32);
    }
    Ok(out)
}
