//! View generation for contrastive pre-training: random crop and resample
//! (RCRS), additive disturbance (AD) and time flip.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seeding::rng_for;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("input has zero power; SNR undefined")]
    ZeroPowerInput,
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rcrs,
    Ad,
    Flip,
}

/// One entry of the per-sample draw pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewKind {
    Identity,
    Method(Method),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampler {
    #[default]
    Linear,
    /// Lanczos-windowed sinc with eight lobes per side.
    Sinc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub crop_frac_range: [f64; 2],
    pub disturbance_snr_db: f64,
    pub methods_enabled: Vec<Method>,
    pub views_per_sample: usize,
    pub resampler: Resampler,
    /// Filled from the run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_frac_range: [0.7, 0.95],
            disturbance_snr_db: 15.0,
            methods_enabled: vec![Method::Rcrs, Method::Ad, Method::Flip],
            views_per_sample: 2,
            resampler: Resampler::Linear,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let [lo, hi] = self.crop_frac_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(AugmentError::InvalidConfig(format!("crop_frac_range [{lo}, {hi}] not inside (0, 1]")));
        }
        if self.methods_enabled.is_empty() {
            return Err(AugmentError::InvalidConfig("methods_enabled is empty".into()));
        }
        if self.views_per_sample == 0 || self.views_per_sample > self.pool().len() {
            return Err(AugmentError::InvalidConfig(format!(
                "views_per_sample {} must lie in 1..={}",
                self.views_per_sample,
                self.pool().len()
            )));
        }
        if self.disturbance_snr_db.is_nan() {
            return Err(AugmentError::InvalidConfig("disturbance_snr_db is NaN".into()));
        }
        Ok(())
    }

    /// `{identity} ∪ methods_enabled` in a fixed canonical order.
    pub fn pool(&self) -> Vec<ViewKind> {
        let mut methods = self.methods_enabled.clone();
        methods.sort();
        methods.dedup();
        std::iter::once(ViewKind::Identity)
            .chain(methods.into_iter().map(ViewKind::Method))
            .collect()
    }
}

fn lanczos(x: f64, a: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x.abs() >= a {
        0.0
    } else {
        let px = std::f64::consts::PI * x;
        a * px.sin() * (px / a).sin() / (px * px)
    }
}

/// Resamples `x` onto `n` points spanning its first to last sample.
pub fn resample(x: &[Complex64], n: usize, method: Resampler) -> Vec<Complex64> {
    let c = x.len();
    if c == 1 || n == 1 {
        return vec![x[0]; n];
    }
    (0..n)
        .map(|k| {
            // integer numerator keeps the last point exactly on x[c-1]
            let p = (k * (c - 1)) as f64 / (n - 1) as f64;
            let i = p.floor() as usize;
            let frac = p - i as f64;
            if frac == 0.0 {
                return x[i];
            }
            match method {
                Resampler::Linear => x[i] * (1.0 - frac) + x[i + 1] * frac,
                Resampler::Sinc => {
                    const A: f64 = 8.0;
                    let lo = i.saturating_sub(A as usize - 1);
                    let hi = (i + A as usize).min(c - 1);
                    (lo..=hi).map(|j| x[j] * lanczos(p - j as f64, A)).sum()
                }
            }
        })
        .collect()
}

/// Crops `round(crop_frac·N)` contiguous samples at a seeded offset and
/// stretches them back to `N`.
pub fn rcrs(x: &[Complex64], crop_frac: f64, seed: u64, method: Resampler) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let c = ((crop_frac * n as f64).round() as usize).clamp(1, n);
    let offset = rng_for(seed, &[0]).gen_range(0..=n - c);
    resample(&x[offset..offset + c], n, method)
}

fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Adds circular complex Gaussian noise whose sample power is exactly the
/// input power divided by `10^(snr_db/10)`. `snr_db = +∞` is the identity.
pub fn ad(x: &[Complex64], snr_db: f64, seed: u64) -> Result<Vec<Complex64>, AugmentError> {
    if snr_db == f64::INFINITY {
        return Ok(x.to_vec());
    }
    let p = if x.is_empty() { 0.0 } else { mean_power(x) };
    if !(p > 0.0) {
        return Err(AugmentError::ZeroPowerInput);
    }
    let mut rng = rng_for(seed, &[1]);
    let noise: Vec<Complex64> = (0..x.len())
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let scale = (p / 10f64.powf(snr_db / 10.0) / mean_power(&noise)).sqrt();
    Ok(x.iter().zip(&noise).map(|(s, w)| s + w * scale).collect())
}

pub fn flip(x: &[Complex64]) -> Vec<Complex64> {
    x.iter().rev().copied().collect()
}

pub fn modulus(x: &[Complex64]) -> Vec<f64> {
    x.iter().map(|c| c.norm()).collect()
}

/// Draws `views_per_sample` distinct transforms from a seeded shuffle of the
/// pool and applies each.
pub fn make_views(x: &[Complex64], cfg: &AugmentConfig, seed: u64) -> Result<Vec<(ViewKind, Vec<Complex64>)>, AugmentError> {
    cfg.validate()?;
    let mut rng = rng_for(seed, &[2]);
    let mut pool = cfg.pool();
    pool.shuffle(&mut rng);
    pool.truncate(cfg.views_per_sample);
    pool.into_iter()
        .enumerate()
        .map(|(v, kind)| {
            let view_seed = crate::seeding::derive_seed(seed, &[3, v as u64]);
            let out = match kind {
                ViewKind::Identity => x.to_vec(),
                ViewKind::Method(Method::Flip) => flip(x),
                ViewKind::Method(Method::Ad) => ad(x, cfg.disturbance_snr_db, view_seed)?,
                ViewKind::Method(Method::Rcrs) => {
                    let [lo, hi] = cfg.crop_frac_range;
                    let frac = if lo == hi { lo } else { rng_for(view_seed, &[4]).gen_range(lo..=hi) };
                    rcrs(x, frac, view_seed, cfg.resampler)
                }
            };
            Ok((kind, out))
        })
        .collect()
}
