//! The six shallow features: relative average amplitude (RAA), relative
//! Doppler peak height (RDPH), relative vector entropy (RVE), ridge integral
//! (RI), number of connected regions (NR) and maximum region size (MS).
//!
//! The first three are measured against a [`ReferenceStats`] fitted on a
//! clutter pool; all six are then min–max normalized with bounds from the
//! same pool.

mod regions;
mod spwvd;

use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use regions::connected_regions;
pub use spwvd::{hamming_unit, ridge_integral, spwvd, TfMap};

pub const NUM_FEATURES: usize = 6;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["raa", "rdph", "rve", "ri", "nr", "ms"];
/// Floor for the spectral entropy in [`rve`].
pub const ENTROPY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("spectrum sums to zero; entropy undefined")]
    AllZeroSpectrum,
    #[error("reference pool is empty")]
    EmptyPool,
    #[error("reference statistic {name} is {value}; the pool carries no signal")]
    DegenerateReference { name: &'static str, value: f64 },
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub g_len: usize,
    pub h_len: usize,
    pub time_stride: usize,
    pub quantile_q: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            g_len: 33,
            h_len: 127,
            time_stride: 4,
            quantile_q: 0.8,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self, seg_len: usize) -> Result<(), FeatureError> {
        if self.g_len % 2 == 0 || self.h_len % 2 == 0 {
            return Err(FeatureError::InvalidConfig(format!(
                "g_len {} and h_len {} must be odd",
                self.g_len, self.h_len
            )));
        }
        if self.h_len > seg_len {
            return Err(FeatureError::InvalidConfig(format!(
                "h_len {} exceeds seg_len {seg_len}",
                self.h_len
            )));
        }
        if self.time_stride == 0 {
            return Err(FeatureError::InvalidConfig("time_stride must be ≥ 1".into()));
        }
        if !(self.quantile_q > 0.0 && self.quantile_q < 1.0) {
            return Err(FeatureError::InvalidConfig(format!("quantile_q {} outside (0, 1)", self.quantile_q)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceStats {
    pub mean_amp: f64,
    pub mean_peak: f64,
    pub mean_entropy: f64,
    pub feat_min: [f64; NUM_FEATURES],
    pub feat_max: [f64; NUM_FEATURES],
}

impl ReferenceStats {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("reference stats serialize")
    }

    pub fn from_toml(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    /// Min–max maps `raw` into [0,1], clamping. A constant feature
    /// (`max == min`) maps to 0 at or below the bound and 1 above it.
    pub fn normalize(&self, raw: &ShallowFeatureVector) -> ShallowFeatureVector {
        let r = raw.to_array();
        let mut out = [0.0; NUM_FEATURES];
        for i in 0..NUM_FEATURES {
            let (lo, hi) = (self.feat_min[i], self.feat_max[i]);
            out[i] = if hi > lo {
                ((r[i] - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else if r[i] <= lo {
                0.0
            } else {
                1.0
            };
        }
        ShallowFeatureVector::from_array(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShallowFeatureVector {
    pub f_raa: f64,
    pub f_rdph: f64,
    pub f_rve: f64,
    pub f_ri: f64,
    pub f_nr: f64,
    pub f_ms: f64,
}

impl ShallowFeatureVector {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [self.f_raa, self.f_rdph, self.f_rve, self.f_ri, self.f_nr, self.f_ms]
    }

    pub fn from_array(a: [f64; NUM_FEATURES]) -> Self {
        Self {
            f_raa: a[0],
            f_rdph: a[1],
            f_rve: a[2],
            f_ri: a[3],
            f_nr: a[4],
            f_ms: a[5],
        }
    }
}

pub fn to_c64(samples: &[Complex32]) -> Vec<Complex64> {
    samples.iter().map(|c| Complex64::new(c.re as f64, c.im as f64)).collect()
}

fn mean_modulus(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|c| c.norm()).sum::<f64>() / x.len() as f64
}

pub fn raa(x: &[Complex64], reference: &ReferenceStats) -> f64 {
    mean_modulus(x) / reference.mean_amp
}

/// `|DFT(x)|` rotated so zero Doppler sits at index `len/2`.
pub fn doppler_spectrum(x: &[Complex64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut a: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
    a.rotate_right(n / 2);
    a
}

fn spectrum_peak(a: &[f64]) -> f64 {
    a.iter().copied().fold(0.0, f64::max)
}

/// Shannon entropy (nats) of the spectrum viewed as a distribution.
pub fn spectral_entropy(a: &[f64]) -> Result<f64, FeatureError> {
    let total: f64 = a.iter().sum();
    if !(total > 0.0) {
        return Err(FeatureError::AllZeroSpectrum);
    }
    Ok(-a
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| {
            let p = v / total;
            p * p.ln()
        })
        .sum::<f64>())
}

pub fn rdph(spectrum: &[f64], reference: &ReferenceStats) -> f64 {
    spectrum_peak(spectrum) / reference.mean_peak
}

/// `mean_entropy / H`, so concentrated (target-like) spectra score high.
pub fn rve(spectrum: &[f64], reference: &ReferenceStats) -> Result<f64, FeatureError> {
    let h = spectral_entropy(spectrum)?;
    Ok(reference.mean_entropy / if h > 0.0 { h } else { ENTROPY_EPS })
}

/// Features before normalization.
pub fn extract_raw(x: &[Complex64], reference: &ReferenceStats, cfg: &FeatureConfig) -> Result<ShallowFeatureVector, FeatureError> {
    let spectrum = doppler_spectrum(x);
    let f_rve = rve(&spectrum, reference)?;
    let map = spwvd(x, cfg.g_len, cfg.h_len, cfg.time_stride)?;
    let (nr, ms) = connected_regions(&map, cfg.quantile_q);
    Ok(ShallowFeatureVector {
        f_raa: raa(x, reference),
        f_rdph: rdph(&spectrum, reference),
        f_rve,
        f_ri: ridge_integral(&map),
        f_nr: nr as f64,
        f_ms: ms as f64,
    })
}

pub fn extract_shallow(x: &[Complex64], reference: &ReferenceStats, cfg: &FeatureConfig) -> Result<ShallowFeatureVector, FeatureError> {
    Ok(reference.normalize(&extract_raw(x, reference, cfg)?))
}

/// Raw and normalized features for every segment, computed in parallel.
pub fn extract_batch(
    segments: &[Vec<Complex64>],
    reference: &ReferenceStats,
    cfg: &FeatureConfig,
) -> Result<Vec<(ShallowFeatureVector, ShallowFeatureVector)>, FeatureError> {
    segments
        .par_iter()
        .map(|x| {
            let raw = extract_raw(x, reference, cfg)?;
            Ok((raw, reference.normalize(&raw)))
        })
        .collect()
}

pub fn fit_reference(pool: &[Vec<Complex64>], cfg: &FeatureConfig) -> Result<ReferenceStats, FeatureError> {
    if pool.is_empty() {
        return Err(FeatureError::EmptyPool);
    }
    let per_segment: Vec<(f64, f64, f64)> = pool
        .par_iter()
        .map(|x| {
            let a = doppler_spectrum(x);
            Ok((mean_modulus(x), spectrum_peak(&a), spectral_entropy(&a)?))
        })
        .collect::<Result<_, FeatureError>>()?;
    let n = pool.len() as f64;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| per_segment.iter().map(f).sum::<f64>() / n;
    let mut reference = ReferenceStats {
        mean_amp: mean(|s| s.0),
        mean_peak: mean(|s| s.1),
        mean_entropy: mean(|s| s.2),
        feat_min: [f64::INFINITY; NUM_FEATURES],
        feat_max: [f64::NEG_INFINITY; NUM_FEATURES],
    };
    for (name, value) in [
        ("mean_amp", reference.mean_amp),
        ("mean_peak", reference.mean_peak),
        ("mean_entropy", reference.mean_entropy),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(FeatureError::DegenerateReference { name, value });
        }
    }
    let raws: Vec<ShallowFeatureVector> = pool
        .par_iter()
        .map(|x| extract_raw(x, &reference, cfg))
        .collect::<Result<_, _>>()?;
    for raw in &raws {
        for (i, v) in raw.to_array().into_iter().enumerate() {
            reference.feat_min[i] = reference.feat_min[i].min(v);
            reference.feat_max[i] = reference.feat_max[i].max(v);
        }
    }
    Ok(reference)
}

#[cfg(test)]
mod tests;
