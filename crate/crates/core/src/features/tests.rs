use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn reference(amp: f64, peak: f64, entropy: f64) -> ReferenceStats {
    ReferenceStats {
        mean_amp: amp,
        mean_peak: peak,
        mean_entropy: entropy,
        feat_min: [0.0; 6],
        feat_max: [1.0; 6],
    }
}

fn tone(n: usize, m: f64, amp: f64) -> Vec<Complex64> {
    (0..n).map(|k| Complex64::from_polar(amp, 2.0 * PI * m * k as f64 / n as f64)).collect()
}

fn noisy_tone(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let m = rng.gen_range(-20.0..20.0);
    let a = rng.gen_range(0.0..3.0);
    tone(n, m, a)
        .into_iter()
        .map(|c| c + Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

// ---- independent oracle: naive DFT, lag sums without FFT, union-find ----

fn oracle_spectrum(x: &[Complex64]) -> Vec<f64> {
    let n = x.len() as isize;
    (-(n / 2)..n - n / 2)
        .map(|k| {
            let s: Complex64 = x
                .iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * j as isize) as f64 / n as f64))
                .sum();
            s.norm()
        })
        .collect()
}

fn oracle_tf(x: &[Complex64], cfg: &FeatureConfig) -> (usize, usize, Vec<f64>) {
    let n = x.len() as isize;
    let (g, h) = (hamming_unit(cfg.g_len), hamming_unit(cfg.h_len));
    let (lg, lh) = ((cfg.g_len as isize - 1) / 2, (cfg.h_len as isize - 1) / 2);
    let at = |i: isize| if (0..n).contains(&i) { x[i as usize] } else { Complex64::new(0.0, 0.0) };
    let mut vals = Vec::new();
    let mut t = 0;
    let mut rows = 0;
    while t < n {
        let lag: Vec<Complex64> = (-lh..=lh)
            .map(|tau| {
                let inner: Complex64 = (-lg..=lg).map(|u| at(t + u + tau) * at(t + u - tau).conj() * g[(u + lg) as usize]).sum();
                inner * h[(tau + lh) as usize]
            })
            .collect();
        for f in 0..n {
            let s: Complex64 = (-lh..=lh)
                .map(|tau| lag[(tau + lh) as usize] * Complex64::from_polar(1.0, -2.0 * PI * (f * 2 * tau) as f64 / (2 * n) as f64))
                .sum();
            vals.push(s.norm());
        }
        rows += 1;
        t += cfg.time_stride as isize;
    }
    let m = vals.iter().cloned().fold(0.0, f64::max);
    if m > 0.0 {
        vals.iter_mut().for_each(|v| *v /= m);
    }
    (rows, n as usize, vals)
}

fn find(p: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while p[r] != r {
        r = p[r];
    }
    p[i] = r;
    r
}

fn oracle_regions(rows: usize, cols: usize, vals: &[f64], q: f64) -> (usize, usize) {
    let mut pos: Vec<f64> = vals.iter().cloned().filter(|v| *v > 0.0).collect();
    if pos.is_empty() {
        return (0, 0);
    }
    pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (pos.len() - 1) as f64 * q;
    let (i, frac) = (h as usize, h - h.floor());
    let thr = if i + 1 < pos.len() { pos[i] * (1.0 - frac) + pos[i + 1] * frac } else { pos[i] };
    let on: Vec<bool> = vals.iter().map(|v| *v > 0.0 && *v >= thr).collect();
    let mut parent: Vec<usize> = (0..on.len()).collect();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if !on[i] {
                continue;
            }
            // right, down-left, down, down-right cover all 8 neighbours once
            let nb = [(r, c + 1), (r + 1, c.wrapping_sub(1)), (r + 1, c), (r + 1, c + 1)];
            for (rr, cc) in nb {
                if rr < rows && cc < cols && on[rr * cols + cc] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, rr * cols + cc));
                    parent[a] = b;
                }
            }
        }
    }
    let mut sizes = std::collections::HashMap::new();
    for i in 0..on.len() {
        if on[i] {
            *sizes.entry(find(&mut parent, i)).or_insert(0usize) += 1;
        }
    }
    (sizes.len(), sizes.values().copied().max().unwrap_or(0))
}

fn oracle_raw(x: &[Complex64], r: &ReferenceStats, cfg: &FeatureConfig) -> [f64; 6] {
    let a = oracle_spectrum(x);
    let total: f64 = a.iter().sum();
    let mut h = 0.0;
    for v in &a {
        if *v > 0.0 {
            h -= v / total * (v / total).ln();
        }
    }
    let (rows, cols, tf) = oracle_tf(x, cfg);
    let ri: f64 = (0..rows).map(|t| tf[t * cols..(t + 1) * cols].iter().cloned().fold(0.0, f64::max)).sum();
    let (nr, ms) = oracle_regions(rows, cols, &tf, cfg.quantile_q);
    [
        x.iter().map(|c| c.norm()).sum::<f64>() / x.len() as f64 / r.mean_amp,
        a.iter().cloned().fold(0.0, f64::max) / r.mean_peak,
        r.mean_entropy / if h == 0.0 { 1e-6 } else { h },
        ri,
        nr as f64,
        ms as f64,
    ]
}

// ---- single-feature examples ----

#[test]
fn raa_examples() {
    let r = reference(2.0, 1.0, 1.0);
    let x = [3.0, 4.0, 5.0].map(|v| Complex64::new(0.0, v));
    assert_eq!(raa(&x, &r), 2.0);
    assert_eq!(raa(&tone(16, 3.0, 2.0), &r), 1.0);
    assert_eq!(raa(&[Complex64::new(0.0, 0.0); 8], &r), 0.0);
}

#[test]
fn spectrum_of_tone_has_single_centered_bin() {
    let n = 64;
    for m in [-5i32, 0, 7] {
        let a = doppler_spectrum(&tone(n, m as f64, 1.0));
        let idx = (n as i32 / 2 + m) as usize;
        for (k, v) in a.iter().enumerate() {
            if k == idx {
                assert!((v - n as f64).abs() < 1e-9);
            } else {
                assert!(v.abs() < 1e-9, "bin {k}: {v}");
            }
        }
    }
    assert!(doppler_spectrum(&[Complex64::new(0.0, 0.0); 16]).iter().all(|&v| v == 0.0));
}

#[test]
fn parseval() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x = noisy_tone(512, &mut rng);
        let lhs: f64 = doppler_spectrum(&x).iter().map(|a| a * a).sum();
        let rhs = 512.0 * x.iter().map(|c| c.norm_sqr()).sum::<f64>();
        assert!((lhs / rhs - 1.0).abs() < 1e-9);
    }
}

#[test]
fn rdph_examples() {
    let r = reference(1.0, 2.0, 1.0);
    assert_eq!(rdph(&[1.0, 5.0, 2.0], &r), 2.5);
    assert_eq!(rdph(&[0.0; 4], &r), 0.0);
    let a = doppler_spectrum(&tone(32, 4.0, 1.0));
    assert!((rdph(&a, &reference(1.0, 32.0, 1.0)) - 1.0).abs() < 1e-12);
}

#[test]
fn rve_examples() {
    let h = -(0.25f64 * 0.25f64.ln() * 2.0 + 0.5 * 0.5f64.ln());
    assert!((h - 1.0397).abs() < 1e-4);
    assert!((rve(&[1.0, 1.0, 2.0], &reference(1.0, 1.0, h)).unwrap() - 1.0).abs() < 1e-12);
    let m = 10;
    let flat = vec![0.3; m];
    assert!((rve(&flat, &reference(1.0, 1.0, (m as f64).ln())).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(rve(&[0.0, 4.0, 0.0], &reference(1.0, 1.0, 2.0)).unwrap(), 2.0 / ENTROPY_EPS);
    assert_eq!(rve(&[0.0; 3], &reference(1.0, 1.0, 2.0)), Err(FeatureError::AllZeroSpectrum));
}

#[test]
fn scaling_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = reference(1.3, 40.0, 4.0);
    for _ in 0..10 {
        let x = noisy_tone(128, &mut rng);
        let c = rng.gen_range(0.1..10.0);
        let y: Vec<Complex64> = x.iter().map(|v| v * c).collect();
        let (ax, ay) = (doppler_spectrum(&x), doppler_spectrum(&y));
        assert!((raa(&y, &r) / (c * raa(&x, &r)) - 1.0).abs() < 1e-12);
        assert!((rdph(&ay, &r) / (c * rdph(&ax, &r)) - 1.0).abs() < 1e-12);
        assert!((rve(&ay, &r).unwrap() / rve(&ax, &r).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn time_reversal_preserves_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = reference(1.0, 30.0, 4.0);
    for n in [64usize, 65] {
        let x = noisy_tone(n, &mut rng);
        let y: Vec<Complex64> = x.iter().rev().map(|c| c.conj()).collect();
        let (ax, ay) = (doppler_spectrum(&x), doppler_spectrum(&y));
        // conj-reverse maps DFT bin k to conj(X[k])·e^{−j2πk/n}: same magnitudes, same bins
        for (a, b) in ax.iter().zip(&ay) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((rdph(&ax, &r) - rdph(&ay, &r)).abs() < 1e-12);
        assert!((rve(&ax, &r).unwrap() - rve(&ay, &r).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn single_tone_ridge_is_one_region() {
    // The Hamming lag window leaves sidelobes near −46 dB. Every pixel is
    // positive, so at q = 0.8 a fifth of each row survives and the sidelobe
    // stripes form their own regions; a quantile that keeps only the main
    // lobe yields a single region spanning every time row.
    let cfg = FeatureConfig::default();
    let m = spwvd(&tone(512, 37.0, 1.0), cfg.g_len, cfg.h_len, cfg.time_stride).unwrap();
    assert!(m.values.iter().all(|&v| v > 0.0));
    let (nr_default, _) = connected_regions(&m, cfg.quantile_q);
    assert!(nr_default > 1);
    let (nr, ms) = connected_regions(&m, 0.98);
    assert_eq!(nr, 1);
    assert!(ms >= m.times);
}

#[test]
fn region_invariants_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let (t, f) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let values: Vec<f64> = (0..t * f).map(|_| if rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(0.0..1.0) }).collect();
        let m = TfMap { values: values.clone(), times: t, freq_bins: f, time_stride: 1 };
        let q = rng.gen_range(0.05..0.95);
        let (nr, ms) = connected_regions(&m, q);
        assert_eq!((nr, ms), oracle_regions(t, f, &values, q));
        assert!(ms <= t * f);
        if nr > 0 {
            let mut pos: Vec<f64> = values.iter().cloned().filter(|v| *v > 0.0).collect();
            pos.sort_by(f64::total_cmp);
            let thr = regions::quantile_sorted(&pos, q);
            let survivors = values.iter().filter(|v| **v > 0.0 && **v >= thr).count();
            assert!(ms >= survivors.div_ceil(nr));
        }
    }
}

// ---- composition and reference fitting ----

fn small_cfg() -> FeatureConfig {
    FeatureConfig { g_len: 9, h_len: 31, time_stride: 4, quantile_q: 0.8 }
}

#[test]
fn extract_matches_oracle_on_random_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = small_cfg();
    let pool: Vec<Vec<Complex64>> = (0..20).map(|_| noisy_tone(64, &mut rng)).collect();
    let r = fit_reference(&pool, &cfg).unwrap();
    for _ in 0..100 {
        let x = noisy_tone(64, &mut rng);
        let raw = extract_raw(&x, &r, &cfg).unwrap().to_array();
        let want = oracle_raw(&x, &r, &cfg);
        for i in 0..6 {
            assert!((raw[i] - want[i]).abs() <= 1e-9 * want[i].abs().max(1.0), "{}: {} vs {}", FEATURE_NAMES[i], raw[i], want[i]);
        }
    }
}

#[test]
fn extract_matches_oracle_at_default_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = FeatureConfig::default();
    let x = noisy_tone(512, &mut rng);
    let r = reference(1.0, 100.0, 5.0);
    let got = extract_raw(&x, &r, &cfg).unwrap().to_array();
    let want = oracle_raw(&x, &r, &cfg);
    for i in 0..6 {
        assert!((got[i] - want[i]).abs() <= 1e-9 * want[i].abs().max(1.0), "{}", FEATURE_NAMES[i]);
    }
}

#[test]
fn pool_of_one_and_duplicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = small_cfg();
    let x = noisy_tone(64, &mut rng);
    let one = fit_reference(&[x.clone()], &cfg).unwrap();
    let raw = extract_raw(&x, &one, &cfg).unwrap().to_array();
    assert_eq!(one.feat_min, raw);
    assert_eq!(one.feat_max, raw);
    let two = fit_reference(&[x.clone(), x.clone()], &cfg).unwrap();
    assert_eq!(one, two);
}

#[test]
fn pool_members_normalize_into_unit_box() {
    let cfg = small_cfg();
    let clutter = crate::synth::ClutterConfig { shape_nu: 0.5, mean_power: 1.0, speckle_corr_rho: 0.9, seed: 4 };
    let series = crate::synth::gen_clutter(6400, 1000.0, &clutter).unwrap();
    let pool: Vec<Vec<Complex64>> = series.samples.chunks(64).map(to_c64).collect();
    assert_eq!(pool.len(), 100);
    let r = fit_reference(&pool, &cfg).unwrap();
    for (raw, norm) in extract_batch(&pool, &r, &cfg).unwrap() {
        assert!(raw.to_array().iter().all(|v| v.is_finite()));
        assert!(norm.to_array().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn out_of_range_values_clamp() {
    let mut r = reference(1.0, 1.0, 1.0);
    r.feat_min = [0.0, 0.0, 0.0, 0.0, 2.0, 0.0];
    r.feat_max = [2.0, 1.0, 1.0, 1.0, 2.0, 1.0];
    let n = r.normalize(&ShallowFeatureVector::from_array([5.0, -1.0, 0.5, 1.0, 3.0, 0.25]));
    assert_eq!(n.to_array(), [1.0, 0.0, 0.5, 1.0, 1.0, 0.25]);
    let n = r.normalize(&ShallowFeatureVector::from_array([0.0, 0.0, 0.0, 0.0, 2.0, 0.0]));
    assert_eq!(n.f_nr, 0.0);
}

#[test]
fn empty_and_silent_pools_rejected() {
    assert_eq!(fit_reference(&[], &small_cfg()), Err(FeatureError::EmptyPool));
    let silent = vec![vec![Complex64::new(0.0, 0.0); 64]];
    assert!(fit_reference(&silent, &small_cfg()).is_err());
}

#[test]
fn reference_toml_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pool: Vec<Vec<Complex64>> = (0..5).map(|_| noisy_tone(64, &mut rng)).collect();
    let r = fit_reference(&pool, &small_cfg()).unwrap();
    assert_eq!(ReferenceStats::from_toml(&r.to_toml()).unwrap(), r);
}

