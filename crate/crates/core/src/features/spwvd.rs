use num_complex::Complex64;
use rustfft::FftPlanner;

use super::FeatureError;

/// Normalized SPWVD magnitude on a `times × freq_bins` grid, row-major by
/// time.
///
/// The lag kernel advances by two samples per lag step, so column `f`
/// corresponds to `f / 2` cycles per `freq_bins` samples: a tone at DFT bin
/// `m` concentrates on column `2m mod freq_bins` (see [`TfMap::column_of_bin`]).
#[derive(Debug, Clone, PartialEq)]
pub struct TfMap {
    pub values: Vec<f64>,
    pub times: usize,
    pub freq_bins: usize,
    pub time_stride: usize,
}

impl TfMap {
    pub fn at(&self, t: usize, f: usize) -> f64 {
        self.values[t * self.freq_bins + f]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.freq_bins..(t + 1) * self.freq_bins]
    }

    /// Column on which a tone at DFT bin `bin` concentrates.
    pub fn column_of_bin(&self, bin: usize) -> usize {
        (2 * bin) % self.freq_bins
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Hamming window scaled to unit sum.
pub fn hamming_unit(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let w: Vec<f64> = (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Smoothed pseudo Wigner–Ville distribution
///
/// `W(t,f) = |Σ_τ h(τ) Σ_u g(u) x(t+u+τ) x*(t+u−τ) e^{−j2πf·2τ/(2N)}|`
///
/// evaluated at `t = 0, stride, 2·stride, …`, with samples outside the
/// segment taken as zero, then divided by its maximum (all-zero input stays
/// all-zero). `g` smooths over time, `h` over lag; both are unit-sum Hamming.
pub fn spwvd(x: &[Complex64], g_len: usize, h_len: usize, time_stride: usize) -> Result<TfMap, FeatureError> {
    let n = x.len();
    if g_len % 2 == 0 || h_len % 2 == 0 {
        return Err(FeatureError::InvalidConfig(format!(
            "window lengths must be odd (g {g_len}, h {h_len})"
        )));
    }
    if h_len > n || n == 0 {
        return Err(FeatureError::InvalidConfig(format!(
            "lag window {h_len} longer than segment {n}"
        )));
    }
    if time_stride == 0 {
        return Err(FeatureError::InvalidConfig("time_stride must be ≥ 1".into()));
    }
    let g = hamming_unit(g_len);
    let h = hamming_unit(h_len);
    let (lg, lh) = ((g_len - 1) / 2, (h_len - 1) / 2);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let sample = |i: isize| -> Complex64 {
        if i >= 0 && (i as usize) < n {
            x[i as usize]
        } else {
            Complex64::new(0.0, 0.0)
        }
    };

    let times: Vec<usize> = (0..n).step_by(time_stride).collect();
    let mut values = Vec::with_capacity(times.len() * n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for &t in &times {
        buf.fill(Complex64::new(0.0, 0.0));
        for tau in 0..=lh {
            let mut r = Complex64::new(0.0, 0.0);
            for (ui, gu) in g.iter().enumerate() {
                let a = t as isize + ui as isize - lg as isize;
                r += sample(a + tau as isize) * sample(a - tau as isize).conj() * gu;
            }
            // the −τ term is the conjugate of the +τ term (g and h are symmetric)
            buf[tau] = r * h[lh + tau];
            if tau > 0 {
                buf[n - tau] = r.conj() * h[lh - tau];
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        values.extend(buf.iter().map(|c| c.norm()));
    }
    let peak = values.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        for v in &mut values {
            *v /= peak;
        }
    }
    Ok(TfMap {
        values,
        times: times.len(),
        freq_bins: n,
        time_stride,
    })
}

/// Sum over time of the per-time maximum.
pub fn ridge_integral(map: &TfMap) -> f64 {
    (0..map.times)
        .map(|t| map.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .filter(|v| v.is_finite())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, bin: f64) -> Vec<Complex64> {
        (0..n)
            .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * bin * k as f64 / n as f64))
            .collect()
    }

    /// Direct evaluation of the double sum, no FFT.
    fn spwvd_direct(x: &[Complex64], g_len: usize, h_len: usize, stride: usize) -> Vec<f64> {
        let n = x.len();
        let (g, h) = (hamming_unit(g_len), hamming_unit(h_len));
        let (lg, lh) = ((g_len as isize - 1) / 2, (h_len as isize - 1) / 2);
        let at = |i: isize| if i >= 0 && (i as usize) < n { x[i as usize] } else { Complex64::new(0.0, 0.0) };
        let mut out = Vec::new();
        for t in (0..n).step_by(stride) {
            for f in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for tau in -lh..=lh {
                    let mut inner = Complex64::new(0.0, 0.0);
                    for u in -lg..=lg {
                        let a = t as isize + u;
                        inner += at(a + tau) * at(a - tau).conj() * g[(u + lg) as usize];
                    }
                    let phase = -2.0 * std::f64::consts::PI * f as f64 * (2 * tau) as f64 / (2 * n) as f64;
                    acc += inner * h[(tau + lh) as usize] * Complex64::from_polar(1.0, phase);
                }
                out.push(acc.norm());
            }
        }
        let m = out.iter().copied().fold(0.0, f64::max);
        if m > 0.0 {
            out.iter_mut().for_each(|v| *v /= m);
        }
        out
    }

    #[test]
    fn hamming_is_unit_sum_and_symmetric() {
        let w = hamming_unit(33);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..33 {
            assert!((w[i] - w[32 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn tone_concentrates_on_its_column() {
        let n = 128;
        for bin in [5usize, 17, 40, 90] {
            let m = spwvd(&tone(n, bin as f64), 15, 31, 4).unwrap();
            let want = m.column_of_bin(bin);
            for t in 2..m.times - 2 {
                let row = m.row(t);
                let arg = (0..n).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                assert_eq!(arg, want, "bin {bin} t {t}");
            }
        }
    }

    #[test]
    fn zero_segment_gives_zero_map() {
        let m = spwvd(&vec![Complex64::new(0.0, 0.0); 64], 9, 15, 2).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
        assert_eq!(ridge_integral(&m), 0.0);
    }

    #[test]
    fn nonnegative_with_unit_max() {
        let x: Vec<Complex64> = (0..64).map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 1.3).cos())).collect();
        let m = spwvd(&x, 9, 21, 3).unwrap();
        assert!(m.values.iter().all(|&v| v >= 0.0));
        assert_eq!(m.max(), 1.0);
    }

    #[test]
    fn fft_route_matches_direct_sum() {
        let x: Vec<Complex64> = (0..48)
            .map(|k| Complex64::new((k as f64 * 0.21).sin() + 0.3, (k as f64 * 0.9).cos()))
            .collect();
        let fast = spwvd(&x, 7, 15, 5).unwrap();
        let slow = spwvd_direct(&x, 7, 15, 5);
        for (a, b) in fast.values.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn two_tone_cross_term_suppressed() {
        let n = 128;
        let (f1, f2) = (10usize, 40usize);
        let x: Vec<Complex64> = tone(n, f1 as f64).iter().zip(tone(n, f2 as f64)).map(|(a, b)| a + b).collect();
        let direct = spwvd_direct(&x, 33, 127, 4);
        let times = direct.len() / n;
        let mid = f1 + f2; // column of the mean frequency
        let (c1, c2) = (2 * f1, 2 * f2);
        for t in 4..times - 4 {
            let row = &direct[t * n..(t + 1) * n];
            let ridge = row[c1].max(row[c2]);
            assert!(row[mid] < 0.5 * ridge, "t {t}: cross {} ridge {ridge}", row[mid]);
        }
        let fast = spwvd(&x, 33, 127, 4).unwrap();
        for (a, b) in fast.values.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn ridge_integral_examples() {
        let m = TfMap {
            values: vec![0.2, 0.8, 0.5, 0.1],
            times: 2,
            freq_bins: 2,
            time_stride: 1,
        };
        assert!((ridge_integral(&m) - 1.3).abs() < 1e-15);
        let ones = TfMap {
            values: vec![1.0; 12],
            times: 4,
            freq_bins: 3,
            time_stride: 1,
        };
        assert_eq!(ridge_integral(&ones), 4.0);
    }

    #[test]
    fn rejects_bad_windows() {
        let x = tone(32, 3.0);
        assert!(spwvd(&x, 8, 15, 1).is_err());
        assert!(spwvd(&x, 9, 33, 1).is_err());
        assert!(spwvd(&x, 9, 15, 0).is_err());
    }
}
