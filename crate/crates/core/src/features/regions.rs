use super::spwvd::TfMap;

/// Linear-interpolation quantile of an ascending slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Binarizes `map` at the `q`-quantile of its positive entries (keeping
/// values ≥ the quantile) and labels 8-connected components.
///
/// Returns `(count, largest size)`; `(0, 0)` when nothing survives.
pub fn connected_regions(map: &TfMap, quantile_q: f64) -> (usize, usize) {
    let mut positive: Vec<f64> = map.values.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return (0, 0);
    }
    positive.sort_unstable_by(f64::total_cmp);
    let threshold = quantile_sorted(&positive, quantile_q);
    let mask: Vec<bool> = map.values.iter().map(|&v| v > 0.0 && v >= threshold).collect();
    label_components(&mask, map.times, map.freq_bins)
}

/// 8-connected flood fill over a `rows × cols` mask.
pub(crate) fn label_components(mask: &[bool], rows: usize, cols: usize) -> (usize, usize) {
    let mut seen = vec![false; mask.len()];
    let mut stack = Vec::new();
    let (mut count, mut largest) = (0, 0);
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        let mut size = 0;
        seen[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            size += 1;
            let (r, c) = ((p / cols) as isize, (p % cols) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                        continue;
                    }
                    let q = nr as usize * cols + nc as usize;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        largest = largest.max(size);
    }
    (count, largest)
}
