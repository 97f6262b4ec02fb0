//! Small statistics helpers: weighted means, block jackknife, seed mixing.

use num_complex::Complex64 as C64;

/// Mix `base` with a sequence of tags into an independent-looking seed
/// (splitmix64 finalizer applied per tag).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut x = base;
    for &t in tags {
        x = splitmix(x ^ splitmix(t.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean of complex values with optional weights (weights need not be
/// normalized).
pub fn weighted_mean(values: &[C64], weights: Option<&[f64]>) -> C64 {
    match weights {
        None => values.iter().sum::<C64>() / values.len() as f64,
        Some(w) => {
            let total: f64 = w.iter().sum();
            values.iter().zip(w).map(|(v, &wi)| v * wi).sum::<C64>() / total
        }
    }
}

/// Contiguous block boundaries splitting `n` items into `blocks` nearly equal
/// parts.
pub fn block_ranges(n: usize, blocks: usize) -> Vec<std::ops::Range<usize>> {
    let blocks = blocks.clamp(1, n.max(1));
    (0..blocks)
        .map(|b| (b * n / blocks)..((b + 1) * n / blocks))
        .collect()
}

/// Block sums `(sum of values, count)` for each block.
pub fn block_sums(values: &[C64], blocks: &[std::ops::Range<usize>]) -> Vec<(C64, f64)> {
    blocks
        .iter()
        .map(|r| (values[r.clone()].iter().sum::<C64>(), r.len() as f64))
        .collect()
}

/// Jackknife variance of a scalar estimator from its full-sample value and
/// its leave-one-block-out values.
pub fn jackknife_variance(leave_one_out: &[f64]) -> f64 {
    let k = leave_one_out.len() as f64;
    if k < 2.0 {
        return 0.0;
    }
    let mean = leave_one_out.iter().sum::<f64>() / k;
    (k - 1.0) / k * leave_one_out.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
}

/// Standard error of the mean of complex samples, estimated by batch means
/// (`sqrt(var Re + var Im)` of the block averages over the block count).
pub fn batch_means_error(values: &[C64], n_blocks: usize) -> (f64, f64) {
    let blocks = block_ranges(values.len(), n_blocks);
    if blocks.len() < 2 {
        return (0.0, 0.0);
    }
    let means: Vec<C64> = block_sums(values, &blocks)
        .into_iter()
        .map(|(s, c)| s / c)
        .collect();
    let k = means.len() as f64;
    let mu = means.iter().sum::<C64>() / k;
    let var_re = means.iter().map(|m| (m.re - mu.re).powi(2)).sum::<f64>() / (k - 1.0);
    let var_im = means.iter().map(|m| (m.im - mu.im).powi(2)).sum::<f64>() / (k - 1.0);
    ((var_re / k).sqrt(), (var_im / k).sqrt())
}

/// Sample mean and standard error of the mean of real values.
pub fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0]);
        assert_ne!(a, derive_seed(1, &[1]));
        assert_ne!(a, derive_seed(2, &[0]));
        assert_eq!(a, derive_seed(1, &[0]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
    }

    #[test]
    fn block_ranges_cover_everything() {
        let r = block_ranges(10, 3);
        assert_eq!(r, vec![0..3, 3..6, 6..10]);
        assert_eq!(block_ranges(2, 5).len(), 2);
    }

    #[test]
    fn jackknife_of_mean_matches_sem() {
        let xs: Vec<f64> = (0..20).map(|i| ((i * 7919) % 13) as f64).collect();
        let n = xs.len() as f64;
        let total: f64 = xs.iter().sum();
        let loo: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1.0)).collect();
        let (_, sem) = mean_and_sem(&xs);
        assert!((jackknife_variance(&loo).sqrt() - sem).abs() < 1e-12);
    }
}
