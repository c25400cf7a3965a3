//! Order statistics and the two-sample rank-sum test.

use libm::erfc;

/// Nearest-rank percentile: the smallest value with at least `p` percent of the sample
/// at or below it. `None` for an empty sample.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

/// Largest sample size (of the smaller group) for which the exact null distribution is used.
pub const EXACT_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSum {
    /// Mann–Whitney U of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Wilcoxon–Mann–Whitney rank-sum test on unpaired samples.
///
/// Ties receive midranks. When the smaller sample has at most [`EXACT_LIMIT`] values the
/// p-value is exact under the permutation distribution of the (midrank) sum; otherwise a
/// normal approximation with tie-corrected variance and continuity correction is used.
/// Both samples must be nonempty.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> RankSum {
    assert!(!a.is_empty() && !b.is_empty(), "rank-sum test needs two nonempty samples");
    if a.len().min(b.len()) <= EXACT_LIMIT {
        rank_sum_exact(a, b)
    } else {
        rank_sum_normal(a, b)
    }
}

/// Doubled midranks of the pooled sample (integers) and the tie-group sizes.
fn doubled_midranks(a: &[f64], b: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j+1, doubled mean = i + j + 2
        for &k in &idx[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

pub fn rank_sum_exact(a: &[f64], b: &[f64]) -> RankSum {
    let (ranks, _) = doubled_midranks(a, b);
    let n_total = ranks.len();
    let (n, m) = (a.len(), b.len());
    let observed: u64 = ranks[..n].iter().sum();
    // The distribution of the sum over a random subset of size k (the smaller group).
    let k = n.min(m);
    let max_sum: u64 = ranks.iter().sum();
    let width = max_sum as usize + 1;
    let mut dp = vec![vec![0u128; width]; k + 1];
    dp[0][0] = 1;
    for &r in &ranks {
        for size in (1..=k).rev() {
            let (lower, upper) = dp.split_at_mut(size);
            let (src, dst) = (&lower[size - 1], &mut upper[0]);
            for s in (r as usize..width).rev() {
                if src[s - r as usize] > 0 {
                    dst[s] += src[s - r as usize];
                }
            }
        }
    }
    // Doubled expected sum for a subset of size k is k(N+1).
    let centre = (k * (n_total + 1)) as i128;
    let obs_k = if n <= m { observed } else { max_sum - observed } as i128;
    let dev = (obs_k - centre).abs();
    let total: u128 = dp[k].iter().sum();
    let extreme: u128 = dp[k]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as i128 - centre).abs() >= dev)
        .map(|(_, c)| *c)
        .sum();
    RankSum {
        u: observed as f64 / 2.0 - (n * (n + 1)) as f64 / 2.0,
        p_value: (extreme as f64 / total as f64).min(1.0),
        exact: true,
    }
}

pub fn rank_sum_normal(a: &[f64], b: &[f64]) -> RankSum {
    let (ranks, ties) = doubled_midranks(a, b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let total = n + m;
    let r_a: f64 = ranks[..a.len()].iter().map(|r| *r as f64 / 2.0).sum();
    let u = r_a - n * (n + 1.0) / 2.0;
    let mean = n * m / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = n * m / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).clamp(f64::MIN_POSITIVE, 1.0)
    };
    RankSum {
        u,
        p_value,
        exact: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).rev().map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0), Some(19.0));
        assert_eq!(percentile(&v, 100.0), Some(20.0));
        assert_eq!(percentile(&v, 5.0), Some(1.0));
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn separated_samples() {
        let r = rank_sum_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        assert!(r.exact);
        assert!((r.p_value - 0.1).abs() < 1e-15);
        assert_eq!(r.u, 0.0);
        let s = rank_sum_test(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]);
        assert_eq!(s.p_value, r.p_value);
    }

    #[test]
    fn identical() {
        assert_eq!(rank_sum_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).p_value, 1.0);
        assert_eq!(rank_sum_test(&[2.0; 4], &[2.0; 12]).p_value, 1.0);
        assert_eq!(rank_sum_normal(&[2.0; 10], &[2.0; 12]).p_value, 1.0);
    }
}
