//! Classical goodness-of-fit and contingency tests.

use rand::Rng;
use rand_distr::Exp1;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Upper tail `P(K > lambda)` of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Sup distance between the empirical CDF of `sorted` and `cdf`.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS statistic with Stephens' small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample KS test; returns `(D, p)`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let d = ks_statistic(&s, cdf);
    (d, ks_p_value(d, s.len()))
}

/// CDF of `Exp(rate)` truncated to `[0, horizon]` (`horizon = inf` for none).
pub fn truncated_exp_cdf(rate: f64, horizon: f64) -> impl Fn(f64) -> f64 {
    let mass = if horizon.is_finite() { -(-rate * horizon).exp_m1() } else { 1.0 };
    move |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            (-(-rate * t.min(horizon)).exp_m1() / mass).min(1.0)
        }
    }
}

/// Rate MLE for exponential times right-censored at `horizon`:
/// exits over total time at risk.
pub fn censored_exp_rate(exit_times: &[f64], censored: usize, horizon: f64) -> f64 {
    let mut exposure: f64 = exit_times.iter().sum();
    if censored > 0 {
        exposure += censored as f64 * horizon;
    }
    exit_times.len() as f64 / exposure
}

/// KS test of exit times against an exponential law whose rate is re-fitted on
/// the same sample. The p-value comes from a parametric bootstrap that repeats
/// the fit on `reps` synthetic samples (Lilliefors' construction), which keeps
/// the test exact in level despite the estimated parameter.
pub fn ks_exponential_refit<R: Rng>(
    exit_times: &[f64],
    censored: usize,
    horizon: f64,
    reps: usize,
    rng: &mut R,
) -> (f64, f64, f64) {
    let n = exit_times.len() + censored;
    let rate = censored_exp_rate(exit_times, censored, horizon);
    let (d, _) = ks_test(exit_times, truncated_exp_cdf(rate, horizon));
    let mut exceed = 0usize;
    let mut buf = Vec::with_capacity(n);
    for _ in 0..reps {
        buf.clear();
        let mut cens = 0usize;
        for _ in 0..n {
            let t: f64 = rng.sample::<f64, _>(Exp1) / rate;
            if t > horizon {
                cens += 1;
            } else {
                buf.push(t);
            }
        }
        if buf.is_empty() {
            continue;
        }
        let r = censored_exp_rate(&buf, cens, horizon);
        buf.sort_by(|a, b| a.total_cmp(b));
        if ks_statistic(&buf, truncated_exp_cdf(r, horizon)) >= d {
            exceed += 1;
        }
    }
    (rate, d, (exceed + 1) as f64 / (reps + 1) as f64)
}

/// Pearson chi-square test of independence. Empty rows and columns are
/// dropped; a table with fewer than two non-empty rows or columns gives
/// `p = 1` with zero degrees of freedom.
pub fn chi_square_independence(table: &[Vec<u64>]) -> (f64, usize, f64) {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let ncol = table.first().map_or(0, |r| r.len());
    let cols: Vec<usize> = (0..ncol).filter(|&j| rows.iter().map(|r| r[j]).sum::<u64>() > 0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return (0.0, 0, 1.0);
    }
    let total: f64 = rows.iter().flat_map(|r| r.iter()).sum::<u64>() as f64;
    let row_sums: Vec<f64> = rows.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = cols.iter().map(|&j| rows.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let mut stat = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (jj, &j) in cols.iter().enumerate() {
            let e = row_sums[i] * col_sums[jj] / total;
            stat += (r[j] as f64 - e).powi(2) / e;
        }
    }
    let dof = (rows.len() - 1) * (cols.len() - 1);
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    (stat, dof, p.clamp(0.0, 1.0))
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided(z: f64) -> f64 {
    if !z.is_finite() {
        return if z.is_nan() { 1.0 } else { 0.0 };
    }
    let n = Normal::new(0.0, 1.0).unwrap();
    (2.0 * (1.0 - n.cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn kolmogorov_tail_reference_values() {
        // Q(1.3581) = 0.05 and Q(1.6276) = 0.01 to four digits.
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn chi_square_reference_value() {
        // 2x2 table [[10, 20], [30, 40]]: X^2 = 0.7937, p = 0.373.
        let (x, dof, p) = chi_square_independence(&[vec![10, 20], vec![30, 40]]);
        assert_eq!(dof, 1);
        assert!((x - 0.793_650_793_650_793_7).abs() < 1e-12);
        assert!((p - 0.373_0).abs() < 1e-3);
    }

    #[test]
    fn degenerate_table_is_uninformative() {
        assert_eq!(chi_square_independence(&[vec![5, 6], vec![0, 0]]), (0.0, 0, 1.0));
    }

    #[test]
    fn point_mass_is_rejected() {
        let mut rng = stream(0, 0);
        let (_, d, p) = ks_exponential_refit(&vec![1.0; 1000], 0, f64::INFINITY, 200, &mut rng);
        assert!(d > 0.3 && p < 0.01);
    }

    #[test]
    fn censored_rate_mle() {
        assert!((censored_exp_rate(&[1.0, 2.0], 2, 3.5) - 2.0 / 10.0).abs() < 1e-15);
    }
}
