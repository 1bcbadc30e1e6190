//! Mann-Whitney U test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::MlError;

/// Largest combined sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first group: pairs where it is larger, ties counting half.
    pub u: f64,
    pub p: f64,
    pub method: PMethod,
}

/// Midranks (1-based) of `values` and the tie-correction term `sum(t^3 - t)`.
fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = rank;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

/// Number of arrangements giving each U value, `counts[u]` for `u` in `0..=na*nb`.
fn u_distribution(na: usize, nb: usize) -> Vec<f64> {
    // f[a][b][u]: arrangements of a and b items with statistic u, built
    // from whether the largest item belongs to the first group.
    let max_u = na * nb;
    let mut prev: Vec<Vec<f64>> = (0..=nb).map(|_| {
        let mut v = vec![0.0; max_u + 1];
        v[0] = 1.0;
        v
    }).collect();
    for a in 1..=na {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; nb + 1];
        cur[0][0] = 1.0;
        for b in 1..=nb {
            for u in 0..=a * b {
                let mut c = cur[b - 1][u];
                if u >= b {
                    c += prev[b][u - b];
                }
                cur[b][u] = c;
            }
        }
        prev = cur;
    }
    prev.swap_remove(nb)
}

fn exact_p(u: f64, na: usize, nb: usize) -> f64 {
    let counts = u_distribution(na, nb);
    let total: f64 = counts.iter().sum();
    let u = u.round() as usize;
    let lower: f64 = counts[..=u].iter().sum();
    let upper: f64 = counts[u..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}

fn normal_p(u: f64, na: usize, nb: usize, ties: f64) -> f64 {
    let n = (na + nb) as f64;
    let (na, nb) = (na as f64, nb as f64);
    let mu = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let dev = (u - mu).abs() - 0.5;
    if var <= 0.0 || dev <= 0.0 {
        return 1.0;
    }
    let z = dev / var.sqrt();
    let std = Normal::standard();
    (2.0 * std.sf(z)).min(1.0)
}

/// Two-sided test with the exact null distribution for small tie-free
/// samples and the tie-corrected normal approximation otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, MlError> {
    mann_whitney_u_with(a, b, None)
}

/// As [`mann_whitney_u`], optionally forcing the p-value method. Forcing
/// `Exact` with ties present falls back to the normal approximation.
pub fn mann_whitney_u_with(a: &[f64], b: &[f64], force: Option<PMethod>) -> Result<MannWhitney, MlError> {
    if a.is_empty() || b.is_empty() {
        return Err(MlError::EmptyInput("Mann-Whitney needs two non-empty groups"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MlError::DegenerateData("non-finite value in Mann-Whitney input".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum: f64 = ranks[..na].iter().sum();
    let u = rank_sum - (na * (na + 1)) as f64 / 2.0;

    let method = match force {
        Some(PMethod::Exact) if ties == 0.0 => PMethod::Exact,
        Some(_) => PMethod::Normal,
        None if ties == 0.0 && na + nb <= EXACT_MAX_N => PMethod::Exact,
        None => PMethod::Normal,
    };
    let p = match method {
        PMethod::Exact => exact_p(u, na, nb),
        PMethod::Normal => normal_p(u, na, nb, ties),
    };
    Ok(MannWhitney { u, p, method })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_exact_cases() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p - 1.0 / 3.0).abs() < 1e-15);
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((r.p - 0.1).abs() < 1e-15);
        assert_eq!(r.method, PMethod::Exact);
    }

    #[test]
    fn identical_groups() {
        let a = [1.0, 2.0, 2.0, 5.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.u, 8.0);
        assert_eq!(r.p, 1.0);
        let r = mann_whitney_u(&[3.0, 3.0], &[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn distribution_sums_to_binomial() {
        let d = u_distribution(5, 7);
        assert_eq!(d.iter().sum::<f64>(), 792.0);
        assert_eq!(d.len(), 36);
        // Symmetric about na*nb/2.
        for u in 0..d.len() {
            assert_eq!(d[u], d[d.len() - 1 - u]);
        }
    }

    #[test]
    fn empty_group_errors() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }
}
