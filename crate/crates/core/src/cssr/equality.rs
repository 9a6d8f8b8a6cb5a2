use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{CssrConfig, TestKind};

/// p-value of the two-sample chi-square test of homogeneity. Symbols unseen
/// in both samples do not count toward the degrees of freedom.
pub fn chi_square_p(a: &[u64], b: &[u64]) -> f64 {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let n = (na + nb) as f64;
    let mut stat = 0.0;
    let mut columns = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        columns += 1;
        let ea = na as f64 * col / n;
        let eb = nb as f64 * col / n;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    if columns < 2 {
        return 1.0;
    }
    ChiSquared::new((columns - 1) as f64)
        .expect("positive degrees of freedom")
        .sf(stat)
}

/// Asymptotic Kolmogorov distribution tail `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// p-value of the two-sample Kolmogorov-Smirnov test on the cumulative
/// distributions taken in alphabet order.
pub fn ks_p(a: &[u64], b: &[u64]) -> f64 {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let (mut ca, mut cb, mut d) = (0u64, 0u64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        ca += x;
        cb += y;
        d = d.max((ca as f64 / na as f64 - cb as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let sq = ne.sqrt();
    kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)
}

/// Whether two next-symbol count vectors are compatible with one
/// distribution at the configured level. Samples smaller than `min_count`
/// cannot reject.
pub fn test_equal(a: &[u64], b: &[u64], config: &CssrConfig) -> bool {
    assert_eq!(a.len(), b.len(), "count vectors over different alphabets");
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na < config.min_count || nb < config.min_count {
        return true;
    }
    let p = match config.test {
        TestKind::ChiSquare => chi_square_p(a, b),
        TestKind::Ks => ks_p(a, b),
    };
    p >= config.alpha
}
