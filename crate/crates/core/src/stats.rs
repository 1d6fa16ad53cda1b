//! Goodness-of-fit tests used by the validation suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Pools adjacent cells until each has expected count at least 5.
fn pooled(observed: &[f64], expected: &[f64]) -> Vec<(f64, f64)> {
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&oi, &ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    cells
}

fn chi_square_p(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    dist.sf(statistic)
}

/// Pearson test of observed counts against category probabilities.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> TestResult {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let obs: Vec<f64> = observed.iter().map(|&c| c as f64).collect();
    let exp: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let cells = pooled(&obs, &exp);
    let statistic: f64 = cells
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    TestResult {
        statistic,
        p_value: chi_square_p(statistic, cells.len().saturating_sub(1)),
    }
}

/// Homogeneity test of two categorical count vectors over the same
/// categories. Adjacent categories are pooled until each pooled cell holds
/// at least 10 observations.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> TestResult {
    assert_eq!(a.len(), b.len());
    let mut cells: Vec<(u64, u64)> = Vec::new();
    let (mut pa, mut pb) = (0, 0);
    for (&ca, &cb) in a.iter().zip(b) {
        pa += ca;
        pb += cb;
        if pa + pb >= 10 {
            cells.push((pa, pb));
            pa = 0;
            pb = 0;
        }
    }
    if pa + pb > 0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += pa;
                last.1 += pb;
            }
            None => cells.push((pa, pb)),
        }
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let n = (na + nb) as f64;
    let mut statistic = 0.0;
    for &(ca, cb) in &cells {
        let total = (ca + cb) as f64;
        for (c, ni) in [(ca, na), (cb, nb)] {
            let e = total * ni as f64 / n;
            if e > 0.0 {
                statistic += (c as f64 - e).powi(2) / e;
            }
        }
    }
    TestResult {
        statistic,
        p_value: chi_square_p(statistic, cells.len().saturating_sub(1)),
    }
}

/// Kolmogorov survival function `Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    TestResult {
        statistic: d,
        p_value: kolmogorov_q((ne + 0.12 + 0.11 / ne) * d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_has_p_one() {
        let r = chi_square_gof(&[25, 25, 50], &[0.25, 0.25, 0.5]);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_reference_value() {
        // (60-50)^2/50 + (40-50)^2/50 = 4 on one degree of freedom
        let r = chi_square_gof(&[60, 40], &[0.5, 0.5]);
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.0455003).abs() < 1e-6);
    }

    #[test]
    fn sparse_cells_are_pooled() {
        let r = chi_square_gof(&[1, 0, 99], &[0.01, 0.01, 0.98]);
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn two_sample_detects_difference() {
        assert!(chi_square_two_sample(&[500, 500], &[510, 490]).p_value > 0.5);
        assert!(chi_square_two_sample(&[500, 500], &[700, 300]).p_value < 1e-6);
    }

    #[test]
    fn ks_statistic_and_p_value() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let b: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_two_sample(&a, &b);
        assert!(r.statistic <= 0.002);
        assert!(r.p_value > 0.99);
        let c: Vec<f64> = a.iter().map(|v| v + 0.2).collect();
        let r = ks_two_sample(&a, &c);
        assert!((r.statistic - 0.2).abs() <= 0.0011);
        assert!(r.p_value < 1e-10);
        // Q(1) = 0.26999967...
        assert!((kolmogorov_q(1.0) - 0.2699996716).abs() < 1e-9);
    }
}
