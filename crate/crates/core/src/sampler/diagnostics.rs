//! Chain diagnostics: Geyer initial-positive-sequence ESS and split R̂.

/// Effective sample size of one scalar chain.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let rho = |k: usize| -> f64 {
        let s: f64 = centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum();
        s / n as f64 / c0
    };
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        // initial monotone sequence
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        m += 1;
    }
    let tau = tau.max(1.0 / (n as f64).log10().max(1.0));
    n as f64 / tau
}

/// Split-chain potential scale reduction over any number of chains.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::new();
    for c in chains {
        let h = c.len() / 2;
        if h < 2 {
            return f64::NAN;
        }
        halves.push(&c[..h]);
        halves.push(&c[c.len() - h..]);
    }
    let len = halves.iter().map(|h| h.len()).min().unwrap_or(0) as f64;
    let m = halves.len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / h.len() as f64).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = len / (m - 1.0) * means.iter().map(|v| (v - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (h.len() as f64 - 1.0))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return 1.0;
    }
    let var_plus = (len - 1.0) / len * w + b / len;
    (var_plus / w).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, standard_normal_vector};

    #[test]
    fn iid_chain_has_near_full_ess() {
        let x = standard_normal_vector(&mut rng_from_seed(1), 4000);
        let ess = effective_sample_size(x.as_slice());
        assert!(ess > 3000.0 && ess < 5500.0, "{ess}");
    }

    #[test]
    fn ar1_chain_matches_theory() {
        let phi: f64 = 0.9;
        let noise = standard_normal_vector(&mut rng_from_seed(2), 40000);
        let mut x = vec![0.0; 40000];
        for i in 1..x.len() {
            x[i] = phi * x[i - 1] + noise[i];
        }
        let expected = 40000.0 * (1.0 - phi) / (1.0 + phi);
        let ess = effective_sample_size(&x);
        assert!((ess / expected - 1.0).abs() < 0.25, "{ess} vs {expected}");
    }

    #[test]
    fn rhat_detects_shifted_chains() {
        let a = standard_normal_vector(&mut rng_from_seed(3), 1000);
        let b = standard_normal_vector(&mut rng_from_seed(4), 1000);
        let r = split_rhat(&[a.as_slice(), b.as_slice()]);
        assert!(r < 1.01, "{r}");
        let shifted: Vec<f64> = b.iter().map(|v| v + 3.0).collect();
        assert!(split_rhat(&[a.as_slice(), &shifted]) > 1.5);
    }
}
