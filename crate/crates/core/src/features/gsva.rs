//! Gene-set variation scores from a genes × samples expression matrix.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    /// `p × n`, genes in rows.
    pub values: DMatrix<f64>,
    pub genes: Vec<String>,
    pub samples: Vec<String>,
}

impl ExpressionMatrix {
    pub fn new(values: DMatrix<f64>, genes: Vec<String>, samples: Vec<String>) -> Result<Self> {
        let m = ExpressionMatrix { values, genes, samples };
        m.validate()?;
        Ok(m)
    }

    pub fn n_genes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, n) = self.values.shape();
        if p < 2 || n < 2 {
            return Err(Error::invalid(format!("expression matrix must be at least 2 x 2, got {p} x {n}")));
        }
        if self.genes.len() != p {
            return Err(Error::dim("gene labels", p, self.genes.len()));
        }
        if self.samples.len() != n {
            return Err(Error::dim("sample labels", n, self.samples.len()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("expression matrix has non-finite entries"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneSetCollection {
    pub names: Vec<String>,
    /// Member gene rows, sorted and deduplicated.
    pub members: Vec<Vec<usize>>,
}

impl GeneSetCollection {
    pub fn new(sets: Vec<(String, Vec<usize>)>) -> Self {
        let mut names = Vec::with_capacity(sets.len());
        let mut members = Vec::with_capacity(sets.len());
        for (name, mut m) in sets {
            m.sort_unstable();
            m.dedup();
            names.push(name);
            members.push(m);
        }
        GeneSetCollection { names, members }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("gene set collection is empty"));
        }
        for (name, m) in self.names.iter().zip(&self.members) {
            if m.is_empty() || m.len() >= p {
                return Err(Error::invalid(format!(
                    "gene set {name:?} has {} of {p} genes; need 1 <= size < p",
                    m.len()
                )));
            }
            if let Some(&g) = m.iter().find(|&&g| g >= p) {
                return Err(Error::invalid(format!("gene set {name:?} refers to row {g} of {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GsvaParams {
    /// Tail weight exponent.
    pub tau: f64,
    /// Kernel bandwidth is the gene's sample standard deviation over this.
    pub bandwidth_divisor: f64,
}

impl Default for GsvaParams {
    fn default() -> Self {
        GsvaParams {
            tau: 1.0,
            bandwidth_divisor: 4.0,
        }
    }
}

/// Kernel CDF `F̂(z_ij) = (1/n) Σ_r Φ((z_ij − z_ir)/s_i)` for every entry.
/// A constant gene gets 1/2 everywhere.
pub fn kernel_cdf(z: &DMatrix<f64>, bandwidth_divisor: f64) -> DMatrix<f64> {
    let (p, n) = z.shape();
    let phi = Normal::standard();
    let mut out = DMatrix::from_element(p, n, 0.5);
    for i in 0..p {
        let row: Vec<f64> = z.row(i).iter().copied().collect();
        let mean = row.iter().sum::<f64>() / n as f64;
        let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        if sd == 0.0 {
            continue;
        }
        let s = sd / bandwidth_divisor;
        for j in 0..n {
            out[(i, j)] = row.iter().map(|&zr| phi.cdf((row[j] - zr) / s)).sum::<f64>() / n as f64;
        }
    }
    out
}

/// Ranks with 1 for the largest value; ties share their average rank.
pub fn descending_average_ranks(values: &[f64]) -> Vec<f64> {
    let order = descending_order(values);
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && values[order[end]] == values[order[k]] {
            end += 1;
        }
        let avg = (k + 1 + end) as f64 / 2.0;
        for &i in &order[k..end] {
            ranks[i] = avg;
        }
        k = end;
    }
    ranks
}

/// Indices by decreasing value; ties keep index order.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Enrichment of one set in one sample. `order` lists genes by rank,
/// `weights` are `|t_i|^τ` per gene and `in_set` flags membership.
/// The decrement runs over genes outside the set.
pub fn ks_enrichment(order: &[usize], weights: &[f64], in_set: &[bool]) -> f64 {
    let p = order.len();
    let size = in_set.iter().filter(|&&b| b).count();
    let mut total: f64 = order.iter().filter(|&&g| in_set[g]).map(|&g| weights[g]).sum();
    // all member weights vanish: fall back to unit weights
    let unweighted = total == 0.0;
    if unweighted {
        total = size as f64;
    }
    let out_total = (p - size) as f64;
    // every deviation shares the denominator total·out_total, so track the
    // numerators and divide once
    let (mut hit, mut miss) = (0.0, 0.0);
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for &g in order {
        if in_set[g] {
            hit += if unweighted { 1.0 } else { weights[g] };
        } else {
            miss += 1.0;
        }
        let num = hit * out_total - miss * total;
        hi = hi.max(num);
        lo = lo.min(num);
    }
    (hi - lo) / (total * out_total)
}

/// Scores `S` with one row per gene set and one column per sample.
pub fn gsva_scores(z: &ExpressionMatrix, sets: &GeneSetCollection, params: &GsvaParams) -> Result<DMatrix<f64>> {
    z.validate()?;
    let p = z.n_genes();
    sets.validate(p)?;
    if !(params.tau >= 0.0 && params.tau.is_finite()) {
        return Err(Error::invalid("tau must be finite and nonnegative"));
    }
    if !(params.bandwidth_divisor > 0.0 && params.bandwidth_divisor.is_finite()) {
        return Err(Error::invalid("bandwidth divisor must be positive"));
    }
    let cdf = kernel_cdf(&z.values, params.bandwidth_divisor);
    let flags: Vec<Vec<bool>> = sets
        .members
        .iter()
        .map(|m| {
            let mut f = vec![false; p];
            m.iter().for_each(|&g| f[g] = true);
            f
        })
        .collect();
    let half = p as f64 / 2.0;
    let columns: Vec<Vec<f64>> = (0..z.n_samples())
        .into_par_iter()
        .map(|j| {
            let stat: Vec<f64> = cdf.column(j).iter().copied().collect();
            let ranks = descending_average_ranks(&stat);
            let order = descending_order(&stat);
            let weights: Vec<f64> = ranks.iter().map(|r| (half - r).abs().powf(params.tau)).collect();
            flags.iter().map(|f| ks_enrichment(&order, &weights, f)).collect()
        })
        .collect();
    Ok(DMatrix::from_fn(sets.len(), z.n_samples(), |k, j| columns[j][k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, standard_normal_vector};
    use proptest::prelude::*;

    fn labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn matrix(values: DMatrix<f64>) -> ExpressionMatrix {
        let (p, n) = values.shape();
        ExpressionMatrix::new(values, labels("g", p), labels("s", n)).unwrap()
    }

    pub(crate) fn hand_fixture() -> (ExpressionMatrix, GeneSetCollection) {
        let z = DMatrix::from_row_slice(4, 2, &[2.0, 1.0, 6.0, 5.0, 4.0, 4.0, 1.0, 2.0]);
        (matrix(z), GeneSetCollection::new(vec![("set".into(), vec![0, 2])]))
    }

    #[test]
    fn hand_enumerated_fixture() {
        // With two samples every non-constant gene has F = (1/2)(1/2 + Φ(±4√2)),
        // so sample 0 reads (hi, hi, 1/2, lo) and sample 1 (lo, lo, 1/2, hi).
        // Sample 0: ranks 1.5, 1.5, 3, 4, weights 0.5, 0.5, 1, 2, walk order
        // g0 g1 g2 g3 -> η = 1/3, -1/6, 1/2, 0 -> S = 2/3.
        // Sample 1: order g3 g2 g0 g1, member weights g2 = 0 and g0 = 1.5
        // -> η = -1/2, -1/2, 1/2, 0 -> S = 1.
        let (z, sets) = hand_fixture();
        let s = gsva_scores(&z, &sets, &GsvaParams::default()).unwrap();
        assert_eq!(s[(0, 0)], 2.0 / 3.0);
        assert_eq!(s[(0, 1)], 1.0);
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(descending_average_ranks(&[0.3, 0.9, 0.3, 0.1]), vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn zero_tau_is_classic_ks() {
        // unit weights: walk is the difference of in-set and out-set empirical CDFs
        let order = [3, 0, 4, 1, 2, 5];
        let in_set = [true, false, false, true, false, true];
        let s = ks_enrichment(&order, &[1.0; 6], &in_set);
        // in, in, out, out, out, in -> η = 1/3, 2/3, 1/3, 0, -1/3, 0
        let mut eta = Vec::new();
        let (mut a, mut b) = (0.0, 0.0);
        for &g in &order {
            if in_set[g] {
                a += 1.0 / 3.0
            } else {
                b += 1.0 / 3.0
            }
            eta.push(a - b);
        }
        let hi = eta.iter().copied().fold(0.0, f64::max);
        let lo = eta.iter().copied().fold(0.0, f64::min);
        assert!((s - (hi - lo)).abs() < 1e-15);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_sets_rejected() {
        let (z, _) = hand_fixture();
        for bad in [vec![], vec![0, 1, 2, 3], vec![7]] {
            let sets = GeneSetCollection::new(vec![("x".into(), bad)]);
            assert!(gsva_scores(&z, &sets, &GsvaParams::default()).is_err());
        }
    }

    fn random_case(seed: u64, p: usize, n: usize) -> (ExpressionMatrix, GeneSetCollection) {
        let v = standard_normal_vector(&mut rng_from_seed(seed), p * n);
        let z = matrix(DMatrix::from_column_slice(p, n, v.as_slice()));
        let sets = GeneSetCollection::new(vec![
            ("a".into(), (0..p / 3).collect()),
            ("b".into(), (0..p).step_by(2).collect()),
            ("c".into(), vec![p - 1]),
        ]);
        (z, sets)
    }

    #[test]
    fn sample_permutation_permutes_columns() {
        let (z, sets) = random_case(4, 30, 7);
        let s = gsva_scores(&z, &sets, &GsvaParams::default()).unwrap();
        let perm = [6, 2, 0, 5, 1, 3, 4];
        let zp = matrix(DMatrix::from_fn(30, 7, |i, j| z.values[(i, perm[j])]));
        let sp = gsva_scores(&zp, &sets, &GsvaParams::default()).unwrap();
        for k in 0..3 {
            for j in 0..7 {
                assert!((sp[(k, j)] - s[(k, perm[j])]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn scores_lie_in_zero_two(seed in 0u64..1000, p in 4usize..25, n in 2usize..8, tau in 0.0f64..2.0) {
            let (z, sets) = random_case(seed, p, n);
            let params = GsvaParams { tau, ..GsvaParams::default() };
            let s = gsva_scores(&z, &sets, &params).unwrap();
            prop_assert!(s.iter().all(|&v| (0.0..=2.0).contains(&v)));
        }
    }
}
