//! Input similarity distribution `P`.
//!
//! Each point gets its own inverse temperature κ_i, found by bisection so the
//! entropy of its neighbour distribution matches a target perplexity. The
//! row-conditional softmaxes are then symmetrized into a joint distribution
//! over ordered pairs that sums to one.

use alloc::vec::Vec;
use core::ops::Deref;

use crate::geometry::GramMatrix;
use crate::math::{exp, log2};
use crate::{Error, Matrix, Result};

/// Lower end of the κ search bracket.
pub const KAPPA_MIN: f64 = 1e-6;
/// Upper end of the κ search bracket.
pub const KAPPA_MAX: f64 = 1e6;
/// Default bisection budget per row.
pub const DEFAULT_MAX_ITER: usize = 100;
/// Accepted relative deviation between achieved and target entropy.
pub const ENTROPY_TOLERANCE: f64 = 0.1;

/// Calibrated inverse temperatures, one per point.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaVector {
    pub values: Vec<f64>,
    /// Entropy (bits) of each row's neighbour distribution at `values[i]`.
    pub achieved_entropy: Vec<f64>,
    pub converged: Vec<bool>,
}

impl KappaVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// Constant κ for every row; entropies are left at NaN.
    pub fn uniform(n: usize, kappa: f64) -> Self {
        Self {
            values: alloc::vec![kappa; n],
            achieved_entropy: alloc::vec![f64::NAN; n],
            converged: alloc::vec![true; n],
        }
    }
}

/// Row-stochastic matrix whose row `i` holds the neighbour distribution of
/// point `i`; the diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalAffinity(Matrix);

impl Deref for ConditionalAffinity {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl ConditionalAffinity {
    /// Checks zero diagonal, non-negativity and unit row sums (1e-9).
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Shape("conditional affinity must be square"));
        }
        for i in 0..m.rows() {
            let row = m.row(i);
            if row[i] != 0.0 || row.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidParameter {
                    name: "conditional",
                    reason: "entries must be non-negative with a zero diagonal",
                });
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::NotNormalized(s));
            }
        }
        Ok(Self(m))
    }
}

/// Symmetric joint distribution over ordered pairs `(i, j)`, `i != j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix(Matrix);

impl Deref for AffinityMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl AffinityMatrix {
    /// Checks symmetry (1e-12), zero diagonal, non-negativity and a total
    /// mass of one (1e-9).
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Shape("affinity matrix must be square"));
        }
        let n = m.rows();
        let mut total = 0.0;
        for i in 0..n {
            if m[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter {
                    name: "affinity",
                    reason: "diagonal must be zero",
                });
            }
            for j in 0..n {
                let v = m[(i, j)];
                if !(v >= 0.0) || (v - m[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter {
                        name: "affinity",
                        reason: "entries must be non-negative and symmetric",
                    });
                }
                total += v;
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }
}

/// Which rows are labelled support samples.
///
/// `labels[i]` is `Some(class)` for support rows and `None` for queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportLabelInfo {
    labels: Vec<Option<usize>>,
}

impl SupportLabelInfo {
    pub fn new(labels: Vec<Option<usize>>) -> Self {
        Self { labels }
    }

    /// Builds from signed labels where `-1` marks a query row.
    pub fn from_signed(labels: &[i64]) -> Result<Self> {
        labels
            .iter()
            .map(|&l| match l {
                -1 => Ok(None),
                l if l >= 0 => Ok(Some(l as usize)),
                _ => Err(Error::InvalidParameter {
                    name: "labels",
                    reason: "labels must be non-negative or -1 for query rows",
                }),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    /// Support rows first (with their labels) followed by `n_query` queries.
    pub fn support_then_query(support_labels: &[usize], n_query: usize) -> Self {
        let mut labels: Vec<Option<usize>> = support_labels.iter().map(|&l| Some(l)).collect();
        labels.extend(core::iter::repeat_n(None, n_query));
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels[i]
    }

    pub fn is_support(&self, i: usize) -> bool {
        self.labels[i].is_some()
    }

    /// Relation between rows `i` and `j`: `Some(true)` for two support rows
    /// of the same class, `Some(false)` for two support rows of different
    /// classes, `None` otherwise.
    #[inline]
    pub fn same_class(&self, i: usize, j: usize) -> Option<bool> {
        match (self.labels[i], self.labels[j]) {
            (Some(a), Some(b)) => Some(a == b),
            _ => None,
        }
    }
}

/// Shannon entropy in bits, `0 · log 0 = 0`.
pub fn row_entropy(p: &[f64]) -> Result<f64> {
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-6 || p.iter().any(|&v| v < 0.0) {
        return Err(Error::NotNormalized(s));
    }
    Ok(entropy_bits(p))
}

fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * log2(v)).sum::<f64>()
}

/// Softmax of `kappa * sims[j]` over `j != skip`, written into `out`.
fn neighbour_softmax(sims: &[f64], skip: usize, kappa: f64, out: &mut [f64]) {
    let max = sims
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, &s)| kappa * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (j, (o, &s)) in out.iter_mut().zip(sims).enumerate() {
        *o = if j == skip { 0.0 } else { exp(kappa * s - max) };
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Bisection for each row's κ so that `|log2 P - H_i| <= 0.1 log2 P`.
///
/// The search starts at κ = 1, doubles while the entropy is too high and no
/// upper bound is known, and halves the bracket otherwise. Rows that do not
/// reach the tolerance within `max_iter` entropy evaluations keep the last
/// midpoint and are flagged as not converged.
pub fn calibrate_kappa(s: &GramMatrix, perplexity: f64, max_iter: usize) -> Result<KappaVector> {
    let n = s.n();
    let max = n.saturating_sub(1) as f64;
    if !(perplexity >= 2.0 && perplexity <= max) {
        return Err(Error::PerplexityOutOfRange { perplexity, max });
    }
    let target = log2(perplexity);
    let tol = ENTROPY_TOLERANCE * target;

    let mut values = Vec::with_capacity(n);
    let mut achieved_entropy = Vec::with_capacity(n);
    let mut converged = Vec::with_capacity(n);
    let mut buf = alloc::vec![0.0; n];

    for i in 0..n {
        let sims = s.row(i);
        let mut entropy_at = |kappa: f64| {
            neighbour_softmax(sims, i, kappa, &mut buf);
            entropy_bits(&buf)
        };
        let mut lo = KAPPA_MIN;
        let mut hi: Option<f64> = None;
        let mut kappa = 1.0;
        let mut h = entropy_at(kappa);
        let mut ok = (h - target).abs() <= tol;
        let mut iter = 1;
        while !ok && iter < max_iter {
            if h > target {
                lo = kappa;
                kappa = match hi {
                    Some(hi) => 0.5 * (kappa + hi),
                    None => (kappa * 2.0).min(KAPPA_MAX),
                };
            } else {
                hi = Some(kappa);
                kappa = 0.5 * (kappa + lo);
            }
            h = entropy_at(kappa);
            ok = (h - target).abs() <= tol;
            iter += 1;
        }
        values.push(kappa);
        achieved_entropy.push(h);
        converged.push(ok);
    }

    Ok(KappaVector {
        values,
        achieved_entropy,
        converged,
    })
}

/// Row `i` is the softmax of `kappa_i * S[i, j]` over `j != i`.
pub fn conditional_affinities(s: &GramMatrix, kappa: &KappaVector) -> Result<ConditionalAffinity> {
    let n = s.n();
    if kappa.len() != n {
        return Err(Error::Shape("kappa length does not match gram size"));
    }
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        neighbour_softmax(s.row(i), i, kappa.values[i], c.row_mut(i));
    }
    Ok(ConditionalAffinity(c))
}

/// `P = (C + Cᵀ) / (2n)`, which sums to one when `C` is row-stochastic.
pub fn symmetrize(c: &ConditionalAffinity) -> AffinityMatrix {
    let n = c.rows();
    let denom = 2.0 * n as f64;
    AffinityMatrix(Matrix::from_fn(n, n, |i, j| (c[(i, j)] + c[(j, i)]) / denom))
}

/// Replaces support–support similarities by `+1` (same class) or `-1`
/// (different class); every other entry is copied unchanged.
pub fn label_informed_gram(s: &GramMatrix, info: &SupportLabelInfo) -> Result<GramMatrix> {
    let n = s.n();
    if info.len() != n {
        return Err(Error::Shape("label info length does not match gram size"));
    }
    let mut out = (**s).clone();
    for i in 0..n {
        for j in 0..n {
            match info.same_class(i, j) {
                Some(true) => out[(i, j)] = 1.0,
                Some(false) => out[(i, j)] = -1.0,
                None => {}
            }
        }
    }
    Ok(GramMatrix::from_symmetric_unchecked(out))
}

/// Calibrates κ to `perplexity` and returns the symmetrized distribution.
pub fn affinities(
    s: &GramMatrix,
    perplexity: f64,
    max_iter: usize,
) -> Result<(AffinityMatrix, KappaVector)> {
    let kappa = calibrate_kappa(s, perplexity, max_iter)?;
    let c = conditional_affinities(s, &kappa)?;
    Ok((symmetrize(&c), kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cosine_matrix, sample_uniform_sphere};
    use proptest::prelude::*;
    use std::vec;

    fn gram(rows: &[&[f64]]) -> GramMatrix {
        GramMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((row_entropy(&[0.25; 4]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(row_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((row_entropy(&[0.5, 0.25, 0.25]).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(row_entropy(&[0.5, 0.4]), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn equal_similarities_converge_immediately() {
        let n = 6;
        let g = GramMatrix::new(Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.3 })).unwrap();
        let k = calibrate_kappa(&g, (n - 1) as f64, 100).unwrap();
        assert!(k.all_converged());
        assert!(k.values.iter().all(|&v| v == 1.0));
        for h in &k.achieved_entropy {
            assert!((h - log2(5.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn perplexity_bounds() {
        let g = cosine_matrix(&sample_uniform_sphere(10, 3, 1).unwrap()).unwrap();
        assert!(matches!(calibrate_kappa(&g, 10.0, 100), Err(Error::PerplexityOutOfRange { .. })));
        assert!(matches!(calibrate_kappa(&g, 1.5, 100), Err(Error::PerplexityOutOfRange { .. })));
        assert!(calibrate_kappa(&g, 9.0, 100).is_ok());
    }

    #[test]
    fn clustered_points_hit_target() {
        // 10 points near e0 and 10 near e1 (far cluster)
        let mut rows = vec![];
        for i in 0..20 {
            let t = 0.05 * (i % 10) as f64;
            rows.push(if i < 10 { vec![1.0, t, 0.1] } else { vec![t, 1.0, -0.1] });
        }
        let g = cosine_matrix(&Matrix::from_rows(&rows).unwrap()).unwrap();
        let k = calibrate_kappa(&g, 5.0, 100).unwrap();
        assert!(k.all_converged());
        let target = log2(5.0);
        // recompute entropy from scratch at the returned κ
        for i in 0..20 {
            let logits: Vec<f64> = (0..20).filter(|&j| j != i).map(|j| k.values[i] * g[(i, j)]).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            let h: f64 = -logits.iter().map(|l| (l - m).exp() / z).map(|p| p * p.log2()).sum::<f64>();
            assert!((h - target).abs() <= 0.1 * target, "row {i}: {h}");
        }
    }

    #[test]
    fn conditional_examples() {
        let g = gram(&[&[1.0, 0.2, 0.2], &[0.2, 1.0, 0.2], &[0.2, 0.2, 1.0]]);
        let c = conditional_affinities(&g, &KappaVector::uniform(3, 3.0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c[(i, j)], if i == j { 0.0 } else { 0.5 });
            }
        }
        let g = gram(&[&[1.0, 0.6, 0.5], &[0.6, 1.0, 0.0], &[0.5, 0.0, 1.0]]);
        let c = conditional_affinities(&g, &KappaVector::uniform(3, 200.0)).unwrap();
        assert!(c[(0, 1)] >= 0.99);
    }

    #[test]
    fn conditional_matches_direct_softmax() {
        let z = sample_uniform_sphere(6, 4, 21).unwrap();
        let g = cosine_matrix(&z).unwrap();
        let kv = KappaVector::uniform(6, 1.0);
        let kv = KappaVector {
            values: vec![0.3, 1.0, 2.5, 4.0, 7.0, 0.9],
            ..kv
        };
        let c = conditional_affinities(&g, &kv).unwrap();
        for i in 0..6 {
            let denom: f64 = (0..6).filter(|&m| m != i).map(|m| (kv.values[i] * g[(i, m)]).exp()).sum();
            for j in 0..6 {
                let want = if i == j { 0.0 } else { (kv.values[i] * g[(i, j)]).exp() / denom };
                assert!((c[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetrize_examples() {
        // symmetric row-stochastic input: output = input / n
        let m = Matrix::from_rows(&[[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]).unwrap();
        let p = symmetrize(&ConditionalAffinity::new(m.clone()).unwrap());
        assert!(p.max_abs_diff(&m.scale(1.0 / 3.0)) < 1e-16);

        let raw = [[0.0, 0.1, 0.6, 0.3], [0.25, 0.0, 0.25, 0.5], [0.7, 0.2, 0.0, 0.1], [0.05, 0.9, 0.05, 0.0]];
        let c = ConditionalAffinity::new(Matrix::from_rows(&raw).unwrap()).unwrap();
        let p = symmetrize(&c);
        for i in 0..4 {
            for j in 0..4 {
                assert!((p[(i, j)] - (raw[i][j] + raw[j][i]) / 8.0).abs() <= 1e-15);
            }
        }
        assert!(AffinityMatrix::new((*p).clone()).is_ok());
    }

    #[test]
    fn label_informed_examples() {
        let g = gram(&[&[1.0, 0.1, 0.4, 0.3], &[0.1, 1.0, 0.2, 0.5], &[0.4, 0.2, 1.0, 0.6], &[0.3, 0.5, 0.6, 1.0]]);
        let info = SupportLabelInfo::from_signed(&[0, 0, 1, -1]).unwrap();
        let out = label_informed_gram(&g, &info).unwrap();
        assert_eq!(out[(0, 1)], 1.0);
        assert_eq!(out[(0, 2)], -1.0);
        assert_eq!(out[(1, 2)], -1.0);
        assert_eq!(out[(2, 3)], 0.6);
        assert_eq!(out[(3, 0)], 0.3);

        let none = SupportLabelInfo::from_signed(&[-1; 4]).unwrap();
        assert_eq!(label_informed_gram(&g, &none).unwrap(), g);
        assert!(SupportLabelInfo::from_signed(&[0, -2]).is_err());
    }

    proptest! {
        #[test]
        fn joint_affinity_is_valid(seed in 0u64..1000, n in 4usize..20, perp_frac in 0.0f64..1.0) {
            let z = sample_uniform_sphere(n, 5, seed).unwrap();
            let g = cosine_matrix(&z).unwrap();
            let perp = 2.0 + perp_frac * ((n - 1) as f64 - 2.0);
            let (p, _) = affinities(&g, perp, 100).unwrap();
            prop_assert!(AffinityMatrix::new((*p).clone()).is_ok());
        }

        #[test]
        fn entropy_non_increasing_in_kappa(seed in 0u64..1000) {
            let z = sample_uniform_sphere(12, 4, seed).unwrap();
            let g = cosine_matrix(&z).unwrap();
            let mut buf = vec![0.0; 12];
            for i in 0..12 {
                let mut prev = f64::INFINITY;
                for step in 0..60 {
                    let kappa = 1e-3 * 1.3f64.powi(step);
                    neighbour_softmax(g.row(i), i, kappa, &mut buf);
                    let h = entropy_bits(&buf);
                    prop_assert!(h <= prev + 1e-12);
                    prev = h;
                }
            }
        }

        #[test]
        fn label_informed_touches_only_support_pairs(seed in 0u64..500, mask in proptest::collection::vec(-1i64..3, 9)) {
            let g = cosine_matrix(&sample_uniform_sphere(9, 3, seed).unwrap()).unwrap();
            let info = SupportLabelInfo::from_signed(&mask).unwrap();
            let out = label_informed_gram(&g, &info).unwrap();
            for i in 0..9 {
                for j in 0..9 {
                    if info.same_class(i, j).is_none() {
                        prop_assert_eq!(out[(i, j)].to_bits(), g[(i, j)].to_bits());
                    }
                }
            }
        }
    }
}
