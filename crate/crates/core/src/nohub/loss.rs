//! Local-similarity-preservation and uniformity losses, their ambient
//! gradients, and the quantities they are related to (KL divergence and the
//! order-2 Rényi entropy estimate).
//!
//! All sums run over ordered pairs `(l, m)` with `l != m`. Logarithms are
//! natural.

use alloc::vec::Vec;

use crate::affinity::{AffinityMatrix, SupportLabelInfo};
use crate::geometry::gram_of;
use crate::math::{exp, ln, log_sum_exp, sq_dist};
use crate::{Error, Matrix, Result};

/// Label-informed weighting of the uniformity term.
///
/// Pairs of support rows from the same class are dropped from the sum;
/// pairs of support rows from different classes have their similarity
/// multiplied by `epsilon`. All other pairs are unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformityMask {
    pub info: SupportLabelInfo,
    pub epsilon: f64,
}

impl UniformityMask {
    pub fn new(info: SupportLabelInfo, epsilon: f64) -> Self {
        Self { info, epsilon }
    }

    /// Similarity multiplier for pair `(l, m)`, or `None` if excluded.
    #[inline]
    pub fn factor(&self, l: usize, m: usize) -> Option<f64> {
        match self.info.same_class(l, m) {
            Some(true) => None,
            Some(false) => Some(self.epsilon),
            None => Some(1.0),
        }
    }
}

#[inline]
fn factor(mask: Option<&UniformityMask>, l: usize, m: usize) -> Option<f64> {
    match mask {
        Some(mask) => mask.factor(l, m),
        None => Some(1.0),
    }
}

/// The three loss values reported per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub lsp: f64,
    pub unif: f64,
    /// `alpha * lsp + (1 - alpha) * unif`
    pub total: f64,
}

/// `-kappa * Σ p_ij z_i·z_j`.
pub fn loss_lsp(p: &AffinityMatrix, z: &Matrix, kappa: f64) -> Result<f64> {
    check_shapes(p, z)?;
    let g = gram_of(z);
    Ok(lsp_from_gram(p, &g, kappa))
}

fn lsp_from_gram(p: &AffinityMatrix, g: &Matrix, kappa: f64) -> f64 {
    let n = g.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += p[(i, j)] * g[(i, j)];
            }
        }
    }
    -kappa * acc
}

/// `ln Σ exp(kappa · s(z_l, z_m))`, where `s` is the inner product, or its
/// label-informed variant when a mask is given.
pub fn loss_unif(z: &Matrix, kappa: f64, mask: Option<&UniformityMask>) -> Result<f64> {
    check_mask(mask, z)?;
    let g = gram_of(z);
    unif_from_gram(&g, kappa, mask)
}

/// [`loss_unif`] evaluated from a precomputed inner-product matrix `g`.
pub fn loss_unif_from_gram(g: &Matrix, kappa: f64, mask: Option<&UniformityMask>) -> Result<f64> {
    unif_from_gram(g, kappa, mask)
}

fn unif_from_gram(g: &Matrix, kappa: f64, mask: Option<&UniformityMask>) -> Result<f64> {
    let n = g.rows();
    let mut logits = Vec::with_capacity(n * n);
    for l in 0..n {
        for m in 0..n {
            if l != m {
                if let Some(c) = factor(mask, l, m) {
                    logits.push(kappa * c * g[(l, m)]);
                }
            }
        }
    }
    if logits.is_empty() {
        return Err(Error::EmptySum);
    }
    Ok(log_sum_exp(&logits))
}

/// Unnormalized pair weights `exp(kappa · s(z_l, z_m))` of the uniformity
/// sum; excluded pairs and the diagonal are zero.
pub fn pair_weights(z: &Matrix, kappa: f64, mask: Option<&UniformityMask>) -> Matrix {
    let g = gram_of(z);
    let n = g.rows();
    Matrix::from_fn(n, n, |l, m| {
        if l == m {
            return 0.0;
        }
        factor(mask, l, m).map_or(0.0, |c| exp(kappa * c * g[(l, m)]))
    })
}

/// Loss terms for `alpha * L_LSP + (1 - alpha) * L_Unif`.
pub fn loss_nohub(
    p: &AffinityMatrix,
    z: &Matrix,
    alpha: f64,
    kappa: f64,
    mask: Option<&UniformityMask>,
) -> Result<LossTerms> {
    check_shapes(p, z)?;
    check_mask(mask, z)?;
    let g = gram_of(z);
    terms_from_gram(p, &g, alpha, kappa, mask)
}

fn terms_from_gram(
    p: &AffinityMatrix,
    g: &Matrix,
    alpha: f64,
    kappa: f64,
    mask: Option<&UniformityMask>,
) -> Result<LossTerms> {
    let lsp = lsp_from_gram(p, g, kappa);
    let unif = unif_from_gram(g, kappa, mask)?;
    Ok(LossTerms {
        lsp,
        unif,
        total: alpha * lsp + (1.0 - alpha) * unif,
    })
}

/// Ambient gradient of `alpha * L_LSP + (1 - alpha) * L_Unif` with respect
/// to every row of `z`.
///
/// Row `i` is `-2 kappa Σ_j p_ij z_j` for the LSP term and
/// `2 kappa Σ_j c_ij softmax_ij z_j` for the uniformity term, where `c_ij` is
/// the mask multiplier and the softmax runs over all included pairs.
pub fn grad_nohub(
    p: &AffinityMatrix,
    z: &Matrix,
    alpha: f64,
    kappa: f64,
    mask: Option<&UniformityMask>,
) -> Result<Matrix> {
    check_shapes(p, z)?;
    check_mask(mask, z)?;
    let g = gram_of(z);
    let lse = unif_from_gram(&g, kappa, mask)?;
    Ok(gradient_from_gram(p, z, &g, lse, alpha, kappa, mask))
}

fn gradient_from_gram(
    p: &AffinityMatrix,
    z: &Matrix,
    g: &Matrix,
    lse: f64,
    alpha: f64,
    kappa: f64,
    mask: Option<&UniformityMask>,
) -> Matrix {
    let (n, d) = (z.rows(), z.cols());
    let mut grad = Matrix::zeros(n, d);
    let mut coef = alloc::vec![0.0; n];
    for i in 0..n {
        for (j, c) in coef.iter_mut().enumerate() {
            *c = if i == j {
                0.0
            } else {
                let lsp = -2.0 * kappa * p[(i, j)];
                let unif = factor(mask, i, j)
                    .map_or(0.0, |f| 2.0 * kappa * f * exp(kappa * f * g[(i, j)] - lse));
                alpha * lsp + (1.0 - alpha) * unif
            };
        }
        let row = grad.row_mut(i);
        for (j, &c) in coef.iter().enumerate() {
            if c != 0.0 {
                for (r, &zj) in row.iter_mut().zip(z.row(j)) {
                    *r += c * zj;
                }
            }
        }
    }
    grad
}

/// Loss terms and gradient at `z`, sharing one Gram matrix.
pub(crate) fn loss_and_gradient(
    p: &AffinityMatrix,
    z: &Matrix,
    alpha: f64,
    kappa: f64,
    mask: Option<&UniformityMask>,
) -> Result<(LossTerms, Matrix)> {
    let g = gram_of(z);
    let terms = terms_from_gram(p, &g, alpha, kappa, mask)?;
    let grad = gradient_from_gram(p, z, &g, terms.unif, alpha, kappa, mask);
    Ok((terms, grad))
}

pub(crate) fn loss_only(
    p: &AffinityMatrix,
    z: &Matrix,
    alpha: f64,
    kappa: f64,
    mask: Option<&UniformityMask>,
) -> Result<LossTerms> {
    terms_from_gram(p, &gram_of(z), alpha, kappa, mask)
}

/// `KL(P‖Q)` with `q_ij = exp(kappa z_i·z_j) / Σ_{l≠m} exp(kappa z_l·z_m)`.
pub fn kl_divergence(p: &AffinityMatrix, z: &Matrix, kappa: f64) -> Result<f64> {
    check_shapes(p, z)?;
    let g = gram_of(z);
    let lse = unif_from_gram(&g, kappa, None)?;
    let n = g.rows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[(i, j)];
            if i != j && pij > 0.0 {
                let log_q = kappa * g[(i, j)] - lse;
                kl += pij * (ln(pij) - log_q);
            }
        }
    }
    Ok(kl)
}

/// Gaussian-kernel estimate of the order-2 Rényi entropy,
/// `-ln( n⁻² Σ_{l≠m} exp(-kappa ‖z_l - z_m‖² / 2) )`.
pub fn renyi2_entropy(z: &Matrix, kappa: f64) -> f64 {
    let n = z.rows();
    let logits: Vec<f64> = (0..n)
        .flat_map(|l| (0..n).filter(move |&m| m != l).map(move |m| (l, m)))
        .map(|(l, m)| -0.5 * kappa * sq_dist(z.row(l), z.row(m)))
        .collect();
    let nf = n as f64;
    -(log_sum_exp(&logits) - 2.0 * ln(nf))
}

fn check_shapes(p: &AffinityMatrix, z: &Matrix) -> Result<()> {
    if p.n() != z.rows() {
        return Err(Error::Shape("affinity size does not match embedding rows"));
    }
    Ok(())
}

fn check_mask(mask: Option<&UniformityMask>, z: &Matrix) -> Result<()> {
    match mask {
        Some(mask) if mask.info.len() != z.rows() => {
            Err(Error::Shape("mask length does not match embedding rows"))
        }
        _ => Ok(()),
    }
}
