//! Uniform hyperspherical structure-preserving embeddings.
//!
//! [`embed`] maps an episode's feature rows onto the unit sphere by
//! minimizing `alpha * L_LSP + (1 - alpha) * L_Unif` with Adam, re-projecting
//! onto the sphere after every step. `L_LSP` keeps pairs that are similar in
//! the input similar in the embedding; `L_Unif` spreads the points out, which
//! is what removes hubs. The support-label variant ([`Variant::NoHubS`])
//! pins support similarities to ±1 in the input affinities and reweights the
//! uniformity term by class.

mod adam;
mod loss;

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

pub use adam::{adam_step, AdamParams, OptimizerState};
pub use loss::{
    grad_nohub, kl_divergence, loss_lsp, loss_nohub, loss_unif, loss_unif_from_gram, pair_weights, renyi2_entropy,
    LossTerms, UniformityMask,
};

use crate::affinity::{self, AffinityMatrix, KappaVector, SupportLabelInfo};
use crate::geometry::{self, EmbeddingMatrix, FeatureMatrix, ZERO_NORM};
use crate::math::norm;
use crate::{rng, Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Unsupervised: affinities from cosine similarities only.
    NoHub,
    /// Uses support labels in both the affinities and the uniformity term.
    NoHubS,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoHubConfig {
    /// Weight of the LSP term; `1 - alpha` weighs uniformity.
    pub alpha: f64,
    /// Concentration of the embedding similarities.
    pub kappa: f64,
    /// Target perplexity for the per-point input κ_i.
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Embedding dimensionality.
    pub dim: usize,
    /// Multiplier on between-class support similarities (NoHubS only).
    pub epsilon: f64,
    pub variant: Variant,
    /// Only consumed when a PCA row degenerates to zero and needs a random
    /// direction.
    pub seed: u64,
    pub adam: AdamParams,
    /// Bisection budget per row for κ_i.
    pub kappa_max_iter: usize,
}

impl NoHubConfig {
    /// Defaults used for the unsupervised variant.
    pub fn nohub() -> Self {
        Self {
            alpha: 0.2,
            kappa: 0.5,
            perplexity: 45.0,
            iterations: 50,
            learning_rate: 0.1,
            dim: 400,
            epsilon: 8.0,
            variant: Variant::NoHub,
            seed: 0,
            adam: AdamParams::default(),
            kappa_max_iter: affinity::DEFAULT_MAX_ITER,
        }
    }

    /// Defaults used for the support-label variant.
    pub fn nohub_s() -> Self {
        Self {
            iterations: 150,
            variant: Variant::NoHubS,
            ..Self::nohub()
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::NoHub => Self::nohub(),
            Variant::NoHubS => Self::nohub_s(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, reason: &'static str) -> Result<()> {
            Err(Error::InvalidParameter { name, reason })
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", "must lie in [0, 1]");
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad("kappa", "must be positive and finite");
        }
        if !(self.perplexity >= 2.0 && self.perplexity.is_finite()) {
            return bad("perplexity", "must be at least 2");
        }
        if self.iterations < 1 {
            return bad("iterations", "must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive and finite");
        }
        if self.dim < 2 {
            return bad("dim", "must be at least 2");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", "must be non-negative and finite");
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("adam", "betas must lie in [0, 1) and eps must be positive");
        }
        if self.kappa_max_iter < 1 {
            return bad("kappa_max_iter", "must be at least 1");
        }
        Ok(())
    }
}

impl Default for NoHubConfig {
    fn default() -> Self {
        Self::nohub()
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingResult {
    pub embeddings: EmbeddingMatrix,
    /// Loss terms after each update, one entry per iteration.
    pub loss_trace: Vec<LossTerms>,
    pub kappas: KappaVector,
    /// Input affinities the embedding was fitted to.
    pub affinity: AffinityMatrix,
    /// Set when the PCA initialisation had fewer informative directions than
    /// `dim` and the rest were filled with zeros.
    pub init_padded: bool,
}

/// Reduces rows to unit directions stored at single precision.
///
/// Everything downstream depends on the input only through these
/// directions, so rescaling a feature row (or the whole matrix) leaves the
/// embedding unchanged unless a coordinate sits on an f32 rounding boundary.
pub fn canonical_directions(x: &Matrix) -> Result<Matrix> {
    let mut u = geometry::l2_normalize_rows(x)?;
    u.as_mut_slice().iter_mut().for_each(|v| *v = *v as f32 as f64);
    Ok(u)
}

/// Runs the full embedding procedure on `x`.
///
/// `info` is required for [`Variant::NoHubS`] and ignored otherwise.
pub fn embed(x: &FeatureMatrix, config: &NoHubConfig, info: Option<&SupportLabelInfo>) -> Result<EmbeddingResult> {
    embed_observed(x, config, info, |_, _| {})
}

/// [`embed`] with a callback invoked after every reprojection with the
/// iteration index and the current iterate (informative coordinates only).
pub fn embed_observed<F>(
    x: &FeatureMatrix,
    config: &NoHubConfig,
    info: Option<&SupportLabelInfo>,
    mut observer: F,
) -> Result<EmbeddingResult>
where
    F: FnMut(usize, &Matrix),
{
    config.validate()?;
    let n = x.rows();
    let info = match (config.variant, info) {
        (Variant::NoHub, _) => None,
        (Variant::NoHubS, Some(info)) if info.len() == n => Some(info),
        (Variant::NoHubS, Some(_)) => return Err(Error::Shape("label info length does not match rows")),
        (Variant::NoHubS, None) => {
            return Err(Error::InvalidParameter {
                name: "labels",
                reason: "the support-label variant needs support labels",
            })
        }
    };

    let u = canonical_directions(x)?;
    let mut sims = geometry::cosine_matrix(&u)?;
    if let Some(info) = info {
        sims = affinity::label_informed_gram(&sims, info)?;
    }
    let (p, kappas) = affinity::affinities(&sims, config.perplexity, config.kappa_max_iter)?;

    let (init, init_padded) = initial_embedding(&u, config)?;
    // Coordinates that start at zero receive zero gradient and zero Adam
    // updates forever, so the loop runs on the remaining columns only. The
    // result is bit-identical to iterating on the full matrix.
    let active: Vec<usize> = (0..init.cols())
        .filter(|&c| (0..n).any(|i| init[(i, c)] != 0.0))
        .collect();
    let mut z = Matrix::from_fn(n, active.len(), |i, c| init[(i, active[c])]);

    let mask = info.map(|info| UniformityMask::new(info.clone(), config.epsilon));
    let mask = mask.as_ref();
    let mut state = OptimizerState::new(n, z.cols());
    let mut trace = Vec::with_capacity(config.iterations);

    let (_, mut grad) = loss::loss_and_gradient(&p, &z, config.alpha, config.kappa, mask)?;
    for it in 0..config.iterations {
        if grad.find_non_finite().is_some() {
            return Err(Error::NonFinite(it));
        }
        state.step(&grad, &mut z, config.learning_rate, &config.adam)?;
        z = geometry::l2_normalize_rows(&z).map_err(|_| Error::NonFinite(it))?;
        if z.find_non_finite().is_some() {
            return Err(Error::NonFinite(it));
        }
        observer(it, &z);
        let terms = if it + 1 < config.iterations {
            let (terms, g) = loss::loss_and_gradient(&p, &z, config.alpha, config.kappa, mask)?;
            grad = g;
            terms
        } else {
            loss::loss_only(&p, &z, config.alpha, config.kappa, mask)?
        };
        if !(terms.total.is_finite() && terms.lsp.is_finite() && terms.unif.is_finite()) {
            return Err(Error::NonFinite(it));
        }
        trace.push(terms);
    }

    let mut full = Matrix::zeros(n, config.dim);
    for i in 0..n {
        for (c, &col) in active.iter().enumerate() {
            full[(i, col)] = z[(i, c)];
        }
    }
    Ok(EmbeddingResult {
        embeddings: EmbeddingMatrix::new(full)?,
        loss_trace: trace,
        kappas,
        affinity: p,
        init_padded,
    })
}

/// PCA coordinates projected onto the sphere. A row that projects to the
/// origin gets a seeded random direction instead.
fn initial_embedding(u: &Matrix, config: &NoHubConfig) -> Result<(Matrix, bool)> {
    let (mut init, padded) = geometry::pca_padded(u, config.dim)?;
    for i in 0..init.rows() {
        let row = init.row_mut(i);
        let mut nrm = norm(row);
        if nrm < ZERO_NORM {
            let mut r = rng::seeded(rng::derive_seed(config.seed, i as u64));
            while nrm < ZERO_NORM {
                row.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut r));
                nrm = norm(row);
            }
        }
        row.iter_mut().for_each(|v| *v /= nrm);
    }
    Ok((init, padded))
}

#[cfg(test)]
mod tests;
