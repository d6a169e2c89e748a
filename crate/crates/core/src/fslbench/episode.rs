use alloc::vec::Vec;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use crate::math::norm;
use crate::{rng, Error, Matrix, Result};

/// One K-way N_S-shot task. Rows are grouped by class in both sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support_x: Matrix,
    pub support_y: Vec<usize>,
    pub query_x: Matrix,
    /// Ground truth, used for scoring only.
    pub query_y: Vec<usize>,
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
}

impl Episode {
    /// Support rows followed by query rows.
    pub fn all_features(&self) -> Matrix {
        self.support_x
            .vstack(&self.query_x)
            .expect("support and query share a feature dimension")
    }

    pub fn n(&self) -> usize {
        self.support_x.rows() + self.query_x.rows()
    }
}

/// Shape of a synthetic task: class means uniform on the sphere scaled by
/// `separation`, samples drawn as mean plus isotropic Gaussian noise with
/// standard deviation `within_spread`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub dim: usize,
    pub separation: f64,
    pub within_spread: f64,
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if self.ways < 2 {
            return bad("ways", "need at least two classes");
        }
        if self.dim < 2 {
            return bad("dim", "must be at least 2");
        }
        if self.shots < 1 || self.queries < 1 {
            return bad("shots", "shots and queries must be at least 1");
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad("separation", "must be non-negative and finite");
        }
        if !(self.within_spread >= 0.0 && self.within_spread.is_finite()) {
            return bad("within_spread", "must be non-negative and finite");
        }
        Ok(())
    }
}

struct ClassMixture {
    means: Matrix,
    spread: f64,
}

impl ClassMixture {
    fn draw(classes: usize, dim: usize, separation: f64, spread: f64, r: &mut rng::Rng) -> Self {
        let mut means = Matrix::zeros(classes, dim);
        for c in 0..classes {
            let row = means.row_mut(c);
            loop {
                row.iter_mut().for_each(|v| *v = StandardNormal.sample(r));
                let nrm = norm(row);
                if nrm > 0.0 {
                    row.iter_mut().for_each(|v| *v *= separation / nrm);
                    break;
                }
            }
        }
        Self { means, spread }
    }

    fn sample_into(&self, class: usize, out: &mut [f64], r: &mut rng::Rng) {
        for (o, &m) in out.iter_mut().zip(self.means.row(class)) {
            let e: f64 = StandardNormal.sample(r);
            *o = m + self.spread * e;
        }
    }
}

/// Draws a synthetic episode. Deterministic per seed.
pub fn synth_episode(params: &SyntheticParams, seed: u64) -> Result<Episode> {
    params.validate()?;
    let SyntheticParams { ways, shots, queries, dim, .. } = *params;
    let mut r = rng::seeded(seed);
    let mix = ClassMixture::draw(ways, dim, params.separation, params.within_spread, &mut r);
    let mut support_x = Matrix::zeros(ways * shots, dim);
    let mut query_x = Matrix::zeros(ways * queries, dim);
    let mut support_y = Vec::with_capacity(ways * shots);
    let mut query_y = Vec::with_capacity(ways * queries);
    for c in 0..ways {
        for s in 0..shots {
            mix.sample_into(c, support_x.row_mut(c * shots + s), &mut r);
            support_y.push(c);
        }
        for q in 0..queries {
            mix.sample_into(c, query_x.row_mut(c * queries + q), &mut r);
            query_y.push(c);
        }
    }
    Ok(Episode {
        support_x,
        support_y,
        query_x,
        query_y,
        ways,
        shots,
        queries,
    })
}

/// A labelled pool of `classes * per_class` rows drawn from the same family
/// as [`synth_episode`]; rows are grouped by class.
pub fn synth_pool(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    within_spread: f64,
    seed: u64,
) -> Result<(Matrix, Vec<usize>)> {
    SyntheticParams {
        ways: classes,
        shots: per_class,
        queries: 1,
        dim,
        separation,
        within_spread,
    }
    .validate()?;
    let mut r = rng::seeded(seed);
    let mix = ClassMixture::draw(classes, dim, separation, within_spread, &mut r);
    let mut x = Matrix::zeros(classes * per_class, dim);
    let mut y = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for s in 0..per_class {
            mix.sample_into(c, x.row_mut(c * per_class + s), &mut r);
            y.push(c);
        }
    }
    Ok((x, y))
}

/// Samples `ways` classes without replacement from the pool, then
/// `shots + queries` rows per class without replacement. Episode labels are
/// `0..ways` in the order the classes were drawn.
pub fn sample_episode(
    pool_x: &Matrix,
    pool_y: &[usize],
    ways: usize,
    shots: usize,
    queries: usize,
    seed: u64,
) -> Result<Episode> {
    if pool_x.rows() != pool_y.len() {
        return Err(Error::Shape("pool labels do not match pool rows"));
    }
    if ways < 1 || shots < 1 || queries < 1 {
        return Err(Error::InvalidParameter {
            name: "episode",
            reason: "ways, shots and queries must be at least 1",
        });
    }
    let per_class = shots + queries;
    let n_classes = pool_y.iter().max().map_or(0, |&m| m + 1);
    let mut members: Vec<Vec<usize>> = (0..n_classes).map(|_| Vec::new()).collect();
    for (i, &y) in pool_y.iter().enumerate() {
        members[y].push(i);
    }
    let eligible: Vec<usize> = (0..n_classes).filter(|&c| members[c].len() >= per_class).collect();
    if eligible.len() < ways {
        return Err(Error::InsufficientPool("fewer eligible classes than requested ways"));
    }

    let mut r = rng::seeded(seed);
    let chosen = index::sample(&mut r, eligible.len(), ways);
    let dim = pool_x.cols();
    let mut support_x = Matrix::zeros(ways * shots, dim);
    let mut query_x = Matrix::zeros(ways * queries, dim);
    let mut support_y = Vec::with_capacity(ways * shots);
    let mut query_y = Vec::with_capacity(ways * queries);
    for (label, ci) in chosen.iter().enumerate() {
        let rows = &members[eligible[ci]];
        let picked = index::sample(&mut r, rows.len(), per_class);
        for (slot, pi) in picked.iter().enumerate() {
            let src = pool_x.row(rows[pi]);
            if slot < shots {
                support_x.row_mut(label * shots + slot).copy_from_slice(src);
                support_y.push(label);
            } else {
                query_x.row_mut(label * queries + slot - shots).copy_from_slice(src);
                query_y.push(label);
            }
        }
    }
    Ok(Episode {
        support_x,
        support_y,
        query_x,
        query_y,
        ways,
        shots,
        queries,
    })
}

/// Indexed stream of episodes. Episode `i` must depend only on the source's
/// own parameters and `i`, so episodes can be produced in any order.
pub trait EpisodeSource {
    fn episode_seed(&self, index: usize) -> u64;
    fn episode(&self, index: usize) -> Result<Episode>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSource {
    pub params: SyntheticParams,
    pub seed: u64,
}

impl EpisodeSource for SyntheticSource {
    fn episode_seed(&self, index: usize) -> u64 {
        rng::derive_seed(self.seed, index as u64)
    }

    fn episode(&self, index: usize) -> Result<Episode> {
        synth_episode(&self.params, self.episode_seed(index))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PoolSource<'a> {
    pub x: &'a Matrix,
    pub y: &'a [usize],
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub seed: u64,
}

impl EpisodeSource for PoolSource<'_> {
    fn episode_seed(&self, index: usize) -> u64 {
        rng::derive_seed(self.seed, index as u64)
    }

    fn episode(&self, index: usize) -> Result<Episode> {
        sample_episode(self.x, self.y, self.ways, self.shots, self.queries, self.episode_seed(index))
    }
}
