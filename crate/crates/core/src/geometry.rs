//! Hypersphere primitives: row normalization, Gram matrices, uniform sampling
//! on the sphere and the PCA projection used to initialise embeddings.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use rand_distr::{Distribution, StandardNormal};

use crate::math::{dot, norm, sqrt};
use crate::{rng, Error, Matrix, Result};

/// Rows with a Euclidean norm below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// Tolerance of the unit-row-norm invariant.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Raw representations, one row per sample.
///
/// At least two rows and one column, finite entries, no zero row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() < 2 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "a feature matrix needs at least two rows",
            });
        }
        if m.cols() < 1 {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "a feature matrix needs at least one column",
            });
        }
        if let Some((row, col)) = m.find_non_finite() {
            return Err(Error::NonFiniteEntry { row, col });
        }
        if let Some(i) = m.iter_rows().position(|r| norm(r) < ZERO_NORM) {
            return Err(Error::ZeroRow(i));
        }
        Ok(Self(m))
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

impl Deref for FeatureMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Points on the unit hypersphere, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(Matrix);

impl EmbeddingMatrix {
    /// Wraps `m` after checking that every row is finite with unit norm.
    pub fn new(m: Matrix) -> Result<Self> {
        if let Some((row, col)) = m.find_non_finite() {
            return Err(Error::NonFiniteEntry { row, col });
        }
        if m.iter_rows().any(|r| (norm(r) - 1.0).abs() > UNIT_NORM_TOL) {
            return Err(Error::InvalidParameter {
                name: "embeddings",
                reason: "rows must have unit Euclidean norm",
            });
        }
        Ok(Self(m))
    }

    /// Projects every row of `m` onto the sphere.
    pub fn normalized(m: &Matrix) -> Result<Self> {
        l2_normalize_rows(m).map(Self)
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

impl Deref for EmbeddingMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Symmetric matrix of pairwise similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(Matrix);

impl GramMatrix {
    /// Wraps a square matrix; symmetry is checked to 1e-12.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Shape("gram matrix must be square"));
        }
        let n = m.rows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter {
                        name: "gram",
                        reason: "matrix is not symmetric",
                    });
                }
            }
        }
        if let Some((row, col)) = m.find_non_finite() {
            return Err(Error::NonFiniteEntry { row, col });
        }
        Ok(Self(m))
    }

    pub(crate) fn from_symmetric_unchecked(m: Matrix) -> Self {
        Self(m)
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }
}

impl Deref for GramMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Divides each row by its Euclidean norm.
pub fn l2_normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let nrm = norm(row);
        if !(nrm >= ZERO_NORM) {
            return Err(Error::ZeroRow(i));
        }
        row.iter_mut().for_each(|v| *v /= nrm);
    }
    Ok(out)
}

/// Pairwise cosine similarities; the diagonal is exactly 1.
pub fn cosine_matrix(m: &Matrix) -> Result<GramMatrix> {
    let norms = m
        .iter_rows()
        .enumerate()
        .map(|(i, r)| {
            let nrm = norm(r);
            if nrm >= ZERO_NORM {
                Ok(nrm)
            } else {
                Err(Error::ZeroRow(i))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let n = m.rows();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let c = dot(m.row(i), m.row(j)) / (norms[i] * norms[j]);
            g[(i, j)] = c;
            g[(j, i)] = c;
        }
    }
    Ok(GramMatrix(g))
}

/// Pairwise inner products `z_i · z_j` of points on the sphere.
pub fn inner_product_matrix(z: &EmbeddingMatrix) -> GramMatrix {
    GramMatrix(gram_of(z))
}

pub(crate) fn gram_of(z: &Matrix) -> Matrix {
    let n = z.rows();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = dot(z.row(i), z.row(i));
        for j in (i + 1)..n {
            let v = dot(z.row(i), z.row(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `n` i.i.d. points uniform on the unit sphere in `R^d`, drawn as
/// normalized standard Gaussians. Deterministic per seed.
pub fn sample_uniform_sphere(n: usize, d: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if n < 1 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "must be at least 1",
        });
    }
    if d < 2 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "must be at least 2",
        });
    }
    let mut rng = rng::seeded(seed);
    let mut m = Matrix::zeros(n, d);
    for i in 0..n {
        let row = m.row_mut(i);
        loop {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let nrm = norm(row);
            if nrm >= ZERO_NORM {
                row.iter_mut().for_each(|v| *v /= nrm);
                break;
            }
        }
    }
    Ok(EmbeddingMatrix(m))
}

/// Principal axes of row-centered data.
#[derive(Debug, Clone)]
pub struct Pca {
    /// `n × d` coordinates of the centered rows along each direction.
    pub scores: Matrix,
    /// `d × k`, one unit direction per row (zero rows for null directions).
    pub directions: Matrix,
    /// Singular values of the centered data, descending.
    pub singular_values: Vec<f64>,
    /// Set when fewer than `d` directions carry variance; the missing
    /// coordinates are zero.
    pub rank_deficient: bool,
}

/// Top-`d` principal components of the row-centered data.
///
/// Each direction is flipped so that its largest-magnitude coordinate is
/// positive (first such coordinate on ties).
pub fn pca(m: &Matrix, d: usize) -> Result<Pca> {
    let (n, k) = (m.rows(), m.cols());
    let max = n.min(k);
    if d == 0 || d > max {
        return Err(Error::DimTooLarge { requested: d, max });
    }

    let mut mean = vec![0.0; k];
    for r in m.iter_rows() {
        mean.iter_mut().zip(r).for_each(|(a, v)| *a += v);
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let centered = Matrix::from_fn(n, k, |i, j| m[(i, j)] - mean[j]);

    // Eigendecompose the smaller of C·Cᵀ (n×n) and Cᵀ·C (k×k).
    let use_gram = n <= k;
    let small = if use_gram {
        gram_of(&centered)
    } else {
        gram_of(&centered.transpose())
    };
    let (evals, evecs) = symmetric_eigen(&small);
    let lambda_max = evals.first().copied().unwrap_or(0.0).max(0.0);
    let null_tol = lambda_max * 1e-12 * (n.max(k) as f64);

    let mut directions = Matrix::zeros(d, k);
    let mut singular_values = Vec::with_capacity(d);
    let mut rank_deficient = false;
    for c in 0..d {
        let lambda = evals[c];
        if !(lambda > null_tol) {
            rank_deficient = true;
            singular_values.push(0.0);
            continue;
        }
        let sigma = sqrt(lambda);
        singular_values.push(sigma);
        let dir = directions.row_mut(c);
        if use_gram {
            // v = Cᵀu / σ
            for i in 0..n {
                let u = evecs[(i, c)];
                for (dj, x) in dir.iter_mut().zip(centered.row(i)) {
                    *dj += u * x;
                }
            }
            let nrm = norm(dir);
            dir.iter_mut().for_each(|v| *v /= nrm);
        } else {
            for (j, dj) in dir.iter_mut().enumerate() {
                *dj = evecs[(j, c)];
            }
        }
        fix_sign(dir);
    }

    let scores = Matrix::from_fn(n, d, |i, c| dot(centered.row(i), directions.row(c)));
    Ok(Pca {
        scores,
        directions,
        singular_values,
        rank_deficient,
    })
}

/// Projections onto the top-`d` principal directions; see [`pca`].
pub fn pca_project(m: &Matrix, d: usize) -> Result<Matrix> {
    pca(m, d).map(|p| p.scores)
}

/// PCA coordinates padded with zero columns up to `d` when `d` exceeds
/// `min(n, k)`. The flag reports whether any coordinate is padding or a
/// null direction.
pub fn pca_padded(m: &Matrix, d: usize) -> Result<(Matrix, bool)> {
    let usable = d.min(m.rows()).min(m.cols());
    let p = pca(m, usable)?;
    if usable == d {
        return Ok((p.scores, p.rank_deficient));
    }
    let out = Matrix::from_fn(m.rows(), d, |i, c| if c < usable { p.scores[(i, c)] } else { 0.0 });
    Ok((out, true))
}

fn fix_sign(dir: &mut [f64]) {
    let mut best = 0;
    for (j, v) in dir.iter().enumerate() {
        if v.abs() > dir[best].abs() {
            best = j;
        }
    }
    if dir[best] < 0.0 {
        dir.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the columns of the second matrix.
pub(crate) fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut a = a.clone();
    let mut v = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let scale = sqrt(a.as_slice().iter().map(|x| x * x).sum::<f64>());
    let skip = scale * 1e-18;

    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= skip || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let t = 1.0 / (theta.abs() + sqrt(theta * theta + 1.0));
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for r in 0..n {
                    let (arp, arq) = (a[(r, p)], a[(r, q)]);
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[(p, r)], a[(q, r)]);
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    let (vrp, vrq) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep their index order
    order.sort_by(|&x, &y| a[(y, y)].partial_cmp(&a[(x, x)]).unwrap_or(core::cmp::Ordering::Equal));
    let evals = order.iter().map(|&i| a[(i, i)]).collect();
    let evecs = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (evals, evecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let out = l2_normalize_rows(&m(&[&[3.0, 4.0], &[1.0, 0.0]])).unwrap();
        assert!((out[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((out[(0, 1)] - 0.8).abs() < 1e-15);
        assert_eq!(out.row(1), &[1.0, 0.0]);
        let out = l2_normalize_rows(&m(&[&[1.0, 1.0, 1.0, 1.0]])).unwrap();
        assert!(out.row(0).iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn normalize_zero_row() {
        assert_eq!(
            l2_normalize_rows(&m(&[&[1.0, 2.0], &[0.0, 0.0]])),
            Err(Error::ZeroRow(1))
        );
        assert_eq!(cosine_matrix(&m(&[&[0.0, 1e-13], &[1.0, 0.0]])).unwrap_err(), Error::ZeroRow(0));
    }

    #[test]
    fn feature_matrix_validation() {
        assert!(FeatureMatrix::new(m(&[&[1.0, 2.0]])).is_err());
        assert_eq!(
            FeatureMatrix::new(m(&[&[1.0, 2.0], &[f64::NAN, 0.0]])),
            Err(Error::NonFiniteEntry { row: 1, col: 0 })
        );
        assert_eq!(
            FeatureMatrix::new(m(&[&[1.0, 2.0], &[0.0, 0.0]])),
            Err(Error::ZeroRow(1))
        );
    }

    #[test]
    fn cosine_examples() {
        let g = cosine_matrix(&m(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(g[(0, 1)], 0.0);
        assert_eq!(g[(0, 0)], 1.0);
        let g = cosine_matrix(&m(&[&[1.0, 2.0], &[5.0, 10.0]])).unwrap();
        assert!((g[(0, 1)] - 1.0).abs() < 1e-15);
        let g = cosine_matrix(&m(&[&[1.0, 0.0], &[1.0, 1.0]])).unwrap();
        assert!((g[(0, 1)] - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn inner_product_examples() {
        let z = EmbeddingMatrix::normalized(&m(&[&[1.0, 2.0, 2.0], &[1.0, 2.0, 2.0], &[-1.0, -2.0, -2.0]])).unwrap();
        let g = inner_product_matrix(&z);
        assert!((g[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((g[(0, 2)] + 1.0).abs() < 1e-15);

        let z = sample_uniform_sphere(12, 5, 3).unwrap();
        let a = inner_product_matrix(&z);
        let b = cosine_matrix(&z).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
        assert!(a.as_slice().iter().all(|v| v.abs() <= 1.0 + 1e-9));
    }

    #[test]
    fn sphere_sampler_basic() {
        let z = sample_uniform_sphere(1, 3, 42).unwrap();
        assert!((norm(z.row(0)) - 1.0).abs() < 1e-12);
        assert_eq!(sample_uniform_sphere(50, 4, 9), sample_uniform_sphere(50, 4, 9));
        assert_ne!(sample_uniform_sphere(50, 4, 9), sample_uniform_sphere(50, 4, 10));
        assert!(sample_uniform_sphere(0, 3, 1).is_err());
        assert!(sample_uniform_sphere(3, 1, 1).is_err());
    }

    #[test]
    fn sphere_mean_is_small() {
        for &d in &[8usize, 64] {
            let n = 100_000;
            let z = sample_uniform_sphere(n, d, 7).unwrap();
            // mean accumulated column-wise, independently of the sampler
            let mut mean = vec![0.0f64; d];
            for j in 0..d {
                let mut s = 0.0;
                for i in 0..n {
                    s += z[(i, j)];
                }
                mean[j] = s / n as f64;
            }
            let mn = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(mn <= 3.0 / (n as f64).sqrt(), "d={d} mean norm {mn}");
        }
    }

    #[test]
    fn pca_rank_one_axis() {
        let data = m(&[&[0.0, -2.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 4.0, 0.0], &[0.0, 5.0, 0.0]]);
        let p = pca(&data, 1).unwrap();
        assert!((p.directions[(0, 1)] - 1.0).abs() < 1e-12);
        assert!(p.directions[(0, 0)].abs() < 1e-12);
        // centered coordinates along +y
        assert!((p.scores[(0, 0)] + 4.0).abs() < 1e-12);
        assert!((p.scores[(3, 0)] - 3.0).abs() < 1e-12);
        let p = pca(&data, 3).unwrap();
        assert!(p.rank_deficient);
    }

    #[test]
    fn pca_dim_too_large() {
        let data = m(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(pca_project(&data, 3).unwrap_err(), Error::DimTooLarge { requested: 3, max: 2 });
        assert!(pca_project(&data, 0).is_err());
    }

    #[test]
    fn pca_padded_fills_zeros() {
        let data = m(&[&[1.0, 0.0, 2.0], &[0.0, 1.0, -1.0], &[1.0, 1.0, 0.5]]);
        let (out, flagged) = pca_padded(&data, 6).unwrap();
        assert!(flagged);
        assert_eq!(out.cols(), 6);
        for i in 0..3 {
            assert!(out.row(i)[3..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn pca_homogeneity() {
        let z = sample_uniform_sphere(9, 6, 11).unwrap();
        let a = pca_project(&z, 4).unwrap();
        let b = pca_project(&z.scale(2.0), 4).unwrap();
        assert_eq!(a.scale(2.0), b);
        let c = pca_project(&z.scale(3.0), 4).unwrap();
        assert!(a.scale(3.0).max_abs_diff(&c) < 1e-12);
    }

    fn pairwise_distances(m: &Matrix) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..m.rows() {
            for j in (i + 1)..m.rows() {
                out.push(sqrt(crate::math::sq_dist(m.row(i), m.row(j))));
            }
        }
        out
    }

    #[test]
    fn pca_matches_covariance_eigenvectors() {
        for seed in 0..20 {
            let x = Matrix::from_fn(5, 8, |i, j| libm::sin((seed * 40 + i * 8 + j) as f64 * 1.7) * 3.0);
            let ours = pca(&x, 2).unwrap();

            let centered = nalgebra::DMatrix::from_fn(5, 8, |i, j| {
                x[(i, j)] - (0..5).map(|r| x[(r, j)]).sum::<f64>() / 5.0
            });
            let eig = (centered.transpose() * &centered).symmetric_eigen();
            let mut order: Vec<usize> = (0..8).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let proj = &centered * eig.eigenvectors.select_columns(&order[..2]);
            let oracle = Matrix::from_fn(5, 2, |i, c| proj[(i, c)]);

            for (a, b) in pairwise_distances(&ours.scores).iter().zip(pairwise_distances(&oracle)) {
                assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
            }
            for c in 0..2 {
                assert!((ours.singular_values[c] - sqrt(eig.eigenvalues[order[c]])).abs() < 1e-8);
                let col_ours: Vec<f64> = (0..5).map(|i| ours.scores[(i, c)]).collect();
                let same = (0..5).all(|i| (col_ours[i] - oracle[(i, c)]).abs() < 1e-8);
                let flipped = (0..5).all(|i| (col_ours[i] + oracle[(i, c)]).abs() < 1e-8);
                assert!(same || flipped);
            }
        }
    }

    #[test]
    fn pca_at_full_rank_preserves_distances() {
        // 6 points in R^10 span a 5-dimensional affine subspace
        let x = sample_uniform_sphere(6, 10, 3).unwrap();
        let p = pca(&x, 5).unwrap();
        assert!(!p.rank_deficient);
        for (a, b) in pairwise_distances(&p.scores).iter().zip(pairwise_distances(&x)) {
            assert!((a - b).abs() < 1e-8);
        }
        // a sixth direction would be null
        let (_, padded) = pca_padded(&x, 6).unwrap();
        assert!(padded);
    }

    #[test]
    fn jacobi_reconstructs() {
        let x = sample_uniform_sphere(7, 7, 5).unwrap();
        let s = gram_of(&x);
        let (evals, v) = symmetric_eigen(&s);
        assert!(evals.windows(2).all(|w| w[0] >= w[1]));
        let rec = Matrix::from_fn(7, 7, |i, j| (0..7).map(|c| v[(i, c)] * evals[c] * v[(j, c)]).sum());
        assert!(rec.max_abs_diff(&s) < 1e-12);
    }

    proptest! {
        #[test]
        fn normalize_idempotent(data in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let mat = Matrix::from_vec(3, 4, data).unwrap();
            prop_assume!(mat.iter_rows().all(|r| norm(r) > 1e-3));
            let once = l2_normalize_rows(&mat).unwrap();
            let twice = l2_normalize_rows(&once).unwrap();
            prop_assert!(once.max_abs_diff(&twice) < 1e-12);
        }

        #[test]
        fn cosine_row_scale_invariant(
            data in proptest::collection::vec(-10.0f64..10.0, 15),
            scales in proptest::collection::vec(0.01f64..100.0, 5),
            exps in proptest::collection::vec(-8i32..8, 5),
        ) {
            let mat = Matrix::from_vec(5, 3, data).unwrap();
            prop_assume!(mat.iter_rows().all(|r| norm(r) > 1e-3));
            let g = cosine_matrix(&mat).unwrap();
            let scaled = Matrix::from_fn(5, 3, |i, j| mat[(i, j)] * scales[i]);
            prop_assert!(cosine_matrix(&scaled).unwrap().max_abs_diff(&g) < 1e-12);
            let pow2 = Matrix::from_fn(5, 3, |i, j| mat[(i, j)] * libm::ldexp(1.0, exps[i]));
            prop_assert_eq!(cosine_matrix(&pow2).unwrap(), g);
        }
    }
}
