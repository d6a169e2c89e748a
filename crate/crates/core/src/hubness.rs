//! Hubness diagnostics.
//!
//! The k-occurrence `N_k(i)` of a point counts how many other points list it
//! among their k nearest neighbours. In high dimensions this distribution
//! becomes right-skewed: a few "hubs" show up in almost every neighbour
//! list. Two summaries are reported: the skewness of `N_k` and the hub
//! occurrence, the fraction of neighbour-list slots taken by hubs.

use alloc::vec::Vec;

use crate::math::{dot, norm, sq_dist, sqrt};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Metric {
    /// `1 - cos(x, y)`
    #[default]
    CosineDistance,
    Euclidean,
}

/// k-occurrence counts together with the neighbour lists they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct KOccurrence {
    pub counts: Vec<usize>,
    pub k: usize,
    /// Row `j` holds the k nearest neighbours of point `j`, nearest first.
    neighbors: Vec<usize>,
}

impl KOccurrence {
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn neighbors_of(&self, j: usize) -> &[usize] {
        &self.neighbors[j * self.k..(j + 1) * self.k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubnessReport {
    pub skewness: f64,
    pub hub_occurrence: f64,
    pub k: usize,
    pub hub_threshold: usize,
    pub n: usize,
}

/// Default hub threshold: a point is a hub when `N_k > 2k`.
pub fn default_hub_threshold(k: usize) -> usize {
    2 * k
}

fn distance_matrix(points: &Matrix, metric: Metric) -> Result<Matrix> {
    let n = points.rows();
    let mut dist = Matrix::zeros(n, n);
    match metric {
        Metric::Euclidean => {
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = sqrt(sq_dist(points.row(i), points.row(j)));
                    dist[(i, j)] = d;
                    dist[(j, i)] = d;
                }
            }
        }
        Metric::CosineDistance => {
            let norms = points
                .iter_rows()
                .enumerate()
                .map(|(i, r)| {
                    let nrm = norm(r);
                    if nrm >= crate::geometry::ZERO_NORM {
                        Ok(nrm)
                    } else {
                        Err(Error::ZeroRow(i))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = 1.0 - dot(points.row(i), points.row(j)) / (norms[i] * norms[j]);
                    dist[(i, j)] = d;
                    dist[(j, i)] = d;
                }
            }
        }
    }
    Ok(dist)
}

/// Counts `N_k(i) = |{ j != i : i is among the k nearest neighbours of j }|`.
///
/// Equal distances are resolved in favour of the smaller index.
pub fn k_occurrence(points: &Matrix, k: usize, metric: Metric) -> Result<KOccurrence> {
    let n = points.rows();
    if k < 1 || k + 1 > n {
        return Err(Error::BadK { k, n });
    }
    let dist = distance_matrix(points, metric)?;
    let mut counts = alloc::vec![0usize; n];
    let mut neighbors = Vec::with_capacity(n * k);
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for j in 0..n {
        order.clear();
        order.extend((0..n).filter(|&i| i != j));
        let row = dist.row(j);
        let cmp = |&a: &usize, &b: &usize| row[a].total_cmp(&row[b]).then(a.cmp(&b));
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
        }
        let nearest = &mut order[..k];
        nearest.sort_unstable_by(cmp);
        for &i in nearest.iter() {
            counts[i] += 1;
        }
        neighbors.extend_from_slice(nearest);
    }
    Ok(KOccurrence { counts, k, neighbors })
}

/// Population skewness `m3 / m2^{3/2}`; zero when the values are constant.
pub fn skewness_of(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let (m2, m3) = values.iter().fold((0.0, 0.0), |(m2, m3), &v| {
        let d = v - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let (m2, m3) = (m2 / n, m3 / n);
    let scale = mean.abs().max(1.0);
    if m2 <= 1e-30 * scale * scale {
        return 0.0;
    }
    m3 / (m2 * sqrt(m2))
}

/// Skewness of the k-occurrence distribution.
pub fn skewness(occ: &KOccurrence) -> f64 {
    let values: Vec<f64> = occ.counts.iter().map(|&c| c as f64).collect();
    skewness_of(&values)
}

/// Fraction of neighbour-list slots occupied by hubs (`N_k > threshold`).
pub fn hub_occurrence(occ: &KOccurrence, hub_threshold: usize) -> f64 {
    let n = occ.n();
    let hub_slots = (0..n)
        .flat_map(|j| occ.neighbors_of(j).iter())
        .filter(|&&i| occ.counts[i] > hub_threshold)
        .count();
    hub_slots as f64 / (n * occ.k) as f64
}

/// Skewness and hub occurrence with the default `2k` hub threshold.
pub fn hubness_report(points: &Matrix, k: usize, metric: Metric) -> Result<HubnessReport> {
    hubness_report_with_threshold(points, k, metric, default_hub_threshold(k))
}

pub fn hubness_report_with_threshold(
    points: &Matrix,
    k: usize,
    metric: Metric,
    hub_threshold: usize,
) -> Result<HubnessReport> {
    let occ = k_occurrence(points, k, metric)?;
    Ok(HubnessReport {
        skewness: skewness(&occ),
        hub_occurrence: hub_occurrence(&occ, hub_threshold),
        k,
        hub_threshold,
        n: occ.n(),
    })
}
