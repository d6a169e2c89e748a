use alloc::vec::Vec;

use crate::math::{dot, norm, sq_dist};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ClassifierMetric {
    #[default]
    Euclidean,
    Cosine,
}

/// Nearest-centroid (SimpleShot) rule: each class is represented by the
/// mean of its support rows and each query goes to the closest centroid.
/// Ties go to the smaller class index.
pub fn simpleshot_classify(
    support_z: &Matrix,
    support_y: &[usize],
    query_z: &Matrix,
    metric: ClassifierMetric,
) -> Result<Vec<usize>> {
    if support_z.rows() != support_y.len() || support_z.rows() == 0 {
        return Err(Error::Shape("support rows and labels disagree"));
    }
    if support_z.cols() != query_z.cols() {
        return Err(Error::Shape("support and query dimensions disagree"));
    }
    let classes = support_y.iter().max().map_or(0, |&m| m + 1);
    let d = support_z.cols();
    let mut centroids = Matrix::zeros(classes, d);
    let mut counts = alloc::vec![0usize; classes];
    for (row, &y) in support_z.iter_rows().zip(support_y) {
        centroids.row_mut(y).iter_mut().zip(row).for_each(|(c, v)| *c += v);
        counts[y] += 1;
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            centroids.row_mut(c).iter_mut().for_each(|v| *v /= cnt as f64);
        }
    }
    let present: Vec<usize> = (0..classes).filter(|&c| counts[c] > 0).collect();
    let centroid_norms: Vec<f64> = (0..classes).map(|c| norm(centroids.row(c))).collect();

    let predictions = query_z
        .iter_rows()
        .map(|q| {
            let q_norm = norm(q);
            let mut best = (f64::INFINITY, present[0]);
            for &c in &present {
                let dist = match metric {
                    ClassifierMetric::Euclidean => sq_dist(q, centroids.row(c)),
                    ClassifierMetric::Cosine => {
                        let denom = q_norm * centroid_norms[c];
                        if denom > 0.0 {
                            1.0 - dot(q, centroids.row(c)) / denom
                        } else {
                            1.0
                        }
                    }
                };
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            best.1
        })
        .collect();
    Ok(predictions)
}
