use alloc::vec;

use crate::geometry::l2_normalize_rows;
use crate::math::sqrt;
use crate::{Error, Matrix, Result};

/// Parameter-free embeddings used as comparison points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Baseline {
    /// Raw features.
    None,
    /// Rows scaled to unit norm.
    L2,
    /// Columns centered on the episode mean, then rows scaled to unit norm.
    CL2,
    /// Each row standardized across its own features (population std).
    ZN,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::None => "none",
            Baseline::L2 => "l2",
            Baseline::CL2 => "cl2",
            Baseline::ZN => "zn",
        }
    }
}

pub fn baseline_embed(x: &Matrix, method: Baseline) -> Result<Matrix> {
    match method {
        Baseline::None => Ok(x.clone()),
        Baseline::L2 => l2_normalize_rows(x),
        Baseline::CL2 => {
            if x.rows() < 2 {
                return Err(Error::InvalidParameter {
                    name: "n",
                    reason: "centering needs at least two rows",
                });
            }
            let mut mean = vec![0.0; x.cols()];
            for r in x.iter_rows() {
                mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
            }
            let n = x.rows() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            let centered = Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - mean[j]);
            l2_normalize_rows(&centered)
        }
        Baseline::ZN => {
            let k = x.cols();
            if k < 2 {
                return Err(Error::InvalidParameter {
                    name: "k",
                    reason: "row standardization needs at least two features",
                });
            }
            let mut out = x.clone();
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                let mean = row.iter().sum::<f64>() / k as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64;
                let sd = sqrt(var);
                if sd == 0.0 || !(sd > 1e-12 * mean.abs()) {
                    return Err(Error::ZeroVariance(i));
                }
                row.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            }
            Ok(out)
        }
    }
}
