use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{eig_sym, Matrix};

pub const PCA_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub schema_version: u32,
    /// Source column names, when fitted from a frame.
    #[serde(default)]
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    /// `d × k`, orthonormal columns in descending eigenvalue order.
    pub components: Matrix,
    /// Retained eigenvalues of the sample covariance.
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub k: usize,
}

impl PcaModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: PcaModel = serde_json::from_str(text)?;
        if m.schema_version != PCA_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "PCA schema version {} unsupported",
                m.schema_version
            )));
        }
        if m.components.rows() != m.mean.len() || m.components.cols() != m.k {
            return Err(Error::Format("PCA component shape disagrees with mean/k".into()));
        }
        Ok(m)
    }
}

/// Sample covariance (denominator n − 1) of the rows of `data`.
pub fn covariance(data: &Matrix) -> (Vec<f64>, Matrix) {
    let (n, d) = data.shape();
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, x) in mean.iter_mut().zip(data.row(r)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = Matrix::zeros(d, d);
    for r in 0..n {
        let centered: Vec<f64> = data.row(r).iter().zip(&mean).map(|(x, m)| x - m).collect();
        cov.add_outer(&centered, &centered);
    }
    cov.data_mut().iter_mut().for_each(|v| *v /= (n - 1) as f64);
    (mean, cov)
}

/// Fits PCA and keeps the fewest components whose cumulative explained
/// variance reaches `variance_threshold`.
pub fn pca_fit(data: &Matrix, variance_threshold: f64) -> Result<PcaModel> {
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::Parameter(format!(
            "variance threshold {variance_threshold} outside (0, 1]"
        )));
    }
    if data.rows() < 2 || data.cols() == 0 {
        return Err(Error::Parameter(format!(
            "PCA needs at least 2 rows and 1 column, got {}x{}",
            data.rows(),
            data.cols()
        )));
    }
    let (mean, cov) = covariance(data);
    let (values, vectors) = eig_sym(&cov)?;
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let k = if total > 0.0 {
        let target = variance_threshold * total * (1.0 - 1e-12);
        let mut acc = 0.0;
        clipped
            .iter()
            .position(|v| {
                acc += v;
                acc >= target
            })
            .map_or(clipped.len(), |p| p + 1)
    } else {
        1
    };
    let d = data.cols();
    let mut components = Matrix::zeros(d, k);
    for c in 0..k {
        for r in 0..d {
            components.set(r, c, vectors.get(r, c));
        }
    }
    Ok(PcaModel {
        schema_version: PCA_SCHEMA_VERSION,
        columns: Vec::new(),
        mean,
        explained_variance: values[..k].to_vec(),
        explained_variance_ratio: clipped[..k]
            .iter()
            .map(|v| if total > 0.0 { v / total } else { 0.0 })
            .collect(),
        components,
        k,
    })
}

/// Projects centered rows onto the retained components.
pub fn pca_transform(x: &Matrix, model: &PcaModel) -> Result<Matrix> {
    if x.cols() != model.mean.len() {
        return Err(Error::Schema(format!(
            "PCA fitted on {} columns, got {}",
            model.mean.len(),
            x.cols()
        )));
    }
    let mut centered = x.clone();
    for r in 0..x.rows() {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&model.mean) {
            *v -= m;
        }
    }
    centered.mat_mul(&model.components)
}

/// Maps scores back to the original feature space.
pub fn pca_reconstruct(scores: &Matrix, model: &PcaModel) -> Result<Matrix> {
    let mut out = scores.mat_mul(&model.components.transpose())?;
    for r in 0..out.rows() {
        for (v, m) in out.row_mut(r).iter_mut().zip(&model.mean) {
            *v += m;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    #[test]
    fn rank_one_line() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.3, i as f64 * 0.6]).collect();
        let m = pca_fit(&Matrix::from_rows(&rows).unwrap(), 0.95).unwrap();
        assert_eq!(m.k, 1);
        let s5 = 5f64.sqrt();
        assert!((m.components.get(0, 0) - 1.0 / s5).abs() < 1e-12);
        assert!((m.components.get(1, 0) - 2.0 / s5).abs() < 1e-12);
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_needs_all_components() {
        let mut rng = RngState::new(21);
        let rows: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.standard_normal(), rng.standard_normal()]).collect();
        let m = pca_fit(&Matrix::from_rows(&rows).unwrap(), 1.0).unwrap();
        assert_eq!(m.k, 2);
    }

    #[test]
    fn threshold_validation() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(pca_fit(&x, 0.0).is_err());
        assert!(pca_fit(&x, 1.5).is_err());
        assert!(pca_fit(&Matrix::from_rows(&[vec![1.0]]).unwrap(), 0.9).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = RngState::new(2);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.uniform(0.0, 1.0)).collect()).collect();
        let m = pca_fit(&Matrix::from_rows(&rows).unwrap(), 0.9).unwrap();
        assert_eq!(PcaModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
