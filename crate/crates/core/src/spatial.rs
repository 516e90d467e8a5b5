//! Global Moran's I with analytic and permutation significance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{normal_sf, Matrix, RngState};

pub const DEFAULT_PERMUTATIONS: usize = 999;
pub const MIN_PERMUTATIONS: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionPoint {
    pub region: i64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightScheme {
    /// k nearest neighbours, symmetrized.
    Knn { k: usize },
    /// 1/d for pairs within `cutoff`.
    InverseDistance { cutoff: f64 },
    /// Cells on a unit grid sharing an edge.
    GridRook,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    pub n: usize,
    pub w: Matrix,
    pub w_sum: f64,
}

impl SpatialWeights {
    pub fn from_matrix(w: Matrix) -> Result<Self> {
        let n = w.rows();
        if w.cols() != n {
            return Err(Error::Shape(format!("weights must be square, got {:?}", w.shape())));
        }
        for i in 0..n {
            if w.get(i, i) != 0.0 {
                return Err(Error::Domain(format!("weight diagonal ({i},{i}) must be zero")));
            }
        }
        if w.data().iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Domain("weights must be finite and non-negative".into()));
        }
        let w_sum: f64 = w.data().iter().sum();
        if !(w_sum > 0.0) {
            return Err(Error::Degenerate("spatial weights sum to zero".into()));
        }
        Ok(Self { n, w, w_sum })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut w = self.w.clone();
        w.data_mut().iter_mut().for_each(|v| *v *= factor);
        Self::from_matrix(w)
    }
}

fn distance(a: &RegionPoint, b: &RegionPoint) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

pub fn weights_from_coordinates(
    coords: &[RegionPoint],
    scheme: WeightScheme,
    row_standardize: bool,
) -> Result<SpatialWeights> {
    let n = coords.len();
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 regions, got {n}")));
    }
    let mut w = Matrix::zeros(n, n);
    match scheme {
        WeightScheme::Knn { k } => {
            if k == 0 || k >= n {
                return Err(Error::Parameter(format!("knn k = {k} must be in 1..{n}")));
            }
            for i in 0..n {
                let mut others: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (distance(&coords[i], &coords[j]), j))
                    .collect();
                others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for &(_, j) in others.iter().take(k) {
                    w.set(i, j, 1.0);
                    w.set(j, i, 1.0);
                }
            }
        }
        WeightScheme::InverseDistance { cutoff } => {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let d = distance(&coords[i], &coords[j]);
                    if d == 0.0 {
                        return Err(Error::Degenerate(format!(
                            "regions {} and {} share coordinates",
                            coords[i].region, coords[j].region
                        )));
                    }
                    if d <= cutoff {
                        w.set(i, j, 1.0 / d);
                    }
                }
            }
        }
        WeightScheme::GridRook => {
            const TOL: f64 = 1e-9;
            for i in 0..n {
                for j in 0..n {
                    let dx = (coords[i].x - coords[j].x).abs();
                    let dy = (coords[i].y - coords[j].y).abs();
                    let edge = ((dx - 1.0).abs() < TOL && dy < TOL) || ((dy - 1.0).abs() < TOL && dx < TOL);
                    if edge {
                        w.set(i, j, 1.0);
                    }
                }
            }
        }
    }
    if row_standardize {
        for i in 0..n {
            let s: f64 = w.row(i).iter().sum();
            if s > 0.0 {
                w.row_mut(i).iter_mut().for_each(|v| *v /= s);
            }
        }
    }
    SpatialWeights::from_matrix(w)
}

fn check_values(values: &[f64], w: &SpatialWeights) -> Result<f64> {
    if values.len() != w.n {
        return Err(Error::Shape(format!(
            "{} values for {} regions",
            values.len(),
            w.n
        )));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    if !(ss > 0.0) {
        return Err(Error::Degenerate("all regions have the same value".into()));
    }
    Ok(mean)
}

fn statistic(values: &[f64], mean: f64, w: &SpatialWeights) -> f64 {
    let dev: Vec<f64> = values.iter().map(|x| x - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    let num: f64 = (0..w.n)
        .map(|i| dev[i] * w.w.row(i).iter().zip(&dev).map(|(wij, dj)| wij * dj).sum::<f64>())
        .sum();
    (w.n as f64 / w.w_sum) * num / denom
}

/// I = (N/W) · ΣΣ w_ij (x_i − x̄)(x_j − x̄) / Σ (x_i − x̄)².
pub fn morans_i(values: &[f64], w: &SpatialWeights) -> Result<f64> {
    let mean = check_values(values, w)?;
    Ok(statistic(values, mean, w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    #[serde(rename = "morans_i")]
    pub i: f64,
    pub expected: f64,
    pub variance: f64,
    pub z_score: f64,
    pub p_analytic: f64,
    pub p_permutation: f64,
    pub n_permutations: usize,
}

/// Variance of I under the normality assumption.
pub fn normal_variance(w: &SpatialWeights) -> f64 {
    let n = w.n as f64;
    let s0 = w.w_sum;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for i in 0..w.n {
        let mut row = 0.0;
        let mut col = 0.0;
        for j in 0..w.n {
            s1 += (w.w.get(i, j) + w.w.get(j, i)).powi(2);
            row += w.w.get(i, j);
            col += w.w.get(j, i);
        }
        s2 += (row + col).powi(2);
    }
    s1 *= 0.5;
    let expected = -1.0 / (n - 1.0);
    (n * n * s1 - n * s2 + 3.0 * s0 * s0) / ((n * n - 1.0) * s0 * s0) - expected * expected
}

/// Two-sided analytic and permutation tests of H₀: no spatial autocorrelation.
///
/// Permutations reassign the sorted value multiset to regions, so relabeling
/// regions (with the same seed) yields the same set of permuted statistics.
pub fn morans_significance(
    values: &[f64],
    w: &SpatialWeights,
    n_permutations: usize,
    seed: u64,
) -> Result<MoranResult> {
    if n_permutations < MIN_PERMUTATIONS {
        return Err(Error::Parameter(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {n_permutations}"
        )));
    }
    let mean = check_values(values, w)?;
    let i = statistic(values, mean, w);
    let n = w.n as f64;
    let expected = -1.0 / (n - 1.0);
    let variance = normal_variance(w);
    if !(variance > 0.0) {
        return Err(Error::Degenerate(format!("Moran variance {variance} is not positive")));
    }
    let z_score = (i - expected) / variance.sqrt();
    let p_analytic = (2.0 * normal_sf(z_score.abs())).min(1.0);

    let permuted = permutation_statistics(values, w, n_permutations, seed)?;
    let observed = (i - expected).abs();
    let tol = 1e-12 * observed.max(1.0);
    let extreme = permuted.iter().filter(|s| (*s - expected).abs() >= observed - tol).count();
    Ok(MoranResult {
        i,
        expected,
        variance,
        z_score,
        p_analytic,
        p_permutation: (1 + extreme) as f64 / (n_permutations + 1) as f64,
        n_permutations,
    })
}

/// The permuted statistics I* used by [`morans_significance`].
pub fn permutation_statistics(
    values: &[f64],
    w: &SpatialWeights,
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mean = check_values(values, w)?;
    // rank of each region's value; ties keep input order
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut rank = vec![0usize; values.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let mut rng = RngState::new(seed);
    let mut perm: Vec<usize> = (0..values.len()).collect();
    let mut shuffled = vec![0.0; values.len()];
    let mut out = Vec::with_capacity(n_permutations);
    for _ in 0..n_permutations {
        rng.shuffle(&mut perm);
        for (region, slot) in shuffled.iter_mut().enumerate() {
            *slot = sorted[perm[rank[region]]];
        }
        out.push(statistic(&shuffled, mean, w));
    }
    Ok(out)
}
