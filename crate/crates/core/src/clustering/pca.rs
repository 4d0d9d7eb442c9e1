//! Principal component analysis by cyclic Jacobi diagonalization of the
//! sample covariance matrix.

use crate::error::{Error, Result};

use super::features::FeatureMatrix;

#[derive(Debug, Clone)]
pub struct Pca {
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors matching `eigenvalues`; the largest-magnitude entry of each is positive.
    pub components: Vec<Vec<f64>>,
    /// One row per input row, `n_components` columns.
    pub projections: Vec<Vec<f64>>,
}

/// Symmetric eigendecomposition; returns eigenvalues and column-major
/// eigenvectors (`vectors[k]` is the k-th eigenvector), unsorted.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return (vec![0.0; n], transpose(&v));
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    (values, transpose(&v))
}

fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let w = m.first().map_or(0, Vec::len);
    (0..w).map(|j| (0..n).map(|i| m[i][j]).collect()).collect()
}

/// Sample covariance (divisor `n − 1`) of the centered columns.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let means: Vec<f64> = (0..d).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - means[i];
            for j in i..d {
                cov[i][j] += di * (r[j] - means[j]);
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

/// Project the (centered) rows onto the `n_components` leading principal
/// axes. When fewer feature columns than components exist, the missing
/// projections are zero.
pub fn pca_project(m: &FeatureMatrix, n_components: usize) -> Result<Pca> {
    let n = m.n_rows();
    if n < n_components {
        return Err(Error::InsufficientData(format!(
            "PCA to {n_components} components needs at least as many rows, got {n}"
        )));
    }
    let d = m.n_cols();
    let cov = covariance(&m.rows);
    let (values, vectors) = jacobi_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let components: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut v = vectors[i].clone();
            let lead = v
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (k, x)| if x.abs() > acc.1.abs() + 1e-12 { (k, *x) } else { acc })
                .1;
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();

    let means: Vec<f64> = (0..d).map(|c| m.rows.iter().map(|r| r[c]).sum::<f64>() / n.max(1) as f64).collect();
    let projections = m
        .rows
        .iter()
        .map(|r| {
            (0..n_components)
                .map(|k| match components.get(k) {
                    Some(v) => v.iter().zip(r.iter().zip(&means)).map(|(w, (x, mu))| w * (x - mu)).sum(),
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    Ok(Pca {
        eigenvalues,
        components,
        projections,
    })
}
