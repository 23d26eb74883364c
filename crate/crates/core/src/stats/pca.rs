use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Top three principal components of mean-centered data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pca3 {
    pub mean: Vec<f64>,
    /// Three orthonormal rows of length `dim`.
    pub components: Vec<Vec<f64>>,
    /// Sample-covariance eigenvalues, nonincreasing.
    pub explained_variance: [f64; 3],
    pub explained_ratio: [f64; 3],
    pub projected: Vec<[f64; 3]>,
}

/// PCA by symmetric eigendecomposition. When there are fewer vectors than
/// dimensions the n x n Gram matrix is decomposed instead of the dim x dim
/// covariance; both share their nonzero spectrum.
pub fn pca3<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Pca3> {
    let n = vectors.len();
    if n < 4 {
        return Err(Error::InsufficientData("pca3 needs at least 4 vectors".into()));
    }
    let dim = vectors[0].as_ref().len();
    if dim < 3 {
        return Err(Error::InsufficientData("pca3 needs dim >= 3".into()));
    }
    if let Some(v) = vectors.iter().find(|v| v.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: v.as_ref().len(),
        });
    }
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, dim, |i, j| vectors[i].as_ref()[j] - mean[j]);
    let scale = (n - 1) as f64;

    let (values, mut components) = if n <= dim {
        let gram = &x * x.transpose();
        let (vals, vecs) = sorted_eigen(gram);
        let top = vals[0].max(f64::MIN_POSITIVE);
        let mut comps = Vec::new();
        let mut kept = Vec::new();
        for (k, &val) in vals.iter().enumerate().take(3) {
            if val > 1e-12 * top {
                let v: DVector<f64> = x.transpose() * vecs.column(k) / val.sqrt();
                comps.push(v);
                kept.push(val / scale);
            }
        }
        (kept, comps)
    } else {
        let cov = x.transpose() * &x / scale;
        let (vals, vecs) = sorted_eigen(cov);
        let comps: Vec<DVector<f64>> = (0..3).map(|k| vecs.column(k).into_owned()).collect();
        (vals[..3].to_vec(), comps)
    };

    let mut explained = [0.0; 3];
    for (slot, v) in explained.iter_mut().zip(&values) {
        *slot = v.max(0.0);
    }
    // Directions with no variance: complete to an orthonormal triple.
    let mut basis = 0;
    while components.len() < 3 {
        let mut e = DVector::zeros(dim);
        e[basis] = 1.0;
        basis += 1;
        for c in &components {
            let proj = c.dot(&e);
            e -= c * proj;
        }
        let norm = e.norm();
        if norm > 0.5 {
            components.push(e / norm);
        }
    }
    for c in &mut components {
        let (imax, _) = c
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        if c[imax] < 0.0 {
            *c = -c.clone();
        }
    }

    let total = x.iter().map(|v| v * v).sum::<f64>() / scale;
    let mut ratio = [0.0; 3];
    if total > 0.0 {
        for k in 0..3 {
            ratio[k] = explained[k] / total;
        }
    }
    let projected = (0..n)
        .map(|i| {
            let row = x.row(i);
            let mut p = [0.0; 3];
            for (k, c) in components.iter().enumerate() {
                p[k] = row.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            }
            p
        })
        .collect();
    Ok(Pca3 {
        mean,
        components: components.iter().map(|c| c.iter().copied().collect()).collect(),
        explained_variance: explained,
        explained_ratio: ratio,
        projected,
    })
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (vals, vecs)
}
