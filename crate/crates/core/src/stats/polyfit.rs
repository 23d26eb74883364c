use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares polynomial; `coefficients[k]` multiplies `x^k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolyFit {
    pub coefficients: Vec<f64>,
    pub rss: f64,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PolyFit2 {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub rss: f64,
}

impl PolyFit2 {
    pub fn eval(&self, x: f64) -> f64 {
        self.c0 + x * (self.c1 + x * self.c2)
    }
}

/// Least-squares fit via Householder QR of the Vandermonde design.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<PolyFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "polyfit inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(Error::InsufficientData(format!(
            "degree-{degree} fit needs {} distinct x values, got {}",
            degree + 1,
            distinct.len()
        )));
    }
    let p = degree + 1;
    let design = DMatrix::from_fn(x.len(), p, |i, j| x[i].powi(j as i32));
    let target = DVector::from_column_slice(y);
    let qr = design.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.transpose() * &target;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::InsufficientData("rank-deficient polynomial design".into()))?;
    let residuals = target - design * &coef;
    Ok(PolyFit {
        coefficients: coef.iter().copied().collect(),
        rss: residuals.norm_squared(),
    })
}

pub fn polyfit2(x: &[f64], y: &[f64]) -> Result<PolyFit2> {
    let fit = polyfit(x, y, 2)?;
    Ok(PolyFit2 {
        c0: fit.coefficients[0],
        c1: fit.coefficients[1],
        c2: fit.coefficients[2],
        rss: fit.rss,
    })
}
