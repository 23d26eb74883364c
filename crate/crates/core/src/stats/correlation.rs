use serde::Serialize;

use super::{floor_p, mean, tail_p, Alternative};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided, from Student's t with n - 2 degrees of freedom.
    pub p_value: f64,
    pub p_below_floor: bool,
    pub n: usize,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "pearson inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData("pearson needs n >= 3".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance("pearson input is constant"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (x.len() - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        tail_p(t, df, Alternative::TwoSided)
    };
    let (p_value, p_below_floor) = floor_p(p);
    Ok(Correlation {
        r,
        p_value,
        p_below_floor,
        n: x.len(),
    })
}
