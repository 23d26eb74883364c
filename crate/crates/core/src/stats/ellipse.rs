use serde::Serialize;

use crate::error::{Error, Result};

/// A k-sigma covariance ellipse. `axes` are full axis lengths
/// (2 * k * sqrt(eigenvalue)), major first; `rotation` is the angle of the
/// major axis from +x in radians, in (-pi/2, pi/2].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CovEllipse {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    pub rotation: f64,
    pub k_sigma: f64,
}

pub fn cov_ellipse(points: &[(f64, f64)], k_sigma: f64) -> Result<CovEllipse> {
    if points.len() < 3 {
        return Err(Error::InsufficientData("covariance ellipse needs n >= 3".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (a, b, c) = (sxx / (n - 1.0), sxy / (n - 1.0), syy / (n - 1.0));
    if a + c <= 0.0 {
        return Err(Error::DegenerateVariance("all points coincide"));
    }
    let half_trace = (a + c) / 2.0;
    let radius = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    let major = half_trace + radius;
    let minor = (half_trace - radius).max(0.0);
    let mut rotation = 0.5 * (2.0 * b).atan2(a - c);
    if rotation <= -std::f64::consts::FRAC_PI_2 {
        rotation += std::f64::consts::PI;
    }
    Ok(CovEllipse {
        center: (mx, my),
        axes: (2.0 * k_sigma * major.sqrt(), 2.0 * k_sigma * minor.sqrt()),
        rotation,
        k_sigma,
    })
}
