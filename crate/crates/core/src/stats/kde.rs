use serde::Serialize;

use super::variance;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KdeCurve {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Scott's rule: sample standard deviation times n^(-1/5).
pub fn scott_bandwidth(sample: &[f64]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::InsufficientData("bandwidth needs n >= 2".into()));
    }
    let h = variance(sample, 1).sqrt() * (sample.len() as f64).powf(-0.2);
    if h > 0.0 {
        Ok(h)
    } else {
        Err(Error::DegenerateVariance("constant sample has no Scott bandwidth"))
    }
}

/// Gaussian kernel density evaluated on `grid`. `bandwidth` defaults to
/// Scott's rule.
pub fn kde(sample: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<KdeCurve> {
    if sample.len() < 2 {
        return Err(Error::InsufficientData("kde needs n >= 2".into()));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive"))),
        None => scott_bandwidth(sample)?,
    };
    let norm = 1.0 / (sample.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&g| {
            sample
                .iter()
                .map(|&s| {
                    let u = (g - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(KdeCurve {
        bandwidth: h,
        grid: grid.to_vec(),
        density,
    })
}

/// KDE on an evenly spaced grid spanning the sample plus `pad` bandwidths.
pub fn kde_auto_grid(sample: &[f64], points: usize, pad: f64, bandwidth: Option<f64>) -> Result<KdeCurve> {
    if sample.is_empty() {
        return Err(Error::EmptySample("kde"));
    }
    let h = match bandwidth {
        Some(h) => h,
        None => scott_bandwidth(sample)?,
    };
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min) - pad * h;
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad * h;
    let points = points.max(2);
    let step = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    kde(sample, &grid, Some(h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid(c: &KdeCurve) -> f64 {
        c.grid
            .windows(2)
            .zip(c.density.windows(2))
            .map(|(g, d)| (g[1] - g[0]) * (d[0] + d[1]) / 2.0)
            .sum()
    }

    #[test]
    fn integrates_to_one() {
        let sample = [0.1, 0.4, 0.35, -0.2, 0.9, 1.3, 0.5];
        let c = kde_auto_grid(&sample, 2001, 8.0, None).unwrap();
        assert!((trapezoid(&c) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn symmetric_sample_gives_symmetric_density() {
        let sample = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let grid: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.1).collect();
        let c = kde(&sample, &grid, None).unwrap();
        let n = c.density.len();
        for i in 0..n {
            assert!((c.density[i] - c.density[n - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_value_with_tiny_bandwidth_peaks_sharply() {
        let sample = [0.3; 5];
        let grid = [0.0, 0.29, 0.3, 0.31, 0.6];
        let c = kde(&sample, &grid, Some(1e-3)).unwrap();
        let peak = c.density[2];
        assert!(peak > 300.0);
        assert!(c.density[0] < 1e-9 && c.density[4] < 1e-9);
        assert!(c.density[1] < peak * 1e-6);
        assert!(matches!(kde(&sample, &grid, None), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn mixture_matches_double_loop() {
        let sample = [-1.0, -0.9, -1.2, 2.0, 2.2, 1.9, 2.1];
        let grid: Vec<f64> = (0..31).map(|i| -3.0 + i as f64 * 0.25).collect();
        let h = 0.4;
        let c = kde(&sample, &grid, Some(h)).unwrap();
        for (g, d) in grid.iter().zip(&c.density) {
            let mut acc = 0.0;
            for s in &sample {
                let u = (g - s) / h;
                acc += (-u * u / 2.0).exp() / ((2.0 * std::f64::consts::PI).sqrt() * h);
            }
            assert!((acc / sample.len() as f64 - d).abs() < 1e-14);
        }
    }
}
