use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `y ≈ amplitude * m^(-exponent)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub exponent: f64,
    pub stderr_exponent: f64,
}

impl PowerLawFit {
    pub fn eval(&self, m: f64) -> f64 {
        self.amplitude * m.powf(-self.exponent)
    }
}

/// Ordinary least squares of `ln y` on `ln m`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::domain(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(m, y)) = points
        .iter()
        .find(|(m, y)| !(*m > 0.0 && *y > 0.0 && m.is_finite() && y.is_finite()))
    {
        return Err(Error::domain(format!(
            "power-law points must be positive and finite, got ({m}, {y})"
        )));
    }

    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(m, y)| (m.ln(), y.ln())).collect();
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain(
            "power-law fit needs at least two distinct m values",
        ));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();

    Ok(PowerLawFit {
        amplitude: intercept.exp(),
        exponent: -slope,
        stderr_exponent: stderr,
    })
}
