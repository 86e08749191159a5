use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Errors at or below this level carry no usable rate information.
pub const NOISE_FLOOR: f64 = 1e-9;

/// Least-squares line through (log x, log y).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub log_c: f64,
    pub r_squared: f64,
}

/// Fits y ≈ C·x^slope. Fails with `DegenerateFit` when fewer than three rows
/// remain, when any value is non-positive, when every y sits below
/// [`NOISE_FLOOR`], or when the y values do not vary.
pub fn fit_power_law(rows: &[(f64, f64)]) -> Result<PowerLawFit> {
    if rows.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} rows, need at least 3", rows.len())));
    }
    if rows.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        if rows.iter().all(|&(_, y)| y.abs() <= NOISE_FLOOR) {
            return Err(Error::DegenerateFit("all values below the noise floor".into()));
        }
        return Err(Error::DegenerateFit("non-positive or non-finite entries".into()));
    }
    if rows.iter().all(|&(_, y)| y <= NOISE_FLOOR) {
        return Err(Error::DegenerateFit("all values below the noise floor".into()));
    }
    let n = rows.len() as f64;
    let lx: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("abscissae coincide".into()));
    }
    if syy <= 1e-24 * n {
        return Err(Error::DegenerateFit("values do not vary".into()));
    }
    let slope = sxy / sxx;
    let log_c = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - log_c - slope * a).powi(2))
        .sum();
    Ok(PowerLawFit {
        slope,
        log_c,
        r_squared: 1.0 - ss_res / syy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_quadratic() {
        let fit = fit_power_law(&[(1.0, 1.0), (2.0, 4.0), (4.0, 16.0)]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
        assert!(fit.log_c.abs() < 1e-14);
    }

    #[test]
    fn constant_rows_are_degenerate() {
        let err = fit_power_law(&[(1.0, 0.3), (2.0, 0.3), (4.0, 0.3)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateFit(_)));
        let err = fit_power_law(&[(1.0, 1e-12), (2.0, 3e-12), (4.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateFit(_)));
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn noisy_synthetic_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let x = 0.01 * 1.5f64.powi(i);
                let noise = 1.0 + 0.01 * rng.gen_range(-1.0..1.0);
                (x, 3.7 * x.powf(1.5) * noise)
            })
            .collect();
        let fit = fit_power_law(&rows).unwrap();
        assert!((fit.slope - 1.5).abs() < 0.05);
        assert!((fit.log_c - 3.7f64.ln()).abs() < 0.05);
    }
}
