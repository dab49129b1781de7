//! Ordinary least squares on per-discount means.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::experiment::ExperimentRow;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; `NaN` with only two points.
    pub stderr: f64,
    /// The `(x, y)` pairs the line was fitted to.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares line through `points`.
pub fn ols(points: &[(f64, f64)]) -> Result<LineFit> {
    let k = points.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least two points, got {k}")));
    }
    let kf = k as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) || !sxx.is_finite() {
        return Err(Error::InvalidArgument("x values have no spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if k > 2 {
        let ssr: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (ssr / (kf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(LineFit {
        slope,
        intercept,
        stderr,
        points: points.to_vec(),
    })
}

/// Averages `log_err` per discount, then fits it against `log_complexity`.
pub fn fit_loglog_slope(rows: &[ExperimentRow]) -> Result<LineFit> {
    let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for row in rows {
        if !row.log_err.is_finite() {
            continue;
        }
        // bit order equals numeric order for positive floats
        let e = groups.entry(row.gamma.to_bits()).or_insert((row.log_complexity, 0.0, 0));
        e.1 += row.log_err;
        e.2 += 1;
    }
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two distinct discounts, got {}",
            groups.len()
        )));
    }
    let points: Vec<(f64, f64)> = groups.values().map(|&(x, s, c)| (x, s / c as f64)).collect();
    ols(&points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn row(gamma: f64, log_err: f64) -> ExperimentRow {
        ExperimentRow {
            gamma,
            n: 1,
            trial: 0,
            err_linf: log_err.exp(),
            log_complexity: (1.0 / (1.0 - gamma)).ln(),
            log_err,
        }
    }

    #[test]
    fn exact_line() {
        let pts: Vec<_> = (0..6).map(|i| (i as f64, -0.5 * i as f64 + 2.0)).collect();
        let fit = ols(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 2.0).abs() < 1e-14);
        assert!(fit.stderr.abs() < 1e-7);
    }

    #[test]
    fn two_points_interpolate() {
        let fit = ols(&[(1.0, 3.0), (3.0, 7.0)]).unwrap();
        assert_eq!(fit.slope, 2.0);
        assert_eq!(fit.intercept, 1.0);
        assert!(fit.stderr.is_nan());
    }

    #[test]
    fn degenerate_inputs() {
        assert!(ols(&[(1.0, 1.0)]).is_err());
        assert!(ols(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(fit_loglog_slope(&[row(0.9, 1.0), row(0.9, 2.0)]).is_err());
    }

    #[test]
    fn averages_per_discount() {
        let rows = vec![row(0.8, 1.0), row(0.8, 3.0), row(0.9, 0.0), row(0.9, 2.0), row(0.9, f64::NEG_INFINITY)];
        let fit = fit_loglog_slope(&rows).unwrap();
        assert_eq!(fit.points.len(), 2);
        assert_eq!(fit.points[0].1, 2.0);
        assert_eq!(fit.points[1].1, 1.0);
        let dx = 10f64.ln() - 5f64.ln();
        assert!((fit.slope + 1.0 / dx).abs() < 1e-12);
    }

    #[test]
    fn stderr_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let xs: Vec<f64> = (0..8).map(|i| 1.0 + 0.4 * i as f64).collect();
        let covered = (0..400)
            .filter(|_| {
                let pts: Vec<_> = xs.iter().map(|&x| (x, -0.45 * x + 1.0 + noise.sample(&mut rng))).collect();
                let fit = ols(&pts).unwrap();
                (fit.slope + 0.45).abs() <= 2.0 * fit.stderr
            })
            .count();
        // t(6) puts about 90% inside two standard errors
        let rate = covered as f64 / 400.0;
        assert!((0.84..=0.96).contains(&rate), "coverage {rate}");
    }
}
