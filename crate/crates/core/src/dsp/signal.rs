use super::{DspError, Result};

/// Standardizes to mean 0 and population variance 1. A (numerically)
/// constant input maps to all zeros.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(DspError::TooFewValues(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|v| (v - mean) / std).collect())
}

/// Linear interpolation of a uniformly sampled signal (`values[i]` at time
/// `i / rate` seconds) at arbitrary query times in seconds. Queries outside
/// the sampled span clamp to the end values.
pub fn interpolate_at(values: &[f64], rate: f64, times: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(DspError::EmptySignal);
    }
    if !(rate > 0.0) {
        return Err(DspError::InvalidRate(rate));
    }
    let last = values.len() - 1;
    Ok(times
        .iter()
        .map(|&t| {
            let pos = t * rate;
            if pos <= 0.0 {
                return values[0];
            }
            let i = pos.floor() as usize;
            if i >= last {
                return values[last];
            }
            let frac = pos - i as f64;
            if frac == 0.0 {
                values[i]
            } else {
                values[i] + (values[i + 1] - values[i]) * frac
            }
        })
        .collect())
}

/// Resamples onto a uniform grid at `to_rate` spanning the same duration
/// `(n−1)/from_rate`, by linear interpolation.
pub fn resample_linear(values: &[f64], from_rate: f64, to_rate: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(DspError::EmptySignal);
    }
    for r in [from_rate, to_rate] {
        if !(r > 0.0 && r.is_finite()) {
            return Err(DspError::InvalidRate(r));
        }
    }
    if from_rate == to_rate {
        return Ok(values.to_vec());
    }
    let span = (values.len() - 1) as f64;
    let count = (span * to_rate / from_rate + 1e-9).floor() as usize + 1;
    let last = values.len() - 1;
    // Output j sits at input position j·from/to.
    Ok((0..count)
        .map(|j| {
            let pos = j as f64 * from_rate / to_rate;
            let i = (pos.floor() as usize).min(last);
            let frac = pos - i as f64;
            if i == last || frac == 0.0 {
                values[i]
            } else {
                values[i] + (values[i + 1] - values[i]) * frac
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zscore_examples() {
        let z = zscore(&[1.0, 2.0, 3.0]).unwrap();
        let mean = z.iter().sum::<f64>() / 3.0;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6);
        assert_eq!(zscore(&[4.2; 7]).unwrap(), vec![0.0; 7]);
        assert_eq!(zscore(&[0.1; 5]).unwrap(), vec![0.0; 5]);
        assert!(zscore(&[1.0]).is_err());
    }

    #[test]
    fn zscore_is_idempotent() {
        let v = [3.0, -1.0, 4.0, 1.5, 9.0, 2.6];
        let once = zscore(&v).unwrap();
        let twice = zscore(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_examples() {
        let v = [1.0, 5.0, -2.0, 3.0];
        assert_eq!(resample_linear(&v, 50.0, 50.0).unwrap(), v.to_vec());
        assert!(resample_linear(&[2.5; 10], 50.0, 37.0).unwrap().iter().all(|&x| x == 2.5));
        let ramp: Vec<f64> = (0..50).map(|i| i as f64 * 0.02).collect();
        let up = resample_linear(&ramp, 50.0, 100.0).unwrap();
        assert_eq!(up.len(), 99);
        for (j, v) in up.iter().enumerate() {
            assert!((v - j as f64 * 0.01).abs() < 1e-12);
        }
        assert!(resample_linear(&[], 1.0, 2.0).is_err());
    }

    #[test]
    fn interpolation_clamps_and_interpolates() {
        let v = [0.0, 10.0, 20.0];
        let got = interpolate_at(&v, 2.0, &[-1.0, 0.25, 0.5, 0.75, 5.0]).unwrap();
        assert_eq!(got, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
    }
}
