use crate::error::{Error, Result};

/// Per sample, the largest `|true - estimate|` over all modules.
pub fn max_error_profile(truth: &[Vec<f64>], estimate: &[Vec<f64>]) -> Result<Vec<f64>> {
    if truth.len() != estimate.len() {
        return Err(Error::Usage(format!(
            "truth has {} samples, estimate has {}",
            truth.len(),
            estimate.len()
        )));
    }
    truth
        .iter()
        .zip(estimate)
        .enumerate()
        .map(|(k, (x, xh))| {
            if x.len() != xh.len() {
                return Err(Error::Usage(format!(
                    "sample {k}: {} true values, {} estimates",
                    x.len(),
                    xh.len()
                )));
            }
            Ok(x.iter().zip(xh).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })
        .collect()
}

/// Mean of `|true - estimate|` over every sample and module.
pub fn mean_abs_error(truth: &[Vec<f64>], estimate: &[Vec<f64>]) -> Result<f64> {
    max_error_profile(truth, estimate)?;
    let (sum, count) = truth
        .iter()
        .zip(estimate)
        .flat_map(|(x, xh)| x.iter().zip(xh))
        .fold((0.0, 0usize), |(s, c), (a, b)| (s + (a - b).abs(), c + 1));
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

pub fn window_mean(series: &[f64]) -> Option<f64> {
    (!series.is_empty()).then(|| series.iter().sum::<f64>() / series.len() as f64)
}

/// `1 - mean(err_comp)/mean(err_conv)` over aligned windows. `Ok(None)` when
/// the conventional error is zero and the ratio is undefined.
pub fn improvement_ratio(err_conv: &[f64], err_comp: &[f64]) -> Result<Option<f64>> {
    if err_conv.len() != err_comp.len() {
        return Err(Error::Usage(format!(
            "error series lengths differ: {} vs {}",
            err_conv.len(),
            err_comp.len()
        )));
    }
    let (Some(conv), Some(comp)) = (window_mean(err_conv), window_mean(err_comp)) else {
        return Ok(None);
    };
    Ok((conv > 0.0).then(|| 1.0 - comp / conv))
}
