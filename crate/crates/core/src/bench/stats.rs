//! Order statistics over per-seed results.

/// Linearly interpolated quantile of the sorted sample (`q` in `[0, 1]`),
/// the usual "type 7" definition. `None` for an empty sample.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Middle order statistic; mean of the two middle ones for even `n`.
pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// `(lower quartile, median, upper quartile)`.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64, f64)> {
    Some((quantile(values, 0.25)?, quantile(values, 0.5)?, quantile(values, 0.75)?))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Coefficient of variation with the population standard deviation.
pub fn coefficient_of_variation(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if m == 0.0 {
        return None;
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    Some(var.sqrt() / m.abs())
}
