use super::MetricError;

/// Population moments. Skewness and kurtosis are `None` when the standard
/// deviation is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: Option<f64>,
    /// Non-excess kurtosis (`m4 / m2²`; 3 for a normal distribution).
    pub kurtosis: Option<f64>,
}

pub fn distribution_moments(values: &[f64]) -> Result<Moments, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in values {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std_dev = m2.sqrt();
    let degenerate = values.iter().all(|&x| x == values[0]);
    let (skewness, kurtosis) = if degenerate {
        (None, None)
    } else {
        (Some(m3 / (m2 * std_dev)), Some(m4 / (m2 * m2)))
    };
    Ok(Moments {
        mean,
        std_dev: if degenerate { 0.0 } else { std_dev },
        skewness,
        kurtosis,
    })
}

/// Gini coefficient `Σᵢⱼ|xᵢ−xⱼ| / (2n²·mean)` via the sorted form
/// `Σᵢ (2i − n − 1)·x₍ᵢ₎ / (n·Σx)`.
pub fn gini(values: &[f64]) -> Result<f64, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(MetricError::Negative);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return Err(MetricError::AllZero);
    }
    let n = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok((weighted / (n * total)).max(0.0))
}

/// `|E| / (|V|·(|V|−1))`.
pub fn density_from_counts(nodes: u64, edges: u64) -> Result<f64, MetricError> {
    if nodes < 2 {
        return Err(MetricError::TooFewNodes {
            needed: 2,
            found: nodes as usize,
        });
    }
    Ok(edges as f64 / (nodes as f64 * (nodes - 1) as f64))
}
