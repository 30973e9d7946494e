use crate::error::{Error, Result};

/// Pearson correlation of every feature column against every metric column.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    pub feature_names: Vec<String>,
    pub metric_names: Vec<String>,
    /// `r[f][m]`; `None` when either column is constant.
    pub r: Vec<Vec<Option<f64>>>,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn correlation_table(features: &[(String, Vec<f64>)], metrics: &[(String, Vec<f64>)]) -> Result<CorrelationTable> {
    let n = features.first().or(metrics.first()).map_or(0, |c| c.1.len());
    if features.iter().chain(metrics).any(|c| c.1.len() != n) {
        return Err(Error::invalid_data("correlation columns have differing lengths"));
    }
    if n < 3 {
        return Err(Error::invalid_data(format!("correlation needs at least 3 objects, got {n}")));
    }
    if features.iter().chain(metrics).flat_map(|c| &c.1).any(|v| !v.is_finite()) {
        return Err(Error::invalid_data("non-finite value in correlation input"));
    }
    Ok(CorrelationTable {
        feature_names: features.iter().map(|f| f.0.clone()).collect(),
        metric_names: metrics.iter().map(|m| m.0.clone()).collect(),
        r: features.iter().map(|f| metrics.iter().map(|m| pearson(&f.1, &m.1)).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str, v: &[f64]) -> (String, Vec<f64>) {
        (name.to_string(), v.to_vec())
    }

    #[test]
    fn hand_value() {
        // Σdxdy = 6, Σdx² = 10, Σdy² = 6
        let t = correlation_table(&[col("x", &[1.0, 2.0, 3.0, 4.0, 5.0])], &[col("y", &[2.0, 4.0, 5.0, 4.0, 5.0])]).unwrap();
        assert!((t.r[0][0].unwrap() - 6.0 / 60f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn perfect_constant_and_errors() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let t = correlation_table(
            &[col("x", &x), col("c", &[2.0; 4])],
            &[col("up", &[3.0, 5.0, 7.0, 9.0]), col("down", &[-1.0, -2.0, -3.0, -4.0])],
        )
        .unwrap();
        assert_eq!(t.r[0], vec![Some(1.0), Some(-1.0)]);
        assert_eq!(t.r[1], vec![None, None]);
        assert!(correlation_table(&[col("x", &[1.0, 2.0])], &[col("y", &[1.0, 2.0])]).is_err());
        assert!(correlation_table(&[col("x", &x)], &[col("y", &[1.0, 2.0, 3.0])]).is_err());
    }
}
