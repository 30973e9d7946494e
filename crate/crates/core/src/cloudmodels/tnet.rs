use crate::error::{Error, Result};

/// A learnable alignment transform, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl AlignmentMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid_argument(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_data("alignment matrix has non-finite entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        (0..d).for_each(|i| data[i * d + i] = 1.0);
        Self { rows: d, cols: d, data }
    }

    /// `I − TTᵀ`.
    fn defect(&self) -> Result<Vec<f64>> {
        if self.rows != self.cols {
            return Err(Error::invalid_argument(format!("alignment matrix must be square, got {}x{}", self.rows, self.cols)));
        }
        let d = self.rows;
        let t = &self.data;
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let tt: f64 = (0..d).map(|k| t[i * d + k] * t[j * d + k]).sum();
                a[i * d + j] = f64::from(u8::from(i == j)) - tt;
            }
        }
        Ok(a)
    }
}

/// Orthogonality penalty `‖I − TTᵀ‖²_F`.
pub fn tnet_regularizer(t: &AlignmentMatrix) -> Result<f64> {
    Ok(t.defect()?.iter().map(|v| v * v).sum())
}

/// Gradient of [`tnet_regularizer`] with respect to `T`: `−4 (I − TTᵀ) T`.
pub fn tnet_regularizer_grad(t: &AlignmentMatrix) -> Result<Vec<f64>> {
    let a = t.defect()?;
    let d = t.rows;
    let mut g = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            g[i * d + j] = -4.0 * (0..d).map(|k| a[i * d + k] * t.data[k * d + j]).sum::<f64>();
        }
    }
    Ok(g)
}
