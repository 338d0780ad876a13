use crate::error::{Error, Result};

/// Patch-token grid of one image crop, with a per-patch foreground flag.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f32>,
    foreground: Vec<bool>,
}

impl PatchGrid {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f32>, foreground: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::invalid(format!("empty patch grid {rows}x{cols}x{dim}")));
        }
        if data.len() != rows * cols * dim {
            return Err(Error::DimMismatch {
                expected: rows * cols * dim,
                got: data.len(),
            });
        }
        if foreground.len() != rows * cols {
            return Err(Error::DimMismatch {
                expected: rows * cols,
                got: foreground.len(),
            });
        }
        Ok(PatchGrid {
            rows,
            cols,
            dim,
            data,
            foreground,
        })
    }

    /// Grid with every patch marked foreground.
    pub fn dense(rows: usize, cols: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(rows, cols, dim, data, vec![true; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn patch_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn foreground(&self) -> &[bool] {
        &self.foreground
    }

    pub fn token(&self, k: usize) -> &[f32] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_foreground(&self, k: usize) -> bool {
        self.foreground[k]
    }

    pub fn foreground_count(&self) -> usize {
        self.foreground.iter().filter(|&&f| f).count()
    }

    pub fn same_layout(&self, other: &PatchGrid) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.dim == other.dim
    }

    /// Mean of the foreground tokens.
    pub fn foreground_mean(&self) -> Result<Vec<f64>> {
        let mut acc = vec![0.0f64; self.dim];
        let mut n = 0usize;
        for k in (0..self.patch_count()).filter(|&k| self.foreground[k]) {
            for (a, &v) in acc.iter_mut().zip(self.token(k)) {
                *a += v as f64;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyForeground);
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        Ok(acc)
    }

    /// Inverse L2 norm of every token; background or zero tokens map to 0.
    pub fn inverse_token_norms(&self) -> Vec<f64> {
        (0..self.patch_count())
            .map(|k| {
                if !self.foreground[k] {
                    return 0.0;
                }
                let n = self.token(k).iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
                if n > 0.0 {
                    1.0 / n
                } else {
                    0.0
                }
            })
            .collect()
    }
}
