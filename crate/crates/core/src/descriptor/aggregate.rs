use super::grid::PatchGrid;
use crate::error::{Error, Result};

pub(crate) fn normalize(v: &[f64]) -> Result<Vec<f32>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::ZeroNormAggregate);
    }
    Ok(v.iter().map(|x| (x / n) as f32).collect())
}

/// Foreground feature averaging: per-view mean of foreground tokens, mean over
/// views, then L2 normalization.
pub fn ffa_aggregate<'a, I>(views: I) -> Result<Vec<f32>>
where
    I: IntoIterator<Item = &'a PatchGrid>,
{
    let mut acc: Option<Vec<f64>> = None;
    let mut count = 0usize;
    for grid in views {
        let mean = grid.foreground_mean()?;
        match acc.as_mut() {
            None => acc = Some(mean),
            Some(a) => {
                if a.len() != mean.len() {
                    return Err(Error::DimMismatch {
                        expected: a.len(),
                        got: mean.len(),
                    });
                }
                a.iter_mut().zip(&mean).for_each(|(x, y)| *x += y);
            }
        }
        count += 1;
    }
    let mut acc = acc.ok_or_else(|| Error::invalid("no views to aggregate"))?;
    acc.iter_mut().for_each(|x| *x /= count as f64);
    normalize(&acc)
}

/// Mean of per-view CLS tokens, L2 normalized.
pub fn cls_aggregate<T: AsRef<[f32]>>(tokens: &[T]) -> Result<Vec<f32>> {
    let first = tokens.first().ok_or_else(|| Error::invalid("no CLS tokens to aggregate"))?;
    let dim = first.as_ref().len();
    let mut acc = vec![0.0f64; dim];
    for t in tokens {
        let t = t.as_ref();
        if t.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: t.len(),
            });
        }
        acc.iter_mut().zip(t).for_each(|(a, &v)| *a += v as f64);
    }
    acc.iter_mut().for_each(|a| *a /= tokens.len() as f64);
    normalize(&acc)
}
