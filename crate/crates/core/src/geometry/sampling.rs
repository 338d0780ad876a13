//! Deterministic super-Fibonacci spiral sampling of SO(3).

use std::f64::consts::PI;

use super::rotation::Rotation;
use crate::error::{Error, Result};

const PHI: f64 = std::f64::consts::SQRT_2;
/// Real root of psi^4 = psi + 4.
const PSI: f64 = 1.533_751_168_755_204_3;

/// `n` rotations on the super-Fibonacci spiral, canonicalized to `w >= 0`.
pub fn sample_so3(n: usize) -> Result<Vec<Rotation>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let nf = n as f64;
    (0..n)
        .map(|i| {
            let s = i as f64 + 0.5;
            let r = (s / nf).sqrt();
            let big_r = (1.0 - s / nf).sqrt();
            let alpha = 2.0 * PI * s / PHI;
            let beta = 2.0 * PI * s / PSI;
            let q = [r * alpha.sin(), r * alpha.cos(), big_r * beta.sin(), big_r * beta.cos()];
            let sign = if q[0] < 0.0 { -1.0 } else { 1.0 };
            Rotation::from_wxyz_normalized(sign * q[0], sign * q[1], sign * q[2], sign * q[3])
        })
        .collect()
}

/// Index and geodesic distance (radians) of the sample closest to `r`.
pub fn nearest_sample(samples: &[Rotation], r: &Rotation) -> (usize, f64) {
    let q = r.quaternion().coords;
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in samples.iter().enumerate() {
        let d = s.quaternion().coords.dot(&q).abs();
        if d > best.1 {
            best = (i, d);
        }
    }
    (best.0, 2.0 * best.1.min(1.0).acos())
}

/// Mean geodesic distance (radians) from each sample to its closest other sample.
pub fn mean_sample_spacing(samples: &[Rotation]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let qa = a.quaternion().coords;
            let best = samples
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| b.quaternion().coords.dot(&qa).abs())
                .fold(0.0f64, f64::max);
            2.0 * best.min(1.0).acos()
        })
        .sum();
    total / samples.len() as f64
}
