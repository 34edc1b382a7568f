//! In-place multidimensional complex FFTs on row-major buffers.

use crate::error::{Error, Result};
use crate::exec;
use ndarray::{ArrayViewMut3, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

/// Columns gathered per strided batch.
const COLUMN_BATCH: usize = 16;
/// Contiguous rows per task on the last axis.
const ROW_BATCH: usize = 64;

/// Counts of full multidimensional transforms executed by one plan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FftStats {
    pub forward: usize,
    pub inverse: usize,
}

pub struct FftPlan {
    shape: Vec<usize>,
    len: usize,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    n_forward: AtomicUsize,
    n_inverse: AtomicUsize,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan")
            .field("shape", &self.shape)
            .field("stats", &self.stats())
            .finish()
    }
}

impl FftPlan {
    pub fn new(shape: &[usize]) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "invalid FFT shape {shape:?}"
            )));
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::InvalidParameter(format!("FFT shape {shape:?} overflows")))?;
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Ok(Self {
            shape: shape.to_vec(),
            len,
            forward,
            inverse,
            n_forward: AtomicUsize::new(0),
            n_inverse: AtomicUsize::new(0),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stats(&self) -> FftStats {
        FftStats {
            forward: self.n_forward.load(Ordering::Relaxed),
            inverse: self.n_inverse.load(Ordering::Relaxed),
        }
    }

    /// Unnormalized forward transform, `sum_n x_n exp(-2 pi i k n / M)`.
    pub fn forward(&self, data: &mut [Complex64]) -> Result<()> {
        self.check(data)?;
        for axis in 0..self.shape.len() {
            self.transform_axis(data, axis, &self.forward[axis]);
        }
        self.n_forward.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    /// Inverse transform including the `1/M` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) -> Result<()> {
        self.check(data)?;
        for axis in 0..self.shape.len() {
            self.transform_axis(data, axis, &self.inverse[axis]);
        }
        let scale = 1.0 / self.len as f64;
        exec::for_each_chunk_mut(data, 1 << 16, |_, c| c.iter_mut().for_each(|z| *z *= scale));
        self.n_inverse.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn check(&self, data: &[Complex64]) -> Result<()> {
        if data.len() != self.len {
            return Err(Error::ShapeMismatch {
                expected: self.len,
                found: data.len(),
            });
        }
        Ok(())
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, fft: &Arc<dyn Fft<f64>>) {
        let n = self.shape[axis];
        if n == 1 {
            return;
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        if inner == 1 {
            // Contiguous lines: rustfft handles a buffer holding several transforms.
            let scratch_len = fft.get_inplace_scratch_len();
            exec::for_each_chunk_mut(data, n * ROW_BATCH, |_, rows| {
                let mut scratch = vec![Complex64::default(); scratch_len];
                fft.process_with_scratch(rows, &mut scratch);
            });
            return;
        }
        let view = ArrayViewMut3::from_shape((outer, n, inner), data).expect("shape checked");
        let mut view = view;
        let pieces: Vec<_> = view.axis_chunks_iter_mut(Axis(2), COLUMN_BATCH).collect();
        let scratch_len = fft.get_inplace_scratch_len();
        exec::for_each_owned(pieces, |mut piece| {
            let b = piece.len_of(Axis(2));
            let mut buf = vec![Complex64::default(); n * b];
            let mut scratch = vec![Complex64::default(); scratch_len];
            for mut slab in piece.axis_iter_mut(Axis(0)) {
                for ((i, c), z) in slab.indexed_iter() {
                    buf[c * n + i] = *z;
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for ((i, c), z) in slab.indexed_iter_mut() {
                    *z = buf[c * n + i];
                }
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn random(len: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    /// Literal O(M^2) DFT over a row-major array.
    fn naive_dft(shape: &[usize], x: &[Complex64]) -> Vec<Complex64> {
        let len = x.len();
        let unravel = |mut f: usize| {
            let mut idx = vec![0; shape.len()];
            for a in (0..shape.len()).rev() {
                idx[a] = f % shape[a];
                f /= shape[a];
            }
            idx
        };
        (0..len)
            .map(|k| {
                let kk = unravel(k);
                (0..len)
                    .map(|m| {
                        let mm = unravel(m);
                        let phase: f64 = (0..shape.len())
                            .map(|a| (kk[a] * mm[a]) as f64 / shape[a] as f64)
                            .sum();
                        x[m] * Complex64::from_polar(1.0, -2.0 * PI * phase)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn delta_transforms_to_ones() {
        let plan = FftPlan::new(&[8, 8, 8]).unwrap();
        let mut x = vec![Complex64::default(); 512];
        x[0] = Complex64::new(1.0, 0.0);
        plan.forward(&mut x).unwrap();
        assert!(x.iter().all(|z| (z - 1.0).norm() < 1e-15));
    }

    #[test]
    fn matches_direct_dft() {
        for shape in [vec![6, 10], vec![4, 5, 6], vec![3, 40, 2], vec![34, 3]] {
            let len: usize = shape.iter().product();
            let x = random(len, len as u64);
            let want = naive_dft(&shape, &x);
            let plan = FftPlan::new(&shape).unwrap();
            let mut got = x.clone();
            plan.forward(&mut got).unwrap();
            let err = got
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12 * len as f64, "{shape:?}: {err}");
        }
    }

    #[test]
    fn parseval_and_counts() {
        let plan = FftPlan::new(&[16, 12, 18]).unwrap();
        let x = random(plan.len(), 7);
        let mut y = x.clone();
        plan.forward(&mut y).unwrap();
        let ex: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let ey: f64 = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / plan.len() as f64;
        assert!((ex - ey).abs() < 1e-12 * ex);
        plan.inverse(&mut y).unwrap();
        assert_eq!(
            plan.stats(),
            FftStats {
                forward: 1,
                inverse: 1
            }
        );
        assert!(plan.forward(&mut y[1..]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn round_trip(dims in prop::collection::vec(1usize..24, 2..=3), seed in any::<u64>()) {
                let plan = FftPlan::new(&dims).unwrap();
                let x = random(plan.len(), seed);
                let mut y = x.clone();
                plan.forward(&mut y).unwrap();
                plan.inverse(&mut y).unwrap();
                let err = x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                prop_assert!(err < 1e-14, "{err}");
            }
        }
    }
}
