use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Unnormalized multi-dimensional complex FFT on an `n^d` row-major array.
///
/// Lines are transformed axis by axis. When a retention mask is supplied the
/// engine skips every line whose already-spectral coordinates fall outside
/// the mask; the skipped lines are zero on input (inverse) or unused on output
/// (forward), so the retained coefficients are bitwise identical to the
/// unpruned transform.
/// Columns gathered per batch when transforming a strided axis.
const BLOCK: usize = 16;

pub(crate) struct FftEngine {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftEngine {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftEngine {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub(crate) fn process(
        &self,
        d: usize,
        data: &mut [Complex64],
        inverse: bool,
        keep: Option<&[bool]>,
    ) {
        debug_assert_eq!(data.len(), self.n.pow(d as u32));
        if inverse {
            for axis in 0..d {
                self.process_axis(d, axis, data, inverse, keep);
            }
        } else {
            for axis in (0..d).rev() {
                self.process_axis(d, axis, data, inverse, keep);
            }
        }
    }

    fn process_axis(
        &self,
        d: usize,
        axis: usize,
        data: &mut [Complex64],
        inverse: bool,
        keep: Option<&[bool]>,
    ) {
        let n = self.n;
        let fft = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

        if axis == d - 1 {
            fft.process_with_scratch(data, &mut scratch);
            return;
        }

        let stride = n.pow((d - 1 - axis) as u32);
        let outer = n.pow(axis as u32);
        let kept = |r: usize| match keep {
            None => true,
            Some(mask) => {
                let mut rem = r;
                (axis + 1..d).all(|_| {
                    let digit = rem % n;
                    rem /= n;
                    mask[digit]
                })
            }
        };
        // contiguous column tiles of at most BLOCK columns
        let mut tiles: Vec<(usize, usize)> = Vec::new();
        for r in (0..stride).filter(|&r| kept(r)) {
            match tiles.last_mut() {
                Some((start, len)) if *start + *len == r && *len < BLOCK => *len += 1,
                _ => tiles.push((r, 1)),
            }
        }
        if tiles.is_empty() {
            return;
        }

        let mut buf = vec![Complex64::new(0.0, 0.0); BLOCK * n];
        for o in 0..outer {
            let slab = &mut data[o * n * stride..(o + 1) * n * stride];
            for &(start, len) in &tiles {
                let buf = &mut buf[..len * n];
                for (i, row) in slab.chunks_exact(stride).enumerate() {
                    for (j, &v) in row[start..start + len].iter().enumerate() {
                        buf[j * n + i] = v;
                    }
                }
                fft.process_with_scratch(buf, &mut scratch);
                for (i, row) in slab.chunks_exact_mut(stride).enumerate() {
                    for (j, v) in row[start..start + len].iter_mut().enumerate() {
                        *v = buf[j * n + i];
                    }
                }
            }
        }
    }
}
