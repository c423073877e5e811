//! Discrete Fourier plumbing shared by the grid-based modules.
//!
//! Momentum-space arrays are kept in FFT order: index `k < n/2` holds
//! `p = hbar 2 pi k / L`, index `k >= n/2` holds `p = hbar 2 pi (k - n) / L`.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::C64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(n)
        } else {
            p.plan_fft_inverse(n)
        }
    })
}

/// Unnormalized forward DFT, `X_k = sum_j x_j exp(-2 pi i jk/n)`.
pub(crate) fn forward(buf: &mut [C64]) {
    plan(buf.len(), true).process(buf);
}

/// Inverse DFT including the `1/n` factor.
pub(crate) fn inverse(buf: &mut [C64]) {
    let n = buf.len();
    plan(n, false).process(buf);
    let scale = 1.0 / n as f64;
    for z in buf.iter_mut() {
        *z *= scale;
    }
}

/// Signed integer wave index of FFT slot `k`.
pub(crate) fn wave_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Applies a momentum-diagonal multiplier: `ifft(f(p) * fft(x))`.
pub(crate) fn apply_diagonal(samples: &[C64], momenta: &[f64], f: impl Fn(f64) -> C64) -> Vec<C64> {
    let mut buf = samples.to_vec();
    forward(&mut buf);
    for (z, &p) in buf.iter_mut().zip(momenta) {
        *z *= f(p);
    }
    inverse(&mut buf);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let x: Vec<C64> = (0..64).map(|k| C64::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let mut y = x.clone();
        forward(&mut y);
        inverse(&mut y);
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-14);
    }

    #[test]
    fn wave_index_wraps_at_half() {
        assert_eq!(wave_index(0, 8), 0);
        assert_eq!(wave_index(3, 8), 3);
        assert_eq!(wave_index(4, 8), -4);
        assert_eq!(wave_index(7, 8), -1);
    }
}
