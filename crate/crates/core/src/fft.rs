//! Thin planning wrappers over `rustfft` for the two transforms the crate
//! needs: one-sided magnitude spectra and full linear cross-correlation.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward transform of a fixed length, returning one-sided magnitudes.
#[derive(Clone)]
pub(crate) struct MagnitudePlan {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
}

impl MagnitudePlan {
    pub fn new(len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len);
        Self { fft, len }
    }

    /// `|X[k]|` for `k = 0 ..= len / 2`.
    pub fn magnitudes(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.len);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        buf.truncate(self.len / 2 + 1);
        buf.into_iter().map(|c| c.norm()).collect()
    }
}

/// Full linear cross-correlation for fixed input lengths.
///
/// `correlate(a, b)[l + len_a - 1] = sum_j a[j] * b[j + l]` for
/// `l = -(len_a - 1) ..= len_b - 1`.
#[derive(Clone)]
pub(crate) struct CorrelationPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len_a: usize,
    len_b: usize,
    size: usize,
}

impl CorrelationPlan {
    pub fn new(len_a: usize, len_b: usize) -> Self {
        let size = (len_a + len_b - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
            len_a,
            len_b,
            size,
        }
    }

    pub fn output_len(&self) -> usize {
        self.len_a + self.len_b - 1
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        buf
    }

    pub fn correlate(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(a.len(), self.len_a);
        debug_assert_eq!(b.len(), self.len_b);
        let fa = self.spectrum(a);
        let mut prod = self.spectrum(b);
        for (p, x) in prod.iter_mut().zip(&fa) {
            *p *= x.conj();
        }
        self.inverse.process(&mut prod);
        let scale = 1.0 / self.size as f64;
        let mut out = Vec::with_capacity(self.output_len());
        // negative lags wrap to the top of the circular buffer
        out.extend(
            prod[self.size - (self.len_a - 1)..]
                .iter()
                .map(|c| c.re * scale),
        );
        out.extend(prod[..self.len_b].iter().map(|c| c.re * scale));
        out
    }
}
