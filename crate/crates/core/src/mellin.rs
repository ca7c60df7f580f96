//! Temporal Mellin transform of pixel streams.
//!
//! The transform takes the one-sided DFT magnitude of a mean-subtracted
//! stream and resamples it onto a uniform grid in `tau = ln(omega / omega_low)`
//! between a low cutoff `omega_low` and a high cutoff `omega_high`. A change
//! of playback duration by a factor `alpha` becomes a shift in `tau` by
//! `ln(alpha)`: if `q` lasts `alpha` times longer than `r`, then
//! `mt_q(tau) = mt_r(tau + ln alpha)`, i.e. the longer stream's transform
//! sits lower on the `tau` axis. Each stream is normalized to a maximum of 1,
//! which erases the `1/alpha` amplitude factor of the scaled spectrum.
//!
//! Frequencies are in Hz: a DFT of `N` samples at rate `fs` has bins spaced
//! `fs / N` apart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fft::MagnitudePlan;
use crate::video::{PixelStream, VideoCube};

/// Default number of `tau` samples.
pub const DEFAULT_N_TAU: usize = 512;
/// Smallest accepted `tau` grid.
pub const MIN_N_TAU: usize = 16;
/// Streams whose centered samples stay within this fraction of their
/// largest magnitude are treated as flat.
pub const FLAT_TOLERANCE: f64 = 1e-12;

/// One-sided DFT magnitude spectrum (bins `0 ..= N/2`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    magnitudes: Vec<f64>,
    bin_spacing: f64,
}

impl Spectrum {
    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Hz per bin (`sample_rate / N`).
    pub fn bin_spacing(&self) -> f64 {
        self.bin_spacing
    }

    /// Linear interpolation of the magnitude at `freq` Hz; zero past the
    /// last bin.
    pub fn interpolate(&self, freq: f64) -> f64 {
        let last = self.magnitudes.len() - 1;
        let k = freq / self.bin_spacing;
        if k.is_nan() || k < 0.0 || k > last as f64 + 1e-9 {
            return 0.0;
        }
        let i = k.floor() as usize;
        if i >= last {
            return self.magnitudes[last];
        }
        let f = k - i as f64;
        self.magnitudes[i] * (1.0 - f) + self.magnitudes[i + 1] * f
    }
}

/// `|sum_n x[n] e^{-i 2 pi k n / N}|` for `k = 0 ..= N/2`.
pub fn dft_magnitude(stream: &PixelStream) -> Spectrum {
    let plan = MagnitudePlan::new(stream.len());
    Spectrum {
        magnitudes: plan.magnitudes(stream.samples()),
        bin_spacing: stream.sample_rate() / stream.len() as f64,
    }
}

/// Cutoffs and grid size of the Mellin transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtParams {
    /// Low-frequency cutoff in Hz; `tau = 0` maps here.
    pub omega_low: f64,
    /// High-frequency cutoff in Hz; `tau_max` maps here.
    pub omega_high: f64,
    /// Number of uniform `tau` samples.
    pub n_tau: usize,
}

impl MtParams {
    pub fn new(omega_low: f64, omega_high: f64, n_tau: usize) -> Result<Self> {
        let p = Self {
            omega_low,
            omega_high,
            n_tau,
        };
        p.validate()?;
        Ok(p)
    }

    /// Defaults for a stream of `len` samples at `sample_rate` Hz: the low
    /// cutoff sits on the second DFT bin, the high cutoff at Nyquist.
    pub fn defaults_for(len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(
            2.0 * sample_rate / len as f64,
            sample_rate / 2.0,
            DEFAULT_N_TAU,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_low.is_finite() && self.omega_high.is_finite()) {
            return Err(Error::param("Mellin cutoffs must be finite"));
        }
        if !(0.0 < self.omega_low && self.omega_low < self.omega_high) {
            return Err(Error::param(format!(
                "need 0 < omega_low < omega_high, got {} and {}",
                self.omega_low, self.omega_high
            )));
        }
        if self.n_tau < MIN_N_TAU {
            return Err(Error::param(format!(
                "n_tau must be at least {MIN_N_TAU}, got {}",
                self.n_tau
            )));
        }
        Ok(())
    }

    /// Checks the high cutoff against the Nyquist rate of `sample_rate`.
    pub fn validate_for(&self, sample_rate: f64) -> Result<()> {
        self.validate()?;
        let nyquist = sample_rate / 2.0;
        if self.omega_high > nyquist * (1.0 + 1e-12) {
            return Err(Error::param(format!(
                "omega_high {} Hz exceeds the Nyquist rate {nyquist} Hz",
                self.omega_high
            )));
        }
        Ok(())
    }

    pub fn tau_max(&self) -> f64 {
        (self.omega_high / self.omega_low).ln()
    }

    /// Grid step, `ln(omega_high / omega_low) / (n_tau - 1)`.
    pub fn delta_tau(&self) -> f64 {
        self.tau_max() / (self.n_tau - 1) as f64
    }

    pub fn tau(&self, j: usize) -> f64 {
        j as f64 * self.delta_tau()
    }

    /// Frequencies (Hz) of the grid points.
    fn frequencies(&self) -> Vec<f64> {
        let dt = self.delta_tau();
        (0..self.n_tau)
            .map(|j| self.omega_low * (j as f64 * dt).exp())
            .collect()
    }
}

/// Mellin-transformed stream on the grid described by its [`MtParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MtStream {
    values: Vec<f64>,
    params: MtParams,
}

impl MtStream {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn params(&self) -> &MtParams {
        &self.params
    }

    pub fn delta_tau(&self) -> f64 {
        self.params.delta_tau()
    }

    pub fn tau_max(&self) -> f64 {
        self.params.tau_max()
    }

    /// True for the all-zero output of a stream without temporal content.
    pub fn is_dead(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Per-pixel Mellin transforms sharing one `tau` grid, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MtCube {
    width: usize,
    height: usize,
    params: MtParams,
    values: Vec<f64>,
}

impl MtCube {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn params(&self) -> &MtParams {
        &self.params
    }

    pub fn n_tau(&self) -> usize {
        self.params.n_tau
    }

    /// Transform of pixel `p` (row-major index).
    pub fn stream(&self, p: usize) -> &[f64] {
        let n = self.params.n_tau;
        &self.values[p * n..(p + 1) * n]
    }

    pub fn stream_at(&self, x: usize, y: usize) -> MtStream {
        MtStream {
            values: self.stream(y * self.width + x).to_vec(),
            params: self.params,
        }
    }

    /// Number of pixels whose transform is not identically zero.
    pub fn live_pixels(&self) -> usize {
        (0..self.width * self.height)
            .filter(|&p| self.stream(p).iter().any(|&v| v != 0.0))
            .count()
    }
}

/// Transforms one stream given a prepared plan and the grid frequencies.
fn transform_samples(
    samples: &[f64],
    sample_rate: f64,
    plan: &MagnitudePlan,
    grid: &[f64],
    omega_high: f64,
) -> Vec<f64> {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let centered: Vec<f64> = samples.iter().map(|v| v - mean).collect();
    // rounding residue of a flat stream is not temporal content
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if centered.iter().all(|v| v.abs() <= FLAT_TOLERANCE * scale) {
        return vec![0.0; grid.len()];
    }
    let spectrum = Spectrum {
        magnitudes: plan.magnitudes(&centered),
        bin_spacing: sample_rate / samples.len() as f64,
    };
    let cutoff = omega_high * (1.0 + 1e-12);
    let mut out: Vec<f64> = grid
        .iter()
        .map(|&w| {
            if w > cutoff {
                0.0
            } else {
                spectrum.interpolate(w)
            }
        })
        .collect();
    let peak = out.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v /= peak);
    }
    out
}

/// Mellin transform of a single stream. The temporal mean is removed first;
/// a stream with an all-zero spectrum yields an all-zero result.
pub fn mellin_transform(stream: &PixelStream, params: &MtParams) -> Result<MtStream> {
    params.validate_for(stream.sample_rate())?;
    let plan = MagnitudePlan::new(stream.len());
    let values = transform_samples(
        stream.samples(),
        stream.sample_rate(),
        &plan,
        &params.frequencies(),
        params.omega_high,
    );
    Ok(MtStream {
        values,
        params: *params,
    })
}

/// Transforms every pixel of `cube` independently.
pub fn mellin_cube(cube: &VideoCube, params: &MtParams) -> Result<MtCube> {
    mellin_cube_with(cube, params, Exec::default())
}

/// [`mellin_cube`] with an explicit execution strategy. The output does not
/// depend on the strategy or thread count.
pub fn mellin_cube_with(cube: &VideoCube, params: &MtParams, exec: Exec) -> Result<MtCube> {
    params.validate_for(cube.frame_rate())?;
    let n = cube.num_frames();
    let plan = MagnitudePlan::new(n);
    let grid = params.frequencies();
    let pm = cube.to_pixel_major();
    let streams = exec.map(cube.pixel_count(), |p| {
        transform_samples(
            &pm[p * n..(p + 1) * n],
            cube.frame_rate(),
            &plan,
            &grid,
            params.omega_high,
        )
    });
    Ok(MtCube {
        width: cube.width(),
        height: cube.height(),
        params: *params,
        values: streams.concat(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    /// O(N^2) DFT magnitude, straight from the definition.
    fn direct_dft(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, &v) in x.iter().enumerate() {
                    let ang = -TAU * (k * j % n) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    fn stream(samples: Vec<f64>) -> PixelStream {
        PixelStream::new(samples, 30.0).unwrap()
    }

    #[test]
    fn zero_signal_spectrum() {
        let s = dft_magnitude(&stream(vec![0.0; 16]));
        assert_eq!(s.magnitudes().len(), 9);
        assert!(s.magnitudes().iter().all(|&m| m == 0.0));
        assert_eq!(s.bin_spacing(), 30.0 / 16.0);
    }

    #[test]
    fn cosine_lands_in_one_bin() {
        let x: Vec<f64> = (0..64)
            .map(|n| (TAU * 8.0 * n as f64 / 64.0).cos())
            .collect();
        let fast = dft_magnitude(&stream(x.clone()));
        let slow = direct_dft(&x);
        assert!((slow[8] - 32.0).abs() < 1e-9);
        assert!((fast.magnitudes()[8] - 32.0).abs() < 1e-9);
        for (k, m) in fast.magnitudes().iter().enumerate() {
            if k != 8 {
                assert!(*m < 1e-9, "bin {k} = {m}");
            }
        }
    }

    #[test]
    fn odd_length_has_floor_half_plus_one_bins() {
        let s = dft_magnitude(&stream(vec![1.0, 2.0, 0.5, 0.25, 3.0]));
        assert_eq!(s.magnitudes().len(), 3);
    }

    #[test]
    fn params_validation() {
        assert!(MtParams::new(1.0, 0.5, 64).is_err());
        assert!(MtParams::new(0.0, 0.5, 64).is_err());
        assert!(MtParams::new(0.1, 0.5, 8).is_err());
        let p = MtParams::new(0.1, 16.0, 64).unwrap();
        assert!(p.validate_for(30.0).is_err());
        assert!(p.validate_for(32.0).is_ok());
    }

    #[test]
    fn tau_grid_law() {
        let p = MtParams::new(0.2, 15.0, 512).unwrap();
        assert_eq!(p.delta_tau(), (15.0f64 / 0.2).ln() / 511.0);
        let f = p.frequencies();
        assert!((f[0] - 0.2).abs() < 1e-15);
        assert!((f[511] - 15.0).abs() < 1e-9);
    }

    #[test]
    fn defaults_follow_stream_length() {
        let p = MtParams::defaults_for(300, 30.0).unwrap();
        assert_eq!(p.omega_low, 0.2);
        assert_eq!(p.omega_high, 15.0);
        assert_eq!(p.n_tau, DEFAULT_N_TAU);
    }

    #[test]
    fn constant_stream_is_dead() {
        let p = MtParams::defaults_for(32, 30.0).unwrap();
        let mt = mellin_transform(&stream(vec![0.7; 32]), &p).unwrap();
        assert!(mt.is_dead());
        assert_eq!(mt.values().len(), 512);
    }

    #[test]
    fn live_stream_peaks_at_one() {
        let x: Vec<f64> = (0..100)
            .map(|n| (n as f64 * 0.37).sin() + 0.1 * n as f64)
            .collect();
        let p = MtParams::defaults_for(100, 30.0).unwrap();
        let mt = mellin_transform(&stream(x), &p).unwrap();
        let max = mt.values().iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(max, 1.0);
        assert!(mt.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn cutoff_above_nyquist_is_rejected() {
        let p = MtParams::new(1.0, 20.0, 64).unwrap();
        assert!(mellin_transform(&stream(vec![0.0, 1.0, 0.0, 1.0]), &p).is_err());
    }

    #[test]
    fn grid_beyond_last_bin_is_zero() {
        // odd length: last bin sits below Nyquist
        let x: Vec<f64> = (0..9).map(|n| (n as f64).sin()).collect();
        let p = MtParams::new(1.0, 15.0, 64).unwrap();
        let mt = mellin_transform(&stream(x), &p).unwrap();
        let spacing = 30.0 / 9.0;
        let last_freq = 4.0 * spacing;
        for (j, v) in mt.values().iter().enumerate() {
            let f = 1.0 * (p.tau(j)).exp();
            if f > last_freq + 1e-9 {
                assert_eq!(*v, 0.0, "tau index {j}");
            }
        }
    }

    #[test]
    fn one_by_one_cube_matches_single_stream() {
        let x: Vec<f64> = (0..40).map(|n| ((n * n) % 7) as f64 / 7.0).collect();
        let cube = VideoCube::new(1, 1, 40, 30.0, x.clone()).unwrap();
        let p = MtParams::defaults_for(40, 30.0).unwrap();
        let mc = mellin_cube(&cube, &p).unwrap();
        let single = mellin_transform(&stream(x), &p).unwrap();
        assert_eq!(mc.stream(0), single.values());
    }

    #[test]
    fn one_textured_pixel_one_live_stream() {
        let (w, h, n) = (3, 3, 24);
        let mut samples = vec![0.4; w * h * n];
        for t in 0..n {
            samples[t * w * h + 4] = 0.4 + 0.2 * (t as f64 * 0.9).sin();
        }
        let cube = VideoCube::new(w, h, n, 30.0, samples).unwrap();
        let mc = mellin_cube(&cube, &MtParams::defaults_for(n, 30.0).unwrap()).unwrap();
        assert_eq!(mc.live_pixels(), 1);
        assert!(mc.stream(4).iter().any(|&v| v > 0.0));
    }
}
