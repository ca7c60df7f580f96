//! Per-pixel temporal cross-correlation and frame-level aggregation.
//!
//! A query and a reference stream set of the same spatial size are
//! correlated pixel by pixel at matching coordinates. The resulting volume
//! `c(x, y, lag)` is collapsed to a single signal either by summing over
//! pixels (Power) or by taking the per-lag maximum (Peak).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fft::CorrelationPlan;
use crate::mellin::{MtCube, FLAT_TOLERANCE};
use crate::video::VideoCube;

/// Frame-level aggregation of a correlation volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Sum over all pixels.
    #[default]
    Power,
    /// Maximum over all pixels.
    Peak,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Power, Method::Peak];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Power => "power",
            Method::Peak => "peak",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power" => Ok(Method::Power),
            "peak" => Ok(Method::Peak),
            other => Err(Error::param(format!(
                "unknown method '{other}', expected power or peak"
            ))),
        }
    }
}

/// Axis the streams were sampled on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Mellin `tau` samples.
    Tau,
    /// Video frames.
    Frame,
}

/// Integer lags `-(len_a - 1) ..= len_b - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagAxis {
    first: isize,
    len: usize,
}

impl LagAxis {
    pub fn new(len_a: usize, len_b: usize) -> Self {
        Self {
            first: -(len_a as isize - 1),
            len: len_a + len_b - 1,
        }
    }

    pub fn first(&self) -> isize {
        self.first
    }

    pub fn last(&self) -> isize {
        self.first + self.len as isize - 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn lag(&self, i: usize) -> isize {
        self.first + i as isize
    }

    pub fn index_of(&self, lag: isize) -> Option<usize> {
        let i = lag - self.first;
        (0..self.len as isize).contains(&i).then_some(i as usize)
    }

    pub fn lags(&self) -> impl Iterator<Item = isize> + '_ {
        (0..self.len).map(|i| self.lag(i))
    }
}

/// Full linear cross-correlation,
/// `values[l + len(a) - 1] = sum_j a[j] * b[j + l]`.
pub fn xcorr_full(a: &[f64], b: &[f64]) -> Result<(LagAxis, Vec<f64>)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::param(format!(
            "correlation inputs need at least 2 samples, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let plan = CorrelationPlan::new(a.len(), b.len());
    Ok((LagAxis::new(a.len(), b.len()), plan.correlate(a, b)))
}

/// A set of equal-length per-pixel streams on a shared axis.
pub trait StreamSet: Sync {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn stream_len(&self) -> usize;
    fn domain(&self) -> Domain;
    /// Stream of pixel `p` in row-major order.
    fn stream(&self, p: usize) -> &[f64];

    fn pixel_count(&self) -> usize {
        self.width() * self.height()
    }
}

impl StreamSet for MtCube {
    fn width(&self) -> usize {
        MtCube::width(self)
    }

    fn height(&self) -> usize {
        MtCube::height(self)
    }

    fn stream_len(&self) -> usize {
        self.n_tau()
    }

    fn domain(&self) -> Domain {
        Domain::Tau
    }

    fn stream(&self, p: usize) -> &[f64] {
        MtCube::stream(self, p)
    }
}

/// Mean-subtracted frame-domain pixel streams, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStreams {
    width: usize,
    height: usize,
    len: usize,
    values: Vec<f64>,
}

impl FrameStreams {
    /// Centers every pixel stream of `cube` on its temporal mean. Flat
    /// streams become exact zeros.
    pub fn centered(cube: &VideoCube) -> Self {
        let len = cube.num_frames();
        let mut values = cube.to_pixel_major();
        for s in values.chunks_exact_mut(len) {
            let mean = s.iter().sum::<f64>() / len as f64;
            let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            s.iter_mut().for_each(|v| *v -= mean);
            if s.iter().all(|v| v.abs() <= FLAT_TOLERANCE * scale) {
                s.fill(0.0);
            }
        }
        Self {
            width: cube.width(),
            height: cube.height(),
            len,
            values,
        }
    }

    /// Appends `extra` zero samples to every stream.
    pub fn zero_extended(&self, extra: usize) -> Self {
        if extra == 0 {
            return self.clone();
        }
        let len = self.len + extra;
        let mut values = Vec::with_capacity(self.pixel_count() * len);
        for s in self.values.chunks_exact(self.len) {
            values.extend_from_slice(s);
            values.extend(std::iter::repeat_n(0.0, extra));
        }
        Self {
            width: self.width,
            height: self.height,
            len,
            values,
        }
    }
}

impl StreamSet for FrameStreams {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn stream_len(&self) -> usize {
        self.len
    }

    fn domain(&self) -> Domain {
        Domain::Frame
    }

    fn stream(&self, p: usize) -> &[f64] {
        &self.values[p * self.len..(p + 1) * self.len]
    }
}

/// `c(x, y, lag)` for every pixel, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVolume {
    width: usize,
    height: usize,
    axis: LagAxis,
    domain: Domain,
    values: Vec<f64>,
}

impl CorrelationVolume {
    /// Builds a volume from pixel-major values.
    pub fn from_values(
        width: usize,
        height: usize,
        axis: LagAxis,
        domain: Domain,
        values: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height * axis.len() {
            return Err(Error::Dimension(format!(
                "{} values do not fill a {width}x{height} volume with {} lags",
                values.len(),
                axis.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("correlation values must be finite"));
        }
        Ok(Self {
            width,
            height,
            axis,
            domain,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn axis(&self) -> LagAxis {
        self.axis
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Correlation of pixel `p` (row-major) over the lag axis.
    pub fn pixel(&self, p: usize) -> &[f64] {
        let n = self.axis.len();
        &self.values[p * n..(p + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, lag: isize) -> Option<f64> {
        let i = self.axis.index_of(lag)?;
        Some(self.pixel(y * self.width + x)[i])
    }
}

/// Correlates query and reference pixel by pixel.
pub fn correlate_cubes<Q, R>(query: &Q, reference: &R) -> Result<CorrelationVolume>
where
    Q: StreamSet + ?Sized,
    R: StreamSet + ?Sized,
{
    correlate_cubes_with(query, reference, Exec::default())
}

/// [`correlate_cubes`] with an explicit execution strategy.
pub fn correlate_cubes_with<Q, R>(query: &Q, reference: &R, exec: Exec) -> Result<CorrelationVolume>
where
    Q: StreamSet + ?Sized,
    R: StreamSet + ?Sized,
{
    check_pair(query, reference)?;
    let (la, lb) = (query.stream_len(), reference.stream_len());
    let plan = CorrelationPlan::new(la, lb);
    let rows = exec.map(query.pixel_count(), |p| {
        plan.correlate(query.stream(p), reference.stream(p))
    });
    Ok(CorrelationVolume {
        width: query.width(),
        height: query.height(),
        axis: LagAxis::new(la, lb),
        domain: query.domain(),
        values: rows.concat(),
    })
}

fn check_pair<Q, R>(query: &Q, reference: &R) -> Result<()>
where
    Q: StreamSet + ?Sized,
    R: StreamSet + ?Sized,
{
    if (query.width(), query.height()) != (reference.width(), reference.height()) {
        return Err(Error::param(format!(
            "spatial size mismatch: query {}x{}, reference {}x{}",
            query.width(),
            query.height(),
            reference.width(),
            reference.height()
        )));
    }
    if query.domain() != reference.domain() {
        return Err(Error::param("query and reference are in different domains"));
    }
    if query.stream_len() < 2 || reference.stream_len() < 2 {
        return Err(Error::param("streams need at least 2 samples"));
    }
    Ok(())
}

/// Aggregated correlation over the lag axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSignal {
    axis: LagAxis,
    values: Vec<f64>,
    method: Method,
    domain: Domain,
}

impl AggregateSignal {
    pub fn new(axis: LagAxis, values: Vec<f64>, method: Method, domain: Domain) -> Result<Self> {
        if values.len() != axis.len() || values.is_empty() {
            return Err(Error::Dimension(format!(
                "{} values for {} lags",
                values.len(),
                axis.len()
            )));
        }
        Ok(Self {
            axis,
            values,
            method,
            domain,
        })
    }

    pub fn axis(&self) -> LagAxis {
        self.axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Sum of `c(x, y, lag)` over pixels, accumulated in row-major order.
pub fn aggregate_power(volume: &CorrelationVolume) -> AggregateSignal {
    let mut acc = vec![0.0; volume.axis.len()];
    for p in 0..volume.pixel_count() {
        for (s, v) in acc.iter_mut().zip(volume.pixel(p)) {
            *s += v;
        }
    }
    AggregateSignal {
        axis: volume.axis,
        values: acc,
        method: Method::Power,
        domain: volume.domain,
    }
}

/// Maximum of `c(x, y, lag)` over pixels.
pub fn aggregate_peak(volume: &CorrelationVolume) -> AggregateSignal {
    let mut acc = volume.pixel(0).to_vec();
    for p in 1..volume.pixel_count() {
        for (s, &v) in acc.iter_mut().zip(volume.pixel(p)) {
            if v > *s {
                *s = v;
            }
        }
    }
    AggregateSignal {
        axis: volume.axis,
        values: acc,
        method: Method::Peak,
        domain: volume.domain,
    }
}

pub fn aggregate(volume: &CorrelationVolume, method: Method) -> AggregateSignal {
    match method {
        Method::Power => aggregate_power(volume),
        Method::Peak => aggregate_peak(volume),
    }
}

/// Global maximum of an aggregate signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakReading {
    pub lag: isize,
    pub amplitude: f64,
    /// `amplitude / query_auto_peak`.
    pub normalized: f64,
}

/// Locates the maximum of `signal`, breaking ties toward the smallest lag.
/// An all-zero signal reads as lag 0 with zero amplitude.
pub fn peak_of(signal: &AggregateSignal, query_auto_peak: f64) -> Result<PeakReading> {
    if !(query_auto_peak > 0.0 && query_auto_peak.is_finite()) {
        return Err(Error::param(format!(
            "auto-correlation peak must be positive, got {query_auto_peak}"
        )));
    }
    if signal.values.iter().all(|&v| v == 0.0) {
        return Ok(PeakReading {
            lag: 0,
            amplitude: 0.0,
            normalized: 0.0,
        });
    }
    let mut best = 0;
    for (i, &v) in signal.values.iter().enumerate() {
        if v > signal.values[best] {
            best = i;
        }
    }
    let amplitude = signal.values[best];
    Ok(PeakReading {
        lag: signal.axis.lag(best),
        amplitude,
        normalized: (amplitude / query_auto_peak).max(0.0),
    })
}

/// Peak of the query's aggregate auto-correlation under `method`, the
/// normalization baseline for scores. Zero for a stream set with no
/// temporal content.
pub fn auto_peak<S: StreamSet + ?Sized>(streams: &S, method: Method, exec: Exec) -> Result<f64> {
    let vol = correlate_cubes_with(streams, streams, exec)?;
    Ok(aggregate(&vol, method).max().max(0.0))
}

/// Correlates and aggregates in one go, normalizing by `query_auto_peak`.
/// A zero baseline yields a zero score.
pub fn score_pair<Q, R>(
    query: &Q,
    reference: &R,
    method: Method,
    query_auto_peak: f64,
    exec: Exec,
) -> Result<(AggregateSignal, PeakReading)>
where
    Q: StreamSet + ?Sized,
    R: StreamSet + ?Sized,
{
    let vol = correlate_cubes_with(query, reference, exec)?;
    let signal = aggregate(&vol, method);
    let reading = if query_auto_peak > 0.0 {
        peak_of(&signal, query_auto_peak)?
    } else {
        PeakReading {
            lag: 0,
            amplitude: 0.0,
            normalized: 0.0,
        }
    };
    Ok((signal, reading))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(a: &[f64], b: &[f64]) -> Vec<f64> {
        let la = a.len() as isize;
        let lb = b.len() as isize;
        (-(la - 1)..lb)
            .map(|l| {
                (0..la)
                    .filter(|&j| (0..lb).contains(&(j + l)))
                    .map(|j| a[j as usize] * b[(j + l) as usize])
                    .sum()
            })
            .collect()
    }

    fn norm(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn hand_example() {
        let (axis, v) = xcorr_full(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(axis.lags().collect::<Vec<_>>(), vec![-1, 0, 1]);
        assert!((v[0]).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15 && v[2].abs() < 1e-15);
    }

    #[test]
    fn short_input_rejected() {
        assert!(xcorr_full(&[], &[1.0, 2.0]).is_err());
        assert!(xcorr_full(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let la = rng.random_range(2..=256);
            let lb = rng.random_range(2..=256);
            let a: Vec<f64> = (0..la).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..lb).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, fast) = xcorr_full(&a, &b).unwrap();
            let slow = direct(&a, &b);
            let tol = 1e-9 * norm(&a) * norm(&b);
            for (f, s) in fast.iter().zip(&slow) {
                assert!((f - s).abs() <= tol);
            }
        }
    }

    #[test]
    fn lag_axis_indexing() {
        let ax = LagAxis::new(3, 5);
        assert_eq!(ax.first(), -2);
        assert_eq!(ax.last(), 4);
        assert_eq!(ax.index_of(0), Some(2));
        assert_eq!(ax.index_of(5), None);
        assert_eq!(ax.index_of(-3), None);
    }

    fn volume(width: usize, height: usize, lags: usize, seed: u64) -> CorrelationVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = LagAxis::new(lags.div_ceil(2), lags / 2 + 1);
        let values = (0..width * height * axis.len())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        CorrelationVolume::from_values(width, height, axis, Domain::Frame, values).unwrap()
    }

    #[test]
    fn power_matches_naive_loop() {
        let v = volume(3, 3, 9, 1);
        let s = aggregate_power(&v);
        for (i, lag) in v.axis().lags().enumerate() {
            let mut acc = 0.0;
            for y in 0..3 {
                for x in 0..3 {
                    acc += v.get(x, y, lag).unwrap();
                }
            }
            assert_eq!(s.values()[i], acc);
        }
    }

    #[test]
    fn peak_matches_naive_loop() {
        let v = volume(3, 3, 9, 2);
        let s = aggregate_peak(&v);
        for (i, lag) in v.axis().lags().enumerate() {
            let mut m = f64::NEG_INFINITY;
            for y in 0..3 {
                for x in 0..3 {
                    m = m.max(v.get(x, y, lag).unwrap());
                }
            }
            assert_eq!(s.values()[i], m);
        }
    }

    #[test]
    fn single_pixel_methods_agree() {
        let v = volume(1, 1, 7, 3);
        assert_eq!(aggregate_power(&v).values(), aggregate_peak(&v).values());
        assert_eq!(aggregate_power(&v).values(), v.pixel(0));
    }

    #[test]
    fn identical_pixels_sum_linearly() {
        let c0 = [0.5, -1.0, 2.0];
        let values: Vec<f64> = (0..4).flat_map(|_| c0).collect();
        let v =
            CorrelationVolume::from_values(2, 2, LagAxis::new(2, 2), Domain::Tau, values).unwrap();
        assert_eq!(aggregate_power(&v).values(), &[2.0, -4.0, 8.0]);
    }

    #[test]
    fn tie_goes_to_smallest_lag() {
        let axis = LagAxis::new(2, 3);
        let s = AggregateSignal::new(axis, vec![0.0, 5.0, 5.0, 0.0], Method::Power, Domain::Tau)
            .unwrap();
        let r = peak_of(&s, 5.0).unwrap();
        assert_eq!(r.lag, 0);
        assert_eq!(r.normalized, 1.0);
    }

    #[test]
    fn zero_signal_reads_as_no_correlation() {
        let s = AggregateSignal::new(LagAxis::new(2, 2), vec![0.0; 3], Method::Peak, Domain::Tau)
            .unwrap();
        let r = peak_of(&s, 1.0).unwrap();
        assert_eq!((r.lag, r.amplitude, r.normalized), (0, 0.0, 0.0));
        assert!(peak_of(&s, 0.0).is_err());
    }

    #[test]
    fn auto_correlation_peaks_at_zero_lag() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = (0..4 * 3 * 20)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let cube = VideoCube::new(4, 3, 20, 30.0, samples).unwrap();
        let fs = FrameStreams::centered(&cube);
        let vol = correlate_cubes(&fs, &fs).unwrap();
        for p in 0..vol.pixel_count() {
            let row = vol.pixel(p);
            let best = row
                .iter()
                .enumerate()
                .fold(0, |b, (i, &v)| if v > row[b] { i } else { b });
            assert_eq!(vol.axis().lag(best), 0);
        }
        for m in Method::ALL {
            let base = auto_peak(&fs, m, Exec::Sequential).unwrap();
            let r = peak_of(&aggregate(&vol, m), base).unwrap();
            assert_eq!((r.lag, r.normalized), (0, 1.0));
        }
    }

    #[test]
    fn spatial_mismatch_rejected() {
        let a = FrameStreams::centered(&VideoCube::filled(2, 2, 4, 30.0, 0.5).unwrap());
        let b = FrameStreams::centered(&VideoCube::filled(2, 3, 4, 30.0, 0.5).unwrap());
        assert!(correlate_cubes(&a, &b).is_err());
    }

    #[test]
    fn method_parses() {
        assert_eq!("Peak".parse::<Method>().unwrap(), Method::Peak);
        assert!("mean".parse::<Method>().is_err());
        assert_eq!(serde_json::to_string(&Method::Power).unwrap(), "\"power\"");
    }
}
