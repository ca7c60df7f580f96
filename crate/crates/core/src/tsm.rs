//! Two-step matching: speed-invariant detection in the Mellin domain, then
//! frame-domain localization of the speed-corrected query.
//!
//! `alpha` is the duration ratio reference event / query event, so
//! `alpha > 1` means the event plays slower in the reference than in the
//! query. Step II stretches the query by `alpha` before correlating it with
//! the reference frames.

use serde::{Deserialize, Serialize};

use crate::correlator::{self, FrameStreams, Method, PeakReading, StreamSet};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mellin::{mellin_cube_with, MtCube, MtParams, DEFAULT_N_TAU};
use crate::video::{resample_speed, VideoCube};

/// Mellin settings; unset cutoffs are derived from the query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MtSettings {
    pub omega_low: Option<f64>,
    pub omega_high: Option<f64>,
    pub n_tau: usize,
}

impl Default for MtSettings {
    fn default() -> Self {
        Self {
            omega_low: None,
            omega_high: None,
            n_tau: DEFAULT_N_TAU,
        }
    }
}

impl MtSettings {
    /// Concrete parameters for a query of `len` frames at `frame_rate`.
    pub fn resolve(&self, len: usize, frame_rate: f64) -> Result<MtParams> {
        let d = MtParams::defaults_for(len, frame_rate)?;
        MtParams::new(
            self.omega_low.unwrap_or(d.omega_low),
            self.omega_high.unwrap_or(d.omega_high),
            self.n_tau,
        )
    }
}

/// Free parameters of the two-step method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsmConfig {
    pub mt: MtSettings,
    pub method: Method,
    /// Step I acceptance: matched when the normalized score is at least this.
    pub threshold: f64,
    /// Segment length T2 in frames; the whole database when unset.
    pub window: Option<usize>,
    /// Largest duration ratio a database search must still catch; sets the
    /// segment overlap T1 unless `overlap` is given.
    pub max_alpha: f64,
    /// Explicit segment overlap T1 in frames.
    pub overlap: Option<usize>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for TsmConfig {
    fn default() -> Self {
        Self {
            mt: MtSettings::default(),
            method: Method::Power,
            threshold: 0.5,
            window: None,
            max_alpha: 4.0,
            overlap: None,
            exec: Exec::default(),
        }
    }
}

impl TsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::param(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.max_alpha.is_finite() && self.max_alpha > 0.0) {
            return Err(Error::param(format!(
                "max_alpha must be positive, got {}",
                self.max_alpha
            )));
        }
        if matches!(self.window, Some(w) if w < 2) {
            return Err(Error::param("window must span at least 2 frames"));
        }
        Ok(())
    }

    pub fn with_method(self, method: Method) -> Self {
        Self { method, ..self }
    }

    pub fn with_threshold(self, threshold: f64) -> Self {
        Self { threshold, ..self }
    }

    pub fn with_exec(self, exec: Exec) -> Self {
        Self { exec, ..self }
    }
}

/// Step I output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    /// Peak lag in `tau` samples.
    pub lag: isize,
    /// `lag * delta_tau`.
    pub tau_shift: f64,
    /// `exp(-tau_shift)`.
    pub alpha: f64,
    pub delta_tau: f64,
    pub score: f64,
    pub method: Method,
    pub matched: bool,
}

/// Step II output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    /// Reference frame where the query's first frame aligns.
    pub event_frame: isize,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_offset: Option<usize>,
}

impl LocalizationResult {
    /// Records `|event_frame - truth|`.
    pub fn with_truth(self, truth: isize) -> Self {
        Self {
            frame_offset: Some(self.event_frame.abs_diff(truth)),
            ..self
        }
    }
}

/// Combined two-step output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: bool,
    pub alpha: f64,
    pub event_frame: Option<isize>,
    pub step1_score: f64,
    pub step2_score: Option<f64>,
    pub segment_index: Option<usize>,
    pub absolute_frame: Option<isize>,
}

/// A query with its Mellin cube and auto-correlation baselines, reusable
/// across many references.
#[derive(Debug, Clone)]
pub struct PreparedQuery<'a> {
    cube: &'a VideoCube,
    params: MtParams,
    mt: MtCube,
    mt_auto: [f64; 2],
}

fn method_index(m: Method) -> usize {
    match m {
        Method::Power => 0,
        Method::Peak => 1,
    }
}

impl<'a> PreparedQuery<'a> {
    pub fn new(cube: &'a VideoCube, config: &TsmConfig) -> Result<Self> {
        config.validate()?;
        let params = config.mt.resolve(cube.num_frames(), cube.frame_rate())?;
        let mt = mellin_cube_with(cube, &params, config.exec)?;
        let vol = correlator::correlate_cubes_with(&mt, &mt, config.exec)?;
        let mt_auto = Method::ALL.map(|m| correlator::aggregate(&vol, m).max().max(0.0));
        Ok(Self {
            cube,
            params,
            mt,
            mt_auto,
        })
    }

    pub fn cube(&self) -> &VideoCube {
        self.cube
    }

    pub fn params(&self) -> &MtParams {
        &self.params
    }

    pub fn mt(&self) -> &MtCube {
        &self.mt
    }

    pub fn mt_auto_peak(&self, method: Method) -> f64 {
        self.mt_auto[method_index(method)]
    }

    /// Mellin cube of `reference` on this query's grid.
    pub fn transform(&self, reference: &VideoCube, exec: Exec) -> Result<MtCube> {
        check_dims(self.cube, reference)?;
        mellin_cube_with(reference, &self.params, exec)
    }

    fn estimate(&self, reading: PeakReading, method: Method, threshold: f64) -> ScaleEstimate {
        let delta_tau = self.params.delta_tau();
        let tau_shift = reading.lag as f64 * delta_tau;
        ScaleEstimate {
            lag: reading.lag,
            tau_shift,
            alpha: (-tau_shift).exp(),
            delta_tau,
            score: reading.normalized,
            method,
            matched: reading.normalized >= threshold,
        }
    }

    /// Step I against a reference already transformed with [`Self::transform`].
    pub fn estimate_scale(
        &self,
        reference_mt: &MtCube,
        method: Method,
        threshold: f64,
        exec: Exec,
    ) -> Result<ScaleEstimate> {
        let (_, reading) = correlator::score_pair(
            &self.mt,
            reference_mt,
            method,
            self.mt_auto_peak(method),
            exec,
        )?;
        Ok(self.estimate(reading, method, threshold))
    }

    /// Step I under both methods from a single correlation volume, in
    /// [`Method::ALL`] order.
    pub fn estimate_scale_all(
        &self,
        reference_mt: &MtCube,
        threshold: f64,
        exec: Exec,
    ) -> Result<[ScaleEstimate; 2]> {
        let vol = correlator::correlate_cubes_with(&self.mt, reference_mt, exec)?;
        let mut out = [None; 2];
        for m in Method::ALL {
            let signal = correlator::aggregate(&vol, m);
            let reading = reading_or_zero(&signal, self.mt_auto_peak(m))?;
            out[method_index(m)] = Some(self.estimate(reading, m, threshold));
        }
        Ok(out.map(|e| e.expect("both methods evaluated")))
    }
}

fn reading_or_zero(signal: &correlator::AggregateSignal, base: f64) -> Result<PeakReading> {
    if base > 0.0 {
        correlator::peak_of(signal, base)
    } else {
        Ok(PeakReading {
            lag: 0,
            amplitude: 0.0,
            normalized: 0.0,
        })
    }
}

fn check_dims(a: &VideoCube, b: &VideoCube) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Dimension(format!(
            "query is {}x{}, reference is {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Step I: detection and duration-ratio estimate.
pub fn estimate_scale(
    query: &VideoCube,
    reference: &VideoCube,
    config: &TsmConfig,
) -> Result<ScaleEstimate> {
    let prepared = PreparedQuery::new(query, config)?;
    let reference_mt = prepared.transform(reference, config.exec)?;
    prepared.estimate_scale(&reference_mt, config.method, config.threshold, config.exec)
}

/// Centered frame-domain query with its auto-correlation baselines.
#[derive(Debug, Clone)]
pub struct FrameQuery {
    streams: FrameStreams,
    auto: [f64; 2],
}

impl FrameQuery {
    pub fn new(query: &VideoCube, exec: Exec) -> Result<Self> {
        let streams = FrameStreams::centered(query);
        let vol = correlator::correlate_cubes_with(&streams, &streams, exec)?;
        let auto = Method::ALL.map(|m| correlator::aggregate(&vol, m).max().max(0.0));
        Ok(Self { streams, auto })
    }

    pub fn auto_peak(&self, method: Method) -> f64 {
        self.auto[method_index(method)]
    }

    /// Frame-domain correlation peak against `reference`. A reference
    /// shorter than the query is zero-extended.
    pub fn localize(
        &self,
        reference: &VideoCube,
        method: Method,
        exec: Exec,
    ) -> Result<LocalizationResult> {
        let vol = self.volume(reference, exec)?;
        self.read(&vol, method)
    }

    /// [`Self::localize`] under both methods from one correlation volume, in
    /// [`Method::ALL`] order.
    pub fn localize_all(
        &self,
        reference: &VideoCube,
        exec: Exec,
    ) -> Result<[LocalizationResult; 2]> {
        let vol = self.volume(reference, exec)?;
        Ok([
            self.read(&vol, Method::Power)?,
            self.read(&vol, Method::Peak)?,
        ])
    }

    fn volume(&self, reference: &VideoCube, exec: Exec) -> Result<correlator::CorrelationVolume> {
        if (self.streams.width(), self.streams.height()) != (reference.width(), reference.height())
        {
            return Err(Error::Dimension(format!(
                "query is {}x{}, reference is {}x{}",
                self.streams.width(),
                self.streams.height(),
                reference.width(),
                reference.height()
            )));
        }
        let mut r = FrameStreams::centered(reference);
        let short = self.streams.stream_len().saturating_sub(r.stream_len());
        if short > 0 {
            r = r.zero_extended(short);
        }
        correlator::correlate_cubes_with(&self.streams, &r, exec)
    }

    fn read(
        &self,
        vol: &correlator::CorrelationVolume,
        method: Method,
    ) -> Result<LocalizationResult> {
        let signal = correlator::aggregate(vol, method);
        let reading = reading_or_zero(&signal, self.auto_peak(method))?;
        Ok(LocalizationResult {
            event_frame: reading.lag,
            score: reading.normalized,
            frame_offset: None,
        })
    }
}

/// Step II: frame-domain localization of an already speed-corrected query.
pub fn localize_event(
    query_resampled: &VideoCube,
    reference: &VideoCube,
    config: &TsmConfig,
) -> Result<LocalizationResult> {
    check_dims(query_resampled, reference)?;
    FrameQuery::new(query_resampled, config.exec)?.localize(reference, config.method, config.exec)
}

fn combine(
    prepared: &PreparedQuery<'_>,
    reference: &VideoCube,
    step1: ScaleEstimate,
    config: &TsmConfig,
) -> Result<MatchResult> {
    if !step1.matched {
        return Ok(MatchResult {
            matched: false,
            alpha: step1.alpha,
            event_frame: None,
            step1_score: step1.score,
            step2_score: None,
            segment_index: None,
            absolute_frame: None,
        });
    }
    let stretched = resample_speed(prepared.cube(), step1.alpha)?;
    let loc = localize_event(&stretched, reference, config)?;
    Ok(MatchResult {
        matched: true,
        alpha: step1.alpha,
        event_frame: Some(loc.event_frame),
        step1_score: step1.score,
        step2_score: Some(loc.score),
        segment_index: None,
        absolute_frame: Some(loc.event_frame),
    })
}

/// Both steps against a prepared query.
pub fn run_tsm_prepared(
    prepared: &PreparedQuery<'_>,
    reference: &VideoCube,
    config: &TsmConfig,
) -> Result<MatchResult> {
    let reference_mt = prepared.transform(reference, config.exec)?;
    let step1 =
        prepared.estimate_scale(&reference_mt, config.method, config.threshold, config.exec)?;
    combine(prepared, reference, step1, config)
}

/// Full two-step method. Step II runs only when Step I matches.
pub fn run_tsm(
    query: &VideoCube,
    reference: &VideoCube,
    config: &TsmConfig,
) -> Result<MatchResult> {
    let prepared = PreparedQuery::new(query, config)?;
    run_tsm_prepared(&prepared, reference, config)
}

/// Overlapping database windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub t1: usize,
    pub t2: usize,
    pub t3: usize,
    /// Half-open `[start, end)` frame ranges.
    pub segments: Vec<(usize, usize)>,
}

/// Splits `[0, t3)` into windows of `t2` frames that overlap by `t1`. Windows
/// start every `t2 - t1` frames; the last one ends at `t3`.
pub fn plan_segments(t3: usize, t2: usize, t1: usize) -> Result<SegmentPlan> {
    if t1 == 0 || t2 == 0 || t2 > t3 {
        return Err(Error::param(format!(
            "need 0 < T1 < T2 <= T3, got T1={t1}, T2={t2}, T3={t3}"
        )));
    }
    if t1 >= t2 {
        return Err(Error::param(format!(
            "segment overlap T1={t1} must be shorter than the window T2={t2}"
        )));
    }
    let step = t2 - t1;
    let mut segments = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + t2).min(t3);
        segments.push((start, end));
        if end == t3 {
            break;
        }
        start += step;
    }
    Ok(SegmentPlan {
        t1,
        t2,
        t3,
        segments,
    })
}

/// Runs the two-step method over overlapping segments of `database` and
/// returns the matches, best Step I score first, with frames translated to
/// database coordinates.
pub fn search_database(
    query: &VideoCube,
    database: &VideoCube,
    config: &TsmConfig,
) -> Result<(SegmentPlan, Vec<MatchResult>)> {
    config.validate()?;
    check_dims(query, database)?;
    let t3 = database.num_frames();
    let t2 = config.window.unwrap_or(t3).min(t3);
    let t1 = config
        .overlap
        .unwrap_or_else(|| (query.num_frames() as f64 * config.max_alpha).ceil() as usize);
    let plan = if t2 == t3 {
        SegmentPlan {
            t1,
            t2,
            t3,
            segments: vec![(0, t3)],
        }
    } else {
        plan_segments(t3, t2, t1)?
    };
    let prepared = PreparedQuery::new(query, config)?;
    let results = config.exec.try_map(plan.segments.len(), |i| {
        let (start, end) = plan.segments[i];
        let segment = database.slice_frames(start, end)?;
        let mut r = run_tsm_prepared(&prepared, &segment, config)?;
        r.segment_index = Some(i);
        r.absolute_frame = r.event_frame.map(|f| f + start as isize);
        Ok::<_, Error>(r)
    })?;
    let mut matches: Vec<MatchResult> = results.into_iter().filter(|r| r.matched).collect();
    matches.sort_by(|a, b| {
        b.step1_score
            .total_cmp(&a.step1_score)
            .then(a.segment_index.cmp(&b.segment_index))
    });
    Ok((plan, matches))
}

/// Threshold selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Just above the highest unmatched score.
    MinFalsePositive,
    /// The lowest matched score.
    MinFalseNegative,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-fp" | "min-false-positive" => Ok(Policy::MinFalsePositive),
            "min-fn" | "min-false-negative" => Ok(Policy::MinFalseNegative),
            other => Err(Error::param(format!(
                "unknown policy '{other}', expected min-fp or min-fn"
            ))),
        }
    }
}

/// A calibrated decision boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    /// Whether a score equal to `value` counts as a match.
    pub inclusive: bool,
    pub policy: Policy,
}

impl Threshold {
    pub fn accepts(&self, score: f64) -> bool {
        if self.inclusive {
            score >= self.value
        } else {
            score > self.value
        }
    }

    /// Equivalent inclusive bound, for use as [`TsmConfig::threshold`].
    pub fn inclusive_value(&self) -> f64 {
        if self.inclusive {
            self.value
        } else {
            self.value.next_up()
        }
    }
}

/// Picks a threshold from labelled score samples.
pub fn calibrate_threshold(
    matched: &[f64],
    unmatched: &[f64],
    policy: Policy,
) -> Result<Threshold> {
    if matched.is_empty() || unmatched.is_empty() {
        return Err(Error::param(
            "calibration needs at least one matched and one unmatched score",
        ));
    }
    if matched.iter().chain(unmatched).any(|v| !v.is_finite()) {
        return Err(Error::param("calibration scores must be finite"));
    }
    Ok(match policy {
        Policy::MinFalsePositive => Threshold {
            value: unmatched.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            inclusive: false,
            policy,
        },
        Policy::MinFalseNegative => Threshold {
            value: matched.iter().copied().fold(f64::INFINITY, f64::min),
            inclusive: true,
            policy,
        },
    })
}
