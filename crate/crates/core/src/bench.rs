//! Desk-scale evaluation harness: speed databases, the scale sweep, the
//! detection experiment and the localization experiment.
//!
//! Every experiment is deterministic for a given corpus. Pairings run
//! through [`Exec::try_map`] and reports are assembled in pairing order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correlator::Method;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tsm::{
    calibrate_threshold, run_tsm_prepared, FrameQuery, Policy, PreparedQuery, Threshold, TsmConfig,
};
use crate::video::{generate_synthetic, resample_speed, write_cube, ClipRecipe, SyntheticSpec};

/// Standard error percentage, `|est - truth| / truth * 100`.
pub fn delta_error(alpha_est: f64, alpha_true: f64) -> Result<f64> {
    if !(alpha_true > 0.0 && alpha_true.is_finite()) {
        return Err(Error::param(format!(
            "true alpha must be positive, got {alpha_true}"
        )));
    }
    Ok((alpha_est - alpha_true).abs() / alpha_true * 100.0)
}

/// Mixes a base seed with an index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `count` clip specs drawn from `recipe` with seeds derived from `seed`.
pub fn corpus(recipe: &ClipRecipe, count: usize, seed: u64) -> Vec<SyntheticSpec> {
    (0..count)
        .map(|i| recipe.build(derive_seed(seed, i as u64)))
        .collect()
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_ladder(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Default scale-sweep speeds: 11 log-spaced factors over `[0.05, 40]`.
pub fn default_sweep_speeds() -> Vec<f64> {
    log_ladder(0.05, 40.0, 11)
}

/// Default detection speeds.
pub const DETECTION_SPEEDS: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 4.0];

// ---------------------------------------------------------------------------
// Distribution summaries
// ---------------------------------------------------------------------------

/// Five-number summary plus an equal-width histogram over `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub histogram: Vec<usize>,
}

impl DistributionSummary {
    pub fn bin_width(&self) -> f64 {
        (self.max - self.min) / self.histogram.len() as f64
    }
}

/// Linear interpolation between order statistics at position `p * (n - 1)`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[i] + (sorted[i + 1] - sorted[i]) * f
    }
}

pub fn summarize_distribution(values: &[f64], bins: usize) -> Result<DistributionSummary> {
    if values.is_empty() {
        return Err(Error::param("cannot summarize an empty sample"));
    }
    if bins == 0 {
        return Err(Error::param("histogram needs at least one bin"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("sample contains non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut histogram = vec![0; bins];
    let span = max - min;
    for &v in values {
        let b = if span > 0.0 {
            (((v - min) / span) * bins as f64).floor() as usize
        } else {
            0
        };
        histogram[b.min(bins - 1)] += 1;
    }
    Ok(DistributionSummary {
        count: values.len(),
        min,
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max,
        mean,
        variance,
        histogram,
    })
}

// ---------------------------------------------------------------------------
// Speed database
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: usize,
    pub speed: f64,
    pub frames: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedDatabaseManifest {
    pub seed: u64,
    pub clip_count: usize,
    pub speeds: Vec<f64>,
    pub entries: Vec<ManifestEntry>,
}

impl SpeedDatabaseManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

fn check_inputs(clips: &[SyntheticSpec], speeds: &[f64]) -> Result<()> {
    if clips.is_empty() || speeds.is_empty() {
        return Err(Error::param("need at least one clip and one speed"));
    }
    if let Some(s) = speeds.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::param(format!(
            "speed factors must be positive, got {s}"
        )));
    }
    Ok(())
}

/// Renders every clip (reseeded from `seed`), resamples it at every speed
/// and writes the cubes plus `manifest.json` into `dir`.
pub fn build_speed_database(
    clips: &[SyntheticSpec],
    speeds: &[f64],
    seed: u64,
    dir: impl AsRef<Path>,
) -> Result<SpeedDatabaseManifest> {
    check_inputs(clips, speeds)?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(clips.len() * speeds.len());
    for (i, spec) in clips.iter().enumerate() {
        let spec = SyntheticSpec {
            seed: derive_seed(seed, i as u64),
            ..spec.clone()
        };
        let clip = generate_synthetic(&spec)?;
        for (j, &s) in speeds.iter().enumerate() {
            let cube = resample_speed(&clip, s)?;
            let name = format!("clip{i:03}_speed{j:02}.mtvc");
            write_cube(&cube, dir.join(&name))?;
            entries.push(ManifestEntry {
                clip_id: i,
                speed: s,
                frames: cube.num_frames(),
                path: PathBuf::from(name),
            });
        }
    }
    let manifest = SpeedDatabaseManifest {
        seed,
        clip_count: clips.len(),
        speeds: speeds.to_vec(),
        entries,
    };
    manifest.write(dir.join("manifest.json"))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Whether a score came from the Mellin domain or straight frame correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Mt,
    NoMt,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Mt => "mt",
            Mode::NoMt => "no-mt",
        }
    }
}

/// One query/reference evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub query_id: usize,
    pub reference_id: usize,
    pub speed: f64,
    pub method: Method,
    pub mode: Mode,
    pub score: f64,
    pub matched_truth: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_pred: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimated_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_percent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_frame: Option<isize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_frame: Option<isize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_offset: Option<usize>,
}

impl PairRecord {
    fn new(query_id: usize, reference_id: usize, speed: f64, method: Method, mode: Mode) -> Self {
        Self {
            query_id,
            reference_id,
            speed,
            method,
            mode,
            score: 0.0,
            matched_truth: query_id == reference_id,
            matched_pred: None,
            true_alpha: None,
            estimated_alpha: None,
            delta_percent: None,
            event_frame: None,
            true_frame: None,
            frame_offset: None,
        }
    }
}

/// Delta statistics at one speed for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: Method,
    pub alpha: f64,
    pub median_delta: f64,
    pub mean_delta: f64,
    pub max_delta: f64,
    pub count: usize,
}

/// Rates under one calibrated threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub method: Method,
    pub mode: Mode,
    pub threshold: Threshold,
    /// Percent of true matches accepted; `None` without true matches.
    pub detection_rate: Option<f64>,
    /// Percent of non-matches accepted; `None` without non-matches.
    pub false_positive_rate: Option<f64>,
    /// `min(matched) - max(unmatched)`; positive when separable.
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDistribution {
    pub method: Method,
    pub mode: Mode,
    /// `"matched"` or `"unmatched"`.
    pub group: String,
    pub summary: DistributionSummary,
}

/// Frame offsets at one scale factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetSummary {
    pub scale: f64,
    pub trials: usize,
    /// Trials where Step I rejected the pair.
    pub missed: usize,
    pub max_offset: Option<usize>,
    pub mean_offset: Option<f64>,
}

/// Delta variance per method over the whole sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub power_variance: f64,
    pub peak_variance: f64,
    /// True when Peak's variance does not exceed Power's.
    pub peak_lower_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub experiment: String,
    pub config: TsmConfig,
    pub records: Vec<PairRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detection: Vec<DetectionMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distributions: Vec<NamedDistribution>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub localization: Vec<OffsetSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method_comparison: Option<MethodComparison>,
}

impl BenchReport {
    fn empty(experiment: &str, config: &TsmConfig) -> Self {
        Self {
            experiment: experiment.to_string(),
            config: *config,
            records: Vec::new(),
            curves: Vec::new(),
            detection: Vec::new(),
            distributions: Vec::new(),
            localization: Vec::new(),
            method_comparison: None,
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Detection metrics for a method, mode and policy.
    pub fn metrics(&self, method: Method, mode: Mode, policy: Policy) -> Option<&DetectionMetrics> {
        self.detection
            .iter()
            .find(|d| d.method == method && d.mode == mode && d.threshold.policy == policy)
    }

    /// Delta values of one method, in record order.
    pub fn deltas(&self, method: Method) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.delta_percent)
            .collect()
    }

    /// Writes the plot-ready CSV files this report has data for into `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        if !self.curves.is_empty() {
            let path = dir.join("delta_vs_alpha.csv");
            let mut w = csv_writer(&path)?;
            w.write_record([
                "method",
                "alpha",
                "median_delta",
                "mean_delta",
                "max_delta",
                "count",
            ])?;
            for c in &self.curves {
                w.write_record([
                    c.method.to_string(),
                    c.alpha.to_string(),
                    c.median_delta.to_string(),
                    c.mean_delta.to_string(),
                    c.max_delta.to_string(),
                    c.count.to_string(),
                ])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        if !self.detection.is_empty() {
            let path = dir.join("score_distributions.csv");
            let mut w = csv_writer(&path)?;
            w.write_record([
                "mode",
                "method",
                "group",
                "query_id",
                "reference_id",
                "speed",
                "score",
            ])?;
            for r in &self.records {
                w.write_record([
                    r.mode.as_str().to_string(),
                    r.method.to_string(),
                    group(r.matched_truth).to_string(),
                    r.query_id.to_string(),
                    r.reference_id.to_string(),
                    r.speed.to_string(),
                    r.score.to_string(),
                ])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        if !self.localization.is_empty() {
            let path = dir.join("frame_offsets.csv");
            let mut w = csv_writer(&path)?;
            w.write_record(["clip", "scale", "true_frame", "event_frame", "frame_offset"])?;
            for r in &self.records {
                w.write_record([
                    r.query_id.to_string(),
                    r.speed.to_string(),
                    opt(r.true_frame),
                    opt(r.event_frame),
                    opt(r.frame_offset),
                ])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn group(matched: bool) -> &'static str {
    if matched {
        "matched"
    } else {
        "unmatched"
    }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Estimates `alpha` with both methods for every clip resampled at every
/// speed, against the original clip as query.
pub fn run_scale_sweep(
    clips: &[SyntheticSpec],
    speeds: &[f64],
    config: &TsmConfig,
) -> Result<BenchReport> {
    check_inputs(clips, speeds)?;
    let exec = config.exec;
    let per_clip = exec.try_map(clips.len(), |i| {
        let query = generate_synthetic(&clips[i])?;
        let prepared = PreparedQuery::new(&query, &config.with_exec(Exec::Sequential))?;
        let mut out = Vec::with_capacity(speeds.len() * 2);
        for &s in speeds {
            let reference = resample_speed(&query, s)?;
            let reference_mt = prepared.transform(&reference, Exec::Sequential)?;
            let estimates =
                prepared.estimate_scale_all(&reference_mt, config.threshold, Exec::Sequential)?;
            for e in estimates {
                let mut r = PairRecord::new(i, i, s, e.method, Mode::Mt);
                r.score = e.score;
                r.matched_pred = Some(e.matched);
                r.true_alpha = Some(s);
                r.estimated_alpha = Some(e.alpha);
                r.delta_percent = Some(delta_error(e.alpha, s)?);
                out.push(r);
            }
        }
        Ok::<_, Error>(out)
    })?;
    let mut report = BenchReport::empty("scale-sweep", config);
    report.records = per_clip.concat();
    for m in Method::ALL {
        for &s in speeds {
            let d: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.method == m && r.speed == s)
                .filter_map(|r| r.delta_percent)
                .collect();
            let summary = summarize_distribution(&d, 1)?;
            report.curves.push(CurvePoint {
                method: m,
                alpha: s,
                median_delta: summary.median,
                mean_delta: summary.mean,
                max_delta: summary.max,
                count: summary.count,
            });
        }
    }
    let power = summarize_distribution(&report.deltas(Method::Power), 20)?;
    let peak = summarize_distribution(&report.deltas(Method::Peak), 20)?;
    report.method_comparison = Some(MethodComparison {
        power_variance: power.variance,
        peak_variance: peak.variance,
        peak_lower_variance: peak.variance <= power.variance,
    });
    Ok(report)
}

fn rate(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64 * 100.0)
}

/// Correlates every original clip against every clip at every speed, with
/// and without the Mellin stage, and calibrates thresholds on the result.
pub fn run_detection_experiment(
    clips: &[SyntheticSpec],
    speeds: &[f64],
    config: &TsmConfig,
) -> Result<BenchReport> {
    check_inputs(clips, speeds)?;
    let exec = config.exec;
    let originals = exec.try_map(clips.len(), |i| generate_synthetic(&clips[i]))?;
    let n_entries = clips.len() * speeds.len();
    let database = exec.try_map(n_entries, |k| {
        resample_speed(&originals[k / speeds.len()], speeds[k % speeds.len()])
    })?;
    let seq = config.with_exec(Exec::Sequential);
    let prepared = exec.try_map(clips.len(), |i| PreparedQuery::new(&originals[i], &seq))?;
    let frame_queries = exec.try_map(clips.len(), |i| {
        FrameQuery::new(&originals[i], Exec::Sequential)
    })?;
    let database_mt = exec.try_map(n_entries, |k| {
        prepared[0].transform(&database[k], Exec::Sequential)
    })?;
    // every query shares the first query's grid when lengths agree
    let shared_grid = prepared.iter().all(|p| p.params() == prepared[0].params());

    let pairs = clips.len() * n_entries;
    let per_pair = exec.try_map(pairs, |idx| {
        let q = idx / n_entries;
        let k = idx % n_entries;
        let (ref_id, s) = (k / speeds.len(), speeds[k % speeds.len()]);
        let reference_mt = if shared_grid {
            database_mt[k].clone()
        } else {
            prepared[q].transform(&database[k], Exec::Sequential)?
        };
        let mt =
            prepared[q].estimate_scale_all(&reference_mt, config.threshold, Exec::Sequential)?;
        let plain = frame_queries[q].localize_all(&database[k], Exec::Sequential)?;
        let mut out = Vec::with_capacity(4);
        for e in mt {
            let mut r = PairRecord::new(q, ref_id, s, e.method, Mode::Mt);
            r.score = e.score;
            r.estimated_alpha = Some(e.alpha);
            if r.matched_truth {
                r.true_alpha = Some(s);
                r.delta_percent = Some(delta_error(e.alpha, s)?);
            }
            out.push(r);
        }
        for (m, loc) in Method::ALL.into_iter().zip(plain) {
            let mut r = PairRecord::new(q, ref_id, s, m, Mode::NoMt);
            r.score = loc.score;
            r.event_frame = Some(loc.event_frame);
            out.push(r);
        }
        Ok::<_, Error>(out)
    })?;
    let mut report = BenchReport::empty("detection", config);
    report.records = per_pair.concat();

    for mode in [Mode::Mt, Mode::NoMt] {
        for m in Method::ALL {
            let select = |truth: bool| -> Vec<f64> {
                report
                    .records
                    .iter()
                    .filter(|r| r.mode == mode && r.method == m && r.matched_truth == truth)
                    .map(|r| r.score)
                    .collect()
            };
            let (matched, unmatched) = (select(true), select(false));
            for (truth, scores) in [(true, &matched), (false, &unmatched)] {
                if !scores.is_empty() {
                    report.distributions.push(NamedDistribution {
                        method: m,
                        mode,
                        group: group(truth).to_string(),
                        summary: summarize_distribution(scores, 20)?,
                    });
                }
            }
            report
                .detection
                .extend(detection_metrics(&matched, &unmatched, m, mode)?);
        }
    }
    // predictions at the min-false-positive threshold of each group
    let thresholds: Vec<(Method, Mode, Threshold)> = report
        .detection
        .iter()
        .filter(|d| d.threshold.policy == Policy::MinFalsePositive)
        .map(|d| (d.method, d.mode, d.threshold))
        .collect();
    for r in &mut report.records {
        if let Some((_, _, t)) = thresholds
            .iter()
            .find(|(m, mode, _)| *m == r.method && *mode == r.mode)
        {
            r.matched_pred = Some(t.accepts(r.score));
        }
    }
    Ok(report)
}

/// Rates under both calibration policies. With only one class present the
/// missing side is calibrated as if it held a single score at the opposite
/// extreme, so rates for the present class stay meaningful.
fn detection_metrics(
    matched: &[f64],
    unmatched: &[f64],
    method: Method,
    mode: Mode,
) -> Result<Vec<DetectionMetrics>> {
    if matched.is_empty() && unmatched.is_empty() {
        return Ok(Vec::new());
    }
    let m_cal: &[f64] = if matched.is_empty() {
        &[f64::INFINITY]
    } else {
        matched
    };
    let u_cal: &[f64] = if unmatched.is_empty() {
        &[f64::NEG_INFINITY]
    } else {
        unmatched
    };
    let separation = m_cal.iter().copied().fold(f64::INFINITY, f64::min)
        - u_cal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::with_capacity(2);
    for policy in [Policy::MinFalsePositive, Policy::MinFalseNegative] {
        let threshold = calibrate_threshold_unchecked(m_cal, u_cal, policy)?;
        let hits = matched.iter().filter(|&&s| threshold.accepts(s)).count();
        let false_hits = unmatched.iter().filter(|&&s| threshold.accepts(s)).count();
        out.push(DetectionMetrics {
            method,
            mode,
            threshold,
            detection_rate: rate(hits, matched.len()),
            false_positive_rate: rate(false_hits, unmatched.len()),
            separation: if separation.is_finite() {
                separation
            } else {
                0.0
            },
        });
    }
    Ok(out)
}

fn calibrate_threshold_unchecked(
    matched: &[f64],
    unmatched: &[f64],
    policy: Policy,
) -> Result<Threshold> {
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if finite(matched) && finite(unmatched) {
        return calibrate_threshold(matched, unmatched, policy);
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

/// Embeds each clip, stretched by each scale factor, into a reference of
/// `reference_frames` frames (padded by holding the first and last frames)
/// and runs the two-step method with the original clip as query.
/// `placements` are fractions of the free room before the event.
pub fn run_localization_experiment(
    clips: &[SyntheticSpec],
    scale_factors: &[f64],
    placements: &[f64],
    reference_frames: usize,
    config: &TsmConfig,
) -> Result<BenchReport> {
    check_inputs(clips, scale_factors)?;
    if placements.is_empty() || placements.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::param("placements must be fractions in [0, 1]"));
    }
    let exec = config.exec;
    let seq = config.with_exec(Exec::Sequential);
    let per_clip = exec.try_map(clips.len(), |i| {
        let query = generate_synthetic(&clips[i])?;
        let prepared = PreparedQuery::new(&query, &seq)?;
        let mut out = Vec::with_capacity(scale_factors.len() * placements.len());
        for &s in scale_factors {
            let event = resample_speed(&query, s)?;
            let room = reference_frames
                .checked_sub(event.num_frames())
                .ok_or_else(|| {
                    Error::param(format!(
                        "event of {} frames does not fit a {reference_frames}-frame reference",
                        event.num_frames()
                    ))
                })?;
            for &p in placements {
                let lead = (p * room as f64).round() as usize;
                let reference = event.pad_hold(lead, room - lead);
                let result = run_tsm_prepared(&prepared, &reference, &seq)?;
                let mut r = PairRecord::new(i, i, s, config.method, Mode::Mt);
                r.score = result.step1_score;
                r.matched_pred = Some(result.matched);
                r.true_alpha = Some(s);
                r.estimated_alpha = Some(result.alpha);
                r.delta_percent = Some(delta_error(result.alpha, s)?);
                r.true_frame = Some(lead as isize);
                r.event_frame = result.event_frame;
                r.frame_offset = result.event_frame.map(|f| f.abs_diff(lead as isize));
                out.push(r);
            }
        }
        Ok::<_, Error>(out)
    })?;
    let mut report = BenchReport::empty("localization", config);
    report.records = per_clip.concat();
    for &s in scale_factors {
        let trials: Vec<&PairRecord> = report.records.iter().filter(|r| r.speed == s).collect();
        let offsets: Vec<usize> = trials.iter().filter_map(|r| r.frame_offset).collect();
        report.localization.push(OffsetSummary {
            scale: s,
            trials: trials.len(),
            missed: trials.len() - offsets.len(),
            max_offset: offsets.iter().copied().max(),
            mean_offset: (!offsets.is_empty())
                .then(|| offsets.iter().sum::<usize>() as f64 / offsets.len() as f64),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        assert_eq!(delta_error(3.0, 3.0).unwrap(), 0.0);
        assert!((delta_error(3.3, 3.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((delta_error(0.05, 0.1).unwrap() - 50.0).abs() < 1e-12);
        assert!(delta_error(1.0, 0.0).is_err());
        assert!(delta_error(1.0, -2.0).is_err());
    }

    #[test]
    fn quartiles_follow_inclusive_rule() {
        let s = summarize_distribution(&[4.0, 1.0, 3.0, 2.0], 4).unwrap();
        assert_eq!(
            (s.min, s.q1, s.median, s.q3, s.max),
            (1.0, 1.75, 2.5, 3.25, 4.0)
        );
        assert_eq!(s.histogram.iter().sum::<usize>(), 4);
    }

    #[test]
    fn degenerate_sample() {
        let s = summarize_distribution(&[0.3; 7], 5).unwrap();
        assert_eq!(
            (s.min, s.q1, s.median, s.q3, s.max),
            (0.3, 0.3, 0.3, 0.3, 0.3)
        );
        assert_eq!(s.histogram, vec![7, 0, 0, 0, 0]);
        assert_eq!(s.variance, 0.0);
        assert!(summarize_distribution(&[], 5).is_err());
        assert!(summarize_distribution(&[1.0], 0).is_err());
    }

    #[test]
    fn max_lands_in_last_bin() {
        let s = summarize_distribution(&[0.0, 0.5, 1.0], 2).unwrap();
        assert_eq!(s.histogram, vec![1, 2]);
        assert_eq!(s.bin_width(), 0.5);
    }

    #[test]
    fn ladder_endpoints() {
        let l = default_sweep_speeds();
        assert_eq!(l.len(), 11);
        assert!((l[0] - 0.05).abs() < 1e-12 && (l[10] - 40.0).abs() < 1e-9);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        let mut u = s.clone();
        u.sort();
        u.dedup();
        assert_eq!(u.len(), 100);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn detection_without_true_matches_reports_na() {
        let d = detection_metrics(&[], &[0.1, 0.4], Method::Power, Mode::Mt).unwrap();
        assert!(d.iter().all(|m| m.detection_rate.is_none()));
        let fp = &d[0];
        assert_eq!(fp.false_positive_rate, Some(0.0));
    }

    #[test]
    fn separable_scores_give_perfect_rates() {
        let d = detection_metrics(&[0.8, 0.9], &[0.1, 0.3], Method::Peak, Mode::Mt).unwrap();
        for m in &d {
            assert_eq!(m.detection_rate, Some(100.0));
            assert_eq!(m.false_positive_rate, Some(0.0));
        }
        assert!((d[0].separation - 0.5).abs() < 1e-12);
    }
}
