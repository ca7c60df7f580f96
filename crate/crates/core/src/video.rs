//! Video cube data model, cube file I/O, temporal preprocessing and the
//! seeded synthetic clip generator.
//!
//! A [`VideoCube`] stores grayscale intensities frame-major, row-major within
//! a frame, so sample `(x, y, t)` lives at `t * width * height + y * width + x`.
//! Samples are kept as `f64` in memory and as little-endian `f32` on disk.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magic bytes opening a cube-binary file.
pub const CUBE_MAGIC: &[u8; 4] = b"MTVC";
/// Cube-binary format version written by [`write_cube`].
pub const CUBE_VERSION: u32 = 1;
/// Size in bytes of the cube-binary header.
pub const CUBE_HEADER_LEN: usize = 28;

/// A stack of grayscale frames with a frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoCube {
    width: usize,
    height: usize,
    num_frames: usize,
    frame_rate: f64,
    samples: Vec<f64>,
}

impl VideoCube {
    /// Builds a cube, checking shape, frame rate and sample finiteness.
    pub fn new(
        width: usize,
        height: usize,
        num_frames: usize,
        frame_rate: f64,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!(
                "cube must be at least 1x1, got {width}x{height}"
            )));
        }
        if num_frames < 2 {
            return Err(Error::param(format!(
                "cube needs at least 2 frames, got {num_frames}"
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::param(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        let expected = width * height * num_frames;
        if samples.len() != expected {
            return Err(Error::param(format!(
                "expected {expected} samples for {width}x{height}x{num_frames}, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("sample {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            num_frames,
            frame_rate,
            samples,
        })
    }

    /// Cube with every sample set to `value`.
    pub fn filled(
        width: usize,
        height: usize,
        num_frames: usize,
        frame_rate: f64,
        value: f64,
    ) -> Result<Self> {
        Self::new(
            width,
            height,
            num_frames,
            frame_rate,
            vec![value; width * height * num_frames],
        )
    }

    /// Builds a cube from pixel-major data (each pixel's stream contiguous).
    pub fn from_pixel_major(
        width: usize,
        height: usize,
        num_frames: usize,
        frame_rate: f64,
        pixel_major: &[f64],
    ) -> Result<Self> {
        let pixels = width * height;
        if pixel_major.len() != pixels * num_frames {
            return Err(Error::param("pixel-major buffer has the wrong length"));
        }
        let mut samples = vec![0.0; pixels * num_frames];
        for p in 0..pixels {
            let stream = &pixel_major[p * num_frames..(p + 1) * num_frames];
            for (t, &v) in stream.iter().enumerate() {
                samples[t * pixels + p] = v;
            }
        }
        Self::new(width, height, num_frames, frame_rate, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.samples[t * n..(t + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.samples[t * self.pixel_count() + y * self.width + x]
    }

    /// True if every sample lies in `[0, 1]`.
    pub fn is_unit_range(&self) -> bool {
        self.samples.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Time series of pixel `p` (row-major index).
    pub fn stream(&self, p: usize) -> Vec<f64> {
        let n = self.pixel_count();
        (0..self.num_frames)
            .map(|t| self.samples[t * n + p])
            .collect()
    }

    /// The pixel at `(x, y)` as a [`PixelStream`] sampled at the frame rate.
    pub fn pixel_stream(&self, x: usize, y: usize) -> Result<PixelStream> {
        if x >= self.width || y >= self.height {
            return Err(Error::param(format!(
                "pixel ({x}, {y}) outside {}x{} frame",
                self.width, self.height
            )));
        }
        PixelStream::new(self.stream(y * self.width + x), self.frame_rate)
    }

    /// Transposes to pixel-major order: pixel `p`'s stream occupies
    /// `p * num_frames .. (p + 1) * num_frames`.
    pub fn to_pixel_major(&self) -> Vec<f64> {
        let n = self.pixel_count();
        let mut out = vec![0.0; self.samples.len()];
        for t in 0..self.num_frames {
            let frame = &self.samples[t * n..(t + 1) * n];
            for (p, &v) in frame.iter().enumerate() {
                out[p * self.num_frames + t] = v;
            }
        }
        out
    }

    /// Frames `start..end` as a new cube.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.num_frames {
            return Err(Error::param(format!(
                "frame range {start}..{end} invalid for {} frames",
                self.num_frames
            )));
        }
        let n = self.pixel_count();
        Self::new(
            self.width,
            self.height,
            end - start,
            self.frame_rate,
            self.samples[start * n..end * n].to_vec(),
        )
    }

    /// Prepends `lead` and appends `trail` copies of the first and last frame.
    pub fn pad_hold(&self, lead: usize, trail: usize) -> Self {
        let n = self.pixel_count();
        let mut samples = Vec::with_capacity((self.num_frames + lead + trail) * n);
        for _ in 0..lead {
            samples.extend_from_slice(self.frame(0));
        }
        samples.extend_from_slice(&self.samples);
        for _ in 0..trail {
            samples.extend_from_slice(self.frame(self.num_frames - 1));
        }
        Self {
            num_frames: self.num_frames + lead + trail,
            samples,
            ..*self
        }
    }

    /// Prepends `lead` and appends `trail` frames filled with `value`.
    pub fn pad_constant(&self, lead: usize, trail: usize, value: f64) -> Self {
        let n = self.pixel_count();
        let mut samples = vec![value; lead * n];
        samples.extend_from_slice(&self.samples);
        samples.extend(std::iter::repeat_n(value, trail * n));
        Self {
            num_frames: self.num_frames + lead + trail,
            samples,
            ..*self
        }
    }

    /// Multiplies every sample by `gain` (the result may leave `[0, 1]`).
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * gain).collect(),
            ..*self
        }
    }

    /// Concatenates cubes of identical spatial size along time.
    pub fn concat(parts: &[&VideoCube]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::param("nothing to concatenate"))?;
        let mut samples = Vec::new();
        let mut frames = 0;
        for c in parts {
            if c.width != first.width || c.height != first.height {
                return Err(Error::Dimension(format!(
                    "{}x{} vs {}x{}",
                    c.width, c.height, first.width, first.height
                )));
            }
            samples.extend_from_slice(&c.samples);
            frames += c.num_frames;
        }
        Self::new(first.width, first.height, frames, first.frame_rate, samples)
    }
}

/// A single pixel's time series.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelStream {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl PixelStream {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::param(format!(
                "pixel stream needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::param(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("pixel stream contains a non-finite sample"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

/// On-disk cube formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeFormat {
    /// Single `MTVC` file of little-endian `f32` samples.
    Binary,
    /// Directory of `frame_NNNNNN.pgm` files plus `manifest.json`.
    PgmSequence,
}

impl CubeFormat {
    /// Directories are PGM sequences, everything else is cube-binary.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            CubeFormat::PgmSequence
        } else {
            CubeFormat::Binary
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PgmManifest {
    fps: f64,
    frames: usize,
}

/// Reads a cube in the given format. Never returns a partially filled cube.
pub fn read_cube(path: impl AsRef<Path>, format: CubeFormat) -> Result<VideoCube> {
    let path = path.as_ref();
    match format {
        CubeFormat::Binary => read_binary(path),
        CubeFormat::PgmSequence => read_pgm_sequence(path),
    }
}

/// Writes `cube` in the cube-binary format.
pub fn write_cube(cube: &VideoCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(CUBE_HEADER_LEN);
    header.extend_from_slice(CUBE_MAGIC);
    header.extend_from_slice(&CUBE_VERSION.to_le_bytes());
    for dim in [cube.width, cube.height, cube.num_frames] {
        let dim = u32::try_from(dim).map_err(|_| Error::param("cube dimension exceeds u32"))?;
        header.extend_from_slice(&dim.to_le_bytes());
    }
    header.extend_from_slice(&(cube.frame_rate as f32).to_le_bytes());
    header.extend_from_slice(&[0u8; 4]);
    debug_assert_eq!(header.len(), CUBE_HEADER_LEN);
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    for &v in &cube.samples {
        w.write_all(&(v as f32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_binary(path: &Path) -> Result<VideoCube> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < CUBE_HEADER_LEN {
        return Err(Error::format(path, "file shorter than the cube header"));
    }
    if &bytes[0..4] != CUBE_MAGIC {
        return Err(Error::format(path, "missing MTVC magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != CUBE_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let (width, height, frames) = (word(8) as usize, word(12) as usize, word(16) as usize);
    let fps = f32::from_le_bytes(bytes[20..24].try_into().unwrap()) as f64;
    if bytes[24..28] != [0u8; 4] {
        return Err(Error::format(path, "reserved header bytes are not zero"));
    }
    let count = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(frames))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    let payload = &bytes[CUBE_HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::format(
            path,
            format!(
                "header declares {width}x{height}x{frames} ({} bytes) but payload has {} bytes",
                count * 4,
                payload.len()
            ),
        ));
    }
    let samples = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    VideoCube::new(width, height, frames, fps, samples)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Name of frame `t` inside a PGM-sequence directory.
pub fn pgm_frame_name(t: usize) -> String {
    format!("frame_{t:06}.pgm")
}

fn read_pgm_sequence(dir: &Path) -> Result<VideoCube> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: PgmManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if manifest.frames < 2 {
        return Err(Error::format(
            &manifest_path,
            "manifest declares fewer than 2 frames",
        ));
    }
    let mut dims = None;
    let mut samples = Vec::new();
    for t in 0..manifest.frames {
        let frame_path = dir.join(pgm_frame_name(t));
        let (w, h, values) = read_pgm(&frame_path)?;
        match dims {
            None => dims = Some((w, h)),
            Some(d) if d != (w, h) => {
                return Err(Error::format(
                    &frame_path,
                    format!("frame is {w}x{h}, expected {}x{}", d.0, d.1),
                ))
            }
            _ => {}
        }
        samples.extend(values);
    }
    let (w, h) = dims.unwrap();
    VideoCube::new(w, h, manifest.frames, manifest.fps, samples)
        .map_err(|e| Error::format(&manifest_path, e.to_string()))
}

/// Parses a binary (P5) PGM, returning samples normalized by maxval.
fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(Error::format(
            path,
            format!("expected P5, found {}", tokens[0]),
        ));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format(path, format!("bad {what} '{s}'")))
    };
    let (w, h, maxval) = (
        parse(&tokens[1], "width")?,
        parse(&tokens[2], "height")?,
        parse(&tokens[3], "maxval")?,
    );
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, "PGM dimensions or maxval out of range"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let need = w * h * bytes_per;
    let raster = bytes
        .get(pos..)
        .filter(|r| r.len() >= need)
        .ok_or_else(|| Error::format(path, "PGM raster is truncated"))?;
    let scale = maxval as f64;
    let values = if bytes_per == 1 {
        raster[..need].iter().map(|&b| b as f64 / scale).collect()
    } else {
        raster[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    Ok((w, h, values))
}

/// Writes `cube` as an 8-bit PGM sequence (samples clamped to `[0, 1]`).
pub fn write_pgm_sequence(cube: &VideoCube, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in 0..cube.num_frames {
        let path = dir.join(pgm_frame_name(t));
        let mut data = format!("P5\n{} {}\n255\n", cube.width, cube.height).into_bytes();
        data.extend(
            cube.frame(t)
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
    }
    let manifest = PgmManifest {
        fps: cube.frame_rate,
        frames: cube.num_frames,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

// ---------------------------------------------------------------------------
// Temporal preprocessing
// ---------------------------------------------------------------------------

/// Removes each pixel's temporal mean.
pub fn subtract_temporal_mean(cube: &VideoCube) -> VideoCube {
    let n = cube.pixel_count();
    let mut means = vec![0.0; n];
    for t in 0..cube.num_frames {
        for (m, v) in means.iter_mut().zip(cube.frame(t)) {
            *m += v;
        }
    }
    let inv = 1.0 / cube.num_frames as f64;
    means.iter_mut().for_each(|m| *m *= inv);
    let mut samples = cube.samples.clone();
    for frame in samples.chunks_exact_mut(n) {
        for (v, m) in frame.iter_mut().zip(&means) {
            *v -= m;
        }
    }
    VideoCube { samples, ..*cube }
}

/// Number of frames produced by [`resample_speed`] for duration multiplier `s`.
pub fn resampled_len(num_frames: usize, s: f64) -> usize {
    (s * num_frames as f64).round() as usize
}

/// Stretches (`s > 1`) or compresses (`s < 1`) the content in time.
///
/// The output has `round(s * num_frames)` frames; output frame `t'` samples
/// input time `t' * (n - 1) / (n' - 1)` with linear interpolation, so the
/// first and last frames map onto each other. The frame rate is unchanged.
pub fn resample_speed(cube: &VideoCube, s: f64) -> Result<VideoCube> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::param(format!(
            "duration multiplier must be positive, got {s}"
        )));
    }
    let n = cube.num_frames;
    let out_len = resampled_len(n, s);
    if out_len < 2 {
        return Err(Error::param(format!(
            "duration multiplier {s} leaves {out_len} frame(s) from {n}"
        )));
    }
    if out_len == n {
        return Ok(cube.clone());
    }
    let px = cube.pixel_count();
    let den = out_len - 1;
    let mut samples = Vec::with_capacity(out_len * px);
    for t_out in 0..out_len {
        let num = t_out * (n - 1);
        let i = num / den;
        let frac = (num % den) as f64 / den as f64;
        let a = cube.frame(i);
        if frac == 0.0 || i == n - 1 {
            samples.extend_from_slice(a);
        } else {
            let b = cube.frame(i + 1);
            samples.extend(a.iter().zip(b).map(|(&a, &b)| a + (b - a) * frac));
        }
    }
    VideoCube::new(cube.width, cube.height, out_len, cube.frame_rate, samples)
}

// ---------------------------------------------------------------------------
// Synthetic clips
// ---------------------------------------------------------------------------

/// Spatial footprint of a synthetic object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectShape {
    /// Isotropic Gaussian of standard deviation `sigma` pixels. With
    /// `support` set, the profile is cut to zero beyond `support * sigma`
    /// (shifted so it stays continuous).
    Blob {
        sigma: f64,
        #[serde(default)]
        support: Option<f64>,
    },
    /// Axis-aligned box with area-weighted pixel coverage.
    Rect { width: f64, height: f64 },
}

/// Sinusoidal intensity modulation, in cycles per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flicker {
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Gaussian temporal envelope (center and standard deviation in frames).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub center: f64,
    pub width: f64,
}

/// One rendered object: shape, straight-line trajectory and intensity law.
///
/// The object's contribution at frame `t` is
/// `contrast * profile(x - start - velocity * t) * flicker(t) * envelope(t)`,
/// where absent modulation terms count as 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObject {
    pub shape: ObjectShape,
    pub start: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    #[serde(default)]
    pub flicker: Option<Flicker>,
    #[serde(default)]
    pub envelope: Option<Envelope>,
}

fn default_contrast() -> f64 {
    1.0
}

fn default_frame_rate() -> f64 {
    30.0
}

/// Full description of a synthetic clip. Identical specs render identical
/// cubes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default)]
    pub background: f64,
    pub objects: Vec<SyntheticObject>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.frames < 2 {
            return Err(Error::param(
                "synthetic clip needs width, height >= 1 and frames >= 2",
            ));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::param("frame rate must be positive"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::param("noise sigma must be >= 0"));
        }
        if !self.background.is_finite() {
            return Err(Error::param("background must be finite"));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            let ok = match obj.shape {
                ObjectShape::Blob { sigma, support } => {
                    sigma.is_finite() && sigma > 0.0 && support.is_none_or(|k| k > 0.0)
                }
                ObjectShape::Rect { width, height } => {
                    width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0
                }
            };
            if !ok {
                return Err(Error::param(format!("object {i} has degenerate geometry")));
            }
            if let Some(env) = &obj.envelope {
                if !(env.width > 0.0 && env.center.is_finite()) {
                    return Err(Error::param(format!("object {i} has an invalid envelope")));
                }
            }
            let finite = obj.start.iter().chain(&obj.velocity).all(|v| v.is_finite())
                && obj.contrast.is_finite()
                && obj
                    .flicker
                    .as_ref()
                    .is_none_or(|f| f.frequency.is_finite() && f.phase.is_finite());
            if !finite {
                return Err(Error::param(format!(
                    "object {i} has non-finite parameters"
                )));
            }
        }
        Ok(())
    }
}

impl SyntheticObject {
    fn intensity(&self, t: f64) -> f64 {
        let mut a = self.contrast;
        if let Some(f) = &self.flicker {
            a *= (std::f64::consts::TAU * f.frequency * t + f.phase).sin();
        }
        if let Some(env) = &self.envelope {
            let z = (t - env.center) / env.width;
            a *= (-0.5 * z * z).exp();
        }
        a
    }

    fn profile(&self, x: f64, y: f64, cx: f64, cy: f64) -> f64 {
        match self.shape {
            ObjectShape::Blob { sigma, support } => {
                let r2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (sigma * sigma);
                let g = (-0.5 * r2).exp();
                match support {
                    None => g,
                    Some(k) => {
                        let floor = (-0.5 * k * k).exp();
                        ((g - floor) / (1.0 - floor)).max(0.0)
                    }
                }
            }
            ObjectShape::Rect { width, height } => {
                let overlap = |p: f64, c: f64, half: f64| {
                    ((p + 0.5).min(c + half) - (p - 0.5).max(c - half)).max(0.0)
                };
                overlap(x, cx, width / 2.0) * overlap(y, cy, height / 2.0)
            }
        }
    }
}

/// Renders a synthetic clip. Samples are clipped to `[0, 1]` and rounded to
/// `f32` precision so the cube survives a binary round trip bit-exactly.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<VideoCube> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut samples = Vec::with_capacity(w * h * spec.frames);
    for t in 0..spec.frames {
        let tf = t as f64;
        let active: Vec<(f64, f64, f64, &SyntheticObject)> = spec
            .objects
            .iter()
            .map(|o| {
                (
                    o.intensity(tf),
                    o.start[0] + o.velocity[0] * tf,
                    o.start[1] + o.velocity[1] * tf,
                    o,
                )
            })
            .collect();
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let v = active.iter().fold(spec.background, |acc, (a, cx, cy, o)| {
                    acc + a * o.profile(xf, yf, *cx, *cy)
                });
                samples.push(v);
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::param(format!("noise distribution: {e}")))?;
        for v in &mut samples {
            *v += normal.sample(&mut rng);
        }
    }
    for v in &mut samples {
        *v = v.clamp(0.0, 1.0) as f32 as f64;
    }
    VideoCube::new(w, h, spec.frames, spec.frame_rate, samples)
}

/// Recipe for the randomized flickering-event clips used by the benchmark
/// harness: a few compact blobs on a mid-gray background, each flickering
/// symmetrically about the background inside a Gaussian time envelope.
///
/// Flicker periods are drawn between `frames / 25` and `frames / 10`, and
/// envelopes are centered in the middle fifth of the clip with widths of
/// 9-14% of its length, so content is defined relative to the clip length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecipe {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub frame_rate: f64,
    pub objects: usize,
    /// Upper bound on |velocity| per axis in pixels per frame.
    pub max_drift: f64,
    pub noise_sigma: f64,
}

impl Default for ClipRecipe {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            frames: 300,
            frame_rate: 30.0,
            objects: 4,
            max_drift: 0.0,
            noise_sigma: 0.0,
        }
    }
}

impl ClipRecipe {
    /// Draws a concrete [`SyntheticSpec`] from `seed`.
    pub fn build(&self, seed: u64) -> SyntheticSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.frames as f64;
        let size_scale = self.width.min(self.height) as f64 / 32.0;
        let objects = (0..self.objects)
            .map(|_| {
                let start = [
                    rng.random_range(0.0..self.width as f64),
                    rng.random_range(0.0..self.height as f64),
                ];
                let velocity = if self.max_drift > 0.0 {
                    [
                        rng.random_range(-self.max_drift..=self.max_drift),
                        rng.random_range(-self.max_drift..=self.max_drift),
                    ]
                } else {
                    [0.0, 0.0]
                };
                let sigma = rng.random_range(1.5..3.0) * size_scale;
                let period = n / rng.random_range(10.0..25.0);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let contrast = rng.random_range(0.1..0.2);
                let center = rng.random_range(0.4..0.6) * n;
                let width = rng.random_range(0.09..0.14) * n;
                SyntheticObject {
                    shape: ObjectShape::Blob {
                        sigma,
                        support: Some(2.5),
                    },
                    start,
                    velocity,
                    contrast,
                    flicker: Some(Flicker {
                        frequency: 1.0 / period,
                        phase,
                    }),
                    envelope: Some(Envelope { center, width }),
                }
            })
            .collect();
        SyntheticSpec {
            width: self.width,
            height: self.height,
            frames: self.frames,
            frame_rate: self.frame_rate,
            background: 0.5,
            objects,
            noise_sigma: self.noise_sigma,
            seed,
        }
    }

    /// Builds and renders the clip for `seed`.
    pub fn render(&self, seed: u64) -> Result<VideoCube> {
        generate_synthetic(&self.build(seed))
    }
}

/// Resolves the on-disk format from the path and reads the cube.
pub fn read_cube_auto(path: impl AsRef<Path>) -> Result<VideoCube> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(
            PathBuf::from(path),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    read_cube(path, CubeFormat::detect(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_cube(w: usize, h: usize, n: usize) -> VideoCube {
        let samples = (0..w * h * n)
            .map(|i| ((i * 37) % 101) as f64 / 100.0)
            .collect();
        VideoCube::new(w, h, n, 30.0, samples).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(VideoCube::new(0, 1, 2, 30.0, vec![]).is_err());
        assert!(VideoCube::new(1, 1, 1, 30.0, vec![0.0]).is_err());
        assert!(VideoCube::new(1, 1, 2, 0.0, vec![0.0; 2]).is_err());
        assert!(VideoCube::new(1, 1, 2, 30.0, vec![0.0; 3]).is_err());
        assert!(VideoCube::new(1, 1, 2, 30.0, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn pixel_major_round_trip() {
        let c = ramp_cube(3, 2, 5);
        let pm = c.to_pixel_major();
        assert_eq!(pm[..5], c.stream(0)[..]);
        let back = VideoCube::from_pixel_major(3, 2, 5, 30.0, &pm).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn binary_round_trip_all_half() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mtvc");
        let c = VideoCube::filled(2, 2, 4, 30.0, 0.5).unwrap();
        write_cube(&c, &path).unwrap();
        let back = read_cube(&path, CubeFormat::Binary).unwrap();
        assert_eq!(back.samples().len(), 16);
        assert!(back.samples().iter().all(|&v| v == 0.5));
        assert_eq!(back, c);
    }

    #[test]
    fn binary_file_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mtvc");
        let c = VideoCube::new(1, 1, 2, 24.0, vec![0.0, 1.0]).unwrap();
        write_cube(&c, &path).unwrap();
        assert_eq!(
            fs::metadata(&path).unwrap().len(),
            (CUBE_HEADER_LEN + 8) as u64
        );
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"MTVC");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mtvc");
        let c = VideoCube::filled(1, 1, 300, 30.0, 0.25).unwrap();
        write_cube(&c, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..CUBE_HEADER_LEN + 200 * 4]).unwrap();
        let err = read_cube(&path, CubeFormat::Binary).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mtvc");
        fs::write(&path, [0u8; 40]).unwrap();
        assert!(matches!(
            read_cube(&path, CubeFormat::Binary),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn write_to_missing_directory_fails() {
        let c = VideoCube::filled(1, 1, 2, 30.0, 0.0).unwrap();
        let err = write_cube(&c, "/nonexistent-dir/for/sure/c.mtvc").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    fn write_pgm(path: &Path, w: usize, h: usize, maxval: usize, value: u8) {
        let mut data = format!("P5\n# comment\n{w} {h}\n{maxval}\n").into_bytes();
        data.extend(std::iter::repeat_n(value, w * h));
        fs::write(path, data).unwrap();
    }

    #[test]
    fn pgm_sequence_normalizes_by_maxval() {
        let dir = tempfile::tempdir().unwrap();
        for t in 0..3 {
            write_pgm(&dir.path().join(pgm_frame_name(t)), 4, 2, 255, 255);
        }
        fs::write(
            dir.path().join("manifest.json"),
            r#"{"fps": 25, "frames": 3}"#,
        )
        .unwrap();
        let c = read_cube(dir.path(), CubeFormat::PgmSequence).unwrap();
        assert_eq!((c.width(), c.height(), c.num_frames()), (4, 2, 3));
        assert_eq!(c.frame_rate(), 25.0);
        assert!(c.samples().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pgm_sequence_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join(pgm_frame_name(0)), 4, 2, 255, 10);
        write_pgm(&dir.path().join(pgm_frame_name(1)), 3, 2, 255, 10);
        // missing manifest
        assert!(matches!(
            read_cube(dir.path(), CubeFormat::PgmSequence),
            Err(Error::Io { .. })
        ));
        fs::write(
            dir.path().join("manifest.json"),
            r#"{"fps": 25, "frames": 2}"#,
        )
        .unwrap();
        // inconsistent dimensions
        assert!(matches!(
            read_cube(dir.path(), CubeFormat::PgmSequence),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn pgm_sequence_round_trip_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let c = ramp_cube(5, 3, 4);
        write_pgm_sequence(&c, dir.path()).unwrap();
        let back = read_cube(dir.path(), CubeFormat::PgmSequence).unwrap();
        for (a, b) in c.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn mean_subtraction_examples() {
        let c = VideoCube::filled(1, 1, 5, 30.0, 0.7).unwrap();
        let z = subtract_temporal_mean(&c);
        assert!(z.samples().iter().all(|v| v.abs() < 1e-15));

        let c = VideoCube::new(1, 1, 2, 30.0, vec![0.0, 1.0]).unwrap();
        assert_eq!(subtract_temporal_mean(&c).samples(), &[-0.5, 0.5]);
    }

    #[test]
    fn random_cube_has_zero_pixel_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = (0..4 * 4 * 64).map(|_| rng.random::<f64>()).collect();
        let c = VideoCube::new(4, 4, 64, 30.0, samples).unwrap();
        let z = subtract_temporal_mean(&c);
        // direct per-pixel summation
        for p in 0..16 {
            let sum: f64 = z.stream(p).iter().sum();
            assert!(sum.abs() < 1e-6, "pixel {p}: {sum}");
        }
    }

    #[test]
    fn resample_identity_and_endpoints() {
        let c = ramp_cube(2, 2, 300);
        assert_eq!(resample_speed(&c, 1.0).unwrap(), c);
        let slow = resample_speed(&c, 3.0).unwrap();
        assert_eq!(slow.num_frames(), 900);
        assert_eq!(slow.frame(0), c.frame(0));
        assert_eq!(slow.frame(899), c.frame(299));
        assert_eq!(slow.frame_rate(), c.frame_rate());
    }

    #[test]
    fn resample_rejects_too_short() {
        let c = ramp_cube(1, 1, 10);
        assert!(resample_speed(&c, 0.1).is_err());
        assert!(resample_speed(&c, 0.0).is_err());
        assert!(resample_speed(&c, f64::NAN).is_err());
    }

    #[test]
    fn resample_is_linear_between_frames() {
        let c = VideoCube::new(1, 1, 3, 30.0, vec![0.0, 1.0, 0.0]).unwrap();
        let r = resample_speed(&c, 5.0 / 3.0).unwrap();
        // 5 frames sampling t = 0, 0.5, 1, 1.5, 2
        assert_eq!(r.samples(), &[0.0, 0.5, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn generator_static_noiseless_frames_identical() {
        let spec = SyntheticSpec {
            width: 16,
            height: 12,
            frames: 10,
            frame_rate: 30.0,
            background: 0.1,
            objects: vec![SyntheticObject {
                shape: ObjectShape::Rect {
                    width: 4.0,
                    height: 3.0,
                },
                start: [6.3, 5.0],
                velocity: [0.0, 0.0],
                contrast: 0.8,
                flicker: None,
                envelope: None,
            }],
            noise_sigma: 0.0,
            seed: 3,
        };
        let c = generate_synthetic(&spec).unwrap();
        for t in 1..10 {
            assert_eq!(c.frame(t), c.frame(0));
        }
        assert!(c.is_unit_range());
    }

    #[test]
    fn generator_rejects_degenerate_objects() {
        let mut spec = ClipRecipe::default().build(1);
        spec.objects[0].shape = ObjectShape::Blob {
            sigma: 0.0,
            support: None,
        };
        assert!(generate_synthetic(&spec).is_err());
        spec.objects[0].shape = ObjectShape::Rect {
            width: 2.0,
            height: 0.0,
        };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn generator_noise_is_seeded() {
        let mut spec = ClipRecipe {
            frames: 20,
            noise_sigma: 0.05,
            ..ClipRecipe::default()
        }
        .build(4);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        spec.seed += 1;
        assert_ne!(generate_synthetic(&spec).unwrap(), a);
        assert!(a.is_unit_range());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ClipRecipe::default().build(9);
        let text = serde_json::to_string(&spec).unwrap();
        let back: SyntheticSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn pad_and_slice() {
        let c = ramp_cube(2, 1, 4);
        let p = c.pad_hold(2, 3);
        assert_eq!(p.num_frames(), 9);
        assert_eq!(p.frame(0), c.frame(0));
        assert_eq!(p.frame(8), c.frame(3));
        assert_eq!(p.slice_frames(2, 6).unwrap(), c);
        let z = c.pad_constant(1, 0, 0.0);
        assert!(z.frame(0).iter().all(|&v| v == 0.0));
    }
}
