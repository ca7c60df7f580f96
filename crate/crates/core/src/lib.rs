//! Speed-invariant video event recognition.
//!
//! Per-pixel temporal Mellin transforms turn a change of playback speed into
//! a shift along a log-frequency axis. Correlating query and reference in
//! that domain detects an event and measures the duration ratio `alpha`;
//! stretching the query by `alpha` and correlating again in the frame domain
//! then locates the event in time.
//!
//! ```
//! use mellin_aer::{resample_speed, run_tsm, ClipRecipe, TsmConfig};
//!
//! let recipe = ClipRecipe { width: 8, height: 8, frames: 96, ..ClipRecipe::default() };
//! let query = recipe.render(7).unwrap();
//! let reference = resample_speed(&query, 2.0).unwrap();
//! let result = run_tsm(&query, &reference, &TsmConfig::default()).unwrap();
//! assert!(result.matched);
//! assert!((result.alpha.ln() - 2f64.ln()).abs() < 0.05);
//! ```

pub mod bench;
pub mod correlator;
pub mod error;
pub mod exec;
mod fft;
pub mod mellin;
pub mod tsm;
pub mod video;

pub use correlator::{
    aggregate, aggregate_peak, aggregate_power, correlate_cubes, correlate_cubes_with, peak_of,
    xcorr_full, AggregateSignal, CorrelationVolume, Domain, FrameStreams, LagAxis, Method,
    PeakReading, StreamSet,
};
pub use error::{Error, Result};
pub use exec::Exec;
pub use mellin::{
    dft_magnitude, mellin_cube, mellin_cube_with, mellin_transform, MtCube, MtParams, MtStream,
    Spectrum,
};
pub use tsm::{
    calibrate_threshold, estimate_scale, localize_event, plan_segments, run_tsm, search_database,
    FrameQuery, LocalizationResult, MatchResult, MtSettings, Policy, PreparedQuery, ScaleEstimate,
    SegmentPlan, Threshold, TsmConfig,
};
pub use video::{
    generate_synthetic, read_cube, read_cube_auto, resample_speed, subtract_temporal_mean,
    write_cube, ClipRecipe, CubeFormat, PixelStream, SyntheticSpec, VideoCube,
};
