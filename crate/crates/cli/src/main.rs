//! `mellin-aer` command-line front end.
//!
//! Exit status: 0 on success (including "no match" results), 1 on domain
//! errors such as unreadable inputs or invalid parameters, 2 on usage errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mellin_aer::bench::{
    build_speed_database, corpus, default_sweep_speeds, run_detection_experiment,
    run_localization_experiment, run_scale_sweep, BenchReport, DETECTION_SPEEDS,
};
use mellin_aer::correlator::{self, FrameStreams};
use mellin_aer::video::write_pgm_sequence;
use mellin_aer::{
    calibrate_threshold, generate_synthetic, mellin_cube, mellin_transform, read_cube_auto,
    run_tsm, search_database, write_cube, ClipRecipe, Error, Method, Policy, SyntheticSpec,
    TsmConfig, VideoCube,
};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "mellin-aer",
    version,
    about = "Speed-invariant video event recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic cube from a spec file or the default clip recipe.
    Gen(GenArgs),
    /// Dump the Mellin transform of one pixel.
    Mt(MtArgs),
    /// Aggregate per-pixel cross-correlation of two cubes.
    Xcorr(XcorrArgs),
    /// Step I only: detection and duration-ratio estimate.
    Estimate(PairArgs),
    /// Both steps: detection, duration ratio and event frame.
    Tsm(PairArgs),
    /// Segmented two-step search of a long database cube.
    Search(SearchArgs),
    /// Threshold from labelled scores.
    Calibrate(CalibrateArgs),
    /// Duration-ratio error across playback speeds.
    BenchSweep(BenchArgs),
    /// Detection rates with and without the Mellin stage.
    BenchDetect(BenchArgs),
    /// Frame offsets of embedded events.
    BenchLocalize(LocalizeArgs),
}

#[derive(Args, Clone)]
struct MtFlags {
    /// Low-frequency cutoff in Hz (default: second DFT bin of the query).
    #[arg(long)]
    omega_low: Option<f64>,
    /// High-frequency cutoff in Hz (default: Nyquist).
    #[arg(long)]
    omega_high: Option<f64>,
    /// Number of tau samples.
    #[arg(long, default_value_t = 512)]
    n_tau: usize,
}

#[derive(Args, Clone)]
struct MatchFlags {
    #[command(flatten)]
    mt: MtFlags,
    /// Frame-level aggregation.
    #[arg(long, default_value = "power", value_parser = parse_method)]
    method: Method,
    /// Step I acceptance threshold in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

impl MatchFlags {
    fn config(&self) -> TsmConfig {
        let mut cfg = TsmConfig::default()
            .with_method(self.method)
            .with_threshold(self.threshold);
        cfg.mt.omega_low = self.mt.omega_low;
        cfg.mt.omega_high = self.mt.omega_high;
        cfg.mt.n_tau = self.mt.n_tau;
        cfg
    }
}

#[derive(Args)]
struct OutFlags {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write CSV instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct GenArgs {
    /// JSON synthetic spec; the default clip recipe when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Seed (overrides the spec's seed).
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    recipe: RecipeFlags,
    /// Output cube file, or a directory for a PGM sequence with --pgm.
    #[arg(long)]
    out: PathBuf,
    /// Write a PGM sequence directory instead of a cube-binary file.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args, Clone)]
struct RecipeFlags {
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 300)]
    frames: usize,
}

impl RecipeFlags {
    fn recipe(&self) -> ClipRecipe {
        ClipRecipe {
            width: self.width,
            height: self.height,
            frames: self.frames,
            ..ClipRecipe::default()
        }
    }
}

#[derive(Args)]
struct MtArgs {
    /// Cube file or PGM-sequence directory.
    #[arg(long)]
    query: PathBuf,
    /// Pixel as X,Y.
    #[arg(long, value_parser = parse_pixel)]
    pixel: (usize, usize),
    #[command(flatten)]
    mt: MtFlags,
    #[command(flatten)]
    out: OutFlags,
}

#[derive(Args)]
struct XcorrArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[command(flatten)]
    flags: MatchFlags,
    /// Correlate raw (mean-subtracted) frames instead of Mellin streams.
    #[arg(long)]
    frames: bool,
    #[command(flatten)]
    out: OutFlags,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[command(flatten)]
    flags: MatchFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    db: PathBuf,
    #[command(flatten)]
    flags: MatchFlags,
    /// Segment overlap T1 in frames (default: query frames x --max-alpha).
    #[arg(long)]
    t1: Option<usize>,
    /// Segment length T2 in frames (default: whole database).
    #[arg(long)]
    t2: Option<usize>,
    /// Largest duration ratio the search must catch.
    #[arg(long, default_value_t = 4.0)]
    max_alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// JSON file {"matched": [...], "unmatched": [...]} or a bench-detect report.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, value_parser = parse_policy)]
    policy: Policy,
    /// Method to select from a bench-detect report.
    #[arg(long, default_value = "power", value_parser = parse_method)]
    method: Method,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of clips.
    #[arg(long, default_value_t = 10)]
    clips: usize,
    /// Comma-separated speed factors (default depends on the experiment).
    #[arg(long, value_delimiter = ',')]
    speeds: Vec<f64>,
    #[command(flatten)]
    recipe: RecipeFlags,
    #[command(flatten)]
    flags: MatchFlags,
    /// Also write the rendered speed database (cubes plus manifest) here.
    #[arg(long)]
    save_db: Option<PathBuf>,
    /// Report file, or the CSV output directory with --csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write plot-ready CSV files (and report.json) into --out.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    clips: usize,
    /// Comma-separated scale factors.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0, 4.0])]
    scales: Vec<f64>,
    /// Comma-separated event placements as fractions of the free room.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0])]
    placements: Vec<f64>,
    /// Reference length in frames.
    #[arg(long, default_value_t = 1200)]
    reference_frames: usize,
    #[command(flatten)]
    recipe: RecipeFlags,
    #[command(flatten)]
    flags: MatchFlags,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pixel(s: &str) -> Result<(usize, usize), String> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| format!("expected X,Y, got '{s}'"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid pixel coordinate '{v}'"))
    };
    Ok((num(x)?, num(y)?))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn gen(args: GenArgs) -> Result<(), Error> {
    let mut spec = match &args.spec {
        Some(path) => read_json::<SyntheticSpec>(path)?,
        None => args.recipe.recipe().build(args.seed.unwrap_or(0)),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let cube = generate_synthetic(&spec)?;
    if args.pgm {
        write_pgm_sequence(&cube, &args.out)
    } else {
        write_cube(&cube, &args.out)
    }
}

#[derive(Serialize)]
struct MtDump {
    pixel: [usize; 2],
    omega_low: f64,
    omega_high: f64,
    n_tau: usize,
    delta_tau: f64,
    values: Vec<f64>,
}

fn mt(args: MtArgs) -> Result<(), Error> {
    let cube = read_cube_auto(&args.query)?;
    let (x, y) = args.pixel;
    let stream = cube.pixel_stream(x, y)?;
    let cfg = MatchFlags {
        mt: args.mt,
        method: Method::Power,
        threshold: 0.5,
    }
    .config();
    let params = cfg.mt.resolve(cube.num_frames(), cube.frame_rate())?;
    let mt = mellin_transform(&stream, &params)?;
    if args.out.csv {
        let mut text = String::from("tau,value\n");
        for (j, v) in mt.values().iter().enumerate() {
            text.push_str(&format!("{},{}\n", params.tau(j), v));
        }
        emit(args.out.out.as_deref(), &text)
    } else {
        emit_json(
            args.out.out.as_deref(),
            &MtDump {
                pixel: [x, y],
                omega_low: params.omega_low,
                omega_high: params.omega_high,
                n_tau: params.n_tau,
                delta_tau: params.delta_tau(),
                values: mt.values().to_vec(),
            },
        )
    }
}

#[derive(Serialize)]
struct XcorrDump {
    method: Method,
    domain: correlator::Domain,
    lags: Vec<isize>,
    values: Vec<f64>,
    peak: correlator::PeakReading,
}

fn xcorr(args: XcorrArgs) -> Result<(), Error> {
    let query = read_cube_auto(&args.query)?;
    let reference = read_cube_auto(&args.reference)?;
    let cfg = args.flags.config();
    let (signal, peak) = if args.frames {
        let q = FrameStreams::centered(&query);
        let r = FrameStreams::centered(&reference);
        let base = correlator::auto_peak(&q, cfg.method, cfg.exec)?;
        correlator::score_pair(&q, &r, cfg.method, base, cfg.exec)?
    } else {
        let params = cfg.mt.resolve(query.num_frames(), query.frame_rate())?;
        let q = mellin_cube(&query, &params)?;
        let r = mellin_cube(&reference, &params)?;
        let base = correlator::auto_peak(&q, cfg.method, cfg.exec)?;
        correlator::score_pair(&q, &r, cfg.method, base, cfg.exec)?
    };
    let lags: Vec<isize> = signal.axis().lags().collect();
    if args.out.csv {
        let mut text = String::from("lag,value\n");
        for (l, v) in lags.iter().zip(signal.values()) {
            text.push_str(&format!("{l},{v}\n"));
        }
        emit(args.out.out.as_deref(), &text)
    } else {
        emit_json(
            args.out.out.as_deref(),
            &XcorrDump {
                method: cfg.method,
                domain: signal.domain(),
                lags,
                values: signal.values().to_vec(),
                peak,
            },
        )
    }
}

fn load_pair(args: &PairArgs) -> Result<(VideoCube, VideoCube), Error> {
    Ok((
        read_cube_auto(&args.query)?,
        read_cube_auto(&args.reference)?,
    ))
}

fn estimate(args: PairArgs) -> Result<(), Error> {
    let (query, reference) = load_pair(&args)?;
    let cfg = args.flags.config();
    let e = mellin_aer::estimate_scale(&query, &reference, &cfg)?;
    emit_json(args.out.as_deref(), &e)
}

fn tsm(args: PairArgs) -> Result<(), Error> {
    let (query, reference) = load_pair(&args)?;
    let r = run_tsm(&query, &reference, &args.flags.config())?;
    emit_json(args.out.as_deref(), &r)
}

#[derive(Serialize)]
struct SearchOutput {
    plan: mellin_aer::SegmentPlan,
    matches: Vec<mellin_aer::MatchResult>,
}

fn search(args: SearchArgs) -> Result<(), Error> {
    let query = read_cube_auto(&args.query)?;
    let database = read_cube_auto(&args.db)?;
    let mut cfg = args.flags.config();
    cfg.window = args.t2;
    cfg.max_alpha = args.max_alpha;
    cfg.overlap = args.t1;
    let (plan, matches) = search_database(&query, &database, &cfg)?;
    emit_json(args.out.as_deref(), &SearchOutput { plan, matches })
}

#[derive(Deserialize)]
struct ScoreSets {
    matched: Vec<f64>,
    unmatched: Vec<f64>,
}

fn calibrate(args: CalibrateArgs) -> Result<(), Error> {
    let value: serde_json::Value = read_json(&args.scores)?;
    let sets = if value.get("records").is_some() {
        let report: BenchReport = serde_json::from_value(value).map_err(|e| Error::Format {
            path: args.scores.clone(),
            reason: e.to_string(),
        })?;
        let pick = |truth: bool| -> Vec<f64> {
            report
                .records
                .iter()
                .filter(|r| {
                    r.method == args.method
                        && r.mode == mellin_aer::bench::Mode::Mt
                        && r.matched_truth == truth
                })
                .map(|r| r.score)
                .collect()
        };
        ScoreSets {
            matched: pick(true),
            unmatched: pick(false),
        }
    } else {
        serde_json::from_value(value).map_err(|e| Error::Format {
            path: args.scores.clone(),
            reason: e.to_string(),
        })?
    };
    let t = calibrate_threshold(&sets.matched, &sets.unmatched, args.policy)?;
    emit_json(args.out.as_deref(), &t)
}

fn finish_report(report: &BenchReport, out: Option<&Path>, csv: bool) -> Result<(), Error> {
    if csv {
        let dir = out.ok_or_else(|| Error::Param("--csv needs an --out directory".into()))?;
        report.write_csv(dir)?;
        report.write_json(dir.join("report.json"))
    } else {
        emit_json(out, report)
    }
}

fn bench(args: BenchArgs, detect: bool) -> Result<(), Error> {
    let clips = corpus(&args.recipe.recipe(), args.clips, args.seed);
    let speeds = if !args.speeds.is_empty() {
        args.speeds.clone()
    } else if detect {
        DETECTION_SPEEDS.to_vec()
    } else {
        default_sweep_speeds()
    };
    let cfg = args.flags.config();
    if let Some(dir) = &args.save_db {
        build_speed_database(&clips, &speeds, args.seed, dir)?;
    }
    let report = if detect {
        run_detection_experiment(&clips, &speeds, &cfg)?
    } else {
        run_scale_sweep(&clips, &speeds, &cfg)?
    };
    finish_report(&report, args.out.as_deref(), args.csv)
}

fn bench_localize(args: LocalizeArgs) -> Result<(), Error> {
    let clips = corpus(&args.recipe.recipe(), args.clips, args.seed);
    let report = run_localization_experiment(
        &clips,
        &args.scales,
        &args.placements,
        args.reference_frames,
        &args.flags.config(),
    )?;
    finish_report(&report, args.out.as_deref(), args.csv)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Mt(a) => mt(a),
        Command::Xcorr(a) => xcorr(a),
        Command::Estimate(a) => estimate(a),
        Command::Tsm(a) => tsm(a),
        Command::Search(a) => search(a),
        Command::Calibrate(a) => calibrate(a),
        Command::BenchSweep(a) => bench(a, false),
        Command::BenchDetect(a) => bench(a, true),
        Command::BenchLocalize(a) => bench_localize(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
