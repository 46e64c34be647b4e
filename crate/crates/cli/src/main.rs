use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tempfile::NamedTempFile;

use replayguard::audio::write_wav_to;
use replayguard::hinich::HinichFrameRecord;
use replayguard::qpc::RecordingLabel;
use replayguard::selftest::{property_names, run_selftest, Fault, DEFAULT_SEED};
use replayguard::{
    analyze_recording, compare_recordings, read_wav, recording_bicoherence, simulate_msm_chain,
    AudioBuffer, ComparisonSummary, DetectorConfig, MsmChainConfig, SmoothingKind, SmoothingWindow,
    Verdict,
};

const EXIT_GENUINE: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_REPLAY: u8 = 3;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Input {
        path: PathBuf,
        source: replayguard::Error,
    },
    #[error(transparent)]
    Core(#[from] replayguard::Error),
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            _ => EXIT_ERROR,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Detect replayed audio from the nonlinear distortion a playback chain
/// leaves in its higher-order spectrum.
#[derive(Debug, Parser)]
#[command(name = "replayguard", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze one recording; exit 0 if genuine, 3 if replayed.
    Analyze {
        wav: PathBuf,
        #[command(flatten)]
        opts: AnalysisArgs,
    },
    /// Analyze two recordings with the same settings and report feature deltas.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        opts: AnalysisArgs,
    },
    /// Pass a recording through the simulated replay chain.
    Simulate {
        input: PathBuf,
        output: PathBuf,
        /// Flat key=value chain description; defaults to the built-in devices.
        #[arg(long)]
        chain_config: Option<PathBuf>,
        /// Replay order (overrides the config file).
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        order: Option<u8>,
        #[arg(long, env = "HOSA_REPLAY_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Export frame-level QPC peak locations as CSV.
    Scatter {
        wav: PathBuf,
        #[arg(long, value_parser = parse_label)]
        label: Option<RecordingLabel>,
        #[command(flatten)]
        opts: AnalysisArgs,
    },
    /// Run the seeded calibration suite; exit 3 on any failure.
    Selftest {
        #[arg(long, env = "HOSA_REPLAY_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Print property names without running them.
        #[arg(long)]
        list: bool,
        #[arg(long, hide = true, value_parser = parse_fault)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Debug, Clone, Args)]
struct AnalysisArgs {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    frame_len: Option<usize>,
    #[arg(long)]
    fft_len: Option<usize>,
    #[arg(long)]
    overlap: Option<f64>,
    /// Rao-Gabr bandwidth in grid points, or `none`.
    #[arg(long, value_parser = parse_smoothing)]
    smoothing: Option<SmoothingWindow>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    silence_db: Option<f64>,
    /// Failing-frame fraction at or above which a recording is a replay.
    #[arg(long)]
    threshold: Option<f64>,
}

fn parse_smoothing(s: &str) -> Result<SmoothingWindow, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(SmoothingWindow::none());
    }
    let bw: usize = s
        .parse()
        .map_err(|_| format!("expected a bandwidth or 'none', got '{s}'"))?;
    SmoothingWindow::from_descriptor(SmoothingKind::RaoGabr, bw).map_err(|e| e.to_string())
}

fn parse_label(s: &str) -> Result<RecordingLabel, String> {
    match s {
        "direct" => Ok(RecordingLabel::Direct),
        "RA-1" | "ra-1" => Ok(RecordingLabel::Ra1),
        "RA-2" | "ra-2" => Ok(RecordingLabel::Ra2),
        _ => Err(format!("expected direct, RA-1 or RA-2, got '{s}'")),
    }
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    match s {
        "inflate-bicoherence" => Ok(Fault::InflateBicoherence),
        _ => Err(format!("unknown fault '{s}'")),
    }
}

impl AnalysisArgs {
    fn config(&self) -> CliResult<DetectorConfig> {
        let mut c = DetectorConfig::default();
        if let Some(v) = self.frame_len {
            c.frame_len = v;
            // keep the default transform at least as long as the frame
            if self.fft_len.is_none() {
                c.fft_len = c.fft_len.max(v + v % 2);
            }
        }
        if let Some(v) = self.fft_len {
            c.fft_len = v;
        }
        if let Some(v) = self.overlap {
            c.overlap = v;
        }
        if let Some(v) = &self.smoothing {
            c.smoothing = v.clone();
            c.qpc.smoothing = v.clone();
        }
        if let Some(v) = self.alpha {
            c.hinich.alpha = v;
        }
        if let Some(v) = self.silence_db {
            c.silence_threshold_db = v;
        }
        if let Some(v) = self.threshold {
            c.decision_threshold = v;
        }
        c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(c)
    }
}

fn load(path: &Path) -> CliResult<AudioBuffer> {
    read_wav(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut NamedTempFile) -> std::io::Result<()>,
) -> CliResult<()> {
    let out_err = |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(out_err)?;
    fill(&mut tmp).map_err(out_err)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(out_err)?;
    }
    tmp.as_file().sync_all().map_err(out_err)?;
    tmp.persist(path).map_err(|e| out_err(e.error))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, |f| f.write_all(text.as_bytes()))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write_text(path, &text)
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Genuine => EXIT_GENUINE,
        Verdict::Replay => EXIT_REPLAY,
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Genuine => "genuine",
        Verdict::Replay => "replay",
    }
}

fn cmd_analyze(wav: &Path, opts: &AnalysisArgs) -> CliResult<u8> {
    let config = opts.config()?;
    let audio = load(wav)?;
    let report = analyze_recording(&audio, &config)?;
    let grid = recording_bicoherence(&audio, &config)?;
    let hinich: Vec<HinichFrameRecord> = report
        .frames
        .iter()
        .map(|f| HinichFrameRecord::new(f.frame_index, &f.hinich))
        .collect();

    ensure_dir(&opts.out_dir)?;
    write_json(&opts.out_dir.join("report.json"), &report)?;
    write_text(&opts.out_dir.join("bicoherence.csv"), &grid.to_csv())?;
    write_json(&opts.out_dir.join("hinich.json"), &hinich)?;
    println!(
        "{}: {} ({} of {} active frames failing, fraction {:.3})",
        wav.display(),
        verdict_name(report.verdict),
        report.frames.iter().filter(|f| f.failed).count(),
        report.active_frame_count,
        report.failing_fraction
    );
    Ok(verdict_code(report.verdict))
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    a: String,
    b: String,
    #[serde(flatten)]
    summary: &'a ComparisonSummary,
}

fn cmd_compare(a: &Path, b: &Path, opts: &AnalysisArgs) -> CliResult<u8> {
    let config = opts.config()?;
    let (audio_a, audio_b) = (load(a)?, load(b)?);
    let ra = analyze_recording(&audio_a, &config)?;
    let rb = analyze_recording(&audio_b, &config)?;
    let summary = compare_recordings(&ra, &rb)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    ensure_dir(&opts.out_dir)?;
    write_json(
        &opts.out_dir.join("compare.json"),
        &CompareOutput {
            a: a.display().to_string(),
            b: b.display().to_string(),
            summary: &summary,
        },
    )?;
    let shift = summary
        .qpc_shift
        .map_or_else(|| "undefined".to_string(), |s| format!("{s:.4}"));
    println!(
        "delta mean bicoherence {:+.4}, delta failing fraction {:+.3}, QPC shift {shift}",
        summary.delta_mean_bicoherence, summary.delta_failing_fraction
    );
    Ok(EXIT_GENUINE)
}

fn cmd_simulate(
    input: &Path,
    output: &Path,
    chain_config: Option<&Path>,
    order: Option<u8>,
    seed: u64,
) -> CliResult<u8> {
    let mut chain = match chain_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Usage(format!("cannot read chain config {}: {e}", p.display()))
            })?;
            MsmChainConfig::parse(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => MsmChainConfig::default(),
    };
    if let Some(o) = order {
        chain.replay_order = o;
    }
    chain
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let audio = load(input)?;
    let y = simulate_msm_chain(audio.samples(), &chain, seed)?;
    let out = AudioBuffer::new(y, audio.sample_rate_hz())?;
    write_atomic(output, |f| {
        write_wav_to(std::io::BufWriter::new(f.as_file_mut()), &out)
            .map_err(|e| std::io::Error::other(e.to_string()))
    })?;
    print!("# seed = {seed}\n{}", chain.to_text());
    Ok(EXIT_GENUINE)
}

fn cmd_scatter(wav: &Path, label: Option<RecordingLabel>, opts: &AnalysisArgs) -> CliResult<u8> {
    let config = opts.config()?;
    let audio = load(wav)?;
    let report = analyze_recording(&audio, &config)?;
    let mut scatter = report.qpc_scatter;
    if let Some(l) = label {
        scatter = scatter.with_label(l);
    }
    ensure_dir(&opts.out_dir)?;
    write_text(&opts.out_dir.join("scatter.csv"), &scatter.to_csv())?;
    println!(
        "{}: {} peaks over {} active frames",
        wav.display(),
        scatter.peak_count(),
        scatter.frames.len()
    );
    Ok(EXIT_GENUINE)
}

fn cmd_selftest(seed: u64, list: bool, fault: Option<Fault>) -> CliResult<u8> {
    if list {
        for name in property_names() {
            println!("{name}");
        }
        return Ok(EXIT_GENUINE);
    }
    let outcomes = run_selftest(seed, fault);
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    for o in &outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", o.name, o.detail);
    }
    println!(
        "{} of {} properties passed (seed {seed})",
        outcomes.len() - failed,
        outcomes.len()
    );
    Ok(if failed == 0 {
        EXIT_GENUINE
    } else {
        EXIT_REPLAY
    })
}

fn run(cli: Cli) -> CliResult<u8> {
    match &cli.command {
        Command::Analyze { wav, opts } => cmd_analyze(wav, opts),
        Command::Compare { a, b, opts } => cmd_compare(a, b, opts),
        Command::Simulate {
            input,
            output,
            chain_config,
            order,
            seed,
        } => cmd_simulate(input, output, chain_config.as_deref(), *order, *seed),
        Command::Scatter { wav, label, opts } => cmd_scatter(wav, *label, opts),
        Command::Selftest {
            seed,
            list,
            inject_fault,
        } => cmd_selftest(*seed, *list, *inject_fault),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
