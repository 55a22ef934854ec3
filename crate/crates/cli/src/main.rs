use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gss_core::activity::{
    group_sessions, overlap_histogram_sessions, parse_annotations, parse_chime5,
};
use gss_core::io::read_wav;
use gss_core::pipeline::Manifest;
use gss_core::simeval::write_scene;
use gss_core::{
    run_batch, si_sdr, simulate_scene, PipelineConfig, SceneSpec, SeparationMetrics, Track,
    Waveform,
};

/// Exit code for errors that stop a command before it produces output.
const FATAL: u8 = 2;

#[derive(Parser)]
#[command(
    name = "gss",
    version,
    about = "Guided source separation for multi-channel meeting recordings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance every annotated utterance listed in a manifest.
    Enhance(EnhanceArgs),
    /// Word-weighted overlap histogram of an annotation file, as CSV.
    AnalyzeOverlap(OverlapArgs),
    /// Generate a synthetic scene with ground truth.
    Simulate(SimulateArgs),
    /// SI-SDR of an estimate against a reference, as JSON.
    Metrics(MetricsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TrackArg {
    Single,
    Multi,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(clap::Args)]
struct EnhanceArgs {
    /// Pipeline configuration (JSON). Flags below override its keys.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    track: Option<TrackArg>,
    #[arg(long)]
    no_wpe: bool,
    /// Target-mask post-multiplication; defaults to on for single, off for multi.
    #[arg(long, value_enum)]
    mask: Option<Switch>,
    #[arg(long)]
    context_secs: Option<f64>,
    #[arg(long)]
    em_iters: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Where to write the run report; defaults to `<output_dir>/report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Normalized,
    Chime5,
}

#[derive(clap::Args)]
struct OverlapArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// One histogram per session, with a leading session_id column.
    #[arg(long)]
    per_session: bool,
    #[arg(long, value_enum, default_value = "normalized")]
    format: FormatArg,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Scene description (JSON).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct MetricsArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Channel of a multi-channel reference (and mixture) to compare against,
    /// e.g. the reference channel chosen by `enhance`.
    #[arg(long)]
    ref_channel: Option<usize>,
    /// Unprocessed mixture channel; adds the SI-SDR improvement.
    #[arg(long)]
    mix: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Enhance(a) => enhance(a),
        Command::AnalyzeOverlap(a) => analyze_overlap(a).map(|_| ExitCode::SUCCESS),
        Command::Simulate(a) => simulate(a).map(|_| ExitCode::SUCCESS),
        Command::Metrics(a) => metrics(a).map(|_| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(FATAL)
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn configure(a: &EnhanceArgs) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = read_json(&a.config)?;
    if let Some(t) = a.track {
        cfg.track = match t {
            TrackArg::Single => Track::Single,
            TrackArg::Multi => Track::Multi,
        };
    }
    if a.no_wpe {
        cfg.wpe.enabled = false;
    }
    if let Some(m) = a.mask {
        cfg.masking.enabled = Some(matches!(m, Switch::On));
    }
    if let Some(c) = a.context_secs {
        cfg.context_secs = c;
    }
    if let Some(n) = a.em_iters {
        cfg.em.iterations = n;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(d) = &a.output_dir {
        cfg.output_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn enhance(a: EnhanceArgs) -> Result<ExitCode> {
    let cfg = configure(&a)?;
    let manifest =
        Manifest::load(&a.manifest).with_context(|| format!("loading {}", a.manifest.display()))?;
    let report = run_batch(&manifest, &cfg)?;
    let path = a
        .report
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("report.json"));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", path.display()))?;
    log::info!(
        "{} utterances enhanced, {} failed, {} sessions failed; report at {}",
        report.succeeded,
        report.failed,
        report.session_failures.len(),
        path.display()
    );
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn analyze_overlap(a: OverlapArgs) -> Result<()> {
    let doc = std::fs::read_to_string(&a.annotations)
        .with_context(|| format!("reading {}", a.annotations.display()))?;
    let set = match a.format {
        FormatArg::Normalized => parse_annotations(&doc)?,
        FormatArg::Chime5 => parse_chime5(&doc, None)?,
    };
    for r in &set.rejected {
        log::warn!("entry {} skipped: {}", r.index, r.reason);
    }
    if a.per_session {
        let mut out = String::from("session_id,bin_lo,bin_hi,word_fraction\n");
        for (session, (utts, _)) in group_sessions(&set.utterances) {
            for row in overlap_histogram_sessions(&utts).to_csv().lines().skip(1) {
                out.push_str(&format!("{session},{row}\n"));
            }
        }
        print!("{out}");
    } else {
        print!("{}", overlap_histogram_sessions(&set.utterances).to_csv());
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec: SceneSpec = read_json(&a.spec)?;
    let sim = simulate_scene::<f64>(&spec, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    let entry = write_scene(&a.out, &sim)?;
    let manifest = Manifest {
        sessions: vec![entry],
    };
    std::fs::write(
        a.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    log::info!(
        "{}: {} utterances, {} channels, written to {}",
        spec.session_id,
        sim.annotations.len(),
        spec.channels(),
        a.out.display()
    );
    Ok(())
}

fn load_channel(path: &Path, channel: Option<usize>) -> Result<Waveform<f64>> {
    let w: Waveform<f64> = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
    match channel {
        None if w.channels() == 1 => Ok(w),
        None => bail!(
            "{} has {} channels; pick one with --ref-channel",
            path.display(),
            w.channels()
        ),
        Some(c) if c < w.channels() => Ok(w.select_channel(c)),
        Some(c) => bail!("{} has no channel {c}", path.display()),
    }
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let est = load_channel(&a.est, None)?;
    let reference = load_channel(&a.reference, a.ref_channel)?;
    let score = si_sdr(&est, &reference)?;
    let improvement = match &a.mix {
        Some(p) => Some(score - si_sdr(&load_channel(p, a.ref_channel)?, &reference)?),
        None => None,
    };
    let m = SeparationMetrics {
        si_sdr: score,
        si_sdr_improvement: improvement,
        mask_agreement: None,
        permutation_consistency: None,
    };
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}
