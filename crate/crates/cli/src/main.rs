//! Command-line front end of the assessment pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cogassess::eda::swt_denoise;
use cogassess::pipeline::report::{write_eda, write_ppg, write_series};
use cogassess::pipeline::stages::{eda_segments, ppg_segments};
use cogassess::pipeline::synth::ConstantRhythm;
use cogassess::pipeline::{
    discover, exit_code, parse_stages, read_scalar_signal, run, synth, PipelineConfig, Stage, Summary, SynthSpec,
};
use cogassess::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "cogassess", version, about = "Activity and physiology analytics for cognitive assessment")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// `key = value` settings file, applied over the defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated participant ids to process.
    #[arg(long, global = true, value_name = "IDS")]
    participants: Option<String>,
    /// Comma-separated stages whose artifacts are written.
    #[arg(long, global = true, value_name = "LIST")]
    stages: Option<String>,
    /// Recompute selected stages even when cached.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate participant recordings and write diagnostics.csv.
    Ingest { data: PathBuf },
    /// Generate a synthetic cohort with planted ground truth.
    Synth(SynthArgs),
    /// Remove steep-rise artifacts from one EDA file.
    EdaDenoise { file: PathBuf },
    /// Split one EDA file into tonic, phasic and residual parts.
    EdaDecompose { file: PathBuf },
    /// Detect beats and HRV features in one pulse file.
    Ppg { file: PathBuf },
    /// Recognise hand gestures.
    Gestures { data: PathBuf },
    /// Recognise postures.
    Postures { data: PathBuf },
    /// Decode complex activities.
    Activities { data: PathBuf },
    /// Score activities and analyse cognitive health.
    Assess { data: PathBuf },
    /// Write the run summary.
    Report { data: PathBuf },
    /// Run every stage.
    Run { data: PathBuf },
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of participants.
    #[arg(long)]
    count: Option<usize>,
    /// Give one participant a constant heart rhythm, as `INDEX:BPM`.
    #[arg(long, value_name = "INDEX:BPM", value_parser = parse_rhythm)]
    constant_rhythm: Option<ConstantRhythm>,
    /// Draw walking postures from the six-class set.
    #[arg(long)]
    extended_postures: bool,
}

fn parse_rhythm(s: &str) -> std::result::Result<ConstantRhythm, String> {
    let (i, b) = s.split_once(':').ok_or("expected INDEX:BPM")?;
    Ok(ConstantRhythm {
        participant: i.trim().parse().map_err(|_| format!("bad index `{i}`"))?,
        bpm: b.trim().parse().map_err(|_| format!("bad rate `{b}`"))?,
    })
}

fn config(g: &Global, default_stages: &[Stage]) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &g.config {
        cfg.apply_file(path)?;
    }
    let flag = |key: &str, value: &str, cfg: &mut PipelineConfig| {
        cfg.set(key, value).map_err(|m| Error::InvalidInput(format!("--{key}: {m}")))
    };
    if let Some(seed) = g.seed {
        flag("seed", &seed.to_string(), &mut cfg)?;
    }
    if let Some(p) = &g.participants {
        flag("participants", p, &mut cfg)?;
    }
    match &g.stages {
        Some(s) => cfg.stages = parse_stages(s)?,
        None if g.config.is_none() || cfg.stages.is_empty() => cfg.stages = default_stages.to_vec(),
        None => {}
    }
    cfg.force |= g.force;
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(s: &Summary) {
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1}%", 100.0 * v));
    println!("participants          {}", s.participants);
    println!("gesture accuracy      {} of {} windows", pct(s.gesture_accuracy), s.gesture_windows);
    println!("posture accuracy      {} of {} windows", pct(s.posture_accuracy), s.posture_windows);
    println!("activity accuracy     {} of {} slices", pct(s.activity_accuracy), s.activity_slices);
    println!(
        "mean duration error   {}",
        s.mean_duration_error.map_or("n/a".to_string(), |v| format!("{v:.3}"))
    );
    println!("cognitive accuracy    {}", pct(s.cognitive_accuracy));
}

fn pipeline(g: &Global, data: &Path, stages: &[Stage]) -> Result<()> {
    let cfg = config(g, stages)?;
    let bundles = discover(data)?;
    let outcome = run(&cfg, &bundles, &g.out)?;
    let warnings = outcome.diagnostics.iter().filter(|d| !d.is_error()).count();
    println!("{} participants, {warnings} warnings", outcome.participants.len());
    if let Some(s) = &outcome.summary {
        print_summary(s);
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest { data } => pipeline(g, data, &[Stage::Ingest]),
        Command::Gestures { data } => pipeline(g, data, &[Stage::Gestures]),
        Command::Postures { data } => pipeline(g, data, &[Stage::Postures]),
        Command::Activities { data } => pipeline(g, data, &[Stage::Activities]),
        Command::Assess { data } => pipeline(g, data, &[Stage::Assess]),
        Command::Report { data } => pipeline(g, data, &[Stage::Report]),
        Command::Run { data } => pipeline(g, data, &Stage::ALL),
        Command::Synth(a) => {
            let cfg = config(g, &[])?;
            let mut spec = SynthSpec::default();
            if g.seed.is_some() || g.config.is_some() {
                spec.seed = cfg.seed;
            }
            if let Some(n) = a.count {
                spec.participants = n;
            }
            spec.constant_rhythm = a.constant_rhythm;
            spec.extended_postures = a.extended_postures;
            let (bundles, _) = synth(&spec, &g.out)?;
            println!("wrote {} participants to {}", bundles.len(), g.out.display());
            Ok(())
        }
        Command::EdaDenoise { file } => {
            config(g, &[])?;
            let (segments, _) = read_scalar_signal(file)?;
            let clean = segments.iter().map(swt_denoise).collect::<Result<Vec<_>>>()?;
            write_series(&g.out.join("eda_denoised.csv"), "eda_us", &clean.iter().collect::<Vec<_>>())
        }
        Command::EdaDecompose { file } => {
            let cfg = config(g, &[])?;
            let (segments, _) = read_scalar_signal(file)?;
            write_eda(&g.out, &eda_segments(&file.display().to_string(), &segments, &cfg.eda)?)
        }
        Command::Ppg { file } => {
            let cfg = config(g, &[])?;
            let (segments, _) = read_scalar_signal(file)?;
            write_ppg(&g.out, &ppg_segments(&file.display().to_string(), &segments, &cfg.ppg)?, &cfg.ppg.beats)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
