//! `vodsim`: runs, sweeps, analytic queries and oracle cross-checks for the
//! interactive VoD bandwidth model.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use vodsim_core::config::FileConfig;
use vodsim_core::geometry::{
    ball_volume, capped_simplex_volume, conditional_mode_probability, mc_volume, ConstraintRegion,
    ModeDemandVector,
};
use vodsim_core::model::{
    joint_session_probability, multinomial_pmf, BandwidthConfig, ModeCounts, SessionSpec,
};
use vodsim_core::report::{self, Manifest};
use vodsim_core::sim::{self, SimulationConfig, SweepPreset};
use vodsim_core::verify::{self, VerifyOptions};

#[derive(Debug, Parser)]
#[command(
    name = "vodsim",
    version,
    about = "Interactive VoD bandwidth model and simulator"
)]
struct Cli {
    /// TOML config file; missing keys take built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for every random draw. Overrides the config file.
    #[arg(long, global = true, env = "VODSIM_SEED")]
    seed: Option<u64>,

    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Reduced Monte Carlo sample counts.
    #[arg(long, global = true)]
    quick: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one run and write the per-tick load series.
    Run(SimArgs),
    /// Simulate one run per demand parameter.
    Sweep(SweepArgs),
    /// Evaluate an analytic quantity.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Cross-check exact computations against independent oracles.
    Verify,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Seconds per tick.
    #[arg(long)]
    tick: Option<f64>,
    /// Viewers present at the end of the arrival ramp.
    #[arg(long)]
    viewers: Option<u64>,
    /// Mode operations per session.
    #[arg(long)]
    operations: Option<u64>,
    /// Keep viewers connected after their last operation.
    #[arg(long)]
    persist: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Named set of demand parameters: set1 or set2.
    #[arg(long, conflicts_with = "rho")]
    preset: Option<SweepPreset>,
    /// Explicit demand parameters.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    rho: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
enum ModelCommand {
    /// Probability of one session's mode counts.
    Pmf {
        #[arg(long)]
        m: u64,
        #[arg(long, value_delimiter = ',', required = true)]
        probs: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<u64>,
    },
    /// Joint probability of several independent viewers.
    Joint {
        #[arg(long)]
        m: u64,
        #[arg(long, value_delimiter = ',', required = true)]
        probs: Vec<f64>,
        /// One viewer's counts; repeat per viewer.
        #[arg(long, required = true)]
        counts: Vec<String>,
    },
    /// Ball volume, or with --simplex the capped simplex volume.
    Volume {
        #[arg(long)]
        k: u32,
        /// Ball radius.
        #[arg(long, required_unless_present = "simplex")]
        r: Option<f64>,
        #[arg(long)]
        simplex: bool,
        /// Simplex budget.
        #[arg(long, requires = "simplex")]
        w: Option<f64>,
        #[arg(long, requires = "simplex", default_value_t = 0.0)]
        lo: f64,
        #[arg(long, requires = "simplex", default_value_t = 1.0)]
        hi: f64,
        /// Also estimate the simplex volume by Monte Carlo.
        #[arg(long, requires = "simplex")]
        mc_samples: Option<u64>,
    },
    /// Probability of the active mode given passive modes at the reserve.
    Conditional {
        /// Per-mode demands in Mbps.
        #[arg(long, value_delimiter = ',', required = true)]
        demands: Vec<f64>,
        /// Active mode number, starting at 1.
        #[arg(long)]
        active: usize,
        /// Session bandwidth in Mbps.
        #[arg(long)]
        w: f64,
        #[arg(long)]
        w_max: Option<f64>,
        #[arg(long)]
        reserve: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("vodsim: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// `Ok(false)` means the work ran but some part of it failed.
fn dispatch(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Run(args) => cmd_run(&cli, args),
        Command::Sweep(args) => cmd_sweep(&cli, args),
        Command::Model(model) => cmd_model(&cli, model).map(|()| true),
        Command::Verify => cmd_verify(&cli),
    }
}

fn load_config(cli: &Cli, strict: bool) -> Result<SimulationConfig> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut cfg = file.to_simulation(strict)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_overrides(cfg: &mut SimulationConfig, args: &SimArgs) -> Result<()> {
    if let Some(v) = args.duration {
        cfg.duration = v;
    }
    if let Some(v) = args.tick {
        cfg.tick = v;
    }
    if let Some(v) = args.viewers {
        cfg.target_viewers = v;
    }
    if let Some(v) = args.operations {
        cfg.session = cfg.session.with_operations(v);
    }
    if args.persist {
        cfg.persist = true;
    }
    cfg.validate()?;
    Ok(())
}

/// Writes through a temporary sibling and renames, so a failed write never
/// leaves a truncated file behind.
fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        body(&mut w)?;
        w.flush()
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(e).with_context(|| format!("writing {}", path.display()));
    }
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    tracing::info!(path = %path.display(), "wrote");
    Ok(())
}

fn path_strings(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn cmd_run(cli: &Cli, args: &SimArgs) -> Result<bool> {
    let started = Instant::now();
    let mut cfg = load_config(cli, true)?;
    apply_overrides(&mut cfg, args)?;
    let output = sim::run(&cfg)?;

    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let manifest = Manifest::new(&cfg);
    let samples_path = cli.out.join("samples.csv");
    let summary_path = cli.out.join("summary.toml");
    write_file(&samples_path, |w| {
        report::write_samples(w, &manifest, &output.samples)
    })?;
    write_file(&summary_path, |w| {
        report::write_summary(w, &manifest, &output.summary)
    })?;

    let s = &output.summary;
    let record = json!({
        "command": "run",
        "version": manifest.version,
        "seed": manifest.seed,
        "config_sha256": manifest.config_sha256,
        "outputs": path_strings(&[samples_path, summary_path]),
        "samples": s.samples,
        "peak_load": s.peak_load,
        "mean_load": s.mean_load,
        "total_arrivals": s.total_arrivals,
        "total_departed": s.total_departed,
        "total_rejected": s.total_rejected,
        "mode_switches": s.mode_switches,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    println!("{record}");
    Ok(true)
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> Result<bool> {
    let started = Instant::now();
    let mut cfg = load_config(cli, true)?;
    apply_overrides(&mut cfg, &args.sim)?;
    let values = match (&args.preset, &args.rho) {
        (Some(preset), _) => preset.values(),
        (None, Some(list)) => list.clone(),
        (None, None) => cfg.sweep.clone(),
    };
    cfg.sweep = values.clone();
    let sweep = sim::run_sweep(&cfg, &values)?;

    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let mut outputs = Vec::new();
    for series in &sweep.series {
        let path = cli.out.join(report::sweep_file_name(series.rho));
        let manifest = Manifest::new(&series.config);
        write_file(&path, |w| {
            report::write_samples(w, &manifest, &series.output.samples)
        })?;
        outputs.push(path);
    }
    let manifest = Manifest::new(&cfg);
    let combined = cli.out.join("sweep.csv");
    write_file(&combined, |w| {
        report::write_sweep_combined(w, &manifest, &sweep)
    })?;
    outputs.push(combined);

    let series: Vec<_> = sweep
        .series
        .iter()
        .map(|s| {
            json!({
                "rho": s.rho,
                "seed": s.seed,
                "peak_load": s.output.summary.peak_load,
                "mean_load": s.output.summary.mean_load,
            })
        })
        .collect();
    let skipped: Vec<_> = sweep
        .skipped
        .iter()
        .map(|s| json!({ "rho": s.rho, "reason": s.reason }))
        .collect();
    for skip in &sweep.skipped {
        eprintln!("vodsim: skipped rho {}: {}", skip.rho, skip.reason);
    }
    let record = json!({
        "command": "sweep",
        "version": manifest.version,
        "seed": manifest.seed,
        "config_sha256": manifest.config_sha256,
        "outputs": path_strings(&outputs),
        "series": series,
        "skipped": skipped,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    println!("{record}");
    Ok(sweep.skipped.is_empty())
}

fn parse_counts(text: &str) -> Result<ModeCounts> {
    let counts = text
        .split(',')
        .map(|c| {
            c.trim()
                .parse::<u64>()
                .with_context(|| format!("bad count {c:?} in {text:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModeCounts::new(counts))
}

fn cmd_model(cli: &Cli, model: &ModelCommand) -> Result<()> {
    match model {
        ModelCommand::Pmf { m, probs, counts } => {
            let spec = SessionSpec::new(*m, probs.clone(), probs.len())?;
            let p = multinomial_pmf(&ModeCounts::new(counts.clone()), &spec)?;
            println!("pmf = {p}");
        }
        ModelCommand::Joint { m, probs, counts } => {
            let spec = SessionSpec::new(*m, probs.clone(), probs.len())?;
            let all = counts
                .iter()
                .map(|c| parse_counts(c))
                .collect::<Result<Vec<_>>>()?;
            let p = joint_session_probability(&all, &spec)?;
            println!("joint = {p}");
        }
        ModelCommand::Volume {
            k,
            r,
            simplex,
            w,
            lo,
            hi,
            mc_samples,
        } => {
            if !simplex {
                let r = r.expect("clap requires --r without --simplex");
                println!("volume = {}", ball_volume(*k, r)?);
                return Ok(());
            }
            let Some(w) = w else {
                bail!("--simplex needs the budget --w");
            };
            let region = ConstraintRegion::new(*k as usize, *w, *lo, *hi)?;
            println!("exact = {}", capped_simplex_volume(&region));
            if let Some(samples) = mc_samples {
                let seed = cli.seed.unwrap_or(sim::DEFAULT_SEED);
                let est = mc_volume(&region, *samples, seed)?;
                println!("mc = {}", est.value);
                println!("std_error = {}", est.std_error);
                println!("samples = {}", est.samples);
            }
        }
        ModelCommand::Conditional {
            demands,
            active,
            w,
            w_max,
            reserve,
        } => {
            if *active == 0 {
                bail!("invalid active: modes are numbered from 1");
            }
            let base = load_config(cli, true)?.bandwidth;
            let w_max = w_max.unwrap_or(base.w_max());
            let reserve = reserve.unwrap_or(base.reserve());
            let w_min = base.w_min().min(w_max);
            let cfg = BandwidthConfig::new(base.total().max(w_max), w_min, w_max, reserve)?;
            let demand = ModeDemandVector::new(demands.clone(), active - 1)?;
            let p = conditional_mode_probability(&demand, &cfg, *w)?;
            println!("raw = {}", p.raw);
            println!("clamped = {}", p.clamped);
            println!("numerator = {}", p.numerator);
            println!("normalizer = {}", p.normalizer);
        }
    }
    Ok(())
}

fn cmd_verify(cli: &Cli) -> Result<bool> {
    let mut opts = if cli.quick {
        VerifyOptions::quick()
    } else {
        VerifyOptions::full()
    };
    if cli.config.is_some() {
        // lenient, so a bad demand table reaches the conservation audit
        opts.replay = load_config(cli, false)?;
    }
    let results = verify::run_all(&opts);
    let mut all_passed = true;
    for r in &results {
        all_passed &= r.passed;
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<20} {:>8.3}s  {}",
            r.name,
            r.elapsed.as_secs_f64(),
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
    Ok(all_passed)
}
