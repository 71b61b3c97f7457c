use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hfsim::calibrate::{self, CycleShape, FitGrid, FitReport};
use hfsim::errormodel::{
    analyze_trace, burst_synthesize, BitErrorTrace, BurstSynthParams, ChannelCondition, Erracle, ErrorStatTable,
    Interleaver, TableKey, DEFAULT_GUARD_GAP_BITS,
};
use hfsim::kernel::RngStream;
use hfsim::output;
use hfsim::scenario::{ScenarioConfig, TableSet};
use hfsim::sim::Simulation;
use hfsim::sweep::{run_sweep, SweepSpec};
use hfsim::transport::TrafficMode;

#[derive(Parser)]
#[command(name = "hfsim", version, about = "Discrete-event simulator for HF radio data links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write summary, transfer and link-log CSVs.
    Run(RunArgs),
    /// Run a scenario over a list of SNRs and seeds and tabulate success rates.
    Sweep(SweepArgs),
    /// Turn a bit-error trace into an error-statistics table.
    Analyze(AnalyzeArgs),
    /// Synthesize a bit-error trace from a two-state burst model.
    Synth(SynthArgs),
    /// Regenerate a bit-error trace from an error-statistics table.
    Regen(RegenArgs),
    /// Fit modem timing to the reference throughput column.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the scenario's `output`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated SNR points in dB.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    snr: Vec<f64>,
    /// Seeds per point; seed i is the base seed plus i.
    #[arg(long, default_value_t = 20)]
    seeds: u32,
    /// Base seed; defaults to the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "plain,accelerate")]
    modes: Vec<TrafficMode>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterleaverArg {
    Short,
    Long,
}

impl From<InterleaverArg> for Interleaver {
    fn from(v: InterleaverArg) -> Self {
        match v {
            InterleaverArg::Short => Interleaver::Short,
            InterleaverArg::Long => Interleaver::Long,
        }
    }
}

/// The (condition, rate, interleaver) a table or stand-in model is for.
#[derive(Args)]
struct KeyArgs {
    #[arg(long, allow_hyphen_values = true)]
    snr: f64,
    #[arg(long, default_value_t = 0.0)]
    doppler: f64,
    #[arg(long, default_value_t = 0.0)]
    multipath: f64,
    #[arg(long)]
    rate: u32,
    #[arg(long, value_enum, default_value = "short")]
    interleaver: InterleaverArg,
}

impl KeyArgs {
    fn key(&self) -> Result<TableKey> {
        Ok(TableKey {
            condition: ChannelCondition::new(self.snr, self.doppler, self.multipath)?,
            data_rate_bps: self.rate,
            interleaver: self.interleaver.into(),
        })
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    key: KeyArgs,
    #[arg(long, default_value_t = DEFAULT_GUARD_GAP_BITS)]
    guard_gap: u64,
    /// Table file to write, or a directory to write the canonical file name into.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    bits: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    key: KeyArgs,
    /// Explicit chain parameters; when absent the stand-in model for the key is used.
    #[arg(long, requires_all = ["p_b2g", "ber_bad"])]
    p_g2b: Option<f64>,
    #[arg(long)]
    p_b2g: Option<f64>,
    #[arg(long)]
    ber_bad: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    ber_good: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegenArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    bits: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Trace file to write; omit to measure generation speed only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Directory for the fitted parameters and residual report.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Simulated hours per rate for the simulator cross-check.
    #[arg(long, default_value_t = 24.0)]
    hours: f64,
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Regen(a) => cmd_regen(a),
        Command::Calibrate(a) => cmd_calibrate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut sc = ScenarioConfig::load(path).with_context(|| format!("loading scenario {}", path.display()))?;
    if let Some(seed) = seed {
        sc.master_seed = seed;
        sc.validate()?;
    }
    Ok(sc)
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let sc = load_scenario(&a.scenario, a.seed)?;
    let tables = sc.load_tables()?;
    let metrics = Simulation::new(&sc, &tables)?.run();
    let out = a
        .out
        .or_else(|| sc.output.as_ref().map(|o| sc.base_dir.join(o)))
        .unwrap_or_else(|| PathBuf::from("out"));
    output::write_run(&out, &sc, &metrics).with_context(|| format!("writing {}", out.display()))?;

    println!(
        "mode={} snr_db={} seed={} goodput_bps={:.1} per={:.4} transfers={} successes={}",
        metrics.mode.as_str(),
        metrics.snr_db,
        metrics.seed,
        metrics.goodput_bps,
        metrics.packet_error_rate,
        metrics.transfers.len(),
        metrics.successes()
    );
    eprintln!(
        "sim_time_s={:.1} wall_time_s={:.3} speedup={:.0}x",
        metrics.sim_time_s,
        metrics.wall_time_s,
        metrics.sim_time_s / metrics.wall_time_s.max(1e-9)
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: SweepArgs) -> Result<ExitCode> {
    let base = load_scenario(&a.scenario, a.seed)?;
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let spec = SweepSpec {
        snrs_db: a.snr,
        seeds: a.seeds,
        modes: a.modes,
    };
    let started = Instant::now();
    let result = run_sweep(&base, &spec, a.jobs, |sc| sc.validate().and_then(|_| sc.load_tables()))?;
    for (snr, why) in &result.skipped {
        eprintln!("warning: skipping SNR {snr} dB: {why}");
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    std::fs::write(a.out.join("sweep.csv"), output::sweep_csv(&base, &result.points))?;
    std::fs::write(
        a.out.join("sweep_transfers.csv"),
        output::sweep_transfers_csv(&base, &result.runs),
    )?;
    for p in &result.points {
        println!(
            "snr_db={:.1} mode={} success={}/{} per={:.4}",
            p.snr_db,
            p.mode.as_str(),
            p.successes,
            p.runs,
            p.mean_per
        );
    }
    eprintln!("runs={} wall_time_s={:.3}", result.runs.len(), started.elapsed().as_secs_f64());
    Ok(ExitCode::SUCCESS)
}

/// `out` names a file, or a directory to put the canonical table name in.
fn table_destination(out: &Path, key: &TableKey) -> PathBuf {
    if out.is_dir() {
        out.join(key.file_name())
    } else {
        out.to_path_buf()
    }
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<ExitCode> {
    let trace = BitErrorTrace::load(&a.trace).with_context(|| format!("reading trace {}", a.trace.display()))?;
    let key = a.key.key()?;
    let table = analyze_trace(&trace, a.guard_gap, key)?;
    let dest = table_destination(&a.out, &key);
    table.save(&dest).with_context(|| format!("writing {}", dest.display()))?;
    println!(
        "{}: bits={} errors={} ber={:.3e} gaps={} mixed_runs={}",
        dest.display(),
        trace.length_bits(),
        trace.error_count(),
        trace.ber(),
        table.gap_cdf.support.len(),
        table.mixed_samples.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(a: SynthArgs) -> Result<ExitCode> {
    let key = a.key.key()?;
    let params = match (a.p_g2b, a.p_b2g, a.ber_bad) {
        (Some(p_g2b), Some(p_b2g), Some(ber_bad)) => BurstSynthParams {
            p_g2b,
            p_b2g,
            ber_bad,
            ber_good: a.ber_good,
        },
        _ => BurstSynthParams::stand_in(&key.condition, key.data_rate_bps, key.interleaver),
    };
    let started = Instant::now();
    let trace = burst_synthesize(&params, a.bits, &mut RngStream::new(a.seed, "synth"))?;
    trace.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{}: bits={} errors={} ber={:.3e} expected_ber={:.3e}",
        a.out.display(),
        trace.length_bits(),
        trace.error_count(),
        trace.ber(),
        params.stationary_ber()
    );
    eprintln!("wall_time_s={:.3}", started.elapsed().as_secs_f64());
    Ok(ExitCode::SUCCESS)
}

fn cmd_regen(a: RegenArgs) -> Result<ExitCode> {
    if a.bits == 0 {
        bail!("--bits must be at least 1");
    }
    let table = ErrorStatTable::load(&a.table).with_context(|| format!("reading table {}", a.table.display()))?;
    let mut erracle = Erracle::new(Arc::new(table), RngStream::new(a.seed, "regen"));
    let started = Instant::now();
    let errors = erracle.errors_in_span(0, a.bits);
    let wall = started.elapsed().as_secs_f64();
    let trace = BitErrorTrace::new(a.bits, errors)?;
    if let Some(out) = &a.out {
        trace.save(out).with_context(|| format!("writing {}", out.display()))?;
    }
    println!("bits={} errors={} ber={:.3e}", trace.length_bits(), trace.error_count(), trace.ber());
    eprintln!(
        "wall_time_s={:.3} throughput_bits_per_s={:.3e}",
        wall,
        a.bits as f64 / wall.max(1e-9)
    );
    Ok(ExitCode::SUCCESS)
}

/// Error-free saturation goodput from the simulator at each reference rate.
fn simulated_goodputs(report: &FitReport, hours: f64, jobs: Option<usize>) -> Result<Vec<f64>> {
    let mut base = ScenarioConfig::new(TrafficMode::Saturation, 30.0, 1, hours * 3600.0);
    base.channel.ideal = true;
    base.modem.t_preamble_s = report.timing.t_preamble_s;
    base.modem.t_flush_s = report.timing.t_flush_s;
    base.modem.t_turnaround_s = report.timing.t_turnaround_s;
    base.link.frame_overhead_bytes = report.timing.frame_overhead_bytes;
    let scenarios: Vec<ScenarioConfig> = hfsim::modem::REFERENCE_RATES
        .iter()
        .map(|&rate| {
            let mut sc = base.clone();
            sc.modem.data_rate_bps = rate;
            sc
        })
        .collect();
    let run = |sc: &ScenarioConfig| -> Result<f64> {
        let tables: TableSet = sc.load_tables()?;
        Ok(Simulation::new(sc, &tables)?.run().goodput_bps)
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
    pool.install(|| {
        use rayon::prelude::*;
        scenarios.par_iter().map(run).collect()
    })
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<ExitCode> {
    let started = Instant::now();
    let report = calibrate::fit_timing(&CycleShape::default(), &FitGrid::default());
    let simulated = simulated_goodputs(&report, a.hours, a.jobs)?;

    let t = &report.timing;
    let mut params = String::new();
    writeln!(params, "# Fitted modem timing; merge into a scenario document.")?;
    writeln!(params, "# worst_relative_residual = {:.6}", report.worst())?;
    writeln!(params, "[modem]")?;
    writeln!(params, "t_preamble_s = {}", t.t_preamble_s)?;
    writeln!(params, "t_flush_s = {}", t.t_flush_s)?;
    writeln!(params, "t_turnaround_s = {}", t.t_turnaround_s)?;
    writeln!(params, "\n[link]")?;
    writeln!(params, "frame_overhead_bytes = {}", t.frame_overhead_bytes)?;

    let mut table = String::from("rate_bps,target_bps,fitted_bps,relative_error,simulated_bps,sim_vs_fitted\n");
    for (r, sim) in report.residuals.iter().zip(&simulated) {
        writeln!(
            table,
            "{},{:.0},{:.1},{:+.4},{:.1},{:+.4}",
            r.rate_bps,
            r.target_bps,
            r.fitted_bps,
            r.relative_error,
            sim,
            (sim - r.fitted_bps) / r.fitted_bps
        )?;
    }

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    std::fs::write(a.out.join("calibration.toml"), &params)?;
    std::fs::write(a.out.join("calibration_residuals.csv"), &table)?;
    print!("{params}\n{table}");
    eprintln!("wall_time_s={:.3}", started.elapsed().as_secs_f64());

    if !report.within_tolerance() {
        eprintln!(
            "error: worst residual {:.2}% exceeds the {:.0}% tolerance\n{table}",
            100.0 * report.worst(),
            100.0 * calibrate::FIT_TOLERANCE
        );
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
