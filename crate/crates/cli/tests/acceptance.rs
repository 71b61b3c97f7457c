//! Acceptance run: one PASS/FAIL line per criterion, exit status nonzero if
//! any criterion fails. Oracles here are written independently of the
//! library code under test.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hfsim::calibrate::{fit_timing, CycleShape, FitGrid, Timing, REFERENCE_CALCULATED_BPS};
use hfsim::errormodel::{analyze_trace, BurstSynthParams, Erracle};
use hfsim::kernel::RngStream;
use hfsim::modem::REFERENCE_RATES;
use hfsim::scenario::ScenarioConfig;
use hfsim::sim::Simulation;
use hfsim::sweep::{run_sweep, SweepSpec};
use hfsim::transport::TrafficMode;

use common::arq::{run_case, ArqCase};
use common::{gap_lengths, key, ks_distance, oracle_chain, stand_in_table, table_set, trace_of, transfer_scenario};

// Tolerances.
const FIT_TOL: f64 = 0.05;
const DES_TOL: f64 = 0.04;
const DES_TOL_75: f64 = 0.10;
const KS_TOL: f64 = 0.05;
const BER_TOL: f64 = 0.05;
const REGEN_BITS_PER_S: f64 = 1e7;
const ARQ_RUNS: u64 = 200;
const ARQ_MAX_BER: f64 = 0.10;
const SWEEP_SEEDS: u32 = 20;
const MIN_SNR_POINTS: usize = 5;
const VIABLE: f64 = 0.8;
const TRANSITION_STEPS: usize = 2;
const TARGET_PER: f64 = 0.04;
const PER_BAND: (f64, f64) = (0.03, 0.05);
const PEP_SUCCESS: f64 = 0.9;
const SPEEDUP: f64 = 100.0;

/// Reference calculated throughput in bps, written out independently of the library constant.
const CALCULATED: [(u32, f64); 11] = [
    (75, 57.0),
    (150, 113.0),
    (300, 229.0),
    (600, 456.0),
    (1200, 912.0),
    (2400, 1803.0),
    (3200, 2543.0),
    (4800, 3717.0),
    (6400, 4536.0),
    (8000, 5476.0),
    (9600, 6202.0),
];

const TABLE_BITS: u64 = 2_000_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn hfsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hfsim"))
}

/// Error-free cycle goodput in continuous time: a data burst of as many
/// frames as fit in 120 s (at most a window), an acknowledgement burst,
/// and two turnarounds.
fn oracle_goodput(rate: u32, t: &Timing) -> f64 {
    let rate = rate as f64;
    let fixed = t.t_preamble_s + t.t_flush_s;
    let frame_bits = 8.0 * (250 + t.frame_overhead_bytes) as f64;
    let n = ((120.0 - fixed) * rate / frame_bits).floor().min(128.0);
    let data = fixed + n * frame_bits / rate;
    let ack = fixed + 8.0 * (8.0 + 16.0) / rate;
    8.0 * 250.0 * n / (data + ack + 2.0 * t.t_turnaround_s)
}

fn c1_calibration() -> Verdict {
    let table_matches = REFERENCE_RATES
        .iter()
        .zip(REFERENCE_CALCULATED_BPS)
        .zip(CALCULATED)
        .all(|((&r, c), (r2, c2))| r == r2 && c == c2);
    let report = fit_timing(&CycleShape::default(), &FitGrid::default());
    let worst = CALCULATED
        .iter()
        .map(|&(rate, target)| ((oracle_goodput(rate, &report.timing) - target) / target).abs())
        .fold(0.0, f64::max);
    let t = report.timing;
    verdict(
        table_matches && worst <= FIT_TOL,
        format!(
            "preamble {} s, flush {} s, turnaround {} s, overhead {} B; worst residual {:.2}% (limit {:.0}%)",
            t.t_preamble_s,
            t.t_flush_s,
            t.t_turnaround_s,
            t.frame_overhead_bytes,
            100.0 * worst,
            100.0 * FIT_TOL
        ),
    )
}

fn saturation(rate: u32, hours: f64) -> ScenarioConfig {
    let mut sc = ScenarioConfig::new(TrafficMode::Saturation, 30.0, 1, hours * 3600.0);
    sc.channel.ideal = true;
    sc.modem.data_rate_bps = rate;
    sc
}

fn c2_des_agreement() -> Verdict {
    let timing = Timing::fitted();
    let mut worst: (f64, u32) = (0.0, 0);
    let mut pass = true;
    let mut slowest = 0.0f64;
    for &(rate, _) in &CALCULATED {
        let sc = saturation(rate, 24.0);
        let tables = sc.load_tables().unwrap();
        let started = Instant::now();
        let m = Simulation::new(&sc, &tables).unwrap().run();
        slowest = slowest.max(started.elapsed().as_secs_f64());
        let oracle = oracle_goodput(rate, &timing);
        let diff = ((m.goodput_bps - oracle) / oracle).abs();
        let tol = if rate == 75 { DES_TOL_75 } else { DES_TOL };
        pass &= diff <= tol;
        if diff > worst.0 {
            worst = (diff, rate);
        }
    }
    verdict(
        pass && slowest < 60.0,
        format!(
            "24 h per rate; worst |difference| {:.2}% at {} bps (limits {:.0}%, {:.0}% at 75 bps); slowest rate {:.2} s wall",
            100.0 * worst.0,
            worst.1,
            100.0 * DES_TOL,
            100.0 * DES_TOL_75,
            slowest
        ),
    )
}

fn c3_erracle_fidelity() -> Verdict {
    const BITS: u64 = 1_000_000;
    let sets = [
        BurstSynthParams {
            p_g2b: 1e-2,
            p_b2g: 0.1,
            ber_bad: 0.2,
            ber_good: 0.0,
        },
        BurstSynthParams {
            p_g2b: 6e-3,
            p_b2g: 0.25,
            ber_bad: 0.4,
            ber_good: 0.0,
        },
        BurstSynthParams {
            p_g2b: 5e-3,
            p_b2g: 0.05,
            ber_bad: 0.2,
            ber_good: 0.0,
        },
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, p) in sets.iter().enumerate() {
        let source = oracle_chain(p, BITS, 11 + i as u64);
        let table = analyze_trace(&trace_of(source.clone(), BITS), 128, key(10.0, 1.0, 2.0, 2400)).unwrap();
        let mut e = Erracle::new(table.into(), RngStream::new(5, "regen"));
        let regen = e.errors_in_span(0, BITS);
        let ks = ks_distance(&gap_lengths(&source, BITS, 128), &gap_lengths(&regen, BITS, 128));
        let rel = (regen.len() as f64 - source.len() as f64).abs() / source.len() as f64;
        pass &= ks <= KS_TOL && rel <= BER_TOL;
        parts.push(format!("KS {ks:.3} BER err {:.1}%", 100.0 * rel));
    }
    verdict(pass, format!("{} (limits KS {KS_TOL}, BER {:.0}%)", parts.join("; "), 100.0 * BER_TOL))
}

fn c4_regen_throughput(dir: &Path) -> Verdict {
    let table = stand_in_table(15.0, 2400, TABLE_BITS);
    let table_path = dir.join(table.key.file_name());
    table.save(&table_path).unwrap();
    let bits = 100_000_000u64;
    let started = Instant::now();
    let out = hfsim()
        .args(["regen", "--bits", &bits.to_string(), "--seed", "3", "--table"])
        .arg(&table_path)
        .arg("--out")
        .arg(dir.join("regen.trace"))
        .output()
        .unwrap();
    let wall = started.elapsed().as_secs_f64();
    let rate = bits as f64 / wall;
    verdict(
        out.status.success() && rate >= REGEN_BITS_PER_S,
        format!(
            "hfsim regen of 1e8 bits (BER {:.1e}) in {wall:.2} s wall: {rate:.2e} bits/s (limit {REGEN_BITS_PER_S:.0e})",
            table.source_ber
        ),
    )
}

fn c5_arq_properties() -> Verdict {
    let mut failures = Vec::new();
    let mut delivered = 0usize;
    let mut max_ber = 0.0f64;
    for i in 0..ARQ_RUNS {
        let case = ArqCase::random(10_000 + i, ARQ_MAX_BER);
        max_ber = max_ber.max(case.mean_ber());
        match run_case(&case) {
            Ok(r) => delivered += r.delivered.iter().map(Vec::len).sum::<usize>(),
            Err(e) => failures.push(format!("seed {}: {e}", case.seed)),
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} of {ARQ_RUNS} runs violated exactly-once in-order delivery or conservation; {delivered} packets audited; mean BER up to {:.3}{}",
            failures.len(),
            max_ber,
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn curve(snrs: &[f64], rates: &[f64]) -> String {
    snrs.iter()
        .zip(rates)
        .map(|(s, r)| format!("{s:.0}:{r:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Grid steps between the last point at or below 0.1 and the first at or
/// above 0.9, if the curve crosses.
fn transition_steps(rates: &[f64]) -> Option<usize> {
    let hi = rates.iter().position(|&r| r >= 0.9)?;
    let lo = rates[..hi].iter().rposition(|&r| r <= 0.1)?;
    Some(hi - lo)
}

fn threshold(snrs: &[f64], rates: &[f64]) -> Option<f64> {
    snrs.iter().zip(rates).find(|(_, &r)| r >= VIABLE).map(|(&s, _)| s)
}

fn c6_figure_ordering() -> Verdict {
    let snrs: Vec<f64> = (10..=20).map(f64::from).collect();
    let base = transfer_scenario(TrafficMode::Plain, 15.0, 1);
    let spec = SweepSpec {
        snrs_db: snrs.clone(),
        seeds: SWEEP_SEEDS,
        modes: vec![TrafficMode::Plain, TrafficMode::Accelerate],
    };
    let r = run_sweep(&base, &spec, None, |sc| {
        Ok(table_set(2400, stand_in_table(sc.channel.snr_db, 2400, TABLE_BITS)))
    })
    .unwrap();
    let rates = |mode| -> Vec<f64> { snrs.iter().map(|&s| r.point(s, mode).unwrap().success_rate()).collect() };
    let (plain, accel) = (rates(TrafficMode::Plain), rates(TrafficMode::Accelerate));

    let ordered = plain.iter().zip(&accel).all(|(p, a)| a >= p);
    let (tp, ta) = (threshold(&snrs, &plain), threshold(&snrs, &accel));
    let thresholds_ok = matches!((ta, tp), (Some(a), Some(p)) if a <= p);
    let (sp, sa) = (transition_steps(&plain), transition_steps(&accel));
    let sharp = [sp, sa].iter().all(|s| s.is_some_and(|s| s <= TRANSITION_STEPS));
    verdict(
        snrs.len() >= MIN_SNR_POINTS && ordered && thresholds_ok && sharp,
        format!(
            "{} SNR points x {SWEEP_SEEDS} seeds; accelerated >= plain everywhere: {ordered}; 80% thresholds accelerated {ta:?} dB, plain {tp:?} dB; 0.1->0.9 steps accelerated {sa:?}, plain {sp:?} (limit {TRANSITION_STEPS}); plain [{}] accelerated [{}]",
            snrs.len(),
            curve(&snrs, &plain),
            curve(&snrs, &accel)
        ),
    )
}

fn c7_pep_at_target_per() -> Verdict {
    let snrs: Vec<f64> = (0..=20).map(|i| 16.0 + 0.1 * i as f64).collect();
    let base = transfer_scenario(TrafficMode::Accelerate, 17.0, 500);
    let spec = SweepSpec {
        snrs_db: snrs,
        seeds: SWEEP_SEEDS,
        modes: vec![TrafficMode::Accelerate],
    };
    let r = run_sweep(&base, &spec, None, |sc| {
        Ok(table_set(2400, stand_in_table(sc.channel.snr_db, 2400, TABLE_BITS)))
    })
    .unwrap();
    let best = r
        .points
        .iter()
        .min_by(|a, b| (a.mean_per - TARGET_PER).abs().total_cmp(&(b.mean_per - TARGET_PER).abs()))
        .unwrap();
    let in_band = (PER_BAND.0..=PER_BAND.1).contains(&best.mean_per);
    verdict(
        in_band && best.success_rate() >= PEP_SUCCESS,
        format!(
            "operating point {:.1} dB with measured PER {:.2}%; accelerated 100 kB transfers succeeded {}/{} (limit {:.0}%)",
            best.snr_db,
            100.0 * best.mean_per,
            best.successes,
            best.runs,
            100.0 * PEP_SUCCESS
        ),
    )
}

fn c8_speed() -> Verdict {
    let sc = saturation(9600, 1.0);
    let tables = sc.load_tables().unwrap();
    let started = Instant::now();
    let m = Simulation::new(&sc, &tables).unwrap().run();
    let wall = started.elapsed().as_secs_f64();
    let speedup = m.sim_time_s / wall;
    verdict(
        speedup >= SPEEDUP,
        format!("1 h at 9600 bps in {wall:.4} s wall: {speedup:.0}x real time (limit {SPEEDUP:.0}x)"),
    )
}

fn files_in(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (PathBuf::from(p.file_name().unwrap()), bytes)
        })
        .collect();
    v.sort();
    v
}

fn c9_determinism(dir: &Path) -> Verdict {
    let tables = dir.join("tables");
    std::fs::create_dir_all(&tables).unwrap();
    for snr in [14.0, 15.0, 16.0] {
        let t = stand_in_table(snr, 2400, TABLE_BITS);
        t.save(&tables.join(t.key.file_name())).unwrap();
    }
    let scenario = dir.join("scenario.toml");
    std::fs::write(
        &scenario,
        "version = 1\nmaster_seed = 9\nduration_s = 7200\nmode = \"accelerate\"\n\n\
         [channel]\nsnr_db = 15\ndoppler_hz = 1\nmultipath_ms = 2\ntable_dir = \"tables\"\n\n\
         [[traffic]]\nsize_bytes = 100000\ndeadline_s = 7200\n",
    )
    .unwrap();

    let run = |out: &str| {
        let ok = hfsim()
            .arg("run")
            .arg("--scenario")
            .arg(&scenario)
            .arg("--out")
            .arg(dir.join(out))
            .output()
            .unwrap()
            .status
            .success();
        (ok, files_in(&dir.join(out)))
    };
    let (ok1, a) = run("run1");
    let (ok2, b) = run("run2");
    let runs_equal = ok1 && ok2 && a.len() == 3 && a == b;

    let sweep = |jobs: &str, out: &str| {
        let ok = hfsim()
            .args(["sweep", "--snr", "14,15,16", "--seeds", "4", "--jobs", jobs, "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(dir.join(out))
            .output()
            .unwrap()
            .status
            .success();
        (ok, files_in(&dir.join(out)))
    };
    let (ok3, s1) = sweep("1", "serial");
    let (ok4, s4) = sweep("4", "parallel");
    let sweeps_equal = ok3 && ok4 && s1.len() == 2 && s1 == s4;
    verdict(
        runs_equal && sweeps_equal,
        format!(
            "hfsim run twice: {} files byte-identical: {runs_equal}; hfsim sweep --jobs 1 vs --jobs 4: {} files byte-identical: {sweeps_equal}",
            a.len(),
            s1.len()
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("calibration shape", Box::new(c1_calibration)),
        ("model vs calculated", Box::new(c2_des_agreement)),
        ("erracle fidelity", Box::new(c3_erracle_fidelity)),
        ("erracle throughput", Box::new(|| c4_regen_throughput(dir.path()))),
        ("arq correctness", Box::new(c5_arq_properties)),
        ("success vs snr ordering", Box::new(c6_figure_ordering)),
        ("proxy at 4% per", Box::new(c7_pep_at_target_per)),
        ("speed", Box::new(c8_speed)),
        ("determinism", Box::new(|| c9_determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failed += 1;
        }
        println!(
            "{status} criterion {} ({name}): {} [{:.1} s]",
            i + 1,
            v.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
