//! SNR sweeps over isolated simulation instances.
//!
//! Every (SNR, mode, seed) point is an independent run. Seed `i` is the
//! base seed plus `i` for every mode, so modes see identical channel error
//! sequences. Results are ordered by (SNR, mode, seed) whatever order the
//! worker threads finish in.

use rayon::prelude::*;

use crate::scenario::{ScenarioConfig, ScenarioError, TableSet};
use crate::sim::{RunMetrics, Simulation};
use crate::transport::TrafficMode;

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub snrs_db: Vec<f64>,
    pub seeds: u32,
    pub modes: Vec<TrafficMode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub mode: TrafficMode,
    pub runs: u32,
    pub successes: u32,
    pub mean_per: f64,
    pub mean_completion_s: Option<f64>,
}

impl SweepPoint {
    pub fn success_rate(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.successes as f64 / self.runs as f64
        }
    }
}

#[derive(Debug, Default)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub runs: Vec<RunMetrics>,
    /// SNR points skipped, with the reason.
    pub skipped: Vec<(f64, String)>,
}

impl SweepResult {
    pub fn point(&self, snr_db: f64, mode: TrafficMode) -> Option<&SweepPoint> {
        self.points
            .iter()
            .find(|p| p.mode == mode && (p.snr_db - snr_db).abs() < 1e-9)
    }
}

/// The scenario for one sweep point.
pub fn point_scenario(base: &ScenarioConfig, snr_db: f64, mode: TrafficMode, seed_index: u32) -> ScenarioConfig {
    let mut sc = base.clone();
    sc.channel.snr_db = snr_db;
    sc.mode = mode;
    sc.master_seed = base.master_seed + seed_index as u64;
    sc
}

/// Runs the sweep with `jobs` worker threads (all cores when `None`).
/// `load_tables` supplies the tables for each SNR; a failure skips that
/// SNR.
pub fn run_sweep<F>(
    base: &ScenarioConfig,
    spec: &SweepSpec,
    jobs: Option<usize>,
    load_tables: F,
) -> Result<SweepResult, ScenarioError>
where
    F: Fn(&ScenarioConfig) -> Result<TableSet, ScenarioError>,
{
    if spec.modes.contains(&TrafficMode::Enhanced) {
        return Err(ScenarioError::Unimplemented(
            "mode 'enhanced' is a reserved slot with no implementation".into(),
        ));
    }
    let mut result = SweepResult::default();
    let mut work = Vec::new();
    for &snr in &spec.snrs_db {
        let probe = point_scenario(base, snr, base.mode, 0);
        match load_tables(&probe) {
            Ok(tables) => {
                for &mode in &spec.modes {
                    for i in 0..spec.seeds {
                        work.push((point_scenario(base, snr, mode, i), tables.clone()));
                    }
                }
            }
            Err(e) => result.skipped.push((snr, e.to_string())),
        }
    }

    let run_all = || -> Result<Vec<RunMetrics>, ScenarioError> {
        work.par_iter()
            .map(|(sc, tables)| Ok(Simulation::new(sc, tables)?.run()))
            .collect()
    };
    let runs = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(run_all)?,
        None => run_all()?,
    };

    for (chunk, first) in runs.chunks(spec.seeds.max(1) as usize).zip(work.iter().step_by(spec.seeds.max(1) as usize)) {
        if spec.seeds == 0 {
            break;
        }
        let n = chunk.len() as u32;
        let successes: u32 = chunk.iter().map(|m| m.successes() as u32).sum();
        let runs_counted: u32 = chunk.iter().map(|m| m.transfers.len().max(1) as u32).sum();
        let completions: Vec<f64> = chunk
            .iter()
            .flat_map(|m| m.transfers.iter().filter_map(|t| t.completion_s))
            .collect();
        result.points.push(SweepPoint {
            snr_db: first.0.channel.snr_db,
            mode: first.0.mode,
            runs: if first.0.mode == TrafficMode::Saturation { n } else { runs_counted },
            successes,
            mean_per: chunk.iter().map(|m| m.packet_error_rate).sum::<f64>() / n as f64,
            mean_completion_s: (!completions.is_empty())
                .then(|| completions.iter().sum::<f64>() / completions.len() as f64),
        });
    }
    result.runs = runs;
    Ok(result)
}
