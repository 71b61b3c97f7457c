//! CSV renderings of run and sweep results. Every file starts with a
//! comment line naming the scenario hash and seed it came from.

use std::fmt::Write as _;
use std::path::Path;

use crate::scenario::ScenarioConfig;
use crate::sim::RunMetrics;
use crate::sweep::SweepPoint;
use crate::transport::TransferResult;

/// Version of the CSV layouts written here.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub fn provenance_header(scenario_sha256: &str, seed: u64) -> String {
    format!("# schema_version={CSV_SCHEMA_VERSION}, scenario_sha256={scenario_sha256}, seed={seed}\n")
}

pub fn summary_csv(sc: &ScenarioConfig, m: &RunMetrics) -> String {
    let mut s = provenance_header(&sc.sha256_hex(), m.seed);
    s.push_str(
        "mode,snr_db,seed,data_rate_bps,final_rate_bps,sim_time_s,goodput_bps,packet_error_rate,\
         transmissions,frames_sent,frames_retransmitted,frames_corrupted,acks_sent,acks_corrupted,\
         packets_dropped,window_bound_transmissions,rate_changes,transfers,successes,events\n",
    );
    let l = &m.link;
    writeln!(
        s,
        "{},{:.1},{},{},{},{:.6},{:.3},{:.6},{},{},{},{},{},{},{},{},{},{},{},{}",
        m.mode.as_str(),
        m.snr_db,
        m.seed,
        m.data_rate_bps,
        m.final_rate_bps,
        m.sim_time_s,
        m.goodput_bps,
        m.packet_error_rate,
        l.transmissions,
        l.frames_sent,
        l.retransmissions,
        l.frames_corrupted,
        l.acks_sent,
        l.acks_corrupted,
        m.packets_dropped,
        l.window_bound_transmissions,
        l.rate_changes,
        m.transfers.len(),
        m.successes(),
        m.events_dispatched,
    )
    .unwrap();
    s
}

pub const TRANSFER_COLUMNS: &str = "mode,snr_db,seed,size,outcome,completion_s,bytes_retx\n";

pub fn transfer_row(out: &mut String, m: &RunMetrics, t: &TransferResult) {
    let completion = t.completion_s.map(|c| format!("{c:.6}")).unwrap_or_default();
    writeln!(
        out,
        "{},{:.1},{},{},{},{},{}",
        m.mode.as_str(),
        m.snr_db,
        m.seed,
        t.size_bytes,
        t.outcome.as_str(),
        completion,
        t.bytes_retransmitted
    )
    .unwrap();
}

pub fn transfers_csv(sc: &ScenarioConfig, m: &RunMetrics) -> String {
    let mut s = provenance_header(&sc.sha256_hex(), m.seed);
    s.push_str(TRANSFER_COLUMNS);
    for t in &m.transfers {
        transfer_row(&mut s, m, t);
    }
    s
}

pub fn link_log_csv(sc: &ScenarioConfig, m: &RunMetrics) -> String {
    let mut s = provenance_header(&sc.sha256_hex(), m.seed);
    s.push_str("time,direction,frames,retransmissions,corrupted,rate\n");
    for r in &m.link_log {
        writeln!(
            s,
            "{:.6},{},{},{},{},{}",
            r.time.as_secs_f64(),
            r.direction.direction(),
            r.frames,
            r.retransmissions,
            r.corrupted,
            r.rate_bps
        )
        .unwrap();
    }
    s
}

/// Writes `summary.csv`, `transfers.csv` and `link_log.csv` into `dir`.
pub fn write_run(dir: &Path, sc: &ScenarioConfig, m: &RunMetrics) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.csv"), summary_csv(sc, m))?;
    std::fs::write(dir.join("transfers.csv"), transfers_csv(sc, m))?;
    std::fs::write(dir.join("link_log.csv"), link_log_csv(sc, m))?;
    Ok(())
}

pub fn sweep_csv(base: &ScenarioConfig, points: &[SweepPoint]) -> String {
    let mut s = provenance_header(&base.sha256_hex(), base.master_seed);
    s.push_str("snr_db,mode,runs,successes,success_rate,mean_per,mean_completion_s\n");
    for p in points {
        let completion = p.mean_completion_s.map(|c| format!("{c:.3}")).unwrap_or_default();
        writeln!(
            s,
            "{:.1},{},{},{},{:.4},{:.6},{}",
            p.snr_db,
            p.mode.as_str(),
            p.runs,
            p.successes,
            p.success_rate(),
            p.mean_per,
            completion
        )
        .unwrap();
    }
    s
}

pub fn sweep_transfers_csv(base: &ScenarioConfig, runs: &[RunMetrics]) -> String {
    let mut s = provenance_header(&base.sha256_hex(), base.master_seed);
    s.push_str(TRANSFER_COLUMNS);
    for m in runs {
        for t in &m.transfers {
            transfer_row(&mut s, m, t);
        }
    }
    s
}
