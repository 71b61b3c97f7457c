mod common;

use std::sync::Arc;

use hfsim::calibrate::{cycle_goodput_bps, CycleShape, Timing};
use hfsim::kernel::SimTime;
use hfsim::modem::REFERENCE_RATES;
use hfsim::s5066::{NodeId, RateAdaptMode};
use hfsim::scenario::{ScenarioConfig, TableSet};
use hfsim::sim::{RunMetrics, Simulation};
use hfsim::transport::{Outcome, TrafficMode};

use common::{clean_tables, stand_in_table, table_set, transfer_scenario};

const TABLE_BITS: u64 = 2_000_000;

fn run(sc: &ScenarioConfig, tables: &TableSet) -> RunMetrics {
    Simulation::new(sc, tables).unwrap().run()
}

fn saturation(rate: u32, hours: f64, seed: u64) -> ScenarioConfig {
    let mut sc = ScenarioConfig::new(TrafficMode::Saturation, 16.0, seed, hours * 3600.0);
    sc.channel.doppler_hz = 1.0;
    sc.channel.multipath_ms = 2.0;
    sc.channel.ideal = true;
    sc.modem.data_rate_bps = rate;
    sc
}

#[test]
fn proxied_stream_is_intact_for_every_seed() {
    let tables: Vec<TableSet> = [13.0, 14.0, 15.0, 16.0]
        .iter()
        .map(|&snr| table_set(2400, stand_in_table(snr, 2400, TABLE_BITS)))
        .collect();
    let mut outcomes = [0usize; 2];
    for seed in 0..100u64 {
        let snr = 13.0 + (seed % 4) as f64;
        let m = run(&transfer_scenario(TrafficMode::Accelerate, snr, seed), &tables[(seed % 4) as usize]);
        let t = &m.transfers[0];
        assert!(t.stream_intact, "seed {seed}: stream corrupted after {} bytes", t.delivered_bytes);
        if t.outcome == Outcome::Success {
            assert_eq!(t.delivered_bytes, t.size_bytes);
            outcomes[0] += 1;
        } else {
            outcomes[1] += 1;
        }
    }
    // The audit must have seen both complete and partial streams.
    assert!(outcomes[0] > 0 && outcomes[1] > 0, "{outcomes:?}");
}

#[test]
fn plain_stream_is_intact_for_every_seed() {
    let tables = table_set(2400, stand_in_table(15.0, 2400, TABLE_BITS));
    for seed in 0..30u64 {
        let m = run(&transfer_scenario(TrafficMode::Plain, 15.0, seed), &tables);
        assert!(m.transfers[0].stream_intact, "seed {seed}");
    }
}

#[test]
fn error_free_channel_succeeds_in_every_mode() {
    let tables = clean_tables(2400);
    for seed in 0..5 {
        let plain = run(&transfer_scenario(TrafficMode::Plain, 30.0, seed), &tables);
        let accel = run(&transfer_scenario(TrafficMode::Accelerate, 30.0, seed), &tables);
        let got: Vec<_> = [&plain, &accel].iter().map(|m| m.transfers[0].outcome).collect();
        assert_eq!(got, [Outcome::Success, Outcome::Success], "seed {seed}");
        assert_eq!(plain.link.frames_corrupted + accel.link.frames_corrupted, 0);
    }
}

#[test]
fn proxy_is_transparent_on_a_clean_channel() {
    let tables = clean_tables(2400);
    let mut sc = transfer_scenario(TrafficMode::Plain, 30.0, 7);
    sc.traffic[0].size_bytes = 20_000;
    for (i, size) in [1u64, 1459, 1460, 50_000].into_iter().enumerate() {
        let mut t = sc.traffic[0].clone();
        t.size_bytes = size;
        t.start_s = 30.0 * i as f64;
        sc.traffic.push(t);
    }
    let plain = run(&sc, &tables);
    sc.mode = TrafficMode::Accelerate;
    let accel = run(&sc, &tables);
    let outcome = |m: &RunMetrics| m.transfers.iter().map(|t| (t.outcome, t.delivered_bytes)).collect::<Vec<_>>();
    assert_eq!(outcome(&plain), outcome(&accel));
    assert!(plain.transfers.iter().all(|t| t.outcome == Outcome::Success && t.stream_intact));
}

#[test]
fn short_rto_cap_thrashes_plain_tcp_but_not_the_proxy() {
    let tables = clean_tables(2400);
    let mut sc = transfer_scenario(TrafficMode::Plain, 30.0, 3);
    sc.tcp.rto_max_s = 5.0;
    let plain = run(&sc, &tables);
    sc.mode = TrafficMode::Accelerate;
    let accel = run(&sc, &tables);

    let p = &plain.transfers[0];
    assert_eq!(p.outcome, Outcome::Failed);
    assert!(p.aborted, "plain TCP should give up after repeated timeouts");
    assert!(p.bytes_retransmitted > 0);
    let a = &accel.transfers[0];
    assert_eq!(a.outcome, Outcome::Success);
    assert_eq!(a.bytes_retransmitted, 0);
}

#[test]
fn proxy_buffering_stays_bounded() {
    let tables = table_set(2400, stand_in_table(14.0, 2400, TABLE_BITS));
    for seed in 0..5 {
        let mut sc = transfer_scenario(TrafficMode::Accelerate, 14.0, seed);
        sc.traffic[0].size_bytes = 400_000;
        sc.link.queue_packets = 8;
        sc.pep.advertised_window_bytes = 32_768;
        let mut sim = Simulation::new(&sc, &tables).unwrap();
        let bound = sim.proxy_backlog_bound();
        let mut peak = 0;
        while sim.step(SimTime::from_secs_f64(sc.duration_s)) {
            let b = sim.proxy_backlog(0).unwrap();
            assert!(b <= bound, "seed {seed}: backlog {b} above {bound} at {:?}", sim.now());
            peak = peak.max(b);
        }
        // The bound is reached in practice, so the check is not vacuous.
        assert!(peak * 2 > bound, "peak {peak} bound {bound}");
    }
}

#[test]
fn saturation_matches_the_cycle_closed_form_at_2400() {
    let m = run(&saturation(2400, 24.0, 1), &clean_tables(2400));
    let oracle = cycle_goodput_bps(&Timing::fitted(), &CycleShape::default(), 2400);
    let rel = (m.goodput_bps - oracle) / oracle;
    assert!(rel.abs() <= 0.03, "goodput {:.1} vs closed form {oracle:.1}", m.goodput_bps);
    let eff = m.goodput_bps / 2400.0;
    assert!((0.70..=0.80).contains(&eff), "efficiency {eff:.3}");
}

#[test]
fn saturation_keeps_the_queue_full() {
    let sc = saturation(2400, 1.0, 1);
    let mut sim = Simulation::new(&sc, &clean_tables(2400)).unwrap();
    while sim.step(SimTime::from_secs_f64(sc.duration_s)) {
        assert!(sim.link().queued_packets(NodeId::A) > 0, "queue ran dry at {:?}", sim.now());
    }
}

/// The modes are compared on a bulk transfer long enough that where a run
/// stops within a transmission cycle hardly matters. The saturation run
/// lasts exactly as long as the proxied transfer did, so both draw on the
/// same stretch of the channel's error sequence.
///
/// A bulk transfer through the proxy keeps the link as full as saturation
/// does, so those two tie in expectation. Their frames fall on different
/// bits of the shared error sequence, which leaves a few percent of noise
/// either way; only plain TCP is strictly below.
#[test]
fn plain_tcp_trails_while_proxy_matches_saturation() {
    for snr in [14.0, 15.0, 16.0, 17.0, 18.0] {
        let tables = table_set(2400, stand_in_table(snr, 2400, TABLE_BITS));
        let (mut sum_s, mut sum_a) = (0.0, 0.0);
        for seed in 0..10u64 {
            let bulk = |mode| {
                let mut sc = transfer_scenario(mode, snr, seed);
                sc.traffic[0].size_bytes = 1_000_000;
                sc.traffic[0].deadline_s = 86_400.0;
                sc.duration_s = 86_400.0;
                sc
            };
            let plain = run(&bulk(TrafficMode::Plain), &tables);
            let accel = run(&bulk(TrafficMode::Accelerate), &tables);
            let mut sc = bulk(TrafficMode::Saturation);
            sc.traffic.clear();
            sc.duration_s = accel.sim_time_s;
            let sat = run(&sc, &tables);
            let (s, a, p) = (sat.goodput_bps, accel.goodput_bps, plain.goodput_bps);
            assert!(a >= p && s >= p, "snr {snr} seed {seed}: {s:.0} {a:.0} {p:.0}");
            assert!(s >= 0.92 * a, "snr {snr} seed {seed}: saturation {s:.0} far below proxy {a:.0}");
            sum_s += s;
            sum_a += a;
        }
        assert!(sum_s >= 0.98 * sum_a, "snr {snr}: mean saturation {} proxy {}", sum_s / 10.0, sum_a / 10.0);
    }
}

#[test]
fn adaptive_rate_keeps_most_of_the_best_fixed_rate() {
    let snr = 15.0;
    let mut tables = TableSet::new();
    for &rate in REFERENCE_RATES.iter() {
        tables.insert(rate, stand_in_table(snr, rate, TABLE_BITS));
    }
    let fixed: Vec<(u32, f64)> = REFERENCE_RATES
        .iter()
        .map(|&rate| {
            let mut sc = saturation(rate, 12.0, 5);
            sc.channel.snr_db = snr;
            let one: TableSet = [(rate, Arc::clone(&tables[&rate]))].into_iter().collect();
            (rate, run(&sc, &one).goodput_bps)
        })
        .collect();
    let (best_rate, best) = fixed.iter().copied().fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });

    let mut sc = saturation(75, 12.0, 5);
    sc.channel.snr_db = snr;
    sc.link.rate_adapt = RateAdaptMode::Simple;
    let adaptive = run(&sc, &tables);
    assert!(
        adaptive.goodput_bps >= 0.8 * best,
        "adaptive {:.0} bps vs best fixed {best:.0} bps at {best_rate}; all fixed: {fixed:?}",
        adaptive.goodput_bps
    );
}
