mod common;

use common::synthetic_tape;
use eventimpact::events::{reconstruct_mid_half, reconstruct_spread_half};
use eventimpact::gapmodel::{calibrate_kernels, realized_gaps, KernelConfig};
use eventimpact::ingest::{classify, classify_with_report, read_events, write_events, IngestConfig};
use eventimpact::propagator::{solve_multi_event, solve_single_event};
use eventimpact::sim::{generate, GeneratorConfig};
use eventimpact::spread::one_step_balance;
use eventimpact::stats::{
    correlation_sums, estimate_correlations_with, estimate_responses, single_event_inputs, CorrelationSums,
    StatsConfig,
};
use eventimpact::{derive_side, CorrelationSet, EventStream, EventType, GapProcess, MarketEvent, SignProcess, N_TYPES};
use proptest::prelude::*;

fn probs() -> impl Strategy<Value = [f64; N_TYPES]> {
    prop::array::uniform6(0.02f64..1.0).prop_map(|p| {
        let t: f64 = p.iter().sum();
        p.map(|x| x / t)
    })
}

fn iid_stream(p: [f64; N_TYPES], gaps: [i64; 3], n: usize, seed: u64, persistence: f64) -> EventStream {
    let mut cfg = GeneratorConfig::iid(p, gaps, n, seed);
    cfg.events_per_day = 1_000;
    cfg.initial_spread_half = 40;
    cfg.signs = SignProcess::PerType { persistence: [persistence; N_TYPES] };
    generate(&cfg).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Negates every sign and reflects the mid path, so each event moves the
/// price by the same amount in the other direction.
fn sign_flipped(s: &EventStream) -> EventStream {
    let pivot = 2 * s.events[0].mid_before_half;
    let events: Vec<MarketEvent> = s
        .events
        .iter()
        .map(|e| MarketEvent { sign: -e.sign, mid_before_half: pivot - e.mid_before_half, ..*e })
        .collect();
    EventStream::new(s.symbol.clone(), s.tick_size, events).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn paths_reconstruct_exactly(p in probs(), g in prop::array::uniform3(1i64..6), seed in any::<u64>(), n in 100usize..4000) {
        let s = iid_stream(p, g, n, seed, 0.5);
        let mid = reconstruct_mid_half(&s).unwrap();
        let spr = reconstruct_spread_half(&s).unwrap();
        // Entry t + 1 is the state after event t.
        prop_assert_eq!(mid[0], s.events[0].mid_before_half);
        for (i, e) in s.events.iter().enumerate() {
            prop_assert_eq!(mid[i + 1], e.mid_after_half());
            prop_assert_eq!(spr[i + 1], e.spread_after_half());
        }
    }

    #[test]
    fn side_is_odd_in_sign(t in 0usize..N_TYPES, sign in prop::sample::select(vec![-1i8, 1])) {
        let ty = EventType::ALL[t];
        prop_assert_eq!(derive_side(ty, -sign), -derive_side(ty, sign));
    }

    #[test]
    fn type_frequencies_partition_unity(p in probs(), seed in any::<u64>(), n in 1usize..3000) {
        let s = iid_stream(p, [1, 1, 1], n, seed, 0.0);
        let total: f64 = s.probabilities().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn event_csv_round_trip(p in probs(), g in prop::array::uniform3(1i64..6), seed in any::<u64>(), n in 1usize..2000) {
        let s = iid_stream(p, g, n, seed, 0.3);
        let mut buf = Vec::new();
        write_events(&s, &mut buf).unwrap();
        let back = read_events(buf.as_slice(), &s.symbol, s.tick_size).unwrap();
        prop_assert_eq!(back.events, s.events);
    }

    #[test]
    fn generation_is_deterministic(p in probs(), seed in any::<u64>()) {
        let mut cfg = GeneratorConfig::iid(p, [2, 1, 1], 3000, seed);
        cfg.signs = SignProcess::LongMemory { gamma: 0.6 };
        prop_assert_eq!(generate(&cfg).unwrap().events, generate(&cfg).unwrap().events);
    }

    #[test]
    fn day_split_sums_merge_exactly(p in probs(), seed in any::<u64>(), days in 2usize..6, cut in 1usize..5, same_day in any::<bool>()) {
        prop_assume!(cut < days);
        let s = iid_stream(p, [1, 2, 1], days * 1000, seed, 0.4);
        let lag = 40;
        let full = correlation_sums(&s, lag, same_day);
        let (a, b) = (s.days(0, cut), s.days(cut, days));
        let mut merged = CorrelationSums::zeros(lag);
        merged.add(&correlation_sums(&a, lag, true));
        merged.add(&correlation_sums(&b, lag, true));
        if same_day {
            prop_assert_eq!(&merged, &full);
            let direct = estimate_correlations_with(&s, &StatsConfig { bootstrap_reps: 0, ..StatsConfig::with_lag(lag) }).unwrap();
            let rebuilt = CorrelationSet::from_sums(merged, true, direct.min_count);
            prop_assert_eq!(bits(&rebuilt.signed), bits(&direct.signed));
            prop_assert_eq!(bits(&rebuilt.unsigned), bits(&direct.unsigned));
        } else {
            // Pooled pairs across the cut are the only difference.
            prop_assert_eq!(merged.type_counts, full.type_counts);
            prop_assert!(merged.pair_counts.iter().zip(&full.pair_counts).all(|(m, f)| m <= f));
        }
    }

    #[test]
    fn global_sign_flip_leaves_estimates_unchanged(p in probs(), g in prop::array::uniform3(1i64..4), seed in any::<u64>()) {
        let s = iid_stream(p, g, 4000, seed, 0.6);
        let f = sign_flipped(&s);
        let cfg = StatsConfig { bootstrap_reps: 0, ..StatsConfig::with_lag(30) };
        let (cs, cf) = (estimate_correlations_with(&s, &cfg).unwrap(), estimate_correlations_with(&f, &cfg).unwrap());
        prop_assert_eq!(bits(&cs.signed), bits(&cf.signed));
        prop_assert_eq!(bits(&cs.unsigned), bits(&cf.unsigned));
        let (rs, rf) = (estimate_responses(&s, &cfg).unwrap(), estimate_responses(&f, &cfg).unwrap());
        prop_assert_eq!(bits(&rs.r.values), bits(&rf.r.values));
        prop_assert_eq!(bits(&rs.rs.values), bits(&rf.rs.values));
        prop_assert_eq!(bits(&rs.d.values), bits(&rf.d.values));
        prop_assert_eq!(realized_gaps(&s).unwrap().delta_r, realized_gaps(&f).unwrap().delta_r);
        let kc = KernelConfig { bootstrap_reps: 0, ..KernelConfig::with_lag(5) };
        let (ks, kf) = (calibrate_kernels(&s, &cs, &kc).unwrap(), calibrate_kernels(&f, &cf, &kc).unwrap());
        for (x, y) in [(&ks.k, &kf.k), (&ks.k_tilde, &kf.k_tilde), (&ks.kappa, &kf.kappa)] {
            for (a, b) in x.values.iter().zip(&y.values) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn ingest_conserves_and_tracks_raw_mid(n in 200usize..3000, seed in any::<u64>()) {
        let (bbo, trades) = synthetic_tape(n, seed);
        let cfg = IngestConfig::default();
        let (s, report) = classify_with_report(&bbo, &trades, &cfg).unwrap();
        for (date, c) in &report.per_day {
            prop_assert!(c.balanced(), "date {}: {:?}", date, c);
        }
        // The last event stamped with a record's time leaves the book at
        // that record's quotes.
        let mids = reconstruct_mid_half(&s).unwrap();
        for i in 0..s.len() {
            let e = &s.events[i];
            if s.events.get(i + 1).is_some_and(|x| x.timestamp_ns == e.timestamp_ns) {
                continue;
            }
            let r = bbo.iter().rev().find(|r| r.timestamp_ns == e.timestamp_ns).unwrap();
            let raw = ((r.bid_price + r.ask_price) / cfg.tick_size).round() as i64;
            prop_assert_eq!(mids[i + 1], raw);
        }
    }

    #[test]
    fn ingest_is_deterministic(n in 200usize..2000, seed in any::<u64>()) {
        let (bbo, trades) = synthetic_tape(n, seed);
        let cfg = IngestConfig::default();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_events(&classify(&bbo, &trades, &cfg).unwrap(), &mut x).unwrap();
        write_events(&classify(&bbo, &trades, &cfg).unwrap(), &mut y).unwrap();
        prop_assert_eq!(x, y);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn stationary_spread_is_balanced(seed in any::<u64>(), alpha in 0.005f64..0.05) {
        let mut cfg = GeneratorConfig::aapl_like(200_000, seed);
        cfg.gaps = GapProcess::SpreadReverting { alpha, base_gap: [1.0; 3], mean_spread: 30.0 };
        let s = generate(&cfg).unwrap();
        let (mean, se) = one_step_balance(&s).unwrap();
        prop_assert!(mean.abs() <= 3.0 * se, "mean {} se {}", mean, se);
    }
}

#[test]
fn simulator_stream_round_trips_through_csv() {
    let s = generate(&GeneratorConfig::aapl_like(100_000, 5)).unwrap();
    let mut buf = Vec::new();
    write_events(&s, &mut buf).unwrap();
    let back = read_events(buf.as_slice(), &s.symbol, s.tick_size).unwrap();
    assert_eq!(back.events, s.events);
    let mut again = Vec::new();
    write_events(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn market_order_only_flow_matches_single_event_baseline() {
    let mut p = [0.0; N_TYPES];
    p[EventType::MOp.index()] = 1.0;
    let mut cfg = GeneratorConfig::iid(p, [1, 1, 1], 40_000, 12);
    cfg.signs = SignProcess::LongMemory { gamma: 0.5 };
    let s = generate(&cfg).unwrap();
    let lag = 50;
    let stats = StatsConfig { bootstrap_reps: 0, ..StatsConfig::with_lag(lag) };
    let corr = estimate_correlations_with(&s, &stats).unwrap();
    let resp = estimate_responses(&s, &stats).unwrap();
    let multi = solve_multi_event(&corr, &resp, Some(0.0)).unwrap();
    let (r, c) = single_event_inputs(&s, lag, 0.0).unwrap();
    let (single, _, _) = solve_single_event(&r, &c, Some(0.0)).unwrap();
    for l in 1..=lag {
        let (a, b) = (multi.get(EventType::MOp.index(), l), single[l]);
        assert!((a - b).abs() <= 1e-9, "lag {l}: {a} vs {b}");
    }
}
