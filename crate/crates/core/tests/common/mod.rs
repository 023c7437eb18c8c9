//! Helpers shared by the integration test targets.

use eventimpact::ingest::{BboRecord, TradeRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random but internally consistent quote and trade tape over two sessions.
pub fn synthetic_tape(n: usize, seed: u64) -> (Vec<BboRecord>, Vec<TradeRecord>) {
    const DAY: i64 = 86_400_000_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bbo = Vec::new();
    let mut trades = Vec::new();
    for day in 0..2i64 {
        // 10:00 New York at UTC-5.
        let mut ts = (18_519 + day) * DAY + 15 * 3_600_000_000_000;
        let (mut bid, mut ask) = (10_000i64, 10_003i64);
        let (mut bs, mut as_) = (500u64, 500u64);
        let px = |t: i64| t as f64 * 0.01;
        bbo.push(BboRecord { timestamp_ns: ts, bid_price: px(bid), bid_size: bs, ask_price: px(ask), ask_size: as_ });
        for _ in 0..n / 2 {
            ts += rng.random_range(1_000_000..50_000_000);
            let u: f64 = rng.random();
            if u < 0.12 {
                let buy = rng.random_bool(0.5);
                let size = rng.random_range(1..400u64);
                let price = if buy { px(ask) } else { px(bid) };
                trades.push(TradeRecord { timestamp_ns: ts, price, size, aggressor_side: Some(if buy { 1 } else { -1 }) });
                ts += 200_000;
                if buy {
                    if size >= as_ {
                        ask += rng.random_range(1..4);
                        as_ = rng.random_range(50..800);
                    } else {
                        as_ -= size;
                    }
                } else if size >= bs {
                    bid -= rng.random_range(1..4);
                    bs = rng.random_range(50..800);
                } else {
                    bs -= size;
                }
            } else if u < 0.13 {
                bbo.push(BboRecord { timestamp_ns: ts, bid_price: px(ask), bid_size: 10, ask_price: px(ask), ask_size: 10 });
                continue;
            } else if u < 0.135 {
                // Marketable buy limit order resting above the old ask.
                bid = ask;
                ask += rng.random_range(1..3);
                bs = rng.random_range(50..800);
                as_ = rng.random_range(50..800);
            } else {
                for side in [-1i64, 1] {
                    if side == 1 && rng.random_bool(0.7) {
                        continue;
                    }
                    let v: f64 = rng.random();
                    let room = ask - bid - 1;
                    let (p, q) = if side < 0 { (&mut bid, &mut bs) } else { (&mut ask, &mut as_) };
                    if v < 0.35 {
                        *q += rng.random_range(1..200);
                    } else if v < 0.7 {
                        *q = (*q).saturating_sub(rng.random_range(1..200)).max(1);
                    } else if v < 0.85 {
                        *p += side * rng.random_range(1..3);
                        *q = rng.random_range(50..800);
                    } else if room >= 1 {
                        *p -= side * rng.random_range(1..=room.min(2));
                        *q = rng.random_range(1..300);
                    }
                }
            }
            bbo.push(BboRecord { timestamp_ns: ts, bid_price: px(bid), bid_size: bs, ask_price: px(ask), ask_size: as_ });
        }
    }
    (bbo, trades)
}
