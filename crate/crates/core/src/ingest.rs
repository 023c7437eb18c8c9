//! Raw quote and trade ingestion, best-quote event classification and the
//! event CSV format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventStream, EventType, MarketEvent};

const DAY_NS: i64 = 86_400_000_000_000;
const MINUTE_NS: i64 = 60_000_000_000;

/// One best-bid-offer snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BboRecord {
    pub timestamp_ns: i64,
    pub bid_price: f64,
    pub bid_size: u64,
    pub ask_price: f64,
    pub ask_size: u64,
}

/// One printed trade. `aggressor_side` is +1 for buyer-initiated, -1 for
/// seller-initiated, and `None` (or 0 in files) when unknown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub timestamp_ns: i64,
    pub price: f64,
    pub size: u64,
    #[serde(default, deserialize_with = "de_side")]
    pub aggressor_side: Option<i8>,
}

fn de_side<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<i8>, D::Error> {
    let v: Option<i8> = Option::deserialize(d)?;
    Ok(match v {
        Some(1) => Some(1),
        Some(-1) => Some(-1),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub symbol: String,
    pub tick_size: f64,
    /// Same-side trades closer than this to the first trade of a group are merged.
    pub aggregation_ns: i64,
    /// A quote update this long after a trade group can still confirm it.
    pub match_tolerance_ns: i64,
    /// Exchange local time minus UTC.
    pub utc_offset_minutes: i32,
    pub session_open_minutes: u32,
    pub session_close_minutes: u32,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            symbol: "UNKNOWN".into(),
            tick_size: 0.01,
            aggregation_ns: 1_000_000,
            match_tolerance_ns: 1_000_000,
            utc_offset_minutes: -300,
            session_open_minutes: 9 * 60 + 30,
            session_close_minutes: 16 * 60,
        }
    }
}

/// Per-date bookkeeping. Inputs are `quote_side_changes + trade_groups`;
/// every one ends up as an event or in exactly one discard counter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub quote_side_changes: u64,
    pub trade_groups: u64,
    pub events: u64,
    /// Quote changes consumed by a market order event.
    pub absorbed_quote_changes: u64,
    pub unmatched_trades: u64,
    /// Trade groups with no usable book: crossed, locked or not yet known, or
    /// an aggressor side that cannot be inferred.
    pub crossed_trades: u64,
    /// Side changes and trade groups dropped with a marketable limit order.
    pub marketable_removed: u64,

    // Raw-record counters outside the balance.
    pub bbo_records: u64,
    pub trade_records: u64,
    pub crossed_records: u64,
    pub unchanged_records: u64,
    pub opening_snapshots: u64,
    pub marketable_records: u64,
}

impl IngestCounts {
    pub fn discards(&self) -> u64 {
        self.absorbed_quote_changes + self.unmatched_trades + self.crossed_trades + self.marketable_removed
    }

    pub fn balanced(&self) -> bool {
        self.quote_side_changes + self.trade_groups == self.events + self.discards()
    }

    fn add(&mut self, o: &IngestCounts) {
        self.quote_side_changes += o.quote_side_changes;
        self.trade_groups += o.trade_groups;
        self.events += o.events;
        self.absorbed_quote_changes += o.absorbed_quote_changes;
        self.unmatched_trades += o.unmatched_trades;
        self.crossed_trades += o.crossed_trades;
        self.marketable_removed += o.marketable_removed;
        self.bbo_records += o.bbo_records;
        self.trade_records += o.trade_records;
        self.crossed_records += o.crossed_records;
        self.unchanged_records += o.unchanged_records;
        self.opening_snapshots += o.opening_snapshots;
        self.marketable_records += o.marketable_records;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Local calendar date (days since epoch) with its counters.
    pub per_day: Vec<(i64, IngestCounts)>,
    pub out_of_session_bbo: u64,
    pub out_of_session_trades: u64,
}

impl IngestReport {
    pub fn total(&self) -> IngestCounts {
        let mut t = IngestCounts::default();
        for (_, c) in &self.per_day {
            t.add(c);
        }
        t
    }

    pub fn balanced(&self) -> bool {
        self.per_day.iter().all(|(_, c)| c.balanced())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Book {
    bid: i64,
    bid_size: u64,
    ask: i64,
    ask_size: u64,
}

#[derive(Debug, Clone, Copy)]
struct TradeGroup {
    first_ns: i64,
    last_ns: i64,
    side: i8,
    volume: u64,
    blind: bool,
}

fn to_ticks(price: f64, tick_size: f64) -> Result<i64> {
    let t = price / tick_size;
    let r = t.round();
    if (t - r).abs() > 1e-6 {
        return Err(Error::NonHalfTickGap { price, tick_size });
    }
    Ok(r as i64)
}

struct Classifier<'a> {
    cfg: &'a IngestConfig,
    events: Vec<MarketEvent>,
    report: IngestReport,
    date: Option<i64>,
    counts: IngestCounts,
    segment: u32,
    segment_used: bool,
    book: Option<Book>,
    crossed: bool,
    pending: Option<TradeGroup>,
}

impl<'a> Classifier<'a> {
    fn local_date_and_minute(&self, ts: i64) -> (i64, i64) {
        let local = ts + self.cfg.utc_offset_minutes as i64 * MINUTE_NS;
        (local.div_euclid(DAY_NS), local.rem_euclid(DAY_NS) / MINUTE_NS)
    }

    fn in_session(&self, minute: i64) -> bool {
        minute >= self.cfg.session_open_minutes as i64 && minute < self.cfg.session_close_minutes as i64
    }

    fn close_date(&mut self) {
        self.drop_pending();
        if let Some(d) = self.date.take() {
            self.report.per_day.push((d, std::mem::take(&mut self.counts)));
        }
        self.new_segment();
        self.book = None;
        self.crossed = false;
    }

    fn enter_date(&mut self, date: i64) {
        if self.date != Some(date) {
            self.close_date();
            self.date = Some(date);
        }
    }

    fn new_segment(&mut self) {
        if self.segment_used {
            self.segment += 1;
            self.segment_used = false;
        }
    }

    fn drop_pending(&mut self) {
        if let Some(g) = self.pending.take() {
            if g.blind {
                self.counts.crossed_trades += 1;
            } else {
                self.counts.unmatched_trades += 1;
            }
        }
    }

    fn trade(&mut self, t: &TradeRecord) {
        self.counts.trade_records += 1;
        let blind = self.crossed || self.book.is_none();
        let side = match (t.aggressor_side, self.book) {
            (Some(s), _) => s,
            (None, Some(b)) => {
                let p = t.price / self.cfg.tick_size;
                if p >= b.ask as f64 {
                    1
                } else if p <= b.bid as f64 {
                    -1
                } else {
                    let mid2 = (b.bid + b.ask) as f64;
                    if 2.0 * p > mid2 {
                        1
                    } else if 2.0 * p < mid2 {
                        -1
                    } else {
                        0
                    }
                }
            }
            (None, None) => 0,
        };
        if let Some(g) = self.pending.as_mut() {
            if g.side == side && side != 0 && t.timestamp_ns - g.first_ns <= self.cfg.aggregation_ns {
                g.last_ns = t.timestamp_ns;
                g.volume += t.size;
                g.blind |= blind;
                return;
            }
        }
        self.drop_pending();
        self.counts.trade_groups += 1;
        self.pending = Some(TradeGroup {
            first_ns: t.timestamp_ns,
            last_ns: t.timestamp_ns,
            side,
            volume: t.size,
            blind: blind || side == 0,
        });
    }

    fn quote(&mut self, r: &BboRecord) -> Result<()> {
        self.counts.bbo_records += 1;
        if let Some(g) = self.pending {
            if r.timestamp_ns > g.last_ns + self.cfg.match_tolerance_ns {
                self.drop_pending();
            }
        }
        if r.bid_size == 0 || r.ask_size == 0 || r.bid_price >= r.ask_price {
            self.counts.crossed_records += 1;
            self.crossed = true;
            return Ok(());
        }
        let new = Book {
            bid: to_ticks(r.bid_price, self.cfg.tick_size)?,
            bid_size: r.bid_size,
            ask: to_ticks(r.ask_price, self.cfg.tick_size)?,
            ask_size: r.ask_size,
        };
        self.crossed = false;
        let Some(old) = self.book else {
            self.counts.opening_snapshots += 1;
            self.book = Some(new);
            return Ok(());
        };
        let bid_changed = (new.bid, new.bid_size) != (old.bid, old.bid_size);
        let ask_changed = (new.ask, new.ask_size) != (old.ask, old.ask_size);
        if !bid_changed && !ask_changed {
            self.counts.unchanged_records += 1;
            return Ok(());
        }
        let n_changes = bid_changed as u64 + ask_changed as u64;
        self.counts.quote_side_changes += n_changes;

        if new.bid >= old.ask || new.ask <= old.bid {
            self.counts.marketable_records += 1;
            self.counts.marketable_removed += n_changes;
            if let Some(g) = self.pending.take() {
                if g.blind {
                    self.counts.crossed_trades += 1;
                } else {
                    self.counts.marketable_removed += 1;
                }
            }
            self.book = Some(new);
            self.new_segment();
            return Ok(());
        }

        // A pending group is confirmed by its own side of the book shrinking
        // at the same price or moving away.
        let mut mo_side = 0i8;
        if let Some(g) = self.pending {
            if !g.blind {
                let hit = if g.side > 0 {
                    new.ask > old.ask || (new.ask == old.ask && new.ask_size < old.ask_size)
                } else {
                    new.bid < old.bid || (new.bid == old.bid && new.bid_size < old.bid_size)
                };
                if hit {
                    mo_side = g.side;
                }
            }
        }

        let mut cur = old;
        let ts = r.timestamp_ns;
        if bid_changed {
            let ev = if mo_side < 0 {
                let g = self.pending.take().unwrap();
                self.counts.absorbed_quote_changes += 1;
                market_order(-1, cur.bid - new.bid, g.volume)
            } else {
                quote_event(-1, cur.bid, cur.bid_size, new.bid, new.bid_size)
            };
            self.emit(ev, &cur, ts);
            cur.bid = new.bid;
            cur.bid_size = new.bid_size;
        }
        if ask_changed {
            let ev = if mo_side > 0 {
                let g = self.pending.take().unwrap();
                self.counts.absorbed_quote_changes += 1;
                market_order(1, new.ask - cur.ask, g.volume)
            } else {
                quote_event(1, cur.ask, cur.ask_size, new.ask, new.ask_size)
            };
            self.emit(ev, &cur, ts);
        }
        self.book = Some(new);
        Ok(())
    }

    fn emit(&mut self, (t, sign, gap, volume): (EventType, i8, i64, Option<u64>), cur: &Book, ts: i64) {
        self.counts.events += 1;
        self.segment_used = true;
        self.events.push(MarketEvent {
            timestamp_ns: ts,
            day: self.segment,
            event_type: t,
            sign,
            gap_half: gap,
            mid_before_half: cur.bid + cur.ask,
            spread_before_half: 2 * (cur.ask - cur.bid),
            volume,
        });
    }
}

type Classified = (EventType, i8, i64, Option<u64>);

fn market_order(sign: i8, moved: i64, volume: u64) -> Classified {
    if moved > 0 {
        (EventType::MOp, sign, moved, Some(volume))
    } else {
        (EventType::MO0, sign, 0, Some(volume))
    }
}

/// `side` is -1 for the bid and +1 for the ask. Improvement means a higher
/// bid or a lower ask.
fn quote_event(side: i8, old_p: i64, old_q: u64, new_p: i64, new_q: u64) -> Classified {
    let improvement = (new_p - old_p) * -(side as i64);
    if improvement > 0 {
        (EventType::LOp, -side, improvement, Some(new_q))
    } else if improvement < 0 {
        (EventType::CAp, side, -improvement, None)
    } else if new_q > old_q {
        (EventType::LO0, -side, 0, Some(new_q - old_q))
    } else {
        (EventType::CA0, side, 0, Some(old_q - new_q))
    }
}

/// Classifies raw best quotes and trades into events. See
/// [`classify_with_report`] for the discard counters.
pub fn classify(bbo: &[BboRecord], trades: &[TradeRecord], config: &IngestConfig) -> Result<EventStream> {
    Ok(classify_with_report(bbo, trades, config)?.0)
}

pub fn classify_with_report(
    bbo: &[BboRecord],
    trades: &[TradeRecord],
    config: &IngestConfig,
) -> Result<(EventStream, IngestReport)> {
    if !(config.tick_size > 0.0) {
        return Err(Error::ConfigInvalid(format!("tick_size must be positive, got {}", config.tick_size)));
    }
    let mut c = Classifier {
        cfg: config,
        events: Vec::new(),
        report: IngestReport::default(),
        date: None,
        counts: IngestCounts::default(),
        segment: 0,
        segment_used: false,
        book: None,
        crossed: false,
        pending: None,
    };
    let (mut i, mut j) = (0, 0);
    while i < bbo.len() || j < trades.len() {
        let take_trade = j < trades.len() && (i >= bbo.len() || trades[j].timestamp_ns <= bbo[i].timestamp_ns);
        let ts = if take_trade { trades[j].timestamp_ns } else { bbo[i].timestamp_ns };
        let (date, minute) = c.local_date_and_minute(ts);
        if !c.in_session(minute) {
            if take_trade {
                c.report.out_of_session_trades += 1;
                j += 1;
            } else {
                c.report.out_of_session_bbo += 1;
                i += 1;
            }
            continue;
        }
        c.enter_date(date);
        if take_trade {
            c.trade(&trades[j]);
            j += 1;
        } else {
            c.quote(&bbo[i])?;
            i += 1;
        }
    }
    c.close_date();
    let stream = EventStream::new(config.symbol.clone(), config.tick_size, c.events)?;
    Ok((stream, c.report))
}

fn csv_schema_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::SchemaError { line, detail: e.to_string() }
}

fn read_records<T: for<'de> Deserialize<'de>>(reader: impl Read) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(csv_schema_error)).collect()
}

/// Reads `timestamp_ns,bid_price,bid_size,ask_price,ask_size`.
pub fn read_bbo_csv(path: impl AsRef<Path>) -> Result<Vec<BboRecord>> {
    read_records(BufReader::new(File::open(path)?))
}

/// Reads `timestamp_ns,price,size,aggressor_side`; the side may be empty.
pub fn read_trades_csv(path: impl AsRef<Path>) -> Result<Vec<TradeRecord>> {
    read_records(BufReader::new(File::open(path)?))
}

pub const EVENT_CSV_HEADER: &str =
    "timestamp_ns,day,type,sign,gap_halfticks,mid_before_halfticks,spread_before_halfticks,volume";

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    timestamp_ns: i64,
    day: u32,
    #[serde(rename = "type")]
    event_type: String,
    sign: i8,
    gap_halfticks: i64,
    mid_before_halfticks: i64,
    spread_before_halfticks: i64,
    volume: Option<u64>,
}

pub fn write_events(stream: &EventStream, writer: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(EVENT_CSV_HEADER.split(','))?;
    for e in &stream.events {
        w.serialize(EventRow {
            timestamp_ns: e.timestamp_ns,
            day: e.day,
            event_type: e.event_type.code().to_string(),
            sign: e.sign,
            gap_halfticks: e.gap_half,
            mid_before_halfticks: e.mid_before_half,
            spread_before_halfticks: e.spread_before_half,
            volume: e.volume,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_event_csv(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    write_events(stream, BufWriter::new(File::create(path)?))
}

/// Parses an event CSV. The header must match [`EVENT_CSV_HEADER`].
pub fn read_events(reader: impl Read, symbol: &str, tick_size: f64) -> Result<EventStream> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_schema_error)?.clone();
    let expected: Vec<&str> = EVENT_CSV_HEADER.split(',').collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::SchemaError {
            line: 1,
            detail: format!("expected header `{EVENT_CSV_HEADER}`"),
        });
    }
    let mut events = Vec::new();
    for row in rdr.deserialize::<EventRow>() {
        let row = row.map_err(csv_schema_error)?;
        let line = events.len() as u64 + 2;
        let event_type = EventType::from_code(&row.event_type).ok_or_else(|| Error::SchemaError {
            line,
            detail: format!("unknown event type `{}`", row.event_type),
        })?;
        let ev = MarketEvent {
            timestamp_ns: row.timestamp_ns,
            day: row.day,
            event_type,
            sign: row.sign,
            gap_half: row.gap_halfticks,
            mid_before_half: row.mid_before_halfticks,
            spread_before_half: row.spread_before_halfticks,
            volume: row.volume,
        };
        ev.validate().map_err(|detail| Error::InvariantViolation {
            location: format!("line {line}"),
            detail,
        })?;
        events.push(ev);
    }
    EventStream::new(symbol, tick_size, events)
}

/// Loads an event CSV, taking the symbol from the file stem and a tick size
/// of 0.01.
pub fn load_event_csv(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    let symbol = path.file_stem().and_then(|s| s.to_str()).unwrap_or("UNKNOWN").to_string();
    load_event_csv_with(path, &symbol, 0.01)
}

pub fn load_event_csv_with(path: impl AsRef<Path>, symbol: &str, tick_size: f64) -> Result<EventStream> {
    read_events(BufReader::new(File::open(path)?), symbol, tick_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::reconstruct_mid_half;

    // 10:00 local with the default UTC-5 offset.
    const T0: i64 = 18_519 * DAY_NS + (15 * 60) * MINUTE_NS;

    fn q(dt_us: i64, bid: f64, bs: u64, ask: f64, a_s: u64) -> BboRecord {
        BboRecord { timestamp_ns: T0 + dt_us * 1000, bid_price: bid, bid_size: bs, ask_price: ask, ask_size: a_s }
    }

    fn tr(dt_us: i64, price: f64, size: u64, side: i8) -> TradeRecord {
        TradeRecord { timestamp_ns: T0 + dt_us * 1000, price, size, aggressor_side: Some(side) }
    }

    fn run(bbo: &[BboRecord], trades: &[TradeRecord]) -> (EventStream, IngestReport) {
        let (s, r) = classify_with_report(bbo, trades, &IngestConfig::default()).unwrap();
        assert!(r.balanced(), "{r:?}");
        (s, r)
    }

    #[test]
    fn buy_clearing_the_ask_is_mop() {
        let bbo = [q(0, 10.00, 5, 10.01, 3), q(100, 10.00, 5, 10.03, 7)];
        let (s, r) = run(&bbo, &[tr(50, 10.01, 3, 1)]);
        assert_eq!(s.len(), 1);
        let e = s.events[0];
        assert_eq!((e.event_type, e.sign, e.gap_ticks()), (EventType::MOp, 1, 1.0));
        assert_eq!(r.total().absorbed_quote_changes, 1);
    }

    #[test]
    fn bid_improvement_is_lop() {
        let (s, _) = run(&[q(0, 10.00, 5, 10.03, 3), q(10, 10.01, 2, 10.03, 3)], &[]);
        let e = s.events[0];
        assert_eq!((e.event_type, e.sign, e.side(), e.gap_ticks()), (EventType::LOp, 1, -1, 0.5));
    }

    #[test]
    fn close_trades_aggregate_into_one_mo0() {
        let bbo = [q(0, 10.00, 5, 10.01, 10), q(900, 10.00, 5, 10.01, 4)];
        let trades = [tr(100, 10.01, 2, 1), tr(500, 10.01, 4, 1)];
        let (s, r) = run(&bbo, &trades);
        assert_eq!(s.len(), 1);
        assert_eq!(s.events[0].event_type, EventType::MO0);
        assert_eq!(s.events[0].volume, Some(6));
        assert_eq!(r.total().trade_groups, 1);
    }

    #[test]
    fn quote_only_changes() {
        let bbo = [
            q(0, 10.00, 5, 10.04, 5),
            q(1, 10.00, 8, 10.04, 5),
            q(2, 10.00, 8, 10.04, 2),
            q(3, 9.99, 1, 10.04, 2),
            q(4, 9.99, 1, 10.05, 2),
        ];
        let (s, _) = run(&bbo, &[]);
        let got: Vec<_> = s.events.iter().map(|e| (e.event_type, e.sign, e.gap_half)).collect();
        assert_eq!(
            got,
            vec![(EventType::LO0, 1, 0), (EventType::CA0, 1, 0), (EventType::CAp, -1, 1), (EventType::CAp, 1, 1)]
        );
    }

    #[test]
    fn two_sided_record_emits_bid_first() {
        let (s, _) = run(&[q(0, 10.00, 5, 10.04, 5), q(1, 10.01, 5, 10.03, 5)], &[]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.events[0].sign, 1);
        assert_eq!(s.events[1].mid_before_half, s.events[0].mid_after_half());
        assert_eq!(s.events[1].timestamp_ns, s.events[0].timestamp_ns);
    }

    #[test]
    fn crossed_and_marketable_are_counted() {
        let bbo = [
            q(0, 10.00, 5, 10.02, 5),
            q(1, 10.02, 5, 10.02, 5),
            q(2, 10.02, 1, 10.04, 5),
            q(3, 10.03, 1, 10.04, 5),
        ];
        let (s, r) = run(&bbo, &[]);
        let t = r.total();
        assert_eq!(t.crossed_records, 1);
        assert_eq!(t.marketable_records, 1);
        assert_eq!(s.len(), 1);
        assert_eq!(s.events[0].day, 0);
    }

    #[test]
    fn unmatched_trade_is_discarded() {
        let bbo = [q(0, 10.00, 5, 10.01, 3), q(10_000, 10.00, 5, 10.02, 3)];
        let (s, r) = run(&bbo, &[tr(5, 10.01, 1, 1)]);
        assert_eq!(r.total().unmatched_trades, 1);
        assert_eq!(s.events[0].event_type, EventType::CAp);
    }

    #[test]
    fn off_grid_price_is_rejected() {
        let err = classify(&[q(0, 10.005, 5, 10.01, 3)], &[], &IngestConfig::default()).unwrap_err();
        assert_eq!(err.kind(), "NonHalfTickGap");
    }

    #[test]
    fn mid_path_matches_raw_quotes() {
        let bbo = [
            q(0, 10.00, 5, 10.04, 5),
            q(1, 10.01, 5, 10.04, 5),
            q(2, 10.01, 5, 10.03, 5),
            q(3, 10.00, 5, 10.05, 5),
        ];
        let (s, _) = run(&bbo, &[]);
        let mids = reconstruct_mid_half(&s).unwrap();
        assert_eq!(*mids.last().unwrap(), 1000 + 1005);
        assert_eq!(mids[2], 1001 + 1003);
    }

    #[test]
    fn out_of_session_records_are_skipped() {
        let mut early = q(0, 10.00, 5, 10.01, 3);
        early.timestamp_ns -= 2 * 60 * MINUTE_NS;
        let (s, r) = run(&[early, q(0, 10.00, 5, 10.02, 3)], &[]);
        assert_eq!(r.out_of_session_bbo, 1);
        assert!(s.is_empty());
    }

    #[test]
    fn event_csv_errors() {
        let empty = read_events(EVENT_CSV_HEADER.as_bytes(), "X", 0.01).unwrap();
        assert!(empty.is_empty());
        let bad = format!("{EVENT_CSV_HEADER}\n1,0,MO0,1,2,100,2,\n");
        let err = read_events(bad.as_bytes(), "X", 0.01).unwrap_err();
        assert_eq!(err.kind(), "InvariantViolation");
        assert!(err.to_string().contains("line 2"));
        let junk = format!("{EVENT_CSV_HEADER}\n1,0,MO0,x,0,100,2,\n");
        match read_events(junk.as_bytes(), "X", 0.01).unwrap_err() {
            Error::SchemaError { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }
}
