//! Event taxonomy, sign conventions and the exact mid/spread identities.
//!
//! Prices live in integer half-ticks internally. A mid-price of `m` half-ticks
//! is `m / 2` ticks, and a gap of `g` half-ticks moves the mid by `g / 2` ticks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of event types.
pub const N_TYPES: usize = 6;

/// The six best-quote event types. Variant order fixes the array index used
/// throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    MO0,
    MOp,
    CA0,
    LO0,
    CAp,
    LOp,
}

impl EventType {
    pub const ALL: [EventType; N_TYPES] = [
        EventType::MO0,
        EventType::MOp,
        EventType::CA0,
        EventType::LO0,
        EventType::CAp,
        EventType::LOp,
    ];

    /// The price-changing types in the order used by gap statistics.
    pub const PRICE_CHANGING: [EventType; 3] = [EventType::MOp, EventType::CAp, EventType::LOp];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<EventType> {
        Self::ALL.get(i).copied()
    }

    pub fn is_price_changing(self) -> bool {
        matches!(self, EventType::MOp | EventType::CAp | EventType::LOp)
    }

    pub fn is_limit_order(self) -> bool {
        matches!(self, EventType::LO0 | EventType::LOp)
    }

    /// Signed spread response to a unit gap: +2 for MOp/CAp, -2 for LOp, 0 otherwise.
    pub fn spread_factor(self) -> i64 {
        match self {
            EventType::MOp | EventType::CAp => 2,
            EventType::LOp => -2,
            _ => 0,
        }
    }

    /// Upper-case code used in files and JSON keys.
    pub fn code(self) -> &'static str {
        match self {
            EventType::MO0 => "MO0",
            EventType::MOp => "MOP",
            EventType::CA0 => "CA0",
            EventType::LO0 => "LO0",
            EventType::CAp => "CAP",
            EventType::LOp => "LOP",
        }
    }

    pub fn from_code(code: &str) -> Option<EventType> {
        match code {
            "MO0" => Some(EventType::MO0),
            "MOP" => Some(EventType::MOp),
            "CA0" => Some(EventType::CA0),
            "LO0" => Some(EventType::LO0),
            "CAP" => Some(EventType::CAp),
            "LOP" => Some(EventType::LOp),
            _ => None,
        }
    }
}

impl std::fmt::Display for EventType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Side of an event: the sign for market orders and cancellations, its
/// opposite for limit orders.
pub fn derive_side(event_type: EventType, sign: i8) -> i8 {
    if event_type.is_limit_order() {
        -sign
    } else {
        sign
    }
}

/// One classified best-quote event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketEvent {
    pub timestamp_ns: i64,
    pub day: u32,
    pub event_type: EventType,
    pub sign: i8,
    /// Mid-price jump in half-ticks (non-negative).
    pub gap_half: i64,
    pub mid_before_half: i64,
    pub spread_before_half: i64,
    pub volume: Option<u64>,
}

impl MarketEvent {
    pub fn side(&self) -> i8 {
        derive_side(self.event_type, self.sign)
    }

    pub fn gap_ticks(&self) -> f64 {
        self.gap_half as f64 / 2.0
    }

    /// Signed mid change in half-ticks.
    pub fn mid_change_half(&self) -> i64 {
        self.sign as i64 * self.gap_half
    }

    /// Spread change in half-ticks.
    pub fn spread_change_half(&self) -> i64 {
        self.event_type.spread_factor() * self.gap_half
    }

    pub fn mid_after_half(&self) -> i64 {
        self.mid_before_half + self.mid_change_half()
    }

    pub fn spread_after_half(&self) -> i64 {
        self.spread_before_half + self.spread_change_half()
    }

    pub fn mid_before(&self) -> f64 {
        self.mid_before_half as f64 / 2.0
    }

    pub fn mid_after(&self) -> f64 {
        self.mid_after_half() as f64 / 2.0
    }

    pub fn spread_before(&self) -> f64 {
        self.spread_before_half as f64 / 2.0
    }

    pub fn spread_after(&self) -> f64 {
        self.spread_after_half() as f64 / 2.0
    }

    /// Checks the single-event invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.sign != 1 && self.sign != -1 {
            return Err(format!("sign must be +1 or -1, got {}", self.sign));
        }
        if self.gap_half < 0 {
            return Err(format!("gap must be non-negative, got {}", self.gap_half));
        }
        let pc = self.event_type.is_price_changing();
        if pc && self.gap_half == 0 {
            return Err(format!("{} requires a positive gap", self.event_type));
        }
        if !pc && self.gap_half != 0 {
            return Err(format!("{} must have zero gap, got {} half-ticks", self.event_type, self.gap_half));
        }
        Ok(())
    }
}

/// Ordered per-symbol event sequence. Event time is the index into `events`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub symbol: String,
    pub tick_size: f64,
    pub events: Vec<MarketEvent>,
    /// Start index of every day, ascending, beginning with 0 when non-empty.
    pub day_boundaries: Vec<usize>,
    /// Minutes dropped at the start and end of each day by [`EventStream::trimmed`].
    pub session_trim: (u32, u32),
}

impl EventStream {
    /// Builds a stream, computing day boundaries and validating every invariant.
    pub fn new(symbol: impl Into<String>, tick_size: f64, events: Vec<MarketEvent>) -> Result<Self> {
        let day_boundaries = compute_day_boundaries(&events);
        let stream = EventStream {
            symbol: symbol.into(),
            tick_size,
            events,
            day_boundaries,
            session_trim: (0, 0),
        };
        stream.validate()?;
        Ok(stream)
    }

    pub fn empty(symbol: impl Into<String>, tick_size: f64) -> Self {
        EventStream {
            symbol: symbol.into(),
            tick_size,
            events: Vec::new(),
            day_boundaries: Vec::new(),
            session_trim: (0, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Half-open index ranges, one per day.
    pub fn day_ranges(&self) -> Vec<(usize, usize)> {
        let n = self.events.len();
        let mut out = Vec::with_capacity(self.day_boundaries.len());
        for (k, &start) in self.day_boundaries.iter().enumerate() {
            let end = self.day_boundaries.get(k + 1).copied().unwrap_or(n);
            out.push((start, end));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tick_size > 0.0) {
            return Err(Error::InvariantViolation {
                location: "stream".into(),
                detail: format!("tick size must be positive, got {}", self.tick_size),
            });
        }
        if self.day_boundaries != compute_day_boundaries(&self.events) {
            return Err(Error::InvariantViolation {
                location: "stream".into(),
                detail: "day boundaries do not match day indices".into(),
            });
        }
        for (i, ev) in self.events.iter().enumerate() {
            ev.validate().map_err(|detail| Error::InvariantViolation {
                location: format!("event {i}"),
                detail,
            })?;
            if i == 0 {
                continue;
            }
            let prev = &self.events[i - 1];
            if ev.day < prev.day {
                return Err(Error::InvariantViolation {
                    location: format!("event {i}"),
                    detail: format!("day index decreases from {} to {}", prev.day, ev.day),
                });
            }
            if ev.day == prev.day {
                if ev.timestamp_ns < prev.timestamp_ns {
                    return Err(Error::InvariantViolation {
                        location: format!("event {i}"),
                        detail: "timestamp decreases within a day".into(),
                    });
                }
                check_link(prev, ev, i)?;
            }
        }
        Ok(())
    }

    /// Type and sign per event, the form consumed by the estimators.
    pub fn type_indices(&self) -> Vec<u8> {
        self.events.iter().map(|e| e.event_type.index() as u8).collect()
    }

    pub fn signs(&self) -> Vec<i8> {
        self.events.iter().map(|e| e.sign).collect()
    }

    /// Session trim by wall clock. The window for each calendar date (UTC,
    /// from the timestamps) runs from its first event plus `start_minutes` to
    /// its last event minus `end_minutes`. Segments sharing a date share the
    /// window, and kept events stay contiguous so the price chain survives.
    pub fn trimmed(&self, start_minutes: u32, end_minutes: u32) -> EventStream {
        const DAY_NS: i64 = 86_400_000_000_000;
        let start_ns = start_minutes as i64 * 60_000_000_000;
        let end_ns = end_minutes as i64 * 60_000_000_000;
        let mut window: std::collections::BTreeMap<i64, (i64, i64)> = Default::default();
        for e in &self.events {
            let w = window.entry(e.timestamp_ns.div_euclid(DAY_NS)).or_insert((i64::MAX, i64::MIN));
            w.0 = w.0.min(e.timestamp_ns);
            w.1 = w.1.max(e.timestamp_ns);
        }
        let kept: Vec<MarketEvent> = self
            .events
            .iter()
            .filter(|e| {
                let (first, last) = window[&e.timestamp_ns.div_euclid(DAY_NS)];
                e.timestamp_ns >= first + start_ns && e.timestamp_ns <= last - end_ns
            })
            .copied()
            .collect();
        let day_boundaries = compute_day_boundaries(&kept);
        EventStream {
            symbol: self.symbol.clone(),
            tick_size: self.tick_size,
            events: kept,
            day_boundaries,
            session_trim: (start_minutes, end_minutes),
        }
    }

    /// Sub-stream of whole days `[first_day, last_day)` counted by position.
    pub fn days(&self, first: usize, last: usize) -> EventStream {
        let ranges = self.day_ranges();
        let last = last.min(ranges.len());
        let events = if first >= last {
            Vec::new()
        } else {
            self.events[ranges[first].0..ranges[last - 1].1].to_vec()
        };
        let day_boundaries = compute_day_boundaries(&events);
        EventStream {
            symbol: self.symbol.clone(),
            tick_size: self.tick_size,
            events,
            day_boundaries,
            session_trim: self.session_trim,
        }
    }

    /// Empirical type frequencies.
    pub fn probabilities(&self) -> [f64; N_TYPES] {
        let mut counts = [0u64; N_TYPES];
        for e in &self.events {
            counts[e.event_type.index()] += 1;
        }
        let n = self.events.len().max(1) as f64;
        counts.map(|c| c as f64 / n)
    }
}

fn check_link(prev: &MarketEvent, ev: &MarketEvent, i: usize) -> Result<()> {
    if ev.mid_before_half != prev.mid_after_half() {
        return Err(Error::BrokenChain {
            index: i,
            detail: format!(
                "mid_before {} half-ticks but previous mid_after {}",
                ev.mid_before_half,
                prev.mid_after_half()
            ),
        });
    }
    if ev.spread_before_half != prev.spread_after_half() {
        return Err(Error::BrokenChain {
            index: i,
            detail: format!(
                "spread_before {} half-ticks but previous spread_after {}",
                ev.spread_before_half,
                prev.spread_after_half()
            ),
        });
    }
    Ok(())
}

pub(crate) fn compute_day_boundaries(events: &[MarketEvent]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if i == 0 || e.day != events[i - 1].day {
            out.push(i);
        }
    }
    out
}

/// Mid-price path in half-ticks: entry 0 is the first mid_before and entry
/// `t + 1` is the mid after event `t`, accumulated from gaps and re-anchored
/// at each day start.
pub fn reconstruct_mid_half(stream: &EventStream) -> Result<Vec<i64>> {
    reconstruct(stream, |e| e.mid_before_half, |e| e.mid_change_half(), |e| e.mid_after_half())
}

pub fn reconstruct_spread_half(stream: &EventStream) -> Result<Vec<i64>> {
    reconstruct(
        stream,
        |e| e.spread_before_half,
        |e| e.spread_change_half(),
        |e| e.spread_after_half(),
    )
}

/// Mid-price path in ticks; see [`reconstruct_mid_half`].
pub fn reconstruct_mid(stream: &EventStream) -> Result<Vec<f64>> {
    Ok(reconstruct_mid_half(stream)?.into_iter().map(|m| m as f64 / 2.0).collect())
}

pub fn reconstruct_spread(stream: &EventStream) -> Result<Vec<f64>> {
    Ok(reconstruct_spread_half(stream)?.into_iter().map(|s| s as f64 / 2.0).collect())
}

fn reconstruct(
    stream: &EventStream,
    before: impl Fn(&MarketEvent) -> i64,
    change: impl Fn(&MarketEvent) -> i64,
    after: impl Fn(&MarketEvent) -> i64,
) -> Result<Vec<i64>> {
    let ev = &stream.events;
    let mut path = Vec::with_capacity(ev.len() + 1);
    if ev.is_empty() {
        return Ok(path);
    }
    path.push(before(&ev[0]));
    for i in 0..ev.len() {
        let day_start = i == 0 || ev[i].day != ev[i - 1].day;
        let start = if day_start {
            before(&ev[i])
        } else {
            let current = path[i];
            if before(&ev[i]) != current {
                return Err(Error::BrokenChain {
                    index: i,
                    detail: format!("recorded {} half-ticks, reconstructed {}", before(&ev[i]), current),
                });
            }
            current
        };
        path.push(start + change(&ev[i]));
    }
    let last = ev.last().unwrap();
    debug_assert_eq!(*path.last().unwrap(), after(last));
    Ok(path)
}

/// Cumulative mid increments in half-ticks with `cum[0] = 0` and
/// `cum[t + 1] - cum[t] = sign_t * gap_t`. Same-day price changes are
/// differences of this array.
pub fn cumulative_mid_half(stream: &EventStream) -> Vec<i64> {
    let mut cum = Vec::with_capacity(stream.len() + 1);
    let mut acc = 0i64;
    cum.push(0);
    for e in &stream.events {
        acc += e.mid_change_half();
        cum.push(acc);
    }
    cum
}

pub fn cumulative_spread_half(stream: &EventStream) -> Vec<i64> {
    let mut cum = Vec::with_capacity(stream.len() + 1);
    let mut acc = 0i64;
    cum.push(0);
    for e in &stream.events {
        acc += e.spread_change_half();
        cum.push(acc);
    }
    cum
}
