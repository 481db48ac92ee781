//! Event-log, outcome and listing file formats.
//!
//! Events and outcomes are JSONL, one record per line. Listing attributes
//! are CSV with a header row. Parsing never stops at a bad line: each
//! failure is returned with its 1-based line number.

use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{BookingOutcome, EngagementSignals, InteractionEvent, ListingAttributes, TripContext};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub errors: Vec<LineError>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventLine {
    event_id: String,
    ts_ms: i64,
    user_id: String,
    listing_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    search_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arm: Option<String>,
    photos_viewed: u32,
    reviews_viewed: u32,
    amenities_viewed: u32,
    calendar_checked: u32,
    host_contacted: u32,
    reserve_clicked: u32,
    dwell_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    checkin: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    checkout: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_guests: Option<u32>,
}

impl From<EventLine> for InteractionEvent {
    fn from(l: EventLine) -> Self {
        InteractionEvent {
            event_id: l.event_id,
            timestamp_ms: l.ts_ms,
            user_id: l.user_id,
            listing_id: l.listing_id,
            search_id: l.search_id,
            assignment_key: l.arm,
            engagement: EngagementSignals {
                photos_viewed: l.photos_viewed,
                reviews_viewed: l.reviews_viewed,
                amenities_viewed: l.amenities_viewed,
                calendar_checked: l.calendar_checked,
                host_contacted: l.host_contacted,
                reserve_clicked: l.reserve_clicked,
                dwell_seconds: l.dwell_s,
            },
            trip: TripContext {
                checkin: l.checkin,
                checkout: l.checkout,
                num_guests: l.num_guests,
            },
        }
    }
}

impl From<&InteractionEvent> for EventLine {
    fn from(e: &InteractionEvent) -> Self {
        EventLine {
            event_id: e.event_id.clone(),
            ts_ms: e.timestamp_ms,
            user_id: e.user_id.clone(),
            listing_id: e.listing_id.clone(),
            search_id: e.search_id.clone(),
            arm: e.assignment_key.clone(),
            photos_viewed: e.engagement.photos_viewed,
            reviews_viewed: e.engagement.reviews_viewed,
            amenities_viewed: e.engagement.amenities_viewed,
            calendar_checked: e.engagement.calendar_checked,
            host_contacted: e.engagement.host_contacted,
            reserve_clicked: e.engagement.reserve_clicked,
            dwell_s: e.engagement.dwell_seconds,
            checkin: e.trip.checkin,
            checkout: e.trip.checkout,
            num_guests: e.trip.num_guests,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeLine {
    user_id: String,
    listing_id: String,
    ts_ms: i64,
    y: u8,
}

fn read_jsonl<R: BufRead, L, T>(
    reader: R,
    convert: impl Fn(L) -> Result<T, String>,
) -> std::io::Result<Parsed<T>>
where
    L: for<'de> Deserialize<'de>,
{
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<L>(&line)
            .map_err(|e| e.to_string())
            .and_then(&convert);
        match parsed {
            Ok(item) => items.push(item),
            Err(message) => errors.push(LineError {
                line: n + 1,
                message,
            }),
        }
    }
    Ok(Parsed { items, errors })
}

/// Parses an event log. Schema violations and invalid values are line errors.
pub fn read_events<R: BufRead>(reader: R) -> std::io::Result<Parsed<InteractionEvent>> {
    read_jsonl(reader, |l: EventLine| {
        let e = InteractionEvent::from(l);
        e.validate().map_err(|err| err.to_string())?;
        Ok(e)
    })
}

pub fn write_events<W: Write>(mut w: W, events: &[InteractionEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, &EventLine::from(e))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_outcomes<R: BufRead>(reader: R) -> std::io::Result<Parsed<BookingOutcome>> {
    read_jsonl(reader, |l: OutcomeLine| {
        if l.y > 1 {
            return Err(format!("y must be 0 or 1, got {}", l.y));
        }
        if l.ts_ms <= 0 {
            return Err(format!("ts_ms must be > 0, got {}", l.ts_ms));
        }
        Ok(BookingOutcome {
            user_id: l.user_id,
            listing_id: l.listing_id,
            timestamp_ms: l.ts_ms,
            booked: l.y == 1,
        })
    })
}

pub fn write_outcomes<W: Write>(mut w: W, outcomes: &[BookingOutcome]) -> std::io::Result<()> {
    for o in outcomes {
        let line = OutcomeLine {
            user_id: o.user_id.clone(),
            listing_id: o.listing_id.clone(),
            ts_ms: o.timestamp_ms,
            y: o.booked as u8,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses the listing CSV; row numbers in errors count the header as line 1.
pub fn read_listings<R: std::io::Read>(reader: R) -> Parsed<ListingAttributes> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for (n, rec) in rdr.deserialize::<ListingAttributes>().enumerate() {
        let line = n + 2;
        match rec {
            Ok(l) => match l.validate() {
                Ok(()) => items.push(l),
                Err(e) => errors.push(LineError {
                    line,
                    message: e.to_string(),
                }),
            },
            Err(e) => errors.push(LineError {
                line,
                message: e.to_string(),
            }),
        }
    }
    Parsed { items, errors }
}

pub fn write_listings<W: Write>(w: W, listings: &[ListingAttributes]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for l in listings {
        wtr.serialize(l)?;
    }
    wtr.flush()?;
    Ok(())
}
