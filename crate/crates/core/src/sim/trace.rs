//! Channel trace CSV: `t_s,snr_db,packet_lost,adr_sf,adr_ptx_dbm`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::link::LoRaParams;

use super::{Result, SimError};

pub const TRACE_HEADER: [&str; 5] = ["t_s", "snr_db", "packet_lost", "adr_sf", "adr_ptx_dbm"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelTraceRow {
    pub t_s: f64,
    pub snr_db: f64,
    #[serde(serialize_with = "bool_as_digit", deserialize_with = "lenient_bool")]
    pub packet_lost: bool,
    pub adr_sf: u8,
    pub adr_ptx_dbm: i8,
}

impl ChannelTraceRow {
    pub fn params(&self) -> LoRaParams {
        LoRaParams::new(self.adr_sf, self.adr_ptx_dbm).expect("validated on load")
    }
}

fn bool_as_digit<S: Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

fn lenient_bool<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let raw = String::deserialize(d)?;
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(serde::de::Error::custom(format!("not a boolean: {other:?}"))),
    }
}

/// Parses and validates a trace. Errors name the 1-based file line.
pub fn load_trace(text: &str) -> Result<Vec<ChannelTraceRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| SimError::Trace {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.iter().ne(TRACE_HEADER) {
        return Err(SimError::Trace {
            line: 1,
            reason: format!("header must be `{}`", TRACE_HEADER.join(",")),
        });
    }
    let mut rows: Vec<ChannelTraceRow> = Vec::new();
    for record in reader.deserialize::<ChannelTraceRow>() {
        let row = record.map_err(|e| SimError::Trace {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = rows.len() + 2;
        let bad = |reason: String| SimError::Trace { line, reason };
        if !row.t_s.is_finite() || !row.snr_db.is_finite() {
            return Err(bad("non-finite value".into()));
        }
        LoRaParams::new(row.adr_sf, row.adr_ptx_dbm).map_err(|e| bad(e.to_string()))?;
        if let Some(prev) = rows.last() {
            if row.t_s <= prev.t_s {
                return Err(bad(format!("t_s {} not after {}", row.t_s, prev.t_s)));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_trace(rows: &[ChannelTraceRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(TRACE_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
