//! CSV traces: one row per control tick.

use std::io::{Read, Write};

use super::script::HandScript;
use super::{Session, Snapshot};
use crate::error::{Error, Result};
use crate::shape::FIN_COUNT;

pub const TRACE_HEADER: [&str; 17] = [
    "t_s",
    "theta_deg",
    "omega_dps",
    "torque_cmd_ncm",
    "duty",
    "direction",
    "mode",
    "preset",
    "pulley_a_deg",
    "pulley_b_deg",
    "fin0_mm",
    "fin1_mm",
    "fin2_mm",
    "fin3_mm",
    "fin4_mm",
    "fin5_mm",
    "hand_torque_ncm",
];

pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    rows: u64,
}

impl<W: Write> TraceWriter<W> {
    /// Writes the header immediately, so an empty trace is still valid.
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
        inner.write_record(TRACE_HEADER)?;
        Ok(Self { inner, rows: 0 })
    }

    pub fn write(&mut self, s: &Snapshot) -> Result<()> {
        // `Display` for f64 is the shortest exact round-trip form.
        let mut record: Vec<String> = vec![
            s.t.to_string(),
            s.theta_deg.to_string(),
            s.omega_dps.to_string(),
            s.torque_cmd_ncm.to_string(),
            s.duty.to_string(),
            s.direction.as_str().to_string(),
            s.mode.to_string(),
            s.preset.name().to_string(),
            s.pulley_a_deg.to_string(),
            s.pulley_b_deg.to_string(),
        ];
        record.extend(s.fins_mm.iter().map(f64::to_string));
        record.push(s.hand_torque_ncm.to_string());
        self.inner.write_record(&record)?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, index: usize, row: u64) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = &record[index];
    raw.parse().map_err(|e| Error::Trace {
        row,
        message: format!("column {} = `{raw}`: {e}", TRACE_HEADER[index]),
    })
}

/// Read a trace back into snapshots. Rows are numbered from 1 after the
/// header; the first bad row aborts the read.
pub fn read_trace<R: Read>(source: R) -> Result<Vec<Snapshot>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or(Error::Trace { row: 0, message: "missing header".into() })?
        .map_err(|e| Error::Trace { row: 0, message: e.to_string() })?;
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Trace {
            row: 0,
            message: format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i as u64 + 1;
        let record = record.map_err(|e| Error::Trace { row, message: e.to_string() })?;
        if record.len() != TRACE_HEADER.len() {
            return Err(Error::Trace {
                row,
                message: format!("expected {} fields, found {}", TRACE_HEADER.len(), record.len()),
            });
        }
        let mut fins_mm = [0.0; FIN_COUNT];
        for (k, fin) in fins_mm.iter_mut().enumerate() {
            *fin = field(&record, 10 + k, row)?;
        }
        out.push(Snapshot {
            t: field(&record, 0, row)?,
            theta_deg: field(&record, 1, row)?,
            omega_dps: field(&record, 2, row)?,
            torque_cmd_ncm: field(&record, 3, row)?,
            duty: field(&record, 4, row)?,
            direction: field(&record, 5, row)?,
            mode: field(&record, 6, row)?,
            preset: field(&record, 7, row)?,
            pulley_a_deg: field(&record, 8, row)?,
            pulley_b_deg: field(&record, 9, row)?,
            fins_mm,
            hand_torque_ncm: field(&record, 16, row)?,
        });
    }
    Ok(out)
}

/// Re-emit a recorded trace without re-simulating it.
pub fn replay_trace<R: Read>(source: R) -> Result<Vec<Snapshot>> {
    read_trace(source)
}

/// Drive a session with a hand script for `ticks` control periods, handing
/// every snapshot to `observe`.
pub fn run_script(
    session: &mut Session,
    script: &HandScript,
    ticks: u64,
    mut observe: impl FnMut(&Snapshot) -> Result<()>,
) -> Result<()> {
    for _ in 0..ticks {
        let hand = script.hand_at(session.time());
        let snapshot = session.tick(&hand)?;
        observe(&snapshot)?;
    }
    Ok(())
}

/// Run a scripted session and write every tick to `sink` as CSV.
pub fn record_trace<W: Write>(session: &mut Session, script: &HandScript, ticks: u64, sink: W) -> Result<W> {
    let mut writer = TraceWriter::new(sink)?;
    run_script(session, script, ticks, |s| writer.write(s))?;
    writer.finish()
}
