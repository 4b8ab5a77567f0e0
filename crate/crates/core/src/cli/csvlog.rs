//! CSV trajectory log.
//!
//! Floats are written in Rust's shortest round-trip form, so re-reading a
//! file reproduces every logged number bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, Terminator, WriterBuilder};

use crate::controller::{SimulationLog, StepRecord};
use crate::error::{Error, Result};

/// The numeric content of one CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub time: f64,
    pub advanced: bool,
    pub state: Vec<f64>,
    pub control: Vec<f64>,
    pub horizon: usize,
    pub resolves: usize,
    pub solver_iters: usize,
    pub converged: bool,
    pub vf_terminal: f64,
    pub window_pass: bool,
    pub solve_seconds: f64,
}

impl From<&StepRecord> for LogRow {
    fn from(r: &StepRecord) -> Self {
        Self {
            step: r.step_index,
            time: r.time,
            advanced: r.advanced,
            state: r.state.iter().copied().collect(),
            control: r.control.iter().copied().collect(),
            horizon: r.horizon,
            resolves: r.resolves,
            solver_iters: r.solver_iters,
            converged: r.converged,
            vf_terminal: r.vf_terminal,
            window_pass: r.window_pass,
            solve_seconds: r.solve_seconds,
        }
    }
}

pub fn header(n: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["step", "time", "advanced"].map(String::from).into();
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=m).map(|i| format!("u{i}")));
    h.extend(
        [
            "N",
            "resolves",
            "solver_iters",
            "converged",
            "Vf_xN",
            "window_pass",
            "solve_seconds",
        ]
        .map(String::from),
    );
    h
}

fn bit(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn fields(row: &LogRow) -> Vec<String> {
    let mut f = vec![
        row.step.to_string(),
        format!("{:?}", row.time),
        bit(row.advanced),
    ];
    f.extend(row.state.iter().map(|v| format!("{v:?}")));
    f.extend(row.control.iter().map(|v| format!("{v:?}")));
    f.extend([
        row.horizon.to_string(),
        row.resolves.to_string(),
        row.solver_iters.to_string(),
        bit(row.converged),
        format!("{:?}", row.vf_terminal),
        bit(row.window_pass),
        format!("{:?}", row.solve_seconds),
    ]);
    f
}

/// Writes `log` as CSV to any sink.
pub fn write_csv_to<W: Write>(log: &SimulationLog, sink: W) -> std::result::Result<(), csv::Error> {
    let Some(first) = log.records.first() else {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty log").into());
    };
    let mut w = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(header(first.state.len(), first.control.len()))?;
    for r in &log.records {
        w.write_record(fields(&LogRow::from(r)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(log: &SimulationLog, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv_to(log, file).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn column_counts(header: &csv::StringRecord) -> Result<(usize, usize)> {
    let count = |prefix: char| {
        header
            .iter()
            .filter(|h| h.starts_with(prefix) && h[1..].parse::<usize>().is_ok())
            .count()
    };
    let (n, m) = (count('x'), count('u'));
    let expected = header_as_record(n, m);
    if *header != expected {
        return Err(Error::MalformedLog {
            row: 0,
            reason: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    Ok((n, m))
}

fn header_as_record(n: usize, m: usize) -> csv::StringRecord {
    csv::StringRecord::from(header(n, m))
}

fn parse_row(row: usize, rec: &csv::StringRecord, n: usize, m: usize) -> Result<LogRow> {
    let bad = |reason: String| Error::MalformedLog { row, reason };
    let mut it = rec.iter();
    let mut next = |name: &str| {
        it.next()
            .ok_or_else(|| bad(format!("missing column {name}")))
    };
    fn num<T: std::str::FromStr>(s: &str, name: &str, row: usize) -> Result<T> {
        s.parse().map_err(|_| Error::MalformedLog {
            row,
            reason: format!("column {name}: cannot parse `{s}`"),
        })
    }
    let flag = |s: &str, name: &str| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(bad(format!("column {name}: expected 0 or 1, got `{s}`"))),
    };

    let step = num(next("step")?, "step", row)?;
    let time = num(next("time")?, "time", row)?;
    let advanced = flag(next("advanced")?, "advanced")?;
    let mut state = Vec::with_capacity(n);
    for i in 1..=n {
        let name = format!("x{i}");
        state.push(num(next(&name)?, &name, row)?);
    }
    let mut control = Vec::with_capacity(m);
    for i in 1..=m {
        let name = format!("u{i}");
        control.push(num(next(&name)?, &name, row)?);
    }
    Ok(LogRow {
        step,
        time,
        advanced,
        state,
        control,
        horizon: num(next("N")?, "N", row)?,
        resolves: num(next("resolves")?, "resolves", row)?,
        solver_iters: num(next("solver_iters")?, "solver_iters", row)?,
        converged: flag(next("converged")?, "converged")?,
        vf_terminal: num(next("Vf_xN")?, "Vf_xN", row)?,
        window_pass: flag(next("window_pass")?, "window_pass")?,
        solve_seconds: num(next("solve_seconds")?, "solve_seconds", row)?,
    })
}

/// Parses a log written by [`write_csv_to`].
pub fn read_csv_from<R: Read>(source: R) -> Result<Vec<LogRow>> {
    let to_err = |row: usize, e: csv::Error| Error::MalformedLog {
        row,
        reason: e.to_string(),
    };
    let mut r = ReaderBuilder::new().from_reader(source);
    let header = r.headers().map_err(|e| to_err(0, e))?.clone();
    let (n, m) = column_counts(&header)?;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| to_err(i + 1, e))?;
            parse_row(i + 1, &rec, n, m)
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<LogRow>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv_from(file)
}
