//! CSV input and atomic file output.

use crate::dataprep::PriceSeries;
use crate::error::{Error, Result};
use crate::intraday::IntradayPanel;
use chrono::{NaiveDate, NaiveTime, Timelike};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Trading session with a lunch break.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Session {
    pub morning_open: NaiveTime,
    pub morning_close: NaiveTime,
    pub afternoon_open: NaiveTime,
    pub afternoon_close: NaiveTime,
}

impl Default for Session {
    fn default() -> Self {
        let t = |h, m| NaiveTime::from_hms_opt(h, m, 0).expect("valid time");
        Self {
            morning_open: t(9, 30),
            morning_close: t(11, 30),
            afternoon_open: t(13, 0),
            afternoon_close: t(15, 0),
        }
    }
}

impl Session {
    fn morning_minutes(&self) -> u32 {
        ((self.morning_close - self.morning_open).num_minutes()) as u32
    }

    /// Trading minutes per day.
    pub fn minutes(&self) -> u32 {
        self.morning_minutes() + ((self.afternoon_close - self.afternoon_open).num_minutes()) as u32
    }

    /// Clock time `offset` trading minutes after the open.
    pub fn clock(&self, offset: u32) -> NaiveTime {
        let m = self.morning_minutes();
        if offset <= m {
            self.morning_open + chrono::Duration::minutes(i64::from(offset))
        } else {
            self.afternoon_open + chrono::Duration::minutes(i64::from(offset - m))
        }
    }

    /// Closing times of the bars of width `width` minutes.
    pub fn bar_ends(&self, width: u32) -> Result<Vec<NaiveTime>> {
        let total = self.minutes();
        if width == 0 || total % width != 0 {
            return Err(Error::Data(format!(
                "bar width {width} does not divide the {total}-minute session"
            )));
        }
        Ok((1..=total / width).map(|k| self.clock(k * width)).collect())
    }
}

fn parse_date(s: &str, row: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Data(format!("row {row}: bad date {s:?}: {e}")))
}

fn parse_time(s: &str, row: usize) -> Result<NaiveTime> {
    let s = s.trim();
    NaiveTime::parse_from_str(s, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .map_err(|e| Error::Data(format!("row {row}: bad time {s:?}: {e}")))
}

fn parse_price(s: &str, row: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|e| Error::Data(format!("row {row}: bad close {s:?}: {e}")))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Data(format!("row {row}: close must be positive, got {v}")))
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        Error::Data(format!("{}: missing column {name:?}", path.display()))
    })
}

/// Reads a `date, close` file.
pub fn read_daily_prices(path: &Path) -> Result<PriceSeries> {
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    let di = column_index(&headers, "date", path)?;
    let ci = column_index(&headers, "close", path)?;
    let mut dates = Vec::new();
    let mut closes = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        dates.push(parse_date(rec.get(di).unwrap_or(""), row)?);
        closes.push(parse_price(rec.get(ci).unwrap_or(""), row)?);
        if dates.len() >= 2 && dates[dates.len() - 1] <= dates[dates.len() - 2] {
            return Err(Error::Data(format!("row {row}: dates must be strictly increasing")));
        }
    }
    PriceSeries::new(dates, closes)
}

/// Intraday closes keyed by date, then time.
pub type IntradayCloses = BTreeMap<NaiveDate, BTreeMap<NaiveTime, f64>>;

/// Reads a `date, time, close` file.
pub fn read_intraday_closes(path: &Path) -> Result<IntradayCloses> {
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers()?.clone();
    let di = column_index(&headers, "date", path)?;
    let ti = column_index(&headers, "time", path)?;
    let ci = column_index(&headers, "close", path)?;
    let mut out: IntradayCloses = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        let date = parse_date(rec.get(di).unwrap_or(""), row)?;
        let time = parse_time(rec.get(ti).unwrap_or(""), row)?;
        let close = parse_price(rec.get(ci).unwrap_or(""), row)?;
        if out.entry(date).or_default().insert(time, close).is_some() {
            return Err(Error::Data(format!("row {row}: duplicate bar {date} {time}")));
        }
    }
    Ok(out)
}

/// Resamples closes to bars of `width` minutes and forms bar log returns.
///
/// The first bar of a day is measured from the previous day's last close, so
/// it carries the overnight move and the bars of a day sum to the
/// close-to-close daily return. The first day only provides that anchor.
pub fn intraday_panel(closes: &IntradayCloses, session: &Session, width: u32) -> Result<IntradayPanel> {
    let ends = session.bar_ends(width)?;
    let mut days = Vec::new();
    let mut values = Vec::new();
    let mut prev_close: Option<f64> = None;
    for (date, bars) in closes {
        let mut row = Vec::with_capacity(ends.len());
        for (k, t) in ends.iter().enumerate() {
            let c = bars.get(t).copied().ok_or_else(|| {
                Error::Data(format!(
                    "missing bar on {date}, slot {} ({:02}:{:02})",
                    k + 1,
                    t.hour(),
                    t.minute()
                ))
            })?;
            row.push(c);
        }
        if let Some(p) = prev_close {
            days.push(*date);
            let mut last = p;
            for c in &row {
                values.push(c.ln() - last.ln());
                last = *c;
            }
        }
        prev_close = row.last().copied();
    }
    IntradayPanel::new(days, ends.len(), values)
}

pub fn load_intraday(path: &Path, session: &Session, width: u32) -> Result<IntradayPanel> {
    intraday_panel(&read_intraday_closes(path)?, session, width)
}

/// Writes `bytes` to `path` through a temporary sibling and a rename, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Contract(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Builds a CSV document from a header and rows of already formatted fields.
pub fn csv_bytes<I, R, S>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn write_csv<I, R, S>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    write_atomic(path, &csv_bytes(header, rows)?)
}

/// Reads a CSV into its header and string rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{} row {}: {e}", path.display(), i + 2)))?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

/// Full-precision float formatting that round-trips through parsing.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
