use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeDelta};

use crate::error::{Error, LoadError, Result};

const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
];

/// Timestamp layout used when writing tables.
pub const WRITE_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
        .or_else(|| {
            chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

/// Role of a CSV value column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnRole {
    Target,
    FutureKnown,
    Ignore,
}

/// Assignment of CSV columns to roles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Schema {
    /// Named columns; anything unlisted is ignored. Targets and future-known
    /// channels keep the order given here.
    Explicit {
        target: Vec<String>,
        future_known: Vec<String>,
    },
    /// ETT convention: the last value column is the target and every other
    /// value column is a future-known covariate.
    LastTargetRestFuture,
}

impl Schema {
    pub fn explicit<S: AsRef<str>>(target: &[S], future_known: &[S]) -> Self {
        Schema::Explicit {
            target: target.iter().map(|s| s.as_ref().to_string()).collect(),
            future_known: future_known.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    /// Value-column indices (into `names`) of the targets and future-known
    /// channels, in channel order.
    pub fn resolve(&self, names: &[String]) -> std::result::Result<(Vec<usize>, Vec<usize>), LoadError> {
        match self {
            Schema::Explicit {
                target,
                future_known,
            } => {
                let find = |n: &String| {
                    names
                        .iter()
                        .position(|h| h == n)
                        .ok_or_else(|| LoadError::UnknownColumn(n.clone()))
                };
                let t = target.iter().map(find).collect::<std::result::Result<Vec<_>, _>>()?;
                let f = future_known
                    .iter()
                    .map(find)
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                if t.is_empty() {
                    return Err(LoadError::NoTargets);
                }
                Ok((t, f))
            }
            Schema::LastTargetRestFuture => {
                if names.is_empty() {
                    return Err(LoadError::NoTargets);
                }
                let last = names.len() - 1;
                Ok((vec![last], (0..last).collect()))
            }
        }
    }

    pub fn roles(&self, names: &[String]) -> std::result::Result<Vec<ColumnRole>, LoadError> {
        let (t, f) = self.resolve(names)?;
        Ok((0..names.len())
            .map(|i| {
                if t.contains(&i) {
                    ColumnRole::Target
                } else if f.contains(&i) {
                    ColumnRole::FutureKnown
                } else {
                    ColumnRole::Ignore
                }
            })
            .collect())
    }
}

/// Regularly sampled multivariate series split into target channels and
/// future-known channels. Values are stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesTable {
    timestamps: Vec<NaiveDateTime>,
    target_names: Vec<String>,
    targets: Vec<Vec<f64>>,
    future_names: Vec<String>,
    future: Vec<Vec<f64>>,
}

impl TimeSeriesTable {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        target_names: Vec<String>,
        targets: Vec<Vec<f64>>,
        future_names: Vec<String>,
        future: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let t = timestamps.len();
        if t < 2 {
            return Err(LoadError::TooShort.into());
        }
        if targets.is_empty() {
            return Err(LoadError::NoTargets.into());
        }
        if target_names.len() != targets.len() || future_names.len() != future.len() {
            return Err(Error::dim("channel names and channel data differ in count"));
        }
        if targets.iter().chain(&future).any(|c| c.len() != t) {
            return Err(Error::dim(format!("every channel must have {t} rows")));
        }
        for (ci, c) in targets.iter().chain(&future).enumerate() {
            if let Some(row) = c.iter().position(|v| !v.is_finite()) {
                return Err(LoadError::NonFinite {
                    row: row + 1,
                    col: ci + 1,
                }
                .into());
            }
        }
        check_spacing(&timestamps)?;
        Ok(Self {
            timestamps,
            target_names,
            targets,
            future_names,
            future,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn n_future(&self) -> usize {
        self.future.len()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn step(&self) -> TimeDelta {
        self.timestamps[1] - self.timestamps[0]
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    pub fn future_names(&self) -> &[String] {
        &self.future_names
    }

    pub fn target(&self, channel: usize) -> &[f64] {
        &self.targets[channel]
    }

    pub fn future(&self, channel: usize) -> &[f64] {
        &self.future[channel]
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn future_channels(&self) -> &[Vec<f64>] {
        &self.future
    }

    /// Rows `range` as a new table.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start >= range.end {
            return Err(Error::param(format!(
                "row range {range:?} invalid for a table of {} rows",
                self.len()
            )));
        }
        let cut = |chs: &[Vec<f64>]| chs.iter().map(|c| c[range.clone()].to_vec()).collect();
        Self::new(
            self.timestamps[range.clone()].to_vec(),
            self.target_names.clone(),
            cut(&self.targets),
            self.future_names.clone(),
            cut(&self.future),
        )
    }

    /// Writes the canonical CSV layout: `timestamp`, the target columns, then
    /// the future-known columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.target_names.iter().cloned());
        header.extend(self.future_names.iter().cloned());
        w.write_record(&header).map_err(wrap)?;
        for (i, ts) in self.timestamps.iter().enumerate() {
            let mut rec = vec![ts.format(WRITE_FORMAT).to_string()];
            rec.extend(self.targets.iter().chain(&self.future).map(|c| c[i].to_string()));
            w.write_record(&rec).map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn check_spacing(ts: &[NaiveDateTime]) -> std::result::Result<(), LoadError> {
    let step = ts[1] - ts[0];
    if step <= TimeDelta::zero() {
        return Err(LoadError::IrregularSpacing { row: 2 });
    }
    for (i, pair) in ts.windows(2).enumerate() {
        if pair[1] - pair[0] != step {
            return Err(LoadError::IrregularSpacing { row: i + 2 });
        }
    }
    Ok(())
}

/// Reads a CSV whose first column is an ISO-8601 timestamp and whose
/// remaining columns are numeric, assigning channels according to `schema`.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<TimeSeriesTable> {
    if !path.exists() {
        return Err(LoadError::MissingFile(path.to_path_buf()).into());
    }
    let file = std::fs::File::open(path).map_err(|e| LoadError::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    read_csv(file, schema).map_err(|e| match e {
        Error::Load(LoadError::Unreadable { reason, .. }) => LoadError::Unreadable {
            path: path.to_path_buf(),
            reason,
        }
        .into(),
        other => other,
    })
}

/// As [`load_csv`] but from any reader.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<TimeSeriesTable> {
    let unreadable = |e: csv::Error| LoadError::Unreadable {
        path: Default::default(),
        reason: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(unreadable)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(LoadError::MissingHeader.into());
    }
    let names = header[1..].to_vec();
    let (target_cols, future_cols) = schema.resolve(&names)?;

    let mut timestamps = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(unreadable)?;
        if rec.len() != header.len() {
            return Err(LoadError::RaggedRow {
                row,
                expected: header.len(),
                found: rec.len(),
            }
            .into());
        }
        let ts = rec.get(0).unwrap_or("");
        if ts.is_empty() {
            return Err(LoadError::MissingTimestamp { row }.into());
        }
        let ts = parse_timestamp(ts).ok_or_else(|| LoadError::BadTimestamp {
            row,
            value: ts.to_string(),
        })?;
        timestamps.push(ts);
        for (c, col) in columns.iter_mut().enumerate() {
            let cell = rec.get(c + 1).unwrap_or("");
            let col_idx = c + 1;
            if cell.is_empty() {
                return Err(LoadError::EmptyCell { row, col: col_idx }.into());
            }
            let v: f64 = cell.parse().map_err(|_| LoadError::Unparseable {
                row,
                col: col_idx,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(LoadError::NonFinite { row, col: col_idx }.into());
            }
            col.push(v);
        }
    }
    if timestamps.len() < 2 {
        return Err(LoadError::TooShort.into());
    }
    check_spacing(&timestamps)?;
    let pick = |idx: &[usize]| -> (Vec<String>, Vec<Vec<f64>>) {
        (
            idx.iter().map(|&i| names[i].clone()).collect(),
            idx.iter().map(|&i| columns[i].clone()).collect(),
        )
    };
    let (tn, tv) = pick(&target_cols);
    let (fn_, fv) = pick(&future_cols);
    TimeSeriesTable::new(timestamps, tn, tv, fn_, fv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, schema: &Schema) -> Result<TimeSeriesTable> {
        read_csv(text.as_bytes(), schema)
    }

    fn load_err(text: &str, schema: &Schema) -> LoadError {
        match load(text, schema) {
            Err(Error::Load(e)) => e,
            other => panic!("expected load error, got {other:?}"),
        }
    }

    #[test]
    fn well_formed_file() {
        let text = "date,a,b\n\
                    2020-01-01 00:00:00,1,2\n\
                    2020-01-01 01:00:00,3,4\n\
                    2020-01-01 02:00:00,5,6\n\
                    2020-01-01 03:00:00,7,8\n";
        let t = load(text, &Schema::explicit(&["a", "b"], &[])).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.n_targets(), 2);
        assert_eq!(t.n_future(), 0);
        assert_eq!(t.target(1), &[2.0, 4.0, 6.0, 8.0]);
        assert_eq!(t.step(), TimeDelta::hours(1));
    }

    #[test]
    fn ett_layout() {
        let mut text = String::from("date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n");
        for h in 0..5 {
            text.push_str(&format!("2016-07-01 {h:02}:00:00,5.8,2.0,1.5,0.4,4.2,1.3,30.5\n"));
        }
        let t = load(&text, &Schema::LastTargetRestFuture).unwrap();
        assert_eq!(t.n_targets(), 1);
        assert_eq!(t.n_future(), 6);
        assert_eq!(t.target_names(), &["OT".to_string()]);
        assert_eq!(t.future_names()[0], "HUFL");
    }

    #[test]
    fn distinct_load_errors() {
        let s = Schema::explicit(&["a", "b"], &[]);
        let head = "date,a,b\n2020-01-01 00:00:00,1,2\n";
        assert_eq!(
            load_err(&format!("{head}2020-01-01 01:00:00,,4\n"), &s),
            LoadError::EmptyCell { row: 2, col: 1 }
        );
        assert_eq!(
            load_err(&format!("{head}2020-01-01 01:00:00,1,x\n"), &s),
            LoadError::Unparseable {
                row: 2,
                col: 2,
                value: "x".into()
            }
        );
        assert_eq!(
            load_err(&format!("{head},1,2\n"), &s),
            LoadError::MissingTimestamp { row: 2 }
        );
        assert_eq!(
            load_err(&format!("{head}2020-01-01 01:00:00,NaN,2\n"), &s),
            LoadError::NonFinite { row: 2, col: 1 }
        );
        assert_eq!(
            load_err(
                &format!("{head}2020-01-01 01:00:00,1,2\n2020-01-01 03:00:00,1,2\n"),
                &s
            ),
            LoadError::IrregularSpacing { row: 3 }
        );
        assert_eq!(
            load_err(&format!("{head}2019-12-31 23:00:00,1,2\n"), &s),
            LoadError::IrregularSpacing { row: 2 }
        );
        assert_eq!(
            load_err(head, &Schema::explicit(&["c"], &[])),
            LoadError::UnknownColumn("c".into())
        );
        assert_eq!(
            load_err(&format!("{head}2020-01-01 01:00:00,1\n"), &s),
            LoadError::RaggedRow {
                row: 2,
                expected: 3,
                found: 2
            }
        );
    }

    #[test]
    fn missing_file() {
        let e = load_csv(Path::new("/definitely/not/here.csv"), &Schema::LastTargetRestFuture);
        assert!(matches!(e, Err(Error::Load(LoadError::MissingFile(_)))));
    }

    #[test]
    fn csv_round_trip() {
        let text = "timestamp,y,z\n\
                    2020-01-01T00:00:00,0.1,-3\n\
                    2020-01-01T00:30:00,0.00000000000000001,2.5\n\
                    2020-01-01T01:00:00,0.30000000000000004,7\n";
        let s = Schema::explicit(&["y"], &["z"]);
        let t = load(text, &s).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(load(std::str::from_utf8(&buf).unwrap(), &s).unwrap(), t);
        assert_eq!(std::str::from_utf8(&buf).unwrap(), text);
    }

    #[test]
    fn roles_follow_schema() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let roles = Schema::explicit(&["c"], &["a"]).roles(&names).unwrap();
        assert_eq!(
            roles,
            vec![ColumnRole::FutureKnown, ColumnRole::Ignore, ColumnRole::Target]
        );
    }
}
