use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{format_instant, parse_instant, TimeSeries, TimeSeriesError};

/// Names of the timestamp and value columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub time: String,
    pub value: String,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self { time: "date".into(), value: "value".into() }
    }
}

impl ColumnSpec {
    pub fn new(time: impl Into<String>, value: impl Into<String>) -> Self {
        Self { time: time.into(), value: value.into() }
    }
}

pub fn load_series(path: impl AsRef<Path>, columns: &ColumnSpec) -> Result<TimeSeries, TimeSeriesError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => TimeSeriesError::FileNotFound(path.to_path_buf()),
        _ => TimeSeriesError::Io(format!("{}: {e}", path.display())),
    })?;
    read_series(file, columns)
}

/// Parses CSV with a header row. Row numbers in errors count data rows from 1.
pub fn read_series<R: Read>(reader: R, columns: &ColumnSpec) -> Result<TimeSeries, TimeSeriesError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| TimeSeriesError::Io(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TimeSeriesError::MissingColumn(name.to_string()))
    };
    let ti = find(&columns.time)?;
    let vi = find(&columns.value)?;

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|_| TimeSeriesError::ParseError { row, column: columns.time.clone() })?;
        let parse_err = |column: &str| TimeSeriesError::ParseError { row, column: column.to_string() };
        let t = record
            .get(ti)
            .and_then(parse_instant)
            .ok_or_else(|| parse_err(&columns.time))?;
        let raw = record.get(vi).unwrap_or("");
        if raw.is_empty() {
            return Err(TimeSeriesError::NonPositiveValue { row });
        }
        let v: f64 = raw.parse().map_err(|_| parse_err(&columns.value))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(TimeSeriesError::NonPositiveValue { row });
        }
        if let Some(&prev) = timestamps.last() {
            if t <= prev {
                return Err(TimeSeriesError::NonMonotoneTimestamps { row });
            }
        }
        timestamps.push(t);
        values.push(v);
    }
    TimeSeries::new(timestamps, values)
}

/// Writes `series` in the same dialect [`read_series`] accepts. Values use
/// the shortest round-trip representation.
pub fn write_series_to<W: Write>(writer: W, series: &TimeSeries, columns: &ColumnSpec) -> Result<(), TimeSeriesError> {
    let io = |e: csv::Error| TimeSeriesError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([columns.time.as_str(), columns.value.as_str()]).map_err(io)?;
    for (t, v) in series.iter() {
        w.write_record([format_instant(t), v.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| TimeSeriesError::Io(e.to_string()))
}

pub fn write_series(path: impl AsRef<Path>, series: &TimeSeries, columns: &ColumnSpec) -> Result<(), TimeSeriesError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| TimeSeriesError::Io(format!("{}: {e}", path.display())))?;
    write_series_to(file, series, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_three_rows() {
        let csv = "date,value\n2018-01-01,1.5\n2018-01-02,2\n2018-01-03T12:00:00Z,3e3\n";
        let s = read_series(csv.as_bytes(), &ColumnSpec::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values(), &[1.5, 2.0, 3000.0]);
    }

    #[test]
    fn zero_value_is_reported_with_row() {
        let csv = "date,value\n2018-01-01,1\n2018-01-02,0\n2018-01-03,3\n";
        assert_eq!(
            read_series(csv.as_bytes(), &ColumnSpec::default()),
            Err(TimeSeriesError::NonPositiveValue { row: 2 })
        );
    }

    #[test]
    fn missing_value_and_bad_fields() {
        let cols = ColumnSpec::new("time", "users");
        let missing = "time,users\n2018-01-01,\n";
        assert_eq!(read_series(missing.as_bytes(), &cols), Err(TimeSeriesError::NonPositiveValue { row: 1 }));
        let bad_date = "time,users\n2018-01-01,4\n2018/01/02,5\n";
        assert_eq!(
            read_series(bad_date.as_bytes(), &cols),
            Err(TimeSeriesError::ParseError { row: 2, column: "time".into() })
        );
        let bad_num = "time,users\n2018-01-01,four\n";
        assert_eq!(
            read_series(bad_num.as_bytes(), &cols),
            Err(TimeSeriesError::ParseError { row: 1, column: "users".into() })
        );
        let backwards = "time,users\n2018-01-02,4\n2018-01-01,5\n";
        assert_eq!(
            read_series(backwards.as_bytes(), &cols),
            Err(TimeSeriesError::NonMonotoneTimestamps { row: 2 })
        );
        assert_eq!(
            read_series("a,b\n".as_bytes(), &cols),
            Err(TimeSeriesError::MissingColumn("time".into()))
        );
    }

    #[test]
    fn missing_file() {
        let err = load_series("/nonexistent/users.csv", &ColumnSpec::default()).unwrap_err();
        assert_eq!(err.kind(), "FileNotFound");
    }

    proptest! {
        #[test]
        fn write_then_read_round_trips(
            gaps in prop::collection::vec(1i64..200_000, 2..50),
            vals in prop::collection::vec(1e-6f64..1e12, 50),
        ) {
            let mut t = 1_300_000_000;
            let ts: Vec<i64> = gaps.iter().map(|g| { t += g; t }).collect();
            let vs = vals[..ts.len()].to_vec();
            let s = TimeSeries::new(ts, vs).unwrap();
            let mut buf = Vec::new();
            write_series_to(&mut buf, &s, &ColumnSpec::default()).unwrap();
            let back = read_series(buf.as_slice(), &ColumnSpec::default()).unwrap();
            prop_assert_eq!(back.timestamps(), s.timestamps());
            for (a, b) in back.values().iter().zip(s.values()) {
                prop_assert!(((a - b) / b).abs() <= 1e-12);
            }
        }
    }
}
