//! CSV ingestion and emission, numeric formatting, atomic file writes and
//! `key = value` config parsing.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::signal::MultichannelSeries;

/// Formats with 12 significant digits, shortest form, `.` as separator.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes via a sibling temporary file and renames over the target.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name =
        path.file_name().ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Header row of column names followed by rectangular rows of finite
/// numbers. Row numbers in errors count data rows from 1.
pub fn parse_numeric_table<R: Read>(reader: R) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data { row: 0, message: format!("unreadable header: {e}") })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Data { row: 0, message: "missing header row".into() });
    }
    let p = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Data { row, message: e.to_string() })?;
        if rec.len() != p {
            return Err(Error::Data { row, message: format!("expected {p} fields, found {}", rec.len()) });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Data {
                row,
                message: format!("non-numeric value {cell:?} in column {:?}", header[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Data { row, message: format!("non-finite value in column {:?}", header[c]) });
            }
            data.push(v);
        }
        rows += 1;
    }
    Ok((header, DMatrix::from_row_slice(rows, p, &data)))
}

/// A numeric table with one row per sample and one column per channel.
pub fn parse_series_csv<R: Read>(reader: R, sampling_rate: f64) -> Result<MultichannelSeries> {
    let (header, values) = parse_numeric_table(reader)?;
    if values.nrows() < MultichannelSeries::MIN_LEN {
        return Err(Error::Data {
            row: values.nrows(),
            message: format!("need at least {} data rows", MultichannelSeries::MIN_LEN),
        });
    }
    MultichannelSeries::new(values, sampling_rate)?.with_channel_names(header)
}

pub fn read_series_csv(path: &Path, sampling_rate: f64) -> Result<MultichannelSeries> {
    parse_series_csv(fs::File::open(path)?, sampling_rate)
}

/// Renders a table with a header row; cells are formatted numbers.
pub fn table_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn series_csv(series: &MultichannelSeries) -> Result<Vec<u8>> {
    let header: Vec<String> = match series.channel_names() {
        Some(n) => n.to_vec(),
        None => (0..series.channels()).map(|c| format!("ch{c}")).collect(),
    };
    let x = series.values();
    table_csv(&header, (0..x.nrows()).map(|t| x.row(t).iter().map(|&v| format_number(v)).collect()))
}

pub fn write_series_csv(path: &Path, series: &MultichannelSeries) -> Result<()> {
    write_atomic(path, &series_csv(series)?)
}

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("config line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(123456.789), "123456.789");
        assert_eq!(format_number(1e-7), "1e-07");
        assert_eq!(format_number(6.02214076e23), "6.02214076e+23");
        assert_eq!(format_number(57.98098), "57.98098");
        assert_eq!(format_number(9.9999999999999), "10");
        assert_eq!(format_number(0.0001234), "0.0001234");
    }

    #[test]
    fn formatting_round_trips_to_twelve_digits() {
        for &x in &[std::f64::consts::PI, -1.0e-3 / 7.0, 12345.678901234, 3.0e15] {
            let y: f64 = format_number(x).parse().unwrap();
            assert!(((x - y) / x).abs() < 1e-11, "{x} {y}");
        }
    }

    #[test]
    fn parses_good_csv() {
        let s = parse_series_csv("a,b\n1,2\n3,4\n5,6\n7,8.5\n".as_bytes(), 100.0).unwrap();
        assert_eq!((s.len(), s.channels()), (4, 2));
        assert_eq!(s.values()[(3, 1)], 8.5);
        assert_eq!(s.channel_names().unwrap(), ["a", "b"]);
    }

    #[test]
    fn names_offending_row() {
        let mut text = String::from("a,b\n");
        for i in 1..=10 {
            text += &if i == 7 { "1,abc\n".to_string() } else { format!("{i},{i}\n") };
        }
        let err = parse_series_csv(text.as_bytes(), 100.0).unwrap_err();
        assert!(matches!(err, Error::Data { row: 7, .. }), "{err}");
        assert!(err.to_string().contains("row 7"));

        let err = parse_series_csv("a,b\n1,2\n3\n4,5\n6,7\n".as_bytes(), 100.0).unwrap_err();
        assert!(matches!(err, Error::Data { row: 2, .. }), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let s = parse_series_csv("x,y\n0.1,2\n-3,4e-9\n5,6\n7,8\n".as_bytes(), 100.0).unwrap();
        let bytes = series_csv(&s).unwrap();
        let back = parse_series_csv(bytes.as_slice(), 100.0).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values("# c\nB = 100\n\nband=8,12 # alpha\n").unwrap();
        assert_eq!(kv["B"], "100");
        assert_eq!(kv["band"], "8,12");
        assert!(parse_key_values("oops\n").is_err());
    }
}
