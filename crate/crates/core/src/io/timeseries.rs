//! `t,p_mw` CSV series.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{TimeGrid, Timeseries};

pub const HEADER: [&str; 2] = ["t", "p_mw"];

fn parse_error(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message,
    }
}

/// Reads one value per grid step. Lines starting with `#` are skipped; the
/// `t` column must count up from 0.
pub fn load_timeseries_csv(path: &Path, grid: &TimeGrid) -> Result<Timeseries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let series = parse_timeseries_csv(path, &text)?;
    series.expect_len(grid.n_steps(), &format!("rows of {}", path.display()))?;
    Ok(series)
}

pub fn parse_timeseries_csv(path: &Path, text: &str) -> Result<Timeseries> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, format!("unreadable header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_error(
            path,
            format!(
                "header must be `t,p_mw`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, format!("row {row}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let t: usize = record[0].parse().map_err(|_| {
            parse_error(path, format!("row {row} (line {line}): t `{}` is not an integer", &record[0]))
        })?;
        if t != row {
            return Err(parse_error(
                path,
                format!("row {row} (line {line}): expected t = {row}, found {t}"),
            ));
        }
        let v: f64 = record[1].parse().map_err(|_| {
            parse_error(path, format!("row {row} (line {line}): `{}` is not a number", &record[1]))
        })?;
        if !v.is_finite() {
            return Err(parse_error(path, format!("row {row} (line {line}): value is not finite")));
        }
        values.push(v);
    }
    Timeseries::new(values)
}

pub fn format_timeseries_csv(series: &Timeseries) -> String {
    let mut out = String::from("t,p_mw\n");
    for (t, v) in series.iter().enumerate() {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

/// Writes the series with shortest round-trip formatting, so reading it back
/// yields the same bits.
pub fn write_timeseries_csv(path: &Path, series: &Timeseries) -> Result<()> {
    fs::write(path, format_timeseries_csv(series)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Timeseries> {
        parse_timeseries_csv(Path::new("demand.csv"), text)
    }

    #[test]
    fn reads_rows_and_skips_comments() {
        let ts = parse("# demand\nt,p_mw\n0,0.5\n# gap\n1,-1.25\n").unwrap();
        assert_eq!(ts.values(), &[0.5, -1.25]);
    }

    #[test]
    fn value_lands_at_its_step() {
        let mut text = String::from("t,p_mw\n");
        for t in 0..96 {
            text.push_str(&format!("{t},{}\n", if t == 12 { 1.25 } else { 0.0 }));
        }
        let ts = parse(&text).unwrap();
        assert_eq!(ts[12], 1.25);
        assert_eq!(ts.len(), 96);
    }

    #[test]
    fn wrong_header_is_named() {
        let err = parse("t,p_kw\n0,1\n").unwrap_err().to_string();
        assert!(err.contains("header"), "{err}");
    }

    #[test]
    fn bad_cell_names_row() {
        let err = parse("t,p_mw\n0,1\n1,abc\n").unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
        let err = parse("t,p_mw\n0,1\n2,1\n").unwrap_err().to_string();
        assert!(err.contains("expected t = 1"), "{err}");
    }

    #[test]
    fn row_count_must_match_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_timeseries_csv(&path, &Timeseries::zeros(95)).unwrap();
        let err = load_timeseries_csv(&path, &TimeGrid::default()).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 96, found: 95, .. }));
    }

    #[test]
    fn write_read_is_bit_identical() {
        let ts = Timeseries::new(vec![0.1 + 0.2, -1e-300, 123456.789, -0.0, 1.0 / 3.0]).unwrap();
        let back = parse(&format_timeseries_csv(&ts)).unwrap();
        for (a, b) in ts.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
