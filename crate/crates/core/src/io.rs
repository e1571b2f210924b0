//! CSV reading and writing for point clouds, labels and rankings.
//!
//! Point files hold one point per row (`N` rows, `d` columns). Label and
//! ranking files hold `index,value` rows. Floats are written with 17
//! significant digits so values round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{DataMatrix, Ranking, TimeLabels};

/// Shortest-safe representation with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).comment(Some(b'#')).from_reader(r)
}

fn parse_field(field: &str, line: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("not a number: '{field}'") })
}

/// Reads an `N x d` table of points; `header` skips the first row.
pub fn read_points_from<R: Read>(r: R, header: bool) -> Result<DataMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader(r).records().enumerate() {
        let record = record?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if header && k == 0 {
            continue;
        }
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record.iter().map(|f| parse_field(f, line)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse { line, msg: format!("expected {} columns, found {}", first.len(), row.len()) });
            }
        }
        rows.push(row);
    }
    DataMatrix::from_points(&rows)
}

pub fn read_points(path: &Path, header: bool) -> Result<DataMatrix> {
    read_points_from(File::open(path)?, header)
}

/// Writes one point per row.
pub fn write_points_to<W: Write>(w: W, z: &DataMatrix) -> Result<()> {
    let mut out = BufWriter::new(w);
    for i in 0..z.len() {
        let line: Vec<String> = z.point(i).iter().map(|&v| format_float(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_points(path: &Path, z: &DataMatrix) -> Result<()> {
    write_points_to(File::create(path)?, z)
}

/// Reads rows of `index,v1,v2,...` in any order, keeping column `col`
/// (`col >= 1`). A first row whose index does not parse is a header.
fn read_indexed(r: impl Read, col: usize) -> Result<Vec<(usize, String, usize)>> {
    let mut out = Vec::new();
    for (k, record) in reader(r).records().enumerate() {
        let record = record?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let index = match record[0].parse::<usize>() {
            Ok(index) => index,
            Err(_) if k == 0 => continue,
            Err(_) => return Err(Error::Parse { line, msg: format!("bad index '{}'", &record[0]) }),
        };
        let value = record
            .get(col)
            .ok_or_else(|| Error::Parse { line, msg: format!("expected at least {} columns, found {}", col + 1, record.len()) })?;
        out.push((index, value.to_string(), line));
    }
    Ok(out)
}

fn place<T: Clone>(rows: Vec<(usize, T, usize)>, fill: T) -> Result<Vec<T>> {
    let n = rows.len();
    let mut values = vec![fill; n];
    let mut seen = vec![false; n];
    for (index, v, line) in rows {
        if index >= n || seen[index] {
            return Err(Error::Parse { line, msg: format!("index {index} out of range or repeated") });
        }
        seen[index] = true;
        values[index] = v;
    }
    Ok(values)
}

pub fn read_labels_from<R: Read>(r: R) -> Result<TimeLabels> {
    read_labels_column_from(r, 1)
}

/// Labels from column `col` of an indexed table.
pub fn read_labels_column_from<R: Read>(r: R, col: usize) -> Result<TimeLabels> {
    let rows = read_indexed(r, col)?
        .into_iter()
        .map(|(i, v, line)| parse_field(&v, line).map(|x| (i, x, line)))
        .collect::<Result<Vec<_>>>()?;
    TimeLabels::new(place(rows, 0.0)?)
}

pub fn read_labels(path: &Path) -> Result<TimeLabels> {
    read_labels_from(File::open(path)?)
}

/// Number of columns in the first data row of an indexed table.
pub fn count_columns(path: &Path) -> Result<usize> {
    let mut rdr = reader(File::open(path)?);
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        if !record.iter().all(|f| f.is_empty()) {
            return Ok(record.len());
        }
    }
    Err(Error::Parse { line: 1, msg: "empty file".into() })
}

pub fn write_labels_to<W: Write>(w: W, t: &TimeLabels) -> Result<()> {
    let mut out = BufWriter::new(w);
    writeln!(out, "index,t")?;
    for (i, v) in t.as_slice().iter().enumerate() {
        writeln!(out, "{i},{}", format_float(*v))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_labels(path: &Path, t: &TimeLabels) -> Result<()> {
    write_labels_to(File::create(path)?, t)
}

/// Reads `index,rank` rows (0-based ranks).
pub fn read_ranking_from<R: Read>(r: R) -> Result<Ranking> {
    read_ranking_column_from(r, 1)
}

/// Ranks from column `col` of an indexed table.
pub fn read_ranking_column_from<R: Read>(r: R, col: usize) -> Result<Ranking> {
    let rows = read_indexed(r, col)?
        .into_iter()
        .map(|(i, v, line)| {
            v.parse::<usize>().map(|x| (i, x, line)).map_err(|_| Error::Parse { line, msg: format!("bad rank '{v}'") })
        })
        .collect::<Result<Vec<_>>>()?;
    Ranking::from_ranks(&place(rows, 0)?)
}

pub fn read_ranking(path: &Path) -> Result<Ranking> {
    read_ranking_from(File::open(path)?)
}

pub fn write_ranking_to<W: Write>(w: W, p: &Ranking) -> Result<()> {
    let mut out = BufWriter::new(w);
    writeln!(out, "index,rank")?;
    for (i, r) in p.ranks().iter().enumerate() {
        writeln!(out, "{i},{r}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ranking(path: &Path, p: &Ranking) -> Result<()> {
    write_ranking_to(File::create(path)?, p)
}

/// Dense square matrix, row-major, one row per line.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|&v| format_float(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_round_trip() {
        let z = DataMatrix::from_points(&[vec![0.1, -2.0], vec![1.0 / 3.0, 1e-300], vec![5.5, 7.0]]).unwrap();
        let mut buf = Vec::new();
        write_points_to(&mut buf, &z).unwrap();
        let back = read_points_from(buf.as_slice(), false).unwrap();
        assert_eq!(back, z);
    }

    #[test]
    fn points_with_header() {
        let text = "x,y\n1,2\n3,4\n";
        let z = read_points_from(text.as_bytes(), true).unwrap();
        assert_eq!(z.dim(), 2);
        assert_eq!(z.len(), 2);
        assert_eq!(z.point(1), &[3.0, 4.0]);
        assert!(matches!(read_points_from(text.as_bytes(), false), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(read_points_from("1,2\n3\n".as_bytes(), false), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(read_points_from("1,2\nNaN,4\n".as_bytes(), false), Err(Error::NonFiniteEntry { .. })));
    }

    #[test]
    fn labels_round_trip_any_order() {
        let t = TimeLabels::new(vec![0.5, 6.0, 1.0 / 7.0]).unwrap();
        let mut buf = Vec::new();
        write_labels_to(&mut buf, &t).unwrap();
        assert_eq!(read_labels_from(buf.as_slice()).unwrap(), t);
        let shuffled = "2,3\n0,1\n1,2\n";
        assert_eq!(read_labels_from(shuffled.as_bytes()).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        assert!(read_labels_from("0,1\n0,2\n".as_bytes()).is_err());
    }

    #[test]
    fn estimate_columns() {
        let text = "index,t_hat,rank\n0,2.5,1\n1,0.5,0\n";
        assert_eq!(read_labels_from(text.as_bytes()).unwrap().as_slice(), &[2.5, 0.5]);
        let p = read_ranking_column_from(text.as_bytes(), 2).unwrap();
        assert_eq!(p.ranks(), vec![1, 0]);
        assert!(read_ranking_column_from(text.as_bytes(), 3).is_err());
    }

    #[test]
    fn ranking_round_trip() {
        let p = Ranking::new(vec![2, 0, 3, 1]).unwrap();
        let mut buf = Vec::new();
        write_ranking_to(&mut buf, &p).unwrap();
        assert_eq!(read_ranking_from(buf.as_slice()).unwrap(), p);
        assert!(read_ranking_from("0,0\n1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn seventeen_digits() {
        let v = 0.1f64 + 0.2;
        assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        assert_eq!(format_float(1.0), "1.0000000000000000e0");
    }
}
