//! Plain-text interchange for counts and complex matrices.
//!
//! Counts files:
//!
//! ```text
//! setting,count,exposure
//! HH,9876,10000
//! ```
//!
//! Matrix files carry one header row naming the basis labels, then a `re:`
//! and an `im:` row per matrix row:
//!
//! ```text
//! label,II,IX,...
//! re:II,0.25,0,...
//! im:II,0,0,...
//! ```
//!
//! Numbers are written with Rust's shortest round-trip float formatting, so
//! write followed by read reproduces every value bit for bit.

use std::io::{BufRead, Write};

use crate::opalg::ComplexMatrix;

use super::{CountRecord, TomographyError};

pub fn write_counts_csv<W: Write>(
    w: &mut W,
    records: &[CountRecord],
) -> Result<(), TomographyError> {
    writeln!(w, "setting,count,exposure")?;
    for r in records {
        if r.setting.contains(',') || r.setting.contains('\n') {
            return Err(TomographyError::InvalidInput(format!(
                "setting label {:?} cannot be written to CSV",
                r.setting
            )));
        }
        writeln!(w, "{},{},{}", r.setting, r.count, r.exposure)?;
    }
    Ok(())
}

pub fn read_counts_csv<R: BufRead>(reader: R) -> Result<Vec<CountRecord>, TomographyError> {
    let mut records = Vec::new();
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(TomographyError::Csv { line: 1, message: "empty file".into() }),
    };
    if header.trim() != "setting,count,exposure" {
        return Err(TomographyError::Csv {
            line: 1,
            message: format!("expected header \"setting,count,exposure\", got {header:?}"),
        });
    }
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(TomographyError::Csv {
                line: line_no,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let count = parse_float(fields[1], line_no, "count")?;
        let exposure = parse_float(fields[2], line_no, "exposure")?;
        records.push(CountRecord { setting: fields[0].to_string(), count, exposure });
    }
    Ok(records)
}

pub fn write_matrix_csv<W: Write>(
    w: &mut W,
    labels: &[String],
    m: &ComplexMatrix,
) -> Result<(), TomographyError> {
    if labels.len() != m.rows() || !m.is_square() {
        return Err(TomographyError::InvalidInput(format!(
            "{} labels for a {}x{} matrix",
            labels.len(),
            m.rows(),
            m.cols()
        )));
    }
    if labels.iter().any(|l| l.contains(',') || l.contains(':') || l.contains('\n')) {
        return Err(TomographyError::InvalidInput("labels may not contain , or :".into()));
    }
    write!(w, "label")?;
    for l in labels {
        write!(w, ",{l}")?;
    }
    writeln!(w)?;
    for (i, label) in labels.iter().enumerate() {
        write!(w, "re:{label}")?;
        for j in 0..m.cols() {
            write!(w, ",{}", m[(i, j)].re)?;
        }
        writeln!(w)?;
        write!(w, "im:{label}")?;
        for j in 0..m.cols() {
            write!(w, ",{}", m[(i, j)].im)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_matrix_csv<R: BufRead>(
    reader: R,
) -> Result<(Vec<String>, ComplexMatrix), TomographyError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(TomographyError::Csv { line: 1, message: "empty file".into() }),
    };
    let mut fields = header.trim().split(',');
    if fields.next() != Some("label") {
        return Err(TomographyError::Csv {
            line: 1,
            message: "header must start with \"label\"".into(),
        });
    }
    let labels: Vec<String> = fields.map(|s| s.to_string()).collect();
    let dim = labels.len();
    if dim == 0 {
        return Err(TomographyError::Csv { line: 1, message: "no basis labels".into() });
    }

    let mut m = ComplexMatrix::zeros(dim, dim);
    let mut expected = Vec::with_capacity(2 * dim);
    for label in &labels {
        expected.push((format!("re:{label}"), false));
        expected.push((format!("im:{label}"), true));
    }
    let mut row = 0usize;
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if row >= expected.len() {
            return Err(TomographyError::Csv {
                line: line_no,
                message: "more rows than the header allows".into(),
            });
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        let (ref want, imaginary) = expected[row];
        if fields[0] != want {
            return Err(TomographyError::Csv {
                line: line_no,
                message: format!("expected row {want:?}, got {:?}", fields[0]),
            });
        }
        if fields.len() != dim + 1 {
            return Err(TomographyError::Csv {
                line: line_no,
                message: format!("expected {} values, got {}", dim, fields.len() - 1),
            });
        }
        let i = row / 2;
        for (j, field) in fields[1..].iter().enumerate() {
            let v = parse_float(field, line_no, "matrix entry")?;
            let entry = &mut m[(i, j)];
            if imaginary {
                entry.im = v;
            } else {
                entry.re = v;
            }
        }
        row += 1;
    }
    if row != expected.len() {
        return Err(TomographyError::Csv {
            line: 0,
            message: format!("file ends after {row} of {} matrix rows", expected.len()),
        });
    }
    Ok((labels, m))
}

fn parse_float(field: &str, line: usize, what: &str) -> Result<f64, TomographyError> {
    field.trim().parse::<f64>().map_err(|_| TomographyError::Csv {
        line,
        message: format!("cannot parse {what} from {field:?}"),
    })
}
