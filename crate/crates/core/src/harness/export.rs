use std::fs;
use std::path::Path;

use super::LearningCurve;
use crate::error::{Error, Result};

/// Renders `step,<label>...` with one row per step (starting at 1) and every
/// value in 17 significant digits. With `include_se`, `<label>_se` columns
/// follow the means.
pub fn curves_to_csv(curves: &[LearningCurve], include_se: bool) -> Result<String> {
    let first = curves.first().ok_or_else(|| Error::InvalidArgument("no curves to export".into()))?;
    let len = first.mean.len();
    if curves.iter().any(|c| c.mean.len() != len || c.se.len() != len) {
        return Err(Error::InvalidArgument("curves differ in length".into()));
    }
    let mut header = vec!["step".to_string()];
    header.extend(curves.iter().map(|c| c.label.clone()));
    if include_se {
        header.extend(curves.iter().map(|c| format!("{}_se", c.label)));
    }
    let mut out = header.join(",");
    out.push('\n');
    for t in 0..len {
        out.push_str(&(t + 1).to_string());
        for c in curves {
            out.push_str(&format!(",{:.16e}", c.mean[t]));
        }
        if include_se {
            for c in curves {
                out.push_str(&format!(",{:.16e}", c.se[t]));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_csv(curves: &[LearningCurve], include_se: bool, path: &Path) -> Result<()> {
    let text = curves_to_csv(curves, include_se)?;
    fs::write(path, text)?;
    Ok(())
}

/// A parsed curves file: column labels (without `step`) and their values.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub labels: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, label: &str) -> Option<&[f64]> {
        self.labels.iter().position(|l| l == label).map(|i| self.columns[i].as_slice())
    }
}

pub fn parse_csv(text: &str) -> Result<CsvTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    let mut fields = header.split(',');
    if fields.next() != Some("step") {
        return Err(Error::Parse { line: 1, message: "header must start with 'step'".into() });
    }
    let labels: Vec<String> = fields.map(str::to_string).collect();
    let mut columns = vec![Vec::new(); labels.len()];
    for (i, line) in lines {
        let line_no = i + 1;
        let values: Vec<&str> = line.split(',').collect();
        if values.len() != labels.len() + 1 {
            return Err(Error::Parse { line: line_no, message: format!("expected {} fields, found {}", labels.len() + 1, values.len()) });
        }
        let step: usize = values[0]
            .parse()
            .map_err(|e| Error::Parse { line: line_no, message: format!("bad step '{}': {e}", values[0]) })?;
        if step != line_no - 1 {
            return Err(Error::Parse { line: line_no, message: format!("expected step {}, found {step}", line_no - 1) });
        }
        for (col, v) in columns.iter_mut().zip(&values[1..]) {
            col.push(v.parse().map_err(|e| Error::Parse { line: line_no, message: format!("bad value '{v}': {e}") })?);
        }
    }
    Ok(CsvTable { labels, columns })
}
