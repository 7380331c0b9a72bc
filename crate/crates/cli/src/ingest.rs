//! CSV ingestion. Row order in the file is taken as time order.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use waqr::estimator::Dataset;

use crate::config::Roles;
use crate::{CliError, CliResult};

/// Data read from a CSV file together with its column labels.
#[derive(Debug, Clone)]
pub struct Table {
    /// Regressors only; the intercept is added at fit time.
    pub data: Dataset,
    pub regressors: Vec<String>,
    /// Raw labels of the time column, if one was named.
    pub time: Option<Vec<String>>,
}

impl Table {
    /// The design with a leading intercept column and matching names.
    pub fn design(&self, add_intercept: bool) -> (Dataset, Vec<String>) {
        if add_intercept {
            let mut names = vec!["intercept".to_string()];
            names.extend(self.regressors.iter().cloned());
            (self.data.with_intercept(), names)
        } else {
            (self.data.clone(), self.regressors.clone())
        }
    }
}

pub fn ingest_csv(path: &Path, roles: &Roles) -> CliResult<Table> {
    let y_name = roles
        .y
        .as_deref()
        .ok_or_else(|| CliError::Config("no dependent column given (data.y or --y)".into()))?;
    if roles.x.is_empty() {
        return Err(CliError::Config(
            "no regressor columns given (data.x or --x)".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(CliError::Data(format!("{} is empty", path.display())));
    }
    let mut seen = HashSet::new();
    for name in header.iter() {
        if !seen.insert(name) {
            return Err(CliError::Data(format!(
                "duplicate column `{name}` in header"
            )));
        }
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("column `{name}` not found in header")))
    };
    let y_col = find(y_name)?;
    let x_cols = roles
        .x
        .iter()
        .map(|n| find(n))
        .collect::<CliResult<Vec<_>>>()?;
    let t_col = roles.time.as_deref().map(find).transpose()?;

    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut time = Vec::new();
    let mut bad_lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |c: usize| {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        let yv = cell(y_col);
        let xv: Option<Vec<f64>> = x_cols.iter().map(|&c| cell(c)).collect();
        match (yv, xv) {
            (Some(yv), Some(xv)) => {
                y.push(yv);
                x.extend(xv);
                if let Some(c) = t_col {
                    time.push(rec.get(c).unwrap_or("").to_string());
                }
            }
            _ => bad_lines.push(line),
        }
    }
    if !bad_lines.is_empty() {
        let shown: Vec<String> = bad_lines.iter().take(20).map(u64::to_string).collect();
        let more = if bad_lines.len() > 20 {
            format!(" and {} more", bad_lines.len() - 20)
        } else {
            String::new()
        };
        return Err(CliError::Data(format!(
            "missing or non-numeric cells on line(s) {}{more}",
            shown.join(", ")
        )));
    }
    let p = x_cols.len();
    if y.len() < p + 2 {
        return Err(CliError::Data(format!(
            "{} usable rows; at least {} are needed",
            y.len(),
            p + 2
        )));
    }
    let n = y.len();
    let data = Dataset::new(DMatrix::from_row_slice(n, p, &x), DVector::from_vec(y))?
        .with_time_ordered(true);
    Ok(Table {
        data,
        regressors: roles.x.clone(),
        time: t_col.map(|_| time),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn roles(y: &str, x: &[&str], time: Option<&str>) -> Roles {
        Roles {
            y: Some(y.into()),
            x: x.iter().map(|s| s.to_string()).collect(),
            time: time.map(Into::into),
        }
    }

    #[test]
    fn reads_named_columns_in_file_order() {
        let f = file("date,y,x1\n2001,1.5,2\n2002,2.5,3\n2003,-1,4\n2004,0,5\n");
        let t = ingest_csv(f.path(), &roles("y", &["x1"], Some("date"))).unwrap();
        assert_eq!(t.data.nrows(), 4);
        assert_eq!(t.data.ncols(), 1);
        assert_eq!(t.data.y()[2], -1.0);
        assert_eq!(t.data.x()[(3, 0)], 5.0);
        assert_eq!(t.time.as_deref().unwrap()[0], "2001");
        let (d, names) = t.design(true);
        assert_eq!(d.ncols(), 2);
        assert_eq!(names, vec!["intercept", "x1"]);
    }

    #[test]
    fn blank_cell_names_line() {
        let f = file("y,x1\n1,2\n2,\n3,4\n4,5\n");
        let err = ingest_csv(f.path(), &roles("y", &["x1"], None)).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("line(s) 3"), "{err}");
    }

    #[test]
    fn schema_errors() {
        let f = file("y,x1,x1\n1,2,3\n");
        assert!(ingest_csv(f.path(), &roles("y", &["x1"], None))
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        let f = file("y,x1\n1,2\n");
        assert!(ingest_csv(f.path(), &roles("y", &["x2"], None))
            .unwrap_err()
            .to_string()
            .contains("x2"));
        let f = file("");
        assert_eq!(
            ingest_csv(f.path(), &roles("y", &["x1"], None))
                .unwrap_err()
                .exit_code(),
            3
        );
        let f = file("y,x1\n1,2\n2,3\n");
        assert!(ingest_csv(f.path(), &roles("y", &["x1"], None))
            .unwrap_err()
            .to_string()
            .contains("usable rows"));
    }
}
