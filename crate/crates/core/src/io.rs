//! CSV input and the tabular artifacts written by the command-line tool.
//!
//! Dialect: comma separated, header row, `.` decimal point. Missing cells
//! are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::baselearners::{BaseLearnerSet, LearnerKind, LearnerSpec};
use crate::{BoostFit, Dataset, Error, Result, Scalar};

const MISSING: [&str; 4] = ["", "NA", "NaN", "nan"];

/// A data set read from CSV. Categorical columns hold level codes
/// `0..levels` in lexicographic order of their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvData {
    pub dataset: Dataset<f64>,
    /// Covariate index to level labels.
    pub levels: BTreeMap<usize, Vec<String>>,
}

impl CsvData {
    /// `numeric` for ordinary covariates, a grouped learner for every categorical one.
    pub fn learner_set(&self, numeric: LearnerKind) -> BaseLearnerSet {
        let specs = (0..self.dataset.p())
            .map(|column| LearnerSpec {
                column,
                kind: match self.levels.get(&column) {
                    Some(l) => LearnerKind::Grouped { levels: l.len() },
                    None => numeric,
                },
            })
            .collect();
        BaseLearnerSet::new(specs).expect("columns are unique")
    }
}

pub fn read_dataset<R: Read>(reader: R, response: &str, categorical: &[String]) -> Result<CsvData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let unique: BTreeSet<&String> = header.iter().collect();
    if unique.len() != header.len() {
        return Err(Error::Data("duplicate column names in header".into()));
    }
    let y_idx = header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::Data(format!("response column '{response}' not found")))?;
    for c in categorical {
        if !header.contains(c) {
            return Err(Error::Data(format!("categorical column '{c}' not found")));
        }
        if c == response {
            return Err(Error::Data(format!("response column '{c}' cannot be categorical")));
        }
    }
    let covariates: Vec<usize> = (0..header.len()).filter(|&i| i != y_idx).collect();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!("row {} has {} fields, expected {}", r + 1, rec.len(), header.len())));
        }
        for (i, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            if MISSING.contains(&cell) {
                return Err(Error::Data(format!("row {}, column '{}': missing value", r + 1, header[i])));
            }
            raw[i].push(cell.to_string());
        }
    }
    if raw[y_idx].is_empty() {
        return Err(Error::Data("no data rows".into()));
    }

    let numeric = |i: usize| -> Result<Vec<f64>> {
        raw[i]
            .iter()
            .enumerate()
            .map(|(r, cell)| {
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Data(format!("row {}, column '{}': '{cell}' is not a finite number", r + 1, header[i]))
                })
            })
            .collect()
    };
    let mut columns = Vec::with_capacity(covariates.len());
    let mut names = Vec::with_capacity(covariates.len());
    let mut levels = BTreeMap::new();
    for (j, &i) in covariates.iter().enumerate() {
        names.push(header[i].clone());
        if categorical.contains(&header[i]) {
            let labels: Vec<String> = raw[i].iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            if labels.len() < 2 {
                return Err(Error::Data(format!("categorical column '{}' has a single level", header[i])));
            }
            let code: BTreeMap<&String, usize> = labels.iter().enumerate().map(|(c, l)| (l, c)).collect();
            columns.push(raw[i].iter().map(|v| code[v] as f64).collect());
            levels.insert(j, labels);
        } else {
            columns.push(numeric(i)?);
        }
    }
    let dataset = Dataset::new(columns, numeric(y_idx)?, names)?;
    Ok(CsvData { dataset, levels })
}

pub fn read_dataset_file(path: impl AsRef<Path>, response: &str, categorical: &[String]) -> Result<CsvData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_dataset(file, response, categorical)
}

/// Columns: iteration, risk.
pub fn write_risk_path<T: Scalar, W: Write>(fit: &BoostFit<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "risk"])?;
    for (m, r) in fit.risk_path().iter().enumerate() {
        w.write_record([m.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per iteration; one column per learner named `parameter:covariate`.
/// Linear learners report their slope, others the norm of their coefficients.
pub fn write_coefficient_paths<T: Scalar, W: Write>(fit: &BoostFit<T>, out: W) -> Result<()> {
    let paths = fit.coefficient_paths();
    let params = fit.family().parameter_names();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string()];
    header.extend(paths.components.iter().map(|&(k, j)| format!("{}:{}", params[k], fit.column_names[j])));
    w.write_record(&header)?;
    for (m, row) in paths.rows.iter().enumerate() {
        let mut rec = vec![m.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records<S: Serialize, W: Write>(rows: &[S], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<S: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<S>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(|e| Error::Data(format!("malformed record: {e}")))).collect()
}

/// Writes through a temporary sibling and renames, so a failed write leaves no file behind.
pub fn write_file_atomic(path: impl AsRef<Path>, write: impl FnOnce(&mut File) -> Result<()>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("partial");
    let res = File::create(&tmp).map_err(Error::from).and_then(|mut f| {
        write(&mut f)?;
        f.sync_all()?;
        Ok(())
    });
    match res {
        Ok(()) => Ok(std::fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::ResultRow;

    #[test]
    fn reads_numeric_and_categorical() {
        let text = "y,x,g\n1.5,2,b\n2.5,3,a\n0,1,b\n";
        let d = read_dataset(text.as_bytes(), "y", &["g".to_string()]).unwrap();
        assert_eq!(d.dataset.response(), &[1.5, 2.5, 0.0]);
        assert_eq!(d.dataset.names(), &["x".to_string(), "g".to_string()]);
        assert_eq!(d.dataset.column(1), &[1.0, 0.0, 1.0]);
        assert_eq!(d.levels[&1], vec!["a".to_string(), "b".to_string()]);
        let set = d.learner_set(LearnerKind::Linear);
        assert_eq!(set.iter().nth(1).unwrap().kind, LearnerKind::Grouped { levels: 2 });
    }

    #[test]
    fn rejects_bad_cells() {
        assert!(matches!(read_dataset("y,x\n1,abc\n".as_bytes(), "y", &[]), Err(Error::Data(_))));
        assert!(matches!(read_dataset("y,x\n1,\n".as_bytes(), "y", &[]), Err(Error::Data(_))));
        assert!(matches!(read_dataset("y,x\n1,NA\n".as_bytes(), "y", &[]), Err(Error::Data(_))));
        assert!(matches!(read_dataset("y,x\n1,2\n".as_bytes(), "z", &[]), Err(Error::Data(_))));
        assert!(matches!(read_dataset("y,x\n".as_bytes(), "y", &[]), Err(Error::Data(_))));
    }

    #[test]
    fn results_round_trip() {
        let row = ResultRow {
            replication: 0,
            scenario: "D".into(),
            n: 10,
            p: 6,
            rho: 0.5,
            snr: None,
            method: "classical".into(),
            tau: Some(0.01),
            mstop_used: 4,
            tp: 6,
            fp: 1,
            tp_mu: Some(3),
            fp_mu: Some(0),
            tp_sigma: Some(3),
            fp_sigma: Some(1),
            metric_name: "nll".into(),
            metric_value: 12.5,
        };
        let mut buf = Vec::new();
        write_records(std::slice::from_ref(&row), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "replication,scenario,n,p,rho,snr,method,tau,mstop_used,tp,fp,tp_mu,fp_mu,tp_sigma,fp_sigma,metric_name,metric_value\n"
        ));
        let back: Vec<ResultRow> = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, vec![row]);
    }
}
