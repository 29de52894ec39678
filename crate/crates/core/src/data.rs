use serde::{Deserialize, Serialize};

use crate::error::check_len;
use crate::{Error, Result, Scalar};

/// Column-stored design matrix with its response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    columns: Vec<Vec<T>>,
    response: Vec<T>,
    names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(columns: Vec<Vec<T>>, response: Vec<T>, names: Vec<String>) -> Result<Self> {
        check_len(columns.len(), names.len())?;
        for col in &columns {
            check_len(response.len(), col.len())?;
        }
        if response.is_empty() {
            return Err(Error::Degenerate("dataset has no observations".into()));
        }
        Ok(Self { columns, response, names })
    }

    /// Names default to `X1..Xp`.
    pub fn from_columns(columns: Vec<Vec<T>>, response: Vec<T>) -> Result<Self> {
        let names = (1..=columns.len()).map(|j| format!("X{j}")).collect();
        Self::new(columns, response, names)
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<T>] {
        &self.columns
    }

    pub fn response(&self) -> &[T] {
        &self.response
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let pick = |v: &Vec<T>| rows.iter().map(|&i| v[i]).collect::<Vec<T>>();
        Self {
            columns: self.columns.iter().map(pick).collect(),
            response: pick(&self.response),
            names: self.names.clone(),
        }
    }

    pub fn with_response(&self, response: Vec<T>) -> Result<Self> {
        Self::new(self.columns.clone(), response, self.names.clone())
    }

    /// Appends columns after the existing ones.
    pub fn augmented(&self, extra: Vec<Vec<T>>, extra_names: Vec<String>) -> Result<Self> {
        let mut columns = self.columns.clone();
        columns.extend(extra);
        let mut names = self.names.clone();
        names.extend(extra_names);
        Self::new(columns, self.response.clone(), names)
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        let conv = |v: &Vec<T>| v.iter().map(|&x| U::of(x.as_f64())).collect::<Vec<U>>();
        Dataset {
            columns: self.columns.iter().map(conv).collect(),
            response: conv(&self.response),
            names: self.names.clone(),
        }
    }
}
