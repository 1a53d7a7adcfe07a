use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// A raw cell: text as read from CSV, or a number produced in memory.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    pub fn as_number(&self, column: &str) -> Result<f64> {
        match self {
            Value::Number(v) => Ok(*v),
            Value::Text(s) => s.trim().parse::<f64>().map_err(|_| Error::Schema {
                column: column.to_string(),
                detail: format!("unparseable numeric cell {s:?}"),
            }),
        }
    }

    pub fn as_category(&self) -> String {
        match self {
            Value::Number(v) => v.to_string(),
            Value::Text(s) => s.trim().to_string(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

/// Header plus rows of raw cells.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl RawTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<Value>>) -> Result<Self> {
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(Error::Parse {
                what: "table".into(),
                detail: format!("row {i} has the wrong number of cells"),
            });
        }
        Ok(Self { columns, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| Error::Schema {
            column: name.to_string(),
            detail: "column not present in table".into(),
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .from_reader(reader);
        let columns = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect::<Vec<_>>();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec.iter().map(|c| Value::Text(c.to_string())).collect());
        }
        Self::new(columns, rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_quoted_csv() {
        let text = "age,edu,label\n30,\"Some, college\",1\n41,HS,0\n";
        let t = RawTable::from_reader(text.as_bytes()).unwrap();
        assert_eq!(t.columns, vec!["age", "edu", "label"]);
        assert_eq!(t.rows[0][1], Value::Text("Some, college".into()));
        assert_eq!(t.rows[1][0].as_number("age").unwrap(), 41.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        let text = "a,b\n1,2\n3\n";
        assert!(RawTable::from_reader(text.as_bytes()).is_err());
    }
}
