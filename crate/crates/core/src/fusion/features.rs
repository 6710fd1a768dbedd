use std::fmt::Write as _;
use std::path::Path;

use super::FusionError;

/// Feature matrix with one id and one integer label per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub labels: Vec<i64>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn push(&mut self, id: impl Into<String>, label: i64, row: Vec<f64>) {
        self.ids.push(id.into());
        self.labels.push(label);
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,label");
        for j in 0..self.dim() {
            let _ = write!(s, ",f{j}");
        }
        s.push('\n');
        for ((id, label), row) in self.ids.iter().zip(&self.labels).zip(&self.rows) {
            let _ = write!(s, "{id},{label}");
            for v in row {
                // `{}` on f64 prints the shortest string that parses back exactly
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, FusionError> {
        let bad = |line: usize, msg: &str| FusionError::Format(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[0] != "id" || cols[1] != "label" {
            return Err(bad(1, "header must start with id,label"));
        }
        for (j, c) in cols[2..].iter().enumerate() {
            if *c != format!("f{j}") {
                return Err(bad(1, &format!("expected column f{j}, found {c:?}")));
            }
        }
        let dim = cols.len() - 2;
        let mut table = FeatureTable::default();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 2 {
                return Err(bad(i + 1, &format!("expected {} fields, found {}", dim + 2, fields.len())));
            }
            let label = fields[1].trim().parse().map_err(|_| bad(i + 1, "label is not an integer"))?;
            let row = fields[2..]
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(i + 1, "non-numeric feature"))?;
            table.push(fields[0], label, row);
        }
        Ok(table)
    }
}

pub fn write_feature_csv(path: &Path, table: &FeatureTable) -> Result<(), FusionError> {
    std::fs::write(path, table.to_csv())?;
    Ok(())
}

pub fn read_feature_csv(path: &Path) -> Result<FeatureTable, FusionError> {
    FeatureTable::from_csv(&std::fs::read_to_string(path)?)
}
