//! Small comma-separated files exchanged between subcommands. Fields never
//! contain commas or quotes, so no quoting is needed.

use std::fmt::Write as _;
use std::path::Path;

use malscope_core::encoder::{CaptureSequence, FlowVector, FEATURE_DIM};
use malscope_core::image::ClassLabel;

use crate::CliError;

pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or("missing header")?;
        let header: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(format!("line {}: {} fields, header has {}", i + 1, row.len(), header.len()));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn require(&self, name: &str) -> Result<usize, CliError> {
        self.column(name)
            .ok_or_else(|| CliError::Data(format!("missing column {name:?} (have {})", self.header.join(","))))
    }
}

pub fn check_field(s: &str) -> Result<&str, CliError> {
    if s.contains([',', '\n', '\r']) {
        return Err(CliError::Data(format!("{s:?} cannot be written to a CSV field")));
    }
    Ok(s)
}

/// `name,label` with the label as a family name or class id.
pub fn read_labels(path: &Path) -> Result<Vec<(String, ClassLabel)>, CliError> {
    let csv = Csv::read(path)?;
    let (n, l) = (csv.require("name")?, csv.require("label")?);
    csv.rows
        .iter()
        .map(|r| {
            let label = r[l]
                .parse::<ClassLabel>()
                .map_err(|e| CliError::Data(format!("{}: {}: {e}", path.display(), r[n])))?;
            Ok((r[n].clone(), label))
        })
        .collect()
}

pub fn labels_csv(entries: &[(String, ClassLabel)]) -> String {
    let mut s = String::from("name,label\n");
    for (name, label) in entries {
        let _ = writeln!(s, "{name},{label}");
    }
    s
}

/// `capture,flow,label,v0..v31`, one row per flow in capture order.
pub fn flow_vectors_csv(seqs: &[CaptureSequence]) -> Result<String, CliError> {
    let mut s = String::from("capture,flow,label");
    for j in 0..FEATURE_DIM {
        let _ = write!(s, ",v{j}");
    }
    s.push('\n');
    for seq in seqs {
        check_field(&seq.source_name)?;
        for (i, v) in seq.vectors.iter().enumerate() {
            let _ = write!(s, "{},{i},{}", seq.source_name, seq.label);
            for x in v.as_ref() {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn read_flow_vectors(path: &Path) -> Result<Vec<CaptureSequence>, CliError> {
    let csv = Csv::read(path)?;
    let bad = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let (c, l) = (csv.require("capture")?, csv.require("label")?);
    let cols: Vec<usize> = (0..FEATURE_DIM).map(|j| csv.require(&format!("v{j}"))).collect::<Result<_, _>>()?;
    let mut seqs: Vec<CaptureSequence> = Vec::new();
    for row in &csv.rows {
        let values: Vec<f64> = cols
            .iter()
            .map(|&j| row[j].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", row[j]))))
            .collect::<Result<_, _>>()?;
        let label: ClassLabel = row[l].parse().map_err(|e| bad(format!("{e}")))?;
        let vector = FlowVector::new(values)?;
        match seqs.last_mut() {
            Some(s) if s.source_name == row[c] => {
                if s.label != label {
                    return Err(bad(format!("capture {} has mixed labels", row[c])));
                }
                s.vectors.push(vector);
            }
            _ => {
                if seqs.iter().any(|s| s.source_name == row[c]) {
                    return Err(bad(format!("rows of capture {} are not contiguous", row[c])));
                }
                seqs.push(CaptureSequence {
                    source_name: row[c].clone(),
                    vectors: vec![vector],
                    label,
                });
            }
        }
    }
    Ok(seqs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub label: i64,
    pub prediction: i64,
}

pub fn predictions_csv(preds: &[Prediction]) -> Result<String, CliError> {
    let mut s = String::from("id,label,prediction\n");
    for p in preds {
        let _ = writeln!(s, "{},{},{}", check_field(&p.id)?, p.label, p.prediction);
    }
    Ok(s)
}

/// File stem used as the sample id shared by captures and graphs.
pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_vectors_round_trip() {
        let seqs = vec![
            CaptureSequence {
                source_name: "a".into(),
                vectors: vec![FlowVector::new(vec![0.1; FEATURE_DIM]).unwrap(); 2],
                label: ClassLabel::Adware,
            },
            CaptureSequence {
                source_name: "b".into(),
                vectors: vec![FlowVector::new((0..FEATURE_DIM).map(|i| i as f64 / 3.0).collect()).unwrap()],
                label: ClassLabel::Benign,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        std::fs::write(&p, flow_vectors_csv(&seqs).unwrap()).unwrap();
        let back = read_flow_vectors(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].vectors, seqs[0].vectors);
        assert_eq!(back[1].vectors, seqs[1].vectors);
        assert_eq!(back[1].label, ClassLabel::Benign);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Csv::parse("a,b\n1,2\n3\n").is_err());
    }
}
