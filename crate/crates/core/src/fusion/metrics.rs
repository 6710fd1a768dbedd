use serde::{Deserialize, Serialize};

use super::FusionError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Support-weighted classification metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][pred]`
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores `preds` against `labels`. Classes run from 0 to the largest id
/// seen in either list; a zero denominator yields 0.
pub fn evaluate(preds: &[usize], labels: &[usize]) -> Result<Metrics, FusionError> {
    if preds.len() != labels.len() {
        return Err(FusionError::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(FusionError::Empty);
    }
    let k = preds.iter().chain(labels).copied().max().unwrap_or(0) + 1;
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &y) in preds.iter().zip(labels) {
        confusion[y][p] += 1;
    }
    let n = labels.len();
    let mut per_class = Vec::with_capacity(k);
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let w = support as f64 / n as f64;
        wp += w * precision;
        wr += w * recall;
        wf += w * f1;
        per_class.push(ClassMetrics {
            class: c,
            precision,
            recall,
            f1,
            support,
        });
    }
    let trace: usize = (0..k).map(|c| confusion[c][c]).sum();
    Ok(Metrics {
        accuracy: ratio(trace, n),
        precision: wp,
        recall: wr,
        f1: wf,
        per_class,
        confusion,
    })
}

impl Metrics {
    /// `metric,value` rows for the weighted scores, then per-class rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (name, v) in [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
        ] {
            s.push_str(&format!("{name},{v}\n"));
        }
        s.push_str("\nclass,precision,recall,f1,support\n");
        for c in &self.per_class {
            s.push_str(&format!("{},{},{},{},{}\n", c.class, c.precision, c.recall, c.f1, c.support));
        }
        s
    }

    /// Header `true\pred,0,1,..`; one row per true class.
    pub fn confusion_csv(&self) -> String {
        let k = self.confusion.len();
        let mut s = String::from("true\\pred");
        for c in 0..k {
            s.push_str(&format!(",{c}"));
        }
        s.push('\n');
        for (c, row) in self.confusion.iter().enumerate() {
            s.push_str(&c.to_string());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn table(&self, class_name: impl Fn(usize) -> String) -> String {
        let mut s = format!(
            "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}  (weighted)\n\n",
            self.accuracy, self.precision, self.recall, self.f1
        );
        s.push_str(&format!("{:<14}{:>10}{:>10}{:>10}{:>9}\n", "class", "precision", "recall", "f1", "support"));
        for c in &self.per_class {
            s.push_str(&format!(
                "{:<14}{:>10.4}{:>10.4}{:>10.4}{:>9}\n",
                class_name(c.class),
                c.precision,
                c.recall,
                c.f1,
                c.support
            ));
        }
        s
    }
}
