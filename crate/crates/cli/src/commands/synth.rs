use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use malscope_core::code::write_fcg;
use malscope_core::fusion::FeatureTable;
use malscope_core::image::ClassLabel;
use malscope_core::synth::{capture_corpus, cooccurrence_corpus, gaussian_blobs, graph_corpus, three_flow_pcap};

use crate::config::{derive_seed, PipelineConfig};
use crate::run::Run;
use crate::tables::labels_csv;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthTask {
    /// Labeled captures whose flow bytes cluster by class
    Captures,
    /// Labeled call graphs with class-disjoint opcodes
    Graphs,
    /// Gaussian blobs as a feature table
    Blobs,
    /// Token-pair co-occurrence corpus
    Cooccur,
    /// Three-session capture with one non-IP record
    Fixture,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub task: SynthTask,
    /// Samples (captures, graphs, points or sentences)
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Comma-separated family names; labels cycle through them
    #[arg(long, default_value = "Benign,Adware")]
    pub classes: String,
    /// Fraction of samples, taken from the end, written to test/
    #[arg(long, default_value_t = 0.0)]
    pub holdout: f64,
    /// Blob dimension
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Distance between blob centers in standard deviations
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    /// Token pairs in the co-occurrence corpus
    #[arg(long, default_value_t = 5)]
    pub pairs: usize,
}

fn parse_classes(s: &str) -> Result<Vec<ClassLabel>, CliError> {
    let classes: Vec<ClassLabel> = s
        .split(',')
        .map(|c| c.trim().parse::<ClassLabel>().map_err(|e| CliError::Usage(format!("--classes: {e}"))))
        .collect::<Result<_, _>>()?;
    if classes.is_empty() {
        return Err(CliError::Usage("--classes is empty".into()));
    }
    Ok(classes)
}

/// `(subdir, range)` pairs: everything in `.` or a train/test split.
fn splits(n: usize, holdout: f64) -> Vec<(&'static str, std::ops::Range<usize>)> {
    let test = (n as f64 * holdout).round() as usize;
    if test == 0 {
        return vec![("", 0..n)];
    }
    vec![("train/", 0..n - test), ("test/", n - test..n)]
}

pub fn synth(name: &'static str, args: String, cfg: &PipelineConfig, a: &SynthArgs) -> Result<PathBuf, CliError> {
    let classes = parse_classes(&a.classes)?;
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(CliError::Usage(format!("--holdout must be in [0, 1), got {}", a.holdout)));
    }
    if a.task == SynthTask::Blobs && a.dim < classes.len() {
        return Err(CliError::Usage("--dim must be at least the number of classes".into()));
    }
    if a.task == SynthTask::Cooccur && a.pairs == 0 {
        return Err(CliError::Usage("--pairs must be at least 1".into()));
    }
    let seed = derive_seed(cfg.seed, "synth");
    let mut run = Run::start(name, args, cfg, &[])?;
    let parts = splits(a.n, a.holdout);
    match a.task {
        SynthTask::Captures => {
            let caps = run.time("generate", || capture_corpus(a.n, &classes, seed));
            for (dir, range) in parts {
                let mut labels = Vec::new();
                for (i, cap) in caps.iter().enumerate().take(range.end).skip(range.start) {
                    let file = format!("sample_{i:04}.pcap");
                    run.write(&format!("{dir}pcaps/{file}"), &cap.pcap)?;
                    labels.push((file, cap.label));
                }
                run.write(&format!("{dir}labels.csv"), labels_csv(&labels))?;
            }
        }
        SynthTask::Graphs => {
            let graphs = run.time("generate", || graph_corpus(a.n, &classes, seed));
            for (dir, range) in parts {
                let mut labels = Vec::new();
                for (i, g) in graphs.iter().enumerate().take(range.end).skip(range.start) {
                    let file = format!("sample_{i:04}.fcg");
                    run.write(&format!("{dir}graphs/{file}"), write_fcg(&g.raw))?;
                    labels.push((file, g.label));
                }
                run.write(&format!("{dir}labels.csv"), labels_csv(&labels))?;
            }
        }
        SynthTask::Blobs => {
            let (xs, ys) = gaussian_blobs(a.n, classes.len(), a.dim, a.separation, seed);
            for (dir, range) in parts {
                let mut table = FeatureTable::default();
                for i in range {
                    table.push(format!("sample_{i:04}"), classes[ys[i]].id() as i64, xs[i].clone());
                }
                run.write(&format!("{dir}blobs.csv"), table.to_csv())?;
            }
        }
        SynthTask::Cooccur => {
            let (corpus, pairs) = cooccurrence_corpus(a.pairs, a.n, 10, seed);
            let mut text = String::new();
            for sentence in &corpus {
                let _ = writeln!(text, "{}", sentence.join(" "));
            }
            run.write("corpus.txt", text)?;
            let mut p = String::from("a,b\n");
            for (x, y) in &pairs {
                let _ = writeln!(p, "{x},{y}");
            }
            run.write("pairs.csv", p)?;
        }
        SynthTask::Fixture => {
            run.write("fixture.pcap", three_flow_pcap())?;
        }
    }
    run.finish()
}
