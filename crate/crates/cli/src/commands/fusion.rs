use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use log::info;
use malscope_core::encoder::BiLstmModel;
use malscope_core::fusion::{
    argmax, detection_label, evaluate as score, fuse, predict_forest, read_feature_csv, train_categorizer,
    train_detector, train_forest, FeatureTable, ForestModel, MlpHead,
};
use malscope_core::image::{ClassLabel, NUM_CLASSES};
use malscope_core::training::log_csv;
use serde::{Deserialize, Serialize};

use super::network::load_checkpoint;
use crate::config::{Classifier, PipelineConfig};
use crate::run::Run;
use crate::tables::{predictions_csv, read_flow_vectors, Csv, Prediction};
use crate::CliError;

pub const MODEL_JSON: &str = "model.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Benign (-1) vs malicious (+1)
    Detect,
    /// Family class ids
    Categorize,
}

#[derive(Debug, Args)]
pub struct FeatureInputs {
    /// Feature CSV (id,label,f0..) used as is
    #[arg(long, value_name = "FILE", conflicts_with_all = ["net", "code"])]
    pub features: Option<PathBuf>,
    /// Network feature CSV, joined with --code by id
    #[arg(long, value_name = "FILE", requires = "code")]
    pub net: Option<PathBuf>,
    /// Code feature CSV, joined with --net by id
    #[arg(long, value_name = "FILE", requires = "net")]
    pub code: Option<PathBuf>,
}

impl FeatureInputs {
    fn paths(&self) -> Vec<&Path> {
        [&self.features, &self.net, &self.code].into_iter().flatten().map(|p| p.as_path()).collect()
    }

    fn load(&self) -> Result<(FeatureTable, Option<(usize, usize)>), CliError> {
        match (&self.features, &self.net, &self.code) {
            (Some(f), None, None) => Ok((read_table(f)?, None)),
            (None, Some(n), Some(c)) => {
                let (net, code) = (read_table(n)?, read_table(c)?);
                let dims = (net.dim(), code.dim());
                Ok((join(&net, &code)?, Some(dims)))
            }
            _ => Err(CliError::Usage("give --features, or both --net and --code".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainFusionArgs {
    #[command(flatten)]
    pub inputs: FeatureInputs,
    #[arg(long, value_enum, default_value = "categorize")]
    pub task: Task,
    /// forest or mlp; overrides the `classifier` config key
    #[arg(long, value_name = "KIND")]
    pub classifier: Option<String>,
    /// One-vs-rest categorization for this family
    #[arg(long, value_name = "NAME")]
    pub family: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// train-fusion run directory, a bi-LSTM checkpoint or an MLP head checkpoint
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[command(flatten)]
    pub inputs: FeatureInputs,
    /// Flow-vector CSV, for a bi-LSTM checkpoint
    #[arg(long, value_name = "FILE", conflicts_with_all = ["features", "net", "code"])]
    pub vectors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// CSV with id (or name) and prediction (or label) columns
    #[arg(long, value_name = "FILE")]
    pub predictions: PathBuf,
    /// CSV with id (or name) and label columns; defaults to the label column of --predictions
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
}

/// Written next to the fitted model by train-fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub classifier: Classifier,
    pub task: Task,
    pub family: Option<String>,
    pub dim: usize,
    /// Network and code widths when trained on joined tables.
    pub parts: Option<(usize, usize)>,
    pub classes: usize,
}

fn read_table(path: &Path) -> Result<FeatureTable, CliError> {
    read_feature_csv(path).map_err(|e| CliError::io(path, e))
}

/// Rows of `net` in order, each followed by the code row with the same id.
pub fn join(net: &FeatureTable, code: &FeatureTable) -> Result<FeatureTable, CliError> {
    let index: HashMap<&str, usize> = code.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let missing: Vec<&str> = net.ids.iter().filter(|id| !index.contains_key(id.as_str())).map(|s| s.as_str()).collect();
    if !missing.is_empty() || net.len() != code.len() {
        return Err(CliError::Data(format!(
            "network and code tables do not pair up: {} vs {} rows, {} network ids without code ({})",
            net.len(),
            code.len(),
            missing.len(),
            missing.iter().take(3).copied().collect::<Vec<_>>().join(" ")
        )));
    }
    let mut out = FeatureTable::default();
    for ((id, &label), row) in net.ids.iter().zip(&net.labels).zip(&net.rows) {
        let j = index[id.as_str()];
        let other = code.labels[j];
        let agrees = other == label || (other.abs() == 1 && detection_sign(label)? == other as i8);
        if !agrees {
            return Err(CliError::Data(format!("{id}: network label {label} but code label {other}")));
        }
        out.push(id.clone(), label, fuse(row, &code.rows[j], net.dim(), code.dim())?.0);
    }
    Ok(out)
}

/// ±1 from a sign or a class id.
fn detection_sign(label: i64) -> Result<i8, CliError> {
    match label {
        -1 => Ok(-1),
        l => u8::try_from(l)
            .ok()
            .and_then(ClassLabel::from_id)
            .map(detection_label)
            .ok_or_else(|| CliError::Data(format!("label {l} is neither ±1 nor a class id"))),
    }
}

fn family_arg(family: &Option<String>) -> Result<Option<ClassLabel>, CliError> {
    family
        .as_deref()
        .map(|f| f.parse::<ClassLabel>().map_err(|e| CliError::Usage(format!("--family: {e}"))))
        .transpose()
}

/// Ground truth for `task` from stored table labels.
fn task_labels(raw: &[i64], task: Task, family: Option<ClassLabel>) -> Result<Vec<i64>, CliError> {
    raw.iter()
        .map(|&l| match (task, family) {
            (Task::Detect, _) => detection_sign(l).map(i64::from),
            (Task::Categorize, fam) => {
                let c = u8::try_from(l)
                    .ok()
                    .and_then(ClassLabel::from_id)
                    .ok_or_else(|| CliError::Data(format!("label {l} is not a class id")))?;
                Ok(match fam {
                    Some(f) => (c == f) as i64,
                    None => c.id() as i64,
                })
            }
        })
        .collect()
}

/// Forest class index for a task label (signs map to 0/1).
fn to_class(task: Task, l: i64) -> usize {
    match task {
        Task::Detect => (l > 0) as usize,
        Task::Categorize => l as usize,
    }
}

fn from_class(task: Task, c: usize) -> i64 {
    match task {
        Task::Detect => {
            if c == 1 {
                1
            } else {
                -1
            }
        }
        Task::Categorize => c as i64,
    }
}

pub fn train_fusion(name: &'static str, args: String, cfg: &PipelineConfig, a: &TrainFusionArgs) -> Result<PathBuf, CliError> {
    let classifier = match &a.classifier {
        Some(c) => c.parse()?,
        None => cfg.classifier_kind()?,
    };
    let family = family_arg(&a.family)?;
    if family.is_some() && a.task == Task::Detect {
        return Err(CliError::Usage("--family applies to categorization only".into()));
    }
    let mut run = Run::start(name, args, cfg, &a.inputs.paths())?;
    let (table, parts) = a.inputs.load()?;
    if table.is_empty() {
        return Err(CliError::Data("feature table is empty".into()));
    }
    if parts.is_some() {
        run.write("fused_features.csv", table.to_csv())?;
    }
    let labels = task_labels(&table.labels, a.task, family)?;
    let classes = match a.task {
        Task::Detect => 2,
        Task::Categorize if family.is_some() => 2,
        Task::Categorize => labels.iter().max().map_or(0, |&m| m as usize + 1).max(2),
    };
    match classifier {
        Classifier::Forest => {
            let params = cfg.forest_params()?;
            let ys: Vec<usize> = labels.iter().map(|&l| to_class(a.task, l)).collect();
            let model = run.time("train", || train_forest(&table.rows, &ys, &params))?;
            let path = run.path("forest.json")?;
            model.save(&path)?;
            run.track("forest.json");
        }
        Classifier::Mlp => {
            let hcfg = cfg.head_train("fusion-head");
            let (head, log) = run.time("train", || match a.task {
                Task::Detect => {
                    let signs: Vec<i8> = labels.iter().map(|&l| l as i8).collect();
                    train_detector(&table.rows, &signs, &hcfg)
                }
                Task::Categorize => {
                    let ys: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
                    train_categorizer(&table.rows, &ys, classes, &hcfg)
                }
            })?;
            if let Some(last) = log.last() {
                info!("head: final loss {:.4}, accuracy {:.4}", last.loss, last.accuracy);
            }
            run.write("mlp.ckpt", head.to_checkpoint().to_bytes())?;
            run.write("mlp_log.csv", log_csv(&log))?;
        }
    }
    let model = FusionModel {
        classifier,
        task: a.task,
        family: family.map(|f| f.name().to_string()),
        dim: table.dim(),
        parts,
        classes,
    };
    run.write(MODEL_JSON, serde_json::to_string_pretty(&model).expect("plain data"))?;
    run.finish()
}

fn predict_fused(dir: &Path, inputs: &FeatureInputs) -> Result<Vec<Prediction>, CliError> {
    let spec_path = dir.join(MODEL_JSON);
    let text = std::fs::read_to_string(&spec_path).map_err(|e| CliError::io(&spec_path, e))?;
    let spec: FusionModel = serde_json::from_str(&text).map_err(|e| CliError::io(&spec_path, e))?;
    let (table, parts) = inputs.load()?;
    if let (Some(want), Some(got)) = (spec.parts, parts) {
        if want != got {
            return Err(CliError::Data(format!("model expects widths {want:?}, inputs have {got:?}")));
        }
    }
    if table.dim() != spec.dim {
        return Err(CliError::Data(format!("model expects {} features, inputs have {}", spec.dim, table.dim())));
    }
    let family = family_arg(&spec.family)?;
    let labels = task_labels(&table.labels, spec.task, family)?;
    let preds: Vec<i64> = match spec.classifier {
        Classifier::Forest => {
            let forest = ForestModel::load(&dir.join("forest.json"))?;
            table
                .rows
                .iter()
                .map(|x| Ok(from_class(spec.task, predict_forest(&forest, x)?)))
                .collect::<Result<_, CliError>>()?
        }
        Classifier::Mlp => {
            let head = MlpHead::from_checkpoint(&load_checkpoint(&dir.join("mlp.ckpt"))?)?;
            table.rows.iter().map(|x| Ok(head.predict(x)?)).collect::<Result<_, CliError>>()?
        }
    };
    Ok(zip_predictions(&table.ids, labels, preds))
}

fn zip_predictions(ids: &[String], labels: Vec<i64>, preds: Vec<i64>) -> Vec<Prediction> {
    ids.iter()
        .zip(labels)
        .zip(preds)
        .map(|((id, label), prediction)| Prediction {
            id: id.clone(),
            label,
            prediction,
        })
        .collect()
}

pub fn predict(name: &'static str, args: String, cfg: &PipelineConfig, a: &PredictArgs) -> Result<PathBuf, CliError> {
    let mut inputs = vec![a.model.as_path()];
    inputs.extend(a.inputs.paths());
    if let Some(v) = &a.vectors {
        inputs.push(v);
    }
    let mut run = Run::start(name, args, cfg, &inputs)?;
    let preds = run.time("predict", || -> Result<Vec<Prediction>, CliError> {
        if a.model.is_dir() {
            return predict_fused(&a.model, &a.inputs);
        }
        let ck = load_checkpoint(&a.model)?;
        match ck.kind.as_str() {
            "bilstm" => {
                let path = a
                    .vectors
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("a bi-LSTM checkpoint needs --vectors".into()))?;
                let model = BiLstmModel::from_checkpoint(&ck)?;
                read_flow_vectors(path)?
                    .iter()
                    .map(|s| {
                        let xs = malscope_core::encoder::apply_cap(&s.vectors, cfg.lstm_cap, &s.source_name);
                        Ok(Prediction {
                            id: s.source_name.clone(),
                            label: s.label.id() as i64,
                            prediction: argmax(&model.logits(xs)?) as i64,
                        })
                    })
                    .collect()
            }
            "mlp" => {
                let head = MlpHead::from_checkpoint(&ck)?;
                let (table, _) = a.inputs.load()?;
                let task = if head.outputs() == 1 { Task::Detect } else { Task::Categorize };
                let labels = task_labels(&table.labels, task, None)?;
                let preds = table.rows.iter().map(|x| Ok(head.predict(x)?)).collect::<Result<_, CliError>>()?;
                Ok(zip_predictions(&table.ids, labels, preds))
            }
            other => Err(CliError::Data(format!("{}: cannot predict with a {other:?} checkpoint", a.model.display()))),
        }
    })?;
    run.write("predictions.csv", predictions_csv(&preds)?)?;
    run.finish()
}

/// Integer or family name.
fn parse_value(s: &str) -> Result<i64, CliError> {
    s.parse::<i64>()
        .or_else(|_| s.parse::<ClassLabel>().map(|c| c.id() as i64))
        .map_err(|_| CliError::Data(format!("{s:?} is neither an integer nor a family name")))
}

fn keyed(csv: &Csv, path: &Path, value_cols: &[&str]) -> Result<Vec<(String, i64)>, CliError> {
    let id = csv.column("id").or_else(|| csv.column("name"));
    let id = id.ok_or_else(|| CliError::Data(format!("{}: needs an id or name column", path.display())))?;
    let col = value_cols
        .iter()
        .find_map(|c| csv.column(c))
        .ok_or_else(|| CliError::Data(format!("{}: needs a {} column", path.display(), value_cols.join(" or "))))?;
    csv.rows.iter().map(|r| Ok((r[id].clone(), parse_value(&r[col])?))).collect()
}

pub fn evaluate(name: &'static str, args: String, cfg: &PipelineConfig, a: &EvaluateArgs) -> Result<PathBuf, CliError> {
    let mut inputs = vec![a.predictions.as_path()];
    if let Some(l) = &a.labels {
        inputs.push(l);
    }
    let mut run = Run::start(name, args, cfg, &inputs)?;
    let pcsv = Csv::read(&a.predictions)?;
    let preds = keyed(&pcsv, &a.predictions, &["prediction", "label"])?;
    let truth: Vec<i64> = match &a.labels {
        None => keyed(&pcsv, &a.predictions, &["label"])?.into_iter().map(|(_, v)| v).collect(),
        Some(path) => {
            let map: HashMap<String, i64> = keyed(&Csv::read(path)?, path, &["label"])?.into_iter().collect();
            preds
                .iter()
                .map(|(id, _)| {
                    map.get(id)
                        .copied()
                        .ok_or_else(|| CliError::Data(format!("{}: no label for {id}", path.display())))
                })
                .collect::<Result<_, _>>()?
        }
    };
    let mut p: Vec<i64> = preds.iter().map(|(_, v)| *v).collect();
    let mut t = truth;
    // detection files hold ±1; score them as classes 0 (benign) and 1
    let signed = p.iter().chain(&t).any(|&v| v == -1);
    if signed {
        for v in p.iter_mut().chain(t.iter_mut()) {
            *v = (*v > 0) as i64;
        }
    }
    if let Some(bad) = p.iter().chain(&t).find(|&&v| v < 0) {
        return Err(CliError::Data(format!("negative class {bad}")));
    }
    let to_usize = |v: &[i64]| v.iter().map(|&x| x as usize).collect::<Vec<_>>();
    let metrics = score(&to_usize(&p), &to_usize(&t))?;
    let class_name = |c: usize| match (signed, c) {
        (true, 0) => "benign".to_string(),
        (true, _) => "malicious".to_string(),
        _ if c < NUM_CLASSES => ClassLabel::from_id(c as u8).map_or(c.to_string(), |l| l.name().to_string()),
        _ => c.to_string(),
    };
    let report = metrics.table(class_name);
    eprint!("{report}");
    run.write("metrics.csv", metrics.to_csv())?;
    run.write("confusion.csv", metrics.confusion_csv())?;
    run.write("report.txt", report)?;
    run.finish()
}
