use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};
use malscope_core::image::{capture_images, pgm_bytes, write_idx, ImageCorpus};
use malscope_core::pcap::{write_pcap, CaptureSet, CaptureStats, PcapRecord, LINKTYPE_RAW};
use rayon::prelude::*;

use super::{files_with_ext, read_file};
use crate::config::PipelineConfig;
use crate::run::Run;
use crate::tables::{check_field, read_labels, stem};
use crate::CliError;

pub const CAPTURE_EXTS: &[&str] = &["pcap", "cap"];

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Capture file or directory of captures
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImageizeArgs {
    /// Capture file or directory of captures
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    /// Directory of captures
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    /// CSV with columns name,label; only listed captures are used
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,
}

pub(crate) fn load_captures(
    files: &[PathBuf],
    bidirectional: bool,
) -> Result<Vec<(String, CaptureSet, CaptureStats)>, CliError> {
    let loaded: Vec<Result<_, CliError>> = files
        .par_iter()
        .map(|f| {
            let name = stem(f);
            let (set, stats) = CaptureSet::from_pcap(name.clone(), &read_file(f)?, bidirectional)
                .map_err(|e| CliError::io(f, e))?;
            Ok((name, set, stats))
        })
        .collect();
    let loaded: Vec<_> = loaded.into_iter().collect::<Result<_, _>>()?;
    let mut seen = BTreeSet::new();
    for (name, _, stats) in &loaded {
        if !seen.insert(name.clone()) {
            return Err(CliError::Data(format!("two captures share the name {name:?}")));
        }
        check_field(name)?;
        if stats.skipped_total() > 0 {
            info!("{name}: {} of {} records skipped {:?}", stats.skipped_total(), stats.records, stats.skipped);
        }
    }
    Ok(loaded)
}

pub fn split(name: &'static str, args: String, cfg: &PipelineConfig, a: &SplitArgs) -> Result<PathBuf, CliError> {
    let files = files_with_ext(&a.input, CAPTURE_EXTS)?;
    let mut run = Run::start(name, args, cfg, &[&a.input])?;
    let captures = run.time("parse", || load_captures(&files, cfg.bidirectional))?;
    let mut summary = String::from("capture,flow,src,dst,protocol,packets,bytes,first_time\n");
    for (cap, set, _) in &captures {
        for (i, flow) in set.flows.iter().enumerate() {
            let records: Vec<PcapRecord> = flow
                .packets
                .iter()
                .map(|p| PcapRecord {
                    time: p.time,
                    link_type: LINKTYPE_RAW,
                    data: p.bytes.clone(),
                    orig_len: p.bytes.len() as u32,
                })
                .collect();
            run.write(&format!("{cap}/flow_{i:04}.pcap"), write_pcap(&records, LINKTYPE_RAW))?;
            let k = flow.key;
            let _ = writeln!(
                summary,
                "{cap},{i},{}:{},{}:{},{},{},{},{}",
                k.src_ip,
                k.src_port,
                k.dst_ip,
                k.dst_port,
                k.protocol,
                flow.packets.len(),
                flow.byte_count(),
                flow.first_time()
            );
        }
        info!("{cap}: {} flows", set.flows.len());
    }
    run.write("flows.csv", summary)?;
    run.finish()
}

pub fn imageize(name: &'static str, args: String, cfg: &PipelineConfig, a: &ImageizeArgs) -> Result<PathBuf, CliError> {
    let files = files_with_ext(&a.input, CAPTURE_EXTS)?;
    let mut run = Run::start(name, args, cfg, &[&a.input])?;
    let captures = run.time("parse", || load_captures(&files, cfg.bidirectional))?;
    let rendered: Vec<(String, Vec<Vec<u8>>)> = run.time("render", || {
        captures
            .par_iter()
            .map(|(cap, set, _)| {
                let pgms = capture_images(&set.flows, cfg.payload_only).iter().map(pgm_bytes).collect();
                (cap.clone(), pgms)
            })
            .collect()
    });
    for (cap, pgms) in rendered {
        for (i, pgm) in pgms.iter().enumerate() {
            run.write(&format!("{cap}/flow_{i:04}.pgm"), pgm)?;
        }
    }
    run.finish()
}

/// Matches label rows to capture files by file name or stem.
fn labeled_files(dir: &Path, labels_path: &Path) -> Result<Vec<(PathBuf, malscope_core::image::ClassLabel)>, CliError> {
    let labels = read_labels(labels_path)?;
    let files = files_with_ext(dir, CAPTURE_EXTS)?;
    let mut by_name: BTreeMap<String, &PathBuf> = BTreeMap::new();
    for f in &files {
        by_name.insert(stem(f), f);
        if let Some(n) = f.file_name() {
            by_name.insert(n.to_string_lossy().into_owned(), f);
        }
    }
    let mut out = Vec::with_capacity(labels.len());
    for (n, label) in labels {
        let f = by_name
            .get(&n)
            .ok_or_else(|| CliError::Data(format!("{}: no capture named {n:?}", labels_path.display())))?;
        out.push(((*f).clone(), label));
    }
    out.sort();
    out.dedup();
    if out.len() < files.len() {
        info!("{} of {} captures are not listed and are ignored", files.len() - out.len(), files.len());
    }
    Ok(out)
}

pub fn build_corpus(
    name: &'static str,
    args: String,
    cfg: &PipelineConfig,
    a: &BuildCorpusArgs,
) -> Result<PathBuf, CliError> {
    let files = labeled_files(&a.input, &a.labels)?;
    let mut run = Run::start(name, args, cfg, &[&a.input, &a.labels])?;
    let paths: Vec<PathBuf> = files.iter().map(|(f, _)| f.clone()).collect();
    let captures = run.time("parse", || load_captures(&paths, cfg.bidirectional))?;
    let mut corpus = ImageCorpus::new();
    run.time("render", || {
        for ((cap, set, _), (_, label)) in captures.iter().zip(&files) {
            if set.flows.is_empty() {
                warn!("{cap}: no TCP/UDP flows, left out of the corpus");
                continue;
            }
            corpus.push_capture(cap.clone(), capture_images(&set.flows, cfg.payload_only), *label);
        }
    });
    if corpus.is_empty() {
        return Err(CliError::Data("no flows in any listed capture".into()));
    }
    let (img, lbl) = (run.path("images.idx")?, run.path("labels.idx")?);
    write_idx(&corpus, &img, &lbl)?;
    for rel in ["images.idx", "labels.idx", "images.idx.manifest"] {
        run.track(rel);
    }
    info!("corpus: {} images from {} captures", corpus.len(), corpus.captures.len());
    run.finish()
}
