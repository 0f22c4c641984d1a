use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use serde::Serialize;

use editnet_core::oracle::{label_dataset, read_cache, write_cache, CacheHeader, LabelFailure, LabeledExample};
use editnet_core::summarizers::extract_lead;
use editnet_core::text::{detokenize, ingest_dataset, load_dataset, write_dataset, Reject};
use editnet_core::trainer::{pair_labels, write_log, Supervised};
use editnet_core::{edit, evaluate, train, Checkpoint, Decision, Document, EditorParams, Report};

use crate::config::{ExperimentConfig, ExtractorKind, Split};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    pub rejects: Vec<Reject>,
}

/// Validates `input` and writes its accepted records in canonical form.
pub fn cmd_ingest(input: &Path, output: &Path) -> anyhow::Result<IngestReport> {
    let ingested = ingest_dataset(input).with_context(|| format!("cannot read dataset {}", input.display()))?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_dataset(output, &ingested.examples)?;
    Ok(IngestReport {
        accepted: ingested.examples.len(),
        rejected: ingested.rejects.len(),
        rejects: ingested.rejects,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitLabels {
    pub split: Split,
    pub cache: PathBuf,
    pub examples: usize,
    pub labeled: usize,
    pub seconds: f64,
    pub failures: Vec<LabelFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelReport {
    pub splits: Vec<SplitLabels>,
}

/// Writes one label cache per configured split. Examples the oracle
/// cannot label are reported and skipped; the command fails only when
/// nothing at all could be labeled.
pub fn cmd_label(config: &ExperimentConfig, workers: usize) -> anyhow::Result<LabelReport> {
    config.write_resolved()?;
    let extractor = config.extractor();
    let abstractor = config.abstractor();
    let oracle = config.oracle_config();
    let header = CacheHeader::new(&oracle);
    let mut splits = Vec::new();
    for split in Split::ALL {
        let Some(path) = config.data.split(split) else {
            continue;
        };
        let examples = load_dataset(path).with_context(|| format!("loading {} split", split.name()))?;
        let start = Instant::now();
        let outcome = label_dataset(&examples, extractor.as_ref(), &abstractor, &oracle, workers)?;
        let seconds = start.elapsed().as_secs_f64();
        let cache = config.label_cache(split);
        write_cache(&cache, &header, &outcome.labeled)?;
        splits.push(SplitLabels {
            split,
            cache,
            examples: examples.len(),
            labeled: outcome.labeled.len(),
            seconds,
            failures: outcome.failures,
        });
    }
    if splits.is_empty() {
        bail!("no dataset paths configured; set [data] train/validation/test or pass --train-data");
    }
    if splits.iter().all(|s| s.labeled == 0) {
        let reasons: Vec<&str> = splits
            .iter()
            .flat_map(|s| s.failures.iter().map(|f| f.reason.as_str()))
            .take(3)
            .collect();
        bail!("no example could be labeled: {}", reasons.join("; "));
    }
    Ok(LabelReport { splits })
}

fn supervised(config: &ExperimentConfig, split: Split) -> anyhow::Result<Vec<Supervised>> {
    let Some(data) = config.data.split(split) else {
        bail!("no {} dataset configured", split.name());
    };
    let cache = config.label_cache(split);
    if !cache.exists() {
        bail!(
            "label cache {} not found; run `editnet label` with the same config first",
            cache.display()
        );
    }
    let (header, labeled): (CacheHeader, Vec<LabeledExample>) = read_cache(&cache)?;
    if header != CacheHeader::new(&config.oracle_config()) {
        bail!(
            "label cache {} was built with different reward weights or cap; rerun `editnet label`",
            cache.display()
        );
    }
    let examples = load_dataset(data).with_context(|| format!("loading {} split", split.name()))?;
    Ok(pair_labels(&examples, labeled)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub best_epoch: usize,
    pub best_val_reward: f64,
    pub optimizer_steps: u64,
}

/// Trains from the cached labels of the train and validation splits.
pub fn cmd_train(config: &ExperimentConfig, workers: usize) -> anyhow::Result<TrainSummary> {
    let train_set = supervised(config, Split::Train)?;
    let validation = supervised(config, Split::Validation)?;
    config.write_resolved()?;
    let initial = EditorParams::init(config.train.hidden, config.encoder.n, config.seed);
    let outcome = train(
        &train_set,
        &validation,
        &config.encoder,
        &config.reward,
        &config.train_config(workers),
        initial,
    )?;
    let checkpoint = config.out.join(CHECKPOINT_FILE);
    let log = config.out.join(LOG_FILE);
    outcome.best.save(&checkpoint)?;
    write_log(&log, &outcome.log)?;
    Ok(TrainSummary {
        checkpoint,
        log,
        best_epoch: outcome.best_epoch,
        best_val_reward: outcome.log[outcome.best_epoch - 1].val_reward,
        optimizer_steps: outcome.optimizer_steps,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnnotatedStep {
    pub decision: Decision,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnnotatedSummary {
    pub steps: Vec<AnnotatedStep>,
    pub summary: Vec<String>,
}

impl AnnotatedSummary {
    /// One `<E|A|R>: sentence` line per step with rejected sentences struck
    /// through, then the mixed summary.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            match s.decision {
                Decision::Reject => out.push_str(&format!("R: ~~{}~~\n", s.text)),
                d => out.push_str(&format!("{d}: {}\n", s.text)),
            }
        }
        out.push_str("\nSummary:\n");
        for s in &self.summary {
            out.push_str(s);
            out.push('\n');
        }
        out
    }
}

/// Reads a document with one sentence per line; blank lines are skipped.
pub fn read_document(path: &Path) -> anyhow::Result<Document> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Document::from_texts(id, &lines).with_context(|| format!("parsing {}", path.display()))
}

/// Decodes one document with the lead extractor and annotates each step.
pub fn cmd_summarize(
    config: &ExperimentConfig,
    checkpoint: &Path,
    document: &Path,
) -> anyhow::Result<AnnotatedSummary> {
    if config.extractor.kind != ExtractorKind::Lead {
        bail!("summarize needs a reference-free extractor; set extractor.kind = \"lead\"");
    }
    let ck = Checkpoint::load(checkpoint)?;
    let doc = read_document(document)?;
    let extract = extract_lead(&doc, config.extractor.k)?;
    let mixed = edit(&doc, &extract, &config.abstractor(), &ck.encoder, &ck.params)?;
    let steps = mixed
        .steps
        .iter()
        .map(|s| AnnotatedStep {
            decision: s.decision,
            text: detokenize(s.emitted().unwrap_or(&s.extracted)),
        })
        .collect();
    let summary = mixed.text().iter().map(|s| detokenize(s)).collect();
    Ok(AnnotatedSummary { steps, summary })
}

/// Evaluates a checkpoint on `test` (or the configured test split) and
/// writes `report.json` to the output directory.
pub fn cmd_evaluate(config: &ExperimentConfig, checkpoint: &Path, test: Option<&Path>) -> anyhow::Result<Report> {
    let Some(test) = test.or(config.data.test.as_deref()) else {
        bail!("no test dataset given; pass --test-data or set data.test");
    };
    let ck = Checkpoint::load(checkpoint)?;
    let examples = load_dataset(test).with_context(|| format!("loading {}", test.display()))?;
    let report = evaluate(
        &examples,
        &ck,
        config.extractor().as_ref(),
        &config.abstractor(),
        &config.reward,
    )?;
    config.write_resolved()?;
    let path = config.out.join(REPORT_FILE);
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(report)
}
