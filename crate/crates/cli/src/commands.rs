//! One function per subcommand.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use artembed::eval::{render_report, Average, EvalReport};
use artembed::knn::ReferenceIndex;
use artembed::probe::{decode_probe, encode_probe, train_probe, TrainConfig};
use artembed::retrieval::{RetrievalHit, RetrievalIndex};
use artembed::store::{
    companion_path, encode, filter_labels, split_dataset, EmbeddingSet, LabelSpace, LabelSpaces, RowMeta, Split,
    SplitRatios,
};
use artembed::zeroshot::PromptBank;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::error::{CliError, CliResult};

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: Option<String>,
    pub pred: String,
    pub score: f64,
}

/// One line of an ingest file.
#[derive(Debug, Deserialize)]
struct IngestRow {
    id: String,
    #[serde(default)]
    labels: BTreeMap<String, String>,
    vector: Vec<f32>,
}

/// One line of a retrieval results file.
#[derive(Debug, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub query: String,
    pub hits: Vec<RetrievalHit>,
}

fn input(ctx: &mut Context, flag: Option<PathBuf>) -> CliResult<PathBuf> {
    ctx.require("input", flag)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

fn parse_average(raw: &str) -> CliResult<Average> {
    match raw {
        "macro" => Ok(Average::Macro),
        "weighted" => Ok(Average::Weighted),
        other => Err(CliError::Usage(format!(
            "--average must be macro or weighted, got {other:?}"
        ))),
    }
}

fn write_jsonl<T: Serialize>(ctx: &mut Context, name: &str, rows: &[T]) -> CliResult<PathBuf> {
    let mut bytes = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut bytes, row)?;
        bytes.push(b'\n');
    }
    ctx.write(name, &bytes)
}

fn companion_or_derived(ctx: &mut Context, path: &Path, set: &EmbeddingSet) -> CliResult<LabelSpaces> {
    Ok(match ctx.read_labelspaces(path)? {
        Some(s) => s,
        None => {
            let mut s = LabelSpaces::derive(set);
            s.0.remove(PATH_KEY);
            s
        }
    })
}

/// Writes a store and its label-space companion.
fn write_store_pair(ctx: &mut Context, name: &str, set: &EmbeddingSet, spaces: &LabelSpaces) -> CliResult<()> {
    let path = ctx.write(&format!("{name}.emb"), &encode(set, None)?)?;
    let companion = companion_path(&path);
    let file = companion.file_name().unwrap().to_string_lossy().into_owned();
    ctx.write_json(&file, spaces)?;
    Ok(())
}

/// Writes `<model>.predictions.jsonl` and, when every row has a gold label
/// in the label space, `<model>.report.json`.
fn emit_predictions(
    ctx: &mut Context,
    model: &str,
    space: &LabelSpace,
    queries: &EmbeddingSet,
    scored: &[(usize, f64)],
) -> CliResult<()> {
    let records: Vec<PredictionRecord> = queries
        .meta()
        .iter()
        .zip(scored)
        .map(|(m, &(c, score))| PredictionRecord {
            id: m.id.clone(),
            gold: m.label(space.task()).map(str::to_owned),
            pred: space.class(c).to_owned(),
            score,
        })
        .collect();
    write_jsonl(ctx, &format!("{model}.predictions.jsonl"), &records)?;
    match gold_indices(space, &records) {
        Ok(golds) => {
            let preds: Vec<usize> = scored.iter().map(|p| p.0).collect();
            let report = EvalReport::from_predictions(model, space, &preds, &golds, Average::Macro)?;
            println!(
                "{model} {}: acc@1 {} macro-F1 {} over {} rows",
                space.task(),
                artembed::eval::percent(report.acc1),
                artembed::eval::percent(report.f1),
                records.len()
            );
            ctx.write_json(&format!("{model}.report.json"), &report)?;
        }
        Err(why) => ctx.warn(format!("no report written: {why}")),
    }
    Ok(())
}

fn gold_indices(space: &LabelSpace, records: &[PredictionRecord]) -> Result<Vec<usize>, String> {
    if records.is_empty() {
        return Err("no predictions".into());
    }
    records
        .iter()
        .map(|r| {
            let gold = r
                .gold
                .as_deref()
                .ok_or_else(|| format!("row {:?} has no gold label", r.id))?;
            space.index_of(gold).map_err(|e| e.to_string())
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON-lines file of {"id", "labels", "vector"} rows.
    pub input: Option<PathBuf>,
    /// Output store name (default: the input file stem).
    #[arg(long)]
    pub name: Option<String>,
    /// Comma-separated label keys that are classification tasks (default:
    /// every key except `path`).
    #[arg(long)]
    pub tasks: Option<String>,
}

/// Label key holding an image location rather than a class.
pub const PATH_KEY: &str = "path";

pub fn ingest(ctx: &mut Context, args: IngestArgs) -> CliResult<()> {
    let path = input(ctx, args.input)?;
    let name = ctx.get("name", args.name, stem(&path))?;
    let bytes = ctx.read(&path)?;
    let mut rows = Vec::new();
    for (n, line) in bytes.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: IngestRow =
            serde_json::from_str(&line).map_err(|e| CliError::Invalid(format!("{}:{}: {e}", path.display(), n + 1)))?;
        rows.push(row);
    }
    let dim = rows
        .first()
        .map(|r| r.vector.len())
        .ok_or_else(|| CliError::Invalid(format!("{}: no rows", path.display())))?;
    let set = EmbeddingSet::from_rows(
        dim,
        rows.into_iter().map(|r| {
            let mut meta = RowMeta::new(r.id);
            meta.labels = r.labels;
            (meta, r.vector)
        }),
    )
    .map_err(|e| CliError::in_file(&path, e))?;
    let mut spaces = LabelSpaces::derive(&set);
    match ctx.opt("tasks", args.tasks)? {
        Some(tasks) => {
            let wanted: Vec<&str> = tasks.split(',').map(str::trim).collect();
            for t in &wanted {
                if !spaces.0.contains_key(*t) {
                    return Err(CliError::Invalid(format!(
                        "task {t:?} has fewer than 2 labels in {}",
                        path.display()
                    )));
                }
            }
            spaces.0.retain(|k, _| wanted.contains(&k.as_str()));
        }
        None => {
            spaces.0.remove(PATH_KEY);
        }
    }
    write_store_pair(ctx, &name, &set, &spaces)?;
    println!("ingested {} rows of dim {} into {name}.emb", set.len(), set.dim());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// EMB1 store to partition.
    pub input: Option<PathBuf>,
    /// Train, validation and test fractions.
    #[arg(long, value_name = "TRAIN,VAL,TEST")]
    pub ratios: Option<String>,
}

fn parse_ratios(raw: &str) -> CliResult<SplitRatios> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--ratios expects three numbers, got {raw:?}")))?;
    match parts[..] {
        [a, b, c] => Ok(SplitRatios::new(a, b, c)?),
        _ => Err(CliError::Usage(format!("--ratios expects three numbers, got {raw:?}"))),
    }
}

/// Stratifies by `--task` when given.
pub fn split(ctx: &mut Context, task: Option<String>, args: SplitArgs) -> CliResult<()> {
    let path = input(ctx, args.input)?;
    let ratios = parse_ratios(&ctx.get("ratios", args.ratios, "0.8,0.1,0.1".to_owned())?)?;
    let (set, _) = ctx.read_store(&path)?;
    let spaces = companion_or_derived(ctx, &path, &set)?;
    let assignment = split_dataset(&set, ratios, ctx.seed(), task.as_deref())?;
    for w in &assignment.warnings {
        ctx.warn(w.clone());
    }
    ctx.write_json("split.json", &assignment)?;
    for part in [Split::Train, Split::Val, Split::Test] {
        let subset = assignment.apply(&set, part)?;
        write_store_pair(ctx, part.name(), &subset, &spaces)?;
    }
    let (tr, va, te) = assignment.sizes();
    println!("split {} rows: train {tr}, val {va}, test {te}", set.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// EMB1 store to filter.
    pub input: Option<PathBuf>,
    /// Comma-separated labels of `--task` to drop.
    #[arg(long)]
    pub exclude: Option<String>,
    /// Output store name (default: `<stem>.filtered`).
    #[arg(long)]
    pub name: Option<String>,
}

pub fn filter(ctx: &mut Context, task: String, args: FilterArgs) -> CliResult<()> {
    let path = input(ctx, args.input)?;
    let exclude = ctx.require("exclude", args.exclude)?;
    let excluded: Vec<&str> = exclude.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let name = ctx.get("name", args.name, format!("{}.filtered", stem(&path)))?;
    if ctx.output_path(&format!("{name}.emb")) == path {
        return Err(CliError::Invalid("filter output would overwrite its input".into()));
    }
    let (set, _) = ctx.read_store(&path)?;
    let mut spaces = companion_or_derived(ctx, &path, &set)?;
    let kept = filter_labels(&set, &task, &excluded)?;
    if spaces.0.contains_key(&task) {
        match spaces.get(&task)?.without(&excluded) {
            Ok(narrowed) => spaces.insert(&narrowed),
            Err(_) => {
                spaces.0.remove(&task);
                ctx.warn(format!(
                    "fewer than 2 {task} classes remain; task dropped from the label space"
                ));
            }
        }
    }
    write_store_pair(ctx, &name, &kept, &spaces)?;
    println!("kept {} of {} rows", kept.len(), set.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ZeroShotArgs {
    /// Prompt bank store (EMB1 with a prompt-bank header).
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Image embeddings to classify.
    #[arg(long)]
    pub query: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
}

pub fn zeroshot(ctx: &mut Context, task: Option<String>, args: ZeroShotArgs) -> CliResult<()> {
    let bank_path: PathBuf = ctx.require("bank", args.bank)?;
    let query_path: PathBuf = ctx.require("query", args.query)?;
    let model = ctx.get("model", args.model, "zeroshot".to_owned())?;
    let (bank_set, header) = ctx.read_store(&bank_path)?;
    let bank = PromptBank::from_store(&bank_set, header.as_ref()).map_err(|e| CliError::in_file(&bank_path, e))?;
    if let Some(t) = task {
        if t != bank.task() {
            return Err(CliError::Invalid(format!(
                "prompt bank is for task {:?}, not {t:?}",
                bank.task()
            )));
        }
    }
    let (queries, _) = ctx.read_store(&query_path)?;
    let scored = queries
        .rows()
        .map(|q| bank.classify(q).map(|p| (p.class, p.score)))
        .collect::<Result<Vec<_>, _>>()?;
    emit_predictions(ctx, &model, bank.labelspace(), &queries, &scored)
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    /// Labelled reference store.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Store to classify.
    #[arg(long)]
    pub query: Option<PathBuf>,
    /// Neighbours per vote.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub model: Option<String>,
}

pub fn knn(ctx: &mut Context, task: String, args: KnnArgs) -> CliResult<()> {
    let ref_path: PathBuf = ctx.require("ref", args.reference)?;
    let query_path: PathBuf = ctx.require("query", args.query)?;
    let k = ctx.get("k", args.k, 1)?;
    let model = ctx.get("model", args.model, "knn".to_owned())?;
    let (refs, _) = ctx.read_store(&ref_path)?;
    let space = ctx.labelspace_for(&ref_path, &refs, &task)?;
    let index = ReferenceIndex::build(&refs, &space).map_err(|e| CliError::in_file(&ref_path, e))?;
    let (queries, _) = ctx.read_store(&query_path)?;
    let scored = queries
        .rows()
        .map(|q| index.classify(q, k).map(|p| (p.class, p.score)))
        .collect::<Result<Vec<_>, _>>()?;
    emit_predictions(ctx, &model, &space, &queries, &scored)
}

#[derive(Debug, Args)]
pub struct ProbeTrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation store used for early stopping.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Checkpoint name (default: `probe-<task>`).
    #[arg(long)]
    pub name: Option<String>,
}

pub fn probe_train(ctx: &mut Context, task: String, args: ProbeTrainArgs) -> CliResult<()> {
    let train_path: PathBuf = ctx.require("train", args.train)?;
    let val_path: PathBuf = ctx.require("val", args.val)?;
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: ctx.get("learning-rate", args.learning_rate, defaults.learning_rate)?,
        weight_decay: ctx.get("weight-decay", args.weight_decay, defaults.weight_decay)?,
        batch_size: ctx.get("batch-size", args.batch_size, defaults.batch_size)?,
        max_epochs: ctx.get("max-epochs", args.max_epochs, defaults.max_epochs)?,
        patience: ctx.get("patience", args.patience, defaults.patience)?,
        seed: ctx.seed(),
        ..defaults
    };
    let name = ctx.get("name", args.name, format!("probe-{task}"))?;
    let (train, _) = ctx.read_store(&train_path)?;
    let (val, _) = ctx.read_store(&val_path)?;
    let space = ctx.labelspace_for(&train_path, &train, &task)?;
    let (probe, history) = train_probe(&train, &val, &space, &config)?;
    ctx.write(&format!("{name}.prb"), &encode_probe(&probe, Some(&config))?)?;
    ctx.write_json(&format!("{name}.history.json"), &history)?;
    let best = &history.epochs[history.best_epoch - 1];
    println!(
        "trained {} epochs; best epoch {} val loss {:.4} val acc {}",
        history.epochs_run(),
        history.best_epoch,
        best.val_loss,
        artembed::eval::percent(best.val_accuracy)
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ProbePredictArgs {
    /// PRB1 checkpoint.
    #[arg(long)]
    pub probe: Option<PathBuf>,
    #[arg(long)]
    pub query: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
}

pub fn probe_predict(ctx: &mut Context, task: Option<String>, args: ProbePredictArgs) -> CliResult<()> {
    let probe_path: PathBuf = ctx.require("probe", args.probe)?;
    let query_path: PathBuf = ctx.require("query", args.query)?;
    let model = ctx.get("model", args.model, "probe".to_owned())?;
    let bytes = ctx.read(&probe_path)?;
    let (probe, _) = decode_probe(&bytes).map_err(|e| CliError::in_file(&probe_path, e))?;
    if let Some(t) = task {
        if t != probe.labelspace().task() {
            return Err(CliError::Invalid(format!(
                "probe was trained for task {:?}, not {t:?}",
                probe.labelspace().task()
            )));
        }
    }
    let (queries, _) = ctx.read_store(&query_path)?;
    let scored = queries
        .rows()
        .map(|q| probe.predict_scored(q))
        .collect::<Result<Vec<_>, _>>()?;
    let space = probe.labelspace().clone();
    emit_predictions(ctx, &model, &space, &queries, &scored)
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Store to search.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Query embeddings.
    #[arg(long)]
    pub query: Option<PathBuf>,
    /// Results per query.
    #[arg(long)]
    pub k: Option<usize>,
    /// Drop a query's own row from its results.
    #[arg(long)]
    pub exclude_self: bool,
    /// Also write a static HTML contact sheet.
    #[arg(long)]
    pub html: bool,
}

pub fn retrieve(ctx: &mut Context, args: RetrieveArgs) -> CliResult<()> {
    let index_path: PathBuf = ctx.require("index", args.index)?;
    let query_path: PathBuf = ctx.require("query", args.query)?;
    let k = ctx.get("k", args.k, 5)?;
    let exclude_self = ctx.get("exclude-self", args.exclude_self.then_some(true), false)?;
    let html = ctx.get("html", args.html.then_some(true), false)?;
    let (corpus, _) = ctx.read_store(&index_path)?;
    let index = RetrievalIndex::build(&corpus).map_err(|e| CliError::in_file(&index_path, e))?;
    let (queries, _) = ctx.read_store(&query_path)?;
    let records = queries
        .meta()
        .iter()
        .zip(queries.rows())
        .map(|(m, q)| {
            let hits = index.retrieve(q, k, exclude_self.then_some(m.id.as_str()))?;
            Ok(RetrievalRecord {
                query: m.id.clone(),
                hits,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_jsonl(ctx, "retrieval.jsonl", &records)?;
    if html {
        let page = contact_sheet(&records, queries.meta(), corpus.meta());
        ctx.write("retrieval.html", page.as_bytes())?;
    }
    println!("retrieved top-{k} for {} queries", records.len());
    Ok(())
}

/// Image location of a row: its `path` label, else its id.
fn image_ref(meta: &RowMeta) -> &str {
    meta.label("path").unwrap_or(&meta.id)
}

fn contact_sheet(records: &[RetrievalRecord], queries: &[RowMeta], corpus: &[RowMeta]) -> String {
    use html_escape::{encode_double_quoted_attribute as attr, encode_text as text};
    let mut out = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Retrieval</title>\n\
         <style>td{vertical-align:top;font:12px sans-serif}img{max-width:160px;max-height:160px}</style>\n\
         </head><body><table>\n",
    );
    for (rec, q) in records.iter().zip(queries) {
        out.push_str(&format!(
            "<tr><td><img src=\"{}\"><br><b>{}</b></td>",
            attr(image_ref(q)),
            text(&rec.query)
        ));
        for h in &rec.hits {
            let m = &corpus[h.row_index];
            out.push_str(&format!(
                "<td><img src=\"{}\"><br>{}. {}<br>{} / {}<br>{:.4}</td>",
                attr(image_ref(m)),
                h.rank,
                text(&h.id),
                text(h.style.as_deref().unwrap_or("-")),
                text(h.genre.as_deref().unwrap_or("-")),
                h.score
            ));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table></body></html>\n");
    out
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions file (JSON lines of {id, gold, pred, score}).
    pub input: Option<PathBuf>,
    /// Label-space file fixing the class order; default is the sorted
    /// union of gold and predicted labels.
    #[arg(long)]
    pub labelspace: Option<PathBuf>,
    /// `macro` or `weighted`.
    #[arg(long)]
    pub average: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
}

pub fn eval(ctx: &mut Context, task: Option<String>, args: EvalArgs) -> CliResult<()> {
    let path = input(ctx, args.input)?;
    let average = parse_average(&ctx.get("average", args.average, "macro".to_owned())?)?;
    let default_model = stem(&path).trim_end_matches(".predictions").to_owned();
    let model = ctx.get("model", args.model, default_model)?;
    let labelspace_path = ctx.opt("labelspace", args.labelspace)?;
    let bytes = ctx.read(&path)?;
    let mut records = Vec::new();
    for (n, line) in bytes.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(&path, e))?;
        if !line.trim().is_empty() {
            let r: PredictionRecord = serde_json::from_str(&line)
                .map_err(|e| CliError::Invalid(format!("{}:{}: {e}", path.display(), n + 1)))?;
            records.push(r);
        }
    }
    let space = match labelspace_path {
        Some(ls) => {
            let task = task.ok_or_else(|| CliError::Usage("--labelspace needs --task".into()))?;
            let spaces: LabelSpaces = serde_json::from_slice(&ctx.read(&ls)?)?;
            spaces.get(&task)?
        }
        None => {
            let mut classes: Vec<String> = records
                .iter()
                .flat_map(|r| r.gold.iter().chain(std::iter::once(&r.pred)))
                .cloned()
                .collect();
            classes.sort();
            classes.dedup();
            LabelSpace::new(task.unwrap_or_default(), classes)?
        }
    };
    let golds = gold_indices(&space, &records).map_err(CliError::Invalid)?;
    let preds = records
        .iter()
        .map(|r| space.index_of(&r.pred))
        .collect::<Result<Vec<_>, _>>()?;
    let report = EvalReport::from_predictions(&model, &space, &preds, &golds, average)?;
    ctx.write_json(&format!("{model}.report.json"), &report)?;
    print!("{}", render_report(std::slice::from_ref(&report)));
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report files written by `eval` or a classifier.
    pub inputs: Vec<PathBuf>,
}

pub fn report(ctx: &mut Context, args: ReportArgs) -> CliResult<()> {
    if args.inputs.is_empty() {
        return Err(CliError::Usage("report needs at least one report file".into()));
    }
    let mut reports = Vec::new();
    for p in &args.inputs {
        let r: EvalReport = serde_json::from_slice(&ctx.read(p)?)?;
        reports.push(r);
    }
    let table = render_report(&reports);
    ctx.write("report.txt", table.as_bytes())?;
    print!("{table}");
    Ok(())
}
