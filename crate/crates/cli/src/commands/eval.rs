use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sess_core::backend::ClassifierBackend;
use sess_core::metrics::{
    aggregate_pointing, deletion_curve, insertion_curve, load_dataset, overall_score,
    pointing_game, CurveConfig, CurveResult, DatasetRecord, DeletionFill, PointingResult,
};
use sess_core::pipeline::run_sess;
use sess_core::saliency::{BaseMethodConfig, BaseSaliencyMethod};
use sess_core::{SessConfig, SessError};

use crate::opts::{
    ensure_dir, load_image, top1, write_json, write_text, MethodOpts, ModelOpts, ModelRecord,
    SessOpts,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Args)]
pub struct DatasetOpts {
    /// JSON-lines dataset manifest.
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub sess: SessOpts,
    #[command(flatten)]
    pub method: MethodOpts,
    /// Output directory for report.json and summary.csv.
    #[arg(long, default_value = "sess_eval")]
    pub out: PathBuf,
    /// Stop after this many newly evaluated images; rerun to resume.
    #[arg(long)]
    pub max_images: Option<usize>,
    /// Discard an existing checkpoint instead of resuming it.
    #[arg(long)]
    pub fresh: bool,
}

#[derive(Debug, Args)]
pub struct CurveOpts {
    /// Share of pixels changed per step.
    #[arg(long, default_value_t = 0.036)]
    pub step_frac: f64,
    /// Gaussian kernel size of the insertion start image.
    #[arg(long, default_value_t = 51)]
    pub blur_kernel: usize,
    #[arg(long, default_value_t = 24.0)]
    pub blur_sigma: f64,
    /// Fill deleted pixels with the image mean instead of zero.
    #[arg(long)]
    pub mean_fill: bool,
}

impl CurveOpts {
    pub fn config(&self, max_batch: usize) -> CurveConfig {
        CurveConfig {
            step_frac: self.step_frac,
            blur_kernel: self.blur_kernel,
            blur_sigma: self.blur_sigma,
            fill: if self.mean_fill {
                DeletionFill::Mean
            } else {
                DeletionFill::Zero
            },
            max_batch,
        }
    }
}

#[derive(Debug, Args)]
pub struct InsdelArgs {
    #[command(flatten)]
    pub data: DatasetOpts,
    #[command(flatten)]
    pub curve: CurveOpts,
    /// Store full per-image curves in the report.
    #[arg(long)]
    pub curves: bool,
}

#[derive(Debug, Args)]
pub struct PointingArgs {
    #[command(flatten)]
    pub data: DatasetOpts,
    /// Also count peaks within this many pixels of a box.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

/// Settings a checkpoint must match to be resumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEcho {
    pub dataset: PathBuf,
    pub model: ModelRecord,
    pub config: SessConfig,
    pub base: BaseMethodConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub curves: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub image: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<R, S> {
    pub version: u32,
    pub echo: EvalEcho,
    pub total: usize,
    pub complete: bool,
    pub rows: Vec<R>,
    pub failures: Vec<Failure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<S>,
}

pub trait Row {
    fn index(&self) -> usize;
}

/// Percentage rounded to one decimal.
pub fn percent(v: f64) -> f64 {
    (v * 1000.0).round() / 10.0
}

fn load_checkpoint<R: DeserializeOwned, S: DeserializeOwned>(
    path: &Path,
    echo: &EvalEcho,
    fresh: bool,
) -> anyhow::Result<(Vec<R>, Vec<Failure>)> {
    if fresh || !path.exists() {
        return Ok((Vec::new(), Vec::new()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| SessError::io(path, e))?;
    let prior: Report<R, S> = serde_json::from_str(&text)
        .map_err(|e| SessError::invalid(format!("{}: {e}", path.display())))?;
    if prior.version != REPORT_VERSION || &prior.echo != echo {
        return Err(SessError::invalid(format!(
            "{} was produced with different settings; pass --fresh to start over",
            path.display()
        ))
        .into());
    }
    Ok((prior.rows, prior.failures))
}

/// Evaluates every pending record, checkpointing `report.json` after each
/// parallel chunk. Returns the final report; `summarize` runs on the rows
/// once every record has been attempted.
fn run_checkpointed<R, S>(
    data: &DatasetOpts,
    echo: EvalEcho,
    records: &[DatasetRecord],
    eval_one: impl Fn(usize, &DatasetRecord) -> anyhow::Result<Vec<R>> + Sync,
    summarize: impl Fn(&[R], &[DatasetRecord]) -> S,
) -> anyhow::Result<Report<R, S>>
where
    R: Row + Serialize + DeserializeOwned + Send,
    S: Serialize + DeserializeOwned,
{
    ensure_dir(&data.out)?;
    let path = data.out.join("report.json");
    let (mut rows, mut failures) = load_checkpoint::<R, S>(&path, &echo, data.fresh)?;
    let done: BTreeSet<usize> = rows
        .iter()
        .map(Row::index)
        .chain(failures.iter().map(|f| f.index))
        .collect();
    let mut pending: Vec<usize> = (0..records.len()).filter(|i| !done.contains(i)).collect();
    if let Some(limit) = data.max_images {
        pending.truncate(limit);
    }
    let chunk = rayon::current_num_threads().max(1);
    let mut report = Report {
        version: REPORT_VERSION,
        echo,
        total: records.len(),
        complete: false,
        rows: Vec::new(),
        failures: Vec::new(),
        summary: None,
    };
    for batch in pending.chunks(chunk) {
        let results: Vec<(usize, anyhow::Result<Vec<R>>)> = batch
            .par_iter()
            .map(|&i| (i, eval_one(i, &records[i])))
            .collect();
        for (i, r) in results {
            match r {
                Ok(mut new) => rows.append(&mut new),
                Err(e) => {
                    eprintln!("warning: {}: {e:#}", records[i].image.display());
                    failures.push(Failure {
                        index: i,
                        image: records[i].image.clone(),
                        error: format!("{e:#}"),
                    });
                }
            }
        }
        rows.sort_by_key(Row::index);
        failures.sort_by_key(|f| f.index);
        report.rows = std::mem::take(&mut rows);
        report.failures = std::mem::take(&mut failures);
        write_json(&path, &report)?;
        rows = std::mem::take(&mut report.rows);
        failures = std::mem::take(&mut report.failures);
    }
    rows.sort_by_key(Row::index);
    failures.sort_by_key(|f| f.index);
    let attempted: BTreeSet<usize> = rows
        .iter()
        .map(Row::index)
        .chain(failures.iter().map(|f| f.index))
        .collect();
    report.complete = attempted.len() == records.len();
    if report.complete {
        report.summary = Some(summarize(&rows, records));
    }
    report.rows = rows;
    report.failures = failures;
    write_json(&path, &report)?;
    Ok(report)
}

struct Setup {
    model: crate::opts::LoadedModel,
    config: SessConfig,
    base_cfg: BaseMethodConfig,
    base: Box<dyn BaseSaliencyMethod>,
    records: Vec<DatasetRecord>,
}

fn setup(data: &DatasetOpts) -> anyhow::Result<Setup> {
    let records = load_dataset(&data.dataset).context("reading dataset manifest")?;
    if records.is_empty() {
        return Err(SessError::invalid(format!("{} lists no images", data.dataset.display())).into());
    }
    let model = data.model.load()?;
    let config = data
        .sess
        .resolve(SessConfig::quantitative(), model.backend.input_size())?;
    let base_cfg = data.method.resolve(config.max_batch)?;
    let base = base_cfg.build().context("configuring base method")?;
    Ok(Setup {
        model,
        config,
        base_cfg,
        base,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsdelCurves {
    pub insertion: CurveResult,
    pub deletion: CurveResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsdelRow {
    pub index: usize,
    pub image: PathBuf,
    pub class: usize,
    pub insertion: f64,
    pub deletion: f64,
    pub overall: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curves: Option<InsdelCurves>,
}

impl Row for InsdelRow {
    fn index(&self) -> usize {
        self.index
    }
}

/// Dataset means in percent, one decimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsdelMeans {
    pub images: usize,
    pub insertion: f64,
    pub deletion: f64,
    pub overall: f64,
}

pub fn insdel_means(rows: &[InsdelRow]) -> InsdelMeans {
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&InsdelRow) -> f64| percent(rows.iter().map(f).sum::<f64>() / n);
    InsdelMeans {
        images: rows.len(),
        insertion: mean(|r| r.insertion),
        deletion: mean(|r| r.deletion),
        overall: mean(|r| r.overall),
    }
}

/// Scores one image: SESS map for the record's class (or the top-1), then
/// both curves.
pub fn insdel_one(
    index: usize,
    rec: &DatasetRecord,
    backend: &dyn ClassifierBackend,
    base: &dyn BaseSaliencyMethod,
    config: &SessConfig,
    curve: &CurveConfig,
    keep_curves: bool,
) -> anyhow::Result<InsdelRow> {
    let image = load_image(&rec.image)?;
    let class = match rec.class {
        Some(c) => c,
        None => top1(backend, &image)?,
    };
    let cfg = SessConfig {
        target_class: class,
        ..config.clone()
    };
    let sal = run_sess(&image, backend, base, &cfg).context("running saliency enhancement")?;
    let ins = insertion_curve(&image, &sal, backend, class, curve).context("insertion test")?;
    let del = deletion_curve(&image, &sal, backend, class, curve).context("deletion test")?;
    Ok(InsdelRow {
        index,
        image: rec.image.clone(),
        class,
        insertion: ins.auc,
        deletion: del.auc,
        overall: overall_score(&ins, &del)?,
        curves: keep_curves.then_some(InsdelCurves {
            insertion: ins,
            deletion: del,
        }),
    })
}

pub fn run_insdel(args: InsdelArgs) -> anyhow::Result<()> {
    let s = setup(&args.data)?;
    let curve = args.curve.config(s.config.max_batch);
    let echo = EvalEcho {
        dataset: args.data.dataset.clone(),
        model: s.model.record.clone(),
        config: s.config.clone(),
        base: s.base_cfg.clone(),
        curve: Some(curve.clone()),
        tolerance: None,
        curves: args.curves,
    };
    let backend = s.model.backend.as_ref();
    let report = run_checkpointed(
        &args.data,
        echo,
        &s.records,
        |i, rec| {
            insdel_one(i, rec, backend, s.base.as_ref(), &s.config, &curve, args.curves)
                .map(|r| vec![r])
        },
        |rows, _| insdel_means(rows),
    )?;
    let done = report.rows.len() + report.failures.len();
    match &report.summary {
        Some(m) => {
            let csv = format!(
                "metric,value\ninsertion,{:.1}\ndeletion,{:.1}\noverall,{:.1}\nimages,{}\nfailed,{}\n",
                m.insertion,
                m.deletion,
                m.overall,
                m.images,
                report.failures.len()
            );
            write_text(&args.data.out.join("summary.csv"), &csv)?;
            println!(
                "insertion {:.1} | deletion {:.1} | overall {:.1} | {} images, {} failed",
                m.insertion,
                m.deletion,
                m.overall,
                m.images,
                report.failures.len()
            );
        }
        None => println!(
            "checkpoint: {done}/{} images evaluated; rerun the same command to resume",
            report.total
        ),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingRow {
    pub index: usize,
    pub image: PathBuf,
    pub class: usize,
    pub hit: bool,
    /// Saliency peak `(x, y)`.
    pub peak: (usize, usize),
    pub difficult: bool,
}

impl Row for PointingRow {
    fn index(&self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointingSummary {
    pub all: PointingResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficult: Option<PointingResult>,
}

pub fn pointing_summary(rows: &[PointingRow]) -> PointingSummary {
    let all: Vec<(usize, bool)> = rows.iter().map(|r| (r.class, r.hit)).collect();
    let diff: Vec<(usize, bool)> = rows
        .iter()
        .filter(|r| r.difficult)
        .map(|r| (r.class, r.hit))
        .collect();
    PointingSummary {
        all: aggregate_pointing(&all),
        difficult: (!diff.is_empty()).then(|| aggregate_pointing(&diff)),
    }
}

fn pointing_csv(s: &PointingSummary) -> String {
    let mut out = String::from("class,all,difficult\n");
    let diff_acc = |c: usize| {
        s.difficult
            .as_ref()
            .and_then(|d| d.per_class.get(&c))
            .map(|a| format!("{:.1}", percent(a.acc)))
            .unwrap_or_default()
    };
    for (c, a) in &s.all.per_class {
        out += &format!("{c},{:.1},{}\n", percent(a.acc), diff_acc(*c));
    }
    let diff_mean = s
        .difficult
        .as_ref()
        .map(|d| format!("{:.1}", percent(d.mean_acc)))
        .unwrap_or_default();
    out += &format!("mean,{:.1},{diff_mean}\n", percent(s.all.mean_acc));
    out
}

pub fn run_pointing(args: PointingArgs) -> anyhow::Result<()> {
    let s = setup(&args.data)?;
    let echo = EvalEcho {
        dataset: args.data.dataset.clone(),
        model: s.model.record.clone(),
        config: s.config.clone(),
        base: s.base_cfg.clone(),
        curve: None,
        tolerance: args.tolerance,
        curves: false,
    };
    let backend = s.model.backend.as_ref();
    let eval_one = |i: usize, rec: &DatasetRecord| -> anyhow::Result<Vec<PointingRow>> {
        let classes = rec.classes();
        if classes.is_empty() {
            return Err(SessError::invalid("record has no annotated objects").into());
        }
        let image = load_image(&rec.image)?;
        classes
            .into_iter()
            .map(|class| {
                let cfg = SessConfig {
                    target_class: class,
                    ..s.config.clone()
                };
                let sal = run_sess(&image, backend, s.base.as_ref(), &cfg)
                    .context("running saliency enhancement")?;
                let hit = pointing_game(&sal, &rec.boxes_for(class), args.tolerance)?;
                let (y, x) = sal.argmax();
                Ok(PointingRow {
                    index: i,
                    image: rec.image.clone(),
                    class,
                    hit,
                    peak: (x, y),
                    difficult: rec.difficult,
                })
            })
            .collect()
    };
    let report = run_checkpointed(&args.data, echo, &s.records, eval_one, |rows, _| {
        pointing_summary(rows)
    })?;
    match &report.summary {
        Some(summary) => {
            write_text(&args.data.out.join("summary.csv"), &pointing_csv(summary))?;
            let diff = summary
                .difficult
                .as_ref()
                .map(|d| format!(" | difficult {:.1}", percent(d.mean_acc)))
                .unwrap_or_default();
            println!(
                "pointing accuracy {:.1}{diff} | {} images, {} failed",
                percent(summary.all.mean_acc),
                report.total - report.failures.len(),
                report.failures.len()
            );
        }
        None => println!(
            "checkpoint: {}/{} images evaluated; rerun the same command to resume",
            report.rows.iter().map(|r| r.index).collect::<BTreeSet<_>>().len() + report.failures.len(),
            report.total
        ),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounds_to_one_decimal() {
        assert_eq!(percent(0.68649), 68.6);
        assert_eq!(percent(0.1134), 11.3);
        assert_eq!(percent(0.0), 0.0);
    }

    #[test]
    fn pointing_csv_layout() {
        let row = |index, class, hit, difficult| PointingRow {
            index,
            image: PathBuf::from("x.png"),
            class,
            hit,
            peak: (0, 0),
            difficult,
        };
        let rows = [
            row(0, 0, true, false),
            row(1, 0, true, true),
            row(2, 0, false, true),
            row(3, 0, true, false),
            row(4, 1, true, false),
            row(5, 1, false, false),
        ];
        let s = pointing_summary(&rows);
        assert_eq!(s.all.mean_acc, 0.625);
        assert_eq!(
            pointing_csv(&s),
            "class,all,difficult\n0,75.0,50.0\n1,50.0,\nmean,62.5,50.0\n"
        );
    }
}
