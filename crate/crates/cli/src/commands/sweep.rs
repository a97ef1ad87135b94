use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use sess_core::metrics::load_dataset;
use sess_core::render::line_plot;
use sess_core::{SessConfig, SessError};

use crate::commands::eval::{insdel_means, insdel_one, CurveOpts, InsdelMeans};
use crate::opts::{ensure_dir, save_rgb, write_text, MethodOpts, ModelOpts, SessOpts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Scales,
    Prefilter,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Scales => "scales",
            Axis::Prefilter => "prefilter",
        }
    }

    fn apply(self, cfg: &SessConfig, v: f64) -> anyhow::Result<SessConfig> {
        let mut cfg = cfg.clone();
        match self {
            Axis::Scales => {
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(SessError::invalid(format!("scale count must be a positive integer, got {v}")).into());
                }
                cfg.n_scales = v as usize;
            }
            Axis::Prefilter => cfg.prefilter_ratio = v,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Parameter to vary.
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Grid: `1..12`, `0..90:10` (inclusive, with step) or `1,3,5`.
    /// Pre-filter values are percentages.
    #[arg(long)]
    pub values: String,
    /// JSON-lines dataset manifest.
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub sess: SessOpts,
    #[command(flatten)]
    pub method: MethodOpts,
    #[command(flatten)]
    pub curve: CurveOpts,
    /// Output directory for sweep.csv and the plots.
    #[arg(long, default_value = "sess_sweep")]
    pub out: PathBuf,
}

pub fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let bad = || SessError::invalid(format!("cannot parse grid `{spec}`"));
    let spec = spec.trim();
    let values = if let Some((range, step)) = spec.split_once("..").map(|(a, rest)| {
        let (b, step) = rest.split_once(':').unwrap_or((rest, "1"));
        ((a, b), step)
    }) {
        let (a, b) = range;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        let step: f64 = step.trim().parse().map_err(|_| bad())?;
        if !(step > 0.0) || b < a {
            return Err(bad().into());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| a + k as f64 * step).collect()
    } else {
        spec.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad().into());
    }
    Ok(values)
}

pub fn run(args: SweepArgs) -> anyhow::Result<()> {
    let grid = parse_grid(&args.values)?;
    let records = load_dataset(&args.dataset).context("reading dataset manifest")?;
    if records.is_empty() {
        return Err(SessError::invalid(format!("{} lists no images", args.dataset.display())).into());
    }
    let model = args.model.load()?;
    let backend = model.backend.as_ref();
    let base_cfg = args
        .sess
        .resolve(SessConfig::quantitative(), backend.input_size())?;
    let method = args.method.resolve(base_cfg.max_batch)?;
    let base = method.build().context("configuring base method")?;
    let curve = args.curve.config(base_cfg.max_batch);
    ensure_dir(&args.out)?;

    let mut csv = format!("{},insertion,deletion,overall,images,failed\n", args.axis.name());
    let mut points: Vec<(f64, InsdelMeans)> = Vec::new();
    let mut first_error = None;
    for &v in &grid {
        let cfg = match args.axis.apply(&base_cfg, v) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("warning: skipping {}={v}: {e:#}", args.axis.name());
                first_error.get_or_insert(e);
                continue;
            }
        };
        let results: Vec<_> = records
            .par_iter()
            .enumerate()
            .map(|(i, rec)| insdel_one(i, rec, backend, base.as_ref(), &cfg, &curve, false))
            .collect();
        let mut rows = Vec::new();
        let mut failed = 0;
        for (r, rec) in results.into_iter().zip(&records) {
            match r {
                Ok(row) => rows.push(row),
                Err(e) => {
                    eprintln!("warning: {}={v}: {}: {e:#}", args.axis.name(), rec.image.display());
                    failed += 1;
                }
            }
        }
        if rows.is_empty() {
            eprintln!("warning: {}={v}: every image failed", args.axis.name());
            first_error.get_or_insert_with(|| {
                SessError::Inference(format!("all images failed at {}={v}", args.axis.name())).into()
            });
            continue;
        }
        let m = insdel_means(&rows);
        csv += &format!(
            "{v},{:.1},{:.1},{:.1},{},{failed}\n",
            m.insertion, m.deletion, m.overall, m.images
        );
        println!(
            "{}={v}: insertion {:.1} | deletion {:.1} | overall {:.1}",
            args.axis.name(),
            m.insertion,
            m.deletion,
            m.overall
        );
        points.push((v, m));
        write_text(&args.out.join("sweep.csv"), &csv)?;
    }
    write_text(&args.out.join("sweep.csv"), &csv)?;

    let series = |f: fn(&InsdelMeans) -> f64| -> Vec<(f64, f64)> {
        points.iter().map(|(v, m)| (*v, f(m))).collect()
    };
    let ins = series(|m| m.insertion);
    let del = series(|m| m.deletion);
    let all = series(|m| m.overall);
    save_rgb(&args.out.join("curves.png"), &line_plot(&[ins.clone(), del.clone(), all.clone()], 640, 400))?;
    for (name, s) in [("insertion", ins), ("deletion", del), ("overall", all)] {
        save_rgb(&args.out.join(format!("{name}.png")), &line_plot(&[s], 480, 320))?;
    }
    match first_error {
        Some(e) => Err(e.context("sweep incomplete; sweep.csv holds the finished points")),
        None => Ok(()),
    }
}
