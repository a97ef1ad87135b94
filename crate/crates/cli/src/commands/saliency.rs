use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use sess_core::pipeline::{run_sess_detailed, RunOptions};
use sess_core::render::overlay;
use sess_core::saliency::BaseMethodConfig;
use sess_core::{SessConfig, SessError};

use crate::manifest::{PatchRow, RunManifest, MANIFEST_VERSION};
use crate::opts::{
    ensure_dir, load_backend, load_image, save_rgb, top1, write_json, LoadedModel, MethodOpts,
    ModelOpts, SessOpts,
};

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    /// Input image (PNG or JPEG).
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub model: ModelOpts,
    /// Target class; defaults to the model's top-1 prediction.
    #[arg(long)]
    pub class: Option<usize>,
    #[command(flatten)]
    pub sess: SessOpts,
    #[command(flatten)]
    pub method: MethodOpts,
    /// Output directory.
    #[arg(long, default_value = "sess_out")]
    pub out: PathBuf,
    /// Heat-map opacity in the overlay.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f32,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// manifest.json written by `sess saliency`.
    pub manifest: PathBuf,
    /// Output directory (default: `rerun/` next to the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Job<'a> {
    image: &'a Path,
    model: &'a LoadedModel,
    class: Option<usize>,
    config: SessConfig,
    base: BaseMethodConfig,
    seed: u64,
    alpha: f32,
    out: &'a Path,
    command: &'a str,
}

fn execute(job: Job<'_>) -> anyhow::Result<RunManifest> {
    let backend = job.model.backend.as_ref();
    let image = load_image(job.image)?;
    let class = match job.class {
        Some(c) => c,
        None => top1(backend, &image)?,
    };
    let config = SessConfig {
        target_class: class,
        ..job.config
    };
    let base = job.base.build().context("configuring base method")?;
    let run = run_sess_detailed(&image, backend, base.as_ref(), &config, RunOptions::default())
        .context("running saliency enhancement")?;

    ensure_dir(job.out)?;
    let mut outputs = BTreeMap::new();
    let png = job.out.join("saliency.png");
    run.saliency.save_png(&png)?;
    outputs.insert("saliency_png".to_owned(), png);
    let raw = job.out.join("saliency.f32");
    run.saliency.save_f32(&raw)?;
    outputs.insert("saliency_f32".to_owned(), raw);
    let ov = job.out.join("overlay.png");
    save_rgb(&ov, &overlay(&image, &run.saliency, job.alpha)?)?;
    outputs.insert("overlay_png".to_owned(), ov);
    let manifest_path = job.out.join("manifest.json");
    outputs.insert("manifest".to_owned(), manifest_path.clone());

    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        command: job.command.to_owned(),
        image: job.image.to_path_buf(),
        dims: image.dims(),
        class,
        model: job.model.record.clone(),
        config,
        base: job.base,
        seed: job.seed,
        raster: "f32le row-major".to_owned(),
        overlay_alpha: job.alpha,
        patches: PatchRow::table(&run),
        timings: run.timings,
        outputs,
    };
    write_json(&manifest_path, &manifest)?;
    Ok(manifest)
}

pub fn run(args: SaliencyArgs) -> anyhow::Result<()> {
    let model = args.model.load()?;
    let config = args
        .sess
        .resolve(SessConfig::qualitative(), model.backend.input_size())?;
    let base = args.method.resolve(config.max_batch)?;
    let m = execute(Job {
        image: &args.image,
        model: &model,
        class: args.class,
        config,
        base,
        seed: args.method.seed,
        alpha: args.alpha,
        out: &args.out,
        command: "saliency",
    })?;
    println!(
        "class {} | {} patches, {} kept | wrote {}",
        m.class,
        m.patches.len(),
        m.patches.iter().filter(|p| p.kept).count(),
        args.out.display()
    );
    Ok(())
}

pub fn rerun(args: RerunArgs) -> anyhow::Result<()> {
    let prior = RunManifest::load(&args.manifest)?;
    let model = load_backend(&prior.model.spec, prior.model.meta.as_deref())?;
    if model.record.sha256 != prior.model.sha256 {
        return Err(SessError::invalid(format!(
            "model {} changed since the recorded run (sha256 {} != {})",
            prior.model.spec, model.record.sha256, prior.model.sha256
        ))
        .into());
    }
    let out = args.out.unwrap_or_else(|| {
        args.manifest
            .parent()
            .unwrap_or(Path::new("."))
            .join("rerun")
    });
    let m = execute(Job {
        image: &prior.image,
        model: &model,
        class: Some(prior.class),
        config: prior.config,
        base: prior.base,
        seed: prior.seed,
        alpha: prior.overlay_alpha,
        out: &out,
        command: "rerun",
    })?;
    println!("class {} | wrote {}", m.class, out.display());
    Ok(())
}
