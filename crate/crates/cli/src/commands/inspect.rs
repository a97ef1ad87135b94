use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use sess_core::pipeline::{dump_patch_grid, run_sess_detailed, RunOptions};
use sess_core::SessConfig;

use crate::opts::{ensure_dir, load_image, top1, write_text, MethodOpts, ModelOpts, SessOpts};

#[derive(Debug, Args)]
pub struct InspectArgs {
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
    /// Output directory for montage.png and scores.csv.
    #[arg(long, default_value = "sess_inspect")]
    pub out: PathBuf,
}

pub fn run(args: InspectArgs) -> anyhow::Result<()> {
    let model = args.model.load()?;
    let backend = model.backend.as_ref();
    let mut cfg = args
        .sess
        .resolve(SessConfig::qualitative(), backend.input_size())?;
    let image = load_image(&args.image)?;
    cfg.target_class = match args.class {
        Some(c) => c,
        None => top1(backend, &image)?,
    };
    let base = args
        .method
        .resolve(cfg.max_batch)?
        .build()
        .context("configuring base method")?;
    let run = run_sess_detailed(&image, backend, base.as_ref(), &cfg, RunOptions { keep_layers: true })
        .context("running saliency enhancement")?;
    let specs = run.kept_specs();
    let stack = run.stack.as_ref().expect("layers were requested");
    let montage = dump_patch_grid(stack, &specs).context("rendering montage")?;

    ensure_dir(&args.out)?;
    montage.save_png(args.out.join("montage.png"))?;
    let mut csv = String::from("index,scale,scaled_h,scaled_w,x,y,w,h,score\n");
    for &i in &run.kept {
        let s = &run.specs[i];
        csv += &format!(
            "{i},{},{},{},{},{},{},{},{}\n",
            s.scale_index,
            s.scaled_dims.0,
            s.scaled_dims.1,
            s.origin.0,
            s.origin.1,
            s.size.0,
            s.size.1,
            run.scores[i]
        );
    }
    write_text(&args.out.join("scores.csv"), &csv)?;
    println!(
        "class {} | {} of {} patches | wrote {}",
        cfg.target_class,
        run.kept.len(),
        run.specs.len(),
        args.out.display()
    );
    Ok(())
}
