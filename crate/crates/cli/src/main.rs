use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use offroad_seg::augmentation::preview_grid_with_gutter;
use offroad_seg::evaluation::{render_report, ReportFormat};
use offroad_seg::pipeline::{
    evaluate_report, load_dataset, parse_config, train, Checkpoint, DiskDataset, Predictor,
    SampleSource,
};
use offroad_seg::{Image, Mapping, IGNORE_ID};

#[derive(Parser)]
#[command(name = "offroad-seg", version, about = "Off-road semantic segmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file plus `key=value` overrides.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dotted overrides, e.g. `schedule.total_iters=96000`.
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint on a dataset split and write report.json/report.md.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        split: Split,
        #[arg(long)]
        use_ema: bool,
        /// Dataset roots replacing the ones stored in the checkpoint config.
        #[arg(long = "root")]
        roots: Vec<PathBuf>,
        /// Report directory; defaults to `<output_dir>/eval_<split>`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write predicted masks (class ids and colorized).
        #[arg(long)]
        masks: bool,
    },
    /// Predict masks for every image in a directory.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        use_ema: bool,
    },
    /// Render the photometric distortion preview grid for one image.
    Preview {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Config whose `augment.photometric` section sets the panel amounts.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = offroad_seg::augmentation::DEFAULT_GUTTER)]
        gutter: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Val,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train { config, overrides } => cmd_train(config.as_deref(), &overrides),
        Command::Eval {
            checkpoint,
            split,
            use_ema,
            roots,
            output,
            masks,
        } => cmd_eval(&checkpoint, split, use_ema, &roots, output, masks),
        Command::Predict {
            checkpoint,
            input,
            output,
            use_ema,
        } => cmd_predict(&checkpoint, &input, &output, use_ema),
        Command::Preview {
            image,
            output,
            config,
            gutter,
        } => cmd_preview(&image, &output, config.as_deref(), gutter),
    }
}

fn cmd_train(config: Option<&Path>, overrides: &[String]) -> Result<()> {
    let cfg = parse_config(config, overrides)?;
    let manifest = train(&cfg)?;
    println!(
        "trained iterations {}..{}; manifest {}",
        manifest.start_iteration,
        manifest.end_iteration,
        Path::new(&cfg.output_dir).join("manifest.json").display()
    );
    if let Some(last) = manifest.metrics.last() {
        match last.miou {
            Some(m) => println!("last EMA validation mIoU {:.2}", m * 100.0),
            None => println!("last EMA validation mIoU n/a"),
        }
    }
    Ok(())
}

fn cmd_eval(
    ckpt_path: &Path,
    split: Split,
    use_ema: bool,
    roots: &[PathBuf],
    output: Option<PathBuf>,
    masks: bool,
) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let cfg = &ckpt.config;
    let (name, cfg_roots) = match split {
        Split::Train => ("train", &cfg.data.train_roots),
        Split::Val => ("val", &cfg.data.val_roots),
    };
    let roots: Vec<PathBuf> = if roots.is_empty() {
        cfg_roots.iter().map(PathBuf::from).collect()
    } else {
        roots.to_vec()
    };
    if roots.is_empty() {
        bail!("no dataset roots for split `{name}`; pass --root");
    }
    let mapping = if !cfg.data.labels_raw {
        None
    } else if cfg.data.mapping.is_empty() {
        Some(Mapping::goose_default())
    } else {
        Some(Mapping::load(&cfg.data.mapping)?)
    };
    let ds = DiskDataset::new(load_dataset(&roots)?, mapping);
    let predictor = Predictor::from_checkpoint(&ckpt, use_ema)?;
    let model = format!(
        "{} @ {}{}",
        ckpt_path.file_name().and_then(|s| s.to_str()).unwrap_or("checkpoint"),
        ckpt.iteration,
        if use_ema { " (EMA)" } else { "" }
    );
    let report = evaluate_report(&predictor, &ds, IGNORE_ID, &model, &cfg.output_dir)?;

    let out = output.unwrap_or_else(|| Path::new(&cfg.output_dir).join(format!("eval_{name}")));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let md = render_report(&report, ReportFormat::Markdown)?;
    std::fs::write(out.join("report.json"), render_report(&report, ReportFormat::Json)?)?;
    std::fs::write(out.join("report.md"), &md)?;
    print!("{md}");

    if masks {
        let dir = out.join("masks");
        std::fs::create_dir_all(&dir)?;
        for i in 0..ds.len() {
            let Ok((img, _)) = ds.load(i) else { continue };
            write_masks(&predictor, &img, &dir, &ds.name(i), &cfg.eval.palette)?;
        }
    }
    info!("reports written to {}", out.display());
    Ok(())
}

fn cmd_predict(ckpt_path: &Path, input: &Path, output: &Path, use_ema: bool) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let predictor = Predictor::from_checkpoint(&ckpt, use_ema)?;
    std::fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no images in {}", input.display());
    }
    for path in &paths {
        let img = Image::load(path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        write_masks(&predictor, &img, output, stem, &ckpt.config.eval.palette)?;
    }
    println!("wrote {} masks to {}", paths.len(), output.display());
    Ok(())
}

fn write_masks(
    predictor: &Predictor,
    img: &Image,
    dir: &Path,
    stem: &str,
    palette: &[[u8; 3]],
) -> Result<()> {
    let mask = predictor.predict(img)?;
    mask.save_png(dir.join(format!("{stem}.png")))?;
    let color = dir.join(format!("{stem}_color.png"));
    mask.colorize(palette)
        .save(&color)
        .with_context(|| format!("writing {}", color.display()))?;
    Ok(())
}

fn cmd_preview(image: &Path, output: &Path, config: Option<&Path>, gutter: usize) -> Result<()> {
    let photometric = match config {
        Some(p) => parse_config(Some(p), &[])?.augment.photometric,
        None => Default::default(),
    };
    let img = Image::load(image)?;
    let grid = preview_grid_with_gutter(&img, &photometric, gutter)?;
    grid.save_png(output)?;
    println!("wrote {}", output.display());
    Ok(())
}
