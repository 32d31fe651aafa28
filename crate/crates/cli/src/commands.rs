use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use xdcert::certify::{certify_points, read_records, write_records, Certifiable, CertifyOptions};
use xdcert::data::{self, load_dataset, make_cmnist, make_scm, save_dataset, split, EnvDataset};
use xdcert::eval::{
    self, mean_curves, render_svg, summarize, write_curve_csv, write_summary_csv, EvalSummary, RunMeta,
};
use xdcert::nets::{load_checkpoint, save_checkpoint};
use xdcert::numerics::Rng;
use xdcert::training::{init_model, train, Variant};
use xdcert::ModelF64;

use crate::config::{Generator, RunConfig};
use crate::manifest::Manifest;
use crate::CliError;

pub const DATASET_FILE: &str = "dataset.bin";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const REPORT_FILE: &str = "train_report.csv";
pub const RECORDS_FILE: &str = "records.csv";

/// Options shared by every subcommand.
pub struct Context {
    pub config: RunConfig,
    pub config_bytes: Vec<u8>,
    pub out: PathBuf,
    pub workers: usize,
    pub seed_override: Option<u64>,
}

impl Context {
    fn manifest(&self, command: &str) -> Manifest {
        Manifest::new(command, &self.config_bytes, self.seed_override)
    }
}

fn io_err(what: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("{what} {}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_err("cannot create", path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| io_err("cannot write", path, e))
}

/// Keeps the exit class of `e` but names the file it came from.
fn with_path(path: &Path, e: xdcert::Error) -> CliError {
    match CliError::from(e) {
        CliError::Validation(m) => CliError::validation(format!("{}: {m}", path.display())),
        CliError::Runtime(m) => CliError::runtime(format!("{}: {m}", path.display())),
    }
}

pub fn generate(config: &RunConfig) -> Result<EnvDataset, CliError> {
    let d = &config.dataset;
    let mut rng = Rng::seed(d.seed);
    let ds = match d.generator {
        Generator::Scm => {
            let spec = data::ScmSpec::from_params(&d.scm, &d.strengths, d.label_noise, d.seed)?;
            make_scm(&spec, d.n_per_env, &mut rng)?
        }
        Generator::Cmnist => {
            let (Some(images), Some(labels)) = (&d.paths.images, &d.paths.labels) else {
                return Err(CliError::validation("missing source files"));
            };
            let mut pixels = data::read_idx_images(images).map_err(|e| with_path(images, e))?;
            let mut digits = data::read_idx_labels(labels).map_err(|e| with_path(labels, e))?;
            if let Some(limit) = d.limit {
                let keep: Vec<usize> = (0..limit.min(pixels.rows())).collect();
                pixels = pixels.select_rows(&keep);
                digits.truncate(keep.len());
            }
            make_cmnist(&pixels, &digits, &d.strengths, d.label_noise, &mut rng)?
        }
    };
    Ok(ds)
}

pub fn gen_data(ctx: &Context) -> Result<(), CliError> {
    create_dir(&ctx.out)?;
    let ds = generate(&ctx.config)?;
    let path = ctx.out.join(DATASET_FILE);
    save_dataset(&path, &ds)?;
    for env in &ds.environments {
        println!(
            "environment {}: {} examples, target strength {:.3}, realized {:.4}",
            env.domain_id,
            env.len(),
            env.spurious_strength,
            env.realized_strength()
        );
    }
    let mut m = ctx.manifest("gen-data");
    if let (Some(images), Some(labels)) = (&ctx.config.dataset.paths.images, &ctx.config.dataset.paths.labels) {
        if ctx.config.dataset.generator == Generator::Cmnist {
            m.input("images", images)?;
            m.input("labels", labels)?;
        }
    }
    m.artifact("dataset", &path, &ctx.out)?;
    m.write(&ctx.out)
}

fn load_or_generate(ctx: &Context, dataset: Option<&Path>, manifest: &mut Manifest) -> Result<EnvDataset, CliError> {
    match dataset {
        Some(path) => {
            manifest.input("dataset", path)?;
            load_dataset(path).map_err(|e| with_path(path, e))
        }
        None => generate(&ctx.config),
    }
}

fn check_dims(config: &RunConfig, ds: &EnvDataset) -> Result<(), CliError> {
    let expected = config.input_map().in_dim();
    if ds.dim() != expected {
        return Err(CliError::validation(format!(
            "dataset has {} features but the model section expects {expected}",
            ds.dim()
        )));
    }
    if ds.environments.len() != config.dataset.strengths.len() {
        return Err(CliError::validation(format!(
            "dataset has {} environments, config lists {}",
            ds.environments.len(),
            config.dataset.strengths.len()
        )));
    }
    Ok(())
}

pub fn train_cmd(ctx: &Context, dataset: Option<&Path>) -> Result<(), CliError> {
    create_dir(&ctx.out)?;
    let mut m = ctx.manifest("train");
    let ds = load_or_generate(ctx, dataset, &mut m)?;
    check_dims(&ctx.config, &ds)?;
    let (train_ids, test_id) = ctx.config.env_split();
    let (train_set, _) = split(&ds, &train_ids, test_id)?;
    let variant = ctx.config.model.variant;
    let cfg = ctx.config.train_config(variant);
    let init: ModelF64 = init_model(&ctx.config.model_spec(), variant, cfg.seed)?;
    let (model, report) = train(&init, &train_set, &cfg)?;
    let ckpt = ctx.out.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &model)?;
    let report_path = ctx.out.join(REPORT_FILE);
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_file(&report_path, &buf)?;
    for (id, acc) in report.env_ids.iter().zip(&report.final_accuracy) {
        eprintln!("environment {id}: training accuracy {acc:.4}");
    }
    m.artifact("checkpoint", &ckpt, &ctx.out)?;
    m.artifact("train_report", &report_path, &ctx.out)?;
    m.write(&ctx.out)
}

fn meta_path(records: &Path) -> PathBuf {
    records.with_extension("meta.toml")
}

fn progress_printer() -> impl Fn(usize, usize) + Sync {
    let start = Instant::now();
    let last = Mutex::new(0usize);
    move |done: usize, total: usize| {
        let step = (total / 20).max(1);
        let mut last = last.lock().unwrap_or_else(|p| p.into_inner());
        if done == total || done >= *last + step {
            *last = done;
            let elapsed = start.elapsed().as_secs_f64();
            let eta = elapsed / done as f64 * (total - done) as f64;
            eprintln!("certified {done}/{total} points, {elapsed:.1}s elapsed, eta {eta:.1}s");
        }
    }
}

/// Certifies the test environment with `model` into `dir`.
fn certify_into(
    ctx: &Context,
    config: &RunConfig,
    model: &ModelF64,
    ds: &EnvDataset,
    variant: Variant,
    seed: u64,
    dir: &Path,
) -> Result<(Vec<xdcert::certify::CertificationRecord>, RunMeta), CliError> {
    let (train_ids, test_id) = config.env_split();
    let (_, test_set) = split(ds, &train_ids, test_id)?;
    let test = &test_set.environments[0];
    let indices = eval::subsample_indices(test.len(), config.certify.subsample, seed);
    let points = test.subset(&indices);
    let smoothing = config.smoothing(variant);
    let options = CertifyOptions {
        seed,
        workers: ctx.workers,
        record_time: config.certify.record_time,
    };
    let base = Certifiable::new(model)?;
    let progress = progress_printer();
    let records = certify_points(
        &base,
        &points.x,
        &points.y,
        &indices,
        &smoothing,
        &options,
        Some(&progress),
    )?;
    let path = dir.join(RECORDS_FILE);
    let mut buf = Vec::new();
    write_records(&mut buf, &records)?;
    write_file(&path, &buf)?;
    let meta = RunMeta {
        variant: variant.name().to_string(),
        sigma: smoothing.sigma,
        lambda: if variant.uses_penalty() {
            config.train.lambda
        } else {
            0.0
        },
        seed,
    };
    let text = toml::to_string(&meta).map_err(|e| CliError::runtime(format!("records metadata: {e}")))?;
    write_file(&meta_path(&path), text.as_bytes())?;
    Ok((records, meta))
}

pub fn certify_cmd(ctx: &Context, checkpoint: Option<&Path>, dataset: Option<&Path>) -> Result<(), CliError> {
    create_dir(&ctx.out)?;
    let mut m = ctx.manifest("certify");
    let ckpt = checkpoint.map_or_else(|| ctx.out.join(CHECKPOINT_FILE), Path::to_path_buf);
    let model: ModelF64 = load_checkpoint(&ckpt).map_err(|e| with_path(&ckpt, e))?;
    m.input("checkpoint", &ckpt)?;
    let ds = load_or_generate(ctx, dataset, &mut m)?;
    check_dims(&ctx.config, &ds)?;
    if model.input_dim() != ds.dim() {
        return Err(CliError::validation(format!(
            "checkpoint expects {} features, dataset has {}",
            model.input_dim(),
            ds.dim()
        )));
    }
    let variant = ctx.config.model.variant;
    let seed = ctx.config.train.seed;
    let (records, _) = certify_into(ctx, &ctx.config, &model, &ds, variant, seed, &ctx.out)?;
    let abstained = records.iter().filter(|r| r.prediction.is_none()).count();
    eprintln!("{} records, {abstained} abstentions", records.len());
    let path = ctx.out.join(RECORDS_FILE);
    m.artifact("records", &path, &ctx.out)?;
    m.artifact("records_meta", &meta_path(&path), &ctx.out)?;
    m.write(&ctx.out)
}

fn read_meta(records: &Path, config: Option<&RunConfig>) -> Result<RunMeta, CliError> {
    let path = meta_path(records);
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| io_err("cannot read", &path, e))?;
        return toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())));
    }
    let variant = records
        .file_stem()
        .map_or_else(|| "records".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(RunMeta {
        variant,
        sigma: config.map_or(f64::NAN, |c| c.certify.sigma),
        lambda: config.map_or(f64::NAN, |c| c.train.lambda),
        seed: config.map_or(0, |c| c.train.seed),
    })
}

fn write_outputs(out: &Path, summaries: &[EvalSummary], m: &mut Manifest) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, summaries)?;
    let summary = out.join("summary.csv");
    write_file(&summary, &buf)?;
    let curves = mean_curves(summaries);
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &curves)?;
    let curve = out.join("curve.csv");
    write_file(&curve, &buf)?;
    let svg = out.join("curve.svg");
    write_file(&svg, render_svg(&curves).as_bytes())?;
    m.artifact("summary", &summary, out)?;
    m.artifact("curve", &curve, out)?;
    m.artifact("plot", &svg, out)?;
    Ok(())
}

pub fn evaluate_cmd(
    out: &Path,
    config: Option<(&RunConfig, &[u8])>,
    records: &[PathBuf],
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    if records.is_empty() {
        return Err(CliError::validation("evaluate needs at least one records file"));
    }
    create_dir(out)?;
    let grid = config.map_or_else(eval::RadiusGrid::standard, |(c, _)| c.eval.grid.clone());
    let mut m = Manifest::new("evaluate", config.map_or(&[][..], |(_, b)| b), seed_override);
    let mut summaries = Vec::with_capacity(records.len());
    for path in records {
        let file = std::fs::File::open(path).map_err(|e| io_err("cannot open", path, e))?;
        let recs = read_records(file).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        if recs.is_empty() {
            return Err(CliError::validation(format!("{}: no records", path.display())));
        }
        let meta = read_meta(path, config.map(|(c, _)| c))?;
        let s = summarize(&recs, &grid, &meta)?;
        println!(
            "{}: {} points, acr {:.4}, clean accuracy {:.4}, abstain rate {:.4}",
            s.variant, s.points, s.acr, s.clean_accuracy, s.abstain_rate
        );
        summaries.push(s);
        m.input("records", path)?;
    }
    write_outputs(out, &summaries, &mut m)?;
    m.write(out)
}

/// One child run of a sweep: a configuration tweak, a label and a variant.
struct Cell {
    label: String,
    variant: Variant,
    config: RunConfig,
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

pub fn sweep_cmd(ctx: &Context, dataset: Option<&Path>) -> Result<(), CliError> {
    create_dir(&ctx.out)?;
    let mut m = ctx.manifest("sweep");
    let ds = load_or_generate(ctx, dataset, &mut m)?;
    check_dims(&ctx.config, &ds)?;
    let mut base = ctx.config.clone();
    base.certify.n = base.sweep.n;
    let base = &base;
    let mut cells = Vec::new();
    for &l in &base.sweep.lambda {
        let mut c = base.clone();
        c.train.lambda = l;
        cells.push(Cell {
            label: format!("lambda={}", fmt_value(l)),
            variant: Variant::Full,
            config: c,
        });
    }
    for &s in &base.sweep.sigma {
        let mut c = base.clone();
        c.certify.sigma = s;
        c.train.sigma_train = s;
        cells.push(Cell {
            label: format!("sigma={}", fmt_value(s)),
            variant: Variant::Full,
            config: c,
        });
    }
    if cells.is_empty() {
        for &v in &base.sweep.variants {
            cells.push(Cell {
                label: v.name().to_string(),
                variant: v,
                config: base.clone(),
            });
        }
    }
    if cells.is_empty() {
        return Err(CliError::validation("sweep has nothing to run"));
    }
    let (train_ids, test_id) = base.env_split();
    let (train_set, _) = split(&ds, &train_ids, test_id)?;
    let mut summaries = Vec::new();
    for cell in &cells {
        for &seed in &base.eval.seeds {
            let dir = ctx.out.join("runs").join(&cell.label).join(format!("seed={seed}"));
            create_dir(&dir)?;
            eprintln!("run {} seed {seed}", cell.label);
            let cfg = xdcert::training::TrainConfig {
                seed,
                ..cell.config.train_config(cell.variant)
            };
            let init: ModelF64 = init_model(&cell.config.model_spec(), cell.variant, seed)?;
            let (model, report) = train(&init, &train_set, &cfg)?;
            let ckpt = dir.join(CHECKPOINT_FILE);
            save_checkpoint(&ckpt, &model)?;
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            write_file(&dir.join(REPORT_FILE), &buf)?;
            let (records, mut meta) = certify_into(ctx, &cell.config, &model, &ds, cell.variant, seed, &dir)?;
            meta.variant = cell.label.clone();
            summaries.push(summarize(&records, &base.eval.grid, &meta)?);
            m.artifact("checkpoint", &ckpt, &ctx.out)?;
            m.artifact("records", &dir.join(RECORDS_FILE), &ctx.out)?;
        }
    }
    for c in mean_curves(&summaries) {
        let acr: Vec<f64> = summaries
            .iter()
            .filter(|s| s.variant == c.label)
            .map(|s| s.acr)
            .collect();
        println!(
            "{}: mean acr {:.4} over {} seeds, clean accuracy {:.4}",
            c.label,
            acr.iter().sum::<f64>() / acr.len() as f64,
            acr.len(),
            c.accuracy[0]
        );
    }
    write_outputs(&ctx.out, &summaries, &mut m)?;
    m.write(&ctx.out)
}
