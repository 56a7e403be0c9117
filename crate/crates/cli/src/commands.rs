use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use prostapipe::arch::ArchSpec;
use prostapipe::data::{apply_preprocessing, load_manifest, split_by_patient, Label, Manifest, Sample, Split};
use prostapipe::metrics::{auc, roc_curve};
use prostapipe::pipeline::{
    compare_models, evaluate, init_from_checkpoint, parse_predictions, pretrain_proxy, synth_dataset, train, Dataset,
    ExperimentData, ModelRun, SynthTask, TrainConfig,
};
use prostapipe::transfer::{load_checkpoint, save_checkpoint};

use crate::config::{spec_for, RunConfig};
use crate::svg::roc_svg;
use crate::{Cli, CliError, Command, SEED_ENV};

struct Ctx<'a> {
    cfg: RunConfig,
    out: PathBuf,
    workers: usize,
    stdout: &'a mut (dyn Write + Send),
}

impl Ctx<'_> {
    fn emit(&mut self, path: &Path) -> Result<(), CliError> {
        writeln!(self.stdout, "{}", path.display()).map_err(|e| CliError::Data(format!("stdout: {e}")))
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.emit(&path)?;
        Ok(path)
    }

    fn prep(&self) -> Option<(&prostapipe::imgproc::MedianParams, &prostapipe::imgproc::ClaheParams)> {
        self.cfg.preprocess_on_load.then_some((&self.cfg.train.median, &self.cfg.train.clahe))
    }
}

fn seed_from_env() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn require(flag: Option<&PathBuf>, config: Option<&PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or(config)
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("--{name} is required (or set it under [paths] in the config)")))
}

pub(crate) fn run(cli: &Cli, stdout: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let g = &cli.global;
    let cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = match g.seed.or(cfg.seed) {
        Some(s) => s,
        None => seed_from_env()?.unwrap_or(0),
    };
    let cfg = cfg.with_seed(seed);
    let out = g.out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))?;
    fs::create_dir_all(&out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    if g.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", g.workers)))?;
    let mut ctx = Ctx { cfg, out, workers: g.workers, stdout };
    pool.install(|| match &cli.command {
        Command::Synth(a) => synth(&mut ctx, a.count, a.size, a.patients, a.noise),
        Command::Preprocess(a) => preprocess(&mut ctx, a.manifest.as_ref()),
        Command::Split(a) => split(&mut ctx, a.manifest.as_ref()).map(|_| ()),
        Command::Pretrain => pretrain(&mut ctx),
        Command::Train(a) => train_cmd(&mut ctx, a.manifest.as_ref(), a.init.as_ref()),
        Command::Evaluate(a) => evaluate_cmd(&mut ctx, a.checkpoint.as_ref(), a.manifest.as_ref()),
        Command::Roc(a) => roc(&mut ctx, a.predictions.as_ref(), a.svg),
        Command::Compare(a) => compare(&mut ctx, a.manifest.as_ref(), a.sort_by_auc, a.pretrain),
    })
}

fn synth(ctx: &mut Ctx, count: usize, size: usize, patients: usize, noise: f64) -> Result<(), CliError> {
    if count == 0 || size < 4 || patients == 0 {
        return Err(CliError::Usage("synth needs --count >= 1, --size >= 4 and --patients >= 1".into()));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(CliError::Usage(format!("--noise must be in [0, 1], got {noise}")));
    }
    let (images, labels) = synth_dataset(SynthTask::CircleVsRect, count, size, noise, ctx.cfg.train.seed);
    let dir = absolute(&ctx.out.join("images"));
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut samples = Vec::with_capacity(count);
    for (i, (img, label)) in images.iter().zip(labels).enumerate() {
        let path = dir.join(format!("{i:05}.png"));
        img.write(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        samples.push(Sample { path, patient_id: format!("S{:03}", i % patients), label: Label::from_class(label) });
    }
    let manifest = Manifest::new(samples)?;
    let path = ctx.out.join("manifest.csv");
    manifest.write(&path)?;
    let images = ctx.out.join("images");
    ctx.emit(&images)?;
    ctx.emit(&path)
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn preprocess(ctx: &mut Ctx, manifest: Option<&PathBuf>) -> Result<(), CliError> {
    let path = require(manifest, ctx.cfg.paths.manifest.as_ref(), "manifest")?;
    let m = load_manifest(&path)?;
    let done = apply_preprocessing(&m, &ctx.cfg.train.median, &ctx.cfg.train.clahe, &ctx.out)?;
    let images = ctx.out.join("images");
    ctx.emit(&images)?;
    let manifest_path = ctx.out.join("manifest.csv");
    ctx.emit(&manifest_path)?;
    if !done.failures.is_empty() {
        for f in &done.failures {
            eprintln!("skipped: {f}");
        }
        return Err(CliError::Data(format!(
            "{} of {} images could not be processed; {} written",
            done.failures.len(),
            m.len(),
            done.manifest.len()
        )));
    }
    Ok(())
}

fn split(ctx: &mut Ctx, manifest: Option<&PathBuf>) -> Result<Split, CliError> {
    let path = require(manifest, ctx.cfg.paths.manifest.as_ref(), "manifest")?;
    let m = load_manifest(&path)?;
    let s = split_by_patient(&m, &ctx.cfg.train.split)?;
    let dir = ctx.out.join("split");
    for p in s.write(&dir)? {
        ctx.emit(&p)?;
    }
    Ok(s)
}

fn pretrain(ctx: &mut Ctx) -> Result<(), CliError> {
    let (model, history) = pretrain_proxy(&ctx.cfg.train.spec, ctx.cfg.train.seed, &ctx.cfg.proxy)?;
    let path = ctx.out.join("proxy.ckpt");
    save_checkpoint(&model, history.epochs.len() as u64, &path)?;
    ctx.emit(&path)?;
    ctx.write("proxy_history.csv", history.to_csv())?;
    Ok(())
}

fn dataset(ctx: &Ctx, m: &Manifest, spec: &ArchSpec, part: &'static str) -> Result<Option<Dataset>, CliError> {
    if m.is_empty() {
        return Ok(None);
    }
    log::info!("loading {} {part} images", m.len());
    Ok(Some(Dataset::from_manifest(m, spec, ctx.prep())?))
}

fn train_cmd(ctx: &mut Ctx, manifest: Option<&PathBuf>, init: Option<&PathBuf>) -> Result<(), CliError> {
    let s = split(ctx, manifest)?;
    let cfg = ctx.cfg.train.clone();
    let train_set = dataset(ctx, &s.train, &cfg.spec, "train")?.ok_or(CliError::Data("the train split is empty".into()))?;
    let val = dataset(ctx, &s.val, &cfg.spec, "val")?;
    let init = match init.or(ctx.cfg.paths.init.as_ref()) {
        Some(p) => Some(init_from_checkpoint(p, &cfg.spec, cfg.seed)?),
        None => None,
    };
    let (model, history) = train(&cfg, &train_set, val.as_ref(), init)?;
    let path = ctx.out.join("model.ckpt");
    save_checkpoint(&model, history.epochs.len() as u64, &path)?;
    ctx.emit(&path)?;
    ctx.write("history.csv", history.to_csv())?;
    ctx.write("config_digest.txt", format!("digest={:016x}\n{}", cfg.digest(), cfg.digest_text()))?;
    Ok(())
}

fn evaluate_cmd(ctx: &mut Ctx, checkpoint: Option<&PathBuf>, manifest: Option<&PathBuf>) -> Result<(), CliError> {
    let ckpt = require(checkpoint, ctx.cfg.paths.checkpoint.as_ref(), "checkpoint")?;
    let mpath = require(manifest, ctx.cfg.paths.manifest.as_ref(), "manifest")?;
    let (mut model, _) = load_checkpoint::<f32>(&ckpt, &ctx.cfg.train.spec)?;
    let m = load_manifest(&mpath)?;
    let test = dataset(ctx, &m, &model.spec.clone(), "test")?.ok_or(CliError::Data("the manifest is empty".into()))?;
    let eval = evaluate(&mut model, &test)?;
    ctx.write("metrics.txt", eval.report.to_key_values())?;
    ctx.write("predictions.csv", eval.predictions_csv())?;
    match &eval.roc {
        Some(curve) => {
            ctx.write("roc.csv", curve.to_csv())?;
        }
        None => eprintln!("warning: only one class present; ROC curve omitted"),
    }
    Ok(())
}

fn roc(ctx: &mut Ctx, predictions: Option<&PathBuf>, svg: bool) -> Result<(), CliError> {
    let path = require(predictions, ctx.cfg.paths.predictions.as_ref(), "predictions")?;
    let text = fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let preds = parse_predictions(&text)?;
    let labels: Vec<bool> = preds.iter().map(|p| p.label).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let curve = roc_curve(&labels, &scores).map_err(|e| CliError::Data(e.to_string()))?;
    ctx.write("roc.csv", curve.to_csv())?;
    if svg {
        ctx.write("roc.svg", roc_svg(&curve, auc(&curve)))?;
    }
    Ok(())
}

fn compare(ctx: &mut Ctx, manifest: Option<&PathBuf>, sort_by_auc: bool, pretrain: bool) -> Result<(), CliError> {
    let s = split(ctx, manifest)?;
    let base: TrainConfig = ctx.cfg.train.clone();
    let data = ExperimentData {
        train: dataset(ctx, &s.train, &base.spec, "train")?.ok_or(CliError::Data("the train split is empty".into()))?,
        val: dataset(ctx, &s.val, &base.spec, "val")?,
        test: dataset(ctx, &s.test, &base.spec, "test")?.ok_or(CliError::Data("the test split is empty".into()))?,
    };
    let pretrain = pretrain || ctx.cfg.compare.pretrain;
    let runs: Vec<ModelRun> = ctx
        .cfg
        .compare
        .models
        .iter()
        .map(|&v| ModelRun {
            name: v.name().to_string(),
            cfg: TrainConfig { spec: spec_for(&base.spec, v), ..base.clone() },
            proxy: pretrain.then(|| ctx.cfg.proxy.clone()),
        })
        .collect();
    let report = compare_models(&runs, &data, ctx.workers)?;
    let sort = sort_by_auc || ctx.cfg.compare.sort_by_auc;
    for p in report.write(&ctx.out, sort)? {
        ctx.emit(&p)?;
    }
    let failed: Vec<&str> = report.results.iter().filter(|r| r.outcome.is_err()).map(|r| r.name.as_str()).collect();
    if failed.len() == report.results.len() {
        return Err(CliError::Training(format!("every model failed: {}", failed.join(", "))));
    }
    for name in failed {
        eprintln!("warning: {name} failed; see report.txt");
    }
    Ok(())
}
