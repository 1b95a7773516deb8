//! Pipeline stages. Each stage reads its inputs from the output directory,
//! writes its artifacts there, and is a pure function of the config and
//! those inputs.
//!
//! | stage     | reads                                   | writes                                 |
//! |-----------|-----------------------------------------|----------------------------------------|
//! | gen-data  | config                                  | `data.lds`                             |
//! | train-ref | `data.lds`                              | `reference.dmc`, `reference_loss.csv`  |
//! | prune     | `data.lds`                              | `encoder.enc`, `scores.csv`, `coreset.csv` |
//! | reweight  | `data.lds`, `coreset.csv`, `reference.dmc` | `weights.csv`, `trajectory.csv`     |
//! | train     | `data.lds`, `coreset.csv`, `weights.csv` | `model.dmc`, `loss.csv`               |
//! | sample    | `model.dmc`                             | `samples.lds`                          |
//! | eval      | `data.lds`, `samples.lds`, `encoder.enc` | `report.csv`, `plot.csv`, `plot.svg`  |

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use pruneweight_core::accounting::{speedup, training_steps, StepCount};
use pruneweight_core::dataset::{generate, subset, LabeledDataset};
use pruneweight_core::diffusion::{sample_labeled, train, DenoiserModel, TrainConfig, TrainReport};
use pruneweight_core::encoder::{pca_encoder, train_classifier, Encoder};
use pruneweight_core::metrics::{evaluate, EvalReport};
use pruneweight_core::numerics::kept_count;
use pruneweight_core::pruning::{
    score_gaussian, score_gaussian_per_class, score_moderate, select, select_uniform_random, Coreset, ScoreMethod,
};
use pruneweight_core::reweighting::{run_dro, ClassWeights, DroConfig};

use crate::config::{DatasetSource, EvalEncoder, PipelineConfig, PruneMethod};
use crate::error::{CliError, CliResult};
use crate::formats::{self, Checkpoint};
use crate::tables::{self, Provenance};

pub const DATA: &str = "data.lds";
pub const REFERENCE: &str = "reference.dmc";
pub const REFERENCE_LOSS: &str = "reference_loss.csv";
pub const ENCODER: &str = "encoder.enc";
pub const SCORES: &str = "scores.csv";
pub const CORESET: &str = "coreset.csv";
pub const WEIGHTS: &str = "weights.csv";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const MODEL: &str = "model.dmc";
pub const LOSS: &str = "loss.csv";
pub const SAMPLES: &str = "samples.lds";
pub const REPORT: &str = "report.csv";
pub const PLOT: &str = "plot.csv";
pub const PLOT_SVG: &str = "plot.svg";
pub const SPEEDUP: &str = "speedup.csv";

/// A validated config bound to an output directory.
pub struct Stage {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    hash: String,
}

impl Stage {
    /// `out` overrides `out_dir` from the config; `seed` overrides `seed`.
    pub fn new(mut cfg: PipelineConfig, out: Option<PathBuf>, seed: Option<u64>) -> CliResult<Self> {
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let out = out
            .or_else(|| cfg.out_dir.clone())
            .ok_or_else(|| CliError::config("no output directory: pass --out or set out_dir"))?;
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        let hash = cfg.hash();
        Ok(Self { cfg, out, hash })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn provenance(&self, stage: &str) -> Provenance {
        Provenance {
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
            stage: stage.to_string(),
        }
    }

    /// Path of a required input artifact, with a hint naming its producer.
    fn input(&self, name: &str, producer: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::config(format!(
                "missing input {} (run `{producer}` first)",
                p.display()
            )))
        }
    }

    fn data(&self) -> CliResult<LabeledDataset> {
        formats::load_dataset(&self.input(DATA, "gen-data")?)
    }

    fn coreset(&self, ds: &LabeledDataset) -> CliResult<Coreset> {
        let c = tables::read_coreset(&self.input(CORESET, "prune")?)?;
        if c.total != ds.len() || c.per_class_counts.len() != ds.classes() {
            return Err(CliError::data("coreset does not belong to this dataset"));
        }
        Ok(c)
    }

    fn checkpoint(&self, name: &str, producer: &str, ds: &LabeledDataset) -> CliResult<Checkpoint> {
        let ck = formats::load_checkpoint(&self.input(name, producer)?)?;
        let cfg = ck.model.config();
        if cfg.dim != ds.dim() || cfg.classes != ds.classes() {
            return Err(CliError::data(format!("{name} does not match the dataset shape")));
        }
        Ok(ck)
    }
}

pub fn gen_data(st: &Stage) -> CliResult<LabeledDataset> {
    let ds = match st.cfg.dataset_source()? {
        DatasetSource::Generate(spec) => generate(&spec)?,
        DatasetSource::File(p) => formats::load_dataset(&p)?,
    };
    ds.require_all_classes()?;
    formats::save_dataset(&st.path(DATA), &ds)?;
    println!(
        "gen-data: {} samples, {} classes, d = {}, counts {:?}",
        ds.len(),
        ds.classes(),
        ds.dim(),
        ds.class_counts()
    );
    Ok(ds)
}

fn fit_model(
    model_seed: u64,
    train_seed: u64,
    st: &Stage,
    data: &LabeledDataset,
    cfg: TrainConfig,
    full: Option<&LabeledDataset>,
) -> CliResult<(Checkpoint, TrainReport)> {
    let sched = st.cfg.schedule()?;
    let mut model = DenoiserModel::new(st.cfg.denoiser_config(data.dim(), data.classes()), model_seed)?;
    let cfg = TrainConfig { seed: train_seed, ..cfg };
    let report = train(&mut model, data, &cfg, full, &sched)?;
    Ok((
        Checkpoint {
            model,
            schedule: sched,
            epochs_trained: cfg.epochs,
        },
        report,
    ))
}

pub fn train_ref(st: &Stage) -> CliResult<Checkpoint> {
    let ds = st.data()?;
    let r = &st.cfg.reference;
    let cfg = TrainConfig {
        epochs: r.epochs,
        batch_size: r.batch_size,
        learning_rate: r.learning_rate,
        p_uncond: r.p_uncond,
        ..TrainConfig::default()
    };
    let started = Instant::now();
    let (ck, report) = fit_model(
        st.cfg.stage_seed("train-ref/init"),
        st.cfg.stage_seed("train-ref"),
        st,
        &ds,
        cfg,
        None,
    )?;
    formats::save_checkpoint(&st.path(REFERENCE), &ck)?;
    tables::write_loss(&st.path(REFERENCE_LOSS), &st.provenance("train-ref"), &report)?;
    println!(
        "train-ref: {} epochs, final loss {:.6}, {:.2}s",
        ck.epochs_trained,
        report.epoch_losses.last().map_or(f64::NAN, |l| l.1),
        started.elapsed().as_secs_f64()
    );
    Ok(ck)
}

fn build_encoder(st: &Stage, ds: &LabeledDataset) -> CliResult<Encoder> {
    if let Some(p) = &st.cfg.encoder.path {
        let enc = formats::load_encoder(p)?;
        if enc.input_dim() != ds.dim() {
            return Err(CliError::data(format!(
                "{}: encoder expects d = {}, dataset has d = {}",
                p.display(),
                enc.input_dim(),
                ds.dim()
            )));
        }
        return Ok(enc);
    }
    Ok(match st.cfg.encoder_kind()? {
        "pca" => Encoder::Pca(pca_encoder(ds, st.cfg.encoder.components.unwrap_or(ds.dim()))?),
        "classifier" => {
            let c = train_classifier(ds, &st.cfg.classifier_config())?;
            info!("classifier encoder: train accuracy {:.4}", c.train_accuracy());
            Encoder::Classifier(c)
        }
        _ => Encoder::identity(ds.dim()),
    })
}

pub fn prune(st: &Stage) -> CliResult<Coreset> {
    let ds = st.data()?;
    let encoder = build_encoder(st, &ds)?;
    formats::save_encoder(&st.path(ENCODER), &encoder)?;
    let ratio = st.cfg.prune.ratio;
    let coreset = match st.cfg.prune_method()? {
        PruneMethod::None => Coreset::full(&ds),
        PruneMethod::UniformRandom => select_uniform_random(&ds, ratio, st.cfg.stage_seed("prune"))?,
        PruneMethod::Score(method) => {
            let emb = encoder.embed(&ds)?;
            let table = match method {
                ScoreMethod::Gaussian => score_gaussian(&emb, st.cfg.prune.reg)?,
                ScoreMethod::GaussianPerClass => score_gaussian_per_class(&emb, ds.labels(), ds.classes(), st.cfg.prune.reg)?,
                ScoreMethod::ModerateDs => score_moderate(&emb, ds.labels(), ds.classes())?,
            };
            tables::write_scores(&st.path(SCORES), &st.provenance("prune"), &table, ds.labels())?;
            select(&table, ds.labels(), ds.classes(), ratio)?
        }
    };
    tables::write_coreset(&st.path(CORESET), &st.provenance("prune"), &coreset)?;
    println!(
        "prune: kept {} of {} ({}), per-class counts {:?}",
        coreset.len(),
        coreset.total,
        coreset.method,
        coreset.per_class_counts
    );
    Ok(coreset)
}

pub struct ReweightOutcome {
    pub weights: ClassWeights,
    pub clipped_fraction: f64,
}

pub fn reweight(st: &Stage) -> CliResult<ReweightOutcome> {
    let ds = st.data()?;
    let coreset = st.coreset(&ds)?;
    let sub = subset(&ds, &coreset.indices)?;
    if !sub.empty_classes.is_empty() {
        return Err(CliError::data(format!(
            "coreset has no samples of classes {:?}",
            sub.empty_classes
        )));
    }
    let prov = st.provenance("reweight");
    if !st.cfg.dro.enabled {
        let weights = ClassWeights::uniform(ds.classes());
        tables::write_weights(&st.path(WEIGHTS), &prov, &weights)?;
        tables::write_trajectory(&st.path(TRAJECTORY), &prov, ds.classes(), &[])?;
        println!("reweight: DRO off, uniform weights");
        return Ok(ReweightOutcome {
            weights,
            clipped_fraction: 0.0,
        });
    }
    let reference = st.checkpoint(REFERENCE, "train-ref", &ds)?;
    if reference.model.config() != &st.cfg.denoiser_config(ds.dim(), ds.classes()) {
        return Err(CliError::data("reference checkpoint architecture differs from the model config"));
    }
    let sched = st.cfg.schedule()?;
    if reference.schedule != sched {
        return Err(CliError::data("reference checkpoint schedule differs from the config"));
    }
    let proxy = DenoiserModel::new(
        st.cfg.denoiser_config(ds.dim(), ds.classes()),
        st.cfg.stage_seed("reweight/init"),
    )?;
    let d = &st.cfg.dro;
    let dro_cfg = DroConfig {
        eta: d.eta,
        smoothing: d.smoothing,
        epochs: st.cfg.dro_epochs(),
        batch_size: d.batch_size.unwrap_or(st.cfg.reference.batch_size),
        learning_rate: d.learning_rate.unwrap_or(st.cfg.reference.learning_rate),
        p_uncond: d.p_uncond.unwrap_or(st.cfg.reference.p_uncond),
        seed: st.cfg.stage_seed("reweight"),
    };
    let out = run_dro(&sub.dataset, &reference.model, proxy, &dro_cfg, &sched)?;
    tables::write_weights(&st.path(WEIGHTS), &prov, &out.weights)?;
    tables::write_trajectory(&st.path(TRAJECTORY), &prov, ds.classes(), &out.trajectory)?;
    let clipped = out.clipped_fraction();
    println!(
        "reweight: {} steps, alpha_bar {:?}, clipped-margin fraction {:.4}",
        out.trajectory.len(),
        out.weights.alpha(),
        clipped
    );
    Ok(ReweightOutcome {
        weights: out.weights,
        clipped_fraction: clipped,
    })
}

/// The training config of the `train` stage, before seeding.
pub fn train_config(st: &Stage, weights: Option<ClassWeights>) -> CliResult<TrainConfig> {
    let t = &st.cfg.train;
    Ok(TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        p_uncond: t.p_uncond,
        class_weights: weights,
        weight_mode: st.cfg.weight_mode()?,
        anneal_ratio: t.anneal_ratio,
        ..TrainConfig::default()
    })
}

pub fn train_stage(st: &Stage) -> CliResult<Checkpoint> {
    let ds = st.data()?;
    let coreset = st.coreset(&ds)?;
    let sub = subset(&ds, &coreset.indices)?;
    let weights = if st.cfg.dro.enabled {
        let w = tables::read_weights(&st.input(WEIGHTS, "reweight")?)?;
        if w.len() != ds.classes() {
            return Err(CliError::data("weights file does not match the class count"));
        }
        Some(w)
    } else {
        None
    };
    let cfg = train_config(st, weights)?;
    let full = cfg.anneal_ratio.map(|_| &ds);
    let started = Instant::now();
    let (ck, report) = fit_model(
        st.cfg.stage_seed("train/init"),
        st.cfg.stage_seed("train"),
        st,
        &sub.dataset,
        cfg,
        full,
    )?;
    formats::save_checkpoint(&st.path(MODEL), &ck)?;
    tables::write_loss(&st.path(LOSS), &st.provenance("train"), &report)?;
    println!(
        "train: {} epochs ({} on the coreset), {} sample gradients, final loss {:.6}, {:.2}s",
        ck.epochs_trained,
        report.coreset_epochs,
        report.sample_gradients,
        report.epoch_losses.last().map_or(f64::NAN, |l| l.1),
        started.elapsed().as_secs_f64()
    );
    Ok(ck)
}

pub fn sample(st: &Stage) -> CliResult<LabeledDataset> {
    let ck = formats::load_checkpoint(&st.input(MODEL, "train")?)?;
    let s = &st.cfg.sample;
    let out = sample_labeled(
        &ck.model,
        &ck.schedule,
        st.cfg.sampler()?,
        s.guidance,
        s.per_class,
        st.cfg.stage_seed("sample"),
    )?
    .with_name("samples");
    formats::save_dataset(&st.path(SAMPLES), &out)?;
    println!("sample: {} samples ({} per class)", out.len(), s.per_class);
    Ok(out)
}

pub fn eval(st: &Stage, compare: Option<&Path>) -> CliResult<EvalReport> {
    let real = st.data()?;
    let gen = formats::load_dataset(&st.input(SAMPLES, "sample")?)?;
    let encoder = match st.cfg.eval_encoder()? {
        EvalEncoder::Identity => Encoder::identity(real.dim()),
        EvalEncoder::Pipeline => formats::load_encoder(&st.input(ENCODER, "prune")?)?,
    };
    let other = match compare {
        Some(p) => {
            let rows = tables::read_report(p)?;
            if rows.encoder_id != encoder.id() {
                return Err(CliError::config(format!(
                    "refusing to compare reports from different encoders: {} vs {}",
                    encoder.id(),
                    rows.encoder_id
                )));
            }
            Some(rows)
        }
        None => None,
    };
    let report = evaluate(&real, &gen, &encoder, st.cfg.stage_seed("eval"))?;
    let prov = st.provenance("eval");
    tables::write_report(&st.path(REPORT), &prov, &report)?;
    tables::write_plot_data(&st.path(PLOT), &prov, &report)?;
    if st.cfg.eval.svg {
        formats::write_bytes(&st.path(PLOT_SVG), tables::render_svg(&report).as_bytes())?;
    }
    println!(
        "eval [{}]: frechet {:.6}, mmd_sq {:.6}",
        report.encoder_id, report.frechet, report.mmd_sq
    );
    for (c, f) in report.per_class_frechet.iter().enumerate() {
        println!("  class {c}: frechet {}", f.map_or("n/a".into(), |v| format!("{v:.6}")));
    }
    if let Some(o) = other {
        for (name, mine) in [("frechet", report.frechet), ("mmd_sq", report.mmd_sq)] {
            if let Some(theirs) = o.get(name, "all") {
                println!("  {name}: {mine:.6} vs {theirs:.6} (delta {:+.6})", mine - theirs);
            }
        }
    }
    Ok(report)
}

/// The coreset size a config's prune stage will produce.
pub fn predicted_coreset(cfg: &PipelineConfig, class_counts: &[usize]) -> CliResult<usize> {
    let ratio = cfg.prune.ratio;
    let n: usize = class_counts.iter().sum();
    Ok(match cfg.prune_method()? {
        PruneMethod::None => n,
        m if m.is_stratified() => class_counts.iter().filter(|&&c| c > 0).map(|&c| kept_count(ratio, c)).sum(),
        _ => kept_count(ratio, n),
    })
}

fn class_counts(cfg: &PipelineConfig) -> CliResult<Vec<usize>> {
    Ok(match cfg.dataset_source()? {
        DatasetSource::Generate(spec) => vec![spec.per_class; spec.classes],
        DatasetSource::File(p) => formats::load_dataset(&p)?.class_counts(),
    })
}

/// Work done by a config's `train` stage.
pub fn planned_steps(cfg: &PipelineConfig) -> CliResult<StepCount> {
    let counts = class_counts(cfg)?;
    let n_full: usize = counts.iter().sum();
    let n_train = predicted_coreset(cfg, &counts)?;
    let t = &cfg.train;
    Ok(training_steps(n_train, n_full, t.epochs, t.batch_size, t.anneal_ratio)?)
}

pub struct SpeedupReport {
    pub candidate: StepCount,
    pub baseline: StepCount,
    pub ratio: f64,
    pub optimizer_step_ratio: f64,
}

/// Compares the training work of `candidate` against `baseline`. Both must
/// share epochs and batch size.
pub fn speedup_report(candidate: &PipelineConfig, baseline: &PipelineConfig) -> CliResult<SpeedupReport> {
    if candidate.train.epochs != baseline.train.epochs || candidate.train.batch_size != baseline.train.batch_size {
        return Err(CliError::config(format!(
            "speedup needs equal epochs and batch size: {}/{} vs {}/{}",
            candidate.train.epochs, candidate.train.batch_size, baseline.train.epochs, baseline.train.batch_size
        )));
    }
    let c = planned_steps(candidate)?;
    let b = planned_steps(baseline)?;
    Ok(SpeedupReport {
        candidate: c,
        baseline: b,
        ratio: speedup(b, c)?,
        optimizer_step_ratio: b.optimizer_steps as f64 / c.optimizer_steps.max(1) as f64,
    })
}

pub fn write_speedup(st: &Stage, baseline: &PipelineConfig, r: &SpeedupReport) -> CliResult<()> {
    let mut text = st.provenance("speedup").line();
    text.push_str(&format!("# baseline_config={}\n", baseline.hash()));
    text.push_str("metric,value\n");
    for (k, v) in [
        ("candidate_sample_gradients", r.candidate.sample_gradients.to_string()),
        ("baseline_sample_gradients", r.baseline.sample_gradients.to_string()),
        ("candidate_optimizer_steps", r.candidate.optimizer_steps.to_string()),
        ("baseline_optimizer_steps", r.baseline.optimizer_steps.to_string()),
        ("step_ratio", tables::fmt_real(r.ratio)),
        ("optimizer_step_ratio", tables::fmt_real(r.optimizer_step_ratio)),
    ] {
        text.push_str(&format!("{k},{v}\n"));
    }
    formats::write_bytes(&st.path(SPEEDUP), text.as_bytes())
}

/// Times the `train` stage computation of a config in memory. Inputs are
/// read from that config's own output directory.
pub fn time_training(st: &Stage) -> CliResult<f64> {
    let ds = st.data()?;
    let coreset = st.coreset(&ds)?;
    let sub = subset(&ds, &coreset.indices)?;
    let weights = if st.cfg.dro.enabled {
        Some(tables::read_weights(&st.input(WEIGHTS, "reweight")?)?)
    } else {
        None
    };
    let cfg = train_config(st, weights)?;
    let full = cfg.anneal_ratio.map(|_| &ds);
    let started = Instant::now();
    fit_model(
        st.cfg.stage_seed("train/init"),
        st.cfg.stage_seed("train"),
        st,
        &sub.dataset,
        cfg,
        full,
    )?;
    Ok(started.elapsed().as_secs_f64())
}
