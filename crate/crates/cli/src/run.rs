//! Dataset preparation and the training/evaluation loop, generic over the
//! backend.

use std::io::Write;
use std::time::Instant;

use hetrain::api::splitmix64;
use hetrain::nn::{BatchSchedule, EncryptedMlp, EncryptedSample, ShadowMlp};
use hetrain::packing::{compute_dims, required_rotations};
use hetrain::params::insecure_banner;
use hetrain::{Architecture, Backend, Evaluator, GridShape, KeyCustodian, NoiseModel, SchemeParams, SimBackend};
use hetrain_ckks::{CkksBackend, CkksConfig};

use crate::config::{BackendKind, DatasetSpec, RunConfig};
use crate::dataset::{load_csv, load_idx, stratified_split, Dataset};
use crate::error::{CliError, Result};
use crate::metrics::{block_precision, MetricsRow, PrecisionRow};

/// Loaded splits plus everything derived from them.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub arch: Architecture,
    pub train: Dataset,
    pub test: Dataset,
    pub params: SchemeParams,
    pub shape: GridShape,
}

pub fn load_splits(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.dataset {
        DatasetSpec::Csv {
            path,
            label_column,
            test_rows,
            test_fraction,
        } => {
            let (ds, _) = load_csv(path, label_column.as_ref())?;
            let n_test = test_rows.unwrap_or_else(|| (ds.len() as f64 * test_fraction).round() as usize);
            let (train, test) = stratified_split(&ds, n_test, cfg.seed)?;
            Ok((ds.subset(&train), ds.subset(&test)))
        }
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            pool,
            classes,
            train_limit,
            test_limit,
            holdout,
        } => {
            let mut train = load_idx(train_images, train_labels, *pool, *classes)?;
            let mut test = load_idx(test_images, test_labels, *pool, *classes)?;
            if train.dim() != test.dim() {
                return Err(CliError::Malformed(format!(
                    "train images have {} features, test images {}",
                    train.dim(),
                    test.dim()
                )));
            }
            let classes = train.classes.max(test.classes);
            train.classes = classes;
            test.classes = classes;
            if let Some(h) = *holdout {
                if h == 0 || h >= train.len() {
                    return Err(CliError::Config(format!("holdout {h} must lie in 1..{}", train.len())));
                }
                let keep = train.len() - h;
                test = train.subset(&(keep..train.len()).collect::<Vec<_>>());
                train.truncate(keep);
            }
            if let Some(n) = train_limit {
                train.truncate(*n);
            }
            if let Some(n) = test_limit {
                test.truncate(*n);
            }
            Ok((train, test))
        }
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let (train, test) = load_splits(cfg)?;
    if let Some(c) = cfg.architecture.classes {
        if c != train.classes {
            return Err(CliError::Labels(format!(
                "config declares {c} classes, data has {}",
                train.classes
            )));
        }
    }
    if train.len() < cfg.hyper.batch_size {
        return Err(CliError::Config(format!(
            "batch size {} exceeds the {} training samples",
            cfg.hyper.batch_size,
            train.len()
        )));
    }
    let arch = Architecture::new(train.dim(), cfg.architecture.hidden.clone(), train.classes)?;
    let params = cfg.scheme_params(&arch)?;
    let shape = compute_dims(&arch, params.slot_count())?;
    Ok(Prepared {
        arch,
        train,
        test,
        params,
        shape,
    })
}

/// Independent streams derived from the run seed. The split and the
/// weight initialization use the seed itself.
pub fn schedule_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x7363_6865_6475_6c65)
}

pub fn key_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x6b65_7973)
}

pub fn noise_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x6e6f_6973_65)
}

/// Refuses insecure CKKS parameters unless `insecure_ok`, and returns the
/// banner to print otherwise.
pub fn security_gate(cfg: &RunConfig, params: &SchemeParams, insecure_ok: bool) -> Result<Option<String>> {
    if cfg.backend != BackendKind::Ckks || !params.is_insecure() {
        return Ok(None);
    }
    if !insecure_ok {
        return Err(CliError::Insecure(format!(
            "N = {} with {} modulus bits is below the 128-bit table; pass --insecure-ok",
            params.poly_degree,
            params.total_modulus_bits()
        )));
    }
    Ok(Some(insecure_banner(params)))
}

/// Code that runs against whichever backend the config selects.
pub trait WithBackend {
    type Output;
    fn run<B: Backend>(self, backend: B) -> Result<Self::Output>;
}

pub fn sim_backend(cfg: &RunConfig, params: &SchemeParams) -> Result<SimBackend> {
    let noise = if cfg.noise.enabled {
        let mut n = NoiseModel::for_params(params, cfg.noise.bootstrap_sigma, noise_seed(cfg.seed));
        if let Some(s) = cfg.noise.per_op_sigma {
            n.per_op_sigma = s;
        }
        n
    } else {
        NoiseModel::off()
    };
    Ok(SimBackend::new(params.clone(), noise)?)
}

pub fn ckks_backend(cfg: &RunConfig, params: &SchemeParams) -> Result<CkksBackend> {
    let config = CkksConfig {
        gadget_bits: cfg.scheme.gadget_bits,
        bootstrap_error: cfg.scheme.bootstrap_error,
    };
    Ok(CkksBackend::new(params.clone(), config)?)
}

pub fn dispatch<V: WithBackend>(cfg: &RunConfig, params: &SchemeParams, visitor: V) -> Result<V::Output> {
    match cfg.backend {
        BackendKind::Sim => visitor.run(sim_backend(cfg, params)?),
        BackendKind::Ckks => visitor.run(ckks_backend(cfg, params)?),
    }
}

/// Per-block accuracy of the plaintext twin at one evaluation point.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowEval {
    pub iteration: u64,
    pub train_accuracy: Vec<f64>,
    pub test_accuracy: Vec<f64>,
}

pub struct RunOutput<B: Backend> {
    pub custodian: KeyCustodian<B>,
    pub model: EncryptedMlp<B>,
    pub shadow: Option<ShadowMlp>,
    pub metrics: Vec<MetricsRow>,
    /// Filled when precision tracing is on: iteration 0 then every
    /// iteration, one row per block.
    pub precision: Vec<PrecisionRow>,
    pub shadow_curve: Vec<ShadowEval>,
    /// Per-iteration ledger maxima.
    pub depths: Vec<usize>,
    pub banner: Option<String>,
}

impl<B: Backend> RunOutput<B> {
    /// Test accuracy of the last block's head at the final evaluation.
    pub fn final_test_accuracy(&self) -> f64 {
        self.metrics.last().map_or(0.0, |r| r.test_accuracy)
    }
}

/// Knobs the commands set on top of the config.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunMode {
    pub trace_precision: bool,
    pub insecure_ok: bool,
    pub verbose: bool,
}

pub fn custodian_for<B: Backend>(backend: B, shape: GridShape, seed: u64) -> Result<KeyCustodian<B>> {
    Ok(KeyCustodian::generate(
        backend,
        &required_rotations(shape),
        key_seed(seed),
    )?)
}

/// Per-block accuracy over `ds`, decrypting only the heads.
pub fn encrypted_accuracy<B: Backend>(
    model: &EncryptedMlp<B>,
    ev: &Evaluator<B>,
    kc: &KeyCustodian<B>,
    ds: &Dataset,
) -> Result<Vec<f64>> {
    let mut hits = vec![0usize; model.blocks.len()];
    for (x, &y) in ds.features.iter().zip(&ds.labels) {
        let input = EncryptedSample::encrypt_input(kc, &model.arch, model.shape, x)?;
        for (h, p) in hits.iter_mut().zip(model.block_predictions(ev, kc, &input)?) {
            *h += (p == y) as usize;
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / ds.len() as f64).collect())
}

pub fn shadow_accuracy(shadow: &ShadowMlp, ds: &Dataset) -> Vec<f64> {
    let mut hits = vec![0usize; shadow.weights.len()];
    for (x, &y) in ds.features.iter().zip(&ds.labels) {
        for (h, p) in hits.iter_mut().zip(shadow.block_predictions(x)) {
            *h += (p == y) as usize;
        }
    }
    hits.iter().map(|&h| h as f64 / ds.len() as f64).collect()
}

pub fn total_iterations(cfg: &RunConfig, train_len: usize) -> u64 {
    cfg.iterations
        .unwrap_or(cfg.epochs * (train_len / cfg.hyper.batch_size) as u64)
}

pub fn train_with<B: Backend>(
    cfg: &RunConfig,
    prep: &Prepared,
    backend: B,
    mode: RunMode,
    log: &mut dyn Write,
) -> Result<RunOutput<B>> {
    let banner = security_gate(cfg, &prep.params, mode.insecure_ok)?;
    if let Some(b) = &banner {
        writeln!(log, "{b}").ok();
    }
    let start = Instant::now();
    let kc = custodian_for(backend, prep.shape, cfg.seed)?;
    let ev = kc.evaluator();
    let hyper = cfg.hyperparams();
    let mut model = EncryptedMlp::new(&kc, prep.arch.clone(), hyper.clone(), cfg.options)?;
    let mut shadow = match (cfg.eval.shadow, mode.trace_precision) {
        (true, _) => Some(ShadowMlp::new(prep.arch.clone(), hyper, cfg.options)?),
        (false, true) => return Err(CliError::Config("precision tracing needs the shadow model".into())),
        (false, false) => None,
    };

    let mut precision = Vec::new();
    let trace = |model: &EncryptedMlp<B>, shadow: &ShadowMlp, rows: &mut Vec<PrecisionRow>| -> Result<()> {
        let bits = block_precision(&model.decrypt_weights(&kc)?, &shadow.weights);
        let boots = ev.ledger().snapshot().bootstraps;
        rows.extend(bits.into_iter().enumerate().map(|(h, (l, c))| PrecisionRow {
            iteration: model.iteration,
            block: h + 1,
            bootstrap_count: boots,
            layer_bits: l,
            classifier_bits: c,
        }));
        Ok(())
    };
    if mode.trace_precision {
        trace(&model, shadow.as_ref().expect("checked above"), &mut precision)?;
    }

    let total = total_iterations(cfg, prep.train.len());
    let mut schedule = BatchSchedule::new(prep.train.len(), cfg.hyper.batch_size, schedule_seed(cfg.seed));
    let mut metrics = Vec::new();
    let mut shadow_curve = Vec::new();
    let mut depths = Vec::with_capacity(total as usize);
    for t in 1..=total {
        let (epoch, idx) = schedule.next_batch();
        let batch = idx
            .iter()
            .map(|&i| {
                EncryptedSample::encrypt(
                    &kc,
                    &prep.arch,
                    prep.shape,
                    &prep.train.features[i],
                    prep.train.labels[i],
                )
            })
            .collect::<hetrain::Result<Vec<_>>>()?;
        let stats = model.train_iteration(&ev, &kc, &batch)?;
        depths.push(stats.max_depth);
        if let Some(s) = shadow.as_mut() {
            let plain: Vec<(&[f64], usize)> = idx
                .iter()
                .map(|&i| (prep.train.features[i].as_slice(), prep.train.labels[i]))
                .collect();
            s.train_iteration(&plain)?;
            if mode.trace_precision {
                trace(&model, s, &mut precision)?;
            }
        }

        let due = t == total || (cfg.eval.every > 0 && t % cfg.eval.every == 0);
        if !due {
            continue;
        }
        let test_acc = encrypted_accuracy(&model, &ev, &kc, &prep.test)?;
        let train_acc = if cfg.eval.train {
            Some(encrypted_accuracy(&model, &ev, &kc, &prep.train)?)
        } else {
            None
        };
        let bits = match &shadow {
            Some(s) => {
                shadow_curve.push(ShadowEval {
                    iteration: t,
                    train_accuracy: shadow_accuracy(s, &prep.train),
                    test_accuracy: shadow_accuracy(s, &prep.test),
                });
                Some(block_precision(&model.decrypt_weights(&kc)?, &s.weights))
            }
            None => None,
        };
        let boots = ev.ledger().snapshot().bootstraps;
        let wall = start.elapsed().as_secs_f64();
        for h in 0..prep.arch.blocks() {
            metrics.push(MetricsRow {
                iteration: t,
                epoch,
                block: h + 1,
                train_accuracy: train_acc.as_ref().map(|a| a[h]),
                test_accuracy: test_acc[h],
                max_depth: stats.max_depth,
                bootstrap_count: boots,
                precision_layer_bits: bits.as_ref().map(|b| b[h].0),
                precision_classifier_bits: bits.as_ref().map(|b| b[h].1),
                wall_time_s: wall,
            });
        }
        if mode.verbose {
            let last = prep.arch.blocks() - 1;
            writeln!(
                log,
                "iteration {t}/{total} epoch {epoch} test {:.4}{} depth {} bootstraps {boots} ({wall:.1} s)",
                test_acc[last],
                train_acc.map(|a| format!(" train {:.4}", a[last])).unwrap_or_default(),
                stats.max_depth
            )
            .ok();
        }
    }
    Ok(RunOutput {
        custodian: kc,
        model,
        shadow,
        metrics,
        precision,
        shadow_curve,
        depths,
        banner,
    })
}
