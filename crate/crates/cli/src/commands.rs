//! Subcommand bodies. Each writes human-readable progress to `log` and
//! its artifacts under the configured output directory.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hetrain::nn::depth::{depth_audit, depth_savings, iteration_depth};
use hetrain::nn::{container, DepthReport};
use hetrain::packing::{compute_dims, min_dims, required_rotations};
use hetrain::params::{hes_min_degree, OUTER_PRIME_BITS};
use hetrain::{Architecture, Backend, GridShape, Security};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{io_at, CliError, Result};
use crate::metrics::write_csv;
use crate::run::{
    custodian_for, dispatch, encrypted_accuracy, load_splits, prepare, security_gate, train_with, Prepared, RunMode,
    WithBackend,
};

pub const METRICS_FILE: &str = "metrics.csv";
pub const PRECISION_FILE: &str = "precision.csv";
pub const MODEL_FILE: &str = "model.rbot";
pub const CONFIG_FILE: &str = "config.json";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).map_err(io_at(path))?))
}

struct TrainJob<'a> {
    cfg: &'a RunConfig,
    prep: &'a Prepared,
    mode: RunMode,
    log: &'a mut dyn Write,
}

impl WithBackend for TrainJob<'_> {
    /// Final test accuracy of the last head.
    type Output = f64;

    fn run<B: Backend>(self, backend: B) -> Result<f64> {
        let out = train_with(self.cfg, self.prep, backend, self.mode, self.log)?;
        let dir = &self.cfg.out;
        write_csv(&out.metrics, create(dir, METRICS_FILE)?)?;
        if self.mode.trace_precision {
            write_csv(&out.precision, create(dir, PRECISION_FILE)?)?;
        }
        let mut w = create(dir, MODEL_FILE)?;
        container::save(&out.model, &out.custodian.evaluator(), &mut w)?;
        w.flush().map_err(io_at(dir.join(MODEL_FILE)))?;
        let mut c = create(dir, CONFIG_FILE)?;
        serde_json::to_writer_pretty(&mut c, self.cfg)?;
        c.flush().map_err(io_at(dir.join(CONFIG_FILE)))?;
        Ok(out.final_test_accuracy())
    }
}

/// Trains and writes metrics, the model container and the resolved config.
pub fn cmd_train(cfg: &RunConfig, mode: RunMode, log: &mut dyn Write) -> Result<f64> {
    let prep = prepare(cfg)?;
    writeln!(
        log,
        "{} train / {} test samples, grid {}x{}, N = {}, level {}",
        prep.train.len(),
        prep.test.len(),
        prep.shape.rows,
        prep.shape.cols,
        prep.params.poly_degree,
        prep.params.level
    )
    .ok();
    let acc = dispatch(
        cfg,
        &prep.params,
        TrainJob {
            cfg,
            prep: &prep,
            mode,
            log: &mut *log,
        },
    )?;
    writeln!(log, "final test accuracy {acc:.4}; outputs in {}", cfg.out.display()).ok();
    Ok(acc)
}

/// Trains with a per-iteration precision trace against the shadow model.
pub fn cmd_precision(cfg: &RunConfig, mode: RunMode, log: &mut dyn Write) -> Result<f64> {
    if !cfg.eval.shadow {
        return Err(CliError::Config("precision needs eval.shadow = true".into()));
    }
    let mode = RunMode {
        trace_precision: true,
        ..mode
    };
    cmd_train(cfg, mode, log)
}

struct EvalJob<'a> {
    prep: &'a Prepared,
    seed: u64,
    model: PathBuf,
}

impl WithBackend for EvalJob<'_> {
    type Output = Vec<f64>;

    fn run<B: Backend>(self, backend: B) -> Result<Vec<f64>> {
        let kc = custodian_for(backend, self.prep.shape, self.seed)?;
        let ev = kc.evaluator();
        let file = File::open(&self.model).map_err(io_at(&self.model))?;
        let model = container::load(&ev, &mut BufReader::new(file))?;
        if model.arch != self.prep.arch {
            return Err(CliError::Config(format!(
                "model architecture {:?} does not match the dataset's {:?}",
                model.arch, self.prep.arch
            )));
        }
        encrypted_accuracy(&model, &ev, &kc, &self.prep.test)
    }
}

/// Scores a saved model on the test split. The custodian's keys are
/// regenerated from the run seed.
pub fn cmd_eval(cfg: &RunConfig, model: Option<&Path>, insecure_ok: bool, log: &mut dyn Write) -> Result<Vec<f64>> {
    let prep = prepare(cfg)?;
    if let Some(b) = security_gate(cfg, &prep.params, insecure_ok)? {
        writeln!(log, "{b}").ok();
    }
    let model = model.map_or_else(|| cfg.out.join(MODEL_FILE), Path::to_path_buf);
    let acc = dispatch(
        cfg,
        &prep.params,
        EvalJob {
            prep: &prep,
            seed: cfg.seed,
            model,
        },
    )?;
    for (h, a) in acc.iter().enumerate() {
        writeln!(log, "block {}: test accuracy {a:.4}", h + 1).ok();
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamsPlan {
    pub architecture: Architecture,
    pub iteration_depth: usize,
    pub bootstrap_depth: usize,
    /// `iteration_depth + bootstrap_depth`.
    pub level: usize,
    pub scale_bits: u32,
    pub total_modulus_bits: u32,
    pub min_grid: (usize, usize),
    /// Smallest degree whose slots hold the minimal grid.
    pub slot_degree: usize,
    /// Smallest tabulated degree that is 128-bit secure for the chain.
    pub secure_degree: Option<usize>,
    pub degree: usize,
    pub shape: GridShape,
    pub rotations: Vec<i64>,
    pub depth_savings: i64,
}

impl fmt::Display for ParamsPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.architecture;
        writeln!(f, "architecture: {} -> {:?} -> {}", a.input, a.hidden, a.classes)?;
        writeln!(f, "iteration depth: {}", self.iteration_depth)?;
        writeln!(
            f,
            "level: {} = {} + {} (bootstrap)",
            self.level, self.iteration_depth, self.bootstrap_depth
        )?;
        writeln!(
            f,
            "chain: [{OUTER_PRIME_BITS}, {} x {}, {OUTER_PRIME_BITS}] = {} bits",
            self.scale_bits, self.level, self.total_modulus_bits
        )?;
        writeln!(
            f,
            "minimal grid: {}x{}, needs N >= {}",
            self.min_grid.0, self.min_grid.1, self.slot_degree
        )?;
        match self.secure_degree {
            Some(n) => writeln!(f, "128-bit security needs N >= {n}")?,
            None => writeln!(f, "no tabulated degree is 128-bit secure for this chain")?,
        }
        writeln!(
            f,
            "suggested N: {} (grid {}x{})",
            self.degree, self.shape.rows, self.shape.cols
        )?;
        writeln!(f, "depth saved over end-to-end backpropagation: {}", self.depth_savings)?;
        let rot: Vec<String> = self.rotations.iter().map(i64::to_string).collect();
        write!(f, "rotation indices ({}): {}", self.rotations.len(), rot.join(" "))
    }
}

/// Architecture from the config, loading the data only when the input or
/// class count is not declared.
pub fn resolve_architecture(cfg: &RunConfig) -> Result<Architecture> {
    let a = &cfg.architecture;
    let (input, classes) = match (a.input, a.classes) {
        (Some(i), Some(c)) => (i, c),
        _ => {
            let (train, _) = load_splits(cfg)?;
            (a.input.unwrap_or(train.dim()), a.classes.unwrap_or(train.classes))
        }
    };
    Ok(Architecture::new(input, a.hidden.clone(), classes)?)
}

/// Suggests parameters for `arch`. The degree honours the security table
/// unless the config explicitly asks for insecure parameters.
pub fn plan_params(cfg: &RunConfig, arch: &Architecture) -> Result<ParamsPlan> {
    let h = arch.blocks();
    let tau = iteration_depth(h);
    let tau_bs = cfg.scheme.bootstrap_depth;
    let level = tau + tau_bs;
    let scale_bits = cfg.scheme.scale_bits;
    let total = 2 * OUTER_PRIME_BITS + scale_bits * level as u32;
    let min_grid = min_dims(arch)?;
    let slot_degree = (2 * min_grid.0 * min_grid.1).max(4);
    let secure_degree = hes_min_degree(total);
    let degree = match (cfg.scheme.security, secure_degree) {
        (Some(Security::InsecureTest), _) | (_, None) => slot_degree,
        (_, Some(n)) => slot_degree.max(n),
    };
    let shape = compute_dims(arch, degree / 2)?;
    Ok(ParamsPlan {
        architecture: arch.clone(),
        iteration_depth: tau,
        bootstrap_depth: tau_bs,
        level,
        scale_bits,
        total_modulus_bits: total,
        min_grid,
        slot_degree,
        secure_degree,
        degree,
        shape,
        rotations: required_rotations(shape).into_iter().collect(),
        depth_savings: depth_savings(h),
    })
}

pub fn cmd_params(cfg: &RunConfig, log: &mut dyn Write) -> Result<ParamsPlan> {
    let plan = plan_params(cfg, &resolve_architecture(cfg)?)?;
    writeln!(log, "{plan}").ok();
    Ok(plan)
}

/// Closed forms against ledger dry runs for 1..=max_blocks blocks.
pub fn cmd_depth_audit(max_blocks: usize, log: &mut dyn Write) -> Result<Vec<DepthReport>> {
    writeln!(log, "H  forward  backward  iteration  measured  backprop  saved").ok();
    let mut out = Vec::with_capacity(max_blocks);
    for h in 1..=max_blocks {
        let r = depth_audit(h)?;
        let last = r.layers.last().expect("h >= 1");
        writeln!(
            log,
            "{h:<2} {:>7}  {:>8}  {:>9}  {:>8}  {:>8}  {:>5}{}",
            last.forward,
            last.backward,
            r.per_iteration,
            r.measured.map_or("-".into(), |m| m.to_string()),
            r.backprop,
            r.savings,
            if r.measured == Some(r.per_iteration) {
                ""
            } else {
                "  MISMATCH"
            }
        )
        .ok();
        out.push(r);
    }
    Ok(out)
}
