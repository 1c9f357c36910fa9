use std::path::{Path, PathBuf};

use hetrain::nn::depth::measure;
use hetrain::nn::TrainOptions;
use hetrain::{Security, SimBackend};
use hetrain_cli::commands::{cmd_eval, cmd_params, cmd_train, plan_params, METRICS_FILE};
use hetrain_cli::config::BackendKind;
use hetrain_cli::metrics::{read_metrics, MetricsRow};
use hetrain_cli::run::{prepare, sim_backend, train_with, Prepared, RunMode, RunOutput};

use hetrain_cli::{CliError, RunConfig};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> RunConfig {
    RunConfig::from_file(&root().join("configs").join(name)).unwrap()
}

fn iris_short(out: &Path) -> RunConfig {
    let mut cfg = config("iris.json");
    cfg.iterations = Some(5);
    cfg.eval.every = 1;
    cfg.out = out.to_path_buf();
    cfg
}

fn train_sim(cfg: &RunConfig, prep: &Prepared, mode: RunMode) -> RunOutput<SimBackend> {
    train_with(
        cfg,
        prep,
        sim_backend(cfg, &prep.params).unwrap(),
        mode,
        &mut std::io::sink(),
    )
    .unwrap()
}

fn without_wall_time(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    rows.iter()
        .cloned()
        .map(|r| MetricsRow { wall_time_s: 0.0, ..r })
        .collect()
}

#[test]
fn iris_split_sizes() {
    let prep = prepare(&config("iris.json")).unwrap();
    assert_eq!((prep.train.len(), prep.test.len()), (120, 30));
    assert_eq!((prep.arch.input, prep.arch.classes), (4, 3));
    for c in 0..3 {
        assert_eq!(prep.test.labels.iter().filter(|&&l| l == c).count(), 10);
    }
    let prep = prepare(&config("breast_cancer.json")).unwrap();
    assert_eq!((prep.train.len(), prep.test.len()), (455, 114));
    assert_eq!((prep.arch.input, prep.arch.classes), (30, 2));
}

#[test]
fn metrics_match_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&iris_short(dir.path()), RunMode::default(), &mut std::io::sink()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    let got = without_wall_time(&read_metrics(text.as_bytes()).unwrap());
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/iris_5_iterations.csv");
    if std::env::var_os("HETRAIN_BLESS").is_some() {
        let mut buf = Vec::new();
        hetrain_cli::metrics::write_csv(&got, &mut buf).unwrap();
        std::fs::write(&golden, buf).unwrap();
    }
    let want = read_metrics(std::fs::File::open(&golden).unwrap()).unwrap();
    assert_eq!(got, want);
    assert_eq!(
        text.lines().next().unwrap(),
        "iteration,epoch,block,train_accuracy,test_accuracy,max_depth,bootstrap_count,\
         precision_layer_bits,precision_classifier_bits,wall_time_s"
    );
    assert!(got.iter().all(|r| r.max_depth == 8));
}

#[test]
fn same_seed_same_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        cmd_train(&iris_short(d.path()), RunMode::default(), &mut std::io::sink()).unwrap();
    }
    let read = |d: &tempfile::TempDir| {
        without_wall_time(&read_metrics(std::fs::File::open(d.path().join(METRICS_FILE)).unwrap()).unwrap())
    };
    assert_eq!(read(&a), read(&b));
    let model = |d: &tempfile::TempDir| std::fs::read(d.path().join("model.rbot")).unwrap();
    assert_eq!(model(&a), model(&b));

    let c = tempfile::tempdir().unwrap();
    let mut other = iris_short(c.path());
    other.seed = 1;
    cmd_train(&other, RunMode::default(), &mut std::io::sink()).unwrap();
    assert_ne!(read(&a), read(&c));
}

#[test]
fn saved_model_evaluates_to_the_logged_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = iris_short(dir.path());
    let acc = cmd_train(&cfg, RunMode::default(), &mut std::io::sink()).unwrap();
    let again = cmd_eval(&cfg, None, false, &mut std::io::sink()).unwrap();
    assert_eq!(again, [acc]);
}

fn hetrain(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_hetrain"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn insecure_ckks_needs_consent_and_prints_banner() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("iris_ckks_micro.json");
    cfg.scheme.poly_degree = Some(256);
    cfg.iterations = Some(1);
    cfg.hyper.batch_size = 1;
    cfg.eval.shadow = false;
    let path = dir.path().join("tiny.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = dir.path().join("out");
    let base = [
        "train",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];

    let refused = hetrain(&base);
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--insecure-ok"));
    assert!(!out.join(METRICS_FILE).exists());

    let ok = hetrain(&[&base[..], &["--insecure-ok"]].concat());
    // Progress and the banner go to stderr.
    let log = String::from_utf8_lossy(&ok.stderr);
    assert!(ok.status.success(), "{log}");
    assert!(log.contains("WARNING: insecure-test parameters (N = 256"), "{log}");
    assert!(out.join(METRICS_FILE).exists());

    // The simulator holds no secrets and is never gated.
    let sim = hetrain(&[&base[..], &["--backend", "sim"]].concat());
    assert!(sim.status.success());
    assert!(!String::from_utf8_lossy(&sim.stderr).contains("WARNING"));
}

#[test]
fn gate_refuses_with_a_typed_error() {
    let cfg = config("iris_ckks_micro.json");
    let err = cmd_train(&cfg, RunMode::default(), &mut std::io::sink()).unwrap_err();
    assert!(matches!(err, CliError::Insecure(_)), "{err}");
}

#[test]
fn params_follow_the_depth_table() {
    let mut cfg = config("iris.json");
    cfg.architecture.input = Some(196);
    cfg.architecture.classes = Some(10);
    for (hidden, tau, level) in [
        (vec![32], 8, 24),
        (vec![64, 32], 11, 27),
        (vec![128, 64, 32], 13, 29),
        (vec![32; 4], 16, 32),
    ] {
        cfg.architecture.hidden = hidden;
        let plan = cmd_params(&cfg, &mut std::io::sink()).unwrap();
        assert_eq!((plan.iteration_depth, plan.level), (tau, level));
        assert!(plan.degree / 2 >= plan.min_grid.0 * plan.min_grid.1);
        let secure = plan.secure_degree.unwrap();
        assert_eq!(plan.degree, plan.slot_degree.max(secure));
        assert!(hetrain::params::hes_max_logq(secure).unwrap() >= plan.total_modulus_bits);
    }
}

#[test]
fn suggested_level_covers_a_dry_run() {
    let mut cfg = config("iris.json");
    cfg.architecture.input = Some(4);
    cfg.architecture.classes = Some(3);
    for h in 1..=5 {
        cfg.architecture.hidden = vec![8; h];
        let arch = hetrain_cli::commands::resolve_architecture(&cfg).unwrap();
        let plan = plan_params(&cfg, &arch).unwrap();
        let measured = measure(h, TrainOptions::default()).unwrap().into_iter().max().unwrap();
        assert!(plan.level >= measured + plan.bootstrap_depth, "H = {h}");
    }
}

#[test]
fn explicit_insecure_request_keeps_the_slot_degree() {
    let mut cfg = config("iris.json");
    cfg.scheme.security = Some(Security::InsecureTest);
    let arch = hetrain_cli::commands::resolve_architecture(&cfg).unwrap();
    let plan = plan_params(&cfg, &arch).unwrap();
    assert_eq!(plan.degree, plan.slot_degree);
    assert_eq!(
        plan.rotations.len(),
        (plan.shape.log_rows() + 2 * plan.shape.log_cols()) as usize
    );
}

#[test]
fn precision_is_high_without_noise_and_falls_across_blocks_with_it() {
    let mut cfg = config("iris.json");
    cfg.iterations = Some(20);
    cfg.eval.train = false;
    let mode = RunMode {
        trace_precision: true,
        ..RunMode::default()
    };
    let prep = prepare(&cfg).unwrap();
    let exact = train_sim(&cfg, &prep, mode);
    // Only the summation order differs from the twin.
    assert!(exact
        .precision
        .iter()
        .all(|r| r.layer_bits >= 40.0 && r.classifier_bits >= 40.0));
    assert!(exact
        .precision
        .iter()
        .filter(|r| r.iteration == 0)
        .all(|r| r.layer_bits == 52.0));

    cfg.architecture.hidden = vec![16, 16];
    cfg.noise.enabled = true;
    cfg.noise.bootstrap_sigma = 2f64.powi(-20);
    let prep = prepare(&cfg).unwrap();
    let noisy = train_sim(&cfg, &prep, mode);
    for t in 1..=20 {
        let rows: Vec<_> = noisy.precision.iter().filter(|r| r.iteration == t).collect();
        let worst = |r: &&hetrain_cli::metrics::PrecisionRow| r.layer_bits.min(r.classifier_bits);
        assert!(worst(&rows[1]) <= worst(&rows[0]) + 1.0, "iteration {t}: {rows:?}");
    }
}

#[test]
fn backend_flag_round_trips_through_json() {
    let mut cfg = config("iris.json");
    cfg.backend = BackendKind::Ckks;
    let text = serde_json::to_string(&cfg).unwrap();
    assert!(text.contains("\"backend\":\"ckks\""));
    let back: RunConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
}
