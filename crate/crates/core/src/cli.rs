//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::assoc::AssocMatrix;
use crate::baselines::{hmm_associate, knn_associate, knn_probs, HmmParams};
use crate::decoder::{decode_scene, DecoderConfig};
use crate::error::{Error, Result};
use crate::io::{
    load_weights, parse_config, read_assoc_files, read_scenes, save_weights, write_assoc_files, write_scenes,
    AssocFile, DecodeMeta, GenFile, ProbTable,
};
use crate::map::Scene;
use crate::mat::{mat_associate, ModelConfig, Weights};
use crate::metrics::{association_pr, reachability_pr, MetricConfig, MetricReport, Prediction};
use crate::scene_gen::{augment_scene, generate_scene, perturb_scene};

pub const THREADS_ENV: &str = "MAPASSOC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mapassoc", version, about = "SD/HD map association toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Knn,
    Hmm,
    Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Association,
    Reachability,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes (generate, then perturb and augment if configured).
    Gen {
        /// JSON file with optional `gen`, `perturb` and `aug` blocks.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Scene i is generated with seed `seed + i`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Associate every centerline of every scene with a road.
    Associate {
        #[arg(long, value_enum)]
        method: Method,
        /// Run the topology-constrained beam decoder on the probabilities.
        #[arg(long)]
        post: bool,
        /// Weights manifest for `mat`; seeded random weights when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        weights_seed: u64,
        #[arg(long)]
        model_config: Option<PathBuf>,
        /// HMM parameters as JSON.
        #[arg(long)]
        hmm_config: Option<PathBuf>,
        /// Distance scale of the soft KNN probabilities, in meters.
        #[arg(long, default_value_t = 4.07)]
        knn_sigma: f64,
        #[arg(long, default_value_t = 5)]
        beam_width: usize,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against scene ground truth.
    Eval {
        #[arg(long, value_enum)]
        metric: Metric,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        /// Chamfer threshold in meters for reachability.
        #[arg(long)]
        tau: Option<f64>,
        /// Endpoint matching radius in meters.
        #[arg(long)]
        match_tau: Option<f64>,
        /// Comma-separated overlap thresholds for association.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Merge metric reports into one CSV.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Write seeded random weights for a model config.
    InitWeights {
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Manifest path; the blob goes next to it with a `.bin` extension.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Worker count from `MAPASSOC_THREADS`; `None` means all cores.
pub fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Maps per-item results in parallel, keeping input order and returning the
/// error of the first failing item.
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    items.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

fn gen(config: Option<&Path>, count: u64, seed: u64, out: &Path) -> Result<()> {
    let file = match config {
        Some(p) => GenFile::parse(&read_text(p)?)?,
        None => GenFile::default(),
    };
    let seeds: Vec<u64> = (0..count).map(|i| seed.wrapping_add(i)).collect();
    let scenes = par_map(&seeds, |&s| {
        let mut scene = generate_scene(&crate::scene_gen::GenConfig { seed: s, ..file.gen.clone() })?;
        if let Some(p) = &file.perturb {
            scene = perturb_scene(&scene, &crate::scene_gen::PerturbConfig { seed: p.seed.wrapping_add(s), ..p.clone() })?;
        }
        if let Some(a) = &file.aug {
            scene = augment_scene(&scene, &crate::scene_gen::AugConfig { seed: a.seed.wrapping_add(s), ..a.clone() })?;
        }
        Ok(scene)
    })?;
    write_text(out, &write_scenes(&scenes))
}

/// Options of the `associate` command after loading config files.
pub struct AssociateOptions {
    pub method: Method,
    pub post: bool,
    pub model: Option<(ModelConfig, Weights)>,
    pub hmm: HmmParams,
    pub knn_sigma: f64,
    pub decoder: DecoderConfig,
}

fn from_probs(scene: &Scene, method: &str, probs: AssocMatrix, opts: &AssociateOptions) -> Result<AssocFile> {
    let mut file = if opts.post {
        let d = decode_scene(scene, &probs, &opts.decoder)?;
        let mut f = AssocFile::new(method, scene, d.assoc);
        f.decode_meta = Some(DecodeMeta {
            decoder: "beam".into(),
            beam_width: Some(opts.decoder.beam_width),
            fallback_tokens: Some(d.fallback_tokens),
            fallback_paths: None,
        });
        f
    } else {
        AssocFile::new(method, scene, probs.to_association())
    };
    file.probs = Some(ProbTable::from_matrix(&probs));
    Ok(file)
}

/// Runs one association method on one scene.
pub fn associate_scene(scene: &Scene, opts: &AssociateOptions) -> Result<AssocFile> {
    match opts.method {
        Method::Knn if opts.post => from_probs(scene, "knn", knn_probs(scene, opts.knn_sigma)?, opts),
        Method::Knn => Ok(AssocFile::new("knn", scene, knn_associate(scene)?)),
        Method::Hmm => {
            let out = hmm_associate(scene, &opts.hmm)?;
            let mut f = AssocFile::new("hmm", scene, out.assoc);
            f.decode_meta = Some(DecodeMeta {
                decoder: "viterbi".into(),
                fallback_paths: Some(out.fallback_paths),
                ..DecodeMeta::default()
            });
            Ok(f)
        }
        Method::Mat => {
            let (cfg, weights) = opts.model.as_ref().ok_or_else(|| Error::Config("mat needs a model".into()))?;
            from_probs(scene, "mat", mat_associate(scene, cfg, weights)?, opts)
        }
    }
}

fn load_model(model_config: Option<&Path>) -> Result<ModelConfig> {
    let cfg = match model_config {
        Some(p) => parse_config::<ModelConfig>(&read_text(p)?)?,
        None => ModelConfig::desk(),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[allow(clippy::too_many_arguments)]
fn associate(
    method: Method,
    post: bool,
    weights: Option<&Path>,
    weights_seed: u64,
    model_config: Option<&Path>,
    hmm_config: Option<&Path>,
    knn_sigma: f64,
    beam_width: usize,
    scenes: &Path,
    out: &Path,
) -> Result<()> {
    if post && method == Method::Hmm {
        return Err(Error::Validation("--post needs a method that yields probabilities (knn or mat)".into()));
    }
    if method != Method::Mat && (weights.is_some() || model_config.is_some()) {
        return Err(Error::Validation("--weights and --model-config only apply to --method mat".into()));
    }
    let hmm = match hmm_config {
        Some(p) => parse_config::<HmmParams>(&read_text(p)?)?,
        None => HmmParams::default(),
    };
    hmm.validate()?;
    if beam_width == 0 {
        return Err(Error::Config("--beam-width must be >= 1".into()));
    }
    let model = if method == Method::Mat {
        let cfg = load_model(model_config)?;
        let w = match weights {
            Some(p) => load_weights(p, &cfg)?,
            None => Weights::random(&cfg, weights_seed)?,
        };
        Some((cfg, w))
    } else {
        None
    };
    let opts = AssociateOptions {
        method,
        post,
        model,
        hmm,
        knn_sigma,
        decoder: DecoderConfig { beam_width, ..DecoderConfig::default() },
    };
    let scenes = read_scenes(&read_text(scenes)?)?;
    let files = par_map(&scenes, |s| associate_scene(s, &opts))?;
    write_text(out, &write_assoc_files(&files))
}

/// Scores association files against scenes.
pub fn evaluate_files(metric: Metric, preds: &[AssocFile], scenes: &[Scene], cfg: &MetricConfig) -> Result<MetricReport> {
    if preds.len() != scenes.len() {
        return Err(Error::Validation(format!("{} predictions for {} scenes", preds.len(), scenes.len())));
    }
    let assocs = par_map(&preds.iter().zip(scenes).collect::<Vec<_>>(), |(p, s)| p.resolve(s))?;
    let views: Vec<Prediction<'_>> = scenes.iter().zip(&assocs).map(|(s, a)| Prediction::new(&s.hd, a)).collect();
    match metric {
        Metric::Association => association_pr(&views, scenes, cfg),
        Metric::Reachability => reachability_pr(&views, scenes, cfg),
    }
}

fn eval(
    metric: Metric,
    pred: &Path,
    scenes: &Path,
    tau: Option<f64>,
    match_tau: Option<f64>,
    thresholds: Option<Vec<f64>>,
    report: &Path,
) -> Result<()> {
    let mut cfg = MetricConfig::default();
    if let Some(t) = tau {
        cfg.chamfer_tau = t;
    }
    if let Some(t) = match_tau {
        cfg.point_match_tau = t;
    }
    if let Some(t) = thresholds {
        cfg.thresholds = t;
    }
    cfg.validate()?;
    let scenes = read_scenes(&read_text(scenes)?)?;
    let preds = read_assoc_files(&read_text(pred)?)?;
    let r = evaluate_files(metric, &preds, &scenes, &cfg)?;
    let json = serde_json::to_string_pretty(&r).expect("report serializes") + "\n";
    write_text(report, &json)?;
    print!("{}", r.table());
    Ok(())
}

/// One CSV row per (report, threshold, bucket), plus a bucket `all` row per
/// threshold carrying the bucket-averaged precision and recall.
pub fn reports_csv(reports: &[(String, MetricReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(["source", "metric", "threshold", "bucket", "tp", "fp", "fn", "precision", "recall", "f1"])
        .map_err(csv_err)?;
    for (source, r) in reports {
        let metric = serde_json::to_value(r.metric).expect("serializes");
        let metric = metric.as_str().unwrap_or_default().to_string();
        for (ti, th) in r.thresholds.iter().enumerate() {
            let mut total = crate::metrics::Counts::default();
            for (b, c) in r.counts[ti].iter().enumerate() {
                total += *c;
                let (p, rc) = (c.precision(), c.recall());
                w.write_record([
                    source.clone(),
                    metric.clone(),
                    th.to_string(),
                    r.bucket_label(b),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.fn_.to_string(),
                    p.to_string(),
                    rc.to_string(),
                    crate::metrics::f1(p, rc).to_string(),
                ])
                .map_err(csv_err)?;
            }
            let s = &r.per_threshold[ti];
            w.write_record([
                source.clone(),
                metric.clone(),
                th.to_string(),
                "all".into(),
                total.tp.to_string(),
                total.fp.to_string(),
                total.fn_.to_string(),
                s.precision.to_string(),
                s.recall.to_string(),
                s.f1.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn report(paths: &[PathBuf], csv_path: &Path) -> Result<()> {
    let reports = paths
        .iter()
        .map(|p| Ok((p.display().to_string(), parse_config::<MetricReport>(&read_text(p)?)?)))
        .collect::<Result<Vec<_>>>()?;
    write_text(csv_path, &reports_csv(&reports)?)
}

fn init_weights(model_config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let cfg = load_model(model_config)?;
    save_weights(&Weights::random(&cfg, seed)?, out)
}

/// Executes a parsed command inside a pool sized by `MAPASSOC_THREADS`.
pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Gen { config, count, seed, out } => gen(config.as_deref(), count, seed, &out),
        Command::Associate {
            method,
            post,
            weights,
            weights_seed,
            model_config,
            hmm_config,
            knn_sigma,
            beam_width,
            scenes,
            out,
        } => associate(
            method,
            post,
            weights.as_deref(),
            weights_seed,
            model_config.as_deref(),
            hmm_config.as_deref(),
            knn_sigma,
            beam_width,
            &scenes,
            &out,
        ),
        Command::Eval { metric, pred, scenes, tau, match_tau, thresholds, report: out } => {
            eval(metric, &pred, &scenes, tau, match_tau, thresholds, &out)
        }
        Command::Report { reports, csv } => report(&reports, &csv),
        Command::InitWeights { model_config, seed, out } => init_weights(model_config.as_deref(), seed, &out),
    })
}

/// Parses arguments, runs, and returns the process exit code. Usage errors
/// exit with 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
