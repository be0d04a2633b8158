use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sagemix::assignment::{brute_force_assignment, greedy_assignment, optimal_assignment};
use sagemix::manifest::{load_dataset, load_entry, Manifest, ManifestEntry};
use sagemix::mixup::{point_mixup, rs_mix, sage_mix_with_provider, MixParams, MixedSample, DEFAULT_RSMIX_RADIUS};
use sagemix::pointcloud::{
    corrupt_dropout, corrupt_jitter, corrupt_rotate, corrupt_scale, read_saliency, read_xyz, resample, synth_shape,
    write_values, write_xyz, Axis, ShapeKind,
};
use sagemix::saliency::SaliencyProvider;
use sagemix::sampling::{sample_beta, split_seed};
use sagemix::toymodel::{train, Augmentation, TrainConfig};
use sagemix::{LabeledCloud, Point3, PointCloud, Rng, SoftLabel};
use serde::Serialize;

use crate::{AugmentArgs, BenchArgs, CorruptArgs, CorruptionKind, GenDatasetArgs, Method, MixPairArgs, TrainToyArgs};

/// Largest size at which the benchmark also runs the exhaustive solver.
const BENCH_BRUTE_MAX: usize = 8;
const AGREEMENT_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] sagemix::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn mix_params(method: Method, sigma: Option<f64>, theta: Option<f64>) -> Result<MixParams> {
    match method {
        Method::Pointmixup if sigma.is_some() => eprintln!("warning: --sigma is unused by pointmixup"),
        Method::Rsmix if sigma.is_some() || theta.is_some() => {
            eprintln!("warning: --sigma and --theta are unused by rsmix")
        }
        _ => {}
    }
    let defaults = MixParams::default();
    MixParams::new(sigma.unwrap_or(defaults.sigma), theta.unwrap_or(defaults.theta))
        .map_err(|e| usage(e.to_string()))
}

fn mix(method: Method, a: &LabeledCloud, b: &LabeledCloud, params: &MixParams, rng: &mut Rng) -> Result<MixedSample> {
    let sample = match method {
        Method::Sagemix => sage_mix_with_provider(a, b, params, Some(&SaliencyProvider::Heuristic), rng)?,
        Method::Pointmixup => {
            let lambda = sample_beta(params.theta, rng)?;
            point_mixup(a, b, lambda)?
        }
        Method::Rsmix => rs_mix(a, b, DEFAULT_RSMIX_RADIUS, rng)?,
    };
    Ok(sample)
}

#[derive(Serialize)]
struct MixReport {
    method: String,
    seed: u64,
    points: usize,
    lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    query_alpha: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    query_beta: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assignment_cost: Option<f64>,
    per_point_lambda_path: String,
    label: Vec<f64>,
}

fn sidecar_path(out: &Path, ext: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

pub fn mix_pair(args: &MixPairArgs) -> Result<()> {
    let params = mix_params(args.method, args.sigma, args.theta)?;
    let label = |l: usize| SoftLabel::one_hot(l, args.classes).map_err(|e| usage(e.to_string()));
    let (label_a, label_b) = (label(args.label_a)?, label(args.label_b)?);

    let mut cloud_a = read_xyz(&args.a)?;
    let mut cloud_b = read_xyz(&args.b)?;
    if let Some(n) = args.resample {
        if n == 0 {
            return Err(usage("--resample must be at least 1"));
        }
        cloud_a = resample(&cloud_a, n, &mut Rng::child(args.seed, 1))?;
        cloud_b = resample(&cloud_b, n, &mut Rng::child(args.seed, 2))?;
    }
    let mut a = LabeledCloud::new(cloud_a, label_a);
    let mut b = LabeledCloud::new(cloud_b, label_b);
    if let Some(path) = &args.saliency_a {
        a = a.with_saliency(read_saliency(path)?)?;
    }
    if let Some(path) = &args.saliency_b {
        b = b.with_saliency(read_saliency(path)?)?;
    }

    let sample = mix(args.method, &a, &b, &params, &mut Rng::child(args.seed, 0))?;
    write_xyz(&args.out, &sample.cloud)?;

    if let Some(report_path) = &args.report {
        let lambda_path = sidecar_path(&args.out, ".lambda");
        write_values(&lambda_path, &sample.per_point_lambda)?;
        let report = MixReport {
            method: format!("{:?}", args.method).to_lowercase(),
            seed: args.seed,
            points: sample.cloud.len(),
            lambda: sample.lambda,
            pi: sample.draws.as_ref().map(|d| d.pi),
            query_alpha: sample.draws.as_ref().map(|d| d.query_pair.alpha),
            query_beta: sample.draws.as_ref().map(|d| d.query_pair.beta),
            assignment_cost: sample.assignment.as_ref().map(|a| a.cost()),
            per_point_lambda_path: lambda_path.display().to_string(),
            label: sample.label.probs().to_vec(),
        };
        let text = toml::to_string(&report).expect("report is plain key/value data");
        write_text(report_path, &text)?;
    }
    println!("lambda={}", sample.lambda);
    Ok(())
}

pub fn augment(args: &AugmentArgs) -> Result<()> {
    let params = mix_params(args.method, args.sigma, args.theta)?;
    if args.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let manifest = Manifest::load(&args.manifest)?;
    let n = manifest.entries.len();
    if n == 0 && args.count > 0 {
        return Err(sagemix::Error::InvalidArgument("manifest has no entries to mix".into()).into());
    }
    create_dir(&args.out_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| usage(e.to_string()))?;
    let samples: Vec<MixedSample> = pool.install(|| {
        (0..args.count)
            .into_par_iter()
            .map(|k| {
                let mut rng = Rng::child(args.seed, k as u64);
                let i = rng.below(n);
                let j = if n > 1 { (i + 1 + rng.below(n - 1)) % n } else { i };
                let a = load_entry(&manifest, &args.manifest, i)?;
                let b = load_entry(&manifest, &args.manifest, j)?;
                mix(args.method, &a, &b, &params, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = Manifest::new(manifest.class_count);
    for (k, sample) in samples.iter().enumerate() {
        let name = format!("mix_{k:05}.xyz");
        write_xyz(args.out_dir.join(&name), &sample.cloud)?;
        out.entries.push(ManifestEntry {
            cloud_path: name,
            soft_label: Some(sample.label.probs().to_vec()),
            ..Default::default()
        });
    }
    out.save(args.out_dir.join("manifest.toml"))?;
    println!("wrote {} samples", samples.len());
    Ok(())
}

pub fn gen_dataset(args: &GenDatasetArgs) -> Result<()> {
    if args.classes == 0 || args.classes > ShapeKind::ALL.len() {
        return Err(usage(format!("--classes must be in 1..={}", ShapeKind::ALL.len())));
    }
    if args.points == 0 {
        return Err(usage("--points must be at least 1"));
    }
    let clouds_dir = args.out_dir.join("clouds");
    create_dir(&clouds_dir)?;
    let mut manifest = Manifest::new(args.classes);
    for (class, kind) in ShapeKind::ALL[..args.classes].iter().enumerate() {
        for i in 0..args.per_class {
            let index = (class * args.per_class + i) as u64;
            let cloud = synth_shape(*kind, args.points, &mut Rng::child(args.seed, index))?;
            let name = format!("clouds/{}_{i:04}.xyz", kind.name());
            write_xyz(args.out_dir.join(&name), &cloud)?;
            manifest.entries.push(ManifestEntry {
                cloud_path: name,
                label_index: Some(class),
                ..Default::default()
            });
        }
    }
    manifest.save(args.out_dir.join("manifest.toml"))?;
    println!("wrote {} clouds", manifest.entries.len());
    Ok(())
}

pub fn train_toy(args: &TrainToyArgs) -> Result<()> {
    let augmentation: Augmentation = args.aug.parse().map_err(|e: sagemix::Error| usage(e.to_string()))?;
    let defaults = MixParams::default();
    if augmentation == Augmentation::SageMix && (args.sigma.is_none() || args.theta.is_none()) {
        println!(
            "using theta={} sigma={}",
            args.theta.unwrap_or(defaults.theta),
            args.sigma.unwrap_or(defaults.sigma)
        );
    }
    let mix_params = MixParams::new(args.sigma.unwrap_or(defaults.sigma), args.theta.unwrap_or(defaults.theta))
        .map_err(|e| usage(e.to_string()))?;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        seed: args.seed,
        hidden: args.hidden,
        augmentation,
        mix_params,
        ..TrainConfig::default()
    };
    if config.batch_size == 0 || config.hidden == 0 || !(config.learning_rate > 0.0) {
        return Err(usage("--batch-size, --hidden and --lr must be positive"));
    }
    let (_, train_set) = load_dataset(&args.manifest_train)?;
    let (_, test_set) = load_dataset(&args.manifest_test)?;
    let (_, metrics) = train(&train_set, &test_set, &config)?;

    let csv_err = |source| CliError::Csv {
        path: args.metrics_out.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&args.metrics_out).map_err(csv_err)?;
    w.write_record(["epoch", "loss", "oa"]).map_err(csv_err)?;
    for (epoch, oa) in metrics.test_accuracy.iter().enumerate() {
        let loss = match epoch {
            0 => String::new(),
            e => metrics.train_loss[e - 1].to_string(),
        };
        w.write_record([epoch.to_string(), loss, oa.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: args.metrics_out.clone(),
        source,
    })?;
    println!(
        "aug={} epochs={} seed={} final_oa={}",
        augmentation,
        args.epochs,
        args.seed,
        metrics.final_accuracy()
    );
    Ok(())
}

fn random_cloud(n: usize, rng: &mut Rng) -> PointCloud {
    let points = (0..n)
        .map(|_| {
            Point3::new(
                rng.uniform_range(-1.0, 1.0),
                rng.uniform_range(-1.0, 1.0),
                rng.uniform_range(-1.0, 1.0),
            )
        })
        .collect();
    PointCloud::new(points).expect("uniform draws are finite")
}

#[derive(Default)]
struct SolverStats {
    ms: Vec<f64>,
    ratios: Vec<f64>,
}

impl SolverStats {
    fn record(&mut self, start: Instant, cost: f64, exact: f64) {
        self.ms.push(start.elapsed().as_secs_f64() * 1e3);
        self.ratios.push(if exact > 0.0 { cost / exact } else { 1.0 });
    }
}

pub fn bench_assignment(args: &BenchArgs) -> Result<()> {
    if args.trials == 0 || args.n.iter().any(|&n| n == 0) {
        return Err(usage("--trials and every --n must be at least 1"));
    }
    let csv_err = |source| CliError::Csv {
        path: args.csv_out.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&args.csv_out).map_err(csv_err)?;
    w.write_record([
        "n",
        "solver",
        "trials",
        "mean_ms",
        "cost_ratio_vs_exact",
        "min_cost_ratio",
        "brute_force_agreement",
    ])
    .map_err(csv_err)?;

    for &n in &args.n {
        let with_brute = n <= BENCH_BRUTE_MAX;
        let (mut exact, mut greedy, mut brute) = (SolverStats::default(), SolverStats::default(), SolverStats::default());
        let mut agree = 0usize;
        for t in 0..args.trials {
            let mut rng = Rng::child(split_seed(args.seed, n as u64), t as u64);
            let a = random_cloud(n, &mut rng);
            let b = random_cloud(n, &mut rng);

            let start = Instant::now();
            let opt = optimal_assignment(&a, &b)?.cost();
            exact.record(start, opt, opt);

            let start = Instant::now();
            let g = greedy_assignment(&a, &b)?.cost();
            greedy.record(start, g, opt);

            if with_brute {
                let start = Instant::now();
                let bf = brute_force_assignment(&a, &b)?.cost();
                brute.record(start, bf, opt);
                if (opt - bf).abs() <= AGREEMENT_TOL * bf.max(1.0) {
                    agree += 1;
                }
            }
        }
        let agreement = if with_brute {
            (agree as f64 / args.trials as f64).to_string()
        } else {
            String::new()
        };
        let mut rows = vec![("exact", &exact), ("greedy", &greedy)];
        if with_brute {
            rows.push(("brute_force", &brute));
        }
        for (name, stats) in rows {
            let mean_ms = if args.omit_timing {
                0.0
            } else {
                stats.ms.iter().sum::<f64>() / stats.ms.len() as f64
            };
            let mean_ratio = stats.ratios.iter().sum::<f64>() / stats.ratios.len() as f64;
            let min_ratio = stats.ratios.iter().copied().fold(f64::INFINITY, f64::min);
            w.write_record([
                n.to_string(),
                name.to_string(),
                args.trials.to_string(),
                format!("{mean_ms:.4}"),
                mean_ratio.to_string(),
                min_ratio.to_string(),
                agreement.clone(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|source| CliError::Io {
        path: args.csv_out.clone(),
        source,
    })?;
    Ok(())
}

pub fn corrupt(args: &CorruptArgs) -> Result<()> {
    let cloud = read_xyz(&args.input)?;
    let seeded = || {
        args.seed
            .map(Rng::seed_from_u64)
            .ok_or_else(|| usage(format!("--seed is required for {:?}", args.kind).to_lowercase()))
    };
    let invalid = |e: sagemix::Error| match e {
        sagemix::Error::InvalidArgument(m) => usage(m),
        other => other.into(),
    };
    let out = match args.kind {
        CorruptionKind::Jitter => corrupt_jitter(&cloud, args.param, &mut seeded()?).map_err(invalid)?,
        CorruptionKind::Dropout => corrupt_dropout(&cloud, args.param, &mut seeded()?).map_err(invalid)?,
        CorruptionKind::Rotate => {
            let axis: Axis = args.axis.parse().map_err(|e: sagemix::Error| usage(e.to_string()))?;
            corrupt_rotate(&cloud, axis, args.param).map_err(invalid)?
        }
        CorruptionKind::Scale => corrupt_scale(&cloud, args.param).map_err(invalid)?,
    };
    write_xyz(&args.out, &out)?;
    Ok(())
}
