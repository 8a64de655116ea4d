//! `idlab` command-line front-end.
//!
//! Every subcommand prints its JSON result on stdout. With `--out-dir`
//! the JSON is also written there, next to any file artifacts (clouds,
//! token files, plot-data CSV). Exit codes: 0 success, 1 data error,
//! 2 usage error; failures print `{"error": KIND, "message": ...}` on
//! stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use idlab::bench::{accuracy_matrix, BenchConfig};
use idlab::estimators::{estimate_many, EstimatorSpec};
use idlab::manifolds::{generate, Family, ManifoldSpec};
use idlab::profiles::{aggregate, convergence_multi, profile};
use idlab::stats::{correlation_matrix, linkage_report, MetricTable, REQUIRED_LINKAGE_COLUMNS};
use idlab::tensor_io::{load_layer_stack, load_matrix, save_matrix};
use idlab::textstats::{
    adaptation_metrics, dataset_ppl, descriptors, AdaptationLog, NllRecord, TokenDataset,
    VocabBijection,
};
use idlab::{IdError, RunManifest};

#[derive(Parser, Debug)]
#[command(
    name = "idlab",
    version,
    about = "Intrinsic dimension, perplexity and correlation analysis"
)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct EstimatorArgs {
    /// Estimator name (repeatable where noted).
    #[arg(long = "estimator", required = true)]
    estimators: Vec<String>,
    /// Hyperparameter override, `key=value` (repeatable).
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the intrinsic dimension of an NPY point cloud.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Per-layer ID profile of a run manifest.
    Profile {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Mean and spread of estimates over random subsamples.
    Converge {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Subsampling seeds (default: seed, seed+1, seed+2).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Sample a synthetic manifold into an NPY file.
    Generate {
        #[arg(long)]
        family: String,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        ambient: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Output path (default: OUT_DIR/FAMILY_dD.npy).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Structure ablation of a token dataset.
    Transform {
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Apply the inverse of a saved bijection instead of drawing one
        /// (swapped mode only).
        #[arg(long)]
        inverse: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Shallow descriptors of a token dataset.
    Describe {
        #[arg(long)]
        tokens: PathBuf,
    },
    /// Perplexity and coding length from per-token NLLs.
    Ppl {
        #[arg(long)]
        nll: PathBuf,
        /// Token file to check line and length alignment against.
        #[arg(long)]
        tokens: Option<PathBuf>,
    },
    /// Convergence point and sample complexity of a finetuning log.
    Adapt {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 3)]
        patience: usize,
    },
    /// Masked Spearman correlation matrix of a metric table.
    Correlate {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
    },
    /// Estimator accuracy matrix over the synthetic manifold suite.
    Bench {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        ambient: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 5, 10])]
        dims: Vec<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Permuted,
    Swapped,
    Random,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate { .. } => "estimate",
            Command::Profile { .. } => "profile",
            Command::Converge { .. } => "converge",
            Command::Generate { .. } => "generate",
            Command::Transform { .. } => "transform",
            Command::Describe { .. } => "describe",
            Command::Ppl { .. } => "ppl",
            Command::Adapt { .. } => "adapt",
            Command::Correlate { .. } => "correlate",
            Command::Bench { .. } => "bench",
        }
    }
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Permuted => "permuted",
            Mode::Swapped => "swapped",
            Mode::Random => "random",
        }
    }
}

enum Failure {
    Usage(String),
    Data(IdError),
}

impl From<IdError> for Failure {
    fn from(e: IdError) -> Self {
        Failure::Data(e)
    }
}

/// Errors caused by the flags themselves.
fn usage(e: IdError) -> Failure {
    Failure::Usage(e.to_string())
}

type CmdResult = Result<Value, Failure>;

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|e| format!("bad value in '{s}': {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn specs(args: &EstimatorArgs) -> Result<Vec<EstimatorSpec>, IdError> {
    args.estimators
        .iter()
        .map(|name| {
            let mut spec = EstimatorSpec::parse(name)?;
            for (k, v) in &args.params {
                spec = spec.with_param(k, *v)?;
            }
            Ok(spec)
        })
        .collect()
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("output types serialize")
}

struct Ctx {
    seed: u64,
    out_dir: Option<PathBuf>,
}

impl Ctx {
    fn dir(&self) -> &Path {
        self.out_dir.as_deref().unwrap_or(Path::new("."))
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, IdError> {
        let path = self.dir().join(name);
        fs::write(&path, contents).map_err(|e| IdError::io(&path, e))?;
        Ok(path)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

fn run(cli: Cli) -> CmdResult {
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    let name = cli.command.name();
    if let Some(dir) = &ctx.out_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(IdError::io(dir, e)))?;
    }
    match cli.command {
        Command::Estimate { input, est } => {
            let cloud = load_matrix(&input)?;
            let specs = specs(&est).map_err(usage)?;
            let mut results = Vec::new();
            for r in estimate_many(&specs, &cloud) {
                results.push(to_value(&r?));
            }
            Ok(if results.len() == 1 {
                results.remove(0)
            } else {
                Value::Array(results)
            })
        }
        Command::Profile { manifest, est } => {
            let m = RunManifest::from_file(&manifest)?;
            let stack = load_layer_stack(&m)?;
            let mut out = Vec::new();
            for spec in specs(&est).map_err(usage)? {
                let p = profile(&stack, &spec, &m.dataset_id, &m.model_id)?;
                let agg = aggregate(&p)?;
                out.push(json!({ "profile": p, "aggregate": agg }));
            }
            Ok(if out.len() == 1 {
                out.remove(0)
            } else {
                Value::Array(out)
            })
        }
        Command::Converge {
            input,
            est,
            sizes,
            seeds,
        } => {
            let cloud = load_matrix(&input)?;
            let seeds = if seeds.is_empty() {
                vec![ctx.seed, ctx.seed + 1, ctx.seed + 2]
            } else {
                seeds
            };
            let specs = specs(&est).map_err(usage)?;
            let curves = convergence_multi(&cloud, &specs, &sizes, &seeds)?;
            let mut csv = String::from("estimator,size,mean_id,std_id\n");
            for c in &curves {
                for ((s, m), sd) in c.sizes.iter().zip(&c.mean_id).zip(&c.std_id) {
                    csv.push_str(&format!("{},{s},{m},{sd}\n", c.estimator.name));
                }
            }
            ctx.write(&format!("{}_convergence.csv", stem(&input)), &csv)?;
            Ok(if curves.len() == 1 {
                to_value(&curves[0])
            } else {
                to_value(&curves)
            })
        }
        Command::Generate {
            family,
            d,
            ambient,
            n,
            noise,
            output,
        } => {
            let family: Family = family.parse().map_err(usage)?;
            let spec = ManifoldSpec::new(family, d, ambient, n)
                .with_seed(ctx.seed)
                .with_noise(noise);
            spec.validate().map_err(usage)?;
            let (cloud, truth) = generate(&spec)?;
            let path = output.unwrap_or_else(|| ctx.dir().join(format!("{family}_d{d}.npy")));
            save_matrix(&cloud, &path)?;
            let sidecar = json!({ "spec": spec, "ground_truth_id": truth, "path": path });
            let side_path = path.with_extension("json");
            fs::write(
                &side_path,
                serde_json::to_string_pretty(&sidecar).expect("json"),
            )
            .map_err(|e| IdError::io(&side_path, e))?;
            Ok(sidecar)
        }
        Command::Transform {
            tokens,
            mode,
            inverse,
            output,
        } => {
            let data = TokenDataset::load(&tokens)?;
            if inverse.is_some() && mode != Mode::Swapped {
                return Err(Failure::Usage(
                    "--inverse only applies to --mode swapped".into(),
                ));
            }
            let path = output.unwrap_or_else(|| {
                let suffix = if inverse.is_some() {
                    "unswapped"
                } else {
                    mode.as_str()
                };
                ctx.dir().join(format!("{}.{suffix}.jsonl", stem(&tokens)))
            });
            let mut report = json!({ "mode": mode.as_str(), "output": path, "seed": ctx.seed });
            let out = match (mode, inverse) {
                (Mode::Permuted, _) => data.permuted(ctx.seed),
                (Mode::Random, _) => data.random(ctx.seed)?,
                (Mode::Swapped, Some(bij)) => {
                    let text = fs::read_to_string(&bij).map_err(|e| IdError::io(&bij, e))?;
                    let sigma: VocabBijection =
                        serde_json::from_str(&text).map_err(IdError::from)?;
                    sigma.inverse().apply(&data)
                }
                (Mode::Swapped, None) => {
                    let (out, sigma) = data.swapped(ctx.seed);
                    let bij = path.with_extension("bijection.json");
                    fs::write(&bij, serde_json::to_string(&sigma).expect("json"))
                        .map_err(|e| IdError::io(&bij, e))?;
                    report["bijection"] = to_value(&bij);
                    out
                }
            };
            out.save(&path)?;
            Ok(report)
        }
        Command::Describe { tokens } => Ok(to_value(&descriptors(&TokenDataset::load(&tokens)?)?)),
        Command::Ppl { nll, tokens } => {
            let rec = NllRecord::load(&nll)?;
            if let Some(t) = tokens {
                rec.check_alignment(&TokenDataset::load(&t)?)?;
            }
            Ok(to_value(&dataset_ppl(&rec)?))
        }
        Command::Adapt { log, patience } => Ok(to_value(&adaptation_metrics(
            &AdaptationLog::load(&log)?,
            patience,
        )?)),
        Command::Correlate { table, alpha } => {
            let t = MetricTable::load(&table)?;
            let m = correlation_matrix(&t, alpha)?;
            let mut csv = format!("metric,{}\n", m.columns.join(","));
            for (i, name) in m.columns.iter().enumerate() {
                csv.push_str(name);
                for j in 0..m.columns.len() {
                    csv.push(',');
                    if let (false, Some(c)) = (m.mask[i][j], &m.cells[i][j]) {
                        csv.push_str(&c.rho.to_string());
                    }
                }
                csv.push('\n');
            }
            ctx.write(&format!("{}_correlation.csv", stem(&table)), &csv)?;
            let mut out = json!({ "matrix": m });
            if REQUIRED_LINKAGE_COLUMNS
                .iter()
                .all(|c| t.column(c).is_some())
            {
                out["linkage"] = to_value(&linkage_report(&t)?);
            }
            Ok(out)
        }
        Command::Bench { n, ambient, dims } => {
            let config = BenchConfig {
                n,
                d_ambient: ambient,
                max_dim: dims.iter().copied().max().unwrap_or(10),
                dims,
                seed: ctx.seed,
            };
            let report = accuracy_matrix(&config)?;
            for c in report.cases.iter().filter(|c| !c.pass) {
                log::error!(
                    "{} d={} {}: {:?} outside +/-{}",
                    c.family,
                    c.d_intrinsic,
                    c.estimator,
                    c.value,
                    c.tolerance
                );
            }
            if !report.all_pass() {
                return Err(Failure::Data(IdError::Quality(format!(
                    "{} of {} bench cases out of tolerance",
                    report.cases.iter().filter(|c| !c.pass).count(),
                    report.cases.len()
                ))));
            }
            Ok(to_value(&report))
        }
    }
    .and_then(|v: Value| {
        if let Some(dir) = &ctx.out_dir {
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, serde_json::to_string_pretty(&v).expect("json"))
                .map_err(|e| Failure::Data(IdError::io(&path, e)))?;
        }
        Ok(v)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            eprintln!(
                "{}",
                json!({ "error": "UsageError", "message": message.trim() })
            );
            return ExitCode::from(2);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(v) => {
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(
                std::io::stdout().lock(),
                "{}",
                serde_json::to_string_pretty(&v).expect("json")
            );
            ExitCode::SUCCESS
        }
        Err(f) => {
            let (code, kind, message) = match f {
                Failure::Usage(m) => (2, "UsageError", m),
                Failure::Data(e) => (1, e.kind(), e.to_string()),
            };
            eprintln!("{}", json!({ "error": kind, "message": message }));
            ExitCode::from(code)
        }
    }
}
