use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use unimodal_ldp::empirical::{self, GridSchedule, MODEL_TOLERANCE};
use unimodal_ldp::runner::{self, AlphaRange, ExperimentConfig, MapConfig, Pipeline};
use unimodal_ldp::{Error, Family, Result};

#[derive(Parser)]
#[command(name = "ldp", version, about = "Renormalization, pressure and large-deviation rates of unimodal maps")]
struct Cli {
    /// Master seed for stratified sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run a JSON experiment config; the remaining global flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long, default_value = "quadratic")]
    family: String,
    /// A number, or `feigenbaum`.
    #[arg(long, default_value = "feigenbaum")]
    param: String,
}

impl MapArgs {
    fn config(&self) -> Result<MapConfig> {
        let family = match self.family.as_str() {
            "quadratic" => Family::Quadratic,
            other => return Err(Error::Config(format!("unsupported family {other:?}"))),
        };
        let param = match self.param.as_str() {
            "feigenbaum" => None,
            s => Some(s.parse().map_err(|_| Error::Config(format!("bad --param {s:?}")))?),
        };
        Ok(MapConfig { family, param })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Renormalization cascade, partitions and case label.
    Renorm {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = 8)]
        max_depth: usize,
        #[arg(long, default_value_t = 16)]
        qmax: usize,
        #[arg(long, default_value = "cascade.json")]
        out: String,
    },
    /// Pressure of `t·obs + s·log|Df|` on a refined partition.
    Pressure {
        /// Partition JSON written by `renorm`; otherwise built from --param/--level.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = 0)]
        level: usize,
        #[arg(long)]
        depth: usize,
        /// `t=<v>,s=<v>`.
        #[arg(long, default_value = "t=0,s=0")]
        coeff: String,
        #[arg(long, default_value = "x")]
        obs: String,
        /// `lo:hi:step` grid for the pressure curve in t.
        #[arg(long)]
        t_grid: Option<String>,
        #[arg(long, default_value = "pressure.json")]
        out: String,
    },
    /// Level-1 rate function from the cascade chains.
    Rate {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value = "logdf")]
        obs: String,
        #[arg(long, default_value = "0:0.6:0.05")]
        alphas: String,
        #[arg(long, default_value_t = 6)]
        depth_m: usize,
        #[arg(long, default_value_t = 8)]
        refine_depth: usize,
        #[arg(long, default_value_t = 8)]
        max_depth: usize,
        #[arg(long, default_value = "rate.json")]
        out: String,
    },
    /// Lebesgue decay of `{(1/n) S_n φ ∈ [alpha, alpha_hi]}`.
    Deviate {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value = "logdf")]
        obs: String,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        alpha_hi: Option<f64>,
        /// `lo:hi:geom`, `lo:hi:step` or a comma list.
        #[arg(long, default_value = "32:256:geom")]
        n: String,
        /// `auto`, `auto:<base>:<cap>` or a fixed grid size.
        #[arg(long, default_value = "auto")]
        grid: String,
        #[arg(long, default_value = "deviate.json")]
        out: String,
    },
    /// Rate curve against empirical tails at the Feigenbaum parameter.
    FeigenbaumCheck {
        #[arg(long, default_value = "0.2,0.3", value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, default_value = "32:256:geom")]
        n: String,
        #[arg(long, default_value = "auto")]
        grid: String,
        #[arg(long, default_value_t = 6)]
        depth_m: usize,
        #[arg(long, default_value_t = 8)]
        refine_depth: usize,
        #[arg(long, default_value_t = MODEL_TOLERANCE)]
        model_tolerance: f64,
        #[arg(long, default_value = "report.json")]
        out: String,
    },
    /// Compare a saved rate curve with saved decay series.
    Compare {
        #[arg(long)]
        rate: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        series: Vec<PathBuf>,
        #[arg(long, default_value_t = MODEL_TOLERANCE)]
        model_tolerance: f64,
        #[arg(long, default_value = "report.json")]
        out: String,
    },
}

fn parse_n(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad --n {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [lo, hi, "geom"] => empirical::geometric_n(lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?),
        [lo, hi, step] => {
            let (lo, hi, step): (usize, usize, usize) =
                (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?, step.parse().map_err(|_| bad())?);
            if step == 0 || lo == 0 || hi < lo {
                return Err(bad());
            }
            Ok((lo..=hi).step_by(step).collect())
        }
        [list] => list.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect(),
        _ => Err(bad()),
    }
}

fn parse_grid(s: &str) -> Result<GridSchedule> {
    let bad = || Error::Config(format!("bad --grid {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["auto"] => Ok(GridSchedule::default()),
        ["auto", base, cap] => Ok(GridSchedule::Auto {
            base: base.parse().map_err(|_| bad())?,
            cap: cap.parse().map_err(|_| bad())?,
        }),
        [g] => Ok(GridSchedule::Constant(g.parse().map_err(|_| bad())?)),
        _ => Err(bad()),
    }
}

fn parse_coeff(s: &str) -> Result<(f64, f64)> {
    let (mut t, mut sv) = (0.0, 0.0);
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| Error::Config(format!("bad --coeff entry {part:?}")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("bad --coeff value {v:?}")))?;
        match k.trim() {
            "t" => t = v,
            "s" => sv = v,
            other => return Err(Error::Config(format!("unknown coefficient {other:?}; use t and s"))),
        }
    }
    Ok((t, sv))
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match (&cli.config, &cli.command) {
        (Some(_), Some(_)) => return Err(Error::Config("give either --config or a subcommand, not both".into())),
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(cmd)) => from_command(cmd)?,
        (None, None) => return Err(Error::Config("no subcommand; see --help".into())),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        config.out_dir = dir.clone();
    }
    Ok(config)
}

fn from_command(cmd: &Command) -> Result<ExperimentConfig> {
    let (map, pipeline) = match cmd {
        Command::Renorm { map, max_depth, qmax, out } => {
            (map.config()?, Pipeline::RenormScan { max_depth: *max_depth, q_max: *qmax, out: out.clone() })
        }
        Command::Pressure { partition, map, level, depth, coeff, obs, t_grid, out } => {
            let (t, s) = parse_coeff(coeff)?;
            let t_grid = match t_grid {
                Some(g) => AlphaRange::parse(g)?.values()?,
                None => vec![t],
            };
            (
                map.config()?,
                Pipeline::Pressure {
                    partition: partition.clone(),
                    level: *level,
                    depth: *depth,
                    obs: obs.clone(),
                    t,
                    s,
                    t_grid,
                    out: out.clone(),
                },
            )
        }
        Command::Rate { map, obs, alphas, depth_m, refine_depth, max_depth, out } => (
            map.config()?,
            Pipeline::Rate {
                obs: obs.clone(),
                alphas: AlphaRange::parse(alphas)?,
                depth_m: *depth_m,
                refine_depth: *refine_depth,
                max_depth: *max_depth,
                out: out.clone(),
            },
        ),
        Command::Deviate { map, obs, alpha, alpha_hi, n, grid, out } => (
            map.config()?,
            Pipeline::Deviate {
                obs: obs.clone(),
                alpha: *alpha,
                alpha_hi: *alpha_hi,
                n: parse_n(n)?,
                grid: parse_grid(grid)?,
                out: out.clone(),
            },
        ),
        Command::FeigenbaumCheck { alphas, n, grid, depth_m, refine_depth, model_tolerance, out } => (
            MapConfig::default(),
            Pipeline::FeigenbaumCheck {
                alphas: alphas.clone(),
                n: parse_n(n)?,
                grid: parse_grid(grid)?,
                depth_m: *depth_m,
                refine_depth: *refine_depth,
                model_tolerance: *model_tolerance,
                out: out.clone(),
            },
        ),
        Command::Compare { rate, series, model_tolerance, out } => (
            MapConfig::default(),
            Pipeline::Compare {
                rate: rate.clone(),
                series: series.clone(),
                model_tolerance: *model_tolerance,
                out: out.clone(),
            },
        ),
    };
    Ok(ExperimentConfig { map, pipeline, seed: 0, out_dir: PathBuf::from(".") })
}

fn main_inner(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let config = build_config(cli)?;
    let manifest = runner::run(&config)?;
    println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let err = Error::Config(e.to_string().trim().to_string());
            eprintln!("{}", runner::error_json(&err));
            return ExitCode::from(err.exit_code() as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", runner::error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
