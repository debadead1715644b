//! Configuration-driven pipelines: each run writes a manifest, then its
//! JSON/CSV outputs, into one output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::empirical::{self, CompareReport, DecaySeries, GridSchedule, MODEL_TOLERANCE};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::map::{feigenbaum_parameter, Family, Observable, QuadraticMap, UnimodalMap};
use crate::renorm::{self, CyclePartition, DEFAULT_Q_MAX};
use crate::thermo::{self, RateCurve, WeightedChain, LOGDF};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Quadratic family member; `param = None` selects the Feigenbaum parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub family: Family,
    #[serde(default)]
    pub param: Option<f64>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { family: Family::Quadratic, param: None }
    }
}

impl MapConfig {
    pub fn build(&self) -> Result<QuadraticMap> {
        if self.family != Family::Quadratic {
            return Err(Error::Config("only the quadratic family can be configured from a file".into()));
        }
        let a = match self.param {
            Some(a) => a,
            None => feigenbaum_parameter(Family::Quadratic)?.value,
        };
        QuadraticMap::new(a)
    }
}

fn d_max_depth() -> usize {
    8
}
fn d_q_max() -> usize {
    DEFAULT_Q_MAX
}
fn d_refine() -> usize {
    8
}
fn d_depth_m() -> usize {
    6
}
fn d_obs_x() -> String {
    "x".into()
}
fn d_obs_logdf() -> String {
    LOGDF.into()
}
fn d_alphas() -> AlphaRange {
    AlphaRange { lo: 0.0, hi: 0.6, step: 0.05 }
}
fn d_check_alphas() -> Vec<f64> {
    vec![0.2, 0.3]
}
fn d_n() -> Vec<usize> {
    empirical::default_n_list()
}
fn d_tol() -> f64 {
    MODEL_TOLERANCE
}
fn d_t_grid() -> Vec<f64> {
    (0..=16).map(|k| -2.0 + 0.25 * k as f64).collect()
}

/// Inclusive grid `lo, lo + step, …, ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl AlphaRange {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.hi >= self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Config(format!("bad alpha range {}:{}:{}", self.lo, self.hi, self.step)));
        }
        let k = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        Ok((0..=k).map(|i| self.lo + i as f64 * self.step).collect())
    }

    /// Parses `lo:hi:step`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("expected lo:hi:step, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<f64> = parts.iter().map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let r = AlphaRange { lo: v[0], hi: v[1], step: v[2] };
        r.values()?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Pipeline {
    /// Cascade, classification and the partitions of every complete level.
    RenormScan {
        #[serde(default = "d_max_depth")]
        max_depth: usize,
        #[serde(default = "d_q_max")]
        q_max: usize,
        out: String,
    },
    /// Pressure of `t·obs + s·log|Df|` on a refined partition, plus its curve in `t`.
    Pressure {
        /// Partition JSON; when absent the partition of `level` is built from `map`.
        #[serde(default)]
        partition: Option<PathBuf>,
        #[serde(default)]
        level: usize,
        depth: usize,
        #[serde(default = "d_obs_x")]
        obs: String,
        t: f64,
        s: f64,
        #[serde(default = "d_t_grid")]
        t_grid: Vec<f64>,
        out: String,
    },
    Rate {
        #[serde(default = "d_obs_logdf")]
        obs: String,
        #[serde(default = "d_alphas")]
        alphas: AlphaRange,
        #[serde(default = "d_depth_m")]
        depth_m: usize,
        #[serde(default = "d_refine")]
        refine_depth: usize,
        #[serde(default = "d_max_depth")]
        max_depth: usize,
        out: String,
    },
    Deviate {
        #[serde(default = "d_obs_logdf")]
        obs: String,
        alpha: f64,
        /// Upper end of `L`; `None` means `[alpha, ∞)`.
        #[serde(default)]
        alpha_hi: Option<f64>,
        #[serde(default = "d_n")]
        n: Vec<usize>,
        #[serde(default)]
        grid: GridSchedule,
        out: String,
    },
    FeigenbaumCheck {
        #[serde(default = "d_check_alphas")]
        alphas: Vec<f64>,
        #[serde(default = "d_n")]
        n: Vec<usize>,
        #[serde(default)]
        grid: GridSchedule,
        #[serde(default = "d_depth_m")]
        depth_m: usize,
        #[serde(default = "d_refine")]
        refine_depth: usize,
        #[serde(default = "d_tol")]
        model_tolerance: f64,
        out: String,
    },
    /// Joins a saved rate curve with saved decay series.
    Compare {
        rate: PathBuf,
        series: Vec<PathBuf>,
        #[serde(default = "d_tol")]
        model_tolerance: f64,
        out: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub map: MapConfig,
    pub pipeline: Pipeline,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_out_dir")]
    pub out_dir: PathBuf,
}

fn d_out_dir() -> PathBuf {
    PathBuf::from(".")
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical (compact) serialization.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    I,
    #[serde(rename = "II-candidate")]
    IICandidate,
    #[serde(rename = "III-candidate")]
    IIICandidate,
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Case::I => "I",
            Case::IICandidate => "II-candidate",
            Case::IIICandidate => "III-candidate",
        })
    }
}

/// Heuristic case label. `I` is certain once an attracting cycle is seen;
/// the other two labels only record what a finite search found.
pub fn classify<M: UnimodalMap + ?Sized>(map: &M) -> Case {
    if renorm::find_attracting_cycle(map, 256, 1e-9).is_some() {
        return Case::I;
    }
    match renorm::cascade(map, d_max_depth(), DEFAULT_Q_MAX) {
        Ok(c) if c.truncated => {
            let qs: Vec<usize> = c.levels.iter().filter_map(|l| l.q).collect();
            let twos = qs.iter().filter(|&&q| q == 2).count();
            if 2 * twos > qs.len() {
                Case::IICandidate
            } else {
                Case::IIICandidate
            }
        }
        _ => Case::IIICandidate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub map: crate::map::UnimodalMapSpec,
    pub case: Case,
    pub attracting_cycle: Option<renorm::AttractingCycle>,
    pub cascade_depth: usize,
    pub cascade_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureSummary {
    pub potential: Vec<(String, f64)>,
    pub depth: usize,
    pub cylinders: usize,
    pub pressure: f64,
    pub error_bound: f64,
    pub entropy: f64,
    pub lyapunov: f64,
    pub obs_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeigenbaumReport {
    pub param: f64,
    pub classification: Case,
    pub rate_levels: usize,
    #[serde(flatten)]
    pub comparison: CompareReport,
}

/// Writes into one output directory and remembers every file.
struct Sink {
    dir: PathBuf,
    outputs: Vec<String>,
}

impl Sink {
    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let p = self.path(name);
        let mut w = BufWriter::new(File::create(&p)?);
        serde_json::to_writer_pretty(&mut w, v).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        std::io::Write::write_all(&mut w, b"\n")?;
        Ok(())
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(BufWriter<File>) -> Result<()>) -> Result<()> {
        let p = self.path(name);
        f(BufWriter::new(File::create(&p)?))
    }
}

/// Sibling file name: `rate.json` → `rate.csv`.
fn with_ext(name: &str, ext: &str) -> String {
    Path::new(name).with_extension(ext).to_string_lossy().into_owned()
}

fn stem(name: &str) -> String {
    Path::new(name).file_stem().map_or_else(|| name.to_string(), |s| s.to_string_lossy().into_owned())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let s = serde_json::to_string_pretty(m).expect("manifest serializes");
    fs::write(dir.join(MANIFEST_FILE), s + "\n")?;
    Ok(())
}

/// Runs the configured pipeline. The manifest is written before any
/// computation and again, with the finish time, after the last output.
pub fn run(config: &ExperimentConfig) -> Result<Manifest> {
    fs::create_dir_all(&config.out_dir)?;
    let mut manifest = Manifest {
        config_sha256: config.sha256(),
        seed: config.seed,
        tool_version: TOOL_VERSION.to_string(),
        started_at: now(),
        finished_at: None,
        outputs: Vec::new(),
    };
    write_manifest(&config.out_dir, &manifest)?;
    let mut sink = Sink { dir: config.out_dir.clone(), outputs: Vec::new() };
    let result = execute(config, &mut sink);
    manifest.outputs = sink.outputs;
    manifest.finished_at = Some(now());
    write_manifest(&config.out_dir, &manifest)?;
    result.map(|_| manifest)
}

fn parse_obs(s: &str) -> Result<Observable> {
    Observable::parse(s)
}

fn execute(config: &ExperimentConfig, sink: &mut Sink) -> Result<()> {
    match &config.pipeline {
        Pipeline::RenormScan { max_depth, q_max, out } => {
            let map = config.map.build()?;
            let cas = renorm::cascade(&map, *max_depth, *q_max)?;
            sink.json(out, &cas)?;
            let partitions: Vec<CyclePartition> = (0..cas.depth_found)
                .map(|m| renorm::build_partition(&map, &cas, m))
                .collect::<Result<_>>()?;
            for p in &partitions {
                sink.json(&format!("{}_partition_{}.json", stem(out), p.m), p)?;
            }
            let class = Classification {
                map: map.spec().clone(),
                case: classify(&map),
                attracting_cycle: renorm::find_attracting_cycle(&map, 256, 1e-9),
                cascade_depth: cas.depth_found,
                cascade_truncated: cas.truncated,
            };
            sink.json(&format!("{}_classification.json", stem(out)), &class)
        }
        Pipeline::Pressure { partition, level, depth, obs, t, s, t_grid, out } => {
            let (map, part) = match partition {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    let part: CyclePartition = serde_json::from_str(&text)?;
                    (part.map.instantiate()?, part)
                }
                None => {
                    let map = config.map.build()?;
                    let cas = renorm::cascade(&map, level + 1, DEFAULT_Q_MAX)?;
                    let part = renorm::build_partition(&map, &cas, *level)?;
                    (map, part)
                }
            };
            let phi = parse_obs(obs)?;
            let id = phi.id();
            let chain = WeightedChain::refine(&map, &part, *depth, std::slice::from_ref(&phi))?;
            let coeff = thermo::coefficients(&[(&id, *t), (LOGDF, *s)]);
            let eq = thermo::equilibrium_stats(&chain, &coeff)?;
            let summary = PressureSummary {
                potential: coeff.iter().map(|(k, v)| (k.clone(), *v)).collect(),
                depth: *depth,
                cylinders: chain.len(),
                pressure: eq.pressure,
                error_bound: thermo::pressure_error_bound(&chain, &coeff)?,
                entropy: eq.h,
                lyapunov: eq.chi,
                obs_mean: eq.means[&id],
            };
            sink.json(out, &summary)?;
            let base = thermo::coefficients(&[(LOGDF, *s)]);
            let curve = thermo::pressure_curve(&chain, &base, &id, t_grid)?;
            sink.csv(&with_ext(out, "csv"), |w| curve.write_csv(w))
        }
        Pipeline::Rate { obs, alphas, depth_m, refine_depth, max_depth, out } => {
            let map = config.map.build()?;
            let cas = renorm::cascade(&map, *max_depth, DEFAULT_Q_MAX)?;
            let rc = thermo::rate_level1(&map, &cas, &parse_obs(obs)?, &alphas.values()?, *depth_m, *refine_depth)?;
            sink.json(out, &rc)?;
            sink.csv(&with_ext(out, "csv"), |w| rc.write_csv(w))
        }
        Pipeline::Deviate { obs, alpha, alpha_hi, n, grid, out } => {
            let map = config.map.build()?;
            let hi = alpha_hi.unwrap_or(f64::INFINITY);
            if !(hi >= *alpha) {
                return Err(Error::Config("alpha_hi below alpha".into()));
            }
            let series = empirical::decay_series(&map, &parse_obs(obs)?, Interval { lo: *alpha, hi }, n, grid, config.seed)?;
            sink.json(out, &series)?;
            sink.csv(&with_ext(out, "csv"), |w| series.write_csv(w))?;
            if series.fit.is_none() {
                return Err(empirical::fit_decay(&series.rows, map.domain().width()).unwrap_err());
            }
            Ok(())
        }
        Pipeline::FeigenbaumCheck { alphas, n, grid, depth_m, refine_depth, model_tolerance, out } => {
            let map = MapConfig { family: Family::Quadratic, param: None }.build()?;
            let cas = renorm::cascade(&map, d_max_depth(), DEFAULT_Q_MAX)?;
            let alpha_grid = d_alphas().values()?;
            let rc = thermo::rate_level1(&map, &cas, &Observable::LogAbsDeriv, &alpha_grid, *depth_m, *refine_depth)?;
            sink.csv(&format!("{}_rate.csv", stem(out)), |w| rc.write_csv(w))?;
            let mut all = Vec::new();
            for &a in alphas {
                let s = empirical::lyapunov_tail(&map, a, n, grid, config.seed)?;
                sink.csv(&format!("{}_tail_{a}.csv", stem(out)), |w| s.write_csv(w))?;
                all.push(s);
            }
            let comparison = empirical::compare(&rc, &all, *model_tolerance)?;
            let report = FeigenbaumReport {
                param: map.param(),
                classification: classify(&map),
                rate_levels: rc.levels,
                comparison,
            };
            sink.json(out, &report)
        }
        Pipeline::Compare { rate, series, model_tolerance, out } => {
            let read = |p: &PathBuf| fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())));
            let rc: RateCurve = serde_json::from_str(&read(rate)?)?;
            let all: Vec<DecaySeries> = series.iter().map(|p| Ok(serde_json::from_str(&read(p)?)?)).collect::<Result<_>>()?;
            sink.json(out, &empirical::compare(&rc, &all, *model_tolerance)?)
        }
    }
}

/// The structured JSON written to stderr on failure.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({
        "error": { "class": e.class(), "exit_code": e.exit_code(), "message": e.to_string() }
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renorm::Cascade;

    fn cfg(pipeline: Pipeline, dir: &Path, param: Option<f64>) -> ExperimentConfig {
        ExperimentConfig {
            map: MapConfig { family: Family::Quadratic, param },
            pipeline,
            seed: 3,
            out_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn config_round_trips() {
        let c = cfg(
            Pipeline::Deviate {
                obs: "logdf".into(),
                alpha: 0.2,
                alpha_hi: None,
                n: vec![8, 16],
                grid: GridSchedule::Auto { base: 1000, cap: 4000 },
                out: "d.json".into(),
            },
            Path::new("out"),
            Some(3.9),
        );
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.sha256(), c.sha256());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let top = r#"{"pipeline": {"kind": "rate", "out": "r.json"}, "sede": 1}"#;
        let inner = r#"{"pipeline": {"kind": "rate", "out": "r.json", "depth": 3}}"#;
        let map = r#"{"map": {"family": "quadratic", "a": 3.2}, "pipeline": {"kind": "rate", "out": "r.json"}}"#;
        for s in [top, inner, map] {
            let e = ExperimentConfig::from_json(s).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{s}");
        }
        assert!(ExperimentConfig::from_json(r#"{"pipeline": {"kind": "rate", "out": "r.json"}}"#).is_ok());
    }

    #[test]
    fn schema_lists_every_pipeline() {
        let schema: serde_json::Value = serde_json::from_str(include_str!("../config.schema.json")).unwrap();
        let kinds: Vec<&str> = schema["properties"]["pipeline"]["oneOf"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v["properties"]["kind"]["const"].as_str().unwrap())
            .collect();
        assert_eq!(kinds, ["renorm-scan", "pressure", "rate", "deviate", "feigenbaum-check", "compare"]);
        let grid = serde_json::to_value(GridSchedule::default()).unwrap();
        assert_eq!(grid, schema["$defs"]["grid"]["default"]);
    }

    #[test]
    fn alpha_ranges() {
        assert_eq!(AlphaRange::parse("0:0.6:0.05").unwrap().values().unwrap().len(), 13);
        assert!(AlphaRange::parse("0:1").is_err());
        assert!(AlphaRange::parse("0:1:0").is_err());
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify(&QuadraticMap::new(3.2).unwrap()), Case::I);
        assert_eq!(classify(&MapConfig::default().build().unwrap()), Case::IICandidate);
        assert_eq!(classify(&QuadraticMap::new(4.0).unwrap()), Case::IIICandidate);
    }

    #[test]
    fn renorm_scan_writes_cascade_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(Pipeline::RenormScan { max_depth: 8, q_max: 16, out: "cascade.json".into() }, dir.path(), Some(3.55));
        let m = run(&c).unwrap();
        let cas: Cascade = serde_json::from_str(&fs::read_to_string(dir.path().join("cascade.json")).unwrap()).unwrap();
        assert!(cas.depth_found >= 3);
        assert!(m.outputs.contains(&"cascade_partition_0.json".to_string()));
        let saved: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(saved, m);
        assert!(saved.finished_at.is_some());
    }

    #[test]
    fn failing_run_still_leaves_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        // a = 4 has no restrictive interval, so level 0 has no partition.
        let c = cfg(
            Pipeline::Pressure {
                partition: None,
                level: 0,
                depth: 4,
                obs: "x".into(),
                t: 1.0,
                s: 0.0,
                t_grid: vec![0.0, 1.0],
                out: "p.json".into(),
            },
            dir.path(),
            Some(4.0),
        );
        let e = run(&c).unwrap_err();
        assert_eq!(e.exit_code(), 4);
        assert!(dir.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn outputs_are_reproducible() {
        let pipeline = Pipeline::Deviate {
            obs: "logdf".into(),
            alpha: 0.3,
            alpha_hi: None,
            n: vec![4, 8, 16],
            grid: GridSchedule::Constant(20_000),
            out: "dev.json".into(),
        };
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run(&cfg(pipeline.clone(), d1.path(), Some(3.9))).unwrap();
        run(&cfg(pipeline, d2.path(), Some(3.9))).unwrap();
        for f in ["dev.json", "dev.csv"] {
            assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap());
        }
    }
}
