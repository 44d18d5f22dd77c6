//! Library half of the `bisectquest` command: config resolution, CSV
//! output, the verification report and the interactive oracle session.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use bisectquest::bounds::{hgr, mse_lower_bound, mse_upper_bound, multi_human_bounds};
use bisectquest::info::capacity_bsc;
use bisectquest::sim::{run_trial_with, scenario_rates, Snapshot};
use bisectquest::{
    bisect_query, construct_joint_queries_1d, joint_gain, sequential_expected_entropy_loss,
    unknown_eps_query, verify_equalization, Channel, EpsAxis, GridPosterior, JointGridPosterior,
    MseCurve, QueryRegion, Rect, ScenarioConfig, UniformMeasure,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{0}")]
    Runtime(#[from] bisectquest::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerifyFailed(_) => 1,
            CliError::Config { .. } => 2,
            _ => 3,
        }
    }

    fn config(path: &Path, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Applies `key=value` overrides to a JSON document.
///
/// Keys are dotted paths; numeric segments index arrays
/// (`players.0.eps=0.3`). Values are parsed as JSON, falling back to a
/// plain string.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<(), String> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| format!("override `{item}` is not key=value"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut *doc;
        for seg in key.split('.') {
            slot = match slot {
                Value::Object(map) => map.entry(seg).or_insert(Value::Null),
                Value::Array(items) => {
                    let i: usize = seg
                        .parse()
                        .map_err(|_| format!("override `{key}`: `{seg}` is not an array index"))?;
                    let len = items.len();
                    items
                        .get_mut(i)
                        .ok_or_else(|| format!("override `{key}`: index {i} out of range ({len})"))?
                }
                Value::Null => {
                    *slot = Value::Object(Default::default());
                    match slot {
                        Value::Object(map) => map.entry(seg).or_insert(Value::Null),
                        _ => unreachable!(),
                    }
                }
                _ => return Err(format!("override `{key}`: cannot descend into a scalar")),
            };
        }
        *slot = value;
    }
    Ok(())
}

/// Metadata written next to every result file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub wall_time_secs: f64,
    pub library_version: String,
}

/// Reads a JSON document of type `T` from `path`, applying overrides.
///
/// A results sidecar is accepted in place of a config: its `config`
/// member is used.
pub fn load_json<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(path, e.to_string()))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| CliError::config(path, e.to_string()))?;
    let is_sidecar = doc.get("library_version").is_some() && doc.get("config").is_some();
    if !is_sidecar && overrides.is_empty() {
        // straight from the text so errors carry line and column
        let mut de = serde_json::Deserializer::from_str(&text);
        return serde_path_to_error::deserialize(&mut de).map_err(|e| describe(path, e));
    }
    if is_sidecar {
        doc = doc["config"].take();
    }
    apply_overrides(&mut doc, overrides).map_err(|m| CliError::config(path, m))?;
    serde_path_to_error::deserialize(doc).map_err(|e| describe(path, e))
}

fn describe(path: &Path, e: serde_path_to_error::Error<serde_json::Error>) -> CliError {
    let field = e.path().to_string();
    let inner = e.into_inner();
    if field == "." {
        CliError::config(path, inner.to_string())
    } else {
        CliError::config(path, format!("field `{field}`: {inner}"))
    }
}

/// Loads and validates a scenario.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = load_json(path, overrides)?;
    cfg.validate().map_err(|e| CliError::config(path, e.to_string()))?;
    Ok(cfg)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Writes `n,mse_x,stderr_x[,mse_eps,stderr_eps]` with round-trip floats.
pub fn write_curve<W: Write>(out: W, curve: &MseCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_eps = curve.mse_eps.is_some();
    let mut header = vec!["n", "mse_x", "stderr_x"];
    if with_eps {
        header.extend(["mse_eps", "stderr_eps"]);
    }
    w.write_record(&header)?;
    for (i, n) in curve.n_values.iter().enumerate() {
        let mut row = vec![n.to_string(), fmt_f64(curve.mse_x[i]), fmt_f64(curve.stderr_x[i])];
        if let (Some(m), Some(s)) = (&curve.mse_eps, &curve.stderr_eps) {
            row.push(fmt_f64(m[i]));
            row.push(fmt_f64(s[i]));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err("writing csv"))?;
    Ok(())
}

/// Parses a file written by [`write_curve`].
pub fn read_curve<R: std::io::Read>(input: R) -> Result<MseCurve> {
    let mut r = csv::Reader::from_reader(input);
    let with_eps = r.headers()?.len() == 5;
    let mut curve = MseCurve {
        n_values: Vec::new(),
        mse_x: Vec::new(),
        stderr_x: Vec::new(),
        mse_eps: with_eps.then(Vec::new),
        stderr_eps: with_eps.then(Vec::new),
    };
    let bad = |field: &str| CliError::Io {
        context: "reading csv".into(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad value `{field}`")),
    };
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&rec[i]));
        curve.n_values.push(rec[0].parse().map_err(|_| bad(&rec[0]))?);
        curve.mse_x.push(num(1)?);
        curve.stderr_x.push(num(2)?);
        if with_eps {
            curve.mse_eps.as_mut().expect("eps columns").push(num(3)?);
            curve.stderr_eps.as_mut().expect("eps columns").push(num(4)?);
        }
    }
    Ok(curve)
}

/// `<out>.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(format!("writing {}", path.display())))
}

/// Runs a Monte Carlo scenario and writes its CSV and sidecar.
pub fn simulate(cfg: &ScenarioConfig, out: &Path, snapshot_every: Option<usize>) -> Result<MseCurve> {
    let start = std::time::Instant::now();
    let curve = bisectquest::run_monte_carlo(cfg)?;
    let wall_time_secs = start.elapsed().as_secs_f64();
    if let Some(every) = snapshot_every.filter(|&k| k > 0) {
        write_snapshots(cfg, every, &snapshot_path(out))?;
    }
    let mut buf = Vec::new();
    write_curve(&mut buf, &curve)?;
    write_file(out, &buf)?;
    let meta = Sidecar {
        config: cfg.clone(),
        seed: cfg.seed,
        wall_time_secs,
        library_version: LIBRARY_VERSION.to_string(),
    };
    let json = serde_json::to_vec_pretty(&meta).expect("sidecar serializes");
    write_file(&sidecar_path(out), &json)?;
    Ok(curve)
}

/// `<out>.snapshots.jsonl`.
pub fn snapshot_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".snapshots.jsonl");
    PathBuf::from(name)
}

/// Replays trial 0 and writes its posterior every `every` cycles, one JSON
/// object per line.
pub fn write_snapshots(cfg: &ScenarioConfig, every: usize, path: &Path) -> Result<()> {
    let mut lines = Vec::new();
    let seed = bisectquest::trial_seed(cfg.seed, 0);
    run_trial_with(cfg, seed, |n, snap| {
        if n % every != 0 {
            return;
        }
        let line = match snap {
            Snapshot::Known(p) => serde_json::json!({ "n": n, "posterior": p }),
            Snapshot::Unknown(jp) => {
                let m = jp.marginals();
                serde_json::json!({ "n": n, "posterior": m.x, "eps_marginals": m.eps })
            }
        };
        lines.push(line.to_string());
    })?;
    let mut text = lines.join("\n");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// One row of the analytic bound table.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub n: u64,
    pub lower: f64,
    pub upper: f64,
    /// Optimized human-plus-machines bound and gain ratio, when a human plays.
    pub human: Option<(f64, f64)>,
}

/// Tabulates the bounds for `n = 0..=n_cycles`; `dim` is the dimension used by the lower bound.
pub fn bounds_table(cfg: &ScenarioConfig, dim: u32) -> Result<Vec<BoundsRow>> {
    let (c, cb) = scenario_rates(cfg)?;
    let h0 = bisectquest::grid_entropy(&bisectquest::make_prior(&cfg.prior, cfg.grid_cells)?).0;
    let machines: Vec<f64> = cfg.players.iter().filter_map(|p| p.constant_eps()).collect();
    let humans: Vec<(f64, f64)> = cfg
        .players
        .iter()
        .filter_map(|p| match p.channel {
            Channel::Human { mu, kappa, .. } => Some((mu, kappa)),
            Channel::Bsc { .. } => None,
        })
        .collect();
    Ok((0..=cfg.n_cycles as u64)
        .map(|n| {
            let upper = mse_upper_bound(n, cb);
            let human = (!humans.is_empty() && cfg.gamma.is_none()).then(|| {
                let opt = multi_human_bounds(n, &machines, &humans, 0.5).mse_opt;
                let ratio = match (machines.as_slice(), humans.as_slice()) {
                    ([eps1], [(mu, kappa)]) => hgr(n, *kappa, *mu, *eps1),
                    _ => upper / opt,
                };
                (opt, ratio)
            });
            BoundsRow {
                n,
                lower: mse_lower_bound(n, c, dim, h0),
                upper,
                human,
            }
        })
        .collect())
}

pub fn write_bounds<W: Write>(out: W, rows: &[BoundsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_human = rows.first().is_some_and(|r| r.human.is_some());
    let mut header = vec!["n", "lower", "upper"];
    if with_human {
        header.extend(["human_opt", "hgr"]);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.n.to_string(), fmt_f64(r.lower), fmt_f64(r.upper)];
        if let Some((opt, ratio)) = r.human {
            rec.push(fmt_f64(opt));
            rec.push(fmt_f64(ratio));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err("writing csv"))?;
    Ok(())
}

/// A named set of query regions that should split the uniform measure evenly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqualizationCase {
    pub name: String,
    pub dim: usize,
    /// One entry per player; each a union of `[lo, hi)` boxes.
    pub regions: Vec<Vec<RectSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn default_equalization() -> Vec<EqualizationCase> {
    let r1 = |a: f64, b: f64| RectSpec { lo: vec![a], hi: vec![b] };
    let r2 = |lo: [f64; 2], hi: [f64; 2]| RectSpec { lo: lo.to_vec(), hi: hi.to_vec() };
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        EqualizationCase {
            name: "1-d single bisection".into(),
            dim: 1,
            regions: vec![vec![r1(0.0, 0.5)]],
        },
        EqualizationCase {
            name: "1-d overlapping pair".into(),
            dim: 1,
            regions: vec![vec![r1(0.125, 0.625)], vec![r1(0.375, 0.875)]],
        },
        EqualizationCase {
            name: "2-d single square".into(),
            dim: 2,
            regions: vec![vec![r2([0.0, 0.0], [s, s])]],
        },
        EqualizationCase {
            name: "2-d pair".into(),
            dim: 2,
            regions: vec![
                vec![r2([0.0, 0.0], [0.75, 0.5]), r2([0.25, 0.5], [0.75, 0.75])],
                vec![r2([0.25, 0.5], [1.0, 1.0]), r2([0.25, 0.25], [0.75, 0.5])],
            ],
        },
    ]
}

fn default_pair() -> [f64; 2] {
    [0.3, 0.4]
}

/// Checks run by `verify`. Every field has a stock default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub equalization: Vec<EqualizationCase>,
    pub equalization_tol: f64,
    pub eps: [f64; 2],
    pub grid_cells: usize,
    pub identity_tol: f64,
    pub equivalence_tol: f64,
    pub unknown_cells: usize,
    pub unknown_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            equalization: default_equalization(),
            equalization_tol: 1e-12,
            eps: default_pair(),
            grid_cells: 1024,
            identity_tol: 1e-9,
            equivalence_tol: 1e-3,
            unknown_cells: 64,
            unknown_tol: 1e-2,
        }
    }
}

/// Outcome of one verification check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

/// `E[C(ε)]` for ε uniform on `[0, 1/2)`, by a fine midpoint rule.
fn uniform_expected_capacity() -> f64 {
    let k = 200_000;
    let w = 0.5 / k as f64;
    (0..k)
        .map(|i| capacity_bsc((i as f64 + 0.5) * w).map_or(0.0, |c| c.0))
        .sum::<f64>()
        * w
        * 2.0
}

/// Runs every check in `cfg`.
pub fn run_checks(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for case in &cfg.equalization {
        let regions = case
            .regions
            .iter()
            .map(|rects| {
                QueryRegion::new(
                    case.dim,
                    rects.iter().map(|r| Rect::new(r.lo.clone(), r.hi.clone())).collect(),
                )
            })
            .collect::<bisectquest::Result<Vec<_>>>()?;
        let eq = verify_equalization(&UniformMeasure { dim: case.dim }, &regions, cfg.equalization_tol)?;
        checks.push(Check {
            name: format!("equalization: {}", case.name),
            error: eq.max_deviation,
            tolerance: cfg.equalization_tol,
        });
    }
    let prior = GridPosterior::uniform(cfg.grid_cells)?;
    let regions = construct_joint_queries_1d(&prior, 2)?;
    let joint = joint_gain(&prior, &regions, &cfg.eps)?.0;
    let capacity: f64 = cfg
        .eps
        .iter()
        .map(|&e| capacity_bsc(e).map(|c| c.0))
        .sum::<bisectquest::Result<f64>>()?;
    checks.push(Check {
        name: "joint gain equals capacity sum".into(),
        error: (joint - capacity).abs(),
        tolerance: cfg.identity_tol,
    });
    let sequential = sequential_expected_entropy_loss(&prior, &cfg.eps)?.0;
    checks.push(Check {
        name: "sequential and joint gains agree".into(),
        error: (sequential - joint).abs(),
        tolerance: cfg.equivalence_tol,
    });
    let jp = JointGridPosterior::uniform(cfg.unknown_cells, vec![EpsAxis::uniform(cfg.unknown_cells)?])?;
    let gain = unknown_eps_query(&jp, 0)?.gain.0;
    checks.push(Check {
        name: "unknown-eps gain equals expected capacity".into(),
        error: (gain - uniform_expected_capacity()).abs(),
        tolerance: cfg.unknown_tol,
    });
    Ok(checks)
}

/// Prints the report; fails naming the first check over tolerance.
pub fn verify<W: Write>(cfg: &VerifyConfig, out: &mut W) -> Result<()> {
    let checks = run_checks(cfg)?;
    let mut first_failure = None;
    for c in &checks {
        let tag = if c.passed() { "ok  " } else { "FAIL" };
        writeln!(out, "{tag} {}: error {:.3e} (tolerance {:.1e})", c.name, c.error, c.tolerance)
            .map_err(io_err("writing report"))?;
        if !c.passed() && first_failure.is_none() {
            first_failure = Some(c.name.clone());
        }
    }
    match first_failure {
        Some(name) => Err(CliError::VerifyFailed(name)),
        None => Ok(()),
    }
}

/// Settings for a terminal session with a human oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractiveConfig {
    pub grid_cells: usize,
    /// Assumed probability that an answer is wrong.
    pub eps: f64,
    pub questions: usize,
    pub level: f64,
}

impl Default for InteractiveConfig {
    fn default() -> Self {
        InteractiveConfig {
            grid_cells: 1024,
            eps: 0.05,
            questions: 20,
            level: 0.95,
        }
    }
}

/// How a session ended.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub estimate: f64,
    pub asked: usize,
    pub ended_early: bool,
}

/// Plays the noisy oracle game over `input`/`output`.
///
/// Answers are `y`, `n` or `q` (quit). End of input stops the session with
/// the current estimate.
pub fn run_interactive<R: BufRead, W: Write>(
    cfg: &InteractiveConfig,
    mut input: R,
    mut output: W,
) -> Result<SessionSummary> {
    let mut post = GridPosterior::uniform(cfg.grid_cells)?;
    let mut asked = 0;
    let mut ended_early = false;
    let io = |e| CliError::Io {
        context: "terminal".into(),
        source: e,
    };
    'questions: while asked < cfg.questions {
        let query = bisect_query(&post);
        let (a, b) = query.intervals_1d().first().copied().unwrap_or((0.0, 0.0));
        let answer = loop {
            write!(output, "Is the target in [{a:.6}, {b:.6})? (y/n) ").map_err(io)?;
            output.flush().map_err(io)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(io)? == 0 {
                writeln!(output, "\ninput closed").map_err(io)?;
                ended_early = true;
                break 'questions;
            }
            match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" => break true,
                "n" | "no" => break false,
                "q" | "quit" => {
                    ended_early = true;
                    break 'questions;
                }
                _ => writeln!(output, "please answer y, n or q").map_err(io)?,
            }
        };
        post = post.bayes_update(&query, answer, cfg.eps)?;
        asked += 1;
        let (lo, hi) = post.credible_interval(cfg.level);
        writeln!(
            output,
            "median {:.6}, {:.0}% interval [{lo:.6}, {hi:.6}]",
            post.median(),
            cfg.level * 100.0
        )
        .map_err(io)?;
    }
    let estimate = post.median();
    writeln!(output, "final estimate {estimate:.6} after {asked} answers").map_err(io)?;
    Ok(SessionSummary {
        estimate,
        asked,
        ended_early,
    })
}
