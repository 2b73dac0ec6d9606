//! Experiment configuration, seeded runs and result files.
//!
//! Configs are JSON. Every key is optional; missing keys take the defaults of
//! the reference scenario (7 coordinated cells of a 27-cell layout, N = 3,
//! T = 6, Q = 3, 30 dB). Unknown keys are errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{channel_matched, in_cell_zero_forcing, time_sharing_rate, Scheme};
use crate::distributed::{
    overhead_report, Game, GameConfig, GameState, NashReport, OverheadReport, PricingMode, RunSummary,
};
use crate::error::{Error, Result};
use crate::game::{network_utility, BeamAssignment};
use crate::hermitian::{ComplexVec, C64};
use crate::network::{generate_scenario, ChannelSet, Dims, ScenarioConfig, UserId};
use crate::solver::SolverParams;
use crate::utility::{UtilityKind, UtilitySpec};

pub const DEFAULT_TRIALS: usize = 50;
pub const DEFAULT_SWEEP: [f64; 7] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
pub const DEFAULT_ALPHA: f64 = 2.0;
/// Relative tolerance for Nash certification.
pub const NASH_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<RawScenario>,
    utility: Option<RawUtility>,
    scheme: Option<RawSchemes>,
    solver: Option<SolverParams>,
    game: Option<GameConfig>,
    sweep: Option<Vec<f64>>,
    trials: Option<usize>,
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(rename = "M_total")]
    m_total: Option<usize>,
    /// Shorthand for `coordinated = [1, ..., M]`.
    #[serde(rename = "M")]
    m: Option<usize>,
    coordinated: Option<Vec<usize>>,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "T")]
    t: Option<usize>,
    #[serde(rename = "Q")]
    q: Option<usize>,
    #[serde(rename = "D_BS")]
    d_bs: Option<f64>,
    #[serde(rename = "D")]
    d: Option<f64>,
    #[serde(rename = "P")]
    p: Option<f64>,
    sigma2: Option<f64>,
    snr_db: Option<f64>,
    shadowing_db: Option<f64>,
    pathloss_on_amplitude: Option<bool>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUtility {
    kind: Option<String>,
    alpha: Option<f64>,
    theta: Option<f64>,
    weight: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawSchemes {
    One(String),
    Many(Vec<String>),
}

/// Serializable form of a [`UtilitySpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UtilityDescriptor {
    #[serde(flatten)]
    pub kind: UtilityKind,
    pub weight: f64,
}

/// A fully resolved and validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    #[serde(serialize_with = "serialize_utility")]
    pub utility: UtilitySpec,
    pub schemes: Vec<Scheme>,
    pub solver: SolverParams,
    pub game: GameConfig,
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub out_dir: PathBuf,
}

fn serialize_utility<S: serde::Serializer>(u: &UtilitySpec, s: S) -> std::result::Result<S::Ok, S::Error> {
    UtilityDescriptor {
        kind: u.kind(),
        weight: u.weight(),
    }
    .serialize(s)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        validate_config("{}").expect("defaults are valid")
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub schemes: Option<String>,
    pub utility: Option<String>,
    pub snr_db: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
}

/// Parses JSON text, applies defaults and checks every constraint.
pub fn validate_config(text: &str) -> Result<ExperimentConfig> {
    resolve(parse_raw(text)?, &Overrides::default())
}

pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let raw = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::config(p.display().to_string(), format!("cannot read: {e}")))?;
            parse_raw(&text)?
        }
        None => RawConfig::default(),
    };
    resolve(raw, overrides)
}

fn parse_raw(text: &str) -> Result<RawConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
    })
}

fn resolve(raw: RawConfig, ov: &Overrides) -> Result<ExperimentConfig> {
    let scenario = resolve_scenario(raw.scenario.unwrap_or_default(), ov)?;
    let utility = resolve_utility(raw.utility.unwrap_or_default(), ov.utility.as_deref(), &scenario)?;

    let scheme_text = match (&ov.schemes, raw.scheme) {
        (Some(s), _) => RawSchemes::Many(s.split(',').map(|x| x.trim().to_string()).collect()),
        (None, Some(r)) => r,
        (None, None) => RawSchemes::One(Scheme::PricedGame.name().into()),
    };
    let schemes = resolve_schemes(scheme_text, &utility)?;

    let solver = raw.solver.unwrap_or_default();
    solver.validate()?;
    let game = raw.game.unwrap_or_default();
    game.validate()?;

    let sweep = match (&ov.snr_db, raw.sweep) {
        (Some(v), _) => v.clone(),
        (None, Some(v)) => v,
        (None, None) => DEFAULT_SWEEP.to_vec(),
    };
    if sweep.is_empty() {
        return Err(Error::config("sweep", "must list at least one SNR"));
    }
    if let Some(i) = sweep.iter().position(|v| !v.is_finite()) {
        return Err(Error::config(format!("sweep[{i}]"), "must be finite"));
    }
    let trials = raw.trials.unwrap_or(DEFAULT_TRIALS);
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let out_dir = ov
        .out_dir
        .clone()
        .or(raw.out_dir)
        .unwrap_or_else(|| PathBuf::from("out"));

    Ok(ExperimentConfig {
        scenario,
        utility,
        schemes,
        solver,
        game,
        sweep,
        trials,
        out_dir,
    })
}

fn resolve_scenario(raw: RawScenario, ov: &Overrides) -> Result<ScenarioConfig> {
    let mut s = ScenarioConfig::default();
    if let Some(v) = raw.m_total {
        s.m_total = v;
    }
    match (raw.m, raw.coordinated) {
        (Some(_), Some(_)) => return Err(Error::config("scenario.M", "give either M or coordinated, not both")),
        (Some(m), None) => {
            if m == 0 {
                return Err(Error::config("scenario.M", "must be at least 1"));
            }
            s.coordinated = (1..=m).collect();
        }
        (None, Some(c)) => s.coordinated = c,
        (None, None) => {}
    }
    if let Some(v) = raw.n {
        s.n = v;
    }
    if let Some(v) = raw.t {
        s.t = v;
    }
    if let Some(v) = raw.q {
        s.q = v;
    }
    if let Some(v) = raw.d_bs {
        s.d_bs = v;
    }
    if let Some(v) = raw.d {
        s.d = v;
    }
    if let Some(v) = raw.sigma2 {
        s.sigma2 = v;
    }
    match (raw.p, raw.snr_db) {
        (Some(_), Some(_)) => return Err(Error::config("scenario.P", "give either P or snr_db, not both")),
        (Some(p), None) => {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::config("scenario.P", "must be positive"));
            }
            s.snr_db = 10.0 * (p / s.sigma2).log10();
        }
        (None, Some(v)) => s.snr_db = v,
        (None, None) => {}
    }
    if let Some(v) = raw.shadowing_db {
        s.shadowing_db = v;
    }
    if let Some(v) = raw.pathloss_on_amplitude {
        s.pathloss_on_amplitude = v;
    }
    if let Some(v) = raw.seed {
        s.seed = v;
    }
    if let Some(v) = ov.seed {
        s.seed = v;
    }
    if let Some(v) = ov.snr_db.as_ref().and_then(|v| v.first()) {
        s.snr_db = *v;
    }
    s.validate().map_err(|e| match e {
        Error::Config { path, msg } => Error::Config {
            path: format!("scenario.{path}"),
            msg,
        },
        other => other,
    })?;
    Ok(s)
}

fn resolve_utility(raw: RawUtility, kind_override: Option<&str>, s: &ScenarioConfig) -> Result<UtilitySpec> {
    let kind_name = kind_override
        .map(str::to_string)
        .or(raw.kind)
        .unwrap_or_else(|| "rate".into());
    let kind = match kind_name.as_str() {
        "prop_fair" => UtilityKind::PropFair,
        "alpha_fair" => UtilityKind::AlphaFair {
            alpha: raw.alpha.unwrap_or(DEFAULT_ALPHA),
        },
        "rate" => UtilityKind::Rate {
            theta: raw.theta.unwrap_or(1.0),
        },
        other => {
            return Err(Error::config(
                "utility.kind",
                format!("unknown utility '{other}' (expected prop_fair, alpha_fair or rate)"),
            ))
        }
    };
    if raw.alpha.is_some() && !matches!(kind, UtilityKind::AlphaFair { .. }) {
        return Err(Error::config("utility.alpha", "only applies to alpha_fair"));
    }
    if raw.theta.is_some() && !matches!(kind, UtilityKind::Rate { .. }) {
        return Err(Error::config("utility.theta", "only applies to rate"));
    }
    // Per-user weight 1/(NM); log utilities are in bits.
    let per_user = 1.0 / (s.n * s.coordinated.len()) as f64;
    let default_weight = match kind {
        UtilityKind::AlphaFair { .. } => per_user,
        _ => per_user / std::f64::consts::LN_2,
    };
    let weight = raw.weight.unwrap_or(default_weight);
    UtilitySpec::new(kind, weight).map_err(|e| {
        let field = match kind {
            UtilityKind::AlphaFair { alpha } if alpha == 1.0 || alpha < 0.0 => "utility.alpha",
            UtilityKind::Rate { theta } if !(theta > 0.0 && theta <= 1.0) => "utility.theta",
            _ => "utility.weight",
        };
        Error::config(field, e.to_string())
    })
}

fn resolve_schemes(raw: RawSchemes, utility: &UtilitySpec) -> Result<Vec<Scheme>> {
    let is_rate = matches!(utility.kind(), UtilityKind::Rate { .. });
    let names = match raw {
        RawSchemes::One(s) if s == "all" => {
            return Ok(Scheme::ALL
                .into_iter()
                .filter(|s| is_rate || *s != Scheme::TimeSharing)
                .collect())
        }
        RawSchemes::One(s) => vec![s],
        RawSchemes::Many(v) => v,
    };
    if names.is_empty() {
        return Err(Error::config("scheme", "must name at least one scheme"));
    }
    let mut out = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let s: Scheme = name
            .parse()
            .map_err(|_| Error::config(format!("scheme[{i}]"), format!("unknown scheme '{name}'")))?;
        if s == Scheme::TimeSharing && !is_rate {
            return Err(Error::config(format!("scheme[{i}]"), "time sharing needs the rate utility"));
        }
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub outer_round: usize,
    /// 1-based cell id; 0 on the initial row.
    pub active_bs: usize,
    pub inner_event_index: usize,
    #[serde(serialize_with = "serialize_utility_value")]
    pub network_utility: f64,
    pub accepted: u8,
}

fn serialize_utility_value<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_value(*v))
}

/// Shortest round-trip form; infinities as `inf` / `-inf`.
pub fn format_value(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub rows: Vec<ConvergenceRow>,
    pub summary: RunSummary,
    pub state: GameState,
    pub overhead: OverheadReport,
}

fn game_mode(scheme: Scheme) -> Result<PricingMode> {
    match scheme {
        Scheme::PricedGame => Ok(PricingMode::Priced),
        Scheme::NonCoop => Ok(PricingMode::NonCooperative),
        other => Err(Error::Unsupported(format!("scheme {other} is not an iterative game"))),
    }
}

/// Runs the first configured game scheme on the configured scenario and
/// records one row per beam-vector update.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceRun> {
    let scheme = cfg.schemes[0];
    let mode = game_mode(scheme)?;
    let (_, ch) = generate_scenario(&cfg.scenario)?;
    run_convergence_on(cfg, &ch, mode)
}

fn run_convergence_on(cfg: &ExperimentConfig, ch: &ChannelSet, mode: PricingMode) -> Result<ConvergenceRun> {
    let game = Game::new(ch, cfg.utility, cfg.scenario.power(), cfg.solver, mode)?;
    let mut state = game.initialize(cfg.game.init)?;
    let ids = &cfg.scenario.coordinated;
    let mut rows = vec![ConvergenceRow {
        outer_round: 0,
        active_bs: 0,
        inner_event_index: 0,
        network_utility: state.network_utility(),
        accepted: 1,
    }];
    let summary = game.run_observed(&mut state, &cfg.game, |st, out| {
        let round = st.outer_iteration + 1;
        let bs = ids[out.cell];
        if !out.accepted || out.tie {
            rows.push(ConvergenceRow {
                outer_round: round,
                active_bs: bs,
                inner_event_index: 0,
                network_utility: st.network_utility(),
                accepted: 0,
            });
            return;
        }
        // Substitute the new beams one at a time, starting from the old ones.
        let mut w = st.w.clone();
        w.set_cell_beams(out.cell, &out.previous);
        let last = out.candidate.len();
        for (i, beam) in out.candidate.iter().enumerate() {
            let dims = w.dims();
            let user = UserId {
                cell: out.cell,
                sub: i / dims.slots,
                slot: i % dims.slots,
            };
            w.set(user, beam.clone());
            let value = if i + 1 == last {
                st.network_utility()
            } else {
                network_utility(&game.utility, &w, ch)
            };
            rows.push(ConvergenceRow {
                outer_round: round,
                active_bs: bs,
                inner_event_index: i + 1,
                network_utility: value,
                accepted: u8::from(i + 1 == last),
            });
        }
    })?;
    let dims = ch.dims();
    let overhead = overhead_report(&state.log, dims.subs, dims.slots, dims.antennas);
    Ok(ConvergenceRun {
        rows,
        summary,
        state,
        overhead,
    })
}

/// Final outcome of one scheme on one channel draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub seed: u64,
    pub snr_db: f64,
    pub scheme: String,
    pub utility_kind: String,
    #[serde(serialize_with = "serialize_utility_value")]
    pub final_network_utility: f64,
    pub outer_rounds: usize,
    pub accepted_updates: usize,
    pub total_scalars_exchanged: u64,
    #[serde(skip)]
    pub wall_time_seconds: f64,
    #[serde(skip)]
    pub beams: Option<BeamAssignment>,
}

/// Mean and standard error of one (SNR, scheme) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub scheme: String,
    pub utility_kind: String,
    pub trials: usize,
    #[serde(serialize_with = "serialize_utility_value")]
    pub mean: f64,
    #[serde(serialize_with = "serialize_utility_value")]
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

/// Runs one scheme on a given channel draw.
pub fn run_scheme(cfg: &ExperimentConfig, ch: &ChannelSet, scheme: Scheme, power: f64) -> Result<ResultRow> {
    let t0 = Instant::now();
    let (value, rounds, accepted, scalars, beams) = match scheme {
        Scheme::Cm => {
            let w = channel_matched(ch, power)?;
            (network_utility(&cfg.utility, &w, ch), 0, 0, 0, Some(w))
        }
        Scheme::Iczf => {
            let w = in_cell_zero_forcing(ch, power)?;
            (network_utility(&cfg.utility, &w, ch), 0, 0, 0, Some(w))
        }
        Scheme::TimeSharing => (time_sharing_rate(ch, &cfg.utility, power)?, 0, 0, 0, None),
        Scheme::PricedGame | Scheme::NonCoop => {
            let game = Game::new(ch, cfg.utility, power, cfg.solver, game_mode(scheme)?)?;
            let mut state = game.initialize(cfg.game.init)?;
            let s = game.run(&mut state, &cfg.game)?;
            (
                state.network_utility(),
                s.rounds,
                s.accepted_updates,
                state.log.total_scalars(),
                Some(state.w),
            )
        }
    };
    Ok(ResultRow {
        seed: 0,
        snr_db: 0.0,
        scheme: scheme.name().into(),
        utility_kind: cfg.utility.name().into(),
        final_network_utility: value,
        outer_rounds: rounds,
        accepted_updates: accepted,
        total_scalars_exchanged: scalars,
        wall_time_seconds: t0.elapsed().as_secs_f64(),
        beams,
    })
}

/// Every (SNR, trial, scheme) combination; trials run in parallel, rows come
/// back in (SNR, trial, scheme) order.
pub fn run_sweep(cfg: &ExperimentConfig, keep_beams: bool) -> Result<SweepRun> {
    let jobs: Vec<(f64, usize)> = cfg
        .sweep
        .iter()
        .flat_map(|&snr| (0..cfg.trials).map(move |t| (snr, t)))
        .collect();
    let per_job: Vec<Result<Vec<ResultRow>>> = jobs
        .par_iter()
        .map(|&(snr, trial)| {
            let scenario = ScenarioConfig {
                snr_db: snr,
                seed: trial_seed(cfg.scenario.seed, trial),
                ..cfg.scenario.clone()
            };
            let (_, ch) = generate_scenario(&scenario)?;
            cfg.schemes
                .iter()
                .map(|&s| {
                    let mut row = run_scheme(cfg, &ch, s, scenario.power())?;
                    row.seed = scenario.seed;
                    row.snr_db = snr;
                    if !keep_beams {
                        row.beams = None;
                    }
                    Ok(row)
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(jobs.len() * cfg.schemes.len());
    for r in per_job {
        rows.extend(r?);
    }
    let summary = summarize(cfg, &rows);
    Ok(SweepRun { rows, summary })
}

fn summarize(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &snr in &cfg.sweep {
        for s in &cfg.schemes {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.snr_db == snr && r.scheme == s.name())
                .map(|r| r.final_network_utility)
                .collect();
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            out.push(SummaryRow {
                snr_db: snr,
                scheme: s.name().into(),
                utility_kind: cfg.utility.name().into(),
                trials: n,
                mean,
                stderr,
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct NashCheck {
    pub run: ConvergenceRun,
    pub report: NashReport,
}

/// Converges the configured game and re-solves every BS against the result.
pub fn run_nash_check(cfg: &ExperimentConfig) -> Result<NashCheck> {
    let mode = game_mode(cfg.schemes[0])?;
    let (_, ch) = generate_scenario(&cfg.scenario)?;
    let run = run_convergence_on(cfg, &ch, mode)?;
    let game = Game::new(&ch, cfg.utility, cfg.scenario.power(), cfg.solver, mode)?;
    let report = game.verify_nash(&run.state, NASH_EPS)?;
    Ok(NashCheck { run, report })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::config(path.display().to_string(), e.to_string())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    library_version: &'a str,
    config: &'a ExperimentConfig,
}

pub fn write_metadata(dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    write_json(
        &dir.join("metadata.json"),
        &Metadata {
            command,
            library_version: env!("CARGO_PKG_VERSION"),
            config: cfg,
        },
    )
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

#[derive(Serialize)]
struct MessageRow {
    round: usize,
    sender: usize,
    receiver: usize,
    price_scalars: u64,
    interference_scalars: u64,
}

/// Writes `convergence.csv`, `messages.csv`, `overhead.json`, optionally
/// `beams.csv`, and `metadata.json` into the configured output directory.
pub fn write_convergence(cfg: &ExperimentConfig, run: &ConvergenceRun, dump_beams: bool, command: &str) -> Result<()> {
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    write_csv(&dir.join("convergence.csv"), &run.rows)?;
    let ids = &cfg.scenario.coordinated;
    let messages: Vec<MessageRow> = run
        .state
        .log
        .records
        .iter()
        .map(|r| MessageRow {
            round: r.round,
            sender: ids[r.sender],
            receiver: ids[r.receiver],
            price_scalars: r.price_scalars,
            interference_scalars: r.interference_scalars,
        })
        .collect();
    write_csv(&dir.join("messages.csv"), &messages)?;
    write_json(&dir.join("overhead.json"), &run.overhead)?;
    if dump_beams {
        write_beams(&dir.join("beams.csv"), &run.state.w)?;
    }
    write_metadata(dir, command, cfg)
}

#[derive(Serialize)]
struct TimingRow<'a> {
    seed: u64,
    snr_db: f64,
    scheme: &'a str,
    wall_time_seconds: f64,
}

/// Writes `results.csv`, `summary.csv`, `timings.csv`, optional per-row beam
/// files under `beams/`, and `metadata.json`.
pub fn write_sweep(cfg: &ExperimentConfig, run: &SweepRun, command: &str) -> Result<()> {
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    write_csv(&dir.join("results.csv"), &run.rows)?;
    write_csv(&dir.join("summary.csv"), &run.summary)?;
    let timings: Vec<TimingRow> = run
        .rows
        .iter()
        .map(|r| TimingRow {
            seed: r.seed,
            snr_db: r.snr_db,
            scheme: &r.scheme,
            wall_time_seconds: r.wall_time_seconds,
        })
        .collect();
    write_csv(&dir.join("timings.csv"), &timings)?;
    if run.rows.iter().any(|r| r.beams.is_some()) {
        let beam_dir = dir.join("beams");
        ensure_dir(&beam_dir)?;
        for r in &run.rows {
            if let Some(w) = &r.beams {
                write_beams(&beam_dir.join(beam_file_name(r.snr_db, r.seed, &r.scheme)), w)?;
            }
        }
    }
    write_metadata(dir, command, cfg)
}

pub fn beam_file_name(snr_db: f64, seed: u64, scheme: &str) -> String {
    format!("snr{snr_db}_seed{seed}_{scheme}.csv")
}

#[derive(Debug, Serialize, Deserialize)]
struct BeamRow {
    cell: usize,
    sub: usize,
    slot: usize,
    antenna: usize,
    re: f64,
    im: f64,
}

/// One row per antenna weight, cells 0-based in player order.
pub fn write_beams(path: &Path, w: &BeamAssignment) -> Result<()> {
    let rows: Vec<BeamRow> = w
        .iter()
        .flat_map(|(u, v)| {
            v.iter()
                .enumerate()
                .map(move |(a, c)| BeamRow {
                    cell: u.cell,
                    sub: u.sub,
                    slot: u.slot,
                    antenna: a,
                    re: c.re,
                    im: c.im,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    write_csv(path, &rows)
}

pub fn read_beams(path: &Path, dims: Dims) -> Result<BeamAssignment> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut w = vec![ComplexVec::zeros(dims.antennas); dims.num_users()];
    let mut seen = 0;
    for rec in reader.deserialize::<BeamRow>() {
        let r = rec.map_err(|e| io_err(path, e))?;
        if r.cell >= dims.cells || r.sub >= dims.subs || r.slot >= dims.slots || r.antenna >= dims.antennas {
            return Err(io_err(path, "beam index out of range"));
        }
        let u = UserId {
            cell: r.cell,
            sub: r.sub,
            slot: r.slot,
        };
        w[dims.index(u)][r.antenna] = C64::new(r.re, r.im);
        seen += 1;
    }
    if seen != dims.num_users() * dims.antennas {
        return Err(Error::DimensionMismatch {
            expected: dims.num_users() * dims.antennas,
            got: seen,
        });
    }
    Ok(BeamAssignment::from_vecs(dims, w))
}

/// Writes `convergence.csv` etc. plus `nash.csv` with one row per BS.
pub fn write_nash(cfg: &ExperimentConfig, check: &NashCheck, dump_beams: bool, command: &str) -> Result<()> {
    write_convergence(cfg, &check.run, dump_beams, command)?;
    #[derive(Serialize)]
    struct NashRow {
        bs: usize,
        improvement: f64,
        relative: f64,
    }
    let rows: Vec<NashRow> = check
        .report
        .improvements
        .iter()
        .zip(&check.report.relative)
        .enumerate()
        .map(|(m, (&improvement, &relative))| NashRow {
            bs: cfg.scenario.coordinated[m],
            improvement,
            relative,
        })
        .collect();
    write_csv(&cfg.out_dir.join("nash.csv"), &rows)
}
