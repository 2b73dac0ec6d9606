//! End-to-end acceptance checks. Runs without the libtest harness so that the
//! per-criterion verdicts always reach stdout; exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pricebeam::baselines::Scheme;
use pricebeam::distributed::{overhead_report, Game, GameConfig, InitKind, PricingMode};
use pricebeam::experiment::{
    run_convergence, run_scheme, run_sweep, validate_config, write_convergence, write_sweep, ExperimentConfig,
};
use pricebeam::game::{compute_interference, gain};
use pricebeam::hermitian::{ComplexVec, HermitianMat, C64};
use pricebeam::network::{complex_gaussian, generate_scenario, ChannelSet, ScenarioConfig};
use pricebeam::solver::{bisect_lambda, kkt_beam_update, kkt_residual, SolverParams, SubproblemInput};
use pricebeam::utility::{UtilityKind, UtilitySpec};

const SEEDS: u64 = 20;
const NASH_EPS: f64 = 1e-4;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn default_config(kind: &str) -> ExperimentConfig {
    validate_config(&format!(r#"{{"utility": {{"kind": "{kind}"}}}}"#)).unwrap()
}

const KINDS: [&str; 3] = ["prop_fair", "alpha_fair", "rate"];

fn scenario(seed: u64, snr_db: f64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        snr_db,
        ..ScenarioConfig::default()
    }
}

struct SeedRun {
    kind: usize,
    snr_db: f64,
    values: [f64; 4],
    trace_ok: bool,
    worst_drop: f64,
    rounds: usize,
    converged: bool,
    seconds: f64,
    nash_worst: f64,
    power_gap: f64,
    iczf_in_cell: f64,
}

/// Priced game (with trace and NE check), non-cooperative game, CM and ICZF on
/// one channel draw.
fn run_seed(kind: usize, seed: u64, snr_db: f64) -> SeedRun {
    let cfg = default_config(KINDS[kind]);
    let sc = scenario(seed, snr_db);
    let (_, ch) = generate_scenario(&sc).unwrap();
    let p = sc.power();

    let t0 = Instant::now();
    let game = Game::new(&ch, cfg.utility, p, cfg.solver, PricingMode::Priced).unwrap();
    let mut state = game.initialize(InitKind::Cm).unwrap();
    let summary = game.run(&mut state, &cfg.game).unwrap();
    let seconds = t0.elapsed().as_secs_f64();

    let accepted: Vec<f64> = state
        .utility_trace
        .iter()
        .filter(|t| t.accepted)
        .map(|t| t.network_utility)
        .collect();
    let worst_drop = accepted
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0_f64, f64::max);
    let nash = game.verify_nash(&state, NASH_EPS).unwrap();
    let nash_worst = nash.relative.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut power_gap: f64 = max_power_gap(&state.w, &ch, p);
    let noncoop = run_scheme(&cfg, &ch, Scheme::NonCoop, p).unwrap();
    let cm = run_scheme(&cfg, &ch, Scheme::Cm, p).unwrap();
    let iczf = run_scheme(&cfg, &ch, Scheme::Iczf, p).unwrap();
    for r in [&noncoop, &cm, &iczf] {
        power_gap = power_gap.max(max_power_gap(r.beams.as_ref().unwrap(), &ch, p));
    }
    let zf = iczf.beams.as_ref().unwrap();
    let report = compute_interference(zf, &ch);
    let iczf_in_cell = ch.dims().users().map(|u| report.in_cell(u)).fold(0.0, f64::max);

    SeedRun {
        kind,
        snr_db,
        values: [
            state.network_utility(),
            noncoop.final_network_utility,
            cm.final_network_utility,
            iczf.final_network_utility,
        ],
        trace_ok: worst_drop <= 1e-9,
        worst_drop,
        rounds: summary.rounds,
        converged: summary.converged,
        seconds,
        nash_worst,
        power_gap,
        iczf_in_cell,
    }
}

fn max_power_gap(w: &pricebeam::game::BeamAssignment, ch: &ChannelSet, p: f64) -> f64 {
    (0..ch.dims().cells)
        .map(|m| (w.cell_power(m) - p).abs() / p)
        .fold(0.0, f64::max)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn game_criteria(runs: &[SeedRun]) -> Vec<Verdict> {
    let high: Vec<&SeedRun> = runs.iter().filter(|r| r.snr_db == 30.0).collect();

    let mono_fail = high
        .iter()
        .filter(|r| !(r.trace_ok && r.converged && r.rounds <= 20 && r.seconds <= 60.0))
        .count();
    let worst_drop = high.iter().map(|r| r.worst_drop).fold(0.0, f64::max);
    let max_rounds = high.iter().map(|r| r.rounds).max().unwrap();
    let max_secs = high.iter().map(|r| r.seconds).fold(0.0, f64::max);
    let c1 = Verdict {
        id: 1,
        name: "monotone convergence",
        pass: mono_fail == 0,
        detail: format!(
            "{} runs, worst drop {worst_drop:.2e} (tol 1e-9), max rounds {max_rounds} (limit 20), \
             max time {max_secs:.2}s (limit 60s), failures {mono_fail}",
            high.len()
        ),
    };

    let nash_worst = high.iter().map(|r| r.nash_worst).fold(f64::NEG_INFINITY, f64::max);
    let c2 = Verdict {
        id: 2,
        name: "Nash certification",
        pass: nash_worst <= NASH_EPS,
        detail: format!("worst relative per-BS gain {nash_worst:.2e} (tol 1e-4)"),
    };

    let mut pass = true;
    let mut parts = Vec::new();
    for k in 0..3 {
        let at = |snr: f64, i: usize| mean(runs.iter().filter(|r| r.kind == k && r.snr_db == snr).map(|r| r.values[i]));
        let (pg, nc, cm, zf) = (at(30.0, 0), at(30.0, 1), at(30.0, 2), at(30.0, 3));
        let gap_high = pg - nc;
        let gap_low = at(0.0, 0) - at(0.0, 1);
        let ok = pg >= nc && nc >= cm.max(zf) && gap_low < gap_high;
        pass &= ok;
        parts.push(format!(
            "{}: {pg:.4} >= {nc:.4} >= max({cm:.4}, {zf:.4}), gap 30dB {gap_high:.4} > 0dB {gap_low:.4}",
            KINDS[k]
        ));
    }
    let c6 = Verdict {
        id: 6,
        name: "scheme ordering",
        pass,
        detail: parts.join("; "),
    };

    let zf = runs.iter().map(|r| r.iczf_in_cell).fold(0.0, f64::max);
    let pw = runs.iter().map(|r| r.power_gap).fold(0.0, f64::max);
    let c8 = Verdict {
        id: 8,
        name: "baseline invariants",
        pass: zf <= 1e-9 && pw <= 1e-9,
        detail: format!(
            "ICZF in-cell interference {zf:.2e} (tol 1e-9), per-BS power relative gap {pw:.2e} (tol 1e-9) \
             over priced, non-coop, CM and ICZF"
        ),
    };
    vec![c1, c2, c6, c8]
}

/// Value of one user's subproblem at `w`.
fn sub_objective(u: &UtilitySpec, h: &ComplexVec, a: &HermitianMat, one_plus_i: f64, w: &ComplexVec) -> f64 {
    u.value_or_neg_inf(gain(h, w) / one_plus_i) - w.dotc(&a.mul_vec(w)).re
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn direction(theta: f64, phi: f64) -> ComplexVec {
    ComplexVec::from_vec(vec![
        C64::new(theta.cos(), 0.0),
        C64::from_polar(theta.sin(), phi),
    ])
}

/// Best power along a unit direction: the objective is concave in power, so
/// bracket the maximizer by doubling and refine by golden section.
fn best_along(u: &UtilitySpec, h: &ComplexVec, a: &HermitianMat, opi: f64, d: &ComplexVec) -> f64 {
    let s = gain(h, d) / opi;
    let c = d.dotc(&a.mul_vec(d)).re;
    let f = |p: f64| u.value_or_neg_inf(p * s) - p * c;
    let mut hi = 1e-6;
    let mut n = 0;
    while n < 200 && u.derivative(hi * s).map(|g| g * s > c).unwrap_or(true) {
        hi *= 2.0;
        n += 1;
    }
    let at_zero = u.value_or_neg_inf(0.0);
    let (_, v) = golden_max(f, 0.0, hi, 120);
    v.max(at_zero)
}

/// Dense direction grid plus alternating golden-section refinement.
fn oracle(u: &UtilitySpec, h: &ComplexVec, a: &HermitianMat, opi: f64) -> f64 {
    let g = |t: f64, p: f64| best_along(u, h, a, opi, &direction(t, p));
    let (nt, np) = (24, 48);
    let (dt, dp) = (std::f64::consts::FRAC_PI_2 / nt as f64, std::f64::consts::TAU / np as f64);
    let (mut bt, mut bp, mut best) = (0.0, 0.0, f64::NEG_INFINITY);
    for i in 0..=nt {
        for j in 0..np {
            let (t, p) = (i as f64 * dt, j as f64 * dp);
            let v = g(t, p);
            if v > best {
                (bt, bp, best) = (t, p, v);
            }
        }
    }
    let (mut wt, mut wp) = (dt, dp);
    for _ in 0..12 {
        let (t, v) = golden_max(|t| g(t, bp), (bt - wt).max(0.0), (bt + wt).min(std::f64::consts::FRAC_PI_2), 50);
        if v > best {
            (bt, best) = (t, v);
        }
        let (p, v) = golden_max(|p| g(bt, p), bp - wp, bp + wp, 50);
        if v > best {
            (bp, best) = (p, v);
        }
        wt *= 0.5;
        wp *= 0.5;
    }
    best
}

fn random_utility(kind: usize, rng: &mut ChaCha8Rng) -> UtilitySpec {
    let weight = 10f64.powf(rng.random_range(-1.3..0.7));
    match kind {
        0 => UtilitySpec::prop_fair(weight),
        1 => UtilitySpec::alpha_fair([0.5, 2.0, 1.5][rng.random_range(0..3)], weight),
        _ => UtilitySpec::rate(rng.random_range(0.2..=1.0), weight),
    }
    .unwrap()
}

fn criterion_closed_form() -> Verdict {
    let params = SolverParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_sinr: f64 = 0.0;
    let mut failures = 0;
    let mut count = 0;
    for kind in 0..3 {
        for _ in 0..200 {
            let u = random_utility(kind, &mut rng);
            let h = complex_gaussian(&mut rng, 2) * C64::new(10f64.powf(rng.random_range(-1.0..1.5)), 0.0);
            let mut l = HermitianMat::zeros(2);
            for _ in 0..rng.random_range(0..3) {
                let v = complex_gaussian(&mut rng, 2);
                l.add_outer(10f64.powf(rng.random_range(-2.0..0.5)), &v);
            }
            let interference = rng.random_range(0.0..5.0);
            let lambda = 10f64.powf(rng.random_range(-3.0..0.0));
            let input = SubproblemInput {
                h: &h,
                leakage: &l,
                interference,
                utility: &u,
                lambda,
            };
            let upd = kkt_beam_update(&input, &params).unwrap();
            let a = l.shifted(lambda);
            let opi = 1.0 + interference;
            let got = sub_objective(&u, &h, &a, opi, &upd.w);
            let best = oracle(&u, &h, &a, opi);
            let shortfall = (best - got) / best.abs().max(1e-12);
            worst_ratio = worst_ratio.max(shortfall);
            let sinr = gain(&h, &upd.w) / opi;
            let sinr_err = if upd.sinr > 0.0 { (sinr - upd.sinr).abs() / upd.sinr } else { sinr };
            worst_sinr = worst_sinr.max(sinr_err);
            if shortfall > 1e-6 || sinr_err > 1e-10 {
                failures += 1;
            }
            count += 1;
        }
    }
    Verdict {
        id: 3,
        name: "closed-form subproblem optimum",
        pass: failures == 0,
        detail: format!(
            "{count} subproblems, worst relative shortfall vs oracle {worst_ratio:.2e} (tol 1e-6), \
             worst SINR identity error {worst_sinr:.2e} (tol 1e-10)"
        ),
    }
}

fn criterion_kkt() -> Verdict {
    let params = SolverParams::default();
    let (mut st, mut pg, mut sl): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut failures = 0;
    let mut slack = 0;
    for i in 0..50u64 {
        let cfg = default_config(KINDS[(i % 3) as usize]);
        let sc = scenario(1000 + i, [30.0, 10.0, 0.0][(i % 3) as usize]);
        let (_, ch) = generate_scenario(&sc).unwrap();
        let p = sc.power();
        let game = Game::new(&ch, cfg.utility, p, cfg.solver, PricingMode::Priced).unwrap();
        let mut state = game.initialize(InitKind::Cm).unwrap();
        // A few turns so prices are not those of the symmetric start.
        for m in 0..(i as usize % 4) {
            game.step(&mut state, m).unwrap();
        }
        let cell = (i as usize * 3) % ch.dims().cells;
        let problem = game.problem(&state, cell);
        let out = bisect_lambda(&problem, state.w.cell_beams(cell), &params).unwrap();
        let r = kkt_residual(&problem, &out.beams, out.lambda).unwrap();
        let gap = (out.power - p).abs() / p;
        let at_floor = out.slack && out.lambda <= params.lambda_floor && out.power <= p;
        slack += usize::from(at_floor);
        st = st.max(r.stationarity);
        if !at_floor {
            pg = pg.max(gap);
        }
        sl = sl.max(r.slackness / p);
        if r.stationarity > 1e-5 || !(gap <= 1e-4 || at_floor) || r.slackness > 1e-6 * p {
            failures += 1;
        }
    }
    Verdict {
        id: 4,
        name: "KKT residuals",
        pass: failures == 0,
        detail: format!(
            "50 cells ({slack} slack at floor), stationarity {st:.2e} (tol 1e-5), \
             power gap {pg:.2e} (tol 1e-4), slackness/P {sl:.2e} (tol 1e-6)"
        ),
    }
}

fn criterion_convexity() -> Verdict {
    let builtins = [
        UtilitySpec::prop_fair(1.0).unwrap(),
        UtilitySpec::alpha_fair(0.5, 1.0).unwrap(),
        UtilitySpec::alpha_fair(1.5, 1.0).unwrap(),
        UtilitySpec::alpha_fair(2.0, 1.0).unwrap(),
        UtilitySpec::rate(1.0, 1.0).unwrap(),
        UtilitySpec::rate(0.3, 1.0).unwrap(),
    ];
    let signals = [1e-2, 0.1, 1.0, 10.0, 100.0, 1e3];
    let interference = [0.0, 0.1, 1.0, 10.0, 100.0];
    let mut worst_curv = f64::INFINITY;
    let mut worst_kappa: f64 = 0.0;
    for u in &builtins {
        for &s in &signals {
            for &i in &interference {
                let f = |x: f64| u.value(s / (1.0 + x)).unwrap();
                let step = 1e-3 * (1.0 + i);
                let d2 = (f(i + step) - 2.0 * f(i) + f(i - step)) / (step * step);
                worst_curv = worst_curv.min(d2);

                let gamma = s / (1.0 + i);
                let expected = match u.kind() {
                    UtilityKind::PropFair => 1.0,
                    UtilityKind::AlphaFair { alpha } => alpha,
                    UtilityKind::Rate { theta } => theta * gamma / (1.0 + theta * gamma),
                };
                worst_kappa = worst_kappa.max((u.risk_aversion(gamma).unwrap() - expected).abs());
            }
        }
    }
    Verdict {
        id: 5,
        name: "convexity in interference",
        pass: worst_curv >= -1e-9 && worst_kappa <= 1e-12,
        detail: format!(
            "min numerical d2U/dI2 {worst_curv:.2e} (tol -1e-9), worst risk-aversion error {worst_kappa:.2e} (tol 1e-12)"
        ),
    }
}

fn criterion_overhead() -> Verdict {
    let shapes = [(1, 1, 1), (2, 2, 2), (3, 4, 3), (3, 6, 3), (2, 6, 6), (3, 6, 1)];
    let mut failures = 0;
    let mut checked = 0;
    let mut max_ratio: f64 = 0.0;
    for (idx, &(n, t, q)) in shapes.iter().enumerate() {
        let sc = ScenarioConfig {
            n,
            t,
            q,
            coordinated: (1..=4).collect(),
            seed: 40 + idx as u64,
            ..ScenarioConfig::default()
        };
        let (_, ch) = generate_scenario(&sc).unwrap();
        let m = sc.coordinated.len();
        let expected = ((m - 1) * 2 * q * n) as u64;
        let u = UtilitySpec::rate(1.0, 1.0).unwrap();
        let game = Game::new(&ch, u, sc.power(), SolverParams::default(), PricingMode::Priced).unwrap();
        let mut state = game.initialize(InitKind::Cm).unwrap();
        let mut last = state.log.total_scalars();
        game.run_observed(&mut state, &GameConfig::default(), |st, out| {
            let now = st.log.total_scalars();
            let want = if out.accepted && !out.tie { expected } else { 0 };
            if now - last != want {
                failures += 1;
            }
            checked += 1;
            last = now;
        })
        .unwrap();
        let report = overhead_report(&state.log, n, q, t);
        let ratio = q as f64 / (2.0 * (t * t) as f64);
        max_ratio = max_ratio.max(report.price_to_matrix_ratio);
        if (report.price_to_matrix_ratio - ratio).abs() > 1e-15 || report.price_to_matrix_ratio >= 1.0 {
            failures += 1;
        }
    }
    Verdict {
        id: 7,
        name: "overhead accounting",
        pass: failures == 0,
        detail: format!(
            "{checked} turns over {} shapes, scalars per accepted update = (M-1)*2*Q*N exactly, \
             max price/matrix ratio {max_ratio:.4} (< 1), failures {failures}",
            shapes.len()
        ),
    }
}

fn read_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = walk(dir)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv") && !p.ends_with("timings.csv"))
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn criterion_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let produce = |name: &str| {
        let mut cfg = validate_config(
            r#"{"utility": {"kind": "rate"}, "scheme": "all", "sweep": [0, 20], "trials": 3,
                "scenario": {"seed": 17}}"#,
        )
        .unwrap();
        cfg.out_dir = tmp.path().join(name).join("sweep");
        let sweep = run_sweep(&cfg, true).unwrap();
        write_sweep(&cfg, &sweep, "sweep").unwrap();
        let mut conv = default_config("prop_fair");
        conv.scenario.seed = 17;
        conv.out_dir = tmp.path().join(name).join("converge");
        let run = run_convergence(&conv).unwrap();
        write_convergence(&conv, &run, true, "converge").unwrap();
        read_csvs(&tmp.path().join(name))
    };
    let a = produce("a");
    let b = produce("b");
    let bytes: usize = a.iter().map(|(_, v)| v.len()).sum();
    Verdict {
        id: 9,
        name: "determinism",
        pass: a == b && a.len() >= 6,
        detail: format!("{} CSV files, {bytes} bytes, identical across two runs: {}", a.len(), a == b),
    }
}

fn main() {
    let t0 = Instant::now();
    let mut verdicts = vec![criterion_closed_form(), criterion_kkt(), criterion_convexity(), criterion_overhead()];

    let jobs: Vec<(usize, u64, f64)> = (0..3)
        .flat_map(|k| (1..=SEEDS).flat_map(move |s| [(k, s, 30.0), (k, s, 0.0)]))
        .collect();
    let runs: Vec<SeedRun> = jobs.iter().map(|&(k, s, snr)| run_seed(k, s, snr)).collect();
    verdicts.extend(game_criteria(&runs));
    verdicts.push(criterion_determinism());

    verdicts.sort_by_key(|v| v.id);
    let mut failed = 0;
    for v in &verdicts {
        println!(
            "criterion {} [{}] {}: {}",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        verdicts.len() - failed,
        verdicts.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
