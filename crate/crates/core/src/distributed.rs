//! Round-robin better-response game between coordinated base stations, with
//! simulated message exchange and Nash-equilibrium verification.

use serde::{Deserialize, Serialize};

use crate::baselines::{channel_matched, in_cell_zero_forcing};
use crate::error::{Error, Result};
use crate::game::{compute_interference, network_utility, prices_at, BeamAssignment, InterferenceReport, PriceTable};
use crate::hermitian::ComplexVec;
use crate::network::ChannelSet;
use crate::solver::{bisect_lambda, BisectionOutcome, CellProblem, SolverParams};
use crate::utility::UtilitySpec;

/// Payoff differences below this are ties.
pub const TIE_TOL: f64 = 1e-12;

/// Fraction of the relative tolerance a round's payoff gains must stay under
/// before the run counts as settled.
pub const GAIN_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[serde(alias = "CM")]
    Cm,
    #[serde(alias = "ICZF")]
    Iczf,
}

/// Whether other cells' prices enter a BS's problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PricingMode {
    Priced,
    /// Out-cell prices are zero; no prices are exchanged.
    NonCooperative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub max_outer: usize,
    pub rel_utility_tol: f64,
    pub init: InitKind,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            max_outer: 50,
            rel_utility_tol: 1e-4,
            init: InitKind::Cm,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_utility_tol > 0.0 && self.rel_utility_tol.is_finite()) {
            return Err(Error::config("game.rel_utility_tol", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MessageRecord {
    pub round: usize,
    pub sender: usize,
    pub receiver: usize,
    pub price_scalars: u64,
    pub interference_scalars: u64,
}

/// Every scalar one BS sends another.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageLog {
    pub records: Vec<MessageRecord>,
    /// Real scalars of channel vectors shared once at setup.
    pub setup_channel_scalars: u64,
}

impl MessageLog {
    pub fn price_scalars(&self) -> u64 {
        self.records.iter().map(|r| r.price_scalars).sum()
    }

    pub fn interference_scalars(&self) -> u64 {
        self.records.iter().map(|r| r.interference_scalars).sum()
    }

    /// Price and interference scalars; setup traffic excluded.
    pub fn total_scalars(&self) -> u64 {
        self.price_scalars() + self.interference_scalars()
    }

    pub fn round_scalars(&self, round: usize) -> u64 {
        self.records
            .iter()
            .filter(|r| r.round == round)
            .map(|r| r.price_scalars + r.interference_scalars)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub outer_round: usize,
    /// Cell that just moved; `None` for the initial point.
    pub active_bs: Option<usize>,
    pub network_utility: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub w: BeamAssignment,
    pub interference: InterferenceReport,
    pub prices: PriceTable,
    pub payoffs: Vec<f64>,
    /// Completed rounds.
    pub outer_iteration: usize,
    pub accepted_updates: usize,
    pub utility_trace: Vec<TracePoint>,
    pub log: MessageLog,
}

impl GameState {
    pub fn network_utility(&self) -> f64 {
        self.utility_trace
            .last()
            .map(|p| p.network_utility)
            .unwrap_or(f64::NAN)
    }
}

/// Result of one BS's turn.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub cell: usize,
    pub accepted: bool,
    /// Accepted, but neither payoff nor beams moved.
    pub tie: bool,
    pub previous: Vec<ComplexVec>,
    pub candidate: Vec<ComplexVec>,
    pub payoff_before: f64,
    pub payoff_after: f64,
    pub solve: BisectionOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub converged: bool,
    pub rounds: usize,
    pub accepted_updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashReport {
    /// `payoff(best response) - payoff(current)` per BS.
    pub improvements: Vec<f64>,
    /// Improvements divided by `1 + |payoff|`.
    pub relative: Vec<f64>,
    pub certified: bool,
}

/// Everything a game run needs besides its mutable state.
#[derive(Debug, Clone)]
pub struct Game<'a> {
    pub ch: &'a ChannelSet,
    pub utility: UtilitySpec,
    pub budget: f64,
    pub solver: SolverParams,
    pub mode: PricingMode,
}

impl<'a> Game<'a> {
    pub fn new(
        ch: &'a ChannelSet,
        utility: UtilitySpec,
        budget: f64,
        solver: SolverParams,
        mode: PricingMode,
    ) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::Domain(format!("power budget must be positive, got {budget}")));
        }
        solver.validate()?;
        Ok(Game {
            ch,
            utility,
            budget,
            solver,
            mode,
        })
    }

    pub fn initialize(&self, init: InitKind) -> Result<GameState> {
        let w = match init {
            InitKind::Cm => channel_matched(self.ch, self.budget)?,
            InitKind::Iczf => in_cell_zero_forcing(self.ch, self.budget)?,
        };
        Ok(self.state_from(w))
    }

    /// Consistent state around arbitrary beams, with a fresh trace and log.
    pub fn state_from(&self, w: BeamAssignment) -> GameState {
        let dims = self.ch.dims();
        let mut state = GameState {
            interference: compute_interference(&w, self.ch),
            prices: prices_at(&self.utility, &w, self.ch),
            w,
            payoffs: Vec::new(),
            outer_iteration: 0,
            accepted_updates: 0,
            utility_trace: Vec::new(),
            log: MessageLog {
                records: Vec::new(),
                // T complex entries per (interfering BS, victim) pair.
                setup_channel_scalars: (2 * dims.antennas * dims.num_users() * (dims.cells - 1)) as u64,
            },
        };
        state.payoffs = (0..dims.cells).map(|m| self.current_payoff(&state, m)).collect();
        state.utility_trace.push(TracePoint {
            outer_round: 0,
            active_bs: None,
            network_utility: network_utility(&self.utility, &state.w, self.ch),
            accepted: true,
        });
        state
    }

    /// Prices other cells announce under this pricing mode.
    fn announced_prices(&self, state: &GameState) -> PriceTable {
        match self.mode {
            PricingMode::Priced => state.prices.clone(),
            PricingMode::NonCooperative => PriceTable::zeros(self.ch.dims()),
        }
    }

    pub fn problem(&self, state: &GameState, cell: usize) -> CellProblem<'a> {
        CellProblem::new(
            self.ch,
            cell,
            self.utility,
            self.budget,
            &state.interference,
            &self.announced_prices(state),
        )
    }

    fn current_payoff(&self, state: &GameState, cell: usize) -> f64 {
        payoff_of(&self.problem(state, cell), state.w.cell_beams(cell))
    }

    /// One better-response turn of `cell`.
    pub fn step(&self, state: &mut GameState, cell: usize) -> Result<StepOutcome> {
        let problem = self.problem(state, cell);
        let previous = state.w.cell_beams(cell).to_vec();
        let solve = bisect_lambda(&problem, &previous, &self.solver)?;
        let candidate = solve.beams.clone();

        let before = payoff_of(&problem, &previous);
        let after = payoff_of(&problem, &candidate);
        // The payoff test alone does not bound what the move costs other
        // cells; this guard does, whenever every utility has κ in [0, 2].
        let guard = guarded_utility(&problem, &candidate) >= guarded_utility(&problem, &previous);
        let accepted = after >= before && guard;
        let tie = accepted && (after - before).abs() < TIE_TOL * (1.0 + before.abs()) && max_rel_change(&previous, &candidate) < 1e-9;

        if accepted {
            state.w.set_cell_beams(cell, &candidate);
            state.interference = compute_interference(&state.w, self.ch);
            state.prices = prices_at(&self.utility, &state.w, self.ch);
            let cells = self.ch.dims().cells;
            state.payoffs = (0..cells).map(|m| self.current_payoff(state, m)).collect();
            if !tie {
                state.accepted_updates += 1;
                self.log_update(state, cell);
            }
        }
        state.utility_trace.push(TracePoint {
            outer_round: state.outer_iteration + 1,
            active_bs: Some(cell),
            network_utility: network_utility(&self.utility, &state.w, self.ch),
            accepted: accepted && !tie,
        });
        Ok(StepOutcome {
            cell,
            accepted,
            tie,
            previous,
            candidate,
            payoff_before: before,
            payoff_after: after,
            solve,
        })
    }

    fn log_update(&self, state: &mut GameState, sender: usize) {
        let dims = self.ch.dims();
        let per_receiver = (dims.subs * dims.slots) as u64;
        let prices = match self.mode {
            PricingMode::Priced => per_receiver,
            PricingMode::NonCooperative => 0,
        };
        let round = state.outer_iteration + 1;
        for receiver in (0..dims.cells).filter(|&j| j != sender) {
            state.log.records.push(MessageRecord {
                round,
                sender,
                receiver,
                price_scalars: prices,
                interference_scalars: per_receiver,
            });
        }
    }

    pub fn run(&self, state: &mut GameState, cfg: &GameConfig) -> Result<RunSummary> {
        self.run_observed(state, cfg, |_, _| {})
    }

    /// [`Game::run`], calling `observe` after every turn.
    pub fn run_observed<F>(&self, state: &mut GameState, cfg: &GameConfig, mut observe: F) -> Result<RunSummary>
    where
        F: FnMut(&GameState, &StepOutcome),
    {
        let start = state.accepted_updates;
        let mut converged = false;
        while state.outer_iteration < cfg.max_outer {
            let before = state.network_utility();
            let accepted_before = state.accepted_updates;
            let mut largest_gain: f64 = 0.0;
            for m in 0..self.ch.dims().cells {
                let outcome = self.step(state, m)?;
                if outcome.accepted {
                    let gain = (outcome.payoff_after - outcome.payoff_before) / (1.0 + outcome.payoff_before.abs());
                    largest_gain = largest_gain.max(if gain.is_nan() { f64::INFINITY } else { gain });
                }
                observe(state, &outcome);
            }
            state.outer_iteration += 1;
            let after = state.network_utility();
            let rel = (after - before).abs() / before.abs().max(f64::MIN_POSITIVE);
            // Network utility can settle while single cells still gain, so the
            // round's payoff gains must be small too. Later movers reopen gains
            // of earlier ones, hence the margin.
            let settled = rel <= cfg.rel_utility_tol && largest_gain <= GAIN_MARGIN * cfg.rel_utility_tol;
            if state.accepted_updates == accepted_before || settled {
                converged = true;
                break;
            }
        }
        Ok(RunSummary {
            converged,
            rounds: state.outer_iteration,
            accepted_updates: state.accepted_updates - start,
        })
    }

    /// Re-solves each BS's problem against the frozen rest of the network.
    pub fn verify_nash(&self, state: &GameState, eps: f64) -> Result<NashReport> {
        let cells = self.ch.dims().cells;
        let mut improvements = Vec::with_capacity(cells);
        let mut relative = Vec::with_capacity(cells);
        for m in 0..cells {
            let problem = self.problem(state, m);
            let current = state.w.cell_beams(m);
            let solve = bisect_lambda(&problem, current, &self.solver)?;
            let base = payoff_of(&problem, current);
            let gain = payoff_of(&problem, &solve.beams) - base;
            improvements.push(gain);
            relative.push(gain / (1.0 + base.abs()));
        }
        let certified = relative.iter().all(|&r| r <= eps);
        Ok(NashReport {
            improvements,
            relative,
            certified,
        })
    }
}

/// Payoff of the problem's cell when it plays `beams`: own utility minus the
/// leakage cost, in-cell prices taken at `beams`, out-cell prices frozen.
pub fn payoff_of(problem: &CellProblem<'_>, beams: &[ComplexVec]) -> f64 {
    problem.lagrangian(beams, 0.0)
}

/// Own utility minus out-cell leakage cost at frozen prices.
pub fn guarded_utility(problem: &CellProblem<'_>, beams: &[ComplexVec]) -> f64 {
    let slots = problem.slots();
    let mut total = 0.0;
    for n in 0..problem.subs() {
        let l = &problem.l_out[n];
        for k in 0..slots {
            let w = &beams[n * slots + k];
            total += problem.utility.value_or_neg_inf(problem.sinr(beams, n, k)) - w.dotc(&l.mul_vec(w)).re;
        }
    }
    total
}

fn max_rel_change(a: &[ComplexVec], b: &[ComplexVec]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.norm().max(y.norm());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).norm() / scale
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadReport {
    pub total_scalars: u64,
    pub price_scalars: u64,
    pub interference_scalars: u64,
    pub setup_channel_scalars: u64,
    /// Scalars per round, index 0 is round 1.
    pub per_round: Vec<u64>,
    /// What the same updates would cost shipping `T x T` complex leakage
    /// matrices instead of `Q` prices per sub-channel.
    pub matrix_scheme_scalars: u64,
    /// `Q / (2 T^2)`.
    pub price_to_matrix_ratio: f64,
}

pub fn overhead_report(log: &MessageLog, subs: usize, slots: usize, antennas: usize) -> OverheadReport {
    let rounds = log.records.iter().map(|r| r.round).max().unwrap_or(0);
    let per_round = (1..=rounds).map(|r| log.round_scalars(r)).collect();
    let matrix_per_sub = (2 * antennas * antennas) as u64;
    let matrix_scheme_scalars = log
        .records
        .iter()
        .map(|r| {
            let prices = if r.price_scalars > 0 { matrix_per_sub * subs as u64 } else { 0 };
            prices + r.interference_scalars
        })
        .sum();
    OverheadReport {
        total_scalars: log.total_scalars(),
        price_scalars: log.price_scalars(),
        interference_scalars: log.interference_scalars(),
        setup_channel_scalars: log.setup_channel_scalars,
        per_round,
        matrix_scheme_scalars,
        price_to_matrix_ratio: slots as f64 / (2 * antennas * antennas) as f64,
    }
}
