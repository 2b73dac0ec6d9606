//! Per-BS beam update by dual decomposition.
//!
//! For a fixed power multiplier `lambda`, each user's subproblem has the
//! closed-form KKT solution `w = beta * (L + lambda I)^+ h`. Users of one
//! sub-channel are coupled through in-cell interference and in-cell prices,
//! so the closed form is iterated as a Gauss-Seidel sweep over slots. An outer
//! bisection drives `lambda` until the cell meets its power budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{gain, out_cell_leakage, price, BeamAssignment, InterferenceReport, PriceTable};
use crate::hermitian::{ComplexVec, HermitianMat, C64, EPS_PSD};
use crate::network::{ChannelSet, UserId};
use crate::utility::UtilitySpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub lambda_min_init: f64,
    pub lambda_max_init: f64,
    /// Bisection stops once `(hi - lo) <= lambda_tol * hi`.
    pub lambda_tol: f64,
    pub inner_max_sweeps: usize,
    /// Inner sweeps stop once the largest relative beam change falls below this.
    pub inner_tol: f64,
    pub rank_tol: f64,
    pub lambda_floor: f64,
    pub max_doublings: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            lambda_min_init: 1e-12,
            lambda_max_init: 1.0,
            lambda_tol: 1e-6,
            inner_max_sweeps: 50,
            inner_tol: 1e-5,
            rank_tol: 1e-10,
            lambda_floor: 1e-12,
            max_doublings: 60,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: &str| Err(Error::config(format!("solver.{path}"), msg));
        if !(self.lambda_floor > 0.0) {
            return bad("lambda_floor", "must be positive");
        }
        if !(self.lambda_min_init >= self.lambda_floor) {
            return bad("lambda_min_init", "must be at least lambda_floor");
        }
        if !(self.lambda_max_init > self.lambda_min_init) {
            return bad("lambda_max_init", "must exceed lambda_min_init");
        }
        for (name, v) in [
            ("lambda_tol", self.lambda_tol),
            ("inner_tol", self.inner_tol),
            ("rank_tol", self.rank_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, "must be positive");
            }
        }
        if self.inner_max_sweeps == 0 {
            return bad("inner_max_sweeps", "must be at least 1");
        }
        Ok(())
    }
}

/// Data of one user's subproblem with the power multiplier fixed.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemInput<'a> {
    pub h: &'a ComplexVec,
    pub leakage: &'a HermitianMat,
    /// Total interference, held fixed.
    pub interference: f64,
    pub utility: &'a UtilitySpec,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamUpdate {
    pub w: ComplexVec,
    pub power: f64,
    /// SINR the update attains, `Inv{U'}((1 + I) / h^H T^+ h)`.
    pub sinr: f64,
}

impl BeamUpdate {
    fn off(dim: usize) -> Self {
        BeamUpdate {
            w: ComplexVec::zeros(dim),
            power: 0.0,
            sinr: 0.0,
        }
    }
}

/// Closed-form KKT point of one user's subproblem.
pub fn kkt_beam_update(input: &SubproblemInput<'_>, params: &SolverParams) -> Result<BeamUpdate> {
    let dim = input.h.len();
    if input.leakage.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: input.leakage.dim(),
        });
    }
    let eig = input.leakage.eigen()?;
    let min = eig.min_eigenvalue();
    if min < -EPS_PSD {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    if input.lambda < params.lambda_floor {
        // Only admissible when h lies in the column span of L.
        let residual = eig.range_residual(input.h, params.rank_tol);
        if residual > 1e-8 * input.h.norm() {
            return Err(Error::LambdaBelowFloor {
                lambda: input.lambda,
            });
        }
    }
    let g = eig.apply_shifted_pinv(input.h, input.lambda.max(0.0), params.rank_tol);
    let a = input.h.dotc(&g).re;
    if !(a > params.rank_tol) {
        return Ok(BeamUpdate::off(dim));
    }
    let one_plus_i = 1.0 + input.interference;
    let phi = input.utility.inverse_derivative(one_plus_i / a)?;
    if phi <= 0.0 {
        return Ok(BeamUpdate::off(dim));
    }
    let upsilon = 1.0 / (a * a);
    let beta = (one_plus_i * phi * upsilon).sqrt();
    let w = g * C64::new(beta, 0.0);
    let power = w.norm_squared();
    Ok(BeamUpdate { w, power, sinr: phi })
}

/// One BS's local problem: everything outside the cell is frozen.
#[derive(Debug, Clone)]
pub struct CellProblem<'a> {
    pub ch: &'a ChannelSet,
    pub cell: usize,
    pub utility: UtilitySpec,
    pub budget: f64,
    /// Out-cell leakage per sub-channel.
    pub l_out: Vec<HermitianMat>,
    /// Out-cell interference per own user, ordered by sub-channel then slot.
    pub i_out: Vec<f64>,
}

impl<'a> CellProblem<'a> {
    /// Freezes the out-cell interference of `report` and the out-cell leakage
    /// built from `prices`. Own-cell entries of `prices` are ignored.
    pub fn new(
        ch: &'a ChannelSet,
        cell: usize,
        utility: UtilitySpec,
        budget: f64,
        report: &InterferenceReport,
        prices: &PriceTable,
    ) -> Self {
        let dims = ch.dims();
        let l_out = (0..dims.subs)
            .map(|n| out_cell_leakage(prices, ch, cell, n))
            .collect();
        let i_out = dims.cell_users(cell).map(|u| report.out_cell(u)).collect();
        CellProblem {
            ch,
            cell,
            utility,
            budget,
            l_out,
            i_out,
        }
    }

    pub fn subs(&self) -> usize {
        self.ch.dims().subs
    }

    pub fn slots(&self) -> usize {
        self.ch.dims().slots
    }

    fn idx(&self, sub: usize, slot: usize) -> usize {
        sub * self.slots() + slot
    }

    fn direct(&self, sub: usize, slot: usize) -> &ComplexVec {
        self.ch.direct(UserId {
            cell: self.cell,
            sub,
            slot,
        })
    }

    /// Total interference at (sub, slot) given the cell's candidate beams.
    pub fn interference(&self, beams: &[ComplexVec], sub: usize, slot: usize) -> f64 {
        let h = self.direct(sub, slot);
        let in_cell: f64 = (0..self.slots())
            .filter(|&k| k != slot)
            .map(|k| gain(h, &beams[self.idx(sub, k)]))
            .sum();
        in_cell + self.i_out[self.idx(sub, slot)]
    }

    pub fn sinr(&self, beams: &[ComplexVec], sub: usize, slot: usize) -> f64 {
        gain(self.direct(sub, slot), &beams[self.idx(sub, slot)])
            / (1.0 + self.interference(beams, sub, slot))
    }

    /// Leakage of (sub, slot): frozen out-cell part plus in-cell part priced
    /// at the candidate beams.
    pub fn leakage(&self, beams: &[ComplexVec], sub: usize, slot: usize) -> HermitianMat {
        let mut l = self.l_out[sub].clone();
        for k in (0..self.slots()).filter(|&k| k != slot) {
            let h = self.direct(sub, k);
            let signal = gain(h, &beams[self.idx(sub, k)]);
            let interference = self.interference(beams, sub, k);
            let p = price(&self.utility, signal / (1.0 + interference), interference, signal);
            if p != 0.0 {
                l.add_outer(p, h);
            }
        }
        l
    }

    pub fn power(beams: &[ComplexVec]) -> f64 {
        beams.iter().map(|w| w.norm_squared()).sum()
    }

    /// Lagrangian `sum (U(Γ) - w^H L w - lambda |w|^2) + lambda P` at `beams`.
    pub fn lagrangian(&self, beams: &[ComplexVec], lambda: f64) -> f64 {
        let mut total = lambda * self.budget;
        for n in 0..self.subs() {
            for k in 0..self.slots() {
                let w = &beams[self.idx(n, k)];
                let l = self.leakage(beams, n, k);
                total += self.utility.value_or_neg_inf(self.sinr(beams, n, k))
                    - w.dotc(&l.mul_vec(w)).re
                    - lambda * w.norm_squared();
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub beams: Vec<ComplexVec>,
    pub converged: bool,
    pub sweeps: usize,
    pub power: f64,
}

/// Gauss-Seidel sweeps of the closed-form update at a fixed `lambda`.
pub fn inner_sweep(
    problem: &CellProblem<'_>,
    start: &[ComplexVec],
    lambda: f64,
    params: &SolverParams,
) -> Result<InnerOutcome> {
    let (subs, slots) = (problem.subs(), problem.slots());
    let mut beams = start.to_vec();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < params.inner_max_sweeps {
        sweeps += 1;
        let mut worst: f64 = 0.0;
        for k in 0..slots {
            // Sub-channels are decoupled; their updates are independent.
            for n in 0..subs {
                let interference = problem.interference(&beams, n, k);
                let leakage = problem.leakage(&beams, n, k);
                let update = kkt_beam_update(
                    &SubproblemInput {
                        h: problem.direct(n, k),
                        leakage: &leakage,
                        interference,
                        utility: &problem.utility,
                        lambda,
                    },
                    params,
                )?;
                let i = problem.idx(n, k);
                let old = &beams[i];
                let scale = old.norm().max(update.w.norm());
                if scale > 0.0 {
                    worst = worst.max((&update.w - old).norm() / scale);
                }
                beams[i] = update.w;
            }
        }
        if slots == 1 || worst <= params.inner_tol {
            converged = true;
            break;
        }
    }
    let power = CellProblem::power(&beams);
    Ok(InnerOutcome {
        beams,
        converged,
        sweeps,
        power,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionOutcome {
    pub lambda: f64,
    pub beams: Vec<ComplexVec>,
    pub power: f64,
    /// The budget is not binding: `lambda` sits at the floor.
    pub slack: bool,
    /// Every inner sweep reached its tolerance.
    pub inner_converged: bool,
    pub evaluations: usize,
}

/// Bisection on the power multiplier, each probe solved by [`inner_sweep`]
/// started from `start`.
pub fn bisect_lambda(
    problem: &CellProblem<'_>,
    start: &[ComplexVec],
    params: &SolverParams,
) -> Result<BisectionOutcome> {
    let budget = problem.budget;
    let mut evaluations = 0;
    let mut all_converged = true;
    let mut probe = |lambda: f64| -> Result<InnerOutcome> {
        evaluations += 1;
        let out = inner_sweep(problem, start, lambda, params)?;
        all_converged &= out.converged;
        Ok(out)
    };

    let mut lo = params.lambda_min_init;
    let at_lo = probe(lo)?;
    let (mut hi, mut at_hi);
    if at_lo.power <= budget {
        if lo > params.lambda_floor {
            let at_floor = probe(params.lambda_floor)?;
            if at_floor.power <= budget {
                return Ok(slack_outcome(params.lambda_floor, at_floor, all_converged, evaluations));
            }
            hi = lo;
            at_hi = at_lo;
            lo = params.lambda_floor;
        } else {
            return Ok(slack_outcome(lo, at_lo, all_converged, evaluations));
        }
    } else {
        hi = params.lambda_max_init.max(lo);
        at_hi = probe(hi)?;
        let mut doublings = 0;
        while at_hi.power > budget && doublings < params.max_doublings {
            lo = hi;
            hi *= 2.0;
            at_hi = probe(hi)?;
            doublings += 1;
        }
    }

    while hi - lo > params.lambda_tol * hi {
        let mid = 0.5 * (lo + hi);
        let at_mid = probe(mid)?;
        if at_mid.power > budget {
            lo = mid;
        } else {
            hi = mid;
            at_hi = at_mid;
        }
    }

    let mut beams = at_hi.beams;
    let mut power = at_hi.power;
    // The budget binds here, so close the gap the bisection width leaves.
    if power > 0.0 && power != budget {
        let s = (budget / power).sqrt();
        for w in &mut beams {
            *w *= C64::new(s, 0.0);
        }
        power = CellProblem::power(&beams);
    }
    Ok(BisectionOutcome {
        lambda: hi,
        beams,
        power,
        slack: false,
        inner_converged: all_converged,
        evaluations,
    })
}

fn slack_outcome(lambda: f64, out: InnerOutcome, converged: bool, evaluations: usize) -> BisectionOutcome {
    BisectionOutcome {
        lambda,
        power: out.power,
        beams: out.beams,
        slack: true,
        inner_converged: converged,
        evaluations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    pub stationarity: f64,
    pub power_gap: f64,
    pub slackness: f64,
}

/// Residuals of stationarity, primal feasibility and complementary slackness.
pub fn kkt_residual(problem: &CellProblem<'_>, beams: &[ComplexVec], lambda: f64) -> Result<KktResidual> {
    let mut stationarity: f64 = 0.0;
    for n in 0..problem.subs() {
        for k in 0..problem.slots() {
            let w = &beams[problem.idx(n, k)];
            if w.norm_squared() == 0.0 {
                continue;
            }
            let h = problem.direct(n, k);
            let one_plus_i = 1.0 + problem.interference(beams, n, k);
            let sinr = gain(h, w) / one_plus_i;
            let d = problem.utility.derivative(sinr)?;
            let t = problem.leakage(beams, n, k).shifted(lambda);
            let lhs = h * (h.dotc(w) * C64::new(d / one_plus_i, 0.0));
            let r = lhs - t.mul_vec(w);
            let norm_t = t.eigen()?.spectral_norm();
            stationarity = stationarity.max(r.norm() / (norm_t * w.norm() + 1e-300));
        }
    }
    let power = CellProblem::power(beams);
    Ok(KktResidual {
        stationarity,
        power_gap: (power - problem.budget).max(0.0),
        slackness: (lambda * (power - problem.budget)).abs(),
    })
}

/// Convenience wrapper: best response of `cell` against the frozen rest of the
/// network, started from its current beams.
pub fn solve_cell(
    problem: &CellProblem<'_>,
    current: &BeamAssignment,
    params: &SolverParams,
) -> Result<BisectionOutcome> {
    bisect_lambda(problem, current.cell_beams(problem.cell), params)
}
