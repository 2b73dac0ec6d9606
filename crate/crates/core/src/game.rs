//! Evaluation of game quantities from a beam assignment: interference split,
//! SINR, interference prices, leakage matrices, per-BS payoff and network
//! utility.

use crate::hermitian::{quad_form, ComplexVec, HermitianMat};
use crate::network::{ChannelSet, Dims, UserId};
use crate::utility::UtilitySpec;

/// Beam vectors for every served user, indexed by [`Dims::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeamAssignment {
    dims: Dims,
    w: Vec<ComplexVec>,
}

impl BeamAssignment {
    pub fn zeros(dims: Dims) -> Self {
        BeamAssignment {
            dims,
            w: vec![ComplexVec::zeros(dims.antennas); dims.num_users()],
        }
    }

    pub fn from_vecs(dims: Dims, w: Vec<ComplexVec>) -> Self {
        assert_eq!(w.len(), dims.num_users(), "one beam per user");
        assert!(w.iter().all(|v| v.len() == dims.antennas));
        BeamAssignment { dims, w }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn get(&self, u: UserId) -> &ComplexVec {
        &self.w[self.dims.index(u)]
    }

    pub fn set(&mut self, u: UserId, w: ComplexVec) {
        let i = self.dims.index(u);
        self.w[i] = w;
    }

    /// Beams of `cell`, ordered by sub-channel then slot.
    pub fn cell_beams(&self, cell: usize) -> &[ComplexVec] {
        let per = self.dims.users_per_cell();
        &self.w[cell * per..(cell + 1) * per]
    }

    pub fn set_cell_beams(&mut self, cell: usize, beams: &[ComplexVec]) {
        let per = self.dims.users_per_cell();
        assert_eq!(beams.len(), per);
        self.w[cell * per..(cell + 1) * per].clone_from_slice(beams);
    }

    pub fn cell_power(&self, cell: usize) -> f64 {
        self.cell_beams(cell).iter().map(|w| w.norm_squared()).sum()
    }

    pub fn scale_cell(&mut self, cell: usize, factor: f64) {
        let per = self.dims.users_per_cell();
        for w in &mut self.w[cell * per..(cell + 1) * per] {
            *w *= crate::hermitian::C64::new(factor, 0.0);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, &ComplexVec)> {
        self.w.iter().enumerate().map(|(i, w)| (self.dims.user(i), w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceReport {
    dims: Dims,
    pub i_in: Vec<f64>,
    pub i_out: Vec<f64>,
    /// `i_out_by_source[user * cells + j]`: interference at `user` from cell `j`.
    pub i_out_by_source: Vec<f64>,
}

impl InterferenceReport {
    pub fn total(&self, u: UserId) -> f64 {
        let i = self.dims.index(u);
        self.i_in[i] + self.i_out[i]
    }

    pub fn totals(&self) -> Vec<f64> {
        self.i_in.iter().zip(&self.i_out).map(|(a, b)| a + b).collect()
    }

    pub fn from_source(&self, victim: UserId, source_cell: usize) -> f64 {
        self.i_out_by_source[self.dims.index(victim) * self.dims.cells + source_cell]
    }

    pub fn in_cell(&self, u: UserId) -> f64 {
        self.i_in[self.dims.index(u)]
    }

    pub fn out_cell(&self, u: UserId) -> f64 {
        self.i_out[self.dims.index(u)]
    }
}

/// `|h^H w|^2`.
pub fn gain(h: &ComplexVec, w: &ComplexVec) -> f64 {
    h.dotc(w).norm_sqr()
}

pub fn compute_interference(w: &BeamAssignment, ch: &ChannelSet) -> InterferenceReport {
    let dims = ch.dims();
    let users = dims.num_users();
    let mut i_in = vec![0.0; users];
    let mut i_out = vec![0.0; users];
    let mut by_source = vec![0.0; users * dims.cells];
    for victim in dims.users() {
        let vi = dims.index(victim);
        for k in 0..dims.slots {
            if k != victim.slot {
                let peer = UserId { slot: k, ..victim };
                i_in[vi] += gain(ch.direct(victim), w.get(peer));
            }
        }
        for j in (0..dims.cells).filter(|&j| j != victim.cell) {
            let h = ch.h(j, victim);
            let s: f64 = dims.group(j, victim.sub).map(|u| gain(h, w.get(u))).sum();
            by_source[vi * dims.cells + j] = s;
            i_out[vi] += s;
        }
    }
    InterferenceReport {
        dims,
        i_in,
        i_out,
        i_out_by_source: by_source,
    }
}

pub fn signal_powers(w: &BeamAssignment, ch: &ChannelSet) -> Vec<f64> {
    ch.dims()
        .users()
        .map(|u| gain(ch.direct(u), w.get(u)))
        .collect()
}

pub fn compute_sinr(w: &BeamAssignment, ch: &ChannelSet, report: &InterferenceReport) -> Vec<f64> {
    ch.dims()
        .users()
        .map(|u| gain(ch.direct(u), w.get(u)) / (1.0 + report.total(u)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    pub pi: Vec<f64>,
}

impl PriceTable {
    pub fn zeros(dims: Dims) -> Self {
        PriceTable {
            pi: vec![0.0; dims.num_users()],
        }
    }

    pub fn get(&self, dims: Dims, u: UserId) -> f64 {
        self.pi[dims.index(u)]
    }
}

/// Interference price `U'(Γ) |h^H w|^2 / (1 + I)^2` of one user.
///
/// A silent user (zero signal power) is priced at zero under every utility.
pub fn price(u: &UtilitySpec, sinr: f64, interference: f64, signal: f64) -> f64 {
    if signal <= 0.0 || sinr <= 0.0 {
        return 0.0;
    }
    let d = u
        .derivative(sinr)
        .expect("positive SINR lies in every utility's domain");
    d * signal / ((1.0 + interference) * (1.0 + interference))
}

pub fn compute_prices(
    u: &UtilitySpec,
    sinr: &[f64],
    interference: &[f64],
    signal: &[f64],
) -> PriceTable {
    let pi = sinr
        .iter()
        .zip(interference)
        .zip(signal)
        .map(|((&g, &i), &s)| price(u, g, i, s))
        .collect();
    PriceTable { pi }
}

/// Prices for every user at beam state `w`.
pub fn prices_at(u: &UtilitySpec, w: &BeamAssignment, ch: &ChannelSet) -> PriceTable {
    let report = compute_interference(w, ch);
    let sinr = compute_sinr(w, ch, &report);
    compute_prices(u, &sinr, &report.totals(), &signal_powers(w, ch))
}

/// Leakage matrices of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageSet {
    pub cell: usize,
    slots: usize,
    /// In-cell part per (sub, slot).
    pub l_in: Vec<HermitianMat>,
    /// Out-cell part per sub-channel, shared by all users of the cell there.
    pub l_out: Vec<HermitianMat>,
}

impl LeakageSet {
    pub fn total(&self, sub: usize, slot: usize) -> HermitianMat {
        let mut l = self.l_out[sub].clone();
        l.add_assign(&self.l_in[sub * self.slots + slot]);
        l
    }

    pub fn in_cell(&self, sub: usize, slot: usize) -> &HermitianMat {
        &self.l_in[sub * self.slots + slot]
    }
}

/// Out-cell leakage `sum_{j != cell} sum_{u in B_j} pi_u h_{cell,u} h_{cell,u}^H` on `sub`.
pub fn out_cell_leakage(prices: &PriceTable, ch: &ChannelSet, cell: usize, sub: usize) -> HermitianMat {
    let dims = ch.dims();
    let mut l = HermitianMat::zeros(dims.antennas);
    for j in (0..dims.cells).filter(|&j| j != cell) {
        for victim in dims.group(j, sub) {
            let p = prices.get(dims, victim);
            if p != 0.0 {
                l.add_outer(p, ch.h(cell, victim));
            }
        }
    }
    l
}

/// In-cell leakage seen by `slot`: its peers' price-weighted channel outer products.
pub fn in_cell_leakage(
    prices: &PriceTable,
    ch: &ChannelSet,
    cell: usize,
    sub: usize,
    slot: usize,
) -> HermitianMat {
    let dims = ch.dims();
    let mut l = HermitianMat::zeros(dims.antennas);
    for peer in dims.group(cell, sub).filter(|p| p.slot != slot) {
        let p = prices.get(dims, peer);
        if p != 0.0 {
            l.add_outer(p, ch.direct(peer));
        }
    }
    l
}

pub fn compute_leakage(prices: &PriceTable, ch: &ChannelSet, cell: usize) -> LeakageSet {
    let dims = ch.dims();
    let l_out = (0..dims.subs)
        .map(|n| out_cell_leakage(prices, ch, cell, n))
        .collect();
    let mut l_in = Vec::with_capacity(dims.users_per_cell());
    for n in 0..dims.subs {
        for k in 0..dims.slots {
            l_in.push(in_cell_leakage(prices, ch, cell, n, k));
        }
    }
    LeakageSet {
        cell,
        slots: dims.slots,
        l_in,
        l_out,
    }
}

/// Sum of the cell's user utilities at `w`. A zero SINR under a utility that
/// is unbounded below contributes `-inf`.
pub fn cell_utility(u: &UtilitySpec, w: &BeamAssignment, sinr: &[f64], cell: usize) -> f64 {
    let dims = w.dims();
    dims.cell_users(cell)
        .map(|user| u.value_or_neg_inf(sinr[dims.index(user)]))
        .sum()
}

/// Interference cost `sum_{n,k} w^H L w` the cell pays at `w` under `prices`.
pub fn cell_cost(w: &BeamAssignment, ch: &ChannelSet, prices: &PriceTable, cell: usize) -> f64 {
    let leak = compute_leakage(prices, ch, cell);
    let dims = ch.dims();
    let mut cost = 0.0;
    for n in 0..dims.subs {
        for k in 0..dims.slots {
            let beam = w.get(UserId { cell, sub: n, slot: k });
            cost += quad_form(beam, &leak.total(n, k)).expect("dimensions agree");
        }
    }
    cost
}

/// Payoff of `cell`: its users' utilities minus its priced leakage.
pub fn payoff(u: &UtilitySpec, w: &BeamAssignment, ch: &ChannelSet, prices: &PriceTable, cell: usize) -> f64 {
    let report = compute_interference(w, ch);
    let sinr = compute_sinr(w, ch, &report);
    cell_utility(u, w, &sinr, cell) - cell_cost(w, ch, prices, cell)
}

pub fn network_utility(u: &UtilitySpec, w: &BeamAssignment, ch: &ChannelSet) -> f64 {
    let report = compute_interference(w, ch);
    let sinr = compute_sinr(w, ch, &report);
    sinr.iter().map(|&g| u.value_or_neg_inf(g)).sum()
}
