//! Constrained maximization of the key rate over design parameters and the
//! internal epsilon split.
//!
//! The workflow has two stages. At design time the expected observables of a
//! channel model are pushed through the chosen bound and the key rate is
//! maximized jointly over the experiment design (intensities, basis
//! probability, decoy mixing, pair parameter) and the split of the failure
//! budget. After a run, only the epsilon split is re-optimized for the
//! measured values while the design stays as used.
//!
//! The solver is a coarse multi-start grid followed by simplex refinement,
//! with the epsilon split nested-optimized in log space at every design
//! point. Refinement always runs on the unclamped bracket objective, which
//! stays informative where the clamped rate is flat at zero.

pub mod simplex;

use std::cell::Cell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, EbSourceParams};
use crate::decoy::{key_rate_decoy, DecoyIntensities, DecoyObservables};
use crate::entanglement::{key_rate_double_click, key_rate_squashing, EbObservables};
use crate::error::{Error, Result};
use crate::finite_key::{ErrorCorrectionModel, SecurityBudget};
use crate::rate::{RateResult, Variant};
use crate::wcp::{key_rate_no_decoy, WcpObservables};

/// Fraction of the auxiliary budget below which no epsilon component may
/// fall. The bound diverges logarithmically as any component approaches
/// zero, so the optimum is interior and the floor costs nothing.
pub const EPSILON_SHARE_FLOOR: f64 = 1e-3;

/// Objective value assigned to infeasible or inapplicable points; steep
/// enough that the simplex retreats immediately.
const PENALTY: f64 = -1e6;

/// Security constants fixed before any optimization: the total failure
/// budget and the error-correction code parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecuritySpec {
    pub eps_total: f64,
    pub eps_ec: f64,
    pub f_ec: f64,
}

impl SecuritySpec {
    pub fn new(eps_total: f64, eps_ec: f64, f_ec: f64) -> Result<Self> {
        if !(eps_total > eps_ec && eps_total < 1.0 && eps_ec > 0.0) {
            return Err(Error::InfeasibleConfig(format!(
                "need 0 < eps_ec < eps_total < 1, got eps_ec = {eps_ec}, eps_total = {eps_total}"
            )));
        }
        ErrorCorrectionModel::new(f_ec, eps_ec)?;
        Ok(Self {
            eps_total,
            eps_ec,
            f_ec,
        })
    }

    pub fn ec_model(&self) -> ErrorCorrectionModel {
        ErrorCorrectionModel {
            f_ec: self.f_ec,
            eps_ec: self.eps_ec,
        }
    }
}

/// Design variables of one protocol variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignVars {
    NoDecoy {
        mu: f64,
        p_x: f64,
    },
    Decoy {
        mu_i: f64,
        mu_ii: f64,
        q_empty: f64,
        q_ii: f64,
        p_x: f64,
    },
    Eb {
        y: f64,
        p_x: f64,
    },
}

impl DesignVars {
    pub fn p_x(&self) -> f64 {
        match *self {
            DesignVars::NoDecoy { p_x, .. }
            | DesignVars::Decoy { p_x, .. }
            | DesignVars::Eb { p_x, .. } => p_x,
        }
    }
}

/// Inclusive bounds of one design variable; equal endpoints pin it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarBounds {
    pub lo: f64,
    pub hi: f64,
}

impl VarBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InfeasibleConfig(format!(
                "invalid variable bounds [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn fixed(value: f64) -> Self {
        Self {
            lo: value,
            hi: value,
        }
    }

    pub fn is_fixed(&self) -> bool {
        self.lo == self.hi
    }
}

/// Search box of the design optimization.
///
/// Unused variables (for example `mu` in a decoy space) are simply ignored.
/// The defaults bracket every optimum reported for realistic hardware with a
/// wide margin; `mu_ii` ships pinned at 0.65, matching the usual case study
/// where only the weaker intensity is tuned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub variant: Variant,
    pub mu: VarBounds,
    pub mu_i: VarBounds,
    pub mu_ii: VarBounds,
    pub q_empty: VarBounds,
    pub q_ii: VarBounds,
    pub y: VarBounds,
    pub p_x: VarBounds,
}

impl DesignSpace {
    pub fn defaults(variant: Variant) -> Self {
        Self {
            variant,
            mu: VarBounds { lo: 1e-4, hi: 1.0 },
            mu_i: VarBounds { lo: 1e-3, hi: 1.0 },
            mu_ii: VarBounds::fixed(0.65),
            q_empty: VarBounds { lo: 0.0, hi: 0.5 },
            q_ii: VarBounds { lo: 1e-8, hi: 0.9 },
            y: VarBounds { lo: 1e-4, hi: 0.3 },
            p_x: VarBounds { lo: 1e-4, hi: 0.5 },
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("mu", &self.mu),
            ("mu_i", &self.mu_i),
            ("mu_ii", &self.mu_ii),
            ("q_empty", &self.q_empty),
            ("q_ii", &self.q_ii),
            ("y", &self.y),
            ("p_x", &self.p_x),
        ] {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo <= b.hi) {
                return Err(Error::InfeasibleConfig(format!(
                    "invalid bounds for {name}: [{}, {}]",
                    b.lo, b.hi
                )));
            }
        }
        if self.p_x.lo <= 0.0 || self.p_x.hi >= 1.0 {
            return Err(Error::InfeasibleConfig(
                "p_x bounds must stay strictly inside (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Observables prepared once per design point; the budget split can then be
/// varied without rebuilding them.
enum Prepared {
    NoDecoy(WcpObservables),
    Decoy(DecoyObservables, DecoyIntensities),
    EbSquashing(EbObservables, bool),
    EbDoubleClick(EbObservables, bool),
}

impl Prepared {
    fn build(
        variant: Variant,
        vars: &DesignVars,
        ch: &ChannelParams,
        n_detected: u64,
    ) -> Result<(Self, f64)> {
        match (variant, *vars) {
            (Variant::NoDecoy, DesignVars::NoDecoy { mu, p_x }) => {
                let obs = WcpObservables::expected(mu, ch, n_detected, 1.0 - p_x)?;
                let prefactor = obs.rate * obs.counts.p_z * obs.counts.p_z;
                Ok((Prepared::NoDecoy(obs), prefactor))
            }
            (
                Variant::DecoyThree,
                DesignVars::Decoy {
                    mu_i,
                    mu_ii,
                    q_empty,
                    q_ii,
                    p_x,
                },
            ) => {
                let q_i = 1.0 - q_empty - q_ii;
                let ints = DecoyIntensities::new(mu_i, mu_ii, q_empty, q_i, q_ii)?;
                let obs = DecoyObservables::expected(&ints, ch, n_detected, 1.0 - p_x)?;
                let prefactor = ints.q_i * obs.key.rate * obs.p_z * obs.p_z;
                Ok((Prepared::Decoy(obs, ints), prefactor))
            }
            (Variant::EbSquashing, DesignVars::Eb { y, p_x }) => {
                let src = EbSourceParams::new(y, *ch)?;
                let obs = EbObservables::expected(&src, n_detected, 1.0 - p_x)?;
                let prefactor = obs.rate * obs.counts.p_z * obs.counts.p_z;
                Ok((
                    Prepared::EbSquashing(obs, src.truncation_warning()),
                    prefactor,
                ))
            }
            (Variant::EbDoubleClick, DesignVars::Eb { y, p_x }) => {
                let src = EbSourceParams::new(y, *ch)?;
                let obs = EbObservables::expected(&src, n_detected, 1.0 - p_x)?;
                let prefactor = obs.rate_single * obs.counts.p_z * obs.counts.p_z;
                Ok((
                    Prepared::EbDoubleClick(obs, src.truncation_warning()),
                    prefactor,
                ))
            }
            _ => Err(Error::InfeasibleConfig(
                "design variables do not match the protocol variant".into(),
            )),
        }
    }

    fn run(&self, budget: &SecurityBudget, ec: &ErrorCorrectionModel) -> Result<RateResult> {
        match self {
            Prepared::NoDecoy(obs) => key_rate_no_decoy(obs, budget, ec),
            Prepared::Decoy(obs, ints) => key_rate_decoy(obs, ints, budget, ec),
            Prepared::EbSquashing(obs, warn) => {
                let mut res = key_rate_squashing(obs, budget, ec)?;
                res.flags.truncation_warning = *warn;
                Ok(res)
            }
            Prepared::EbDoubleClick(obs, warn) => {
                let mut res = key_rate_double_click(obs, budget, ec)?;
                res.flags.truncation_warning = *warn;
                Ok(res)
            }
        }
    }
}

/// Evaluates a bound on the a-priori expected observables of a channel model.
pub fn evaluate_design(
    variant: Variant,
    vars: &DesignVars,
    ch: &ChannelParams,
    n_detected: u64,
    budget: &SecurityBudget,
    ec: &ErrorCorrectionModel,
) -> Result<RateResult> {
    let (prepared, _) = Prepared::build(variant, vars, ch, n_detected)?;
    prepared.run(budget, ec)
}

/// Maximizes `rate_fn` over the epsilon split at a fixed total budget.
///
/// The split keeps `eps_bar + n_pe eps_pe + eps_pa = eps_total - eps_ec`
/// exact by construction (the privacy-amplification share is always the
/// remainder) and every component stays at or above
/// [`EPSILON_SHARE_FLOOR`] times the auxiliary budget. The returned value
/// never falls below the uniform split's.
pub fn optimize_epsilons<F: FnMut(&SecurityBudget) -> f64>(
    eps_total: f64,
    eps_ec: f64,
    n_pe: u32,
    mut rate_fn: F,
) -> Result<(SecurityBudget, f64)> {
    if !(eps_total > eps_ec && eps_total < 1.0 && eps_ec > 0.0) {
        return Err(Error::InfeasibleConfig(format!(
            "epsilon optimization needs 0 < eps_ec < eps_total < 1, \
             got eps_ec = {eps_ec}, eps_total = {eps_total}"
        )));
    }
    let aux = eps_total - eps_ec;
    let n_pe_f = n_pe as f64;
    let floor1 = EPSILON_SHARE_FLOOR;
    let floor2 = EPSILON_SHARE_FLOOR * n_pe_f;

    let make = |s1: f64, s2: f64| -> Option<SecurityBudget> {
        let s3 = 1.0 - s1 - s2;
        if s1 < floor1 || s2 < floor2 || s3 < floor1 {
            return None;
        }
        SecurityBudget::from_split(eps_total, eps_ec, n_pe, aux * s1, aux * s2 / n_pe_f).ok()
    };

    // The uniform split is both the fallback and the dominance baseline.
    let uniform = (1.0 / (n_pe_f + 2.0), n_pe_f / (n_pe_f + 2.0));
    let mut best = uniform;
    let mut best_value = match make(uniform.0, uniform.1) {
        Some(b) => rate_fn(&b),
        None => {
            return Err(Error::InfeasibleConfig(
                "uniform epsilon split violates the component floor".into(),
            ))
        }
    };

    // Coarse logarithmic scan of the two free shares.
    let grid_axis = |floor: f64| -> Vec<f64> {
        let lo = floor.ln();
        let hi = 0.99f64.ln();
        (0..9)
            .map(|i| (lo + (hi - lo) * i as f64 / 8.0).exp())
            .collect()
    };
    for &s1 in &grid_axis(floor1) {
        for &s2 in &grid_axis(floor2) {
            if let Some(b) = make(s1, s2) {
                let v = rate_fn(&b);
                if v > best_value {
                    best_value = v;
                    best = (s1, s2);
                }
            }
        }
    }

    // Simplex refinement in log-share coordinates.
    let lower = [floor1.ln(), floor2.ln()];
    let upper = [0.997f64.ln(), 0.997f64.ln()];
    let refined = simplex::maximize(
        |x: &[f64]| {
            let (s1, s2) = (x[0].exp(), x[1].exp());
            match make(s1, s2) {
                Some(b) => rate_fn(&b),
                None => PENALTY * (1.0 + (s1 + s2 - 1.0).max(0.0)),
            }
        },
        &[best.0.ln(), best.1.ln()],
        &[0.4, 0.4],
        &lower,
        &upper,
        160,
        1e-9,
    );
    if refined.value > best_value && make(refined.x[0].exp(), refined.x[1].exp()).is_some() {
        best_value = refined.value;
        best = (refined.x[0].exp(), refined.x[1].exp());
    }

    let budget = make(best.0, best.1).expect("winning split must be feasible");
    Ok((budget, best_value))
}

/// Outcome of a design optimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub variant: Variant,
    pub design: DesignVars,
    pub budget: SecurityBudget,
    /// Bound re-evaluated at the reported design and split; `key_rate`
    /// always equals `result.key_rate` bit for bit.
    pub result: RateResult,
    pub key_rate: f64,
    pub evaluations: u64,
    pub converged: bool,
    /// True when no positive rate exists anywhere in the box; the reported
    /// design is then the least-negative bracket found, kept as a
    /// diagnostic.
    pub flat_zero: bool,
    /// Best unclamped objective seen on the initial coarse grid, under the
    /// uniform split.
    pub grid_best_objective: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Mu,
    MuI,
    MuII,
    QEmpty,
    Qii,
    PX,
    Y,
}

/// One optimization branch: the set of free variables in log10 coordinates
/// plus the fixed assignments.
struct Branch {
    variant: Variant,
    /// `(slot, lo_log10, hi_log10)` for the free variables.
    free: Vec<(Slot, f64, f64)>,
    /// Fixed `(slot, value)` assignments, in linear units.
    fixed: Vec<(Slot, f64)>,
}

impl Branch {
    fn decode(&self, coords: &[f64]) -> DesignVars {
        let get = |slot: Slot, default: f64| -> f64 {
            for (i, &(s, _, _)) in self.free.iter().enumerate() {
                if s == slot {
                    return 10f64.powf(coords[i]);
                }
            }
            for &(s, v) in &self.fixed {
                if s == slot {
                    return v;
                }
            }
            default
        };
        match self.variant {
            Variant::NoDecoy => DesignVars::NoDecoy {
                mu: get(Slot::Mu, 0.0),
                p_x: get(Slot::PX, 0.0),
            },
            Variant::DecoyThree => DesignVars::Decoy {
                mu_i: get(Slot::MuI, 0.0),
                mu_ii: get(Slot::MuII, 0.0),
                q_empty: get(Slot::QEmpty, 0.0),
                q_ii: get(Slot::Qii, 0.0),
                p_x: get(Slot::PX, 0.0),
            },
            Variant::EbSquashing | Variant::EbDoubleClick => DesignVars::Eb {
                y: get(Slot::Y, 0.0),
                p_x: get(Slot::PX, 0.0),
            },
        }
    }
}

fn push_var(branch: &mut Branch, slot: Slot, bounds: VarBounds, min_positive: f64) {
    if bounds.is_fixed() {
        branch.fixed.push((slot, bounds.lo));
    } else {
        let lo = bounds.lo.max(min_positive);
        branch.free.push((slot, lo.log10(), bounds.hi.log10()));
    }
}

fn branches_for(space: &DesignSpace) -> Vec<Branch> {
    let mut out = Vec::new();
    match space.variant {
        Variant::NoDecoy => {
            let mut b = Branch {
                variant: space.variant,
                free: Vec::new(),
                fixed: Vec::new(),
            };
            push_var(&mut b, Slot::Mu, space.mu, 1e-6);
            push_var(&mut b, Slot::PX, space.p_x, 1e-6);
            out.push(b);
        }
        Variant::EbSquashing | Variant::EbDoubleClick => {
            let mut b = Branch {
                variant: space.variant,
                free: Vec::new(),
                fixed: Vec::new(),
            };
            push_var(&mut b, Slot::Y, space.y, 1e-6);
            push_var(&mut b, Slot::PX, space.p_x, 1e-6);
            out.push(b);
        }
        Variant::DecoyThree => {
            // The vacuum weight is special: zero must be reachable exactly,
            // so it gets its own branch next to a logarithmic branch that
            // can chase arbitrarily small positive weights.
            let base = |q_empty: Option<VarBounds>| -> Branch {
                let mut b = Branch {
                    variant: space.variant,
                    free: Vec::new(),
                    fixed: Vec::new(),
                };
                let mu_ii_cap = if space.mu_ii.is_fixed() {
                    space.mu_ii.lo
                } else {
                    space.mu_ii.hi
                };
                let mu_i = VarBounds {
                    lo: space.mu_i.lo,
                    hi: space.mu_i.hi.min(mu_ii_cap * (1.0 - 1e-9)),
                };
                push_var(&mut b, Slot::MuI, mu_i, 1e-6);
                push_var(&mut b, Slot::MuII, space.mu_ii, 1e-6);
                match q_empty {
                    Some(bounds) => push_var(&mut b, Slot::QEmpty, bounds, 1e-8),
                    None => b.fixed.push((Slot::QEmpty, 0.0)),
                }
                push_var(&mut b, Slot::Qii, space.q_ii, 1e-8);
                push_var(&mut b, Slot::PX, space.p_x, 1e-6);
                b
            };
            if space.q_empty.is_fixed() {
                if space.q_empty.lo == 0.0 {
                    out.push(base(None));
                } else {
                    out.push(base(Some(space.q_empty)));
                }
            } else {
                if space.q_empty.lo == 0.0 {
                    out.push(base(None));
                }
                let positive = VarBounds {
                    lo: space.q_empty.lo.max(1e-8),
                    hi: space.q_empty.hi,
                };
                if positive.hi >= positive.lo {
                    out.push(base(Some(positive)));
                }
            }
        }
    }
    out
}

/// Picks the winner among per-branch optima. Later branches (the positive
/// vacuum weight of the decoy variant) must beat the first branch by a
/// relative margin: count rounding perturbs the objective at the 1e-12 level
/// and must not turn a genuine `q_empty = 0` optimum into a stray 1e-8.
fn select_branch(
    mut candidates: Vec<(DesignVars, SecurityBudget, f64)>,
) -> Option<(DesignVars, SecurityBudget, f64)> {
    const MARGIN: f64 = 1e-6;
    if candidates.is_empty() {
        return None;
    }
    let first = candidates.remove(0);
    let mut winner = first;
    for cand in candidates {
        if cand.2 > winner.2 + MARGIN * winner.2.abs().max(f64::MIN_POSITIVE) {
            winner = cand;
        }
    }
    Some(winner)
}

/// Quick feasibility screen for decoded design variables; returns a negative
/// penalty for constraint violations the box cannot express.
fn feasibility_penalty(vars: &DesignVars) -> Option<f64> {
    if let DesignVars::Decoy {
        mu_i,
        mu_ii,
        q_empty,
        q_ii,
        ..
    } = *vars
    {
        if mu_i >= mu_ii {
            return Some(PENALTY * (1.0 + (mu_i - mu_ii)));
        }
        let q_i = 1.0 - q_empty - q_ii;
        if q_i <= 1e-6 {
            return Some(PENALTY * (1.0 + (1e-6 - q_i)));
        }
    }
    None
}

/// Maximizes the key rate over the design box and the epsilon split.
///
/// A zero rate everywhere is a legitimate outcome and is reported as such
/// (`flat_zero`), with the point of least-negative unclamped rate kept as
/// the diagnostic design.
pub fn optimize_design(
    space: &DesignSpace,
    ch: &ChannelParams,
    n_detected: u64,
    sec: &SecuritySpec,
) -> Result<OptimizationReport> {
    space.validate()?;
    if n_detected < 1000 {
        return Err(Error::InfeasibleConfig(format!(
            "design optimization needs at least 1000 detected signals, got {n_detected}"
        )));
    }
    let ec = sec.ec_model();
    let n_pe = space.variant.n_pe();
    let uniform = SecurityBudget::uniform(sec.eps_total, sec.eps_ec, n_pe)?;
    let evaluations = Cell::new(0u64);

    // Unclamped objective: prefactor times bracket. Negative values remain
    // informative where the clamped rate is flat at zero.
    let raw_objective = |vars: &DesignVars, budget: &SecurityBudget| -> f64 {
        evaluations.set(evaluations.get() + 1);
        if let Some(p) = feasibility_penalty(vars) {
            return p;
        }
        match Prepared::build(space.variant, vars, ch, n_detected) {
            Ok((prepared, prefactor)) => match prepared.run(budget, &ec) {
                Ok(res) => prefactor * res.bracket,
                Err(_) => PENALTY,
            },
            Err(_) => PENALTY,
        }
    };

    // Nested objective: best unclamped rate over the epsilon split. Built
    // observables are reused across the split search.
    let eps_optimized = |vars: &DesignVars| -> (f64, SecurityBudget) {
        if let Some(p) = feasibility_penalty(vars) {
            return (p, uniform);
        }
        let built = Prepared::build(space.variant, vars, ch, n_detected);
        match built {
            Ok((prepared, prefactor)) => {
                let outcome = optimize_epsilons(sec.eps_total, sec.eps_ec, n_pe, |budget| {
                    evaluations.set(evaluations.get() + 1);
                    match prepared.run(budget, &ec) {
                        Ok(res) => prefactor * res.bracket,
                        Err(_) => PENALTY,
                    }
                });
                match outcome {
                    Ok((budget, value)) => (value, budget),
                    Err(_) => (PENALTY, uniform),
                }
            }
            Err(_) => (PENALTY, uniform),
        }
    };

    // Best candidate per branch; the vacuum branch of the decoy variant must
    // beat the exact-zero branch by a real margin before a positive vacuum
    // weight is reported, otherwise count-rounding jitter would mask the
    // genuine q_empty = 0 optimum.
    let mut branch_best: Vec<(DesignVars, SecurityBudget, f64)> = Vec::new();
    let mut grid_best_objective = f64::NEG_INFINITY;
    let mut converged = false;
    let mut grid_all_nonpositive = true;

    for branch in branches_for(space) {
        let mut best: Option<(DesignVars, SecurityBudget, f64)> = None;
        let dim = branch.free.len();
        if dim == 0 {
            // Everything pinned: only the epsilon split is optimized.
            let vars = branch.decode(&[]);
            let (value, budget) = eps_optimized(&vars);
            grid_best_objective = grid_best_objective.max(raw_objective(&vars, &uniform));
            if value > 0.0 {
                grid_all_nonpositive = false;
            }
            branch_best.push((vars, budget, value));
            converged = true;
            continue;
        }

        // Coarse grid under the uniform split.
        let points_per_axis = match dim {
            1 => 24,
            2 => 14,
            3 => 12,
            4 => 8,
            _ => 6,
        };
        let axes: Vec<Vec<f64>> = branch
            .free
            .iter()
            .map(|&(_, lo, hi)| {
                (0..points_per_axis)
                    .map(|i| lo + (hi - lo) * i as f64 / (points_per_axis - 1) as f64)
                    .collect()
            })
            .collect();
        let mut grid_points: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(grid_points.len() * axis.len());
            for p in &grid_points {
                for &v in axis {
                    let mut q = p.clone();
                    q.push(v);
                    next.push(q);
                }
            }
            grid_points = next;
        }

        let mut scored: Vec<(f64, usize)> = grid_points
            .iter()
            .enumerate()
            .map(|(i, p)| (raw_objective(&branch.decode(p), &uniform), i))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        if let Some(&(top, _)) = scored.first() {
            grid_best_objective = grid_best_objective.max(top);
        }

        // Refine from the strongest starts with the nested objective. Starts
        // are kept mutually separated by at least one grid step so a single
        // dominant corner cannot monopolise every simplex run.
        let lower: Vec<f64> = branch.free.iter().map(|&(_, lo, _)| lo).collect();
        let upper: Vec<f64> = branch.free.iter().map(|&(_, _, hi)| hi).collect();
        let steps: Vec<f64> = branch
            .free
            .iter()
            .map(|&(_, lo, hi)| ((hi - lo) / (points_per_axis - 1) as f64).max(0.02))
            .collect();
        let mut starts: Vec<&Vec<f64>> = Vec::new();
        for &(_, idx) in scored.iter() {
            if starts.len() >= 4 {
                break;
            }
            let candidate = &grid_points[idx];
            let separated = starts
                .iter()
                .all(|s| (0..dim).any(|i| (s[i] - candidate[i]).abs() > steps[i] * 1.5));
            if starts.is_empty() || separated {
                starts.push(candidate);
            }
        }
        for start in starts {
            let run = simplex::maximize(
                |x: &[f64]| eps_optimized(&branch.decode(x)).0,
                start,
                &steps,
                &lower,
                &upper,
                400,
                1e-11,
            );
            // Polish: restart from the found point with tighter steps, which
            // unsticks simplices that collapsed against a box wall.
            let fine_steps: Vec<f64> = steps.iter().map(|s| (s * 0.15).max(0.01)).collect();
            let polish = simplex::maximize(
                |x: &[f64]| eps_optimized(&branch.decode(x)).0,
                &run.x,
                &fine_steps,
                &lower,
                &upper,
                400,
                1e-11,
            );
            let winner = if polish.value > run.value {
                &polish
            } else {
                &run
            };
            converged |= winner.converged;
            let vars = branch.decode(&winner.x);
            let (value, budget) = eps_optimized(&vars);
            if value > 0.0 {
                grid_all_nonpositive = false;
            }
            if best.as_ref().is_none_or(|b| value > b.2) {
                best = Some((vars, budget, value));
            }
        }

        // The best grid point itself, split-optimized, guarantees the
        // refinement never loses to its own grid.
        if let Some(&(_, idx)) = scored.first() {
            let vars = branch.decode(&grid_points[idx]);
            let (value, budget) = eps_optimized(&vars);
            if value > 0.0 {
                grid_all_nonpositive = false;
            }
            if best.as_ref().is_none_or(|b| value > b.2) {
                best = Some((vars, budget, value));
            }
        }
        if let Some(b) = best {
            branch_best.push(b);
        }
    }

    let (mut design, mut budget, mut value) = select_branch(branch_best)
        .ok_or_else(|| Error::InfeasibleConfig("empty design space".into()))?;

    // A vanishing vacuum weight has to earn its keep at the winning design
    // point itself: otherwise optimization noise between the branches could
    // report a stray 1e-8 where the genuine optimum is exactly zero.
    if let DesignVars::Decoy {
        mu_i,
        mu_ii,
        q_empty,
        q_ii,
        p_x,
    } = design
    {
        if q_empty > 0.0 && space.q_empty.lo == 0.0 {
            let projected = DesignVars::Decoy {
                mu_i,
                mu_ii,
                q_empty: 0.0,
                q_ii,
                p_x,
            };
            let (proj_value, proj_budget) = eps_optimized(&projected);
            if value <= proj_value + 1e-6 * proj_value.abs().max(f64::MIN_POSITIVE) {
                design = projected;
                budget = proj_budget;
                value = proj_value;
            }
        }
    }

    let result = evaluate_design(space.variant, &design, ch, n_detected, &budget, &ec)?;
    let flat_zero = grid_all_nonpositive && value <= 0.0;
    Ok(OptimizationReport {
        variant: space.variant,
        design,
        budget,
        key_rate: result.key_rate,
        result,
        evaluations: evaluations.get(),
        converged: converged || flat_zero,
        flat_zero,
        grid_best_objective,
    })
}

/// One row of a rate-versus-transmittivity sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub n_detected: u64,
    pub t: f64,
    pub key_rate: f64,
    pub p_x: Option<f64>,
    pub mu_or_y: Option<f64>,
    pub mu_i: Option<f64>,
    pub q_empty: Option<f64>,
    pub q_ii: Option<f64>,
    pub eps_bar: Option<f64>,
    pub eps_pe: Option<f64>,
    pub eps_pa: Option<f64>,
    pub flags: String,
}

impl SweepRow {
    fn from_report(n_detected: u64, t: f64, report: &OptimizationReport) -> Self {
        let mut row = SweepRow {
            variant: report.variant,
            n_detected,
            t,
            key_rate: report.key_rate,
            p_x: Some(report.design.p_x()),
            mu_or_y: None,
            mu_i: None,
            q_empty: None,
            q_ii: None,
            eps_bar: Some(report.budget.eps_bar),
            eps_pe: Some(report.budget.eps_pe),
            eps_pa: Some(report.budget.eps_pa),
            flags: report.result.flags.to_string(),
        };
        match report.design {
            DesignVars::NoDecoy { mu, .. } => row.mu_or_y = Some(mu),
            DesignVars::Eb { y, .. } => row.mu_or_y = Some(y),
            DesignVars::Decoy {
                mu_i,
                q_empty,
                q_ii,
                ..
            } => {
                row.mu_i = Some(mu_i);
                row.q_empty = Some(q_empty);
                row.q_ii = Some(q_ii);
            }
        }
        row
    }

    fn from_error(variant: Variant, n_detected: u64, t: f64, err: &Error) -> Self {
        SweepRow {
            variant,
            n_detected,
            t,
            key_rate: 0.0,
            p_x: None,
            mu_or_y: None,
            mu_i: None,
            q_empty: None,
            q_ii: None,
            eps_bar: None,
            eps_pe: None,
            eps_pa: None,
            flags: format!("error:{err}"),
        }
    }
}

/// Runs one design optimization per `(N, t)` grid point.
///
/// Points are independent and evaluated on a worker pool; rows come back
/// sorted by `(N, t)` regardless of completion order. Zero-rate rows are
/// retained (they locate the finite-key cutoff) and per-point failures
/// become flagged rows instead of aborting the sweep.
pub fn sweep_transmittivity(
    space: &DesignSpace,
    channel: &ChannelParams,
    n_list: &[u64],
    t_grid: &[f64],
    sec: &SecuritySpec,
) -> Result<Vec<SweepRow>> {
    if n_list.is_empty() || t_grid.is_empty() {
        return Err(Error::InfeasibleConfig(
            "sweep needs a non-empty N list and t grid".into(),
        ));
    }
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut ts = t_grid.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let points: Vec<(u64, f64)> = ns
        .iter()
        .flat_map(|&n| ts.iter().map(move |&t| (n, t)))
        .collect();

    let rows = points
        .par_iter()
        .map(|&(n, t)| {
            let outcome = ChannelParams::new(t, channel.eta, channel.p_d, channel.q_optical)
                .and_then(|ch_t| optimize_design(space, &ch_t, n, sec));
            match outcome {
                Ok(report) => SweepRow::from_report(n, t, &report),
                Err(err) => SweepRow::from_error(space.variant, n, t, &err),
            }
        })
        .collect();
    Ok(rows)
}
