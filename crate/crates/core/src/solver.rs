//! Entropically regularized multi-marginal transport solvers.
//!
//! Both solvers minimize `<C, gamma>` over couplings `gamma` of the `K`
//! margin distributions, where `C` is a shift-normalized [`CostTensor`].
//! They share one virtual-tensor representation: the scaled coupling
//!
//! ```text
//! gamma(i_1..i_K) = exp( -eta * C(i) - log_norm + sum_k m(k, i_k) )
//! ```
//!
//! where `log_norm = log ||exp(-eta C)||_1` normalizes the initial kernel to
//! total mass one and `m` are the scaling potentials, initially zero. The
//! exponential tensor is never materialized during iteration — every pass
//! works in the log domain with max-stabilized sums, so `eta` up to `1e6`
//! on costs with sup norm up to `1e3` cannot overflow.
//!
//! [`sinkhorn`] updates one whole margin per iteration (greedy KL choice);
//! [`greenkhorn`] updates a single atom per iteration (greedy `rho` choice).
//! Both stop when the marginal total-variation residual [`mtv`] drops to
//! `epsilon' = epsilon / (8 ||C||_inf)`, then round the iterate to an
//! exactly feasible coupling ([`round_to_feasible`]) whose objective is the
//! reported primal value. Runs that exhaust `max_iters` still return a
//! feasible coupling and a valid dual lower bound ([`dual_lower_bound`]) —
//! the certificate does not require convergence.

pub mod greenkhorn;
mod kernel;
pub mod sinkhorn;

use serde::Serialize;

use crate::cost::CostTensor;
use crate::error::{Error, Result};
use crate::measures::MarginalSystem;
use crate::tensor::{DenseTensor, MultiIndex};

/// Values inside logarithms are floored here, so empty marginal entries
/// yield large-but-finite potential updates instead of infinities.
pub const LOG_FLOOR: f64 = 1e-300;

/// Solver selection for drivers that support both algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sinkhorn,
    Greenkhorn,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinkhorn" => Ok(Algorithm::Sinkhorn),
            "greenkhorn" => Ok(Algorithm::Greenkhorn),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm '{other}' (expected sinkhorn or greenkhorn)"
            ))),
        }
    }
}

/// Tuning knobs shared by both solvers.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Target accuracy `epsilon` for the unregularized optimum.
    pub epsilon: f64,
    /// Regularization override; the default is `4 * sum_k log(n_k) / epsilon`
    /// (and `1` when every margin is a single atom).
    pub eta_override: Option<f64>,
    /// Iteration budget; exhausting it is not an error.
    pub max_iters: u64,
    /// Record a per-iteration trace in the result.
    pub record_trace: bool,
    /// Evaluate the stopping rule only every `p`-th iteration. The default
    /// `1` checks every iteration; larger values trade slightly later
    /// stopping for fewer checks.
    pub mtv_check_every: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-3,
            eta_override: None,
            max_iters: 1_000_000,
            record_trace: false,
            mtv_check_every: 1,
        }
    }
}

impl SolverConfig {
    pub fn new(epsilon: f64) -> Self {
        SolverConfig {
            epsilon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if let Some(eta) = self.eta_override {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "eta must be positive and finite, got {eta}"
                )));
            }
        }
        if self.mtv_check_every == 0 {
            return Err(Error::InvalidConfig(
                "mtv_check_every must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// The regularization strength used for `sys`.
    pub fn effective_eta(&self, sys: &MarginalSystem) -> f64 {
        if let Some(eta) = self.eta_override {
            return eta;
        }
        let log_sizes: f64 = sys.margins().iter().map(|m| (m.len() as f64).ln()).sum();
        if log_sizes == 0.0 {
            // Every margin is a single atom; the coupling is forced and any
            // positive eta works.
            1.0
        } else {
            4.0 * log_sizes / self.epsilon
        }
    }

    /// Stopping threshold on the marginal total-variation residual.
    pub fn eps_prime(&self, cost: &CostTensor) -> f64 {
        if cost.sup_norm() == 0.0 {
            // A constant-zero cost makes every coupling optimal.
            f64::INFINITY
        } else {
            self.epsilon / (8.0 * cost.sup_norm())
        }
    }
}

/// Scaling potentials: one vector per margin, entry per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    m: Vec<Vec<f64>>,
}

impl Potentials {
    pub fn zeros(sys: &MarginalSystem) -> Self {
        Potentials {
            m: sys.margins().iter().map(|m| vec![0.0; m.len()]).collect(),
        }
    }

    pub fn from_vecs(m: Vec<Vec<f64>>) -> Self {
        Potentials { m }
    }

    pub fn margin(&self, k: usize) -> &[f64] {
        &self.m[k]
    }

    pub fn vecs(&self) -> &[Vec<f64>] {
        &self.m
    }
}

/// A dense coupling candidate. Feasibility (nonnegative cells, marginals
/// equal to the system's) holds for rounded couplings; raw iterates may
/// violate it, which is what [`mtv`] measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    tensor: DenseTensor,
}

impl Coupling {
    pub fn from_tensor(tensor: DenseTensor) -> Self {
        Coupling { tensor }
    }

    pub fn values(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.tensor
    }

    /// Total mass (one for a feasible coupling).
    pub fn mass(&self) -> f64 {
        self.tensor.sum()
    }

    /// Marginal vector along margin `k`.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        self.tensor.marginal(k)
    }
}

/// Which update an iteration performed, for traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MarginSelected {
    /// Whole-margin update (Sinkhorn).
    Margin(usize),
    /// Single-atom update (Greenkhorn).
    Atom { margin: usize, atom: usize },
}

/// One recorded iteration: the residual and certificate are those of the
/// iterate *before* the update named by `margin_selected`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceEntry {
    pub iter: u64,
    pub margin_selected: MarginSelected,
    pub mtv: f64,
    pub dual_bound: f64,
}

/// Outcome of a solver run.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Rounded, exactly feasible coupling.
    pub coupling: Coupling,
    /// `<C, coupling>` with the cost shift removed — an upper bound on the
    /// program's optimum, within `epsilon` of it when `converged`.
    pub primal_value: f64,
    /// Best certified lower bound on the optimum seen during the run
    /// (shift-corrected). Valid whether or not the run converged.
    pub dual_lower_bound: f64,
    /// Number of potential updates performed.
    pub iterations: u64,
    /// Whether the stopping rule `mtv <= epsilon'` was met.
    pub converged: bool,
    /// Marginal total-variation residual of the final unrounded iterate.
    pub mtv_final: f64,
    /// Effective regularization strength.
    pub eta: f64,
    /// Per-iteration records, when requested.
    pub trace: Option<Vec<TraceEntry>>,
    /// Final scaling potentials, adjusted so that [`dual_lower_bound`]
    /// applied to them is a valid certificate.
    pub potentials: Potentials,
}

/// Run the selected algorithm.
pub fn solve(
    algorithm: Algorithm,
    cost: &CostTensor,
    sys: &MarginalSystem,
    config: &SolverConfig,
) -> Result<SolveResult> {
    match algorithm {
        Algorithm::Sinkhorn => sinkhorn::solve(cost, sys, config),
        Algorithm::Greenkhorn => greenkhorn::solve(cost, sys, config),
    }
}

/// Marginal total-variation residual: `sum_k sum_i |gamma(k, i) - mu(k, i)|`
/// where `gamma(k, .)` is the coupling's `k`-th marginal. Zero exactly on
/// feasible couplings; the solvers stop at `epsilon'`.
pub fn mtv(coupling: &Coupling, sys: &MarginalSystem) -> f64 {
    let mut total = 0.0;
    for k in 0..sys.num_margins() {
        let g = coupling.marginal(k);
        let w = sys.margin(k).weights();
        for (gi, wi) in g.iter().zip(w) {
            total += (gi - wi).abs();
        }
    }
    total
}

/// Round an approximately feasible tensor onto the transport polytope.
///
/// First pass: for each margin in order, scale the slices by
/// `min(mu(k, i) / gamma(k, i), 1)` so every marginal is dominated by its
/// target. Second pass: add the rank-one tensor `⊗_k err_k / s^(K-1)` with
/// `err_k = mu(k) - gamma(k)` and `s = ||err_K||_1`, which restores every
/// marginal exactly. The correction is skipped when `s < 1e-14` (already
/// feasible to machine precision). Cells are clamped at zero; incoming
/// negative dust below `-1e-15` is clamped too but indicates a bad input.
pub fn round_to_feasible(coupling: &Coupling, sys: &MarginalSystem) -> Coupling {
    let kk = sys.num_margins();
    let mut t = coupling.values().clone();
    debug_assert_eq!(t.shape(), sys.shape().as_slice());
    for v in t.data_mut() {
        if *v < 0.0 {
            debug_assert!(*v >= -1e-15, "coupling cell {v} below tolerance");
            *v = 0.0;
        }
    }
    for k in 0..kk {
        let g = t.marginal(k);
        let w = sys.margin(k).weights();
        let factors: Vec<f64> = g
            .iter()
            .zip(w)
            .map(|(&gi, &wi)| if gi > 0.0 { (wi / gi).min(1.0) } else { 1.0 })
            .collect();
        t.scale_axis(k, &factors);
    }
    // Shortfalls per margin; nonnegative because the scaling pass only ever
    // lowered marginals below their targets.
    let errs: Vec<Vec<f64>> = (0..kk)
        .map(|k| {
            let g = t.marginal(k);
            let w = sys.margin(k).weights();
            g.iter()
                .zip(w)
                .map(|(&gi, &wi)| (wi - gi).max(0.0))
                .collect()
        })
        .collect();
    let s: f64 = errs[kk - 1].iter().sum();
    if s >= 1e-14 {
        let scale = s.powi(kk as i32 - 1);
        let shape = t.shape().to_vec();
        let mut idx = MultiIndex::new(&shape);
        // prefix[j] = err_0[i_0] * ... * err_j[i_j]
        let mut prefix = vec![0.0; kk];
        let mut acc = 1.0;
        for (j, p) in prefix.iter_mut().enumerate() {
            acc *= errs[j][0];
            *p = acc;
        }
        let data = t.data_mut();
        let mut c = 0;
        loop {
            data[c] += prefix[kk - 1] / scale;
            c += 1;
            match idx.advance() {
                Some(axis) => {
                    let mut acc = if axis == 0 { 1.0 } else { prefix[axis - 1] };
                    let ids = idx.indices();
                    for j in axis..kk {
                        acc *= errs[j][ids[j]];
                        prefix[j] = acc;
                    }
                }
                None => break,
            }
        }
    }
    Coupling::from_tensor(t)
}

/// Certified lower bound on the unregularized optimum from scaling
/// potentials: `(1/eta) * sum_k <m(k), mu(k)>` minus the recorded cost
/// shift. Valid whenever the potentials, rescaled by `1/eta`, are a
/// feasible dual solution — the solvers guarantee this for the potentials
/// they report by folding the kernel normalizer and the iterate's total
/// mass into them.
pub fn dual_lower_bound(
    potentials: &Potentials,
    sys: &MarginalSystem,
    eta: f64,
    shift: f64,
) -> f64 {
    let mut acc = 0.0;
    for (k, margin) in sys.margins().iter().enumerate() {
        let m = potentials.margin(k);
        for (mi, wi) in m.iter().zip(margin.weights()) {
            acc += mi * wi;
        }
    }
    acc / eta - shift
}

/// Shared shape validation for both solvers.
fn check_shapes(cost: &CostTensor, sys: &MarginalSystem) -> Result<()> {
    let expected = sys.shape();
    if cost.shape() != expected.as_slice() {
        return Err(Error::ShapeMismatch {
            cost: cost.shape().to_vec(),
            marginals: expected,
        });
    }
    Ok(())
}

/// Potentials adjusted so the raw certificate formula is valid: spreads the
/// kernel normalizer and the iterate's total mass evenly over the margins.
/// Every cell of the iterate is at most its total mass, so
/// `-eta C - log_norm + ⊕ m <= log mass` cellwise; subtracting
/// `(log_norm + log mass)/K` from each margin's potentials therefore gives
/// `⊕ (m_adj / eta) <= C` pointwise — dual feasibility for the transport LP.
fn certificate_potentials(raw: &[Vec<f64>], log_norm: f64, mass: f64) -> Potentials {
    let kk = raw.len() as f64;
    let offset = (log_norm + mass.max(LOG_FLOOR).ln()) / kk;
    Potentials::from_vecs(
        raw.iter()
            .map(|mk| mk.iter().map(|&v| v - offset).collect())
            .collect(),
    )
}

/// MTV residual from cached marginal vectors (no materialized coupling).
fn residual_mtv(marg: &[Vec<f64>], sys: &MarginalSystem) -> f64 {
    let mut total = 0.0;
    for (k, margin) in sys.margins().iter().enumerate() {
        for (&g, &w) in marg[k].iter().zip(margin.weights()) {
            total += (g - w).abs();
        }
    }
    total
}

/// The certificate value for raw potentials in one shot:
/// `(sum_k <m(k), mu(k)> - log_norm - log mass) / eta - shift`. Equal to
/// [`dual_lower_bound`] applied to [`certificate_potentials`], without the
/// allocation.
fn dual_value(
    m: &[Vec<f64>],
    sys: &MarginalSystem,
    eta: f64,
    log_norm: f64,
    mass: f64,
    shift: f64,
) -> f64 {
    let mut acc = 0.0;
    for (k, margin) in sys.margins().iter().enumerate() {
        for (&mi, &wi) in m[k].iter().zip(margin.weights()) {
            acc += mi * wi;
        }
    }
    (acc - log_norm - mass.max(LOG_FLOOR).ln()) / eta - shift
}
