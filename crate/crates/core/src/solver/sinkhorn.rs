//! Multi-marginal Sinkhorn with greedy margin selection.
//!
//! Each iteration picks the margin whose current marginal is furthest from
//! its target in Kullback–Leibler divergence,
//! `k_t = argmax_k KL(mu(k) || gamma(k))`, then rescales that whole margin:
//! `m(k_t) += log mu(k_t) - log gamma(k_t)`. After the update the selected
//! marginal matches its target exactly (so the iterate's total mass returns
//! to one), and the residual [`super::mtv`] decreases until it crosses the
//! stopping threshold. Ties in the greedy choice break toward the lowest
//! margin index, making runs bit-for-bit reproducible.

use super::kernel::Kernel;
use super::{
    certificate_potentials, check_shapes, Coupling, MarginSelected, SolveResult, SolverConfig,
    TraceEntry, LOG_FLOOR,
};
use crate::cost::CostTensor;
use crate::error::{Error, Result};
use crate::measures::MarginalSystem;

/// Solve `min <C, gamma>` over couplings of `sys` to accuracy
/// `config.epsilon`, reporting a feasible rounded coupling and a valid dual
/// lower bound whether or not the iteration budget sufficed to converge.
pub fn solve(
    cost: &CostTensor,
    sys: &MarginalSystem,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    check_shapes(cost, sys)?;
    let eta = config.effective_eta(sys);
    let eps_prime = config.eps_prime(cost);
    let kern = Kernel::new(cost.values(), eta);
    let mut m: Vec<Vec<f64>> = sys.margins().iter().map(|mg| vec![0.0; mg.len()]).collect();
    let mut best_dual = f64::NEG_INFINITY;
    let mut iterations: u64 = 0;
    let mut converged = false;
    let mut trace = config.record_trace.then(Vec::new);
    let mut last_mass;

    let mtv_final = loop {
        let stab = kern.log_max(&m);
        let (marg, mass) = kern.marginals(&m, stab);
        last_mass = mass;
        let residual = super::residual_mtv(&marg, sys);
        let dual = super::dual_value(&m, sys, eta, kern.log_norm, mass, cost.shift());
        if dual > best_dual {
            best_dual = dual;
        }
        let check_due =
            iterations % config.mtv_check_every == 0 || iterations >= config.max_iters;
        if check_due && residual <= eps_prime {
            converged = true;
            break residual;
        }
        if iterations >= config.max_iters {
            break residual;
        }

        let k_t = select_margin(&marg, sys);
        let weights = sys.margin(k_t).weights();
        for (i, &w) in weights.iter().enumerate() {
            let updated = m[k_t][i] + w.ln() - marg[k_t][i].max(LOG_FLOOR).ln();
            if !updated.is_finite() {
                return Err(Error::NonFinite {
                    iteration: iterations + 1,
                    margin: k_t,
                });
            }
            m[k_t][i] = updated;
        }
        iterations += 1;
        if let Some(tr) = trace.as_mut() {
            tr.push(TraceEntry {
                iter: iterations,
                margin_selected: MarginSelected::Margin(k_t),
                mtv: residual,
                dual_bound: dual,
            });
        }
    };

    let gamma = kern.materialize(&m);
    let rounded = super::round_to_feasible(&Coupling::from_tensor(gamma), sys);
    let primal_value = cost.objective(rounded.values());
    Ok(SolveResult {
        coupling: rounded,
        primal_value,
        dual_lower_bound: best_dual,
        iterations,
        converged,
        mtv_final,
        eta,
        trace,
        potentials: certificate_potentials(&m, kern.log_norm, last_mass),
    })
}

/// Greedy Sinkhorn margin choice: the margin with the largest
/// `KL(mu(k) || gamma(k)) = sum_i mu(k,i) log(mu(k,i) / gamma(k,i))`,
/// lowest index on ties.
fn select_margin(marg: &[Vec<f64>], sys: &MarginalSystem) -> usize {
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for (k, margin) in sys.margins().iter().enumerate() {
        let mut kl = 0.0;
        for (&g, &w) in marg[k].iter().zip(margin.weights()) {
            kl += w * (w.ln() - g.max(LOG_FLOOR).ln());
        }
        if kl > best {
            best = kl;
            best_k = k;
        }
    }
    best_k
}
