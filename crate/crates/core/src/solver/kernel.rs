//! Log-domain passes over the virtual scaled-coupling tensor.
//!
//! The coupling `gamma = exp(t)` with
//! `t(i) = -eta * C(i) - log_norm + sum_k m(k, i_k)` is only ever touched
//! through full passes (max, marginal accumulation, materialization) and
//! slice passes (single-atom Greenkhorn updates). All passes walk the flat
//! cost buffer once in row-major order, maintaining the potential sum with
//! per-axis prefix sums so each cell costs O(1) amortized on top of its
//! `exp` call.

use crate::tensor::{DenseTensor, MultiIndex};

pub(crate) struct Kernel<'a> {
    cost: &'a DenseTensor,
    pub eta: f64,
    /// `log ||exp(-eta C)||_1`, the normalizer making the initial coupling
    /// (all potentials zero) a probability tensor.
    pub log_norm: f64,
}

impl<'a> Kernel<'a> {
    pub fn new(cost: &'a DenseTensor, eta: f64) -> Self {
        // Stored costs have minimum zero, so max(-eta C) = 0 and the plain
        // sum of exponentials is already max-stabilized.
        let sum: f64 = cost.data().iter().map(|&c| (-eta * c).exp()).sum();
        Kernel {
            cost,
            eta,
            log_norm: sum.ln(),
        }
    }

    /// Maximum of `t` over all cells — the stabilizer for subsequent
    /// exponential passes.
    pub fn log_max(&self, m: &[Vec<f64>]) -> f64 {
        let kk = m.len();
        let shape = self.cost.shape();
        let mut idx = MultiIndex::new(shape);
        let mut prefix = prefix_init(m);
        let data = self.cost.data();
        let mut best = f64::NEG_INFINITY;
        let mut c = 0;
        loop {
            let t = -self.eta * data[c] + prefix[kk - 1] - self.log_norm;
            if t > best {
                best = t;
            }
            c += 1;
            match idx.advance() {
                Some(axis) => prefix_update(&mut prefix, m, idx.indices(), axis),
                None => break,
            }
        }
        best
    }

    /// All `K` marginals of `gamma` and its total mass, in absolute units,
    /// stabilized by `stab` (usually [`Kernel::log_max`]).
    pub fn marginals(&self, m: &[Vec<f64>], stab: f64) -> (Vec<Vec<f64>>, f64) {
        let kk = m.len();
        let shape = self.cost.shape();
        let mut acc: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
        let mut idx = MultiIndex::new(shape);
        let mut prefix = prefix_init(m);
        let data = self.cost.data();
        let mut c = 0;
        loop {
            let t = -self.eta * data[c] + prefix[kk - 1] - self.log_norm;
            let e = (t - stab).exp();
            let ids = idx.indices();
            for (k, a) in acc.iter_mut().enumerate() {
                a[ids[k]] += e;
            }
            c += 1;
            match idx.advance() {
                Some(axis) => prefix_update(&mut prefix, m, idx.indices(), axis),
                None => break,
            }
        }
        let scale = stab.exp();
        let mut mass = 0.0;
        for v in acc[0].iter() {
            mass += v;
        }
        mass *= scale;
        for a in acc.iter_mut() {
            for v in a.iter_mut() {
                *v *= scale;
            }
        }
        (acc, mass)
    }

    /// Materialize `gamma` as a dense tensor in absolute units.
    pub fn materialize(&self, m: &[Vec<f64>]) -> DenseTensor {
        let kk = m.len();
        let shape = self.cost.shape().to_vec();
        let mut out = self.cost.clone();
        let mut idx = MultiIndex::new(&shape);
        let mut prefix = prefix_init(m);
        let data = out.data_mut();
        let mut c = 0;
        loop {
            let t = -self.eta * data[c] + prefix[kk - 1] - self.log_norm;
            data[c] = t.exp();
            c += 1;
            match idx.advance() {
                Some(axis) => prefix_update(&mut prefix, m, idx.indices(), axis),
                None => break,
            }
        }
        out
    }

    /// Account a single-potential change `m[k_star][i_star] += delta` into
    /// cached absolute marginals: walks only the slice `i_{k_star} = i_star`,
    /// adding `new - old` cell differences into every other margin's cache
    /// and writing the recomputed entry for `(k_star, i_star)` itself.
    /// `m` must already contain the updated value. Returns the change in
    /// total mass.
    pub fn apply_atom_update(
        &self,
        m: &[Vec<f64>],
        k_star: usize,
        i_star: usize,
        delta: f64,
        marg: &mut [Vec<f64>],
    ) -> f64 {
        let kk = m.len();
        let shape = self.cost.shape();
        let stride = self.cost.strides()[k_star];
        let base = i_star * stride;
        // Odometer over the remaining axes.
        let sub_shape: Vec<usize> = (0..kk).filter(|&k| k != k_star).map(|k| shape[k]).collect();
        let sub_axes: Vec<usize> = (0..kk).filter(|&k| k != k_star).collect();
        let sub_strides: Vec<usize> = sub_axes.iter().map(|&k| self.cost.strides()[k]).collect();
        let data = self.cost.data();
        let m_star = m[k_star][i_star];
        let inv = (-delta).exp();
        let mut new_star_entry = 0.0;
        let mut mass_delta = 0.0;
        if sub_shape.is_empty() {
            // One-margin tensors cannot occur (K >= 2), but keep the
            // degenerate walk well-defined.
            return 0.0;
        }
        let mut idx = MultiIndex::new(&sub_shape);
        loop {
            let ids = idx.indices();
            let mut offset = base;
            let mut pot = m_star;
            for (j, &axis_idx) in ids.iter().enumerate() {
                offset += axis_idx * sub_strides[j];
                pot += m[sub_axes[j]][axis_idx];
            }
            let t_new = -self.eta * data[offset] + pot - self.log_norm;
            let e_new = t_new.exp();
            let diff = e_new - e_new * inv; // new - old
            new_star_entry += e_new;
            mass_delta += diff;
            for (j, &axis_idx) in ids.iter().enumerate() {
                marg[sub_axes[j]][axis_idx] += diff;
            }
            if idx.advance().is_none() {
                break;
            }
        }
        marg[k_star][i_star] = new_star_entry;
        mass_delta
    }
}

/// `prefix[j] = m[0][i_0] + ... + m[j][i_j]` for the all-zero multi-index.
fn prefix_init(m: &[Vec<f64>]) -> Vec<f64> {
    let mut prefix = vec![0.0; m.len()];
    let mut acc = 0.0;
    for (j, p) in prefix.iter_mut().enumerate() {
        acc += m[j][0];
        *p = acc;
    }
    prefix
}

/// Refresh `prefix[axis..]` after the odometer changed `axis` (all deeper
/// axes reset to zero as part of the same step).
#[inline]
fn prefix_update(prefix: &mut [f64], m: &[Vec<f64>], ids: &[usize], axis: usize) {
    let mut acc = if axis == 0 { 0.0 } else { prefix[axis - 1] };
    for j in axis..prefix.len() {
        acc += m[j][ids[j]];
        prefix[j] = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn brute_marginals(
        cost: &DenseTensor,
        eta: f64,
        log_norm: f64,
        m: &[Vec<f64>],
    ) -> (Vec<Vec<f64>>, f64) {
        let shape = cost.shape().to_vec();
        let gamma = DenseTensor::from_fn(&shape, |ids| {
            let pot: f64 = ids.iter().enumerate().map(|(k, &i)| m[k][i]).sum();
            (-eta * cost.get(ids) + pot - log_norm).exp()
        })
        .unwrap();
        let margs: Vec<Vec<f64>> = (0..shape.len()).map(|k| gamma.marginal(k)).collect();
        (margs, gamma.sum())
    }

    fn test_cost() -> DenseTensor {
        DenseTensor::from_vec(&[2, 3], vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.125]).unwrap()
    }

    #[test]
    fn zero_potentials_give_normalized_kernel() {
        let cost = test_cost();
        let kern = Kernel::new(&cost, 2.0);
        let m = vec![vec![0.0; 2], vec![0.0; 3]];
        let stab = kern.log_max(&m);
        let (margs, mass) = kern.marginals(&m, stab);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(margs[0].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(margs[1].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn marginals_match_brute_force() {
        let cost = test_cost();
        let kern = Kernel::new(&cost, 3.0);
        let m = vec![vec![0.3, -0.7], vec![0.1, 0.0, -0.2]];
        let stab = kern.log_max(&m);
        let (margs, mass) = kern.marginals(&m, stab);
        let (expect, expect_mass) = brute_marginals(&cost, 3.0, kern.log_norm, &m);
        assert_abs_diff_eq!(mass, expect_mass, epsilon = 1e-12);
        for k in 0..2 {
            for (a, b) in margs[k].iter().zip(&expect[k]) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn materialize_matches_formula() {
        let cost = test_cost();
        let kern = Kernel::new(&cost, 1.5);
        let m = vec![vec![0.2, 0.4], vec![-0.1, 0.3, 0.0]];
        let gamma = kern.materialize(&m);
        for i in 0..2 {
            for j in 0..3 {
                let t = -1.5 * cost.get(&[i, j]) + m[0][i] + m[1][j] - kern.log_norm;
                assert_abs_diff_eq!(gamma.get(&[i, j]), t.exp(), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn atom_update_matches_recomputation() {
        let cost = DenseTensor::from_fn(&[2, 3, 2], |ids| {
            (ids[0] + 2 * ids[1] + ids[2]) as f64 * 0.2
        })
        .unwrap();
        let kern = Kernel::new(&cost, 2.5);
        let mut m = vec![vec![0.1, -0.3], vec![0.0, 0.2, -0.1], vec![0.05, 0.0]];
        let stab = kern.log_max(&m);
        let (mut marg, mass) = kern.marginals(&m, stab);
        // Update margin 1, atom 2 by +0.7 and account it incrementally.
        let delta = 0.7;
        m[1][2] += delta;
        let mass_delta = kern.apply_atom_update(&m, 1, 2, delta, &mut marg);
        let (expect, expect_mass) = brute_marginals(&cost, 2.5, kern.log_norm, &m);
        assert_abs_diff_eq!(mass + mass_delta, expect_mass, epsilon = 1e-12);
        for k in 0..3 {
            for (a, b) in marg[k].iter().zip(&expect[k]) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn extreme_eta_stays_finite() {
        // eta * sup_norm = 1e6 * 1e3: log-domain passes must not overflow.
        let cost = DenseTensor::from_vec(&[2, 2], vec![0.0, 1e3, 500.0, 250.0]).unwrap();
        let kern = Kernel::new(&cost, 1e6);
        let m = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let stab = kern.log_max(&m);
        assert!(stab.is_finite());
        let (margs, mass) = kern.marginals(&m, stab);
        assert!(mass.is_finite());
        assert!(margs.iter().flatten().all(|v| v.is_finite()));
        // All mass concentrates on the zero-cost cell.
        assert_abs_diff_eq!(margs[0][0], 1.0, epsilon = 1e-12);
    }
}
