//! Ground-truth references for validating the regularized solvers.
//!
//! Three independent oracles live here:
//!
//! - [`lp_exact`] solves tiny transport instances exactly as linear programs
//!   with a self-contained dense two-phase simplex (Bland's anti-cycling
//!   rule, exact-tolerance pivoting). No external solver is involved, so the
//!   oracle is portable and auditable.
//! - [`min_over_permutations`] exhausts the permutation couplings — the
//!   vertices of the doubly stochastic polytope — for two equal-size uniform
//!   margins. It shares no code with the simplex, guarding against bugs in
//!   either path.
//! - [`gaussian_mw2`] evaluates the closed-form minimum of the mean-squared
//!   average outcome over couplings of centered Gaussian margins, used to
//!   validate solver output on synthetic data where the truth is known.
//!
//! All reported values follow the solver convention: they are shift-corrected
//! (the stored cost tensor has its minimum cell at zero; reported objectives
//! undo the shift), and tensors built with a maximize sign report the value
//! of the negated cost, so callers negate to recover the maximum.

use crate::cost::CostTensor;
use crate::error::{Error, Result};
use crate::measures::MarginalSystem;
use crate::solver::Coupling;
use crate::tensor::{DenseTensor, MultiIndex};

/// Largest instance, in tensor cells, the exact LP accepts.
pub const ORACLE_CELL_CAP: usize = 10_000;
/// Entries smaller than this are treated as zero during pivoting.
const PIVOT_TOL: f64 = 1e-11;
/// Pivot budget before the simplex gives up.
const PIVOT_CAP: u64 = 200_000;
/// Phase-1 objective above this is declared infeasible.
const FEAS_TOL: f64 = 1e-8;

/// Termination status of the exact LP.
///
/// [`lp_exact`] returns `Ok` only with [`LpStatus::Optimal`]; the other
/// states surface as [`Error::LpInfeasible`] and [`Error::PivotLimit`] so
/// callers can route them to a numerical-failure exit path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Exact solution of a small transport LP.
#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Optimal objective, shift-corrected like the solver's `primal_value`.
    pub value: f64,
    /// An optimal vertex of the transport polytope.
    pub vertex_coupling: Coupling,
    pub status: LpStatus,
}

/// Solve `min <C, gamma>` over couplings of `sys` exactly.
///
/// The LP has one nonnegative variable per tensor cell and one equality row
/// per marginal atom. Every margin's row block sums to the total mass, so
/// blocks beyond the first each carry one redundant row; the last row of
/// each later block is dropped to keep the constraint matrix full rank. The
/// instance must have at most [`ORACLE_CELL_CAP`] cells.
pub fn lp_exact(cost: &CostTensor, sys: &MarginalSystem) -> Result<LpSolution> {
    let shape = sys.shape();
    if cost.shape() != shape.as_slice() {
        return Err(Error::ShapeMismatch {
            cost: cost.shape().to_vec(),
            marginals: shape.clone(),
        });
    }
    let cells = cost.values().len();
    if cells > ORACLE_CELL_CAP {
        return Err(Error::OracleTooLarge {
            required: cells,
            cap: ORACLE_CELL_CAP,
        });
    }

    // Row layout: all n_0 rows of margin 0, then the first n_k - 1 rows of
    // each margin k >= 1.
    let num_margins = shape.len();
    let mut row_of = vec![Vec::new(); num_margins];
    let mut rows = 0usize;
    for (k, &n) in shape.iter().enumerate() {
        let kept = if k == 0 { n } else { n - 1 };
        row_of[k] = (0..n)
            .map(|i| if i < kept { Some(rows + i) } else { None })
            .collect();
        rows += kept;
    }

    let total_cols = cells + rows; // real variables then artificials
    let mut a = vec![vec![0.0f64; total_cols]; rows];
    let mut rhs = vec![0.0f64; rows];
    for (k, margin) in sys.margins().iter().enumerate() {
        for (i, &w) in margin.weights().iter().enumerate() {
            if let Some(r) = row_of[k][i] {
                rhs[r] = w;
            }
        }
    }
    let mut mi = MultiIndex::new(&shape);
    let mut cell = 0usize;
    loop {
        for (k, &i) in mi.indices().iter().enumerate() {
            if let Some(r) = row_of[k][i] {
                a[r][cell] = 1.0;
            }
        }
        cell += 1;
        if mi.advance().is_none() {
            break;
        }
    }
    let mut basis: Vec<usize> = (0..rows).map(|r| cells + r).collect();
    for (r, row) in a.iter_mut().enumerate() {
        row[cells + r] = 1.0;
    }
    let mut active = vec![true; rows];
    let mut pivots = 0u64;

    // Phase 1: minimize the artificial mass.
    let mut obj = vec![0.0f64; total_cols];
    for j in 0..total_cols {
        let c_j = if j >= cells { 1.0 } else { 0.0 };
        let mut acc = c_j;
        for r in 0..rows {
            acc -= a[r][j]; // basis starts all-artificial with cost 1
        }
        obj[j] = acc;
    }
    run_simplex(
        &mut a, &mut rhs, &mut basis, &active, &mut obj, &mut pivots, total_cols,
    )?;
    let artificial_mass: f64 = (0..rows)
        .filter(|&r| active[r] && basis[r] >= cells)
        .map(|r| rhs[r])
        .sum();
    if artificial_mass > FEAS_TOL {
        return Err(Error::LpInfeasible);
    }
    // Drive remaining artificials out of the basis; a row with no usable
    // real pivot is linearly dependent and gets deactivated.
    for r in 0..rows {
        if basis[r] < cells {
            continue;
        }
        match (0..cells).find(|&j| a[r][j].abs() > PIVOT_TOL) {
            Some(j) => pivot(&mut a, &mut rhs, &mut basis, &active, &mut obj, r, j),
            None => active[r] = false,
        }
    }

    // Phase 2: minimize the stored (shifted) cost over real columns only.
    let c = cost.values().data();
    for j in 0..total_cols {
        let c_j = if j < cells { c[j] } else { f64::INFINITY };
        let mut acc = if j < cells { c_j } else { 0.0 };
        for r in 0..rows {
            if active[r] && basis[r] < cells {
                acc -= c[basis[r]] * a[r][j];
            }
        }
        obj[j] = if j < cells { acc } else { f64::INFINITY };
    }
    run_simplex(
        &mut a, &mut rhs, &mut basis, &active, &mut obj, &mut pivots, cells,
    )?;

    let mut x = vec![0.0f64; cells];
    for r in 0..rows {
        if active[r] && basis[r] < cells {
            x[basis[r]] = rhs[r].max(0.0);
        }
    }
    let vertex = Coupling::from_tensor(DenseTensor::from_vec(&shape, x)?);
    let value = cost.objective(vertex.values());
    Ok(LpSolution {
        value,
        vertex_coupling: vertex,
        status: LpStatus::Optimal,
    })
}

/// Bland-rule simplex loop over columns `0..entering_cols`.
fn run_simplex(
    a: &mut [Vec<f64>],
    rhs: &mut [f64],
    basis: &mut [usize],
    active: &[bool],
    obj: &mut [f64],
    pivots: &mut u64,
    entering_cols: usize,
) -> Result<()> {
    loop {
        // Bland: lowest-index column with negative reduced cost.
        let Some(enter) = (0..entering_cols).find(|&j| obj[j] < -PIVOT_TOL) else {
            return Ok(());
        };
        // Ratio test; ties go to the row whose basic variable has the
        // lowest index, completing Bland's anti-cycling rule.
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for (r, row) in a.iter().enumerate() {
            if !active[r] || row[enter] <= PIVOT_TOL {
                continue;
            }
            let ratio = rhs[r] / row[enter];
            let better = match leave {
                None => true,
                Some(cur) => {
                    ratio < best - 1e-12 || (ratio < best + 1e-12 && basis[r] < basis[cur])
                }
            };
            if better {
                best = ratio;
                leave = Some(r);
            }
        }
        let Some(leave) = leave else {
            // Unbounded descent cannot occur on a bounded transport
            // polytope; reaching it means the tableau degraded.
            return Err(Error::PivotLimit(*pivots));
        };
        pivot(a, rhs, basis, active, obj, leave, enter);
        *pivots += 1;
        if *pivots >= PIVOT_CAP {
            return Err(Error::PivotLimit(*pivots));
        }
    }
}

/// Pivot `enter` into the basis at `row`, eliminating it elsewhere.
fn pivot(
    a: &mut [Vec<f64>],
    rhs: &mut [f64],
    basis: &mut [usize],
    active: &[bool],
    obj: &mut [f64],
    row: usize,
    enter: usize,
) {
    let p = a[row][enter];
    for v in a[row].iter_mut() {
        *v /= p;
    }
    rhs[row] /= p;
    let pivot_row = a[row].clone();
    let pivot_rhs = rhs[row];
    for (r, other) in a.iter_mut().enumerate() {
        if r == row || !active[r] {
            continue;
        }
        let f = other[enter];
        if f == 0.0 {
            continue;
        }
        for (v, &pv) in other.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        other[enter] = 0.0;
        rhs[r] -= f * pivot_rhs;
    }
    let f = obj[enter];
    if f != 0.0 && f.is_finite() {
        for (v, &pv) in obj.iter_mut().zip(&pivot_row) {
            if v.is_finite() {
                *v -= f * pv;
            }
        }
        obj[enter] = 0.0;
    }
    basis[row] = enter;
}

/// Minimum of `<C, gamma>` over the `n!` permutation couplings of two
/// equal-size uniform margins.
///
/// For two margins with `n` atoms each and uniform weights, the transport
/// polytope is `1/n` times the doubly stochastic polytope, whose vertices
/// are exactly the permutation matrices; the LP optimum is attained at one
/// of them. Restricted to `n <= 5` (at most 120 couplings). Shares the
/// shift-corrected reporting convention of [`lp_exact`].
pub fn min_over_permutations(cost: &CostTensor, sys: &MarginalSystem) -> Result<f64> {
    let shape = sys.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::InvalidArgument(
            "permutation enumeration needs two equal-size margins".into(),
        ));
    }
    let n = shape[0];
    if n > 5 {
        return Err(Error::InvalidArgument(format!(
            "permutation enumeration limited to 5 atoms, got {n}"
        )));
    }
    for margin in sys.margins() {
        let uniform = 1.0 / n as f64;
        if margin.weights().iter().any(|&w| (w - uniform).abs() > 1e-12) {
            return Err(Error::InvalidArgument(
                "permutation enumeration needs uniform weights".into(),
            ));
        }
    }
    let values = cost.values();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p
            .iter()
            .enumerate()
            .map(|(i, &j)| values.get(&[i, j]))
            .sum();
        best = best.min(total / n as f64);
    });
    Ok(best - cost.shift())
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// Closed-form minimum of the mean-squared average outcome over couplings
/// of centered one-dimensional Gaussians with standard deviations `sigmas`:
/// `(1/K^2) * max(0, 2 max_k sigma_k - sum_l sigma_l)^2`.
///
/// When no single standard deviation exceeds the sum of the others the
/// margins are jointly mixable — the average can be coupled to vanish — and
/// the value is zero. Examples: `(2, 0.3, 0.1) -> (4 - 2.4)^2 / 9 =
/// 0.28444...`; `(1, 1) -> 0`; `(3, 1, 1) -> 1/9`.
pub fn gaussian_mw2(sigmas: &[f64]) -> Result<f64> {
    if sigmas.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one standard deviation required".into(),
        ));
    }
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for &s in sigmas {
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::NonPositiveSigma(s));
        }
        sum += s;
        max = max.max(s);
    }
    let k = sigmas.len() as f64;
    let excess = (2.0 * max - sum).max(0.0);
    Ok(excess * excess / (k * k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{build_cost_tensor, build_with, CostKind, CostSpec, Sign};
    use crate::measures::DiscreteMarginal;
    use crate::solver::mtv;
    use approx::assert_abs_diff_eq;
    use rand_core::{RngCore, SeedableRng};

    fn system_1d(supports: &[&[f64]]) -> MarginalSystem {
        MarginalSystem::new(
            supports
                .iter()
                .map(|s| DiscreteMarginal::empirical_1d(s).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn uniform_in(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        // Uniform in [-1, 1] from 53 random mantissa bits.
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        2.0 * u - 1.0
    }

    fn random_system(
        rng: &mut rand_chacha::ChaCha8Rng,
        sizes: &[usize],
        dim: usize,
    ) -> MarginalSystem {
        let margins = sizes
            .iter()
            .map(|&n| {
                let pts: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..dim).map(|_| uniform_in(rng)).collect())
                    .collect();
                DiscreteMarginal::empirical_from_samples(&pts).unwrap()
            })
            .collect();
        MarginalSystem::new(margins).unwrap()
    }

    fn product_coupling_value(cost: &CostTensor, sys: &MarginalSystem) -> f64 {
        let shape = sys.shape();
        let mut mi = MultiIndex::new(&shape);
        let mut total = 0.0;
        loop {
            let idx = mi.indices();
            let w: f64 = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| sys.margin(k).weights()[i])
                .product();
            total += w * cost.values().get(idx);
            if mi.advance().is_none() {
                break;
            }
        }
        total - cost.shift()
    }

    #[test]
    fn delta_margins_force_the_single_cell() {
        let sys = system_1d(&[&[0.5], &[-1.0], &[2.0]]);
        let cost = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
        let sol = lp_exact(&cost, &sys).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.value, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.vertex_coupling.mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn binary_uniform_mw2_is_a_quarter() {
        let sys = system_1d(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let cost = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
        let sol = lp_exact(&cost, &sys).unwrap();
        assert_abs_diff_eq!(sol.value, 0.25, epsilon = 1e-9);
        // Invariants: feasible vertex, value consistent with the coupling.
        assert!(mtv(&sol.vertex_coupling, &sys) <= 1e-9);
        let recomputed = cost.objective(sol.vertex_coupling.values());
        assert_abs_diff_eq!(sol.value, recomputed, epsilon = 1e-9);
    }

    #[test]
    fn two_point_masses_give_the_midpoint_square() {
        let sys = system_1d(&[&[0.2], &[0.6]]);
        let cost = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
        let sol = lp_exact(&cost, &sys).unwrap();
        assert_abs_diff_eq!(sol.value, 0.16, epsilon = 1e-12);
    }

    #[test]
    fn maximize_direction_reports_negated_value() {
        let sys = system_1d(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let spec = CostSpec::new(CostKind::Mw2).flipped();
        let cost = build_cost_tensor(&spec, &sys).unwrap();
        let sol = lp_exact(&cost, &sys).unwrap();
        // Aligned pairing maximizes at 0.5; the tensor stores the negation.
        assert_abs_diff_eq!(-sol.value, 0.5, epsilon = 1e-9);
        assert_eq!(spec.sign, Sign::Maximize);
    }

    #[test]
    fn agrees_with_permutation_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 2..=5 {
            for _ in 0..5 {
                let sys = random_system(&mut rng, &[n, n], 1);
                let cost = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
                let lp = lp_exact(&cost, &sys).unwrap().value;
                let enumerated = min_over_permutations(&cost, &sys).unwrap();
                assert_abs_diff_eq!(lp, enumerated, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn never_beats_by_the_product_coupling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let shapes: &[&[usize]] = &[&[2, 3], &[4, 2], &[3, 3, 2], &[2, 4, 3]];
        for sizes in shapes {
            for dim in [1, 2] {
                let sys = random_system(&mut rng, sizes, dim);
                let cost = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
                let sol = lp_exact(&cost, &sys).unwrap();
                let product = product_coupling_value(&cost, &sys);
                assert!(
                    sol.value <= product + 1e-9,
                    "lp {} above product coupling {}",
                    sol.value,
                    product
                );
                assert!(mtv(&sol.vertex_coupling, &sys) <= 1e-9);
            }
        }
    }

    #[test]
    fn invariant_to_atom_reordering() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let sys = random_system(&mut rng, &[3, 4], 2);
        let cost = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
        let base = lp_exact(&cost, &sys).unwrap().value;

        // Reverse the atoms of margin 1 and re-solve.
        let m1 = sys.margin(1);
        let pts: Vec<Vec<f64>> = (0..m1.len()).rev().map(|i| m1.point(i).to_vec()).collect();
        let reordered = MarginalSystem::new(vec![
            sys.margin(0).clone(),
            DiscreteMarginal::empirical_from_samples(&pts).unwrap(),
        ])
        .unwrap();
        let cost2 = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &reordered).unwrap();
        let value2 = lp_exact(&cost2, &reordered).unwrap().value;
        assert_abs_diff_eq!(base, value2, epsilon = 1e-9);
    }

    #[test]
    fn constant_offset_moves_the_value_by_exactly_that_offset() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let sys = random_system(&mut rng, &[3, 3], 1);
        let base_spec = CostSpec::new(CostKind::Mw2);
        let plain = build_cost_tensor(&base_spec, &sys).unwrap();
        let offset = 3.75;
        let shifted = build_with(&sys, Sign::Minimize, 10_000, |pts| {
            base_spec.kind.eval(pts) + offset
        })
        .unwrap();
        let a = lp_exact(&plain, &sys).unwrap().value;
        let b = lp_exact(&shifted, &sys).unwrap().value;
        assert_abs_diff_eq!(b - a, offset, epsilon = 1e-9);
    }

    #[test]
    fn oversized_instances_are_rejected() {
        let atoms: Vec<f64> = (0..22).map(|i| i as f64).collect();
        let sys = system_1d(&[&atoms, &atoms, &atoms]);
        let cost = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
        match lp_exact(&cost, &sys) {
            Err(Error::OracleTooLarge { required, cap }) => {
                assert_eq!(required, 22 * 22 * 22);
                assert_eq!(cap, ORACLE_CELL_CAP);
            }
            other => panic!("expected cell-cap error, got {other:?}"),
        }
    }

    #[test]
    fn permutation_oracle_rejects_bad_inputs() {
        let sys = system_1d(&[&[0.0, 1.0], &[0.0, 1.0, 2.0]]);
        let cost = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
        assert!(min_over_permutations(&cost, &sys).is_err());

        let atoms: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let sys6 = system_1d(&[&atoms, &atoms]);
        let cost6 = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys6).unwrap();
        assert!(min_over_permutations(&cost6, &sys6).is_err());
    }

    #[test]
    fn gaussian_closed_form_examples() {
        assert_abs_diff_eq!(
            gaussian_mw2(&[2.0, 0.3, 0.1]).unwrap(),
            (4.0 - 2.4f64) * (4.0 - 2.4) / 9.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(gaussian_mw2(&[2.0, 0.3, 0.1]).unwrap(), 0.2844444444444444, epsilon = 1e-12);
        assert_abs_diff_eq!(gaussian_mw2(&[1.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(gaussian_mw2(&[3.0, 1.0, 1.0]).unwrap(), 1.0 / 9.0, epsilon = 1e-12);
        // One dominant margin: (2*5 - 5.5)^2 / 4 = 20.25 / 4.
        assert_abs_diff_eq!(gaussian_mw2(&[5.0, 0.5]).unwrap(), 5.0625, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_closed_form_rejects_bad_sigmas() {
        assert!(gaussian_mw2(&[]).is_err());
        assert!(matches!(
            gaussian_mw2(&[1.0, 0.0]),
            Err(Error::NonPositiveSigma(_))
        ));
        assert!(gaussian_mw2(&[1.0, -2.0]).is_err());
        assert!(gaussian_mw2(&[1.0, f64::NAN]).is_err());
    }
}
