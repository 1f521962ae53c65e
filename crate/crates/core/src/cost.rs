//! Cost specifications and dense cost-tensor assembly.
//!
//! A cost specification maps each tuple of support points `(y(1), ..., y(K))`
//! — one point per margin — to a real cost. Five families are supported:
//!
//! - `mw2`: `|| (y(1) + ... + y(K)) / K ||^2`, the squared norm of the
//!   equal-weight mean;
//! - `qmw(A)`: `sum_{k,l} a_kl <y(k), y(l)>` for a symmetric `K x K` matrix
//!   `A` (with `A = 11'/K^2` this reduces to `mw2`);
//! - `contrast(beta)`: `|| sum_k beta_k y(k) ||^2`;
//! - `quadratic_general(Q)`: `z' Q z` for the stacked vector
//!   `z = (y(1); ...; y(K))` and a symmetric `Kd x Kd` matrix `Q`;
//! - `custom_expr`: an arithmetic expression over variables `y[k][j]`
//!   (see [`expr::CostExpr`]).
//!
//! Every specification carries an optimization direction. Tensors are built
//! densely: cells are evaluated in row-major order, negated for
//! maximization, and stored shifted so the minimum cell is exactly zero.
//! The shift is recorded and removed from every reported objective value,
//! and the sup norm `max |cost|` of the unshifted cells feeds the solver's
//! stopping rule.

pub mod expr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::MarginalSystem;
use crate::tensor::{cell_count, DenseTensor, MultiIndex};

pub use expr::CostExpr;

/// Default ceiling on dense tensor size: one hundred million bytes of f64.
pub const DEFAULT_CELL_CAP: usize = 10_000_000;

/// Optimization direction for a cost specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Sign {
    #[default]
    #[serde(rename = "min")]
    Minimize,
    #[serde(rename = "max")]
    Maximize,
}

/// The cost family and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// Squared norm of the equal-weight mean of the `K` outcomes.
    Mw2,
    /// Pairwise quadratic welfare with symmetric `K x K` matrix `A`.
    Qmw(Vec<Vec<f64>>),
    /// Squared norm of the linear combination `sum_k beta_k y(k)`.
    Contrast(Vec<f64>),
    /// General quadratic form `z' Q z` on the stacked outcome vector.
    QuadraticGeneral(Vec<Vec<f64>>),
    /// Parsed arithmetic expression over `y[k][j]`.
    CustomExpr(CostExpr),
}

/// A cost family plus optimization direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub kind: CostKind,
    pub sign: Sign,
}

impl CostSpec {
    pub fn new(kind: CostKind) -> Self {
        CostSpec {
            kind,
            sign: Sign::Minimize,
        }
    }

    pub fn with_sign(kind: CostKind, sign: Sign) -> Self {
        CostSpec { kind, sign }
    }

    /// The same spec with the opposite direction.
    pub fn flipped(&self) -> Self {
        CostSpec {
            kind: self.kind.clone(),
            sign: match self.sign {
                Sign::Minimize => Sign::Maximize,
                Sign::Maximize => Sign::Minimize,
            },
        }
    }

    /// Validate parameters against a system with `num_margins` margins of
    /// outcome dimension `dim`.
    pub fn validate(&self, num_margins: usize, dim: usize) -> Result<()> {
        match &self.kind {
            CostKind::Mw2 => Ok(()),
            CostKind::Qmw(a) => {
                check_symmetric_square(a, num_margins, "A")?;
                Ok(())
            }
            CostKind::Contrast(beta) => {
                if beta.len() != num_margins {
                    return Err(Error::InvalidSpec(format!(
                        "beta has {} entries, need one per margin ({num_margins})",
                        beta.len()
                    )));
                }
                if beta.iter().any(|b| !b.is_finite()) {
                    return Err(Error::InvalidSpec("beta contains a non-finite entry".into()));
                }
                Ok(())
            }
            CostKind::QuadraticGeneral(q) => {
                check_symmetric_square(q, num_margins * dim, "Q")?;
                Ok(())
            }
            CostKind::CustomExpr(e) => e.check_indices(num_margins, dim),
        }
    }

    /// Short human-readable label for reports.
    pub fn label(&self) -> String {
        match &self.kind {
            CostKind::Mw2 => "mw2".into(),
            CostKind::Qmw(_) => "qmw".into(),
            CostKind::Contrast(beta) => format!(
                "contrast[{}]",
                beta.iter()
                    .map(|b| format!("{b}"))
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            CostKind::QuadraticGeneral(_) => "quadratic_general".into(),
            CostKind::CustomExpr(e) => format!("expr({})", e.source()),
        }
    }
}

fn check_symmetric_square(m: &[Vec<f64>], n: usize, name: &str) -> Result<()> {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidSpec(format!(
            "{name} must be {n} x {n} for this system, got {} x {}",
            m.len(),
            m.first().map_or(0, |r| r.len())
        )));
    }
    for i in 0..n {
        for j in 0..n {
            if !m[i][j].is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "{name}[{i}][{j}] is not finite"
                )));
            }
            if (m[i][j] - m[j][i]).abs() > 1e-9 {
                return Err(Error::InvalidSpec(format!(
                    "{name} is not symmetric at ({i},{j}): {} vs {}",
                    m[i][j], m[j][i]
                )));
            }
        }
    }
    Ok(())
}

impl CostKind {
    /// Evaluate the raw (sign-free) cost at one support-point tuple.
    /// `points[k]` is margin `k`'s outcome vector.
    pub fn eval(&self, points: &[&[f64]]) -> f64 {
        match self {
            CostKind::Mw2 => {
                let k = points.len() as f64;
                let d = points[0].len();
                let mut acc = 0.0;
                for j in 0..d {
                    let mut s = 0.0;
                    for p in points {
                        s += p[j];
                    }
                    let v = s / k;
                    acc += v * v;
                }
                acc
            }
            CostKind::Qmw(a) => {
                let mut acc = 0.0;
                for (i, row) in a.iter().enumerate() {
                    for (j, &aij) in row.iter().enumerate() {
                        if aij != 0.0 {
                            let dot: f64 = points[i]
                                .iter()
                                .zip(points[j])
                                .map(|(x, y)| x * y)
                                .sum();
                            acc += aij * dot;
                        }
                    }
                }
                acc
            }
            CostKind::Contrast(beta) => {
                let d = points[0].len();
                let mut acc = 0.0;
                for j in 0..d {
                    let mut s = 0.0;
                    for (k, p) in points.iter().enumerate() {
                        s += beta[k] * p[j];
                    }
                    acc += s * s;
                }
                acc
            }
            CostKind::QuadraticGeneral(q) => {
                let d = points[0].len();
                let dim = points.len() * d;
                let z = |i: usize| points[i / d][i % d];
                let mut acc = 0.0;
                for i in 0..dim {
                    let zi = z(i);
                    if zi != 0.0 {
                        let row = &q[i];
                        let mut s = 0.0;
                        for (j, &qij) in row.iter().enumerate().take(dim) {
                            s += qij * z(j);
                        }
                        acc += zi * s;
                    }
                }
                acc
            }
            CostKind::CustomExpr(e) => e.eval(points),
        }
    }
}

/// A dense, shift-normalized cost tensor ready for the solvers.
///
/// Stored cells are the (possibly negated) spec costs plus `shift`, chosen
/// so the minimum stored cell is exactly zero. `sup_norm` is the maximum
/// absolute unshifted cell and drives the solver's stopping threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTensor {
    tensor: DenseTensor,
    shift: f64,
    sup_norm: f64,
}

impl CostTensor {
    /// Normalize raw cell values (already oriented for minimization) into a
    /// shifted tensor. Rejects non-finite cells.
    pub fn from_values(raw: DenseTensor) -> Result<Self> {
        if let Some(flat) = raw.data().iter().position(|v| !v.is_finite()) {
            let mut idx = MultiIndex::new(raw.shape());
            for _ in 0..flat {
                idx.advance();
            }
            return Err(Error::NonFiniteCost {
                index: idx.indices().to_vec(),
            });
        }
        let min = raw.min();
        let sup_norm = raw
            .data()
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        let shift = -min;
        let mut tensor = raw;
        // Exact zero at the former minimum: subtracting the minimum keeps
        // at least one cell at 0.0 bit-exactly.
        for v in tensor.data_mut() {
            *v -= min;
        }
        Ok(CostTensor {
            tensor,
            shift,
            sup_norm,
        })
    }

    /// Shifted cell values (all `>= 0`, minimum exactly `0`).
    pub fn values(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    /// The scalar added to every cell during normalization. Reported
    /// objective values subtract it back out.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `max |cost|` over the unshifted cells.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Unshifted inner product with a coupling of total mass `mass`:
    /// `<stored, gamma> - shift * mass`.
    pub fn objective(&self, coupling: &DenseTensor) -> f64 {
        self.tensor.dot(coupling) - self.shift * coupling.sum()
    }
}

/// Build the dense cost tensor of `spec` over `sys`, with the default cell
/// cap of ten million.
pub fn build_cost_tensor(spec: &CostSpec, sys: &MarginalSystem) -> Result<CostTensor> {
    build_cost_tensor_capped(spec, sys, DEFAULT_CELL_CAP)
}

/// Build the dense cost tensor with an explicit cell cap.
pub fn build_cost_tensor_capped(
    spec: &CostSpec,
    sys: &MarginalSystem,
    cap: usize,
) -> Result<CostTensor> {
    spec.validate(sys.num_margins(), sys.dim())?;
    build_with(sys, spec.sign, cap, |points| spec.kind.eval(points))
}

/// Build a cost tensor from an arbitrary cell function — the escape hatch
/// for costs outside the serializable families. `f` receives one outcome
/// vector per margin and must return a finite value for every cell.
pub fn build_with(
    sys: &MarginalSystem,
    sign: Sign,
    cap: usize,
    mut f: impl FnMut(&[&[f64]]) -> f64,
) -> Result<CostTensor> {
    let shape = sys.shape();
    let cells = cell_count(&shape).ok_or_else(|| Error::CellCapExceeded {
        required: usize::MAX,
        cap,
    })?;
    if cells > cap {
        return Err(Error::CellCapExceeded {
            required: cells,
            cap,
        });
    }
    let k = sys.num_margins();
    let mut points: Vec<&[f64]> = (0..k).map(|m| sys.margin(m).point(0)).collect();
    let mut idx = MultiIndex::new(&shape);
    let flip = match sign {
        Sign::Minimize => 1.0,
        Sign::Maximize => -1.0,
    };
    let mut data = Vec::with_capacity(cells);
    loop {
        let ids = idx.indices();
        for m in 0..k {
            points[m] = sys.margin(m).point(ids[m]);
        }
        data.push(flip * f(&points));
        if idx.advance().is_none() {
            break;
        }
    }
    CostTensor::from_values(DenseTensor::from_vec(&shape, data)?)
}

/// The cost specification whose identified interval bounds the cross moment
/// `E[(Y_{j1}(2) - Y_{j1}(1)) * (Y_{j2}(2) - Y_{j2}(1))]` over couplings of
/// two arms (margin 1 and margin 2 of a two-margin system). Coordinates
/// `j1`, `j2` are 1-based and must be at most `dim`. With `j1 == j2` this
/// degenerates to the second moment of that coordinate's treatment effect.
pub fn covariance_cross_spec(dim: usize, j1: usize, j2: usize) -> Result<CostSpec> {
    if j1 == 0 || j2 == 0 || j1 > dim || j2 > dim {
        return Err(Error::InvalidSpec(format!(
            "coordinates ({j1},{j2}) out of range for dimension {dim}"
        )));
    }
    let n = 2 * dim;
    // Difference vectors u, v on the stacked space (margin 1 then margin 2):
    // u' z = Y_{j1}(2) - Y_{j1}(1), v' z = Y_{j2}(2) - Y_{j2}(1); the cross
    // product is z' sym(u v') z.
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    u[dim + (j1 - 1)] = 1.0;
    u[j1 - 1] = -1.0;
    v[dim + (j2 - 1)] = 1.0;
    v[j2 - 1] = -1.0;
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            q[i][j] = 0.5 * (u[i] * v[j] + v[i] * u[j]);
        }
    }
    Ok(CostSpec::new(CostKind::QuadraticGeneral(q)))
}

// ---- JSON form ---------------------------------------------------------

/// Wire format for [`CostSpec`]: `{"kind": ..., "sign": "min"|"max"}` with
/// exactly the parameter field its kind requires (`A`, `beta`, `Q`, or
/// `expr`). `sign` defaults to `"min"` when absent.
#[derive(Debug, Serialize, Deserialize)]
struct RawCostSpec {
    kind: String,
    #[serde(rename = "A", skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<Vec<f64>>,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    q: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expr: Option<String>,
    #[serde(default)]
    sign: Sign,
}

impl CostSpec {
    /// Parse the JSON wire format.
    pub fn from_json(json: &str) -> Result<Self> {
        let raw: RawCostSpec = serde_json::from_str(json)
            .map_err(|e| Error::InvalidSpec(format!("bad cost spec JSON: {e}")))?;
        let reject_params =
            |raw: &RawCostSpec, allowed: &str| -> Result<()> {
                let present = [
                    raw.a.is_some().then_some("A"),
                    raw.beta.is_some().then_some("beta"),
                    raw.q.is_some().then_some("Q"),
                    raw.expr.is_some().then_some("expr"),
                ];
                for field in present.into_iter().flatten() {
                    if field != allowed {
                        return Err(Error::InvalidSpec(format!(
                            "field '{field}' does not belong to kind '{}'",
                            raw.kind
                        )));
                    }
                }
                Ok(())
            };
        let kind = match raw.kind.as_str() {
            "mw2" => {
                reject_params(&raw, "")?;
                CostKind::Mw2
            }
            "qmw" => {
                reject_params(&raw, "A")?;
                CostKind::Qmw(raw.a.clone().ok_or_else(|| {
                    Error::InvalidSpec("kind 'qmw' requires field 'A'".into())
                })?)
            }
            "contrast" => {
                reject_params(&raw, "beta")?;
                CostKind::Contrast(raw.beta.clone().ok_or_else(|| {
                    Error::InvalidSpec("kind 'contrast' requires field 'beta'".into())
                })?)
            }
            "quadratic_general" => {
                reject_params(&raw, "Q")?;
                CostKind::QuadraticGeneral(raw.q.clone().ok_or_else(|| {
                    Error::InvalidSpec("kind 'quadratic_general' requires field 'Q'".into())
                })?)
            }
            "custom_expr" => {
                reject_params(&raw, "expr")?;
                let src = raw.expr.clone().ok_or_else(|| {
                    Error::InvalidSpec("kind 'custom_expr' requires field 'expr'".into())
                })?;
                CostKind::CustomExpr(CostExpr::parse(&src)?)
            }
            other => {
                return Err(Error::InvalidSpec(format!(
                    "unknown cost kind '{other}' (expected mw2, qmw, contrast, \
                     quadratic_general, or custom_expr)"
                )));
            }
        };
        Ok(CostSpec {
            kind,
            sign: raw.sign,
        })
    }

    /// Serialize to the JSON wire format.
    pub fn to_json(&self) -> String {
        let raw = match &self.kind {
            CostKind::Mw2 => RawCostSpec {
                kind: "mw2".into(),
                a: None,
                beta: None,
                q: None,
                expr: None,
                sign: self.sign,
            },
            CostKind::Qmw(a) => RawCostSpec {
                kind: "qmw".into(),
                a: Some(a.clone()),
                beta: None,
                q: None,
                expr: None,
                sign: self.sign,
            },
            CostKind::Contrast(beta) => RawCostSpec {
                kind: "contrast".into(),
                a: None,
                beta: Some(beta.clone()),
                q: None,
                expr: None,
                sign: self.sign,
            },
            CostKind::QuadraticGeneral(q) => RawCostSpec {
                kind: "quadratic_general".into(),
                a: None,
                beta: None,
                q: Some(q.clone()),
                expr: None,
                sign: self.sign,
            },
            CostKind::CustomExpr(e) => RawCostSpec {
                kind: "custom_expr".into(),
                a: None,
                beta: None,
                q: None,
                expr: Some(e.source().to_string()),
                sign: self.sign,
            },
        };
        serde_json::to_string(&raw).expect("cost spec serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DiscreteMarginal;
    use approx::assert_abs_diff_eq;

    fn uniform_system(supports: &[&[f64]]) -> MarginalSystem {
        MarginalSystem::new(
            supports
                .iter()
                .map(|s| DiscreteMarginal::empirical_1d(s).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn mw2_eval() {
        let a = [1.0];
        let b = [1.0];
        assert_abs_diff_eq!(CostKind::Mw2.eval(&[&a, &b]), 1.0);
        let c = [0.0];
        assert_abs_diff_eq!(CostKind::Mw2.eval(&[&a, &c]), 0.25);
    }

    #[test]
    fn qmw_all_ones_matches_mw2() {
        // A = 11'/K^2 reduces qmw to mw2.
        let k = 3;
        let a = vec![vec![1.0 / 9.0; k]; k];
        let qmw = CostKind::Qmw(a);
        let p1 = [1.0];
        let p2 = [1.0];
        let p3 = [1.0];
        let pts: Vec<&[f64]> = vec![&p1, &p2, &p3];
        assert_abs_diff_eq!(qmw.eval(&pts), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(qmw.eval(&pts), CostKind::Mw2.eval(&pts), epsilon = 1e-15);
        // Also on an asymmetric tuple with d = 2.
        let q1 = [1.0, -2.0];
        let q2 = [0.5, 3.0];
        let q3 = [-1.0, 0.25];
        let pts: Vec<&[f64]> = vec![&q1, &q2, &q3];
        let a = vec![vec![1.0 / 9.0; k]; k];
        assert_abs_diff_eq!(
            CostKind::Qmw(a).eval(&pts),
            CostKind::Mw2.eval(&pts),
            epsilon = 1e-14
        );
    }

    #[test]
    fn contrast_eval() {
        let beta = CostKind::Contrast(vec![1.0, -1.0, -1.0, 1.0]);
        let p: Vec<Vec<f64>> = vec![vec![2.0], vec![1.0], vec![1.0], vec![0.0]];
        let pts: Vec<&[f64]> = p.iter().map(|v| v.as_slice()).collect();
        assert_abs_diff_eq!(beta.eval(&pts), 0.0);
        let beta = CostKind::Contrast(vec![1.0, -0.5, -0.5]);
        let p: Vec<Vec<f64>> = vec![vec![3.0, 1.0], vec![2.0, 0.0], vec![0.0, 2.0]];
        let pts: Vec<&[f64]> = p.iter().map(|v| v.as_slice()).collect();
        // (3 - 1 - 0)^2 + (1 - 0 - 1)^2 = 4.
        assert_abs_diff_eq!(beta.eval(&pts), 4.0);
    }

    #[test]
    fn contrast_matches_quadratic_general() {
        // contrast(beta) == quadratic_general(Q) with Q = (beta beta') ⊗ I_d.
        let beta = vec![1.0, -0.5, 2.0];
        let d = 2;
        let k = beta.len();
        let n = k * d;
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..k {
            for j in 0..k {
                for c in 0..d {
                    q[i * d + c][j * d + c] = beta[i] * beta[j];
                }
            }
        }
        let p: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.25, -3.0]];
        let pts: Vec<&[f64]> = p.iter().map(|v| v.as_slice()).collect();
        assert_abs_diff_eq!(
            CostKind::Contrast(beta).eval(&pts),
            CostKind::QuadraticGeneral(q).eval(&pts),
            epsilon = 1e-13
        );
    }

    #[test]
    fn covariance_cross_spec_examples() {
        // d = 2, coordinates (1, 2): effects (1-0, 2-0) -> product 2.
        let spec = covariance_cross_spec(2, 1, 2).unwrap();
        let y1 = [0.0, 0.0];
        let y2 = [1.0, 2.0];
        assert_abs_diff_eq!(spec.kind.eval(&[&y1, &y2]), 2.0, epsilon = 1e-15);
        // Swapping coordinates leaves the product unchanged.
        let swapped = covariance_cross_spec(2, 2, 1).unwrap();
        assert_abs_diff_eq!(swapped.kind.eval(&[&y1, &y2]), 2.0, epsilon = 1e-15);
        // Degenerate pair (j, j): squared effect.
        let sq = covariance_cross_spec(2, 2, 2).unwrap();
        assert_abs_diff_eq!(sq.kind.eval(&[&y1, &y2]), 4.0, epsilon = 1e-15);
        // Out of range.
        assert!(covariance_cross_spec(2, 0, 1).is_err());
        assert!(covariance_cross_spec(2, 1, 3).is_err());
    }

    #[test]
    fn build_binary_mw2_tensor() {
        let sys = uniform_system(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let ct = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
        // Pre-shift cells {0, 0.25, 0.25, 1}; minimum already 0, so the
        // shift is zero and cells are stored as-is.
        assert_abs_diff_eq!(ct.shift(), 0.0);
        assert_abs_diff_eq!(ct.sup_norm(), 1.0);
        assert_eq!(ct.values().data(), &[0.0, 0.25, 0.25, 1.0]);
    }

    #[test]
    fn build_records_shift_for_positive_costs() {
        // Single-cell system at y = 1: mw2 cost 1, stored cell 0, shift -1.
        let sys = uniform_system(&[&[1.0], &[1.0]]);
        let ct = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
        assert_abs_diff_eq!(ct.shift(), -1.0);
        assert_abs_diff_eq!(ct.values().data()[0], 0.0);
        assert_abs_diff_eq!(ct.sup_norm(), 1.0);
    }

    #[test]
    fn build_maximize_negates_cells() {
        let sys = uniform_system(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let spec = CostSpec::with_sign(CostKind::Mw2, Sign::Maximize);
        let ct = build_cost_tensor(&spec, &sys).unwrap();
        // Negated cells {0, -0.25, -0.25, -1}; shift 1 lifts min to 0.
        assert_abs_diff_eq!(ct.shift(), 1.0);
        assert_eq!(ct.values().data(), &[1.0, 0.75, 0.75, 0.0]);
        assert_abs_diff_eq!(ct.sup_norm(), 1.0);
    }

    #[test]
    fn objective_undoes_shift() {
        let sys = uniform_system(&[&[1.0], &[1.0]]);
        let ct = build_cost_tensor(&CostSpec::new(CostKind::Mw2), &sys).unwrap();
        let coupling = DenseTensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        assert_abs_diff_eq!(ct.objective(&coupling), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cell_cap_enforced() {
        let sys = uniform_system(&[&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]]);
        let err = build_cost_tensor_capped(&CostSpec::new(CostKind::Mw2), &sys, 8);
        assert!(matches!(
            err,
            Err(Error::CellCapExceeded {
                required: 9,
                cap: 8
            })
        ));
    }

    #[test]
    fn validation_catches_bad_shapes() {
        let asym = CostSpec::new(CostKind::Qmw(vec![
            vec![1.0, 2.0],
            vec![0.0, 1.0],
        ]));
        assert!(asym.validate(2, 1).is_err());
        let wrong_len = CostSpec::new(CostKind::Contrast(vec![1.0, -1.0]));
        assert!(wrong_len.validate(3, 1).is_err());
        let wrong_q = CostSpec::new(CostKind::QuadraticGeneral(vec![vec![1.0]]));
        assert!(wrong_q.validate(2, 1).is_err());
        let bad_expr = CostSpec::new(CostKind::CustomExpr(
            CostExpr::parse("y[5][1]").unwrap(),
        ));
        assert!(bad_expr.validate(2, 1).is_err());
    }

    #[test]
    fn non_finite_cell_rejected() {
        let sys = uniform_system(&[&[0.0, 1.0], &[0.0, 1.0]]);
        // 1/y puts a division by zero at y = 0.
        let spec = CostSpec::new(CostKind::CustomExpr(
            CostExpr::parse("1 / y[1][1]").unwrap(),
        ));
        assert!(matches!(
            build_cost_tensor(&spec, &sys),
            Err(Error::NonFiniteCost { .. })
        ));
    }

    #[test]
    fn json_round_trips() {
        let specs = vec![
            CostSpec::new(CostKind::Mw2),
            CostSpec::with_sign(CostKind::Contrast(vec![1.0, -1.0]), Sign::Maximize),
            CostSpec::new(CostKind::Qmw(vec![vec![0.25; 2]; 2])),
            CostSpec::new(CostKind::QuadraticGeneral(vec![
                vec![1.0, 0.5],
                vec![0.5, 2.0],
            ])),
            CostSpec::new(CostKind::CustomExpr(
                CostExpr::parse("y[1][1] * y[2][1]").unwrap(),
            )),
        ];
        for spec in specs {
            let json = spec.to_json();
            let back = CostSpec::from_json(&json).unwrap();
            assert_eq!(back, spec, "round trip failed for {json}");
        }
    }

    #[test]
    fn json_parse_variants() {
        let s = CostSpec::from_json(r#"{"kind":"mw2"}"#).unwrap();
        assert_eq!(s.sign, Sign::Minimize);
        let s = CostSpec::from_json(r#"{"kind":"contrast","beta":[1,-1],"sign":"max"}"#).unwrap();
        assert_eq!(s.sign, Sign::Maximize);
        assert!(CostSpec::from_json(r#"{"kind":"nope"}"#).is_err());
        assert!(CostSpec::from_json(r#"{"kind":"qmw"}"#).is_err());
        // Parameter from the wrong family is rejected rather than ignored.
        assert!(CostSpec::from_json(r#"{"kind":"mw2","beta":[1.0]}"#).is_err());
        assert!(CostSpec::from_json(r#"{"kind":"custom_expr","expr":"y[1][1] +"}"#).is_err());
    }
}
