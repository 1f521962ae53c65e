//! Discrete marginal distributions and their construction from data.
//!
//! Each treatment arm contributes one marginal: a finitely supported
//! distribution over outcome vectors in `R^d`. Empirical marginals place
//! weight `1/n` on each observed outcome; weighted atoms arise from support
//! compression or user-supplied data. A [`MarginalSystem`] collects the `K`
//! arm marginals that jointly define a transport problem.
//!
//! Conventions: weights are strictly positive (anything below `1e-15` is
//! rejected as numerically indistinguishable from an empty atom) and sum to
//! one within `1e-12`. Duplicate sample points are kept as separate atoms —
//! couplings over them remain valid and collapsing would silently change
//! atom indices that callers may refer to.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Weight-sum tolerance for a valid probability vector.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Smallest admissible atom weight.
pub const MIN_WEIGHT: f64 = 1e-15;

/// A finitely supported distribution on `R^d`: `n` support points with
/// strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMarginal {
    /// Flat row-major support: point `i` occupies `points[i*d .. (i+1)*d]`.
    points: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
}

impl DiscreteMarginal {
    /// Build a marginal from explicit support points and weights.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySamples);
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidWeights(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: 1,
                found: 0,
            });
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    index: i,
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "support point {i} contains a non-finite coordinate"
                )));
            }
            flat.extend_from_slice(p);
        }
        validate_weights(&weights)?;
        Ok(DiscreteMarginal {
            points: flat,
            weights,
            dim,
        })
    }

    /// Empirical distribution of `samples`: weight `1/n` on every observed
    /// point. Duplicate points stay separate atoms.
    pub fn empirical_from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let n = samples.len();
        Self::new(samples.to_vec(), vec![1.0 / n as f64; n])
    }

    /// Empirical distribution of scalar samples (`d = 1`).
    pub fn empirical_1d(samples: &[f64]) -> Result<Self> {
        Self::empirical_from_samples(
            &samples.iter().map(|&v| vec![v]).collect::<Vec<_>>(),
        )
    }

    /// Number of support points.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Outcome dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Support point `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mean vector.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.len() {
            let p = self.point(i);
            for j in 0..self.dim {
                m[j] += self.weights[i] * p[j];
            }
        }
        m
    }

    /// Split into a mean-zero marginal and the removed mean vector. The
    /// returned marginal has every support point translated by `-mean`; the
    /// weights are untouched, so re-adding the mean reverses the operation
    /// exactly (up to floating-point rounding in the subtraction).
    pub fn center(&self) -> (DiscreteMarginal, Vec<f64>) {
        let mean = self.mean();
        let mut centered = self.clone();
        for i in 0..centered.len() {
            let base = i * centered.dim;
            for j in 0..centered.dim {
                centered.points[base + j] -= mean[j];
            }
        }
        (centered, mean)
    }

    /// Compress the support to at most `max_atoms` weighted atoms by
    /// quantile binning along the sort order of the first coordinate.
    /// Atoms falling in one bin merge into their weighted barycenter. Useful
    /// for keeping large 1-d empirical marginals below the dense-tensor cell
    /// cap; for quadratic costs the merge perturbs objective values by at
    /// most the within-bin spread squared.
    pub fn compress_to(&self, max_atoms: usize) -> Result<DiscreteMarginal> {
        if max_atoms == 0 {
            return Err(Error::InvalidArgument(
                "max_atoms must be positive".into(),
            ));
        }
        if self.len() <= max_atoms {
            return Ok(self.clone());
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.point(a)[0]
                .partial_cmp(&self.point(b)[0])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut points = Vec::with_capacity(max_atoms);
        let mut weights = Vec::with_capacity(max_atoms);
        let n = self.len();
        let mut start = 0usize;
        for bin in 0..max_atoms {
            // Even split of the sorted atoms into max_atoms contiguous bins.
            let end = ((bin + 1) * n) / max_atoms;
            if end <= start {
                continue;
            }
            let mut w = 0.0;
            let mut centroid = vec![0.0; self.dim];
            for &orig in &order[start..end] {
                let wi = self.weights[orig];
                w += wi;
                let p = self.point(orig);
                for j in 0..self.dim {
                    centroid[j] += wi * p[j];
                }
            }
            for c in centroid.iter_mut() {
                *c /= w;
            }
            points.push(centroid);
            weights.push(w);
            start = end;
        }
        // Renormalize away accumulated rounding so downstream validation
        // sees an exact probability vector.
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        DiscreteMarginal::new(points, weights)
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::InvalidWeights(format!("weight {i} is not finite")));
        }
        if w < MIN_WEIGHT {
            return Err(Error::InvalidWeights(format!(
                "weight {i} = {w:e} is below the minimum {MIN_WEIGHT:e}"
            )));
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL:e}"
        )));
    }
    Ok(())
}

/// The `K >= 2` arm marginals of one transport problem. All margins share a
/// common outcome dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSystem {
    margins: Vec<DiscreteMarginal>,
}

impl MarginalSystem {
    pub fn new(margins: Vec<DiscreteMarginal>) -> Result<Self> {
        if margins.len() < 2 {
            return Err(Error::TooFewMargins(margins.len()));
        }
        let d = margins[0].dim();
        for (k, m) in margins.iter().enumerate() {
            if m.dim() != d {
                return Err(Error::MixedDimensions {
                    index: k,
                    expected: d,
                    found: m.dim(),
                });
            }
        }
        Ok(MarginalSystem { margins })
    }

    /// Number of margins `K`.
    pub fn num_margins(&self) -> usize {
        self.margins.len()
    }

    /// Outcome dimension `d`.
    pub fn dim(&self) -> usize {
        self.margins[0].dim()
    }

    /// Support sizes `(n_1, ..., n_K)` — the cost-tensor shape.
    pub fn shape(&self) -> Vec<usize> {
        self.margins.iter().map(|m| m.len()).collect()
    }

    pub fn margin(&self, k: usize) -> &DiscreteMarginal {
        &self.margins[k]
    }

    /// Apply [`DiscreteMarginal::compress_to`] to every margin, bounding
    /// each support at `max_atoms`. Margins already small enough are kept
    /// as they are.
    pub fn compressed_to(&self, max_atoms: usize) -> Result<MarginalSystem> {
        let margins = self
            .margins
            .iter()
            .map(|m| m.compress_to(max_atoms))
            .collect::<Result<Vec<_>>>()?;
        MarginalSystem::new(margins)
    }

    pub fn margins(&self) -> &[DiscreteMarginal] {
        &self.margins
    }

    /// Center every margin; returns the centered system and the per-margin
    /// mean vectors.
    pub fn center(&self) -> (MarginalSystem, Vec<Vec<f64>>) {
        let mut centered = Vec::with_capacity(self.margins.len());
        let mut means = Vec::with_capacity(self.margins.len());
        for m in &self.margins {
            let (c, mean) = m.center();
            centered.push(c);
            means.push(mean);
        }
        (
            MarginalSystem { margins: centered },
            means,
        )
    }
}

/// Outcome rows of one arm as parsed from CSV.
#[derive(Debug, Clone)]
pub struct ArmData {
    pub label: String,
    pub outcomes: Vec<Vec<f64>>,
}

/// Parse an arm-labelled outcome CSV into per-arm sample lists.
///
/// Expected schema: a header row containing an `arm` column (string labels),
/// outcome columns `y1..yd` (decimal), and optionally a `unit` column which
/// is ignored. Outcome columns must be contiguous starting at `y1`. Rows
/// with missing or non-numeric outcomes are rejected with a row-numbered
/// error rather than silently dropped.
///
/// `arm_order` fixes the arm-to-margin mapping; with `None`, arms are
/// ordered lexicographically by label. Every label in `arm_order` must be
/// present in the file and vice versa.
pub fn load_arm_data(path: &Path, arm_order: Option<&[String]>) -> Result<Vec<ArmData>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut arm_col = None;
    let mut y_cols: Vec<(usize, usize)> = Vec::new(); // (outcome index j, column index)
    for (c, name) in headers.iter().enumerate() {
        if name == "arm" {
            arm_col = Some(c);
        } else if name == "unit" {
            // Optional unit identifier; ignored.
        } else if let Some(num) = name.strip_prefix('y') {
            let j: usize = num.parse().map_err(|_| {
                Error::Schema(format!("unrecognized column '{name}'"))
            })?;
            if j == 0 {
                return Err(Error::Schema("outcome columns start at y1".into()));
            }
            y_cols.push((j, c));
        } else {
            return Err(Error::Schema(format!("unrecognized column '{name}'")));
        }
    }
    let arm_col = arm_col.ok_or_else(|| Error::Schema("missing 'arm' column".into()))?;
    if y_cols.is_empty() {
        return Err(Error::Schema(
            "no outcome columns (expected y1..yd)".into(),
        ));
    }
    y_cols.sort();
    for (j, &(col_j, _)) in y_cols.iter().enumerate() {
        if col_j != j + 1 {
            return Err(Error::Schema(format!(
                "outcome columns must be contiguous y1..yd; missing y{}",
                j + 1
            )));
        }
    }
    let d = y_cols.len();

    let mut by_arm: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 2; // 1-based, counting the header row
        let label = record
            .get(arm_col)
            .ok_or_else(|| Error::Schema(format!("row {row}: missing arm label")))?
            .to_string();
        if label.is_empty() {
            return Err(Error::Schema(format!("row {row}: empty arm label")));
        }
        let mut y = Vec::with_capacity(d);
        for &(j, c) in &y_cols {
            let raw = record.get(c).unwrap_or("");
            if raw.is_empty() {
                return Err(Error::NonNumericOutcome {
                    row,
                    column: format!("y{j}"),
                    value: "<missing>".into(),
                });
            }
            let v: f64 = raw.parse().map_err(|_| Error::NonNumericOutcome {
                row,
                column: format!("y{j}"),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericOutcome {
                    row,
                    column: format!("y{j}"),
                    value: raw.to_string(),
                });
            }
            y.push(v);
        }
        by_arm.entry(label).or_default().push(y);
    }

    let ordered_labels: Vec<String> = match arm_order {
        Some(order) => {
            for label in order {
                if !by_arm.contains_key(label) {
                    return Err(Error::UnknownArm(label.clone()));
                }
            }
            let extra: Vec<_> = by_arm
                .keys()
                .filter(|l| !order.contains(l))
                .cloned()
                .collect();
            if !extra.is_empty() {
                return Err(Error::Schema(format!(
                    "arms {extra:?} present in file but absent from the arm ordering"
                )));
            }
            order.to_vec()
        }
        // BTreeMap iterates lexicographically, the documented default order.
        None => by_arm.keys().cloned().collect(),
    };

    Ok(ordered_labels
        .into_iter()
        .map(|label| {
            let outcomes = by_arm.remove(&label).expect("label checked present");
            ArmData { label, outcomes }
        })
        .collect())
}

/// Load a CSV of arm-labelled outcomes as a [`MarginalSystem`] of empirical
/// marginals (weight `1/n_k` per observation), plus the arm labels in margin
/// order. Requires at least two arms.
pub fn load_marginals(
    path: &Path,
    arm_order: Option<&[String]>,
) -> Result<(MarginalSystem, Vec<String>)> {
    let arms = load_arm_data(path, arm_order)?;
    if arms.len() < 2 {
        return Err(Error::TooFewMargins(arms.len()));
    }
    let mut labels = Vec::with_capacity(arms.len());
    let mut margins = Vec::with_capacity(arms.len());
    for arm in arms {
        labels.push(arm.label);
        margins.push(DiscreteMarginal::empirical_from_samples(&arm.outcomes)?);
    }
    Ok((MarginalSystem::new(margins)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    #[test]
    fn empirical_uniform_weights() {
        let m = DiscreteMarginal::empirical_from_samples(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.dim(), 1);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert_eq!(m.point(1), &[1.0]);
    }

    #[test]
    fn empirical_keeps_duplicate_atoms() {
        let m =
            DiscreteMarginal::empirical_from_samples(&[vec![0.0], vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(m.len(), 3);
        assert_abs_diff_eq!(m.weights()[0], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn singleton_point_mass() {
        let m = DiscreteMarginal::empirical_from_samples(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.weights(), &[1.0]);
        assert_eq!(m.point(0), &[1.0, 2.0]);
    }

    #[test]
    fn empty_and_ragged_rejected() {
        assert!(matches!(
            DiscreteMarginal::empirical_from_samples(&[]),
            Err(Error::EmptySamples)
        ));
        assert!(matches!(
            DiscreteMarginal::empirical_from_samples(&[vec![0.0], vec![0.0, 1.0]]),
            Err(Error::DimensionMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn weight_validation() {
        // Sum off by more than 1e-12.
        assert!(DiscreteMarginal::new(vec![vec![0.0], vec![1.0]], vec![0.6, 0.5]).is_err());
        // Tiny weight rejected.
        assert!(
            DiscreteMarginal::new(vec![vec![0.0], vec![1.0]], vec![1e-16, 1.0 - 1e-16]).is_err()
        );
        // Valid weighted marginal accepted.
        assert!(DiscreteMarginal::new(vec![vec![0.0], vec![1.0]], vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn center_symmetric_support_unchanged() {
        let m = DiscreteMarginal::empirical_1d(&[-1.0, 1.0]).unwrap();
        let (c, mean) = m.center();
        assert_abs_diff_eq!(mean[0], 0.0, epsilon = 1e-15);
        assert_eq!(c.point(0), &[-1.0]);
        assert_eq!(c.point(1), &[1.0]);
    }

    #[test]
    fn center_shifts_atoms() {
        let m = DiscreteMarginal::empirical_1d(&[0.0, 2.0]).unwrap();
        let (c, mean) = m.center();
        assert_abs_diff_eq!(mean[0], 1.0, epsilon = 1e-15);
        assert_eq!(c.point(0), &[-1.0]);
        assert_eq!(c.point(1), &[1.0]);
    }

    #[test]
    fn center_weighted_support() {
        let m = DiscreteMarginal::new(
            vec![vec![1.0], vec![2.0], vec![3.0]],
            vec![0.5, 0.25, 0.25],
        )
        .unwrap();
        let (c, mean) = m.center();
        assert_abs_diff_eq!(mean[0], 1.75, epsilon = 1e-15);
        assert_abs_diff_eq!(c.point(0)[0], -0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(c.point(1)[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(c.point(2)[0], 1.25, epsilon = 1e-15);
    }

    #[test]
    fn center_mean_is_zero_after() {
        let m = DiscreteMarginal::new(
            vec![vec![0.4, -2.0], vec![7.0, 3.5], vec![-1.0, 0.25]],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let (c, _) = m.center();
        for v in c.mean() {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn compress_preserves_mean_and_mass() {
        let samples: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let m = DiscreteMarginal::empirical_1d(&samples).unwrap();
        let c = m.compress_to(10).unwrap();
        assert_eq!(c.len(), 10);
        assert_abs_diff_eq!(c.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.mean()[0], m.mean()[0], epsilon = 1e-10);
    }

    #[test]
    fn compress_noop_when_small() {
        let m = DiscreteMarginal::empirical_1d(&[1.0, 2.0]).unwrap();
        let c = m.compress_to(10).unwrap();
        assert_eq!(c, m);
    }

    #[test]
    fn system_requires_two_margins_same_dim() {
        let a = DiscreteMarginal::empirical_1d(&[0.0]).unwrap();
        let b = DiscreteMarginal::empirical_from_samples(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            MarginalSystem::new(vec![a.clone()]),
            Err(Error::TooFewMargins(1))
        ));
        assert!(matches!(
            MarginalSystem::new(vec![a.clone(), b]),
            Err(Error::MixedDimensions { index: 1, .. })
        ));
        let sys = MarginalSystem::new(vec![a.clone(), a]).unwrap();
        assert_eq!(sys.num_margins(), 2);
        assert_eq!(sys.shape(), vec![1, 1]);
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_two_arm_csv() {
        let f = write_csv(
            "unit,arm,y1\n\
             1,control,0.5\n\
             2,control,1.5\n\
             3,treated,2.0\n\
             4,treated,3.0\n",
        );
        let (sys, labels) = load_marginals(f.path(), None).unwrap();
        assert_eq!(labels, vec!["control".to_string(), "treated".to_string()]);
        assert_eq!(sys.shape(), vec![2, 2]);
        assert_eq!(sys.margin(0).weights(), &[0.5, 0.5]);
        assert_eq!(sys.margin(1).point(0), &[2.0]);
    }

    #[test]
    fn load_respects_arm_order() {
        let f = write_csv(
            "arm,y1\n\
             a,0.0\n\
             b,1.0\n",
        );
        let order = vec!["b".to_string(), "a".to_string()];
        let (_, labels) = load_marginals(f.path(), Some(&order)).unwrap();
        assert_eq!(labels, order);
    }

    #[test]
    fn load_unknown_arm_label() {
        let f = write_csv("arm,y1\na,0.0\nb,1.0\n");
        let order = vec!["a".to_string(), "c".to_string()];
        assert!(matches!(
            load_marginals(f.path(), Some(&order)),
            Err(Error::UnknownArm(l)) if l == "c"
        ));
    }

    #[test]
    fn load_extra_arm_not_in_order() {
        let f = write_csv("arm,y1\na,0.0\nb,1.0\nc,2.0\n");
        let order = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            load_marginals(f.path(), Some(&order)),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn load_missing_outcome_columns() {
        let f = write_csv("arm\na\nb\n");
        assert!(matches!(
            load_marginals(f.path(), None),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn load_non_numeric_outcome() {
        let f = write_csv("arm,y1\na,0.0\nb,oops\n");
        assert!(matches!(
            load_marginals(f.path(), None),
            Err(Error::NonNumericOutcome { row: 3, .. })
        ));
    }

    #[test]
    fn load_single_arm_rejected() {
        let f = write_csv("arm,y1\na,0.0\na,1.0\n");
        assert!(matches!(
            load_marginals(f.path(), None),
            Err(Error::TooFewMargins(1))
        ));
    }

    #[test]
    fn load_multivariate_outcomes() {
        let f = write_csv(
            "arm,y1,y2\n\
             t,1.0,2.0\n\
             c,0.0,0.0\n\
             t,3.0,4.0\n\
             c,1.0,1.0\n",
        );
        let (sys, labels) = load_marginals(f.path(), None).unwrap();
        assert_eq!(labels, vec!["c".to_string(), "t".to_string()]);
        assert_eq!(sys.dim(), 2);
        assert_eq!(sys.margin(1).point(0), &[1.0, 2.0]);
    }

    #[test]
    fn load_noncontiguous_outcome_columns() {
        let f = write_csv("arm,y1,y3\na,0.0,1.0\nb,1.0,2.0\n");
        assert!(matches!(
            load_marginals(f.path(), None),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn load_uniform_weights_per_arm_sizes() {
        // Unequal arm sizes: weights are 1/n_k within each arm.
        let mut content = String::from("arm,y1\n");
        for i in 0..5 {
            content.push_str(&format!("a,{i}\n"));
        }
        for i in 0..3 {
            content.push_str(&format!("b,{i}\n"));
        }
        let f = write_csv(&content);
        let (sys, _) = load_marginals(f.path(), None).unwrap();
        assert_abs_diff_eq!(sys.margin(0).weights()[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(sys.margin(1).weights()[0], 1.0 / 3.0, epsilon = 1e-15);
    }
}
