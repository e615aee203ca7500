//! Range-only position estimation, one filter per robot.
//!
//! Each robot corrects its own estimate from noisy ranges to its neighbors,
//! linearizing the range model around its estimate and the estimates its
//! neighbors broadcast in the previous round. A few anchors additionally
//! receive absolute position fixes, which pins down the translation and
//! rotation the ranges alone cannot observe.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A neighbor's broadcast estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEstimate {
    pub id: usize,
    pub position: Vec<f64>,
}

impl NeighborEstimate {
    pub fn new(id: usize, position: Vec<f64>) -> Self {
        NeighborEstimate { id, position }
    }
}

/// One robot's estimate `x̂_i` and covariance `P_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub node: usize,
    pub estimate: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Range measurement variance `σ²` (m²).
    pub measurement_noise: f64,
    pub is_anchor: bool,
}

impl FilterState {
    /// Isotropic prior `P = variance·I`.
    pub fn new(node: usize, estimate: Vec<f64>, variance: f64, measurement_noise: f64, is_anchor: bool) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidParams(format!("prior variance must be positive, got {variance}")));
        }
        if !(measurement_noise > 0.0 && measurement_noise.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "measurement variance must be positive, got {measurement_noise}"
            )));
        }
        let d = estimate.len();
        if !(2..=3).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        Ok(FilterState {
            node,
            covariance: DMatrix::identity(d, d) * variance,
            estimate,
            measurement_noise,
            is_anchor,
        })
    }

    pub fn dim(&self) -> usize {
        self.estimate.len()
    }

    /// Adds `amount·I` to the covariance (motion between updates).
    pub fn inflate(&mut self, amount: f64) {
        for c in 0..self.dim() {
            self.covariance[(c, c)] += amount;
        }
    }
}

fn offset(node: usize, xi: &[f64], nb: &NeighborEstimate) -> Result<(Vec<f64>, f64)> {
    if nb.position.len() != xi.len() {
        return Err(Error::DimensionMismatch { expected: xi.len(), got: nb.position.len() });
    }
    let diff: Vec<f64> = xi.iter().zip(&nb.position).map(|(a, b)| a - b).collect();
    let len = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len <= 0.0 {
        return Err(Error::Coincident(node.min(nb.id), node.max(nb.id)));
    }
    Ok((diff, len))
}

/// `ẑ_i`: predicted range to each neighbor, in the given order.
pub fn predict_ranges(node: usize, estimate: &[f64], neighbors: &[NeighborEstimate]) -> Result<DVector<f64>> {
    let ranges = neighbors
        .iter()
        .map(|nb| offset(node, estimate, nb).map(|(_, len)| len))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(ranges))
}

/// `F_i = ∂ẑ_i/∂x̂_i`; row `k` is the unit vector from neighbor `k` to `i`.
pub fn range_jacobian(node: usize, estimate: &[f64], neighbors: &[NeighborEstimate]) -> Result<DMatrix<f64>> {
    let d = estimate.len();
    let mut f = DMatrix::zeros(neighbors.len(), d);
    for (k, nb) in neighbors.iter().enumerate() {
        let (diff, len) = offset(node, estimate, nb)?;
        for c in 0..d {
            f[(k, c)] = diff[c] / len;
        }
    }
    Ok(f)
}

/// Linear measurement update with observation matrix `h`, residual
/// `innovation` and diagonal noise `noise`.
fn measurement_update(state: &FilterState, h: &DMatrix<f64>, innovation: &DVector<f64>, noise: f64) -> Result<FilterState> {
    let p = &state.covariance;
    let pht = p * h.transpose();
    let mut s = h * &pht;
    for k in 0..s.nrows() {
        s[(k, k)] += noise;
    }
    let chol = s.cholesky().ok_or(Error::SingularInnovation(state.node))?;
    // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ
    let gain = chol.solve(&pht.transpose()).transpose();
    let correction = &gain * innovation;
    let mut next = state.clone();
    for (x, dx) in next.estimate.iter_mut().zip(correction.iter()) {
        *x += dx;
    }
    let updated = p - &gain * h * p;
    next.covariance = (&updated + updated.transpose()) * 0.5;
    Ok(next)
}

/// Range update `x̂ ← x̂ + K(z − ẑ)`, `P ← P − KFP`,
/// `K = PFᵀ(FPFᵀ + C)⁻¹` with `C = σ²I`.
///
/// `ranges[k]` is the measured distance to `neighbors[k]`. With no
/// neighbors the state is returned unchanged.
pub fn filter_update(state: &FilterState, ranges: &[f64], neighbors: &[NeighborEstimate]) -> Result<FilterState> {
    if ranges.len() != neighbors.len() {
        return Err(Error::DimensionMismatch { expected: neighbors.len(), got: ranges.len() });
    }
    if neighbors.is_empty() {
        return Ok(state.clone());
    }
    let predicted = predict_ranges(state.node, &state.estimate, neighbors)?;
    let f = range_jacobian(state.node, &state.estimate, neighbors)?;
    let innovation = DVector::from_column_slice(ranges) - predicted;
    measurement_update(state, &f, &innovation, state.measurement_noise)
}

/// Absolute position fix for an anchor: identity observation with variance
/// `anchor_noise` per axis.
pub fn anchor_update(state: &FilterState, fix: &[f64], anchor_noise: f64) -> Result<FilterState> {
    if !state.is_anchor {
        return Err(Error::NotAnchor(state.node));
    }
    let d = state.dim();
    if fix.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: fix.len() });
    }
    if !(anchor_noise > 0.0 && anchor_noise.is_finite()) {
        return Err(Error::InvalidParams(format!("anchor variance must be positive, got {anchor_noise}")));
    }
    let innovation = DVector::from_iterator(d, fix.iter().zip(&state.estimate).map(|(z, x)| z - x));
    measurement_update(state, &DMatrix::identity(d, d), &innovation, anchor_noise)
}

/// Largest distance between an estimate and the truth.
pub fn max_position_error(estimates: &[Vec<f64>], truth: &[f64]) -> f64 {
    let d = estimates.first().map_or(1, Vec::len);
    estimates
        .iter()
        .zip(truth.chunks(d))
        .map(|(e, x)| e.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Largest discrepancy between corresponding pairwise distances of the
/// estimates and the truth; blind to any common rigid motion.
pub fn congruence_error(estimates: &[Vec<f64>], truth: &[f64]) -> f64 {
    let d = estimates.first().map_or(1, Vec::len);
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for i in 0..estimates.len() {
        for j in (i + 1)..estimates.len() {
            let est = dist(&estimates[i], &estimates[j]);
            let tru = dist(&truth[i * d..(i + 1) * d], &truth[j * d..(j + 1) * d]);
            worst = worst.max((est - tru).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb(id: usize, p: &[f64]) -> NeighborEstimate {
        NeighborEstimate::new(id, p.to_vec())
    }

    #[test]
    fn predicted_range_is_the_distance() {
        let z = predict_ranges(0, &[0.0, 0.0], &[nb(1, &[3.0, 4.0])]).unwrap();
        assert_eq!(z.as_slice(), &[5.0]);
        assert_eq!(predict_ranges(0, &[0.0, 0.0], &[]).unwrap().len(), 0);
    }

    #[test]
    fn jacobian_row_for_a_neighbor_due_east() {
        // x̂_i at the origin, neighbor to the east: moving i east shortens
        // the range, so the row is (x̂_i − x̂_j)/‖·‖ = (−1, 0)
        let f = range_jacobian(0, &[0.0, 0.0], &[nb(1, &[2.0, 0.0])]).unwrap();
        assert_eq!(f.row(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0]);
        // seen from the neighbor's side
        let f = range_jacobian(1, &[2.0, 0.0], &[nb(0, &[0.0, 0.0])]).unwrap();
        assert_eq!(f.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);
    }

    #[test]
    fn coincident_estimates_are_rejected() {
        assert_eq!(predict_ranges(4, &[1.0, 1.0], &[nb(2, &[1.0, 1.0])]), Err(Error::Coincident(2, 4)));
        assert!(range_jacobian(4, &[1.0, 1.0], &[nb(2, &[1.0, 1.0])]).is_err());
    }

    #[test]
    fn zero_innovation_leaves_the_estimate_and_shrinks_p() {
        let s = FilterState::new(0, vec![0.0, 0.0], 4.0, 0.01, false).unwrap();
        let nbs = [nb(1, &[3.0, 0.0]), nb(2, &[0.0, 5.0])];
        let next = filter_update(&s, &[3.0, 5.0], &nbs).unwrap();
        assert_eq!(next.estimate, s.estimate);
        assert!(next.covariance.trace() < s.covariance.trace());
    }

    #[test]
    fn no_neighbors_is_a_no_op() {
        let s = FilterState::new(0, vec![1.0, 2.0], 1.0, 0.01, false).unwrap();
        assert_eq!(filter_update(&s, &[], &[]).unwrap(), s);
    }

    #[test]
    fn measurement_count_must_match() {
        let s = FilterState::new(0, vec![0.0, 0.0], 1.0, 0.01, false).unwrap();
        assert!(matches!(filter_update(&s, &[1.0], &[]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn anchor_fix_pulls_the_estimate() {
        let s = FilterState::new(0, vec![1.0, 1.0], 1.0, 0.01, true).unwrap();
        let next = anchor_update(&s, &[0.0, 0.0], 1e-9).unwrap();
        assert!(next.estimate.iter().all(|v| v.abs() < 1e-8));
        assert!(next.covariance.trace() < s.covariance.trace());
    }

    #[test]
    fn repeated_fixes_converge_to_the_fix() {
        let mut s = FilterState::new(0, vec![5.0, -3.0], 1.0, 0.01, true).unwrap();
        for _ in 0..200 {
            s = anchor_update(&s, &[1.0, 2.0], 0.5).unwrap();
        }
        // posterior mean after k fixes: weight of the prior is σ²/(σ² + kP₀)
        let prior_weight = 0.5 / (0.5 + 200.0);
        assert!((s.estimate[0] - (1.0 + prior_weight * 4.0)).abs() < 1e-9);
        assert!((s.estimate[1] - (2.0 - prior_weight * 5.0)).abs() < 1e-9);
    }

    #[test]
    fn anchor_update_on_a_regular_robot_fails() {
        let s = FilterState::new(3, vec![0.0, 0.0], 1.0, 0.01, false).unwrap();
        assert_eq!(anchor_update(&s, &[0.0, 0.0], 1.0), Err(Error::NotAnchor(3)));
    }

    #[test]
    fn invalid_priors_are_rejected() {
        assert!(FilterState::new(0, vec![0.0, 0.0], 0.0, 0.01, false).is_err());
        assert!(FilterState::new(0, vec![0.0, 0.0], 1.0, 0.0, false).is_err());
        assert!(FilterState::new(0, vec![0.0], 1.0, 1.0, false).is_err());
    }

    #[test]
    fn inflation_adds_to_the_diagonal() {
        let mut s = FilterState::new(0, vec![0.0, 0.0, 0.0], 1.0, 0.01, false).unwrap();
        s.inflate(0.5);
        assert_eq!(s.covariance, DMatrix::identity(3, 3) * 1.5);
    }

    #[test]
    fn error_metrics() {
        let truth = [0.0, 0.0, 3.0, 0.0];
        let shifted = vec![vec![1.0, 1.0], vec![4.0, 1.0]];
        assert!((max_position_error(&shifted, &truth) - 2f64.sqrt()).abs() < 1e-12);
        assert!(congruence_error(&shifted, &truth) < 1e-12);
    }
}
