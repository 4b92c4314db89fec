//! Heat-kernel graph Laplacian and its generalized spectrum `L f = λ D f`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Largest point count accepted by the dense eigensolver.
pub const MAX_POINTS: usize = 5000;

/// Symmetric matrix of pairwise Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(DMatrix<f64>);

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn pairwise_distances(points: &PointSet) -> Result<DistanceMatrix> {
    let k = points.len();
    if k < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: k });
    }
    let mut q = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let d = points.distance(i, j);
            q[(i, j)] = d;
            q[(j, i)] = d;
        }
    }
    Ok(DistanceMatrix(q))
}

/// Squared heat-kernel bandwidth: the `p·K`-th smallest of all `K²`
/// entries of `q` (diagonal zeros and both symmetric copies included),
/// squared. The rank is clamped to `K²`.
pub fn select_bandwidth(q: &DistanceMatrix, p: usize) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidConfig("bandwidth rank p must be at least 1".into()));
    }
    let k = q.len();
    let mut entries: Vec<f64> = q.0.iter().copied().collect();
    let rank = (p * k).clamp(1, entries.len());
    let (_, nth, _) = entries.select_nth_unstable_by(rank - 1, f64::total_cmp);
    let radius = *nth;
    if radius <= 0.0 {
        return Err(Error::DegenerateBandwidth { rank });
    }
    Ok(radius * radius)
}

/// `W_ij = exp(-Q_ij² / t)`, diagonal included.
pub fn heat_kernel_weights(q: &DistanceMatrix, t: f64) -> Result<DMatrix<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidConfig(format!("heat kernel bandwidth must be positive, got {t}")));
    }
    Ok(q.0.map(|d| (-d * d / t).exp()))
}

/// `L = D - W` with `D` the diagonal of row sums of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPair {
    pub laplacian: DMatrix<f64>,
    pub degrees: DVector<f64>,
}

pub fn graph_laplacian(w: &DMatrix<f64>) -> LaplacianPair {
    let degrees = DVector::from_iterator(w.nrows(), w.row_iter().map(|r| r.sum()));
    let mut laplacian = -w.clone();
    for i in 0..w.nrows() {
        laplacian[(i, i)] += degrees[i];
    }
    LaplacianPair { laplacian, degrees }
}

/// Ascending generalized eigenvalues with L∞-normalized eigenvectors
/// (column `i` pairs with `eigenvalues[i]`). Each eigenvector's
/// largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i).iter().copied().collect()
    }

    /// Largest `‖L f − λ D f‖∞` over all eigenpairs.
    pub fn max_residual(&self, lp: &LaplacianPair) -> f64 {
        let lf = &lp.laplacian * &self.eigenvectors;
        let mut worst = 0.0f64;
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            for i in 0..self.eigenvectors.nrows() {
                let r = lf[(i, j)] - lambda * lp.degrees[i] * self.eigenvectors[(i, j)];
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}

/// Solves `L f = λ D f` through the normalized Laplacian
/// `D^{-1/2} L D^{-1/2}` and maps eigenvectors back with `D^{-1/2}`.
pub fn generalized_eigs(lp: &LaplacianPair) -> Result<Spectrum> {
    let k = lp.degrees.len();
    if k > MAX_POINTS {
        return Err(Error::InvalidConfig(format!("{k} points exceeds the dense solver cap of {MAX_POINTS}")));
    }
    if lp.degrees.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidConfig("graph degrees must be positive".into()));
    }
    let inv_sqrt = lp.degrees.map(|d| 1.0 / d.sqrt());
    let mut normalized = DMatrix::from_fn(k, k, |i, j| lp.laplacian[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    normalized = (&normalized + normalized.transpose()) * 0.5;

    let max_iter = 64 * k.max(16);
    let eig = SymmetricEigen::try_new(normalized, f64::EPSILON, max_iter)
        .ok_or(Error::ConvergenceFailure { max_iter })?;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let mut eigenvectors = DMatrix::zeros(k, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &src) in order.iter().enumerate() {
        eigenvalues.push(eig.eigenvalues[src]);
        let mut f = eig.eigenvectors.column(src).component_mul(&inv_sqrt);
        // Largest magnitude entry, lowest index on ties.
        let (imax, peak) = f
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &v)| if v.abs() > bv.abs() { (i, v) } else { (bi, bv) });
        debug_assert!(peak != 0.0 || imax == 0);
        if peak != 0.0 {
            f /= peak;
        }
        eigenvectors.set_column(col, &f);
    }
    Ok(Spectrum { eigenvalues, eigenvectors })
}

/// Runs distance, bandwidth, kernel, Laplacian and eigensolver in sequence.
/// Returns the bandwidth `t` alongside the spectrum.
pub fn point_spectrum(points: &PointSet, p: usize) -> Result<(f64, Spectrum)> {
    let q = pairwise_distances(points)?;
    let t = select_bandwidth(&q, p)?;
    let w = heat_kernel_weights(&q, t)?;
    let lp = graph_laplacian(&w);
    Ok((t, generalized_eigs(&lp)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(xs: &[f64]) -> PointSet {
        PointSet::from_rows(&xs.iter().map(|&x| vec![x, 0.0]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn three_four_five() {
        let q = pairwise_distances(&line(&[0.0]).select(&[true])).unwrap_err();
        assert_eq!(q, Error::TooFewPoints { needed: 2, got: 1 });
        let pts = PointSet::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let q = pairwise_distances(&pts).unwrap();
        assert_eq!(q.get(0, 1), 5.0);
        assert_eq!(q.get(1, 0), 5.0);
        assert_eq!(q.get(0, 0), 0.0);
    }

    #[test]
    fn duplicated_points_have_zero_distance() {
        let q = pairwise_distances(&line(&[1.5, 1.5, 2.0])).unwrap();
        assert_eq!(q.get(0, 1), 0.0);
    }

    #[test]
    fn bandwidth_by_hand_enumeration() {
        // Sorted entries: [0,0,0,1,1,1,1,2,2]
        let q = pairwise_distances(&line(&[0.0, 1.0, 2.0])).unwrap();
        assert_eq!(select_bandwidth(&q, 2).unwrap(), 1.0);
        assert_eq!(select_bandwidth(&q, 1), Err(Error::DegenerateBandwidth { rank: 3 }));
        assert_eq!(select_bandwidth(&q, 3).unwrap(), 4.0);
        // Rank clamps to K².
        assert_eq!(select_bandwidth(&q, 50).unwrap(), 4.0);
    }

    #[test]
    fn kernel_values() {
        let q = pairwise_distances(&line(&[0.0, 2.0])).unwrap();
        let w = heat_kernel_weights(&q, 1.0).unwrap();
        assert_eq!(w[(0, 0)], 1.0);
        assert_relative_eq!(w[(0, 1)], (-4.0f64).exp(), max_relative = 1e-15);
        let w = heat_kernel_weights(&q, 4.0).unwrap();
        assert_relative_eq!(w[(0, 1)], 0.36787944117144233, max_relative = 1e-15);
        assert!(heat_kernel_weights(&q, 0.0).is_err());
    }

    #[test]
    fn laplacian_small_cases() {
        let lp = graph_laplacian(&DMatrix::from_element(2, 2, 1.0));
        assert_eq!(lp.degrees.as_slice(), &[2.0, 2.0]);
        assert_eq!(lp.laplacian, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let lp = graph_laplacian(&DMatrix::identity(3, 3));
        assert_eq!(lp.degrees.as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(lp.laplacian, DMatrix::zeros(3, 3));
    }

    #[test]
    fn two_by_two_spectrum() {
        let lp = graph_laplacian(&DMatrix::from_element(2, 2, 1.0));
        let s = generalized_eigs(&lp).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-15);
        assert_relative_eq!(s.eigenvalues[1], 1.0, epsilon = 1e-14);
        // constant vector, normalized to +1
        assert_relative_eq!(s.eigenvectors[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(s.eigenvectors[(1, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eigenvectors_are_sign_and_scale_normalized() {
        let pts = PointSet::from_rows(
            &(0..20).map(|i| vec![(i as f64 * 0.7).sin() * 3.0, (i as f64 * 1.3).cos()]).collect::<Vec<_>>(),
        )
        .unwrap();
        let (_, s) = point_spectrum(&pts, 4).unwrap();
        for j in 0..s.len() {
            let col = s.eigenvectors.column(j);
            let amax = col.amax();
            assert_relative_eq!(amax, 1.0, epsilon = 1e-12);
            assert!(col.iter().any(|&v| (v - 1.0).abs() < 1e-12));
        }
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }
}
