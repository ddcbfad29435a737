//! PCA against a dense symmetric eigensolver.

use ipnas_core::pca::{covariance, mean, Pca, PcaError};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Anisotropic scales keep the leading eigenvalues separated.
    (0..n)
        .map(|_| {
            (0..d)
                .map(|j| rng.gen_range(-1.0..1.0) * (d - j) as f64 * 10.0 + 128.0)
                .collect()
        })
        .collect()
}

fn oracle(points: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>, f64) {
    let d = points[0].len();
    let cov = covariance(points, &mean(points));
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &cov));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (values, vectors, eig.eigenvalues.sum())
}

#[test]
fn matches_dense_eigendecomposition() {
    for seed in 0..5 {
        let points = random_points(500, 18, seed);
        let fit = Pca::fit(&points, 2).unwrap();
        let (values, vectors, total) = oracle(&points);
        for k in 0..2 {
            let ratio = fit.explained_variance_ratio()[k];
            assert!(
                (ratio - values[k] / total).abs() < 1e-6,
                "seed {seed} pc{k}"
            );
            let cos: f64 = fit.components()[k]
                .iter()
                .zip(&vectors[k])
                .map(|(a, b)| a * b)
                .sum();
            assert!(
                (cos.abs() - 1.0).abs() < 1e-6,
                "seed {seed} pc{k} cos {cos}"
            );
        }
    }
}

#[test]
fn isotropic_data_still_gives_orthonormal_axes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points: Vec<Vec<f64>> = (0..300)
        .map(|_| (0..6).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let fit = Pca::fit(&points, 2).unwrap();
    let c = fit.components();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    assert!((dot(&c[0], &c[0]) - 1.0).abs() < 1e-9);
    assert!((dot(&c[1], &c[1]) - 1.0).abs() < 1e-9);
    assert!(dot(&c[0], &c[1]).abs() < 1e-9);
    let (values, _, total) = oracle(&points);
    // Explained variance is within the oracle's top-2 span.
    let sum: f64 = fit.explained_variance_ratio().iter().sum();
    assert!(sum <= (values[0] + values[1]) / total + 1e-6);
}

#[test]
fn degenerate_inputs() {
    assert_eq!(
        Pca::fit(&vec![vec![3.0; 18]; 10], 2),
        Err(PcaError::Degenerate)
    );
    assert!(matches!(
        Pca::fit(&[vec![1.0]], 1),
        Err(PcaError::TooFewPoints { .. })
    ));
    assert!(matches!(
        Pca::fit(&[vec![1.0, 2.0], vec![1.0]], 1),
        Err(PcaError::Dimension { .. })
    ));
}
