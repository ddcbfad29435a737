//! Principal components of particle positions by power iteration with
//! deflation, for projecting trajectories onto two dimensions.

use rand::{Rng, SeedableRng};

use crate::trajectory::TrajectoryRecord;

pub const TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 10_000;
/// Fixed seed of the power-iteration start vectors, so projections are
/// reproducible.
const START_SEED: u64 = 0x5EED_0FCA;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PcaError {
    #[error("covariance is degenerate (all points coincide)")]
    Degenerate,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point {index} has {got} coordinates, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("requested {requested} components from {dimension}-dimensional data")]
    Components { requested: usize, dimension: usize },
    #[error("non-finite coordinate in point {0}")]
    NonFinite(usize),
}

/// Mean-centred principal axes of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    mean: Vec<f64>,
    /// Unit eigenvectors, largest eigenvalue first.
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    total_variance: f64,
}

impl Pca {
    /// Fits the top `k` components of the sample covariance (divisor n-1).
    pub fn fit(points: &[Vec<f64>], k: usize) -> Result<Self, PcaError> {
        if points.len() < 2 {
            return Err(PcaError::TooFewPoints {
                needed: 2,
                got: points.len(),
            });
        }
        let d = points[0].len();
        if k == 0 || k > d {
            return Err(PcaError::Components {
                requested: k,
                dimension: d,
            });
        }
        for (index, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(PcaError::Dimension {
                    index,
                    expected: d,
                    got: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(PcaError::NonFinite(index));
            }
        }
        let mean = mean(points);
        let cov = covariance(points, &mean);
        let total_variance: f64 = (0..d).map(|i| cov[i * d + i]).sum();
        let scale = cov.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if total_variance <= f64::EPSILON * scale.max(1.0) * d as f64 || scale == 0.0 {
            return Err(PcaError::Degenerate);
        }
        let (components, eigenvalues) = power_iteration_top_k(&cov, d, k);
        Ok(Self {
            mean,
            components,
            eigenvalues,
            total_variance,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// Fraction of total variance carried by each component.
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|l| l / self.total_variance)
            .collect()
    }

    /// Coordinates of `point` along each component.
    pub fn project(&self, point: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(point.iter().zip(&self.mean))
                    .map(|(ci, (x, m))| ci * (x - m))
                    .sum()
            })
            .collect()
    }
}

pub fn mean(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let mut m = vec![0.0; d];
    for p in points {
        for (mi, x) in m.iter_mut().zip(p) {
            *mi += x;
        }
    }
    m.iter_mut().for_each(|x| *x /= points.len() as f64);
    m
}

/// Row-major `d × d` sample covariance about `mean`.
pub fn covariance(points: &[Vec<f64>], mean: &[f64]) -> Vec<f64> {
    let d = mean.len();
    let mut cov = vec![0.0; d * d];
    let mut centred = vec![0.0; d];
    for p in points {
        for ((c, x), m) in centred.iter_mut().zip(p).zip(mean) {
            *c = x - m;
        }
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += centred[i] * centred[j];
            }
        }
    }
    let denom = (points.len() - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    cov
}

fn mat_vec(a: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    a.chunks(d)
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalise(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalise(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, bi)| *x -= p * bi);
    }
}

/// Top `k` eigenpairs of the symmetric row-major `d × d` matrix `a`.
///
/// Each vector is found by power iteration on the deflated matrix
/// `A - Σ λ_j v_j v_jᵀ`, re-orthogonalised against earlier vectors every
/// step. Iteration stops when the vector moves less than [`TOLERANCE`] or
/// after [`MAX_ITERATIONS`]. Signs are fixed so the largest-magnitude entry
/// is positive. Exhausted directions (eigenvalue 0) still yield an
/// orthonormal vector.
pub fn power_iteration_top_k(a: &[f64], d: usize, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(START_SEED);
    let mut deflated = a.to_vec();
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for _ in 0..k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        orthogonalise(&mut v, &vectors);
        normalise(&mut v);
        let mut lambda = 0.0;
        for iteration in 0..MAX_ITERATIONS {
            let mut next = mat_vec(&deflated, d, &v);
            orthogonalise(&mut next, &vectors);
            if normalise(&mut next) <= f64::EPSILON * scale * d as f64 {
                // Remaining spectrum is numerically zero; keep v as the axis.
                lambda = 0.0;
                break;
            }
            let step = next
                .iter()
                .zip(&v)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            v = next;
            lambda = dot(&v, &mat_vec(a, d, &v));
            if step < TOLERANCE {
                break;
            }
            if iteration + 1 == MAX_ITERATIONS {
                log::warn!(
                    "power iteration stopped at {MAX_ITERATIONS} iterations (last step {step:e})"
                );
            }
        }
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..d {
            for j in 0..d {
                deflated[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        values.push(lambda.max(0.0));
        vectors.push(v);
    }
    (vectors, values)
}

/// One row of the plot-ready projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub pc1: f64,
    pub pc2: f64,
    pub fitness: f64,
    pub generation: usize,
    pub is_gbest: bool,
}

/// Two-component projection of every trajectory record.
pub fn project_trajectory(
    records: &[TrajectoryRecord],
) -> Result<(Pca, Vec<ProjectionRow>), PcaError> {
    if records.len() < 3 {
        return Err(PcaError::TooFewPoints {
            needed: 3,
            got: records.len(),
        });
    }
    let points: Vec<Vec<f64>> = records.iter().map(|r| r.position.clone()).collect();
    let pca = Pca::fit(&points, 2)?;
    let rows = records
        .iter()
        .map(|r| {
            let p = pca.project(&r.position);
            ProjectionRow {
                pc1: p[0],
                pc2: p[1],
                fitness: r.fitness,
                generation: r.generation,
                is_gbest: r.is_gbest,
            }
        })
        .collect();
    Ok((pca, rows))
}

pub fn write_projection_csv<W: std::io::Write>(
    writer: W,
    rows: &[ProjectionRow],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["pc1", "pc2", "fitness", "generation", "is_gbest"])?;
    for r in rows {
        w.write_record([
            r.pc1.to_string(),
            r.pc2.to_string(),
            r.fitness.to_string(),
            r.generation.to_string(),
            u8::from(r.is_gbest).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
