//! GICP distribution-to-distribution scan matching with explicit Gauss-Newton
//! linearization.
//!
//! For a source point `a` (covariance `C_a`) matched to target point `b`
//! (covariance `C_b`) under pose `T = (R, t)`, the residual is `d = b − T a`
//! weighted by `W = (C_b + R C_a Rᵀ)⁻¹`. Whitening with `W = L Lᵀ` gives
//! `e = Lᵀ d`, so that `½‖e‖²` is the per-point cost. Poses are perturbed on the
//! left, `T ← Exp(δ)·T`, with `δ` ordered rotation first. The per-point Jacobian
//! is then `J = Lᵀ [ [T a]ₓ  −I ]`, the local Hessian `JᵀJ`, and the global
//! Hessian the plain sum of the local ones.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, SymmetricEigen, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{Cov3, Point3, PointCloud, SpatialIndex};
use crate::par::{map_indexed, Execution};
use crate::pose::{hat, PoseSE3, Twist};

/// A target cloud with covariances and its kd-tree.
#[derive(Debug, Clone)]
pub struct TargetMap {
    covariances: Vec<Cov3>,
    index: SpatialIndex,
}

impl TargetMap {
    pub fn new(cloud: PointCloud) -> Result<Self> {
        let covariances = cloud
            .covariances()
            .ok_or_else(|| Error::param("target cloud has no covariances"))?
            .to_vec();
        if cloud.is_empty() {
            return Err(Error::param("target cloud is empty"));
        }
        Ok(Self {
            covariances,
            index: SpatialIndex::new(cloud.into_points()),
        })
    }

    pub fn points(&self) -> &[Point3] {
        self.index.points()
    }

    pub fn covariances(&self) -> &[Cov3] {
        &self.covariances
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// One matched source point's contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTerm {
    pub source: usize,
    pub target: usize,
    /// Mahalanobis weight `(C_b + R C_a Rᵀ)⁻¹`, fixed for this linearization.
    pub weight: Matrix3<f64>,
    /// Whitened residual `e`.
    pub residual: Vector3<f64>,
    /// `∂e/∂δ`.
    pub jacobian: Matrix3x6<f64>,
    /// `JᵀJ`.
    pub hessian: Matrix6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub pose: PoseSE3,
    pub h_global: Matrix6<f64>,
    pub b_global: Vector6<f64>,
    /// `½ Σ ‖e_i‖²`.
    pub cost: f64,
    pub terms: Vec<PointTerm>,
    pub source_len: usize,
}

impl LinearSystem {
    pub fn residual_norms(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.residual.norm()).collect()
    }

    /// Cost at `pose` keeping this system's correspondences and weights.
    pub fn fixed_cost(&self, source: &PointCloud, target: &TargetMap, pose: &PoseSE3) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let d = target.points()[t.target] - pose.transform_point(&source.points()[t.source]);
                0.5 * d.dot(&(t.weight * d))
            })
            .sum()
    }
}

/// Whitened residual of one correspondence at `pose`, with the whitening taken
/// from `weight`.
pub fn whitened_residual(a: &Point3, b: &Point3, weight: &Matrix3<f64>, pose: &PoseSE3) -> Vector3<f64> {
    let l = weight
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(Matrix3::zeros);
    l.transpose() * (b - pose.transform_point(a))
}

/// Builds the Gauss-Newton system of `source` against `target` at `pose`.
pub fn linearize(
    source: &PointCloud,
    target: &TargetMap,
    pose: &PoseSE3,
    max_corr_dist: f64,
    exec: Execution,
) -> Result<LinearSystem> {
    if !(max_corr_dist > 0.0) {
        return Err(Error::param("max correspondence distance must be positive"));
    }
    let src_cov = source
        .covariances()
        .ok_or_else(|| Error::param("source cloud has no covariances"))?;
    let rot = pose.rotation_matrix();
    let terms: Vec<Option<PointTerm>> = map_indexed(source.points(), exec, |i, a| {
        let q = pose.transform_point(a);
        let nn = target.index().nearest(&q).ok()?;
        if nn.distance > max_corr_dist {
            return None;
        }
        let b = target.points()[nn.id];
        let combined = target.covariances()[nn.id] + rot * src_cov[i] * rot.transpose();
        let weight = combined.try_inverse()?;
        let weight = (weight + weight.transpose()) * 0.5;
        let l = weight.cholesky()?.l();
        let lt = l.transpose();
        let mut d_dx = Matrix3x6::zeros();
        d_dx.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&q));
        d_dx.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));
        let jacobian = lt * d_dx;
        let residual = lt * (b - q);
        Some(PointTerm {
            source: i,
            target: nn.id,
            weight,
            residual,
            jacobian,
            hessian: jacobian.transpose() * jacobian,
        })
    });
    let terms: Vec<PointTerm> = terms.into_iter().flatten().collect();
    if terms.is_empty() {
        return Err(Error::DegenerateLinearization);
    }
    let mut h_global = Matrix6::zeros();
    let mut b_global = Vector6::zeros();
    let mut cost = 0.0;
    for t in &terms {
        h_global += t.hessian;
        b_global += t.jacobian.transpose() * t.residual;
        cost += 0.5 * t.residual.norm_squared();
    }
    Ok(LinearSystem {
        pose: *pose,
        h_global,
        b_global,
        cost,
        terms,
        source_len: source.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub max_corr_dist: f64,
    pub max_iterations: usize,
    /// Stop once `‖δ‖` falls below this.
    pub convergence_tol: f64,
    /// Damping is only engaged when the smallest Hessian eigenvalue is below this.
    pub degeneracy_threshold: f64,
    /// Levenberg damping added to the Hessian diagonal.
    pub damping: f64,
    pub exec: Execution,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            max_corr_dist: 2.0,
            max_iterations: 30,
            convergence_tol: 1e-6,
            degeneracy_threshold: 1e-6,
            damping: 1e-3,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    pub pose: PoseSE3,
    pub iterations: usize,
    pub converged: bool,
    pub last_update_norm: f64,
    pub system: LinearSystem,
}

fn solve_step(h: &Matrix6<f64>, b: &Vector6<f64>, lambda: f64) -> Option<Twist> {
    let damped = h + Matrix6::identity() * lambda;
    let step = match damped.cholesky() {
        Some(c) => c.solve(b),
        None => damped.lu().solve(b)?,
    };
    Some(-step)
}

/// Smallest eigenvalue of a symmetric 6×6 matrix.
pub fn min_eigenvalue(h: &Matrix6<f64>) -> f64 {
    SymmetricEigen::new(*h).eigenvalues.min()
}

/// Iterated Gauss-Newton alignment of `source` onto `target` starting at `init`.
pub fn gauss_newton_align(
    source: &PointCloud,
    target: &TargetMap,
    init: &PoseSE3,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    if source.is_empty() {
        return Err(Error::param("source cloud is empty"));
    }
    if target.is_empty() {
        return Err(Error::param("target cloud is empty"));
    }
    let mut pose = *init;
    let mut iterations = 0;
    let mut last_norm = f64::INFINITY;
    let mut converged = false;
    let mut system = linearize(source, target, &pose, cfg.max_corr_dist, cfg.exec)?;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut lambda = if min_eigenvalue(&system.h_global) < cfg.degeneracy_threshold {
            cfg.damping
        } else {
            0.0
        };
        // A step is accepted once it does not raise the cost on the current correspondences.
        let mut accepted = None;
        let current_cost = system.fixed_cost(source, target, &pose);
        for _ in 0..6 {
            let Some(delta) = solve_step(&system.h_global, &system.b_global, lambda) else {
                return Err(Error::Divergence {
                    last_pose: pose,
                    iterations,
                });
            };
            if !delta.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence {
                    last_pose: pose,
                    iterations,
                });
            }
            let candidate = pose.left_update(&delta);
            let new_cost = system.fixed_cost(source, target, &candidate);
            if new_cost <= current_cost {
                accepted = Some((delta, candidate));
                break;
            }
            lambda = if lambda == 0.0 {
                cfg.damping.max(1e-6 * system.h_global.diagonal().max())
            } else {
                lambda * 10.0
            };
        }
        let Some((delta, candidate)) = accepted else {
            // no descent left on these correspondences
            converged = true;
            last_norm = 0.0;
            break;
        };
        last_norm = delta.norm();
        pose = candidate;
        if last_norm < cfg.convergence_tol {
            converged = true;
            break;
        }
        system = linearize(source, target, &pose, cfg.max_corr_dist, cfg.exec)?;
    }
    if !pose.is_finite() {
        return Err(Error::Divergence {
            last_pose: *init,
            iterations,
        });
    }
    Ok(MatchResult {
        pose,
        iterations,
        converged,
        last_update_norm: last_norm,
        system,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{estimate_covariances, CovarianceConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scene(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point3> = (0..n)
            .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0)))
            .collect();
        estimate_covariances(&PointCloud::new(pts).unwrap(), &CovarianceConfig::default(), Execution::Sequential).unwrap()
    }

    #[test]
    fn identical_clouds_have_zero_gradient() {
        let cloud = random_scene(1, 150);
        let target = TargetMap::new(cloud.clone()).unwrap();
        let sys = linearize(&cloud, &target, &PoseSE3::identity(), 2.0, Execution::Sequential).unwrap();
        assert!(sys.b_global.norm() < 1e-9);
        assert!(sys.residual_norms().iter().all(|&r| r < 1e-9));
        let sum: Matrix6<f64> = sys.terms.iter().map(|t| t.hessian).sum();
        assert_eq!(sum, sys.h_global);
    }

    #[test]
    fn no_correspondences_is_degenerate() {
        let cloud = random_scene(2, 50);
        let target = TargetMap::new(cloud.clone()).unwrap();
        let far = PoseSE3::from_xyz_yaw(100.0, 0.0, 0.0, 0.0);
        assert!(matches!(linearize(&cloud, &target, &far, 2.0, Execution::Sequential), Err(Error::DegenerateLinearization)));
        assert!(linearize(&cloud, &target, &far, 0.0, Execution::Sequential).is_err());
    }

    #[test]
    fn self_alignment_is_fixed_point() {
        let cloud = random_scene(3, 200);
        let target = TargetMap::new(cloud.clone()).unwrap();
        let res = gauss_newton_align(&cloud, &target, &PoseSE3::identity(), &MatchConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 2);
        assert!(res.pose.translation.norm() < 1e-9 && res.pose.rotation.angle() < 1e-9);
    }

    #[test]
    fn empty_source_is_rejected() {
        let target = TargetMap::new(random_scene(4, 30)).unwrap();
        let empty = PointCloud::from_parts_unchecked(vec![], Some(vec![]));
        assert!(matches!(gauss_newton_align(&empty, &target, &PoseSE3::identity(), &MatchConfig::default()), Err(Error::Parameter(_))));
    }

    #[test]
    fn target_requires_covariances() {
        let cloud = PointCloud::new(vec![Point3::zeros()]).unwrap();
        assert!(TargetMap::new(cloud).is_err());
    }
}
