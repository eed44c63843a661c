//! Cached direct solvers for the two implicit stages.
//!
//! The midpoint stage needs `(I - c M) x = rhs` with `M = A` or
//! `M = A - B B*` and `c = dt/2`; the viscosity stage needs
//! `(I - dt^3 A^2) x = rhs`. Time stepping reuses the same shift for the
//! whole run, so each solver factorizes once at construction and only
//! performs triangular solves afterwards.
//!
//! The viscosity matrix is G-selfadjoint and positive: for G-skew `A`,
//! `G (I - dt^3 A^2) = G + dt^3 A^T G A` is symmetric positive definite.
//! Solving `(G + dt^3 A^T G A) x = G rhs` by Cholesky therefore inherits the
//! energy inner product; the midpoint matrix is merely invertible and gets
//! LU with partial pivoting.
//!
//! Every solve is verified against `TOL_SOLVE_REL`; on failure one step of
//! iterative refinement runs before giving up.

use crate::system::{ModelError, StateVector, SystemModel};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use thiserror::Error;

/// Relative residual bound `||K x - rhs|| <= TOL_SOLVE_REL * ||rhs||`.
pub const TOL_SOLVE_REL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("shift must be positive and finite, got {c}")]
    InvalidShift { c: f64 },
    #[error("time step must be positive and finite, got {dt}")]
    InvalidStep { dt: f64 },
    #[error("stage matrix is singular to working precision")]
    Singular,
    #[error("solve residual {achieved:.3e} exceeds {bound:.3e} even after refinement")]
    ResidualTooLarge { achieved: f64, bound: f64 },
    #[error("right-hand side contains a non-finite entry")]
    NonFiniteRhs,
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_finite_vec(v: &DVector<f64>) -> Result<(), SolveError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SolveError::NonFiniteRhs);
    }
    Ok(())
}

/// One refinement pass shared by both solvers. `apply` evaluates the exact
/// stage matrix, `solve` reuses the cached factorization.
fn refine(
    x: &mut DVector<f64>,
    rhs: &DVector<f64>,
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    solve: impl Fn(&DVector<f64>) -> Option<DVector<f64>>,
) -> Result<(), SolveError> {
    let bound = TOL_SOLVE_REL * rhs.norm();
    let resid = (rhs - apply(x)).norm();
    if resid <= bound || rhs.norm() == 0.0 {
        return Ok(());
    }
    let correction = solve(&(rhs - apply(x))).ok_or(SolveError::Singular)?;
    *x += correction;
    let resid = (rhs - apply(x)).norm();
    if resid <= bound {
        Ok(())
    } else {
        Err(SolveError::ResidualTooLarge {
            achieved: resid,
            bound,
        })
    }
}

/// LU-backed solver for the midpoint stage matrix `I - c M`.
pub struct ShiftedSolver {
    matrix: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    model_label: String,
    dim: usize,
    c: f64,
    damped: bool,
}

impl ShiftedSolver {
    pub fn new(model: &SystemModel, c: f64, damped: bool) -> Result<Self, SolveError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(SolveError::InvalidShift { c });
        }
        let m = if damped {
            model.damped_generator()
        } else {
            model.generator().clone()
        };
        let matrix = DMatrix::identity(model.dim(), model.dim()) - c * m;
        let lu = LU::new(matrix.clone());
        // nalgebra's LU does not fail on singular input; reject here so the
        // caller never sees NaN states.
        if lu.determinant() == 0.0 || !lu.determinant().is_finite() {
            return Err(SolveError::Singular);
        }
        Ok(Self {
            matrix,
            lu,
            model_label: model.label().to_string(),
            dim: model.dim(),
            c,
            damped,
        })
    }

    pub fn shift(&self) -> f64 {
        self.c
    }

    pub fn damped(&self) -> bool {
        self.damped
    }

    pub fn solve_raw(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, SolveError> {
        check_finite_vec(rhs)?;
        let mut x = self.lu.solve(rhs).ok_or(SolveError::Singular)?;
        refine(
            &mut x,
            rhs,
            |v| &self.matrix * v,
            |r| self.lu.solve(r),
        )?;
        Ok(x)
    }

    /// Column-block solve used when propagating a whole basis at once.
    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, SolveError> {
        let mut x = self.lu.solve(rhs).ok_or(SolveError::Singular)?;
        let bound = TOL_SOLVE_REL * rhs.norm();
        let resid = (rhs - &self.matrix * &x).norm();
        if resid > bound && rhs.norm() > 0.0 {
            let correction = self
                .lu
                .solve(&(rhs - &self.matrix * &x))
                .ok_or(SolveError::Singular)?;
            x += correction;
            let resid = (rhs - &self.matrix * &x).norm();
            if resid > bound {
                return Err(SolveError::ResidualTooLarge {
                    achieved: resid,
                    bound,
                });
            }
        }
        Ok(x)
    }

    fn label_check(&self, model: &SystemModel) -> bool {
        model.label() == self.model_label && model.dim() == self.dim
    }
}

/// Cholesky-backed solver for the viscosity stage matrix `I - dt^3 A^2`.
pub struct ViscositySolver {
    chol: Cholesky<f64, Dyn>,
    gram: DMatrix<f64>,
    a: DMatrix<f64>,
    dt3: f64,
    model_label: String,
    dim: usize,
}

impl ViscositySolver {
    pub fn new(model: &SystemModel, dt: f64) -> Result<Self, SolveError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolveError::InvalidStep { dt });
        }
        let dt3 = dt.powi(3);
        let a = model.generator().clone();
        let ga = model.gram() * &a;
        let mut k = model.gram() + dt3 * a.tr_mul(&ga);
        // Symmetrize away the last few ulps so Cholesky sees an exactly
        // symmetric matrix.
        k = 0.5 * (&k + k.transpose());
        let chol = Cholesky::new(k).ok_or(SolveError::Singular)?;
        Ok(Self {
            chol,
            gram: model.gram().clone(),
            a,
            dt3,
            model_label: model.label().to_string(),
            dim: model.dim(),
        })
    }

    fn apply_stage(&self, x: &DVector<f64>) -> DVector<f64> {
        x - self.dt3 * (&self.a * (&self.a * x))
    }

    pub fn solve_raw(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, SolveError> {
        check_finite_vec(rhs)?;
        let mut x = self.chol.solve(&(&self.gram * rhs));
        refine(
            &mut x,
            rhs,
            |v| self.apply_stage(v),
            |r| Some(self.chol.solve(&(&self.gram * r))),
        )?;
        Ok(x)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, SolveError> {
        let mut x = self.chol.solve(&(&self.gram * rhs));
        let apply = |m: &DMatrix<f64>| m - self.dt3 * (&self.a * (&self.a * m));
        let bound = TOL_SOLVE_REL * rhs.norm();
        let resid = (rhs - apply(&x)).norm();
        if resid > bound && rhs.norm() > 0.0 {
            x += self.chol.solve(&(&self.gram * (rhs - apply(&x))));
            let resid = (rhs - apply(&x)).norm();
            if resid > bound {
                return Err(SolveError::ResidualTooLarge {
                    achieved: resid,
                    bound,
                });
            }
        }
        Ok(x)
    }

    fn label_check(&self, model: &SystemModel) -> bool {
        model.label() == self.model_label && model.dim() == self.dim
    }
}

/// Solves `(I - c M) x = rhs` for a single right-hand side, factoring on the
/// spot. Time-stepping code should hold a [`ShiftedSolver`] instead.
pub fn solve_shifted(
    model: &SystemModel,
    c: f64,
    rhs: &StateVector,
    with_damping: bool,
) -> Result<StateVector, SolveError> {
    let coords = model.conforming(rhs)?;
    let solver = ShiftedSolver::new(model, c, with_damping)?;
    debug_assert!(solver.label_check(model));
    let x = solver.solve_raw(coords)?;
    Ok(model.state(x)?)
}

/// Solves `(I - dt^3 A^2) x = rhs`, factoring on the spot.
pub fn solve_viscosity(
    model: &SystemModel,
    dt: f64,
    rhs: &StateVector,
) -> Result<StateVector, SolveError> {
    let coords = model.conforming(rhs)?;
    let solver = ViscositySolver::new(model, dt)?;
    debug_assert!(solver.label_check(model));
    let x = solver.solve_raw(coords)?;
    Ok(model.state(x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn oracle2() -> SystemModel {
        SystemModel::new(
            "oracle2",
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn shifted_conservative_frozen_value() {
        let m = oracle2();
        let rhs = m.state(DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let x = solve_shifted(&m, 1.0, &rhs, false).unwrap();
        assert_abs_diff_eq!(x.coords()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x.coords()[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn shifted_damped_frozen_value() {
        let m = oracle2();
        let rhs = m.state(DVector::from_vec(vec![0.0, 2.0])).unwrap();
        let x = solve_shifted(&m, 1.0, &rhs, true).unwrap();
        assert_abs_diff_eq!(x.coords()[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x.coords()[1], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn viscosity_frozen_value() {
        // A^2 = -I, so the stage matrix is (1 + dt^3) I = 9 I at dt = 2.
        let m = oracle2();
        let rhs = m.state(DVector::from_vec(vec![9.0, 0.0])).unwrap();
        let x = solve_viscosity(&m, 2.0, &rhs).unwrap();
        assert_abs_diff_eq!(x.coords()[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x.coords()[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn invalid_shift_rejected() {
        let m = oracle2();
        let rhs = m.state(DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(matches!(
            solve_shifted(&m, 0.0, &rhs, false),
            Err(SolveError::InvalidShift { .. })
        ));
        assert!(matches!(
            solve_shifted(&m, -0.5, &rhs, true),
            Err(SolveError::InvalidShift { .. })
        ));
        assert!(matches!(
            solve_viscosity(&m, f64::NAN, &rhs),
            Err(SolveError::InvalidStep { .. })
        ));
    }

    #[test]
    fn singular_stage_detected() {
        // A = I is not skew; with c = 1 the stage matrix vanishes.
        let m = SystemModel::new(
            "degenerate",
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        assert!(matches!(
            ShiftedSolver::new(&m, 1.0, false),
            Err(SolveError::Singular)
        ));
    }

    #[test]
    fn non_finite_rhs_rejected() {
        let m = oracle2();
        let solver = ShiftedSolver::new(&m, 0.5, false).unwrap();
        let rhs = DVector::from_vec(vec![1.0, f64::INFINITY]);
        assert!(matches!(
            solver.solve_raw(&rhs),
            Err(SolveError::NonFiniteRhs)
        ));
    }

    /// Random G-skew model for property-style checks: A = G^{-1} W with W
    /// antisymmetric makes A^T G + G A = W^T + W = 0.
    fn random_skew_model(n: usize, seed: u64) -> SystemModel {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let w = &r - r.transpose();
        let q = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let g = &q * q.transpose() + DMatrix::identity(n, n);
        let a = Cholesky::new(g.clone()).unwrap().solve(&w);
        let b = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        SystemModel::new(format!("rand{n}-{seed}"), a, b, g).unwrap()
    }

    #[test]
    fn cayley_map_is_g_isometry() {
        for seed in 0..5 {
            let n = 3 + (seed as usize % 4);
            let m = random_skew_model(n, seed);
            assert!(m.validate().skew_residual <= 1e-12 * (1.0 + m.gram().norm()));
            let c = 0.37;
            let solver = ShiftedSolver::new(&m, c, false).unwrap();
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed + 99);
            for _ in 0..4 {
                let z = DVector::from_fn(n, |_, _| {
                    rand::Rng::random_range(&mut rng, -1.0..1.0)
                });
                let rhs = &z + c * (m.generator() * &z);
                let w = solver.solve_raw(&rhs).unwrap();
                let before = m.g_norm(&z);
                let after = m.g_norm(&w);
                assert!(
                    (after - before).abs() <= 1e-10 * before.max(1.0),
                    "isometry broke: {before} vs {after}"
                );
            }
        }
    }

    #[test]
    fn resolvent_and_viscosity_contract() {
        for seed in 10..14 {
            let n = 4;
            let m = random_skew_model(n, seed);
            let shifted = ShiftedSolver::new(&m, 0.8, true).unwrap();
            let visc = ViscositySolver::new(&m, 0.9).unwrap();
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            for _ in 0..4 {
                let rhs = DVector::from_fn(n, |_, _| {
                    rand::Rng::random_range(&mut rng, -1.0..1.0)
                });
                let x = shifted.solve_raw(&rhs).unwrap();
                assert!(m.g_norm(&x) <= m.g_norm(&rhs) * (1.0 + 1e-10));
                let y = visc.solve_raw(&rhs).unwrap();
                assert!(m.g_norm(&y) <= m.g_norm(&rhs) * (1.0 + 1e-10));
            }
        }
    }
}
