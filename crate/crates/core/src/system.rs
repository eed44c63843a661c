//! Finite-dimensional damped systems `z' = A z - B B* z` in a weighted inner
//! product.
//!
//! A model is a triple of dense matrices `(A, B, G)` with `G` symmetric
//! positive definite. The Gram matrix defines the state inner product
//! `<x, y>_G = x^T G y`, the energy `E(z) = 1/2 z^T G z`, and the feedback
//! adjoint `B* = B^T G` (so that `<B v, z>_G = <v, B* z>` holds exactly).
//! The generator is expected to be G-skew-adjoint, `A^T G + G A = 0`; this is
//! reported, not enforced, because deliberately broken generators are useful
//! for negative tests.
//!
//! Nothing here assumes a particular discretization. The wave and beam
//! builders in [`crate::models`] produce `SystemModel` values whose Gram
//! blocks encode the physical energy of the underlying PDE.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Relative tolerance on the skewness residual `||A^T G + G A||_F`.
pub const TOL_SKEW: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("generator must be square, got {rows}x{cols}")]
    NonSquareGenerator { rows: usize, cols: usize },
    #[error("gram matrix must be square, got {rows}x{cols}")]
    NonSquareGram { rows: usize, cols: usize },
    #[error("dimension mismatch: A is {n}x{n}, B is {b_rows}x{b_cols}, G is {g}x{g}")]
    DimensionMismatch {
        n: usize,
        b_rows: usize,
        b_cols: usize,
        g: usize,
    },
    #[error("model must have at least one state dimension")]
    EmptyState,
    #[error("matrix `{which}` contains a non-finite entry")]
    NonFinite { which: &'static str },
    #[error("gram matrix is not symmetric positive definite")]
    GramNotSpd,
    #[error("state is bound to model `{state}`, expected `{model}`")]
    WrongModel { state: String, model: String },
    #[error("state has length {got}, model `{model}` has dimension {want}")]
    WrongDimension {
        got: usize,
        want: usize,
        model: String,
    },
    #[error("state contains a non-finite entry")]
    NonFiniteState,
}

/// State vector bound to the model it conforms to.
///
/// The binding is by label: operations reject states built for a different
/// model, which catches the classic mistake of feeding a coarse-grid vector
/// to a refined model.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    coords: DVector<f64>,
    model_label: String,
}

impl StateVector {
    pub(crate) fn from_parts(coords: DVector<f64>, model_label: String) -> Self {
        StateVector {
            coords,
            model_label,
        }
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn model_label(&self) -> &str {
        &self.model_label
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Outcome of [`SystemModel::validate`].
#[derive(Clone, Debug)]
pub struct ValidationReport {
    /// `||A^T G + G A||_F`.
    pub skew_residual: f64,
    /// Whether the residual passes `TOL_SKEW * (1 + ||G A||_F)`.
    pub skew_pass: bool,
    /// Always true for a constructed model; kept so reports read standalone.
    pub gram_spd: bool,
    /// Number of feedback channels (columns of B).
    pub channels: usize,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.skew_pass && self.gram_spd
    }
}

/// Dense model `z' = A z - B B* z` with Gram matrix `G`.
#[derive(Clone)]
pub struct SystemModel {
    label: String,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    g: DMatrix<f64>,
    chol_g: Cholesky<f64, Dyn>,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("channels", &self.channels())
            .finish()
    }
}

impl SystemModel {
    /// Builds a model, checking shapes, finiteness, and that `G` admits a
    /// Cholesky factorization. Skewness of `A` is *not* required here; see
    /// [`SystemModel::validate`].
    pub fn new(
        label: impl Into<String>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        g: DMatrix<f64>,
    ) -> Result<Self, ModelError> {
        if a.nrows() != a.ncols() {
            return Err(ModelError::NonSquareGenerator {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if g.nrows() != g.ncols() {
            return Err(ModelError::NonSquareGram {
                rows: g.nrows(),
                cols: g.ncols(),
            });
        }
        let n = a.nrows();
        if n == 0 {
            return Err(ModelError::EmptyState);
        }
        if b.nrows() != n || g.nrows() != n || b.ncols() == 0 {
            return Err(ModelError::DimensionMismatch {
                n,
                b_rows: b.nrows(),
                b_cols: b.ncols(),
                g: g.nrows(),
            });
        }
        for (name, m) in [("A", &a), ("B", &b), ("G", &g)] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::NonFinite { which: name });
            }
        }
        let chol_g = Cholesky::new(g.clone()).ok_or(ModelError::GramNotSpd)?;
        Ok(Self {
            label: label.into(),
            a,
            b,
            g,
            chol_g,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Feedback channel count `m` (columns of B).
    pub fn channels(&self) -> usize {
        self.b.ncols()
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn feedback(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Cholesky factorization of the Gram matrix, computed once at build time.
    pub fn gram_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol_g
    }

    /// Wraps raw coordinates as a state bound to this model.
    pub fn state(&self, coords: DVector<f64>) -> Result<StateVector, ModelError> {
        if coords.len() != self.dim() {
            return Err(ModelError::WrongDimension {
                got: coords.len(),
                want: self.dim(),
                model: self.label.clone(),
            });
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFiniteState);
        }
        Ok(StateVector {
            coords,
            model_label: self.label.clone(),
        })
    }

    pub fn state_from_fn(
        &self,
        mut f: impl FnMut(usize) -> f64,
    ) -> Result<StateVector, ModelError> {
        self.state(DVector::from_fn(self.dim(), |i, _| f(i)))
    }

    pub fn zero_state(&self) -> StateVector {
        StateVector {
            coords: DVector::zeros(self.dim()),
            model_label: self.label.clone(),
        }
    }

    /// Checks that `z` was built for this model.
    pub fn conforming<'z>(&self, z: &'z StateVector) -> Result<&'z DVector<f64>, ModelError> {
        if z.model_label != self.label {
            return Err(ModelError::WrongModel {
                state: z.model_label.clone(),
                model: self.label.clone(),
            });
        }
        if z.coords.len() != self.dim() {
            return Err(ModelError::WrongDimension {
                got: z.coords.len(),
                want: self.dim(),
                model: self.label.clone(),
            });
        }
        Ok(&z.coords)
    }

    pub fn g_inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.g * y))
    }

    pub fn g_norm(&self, x: &DVector<f64>) -> f64 {
        self.g_inner(x, x).max(0.0).sqrt()
    }

    /// Energy `E(z) = 1/2 <z, z>_G`.
    pub fn energy(&self, z: &StateVector) -> Result<f64, ModelError> {
        let coords = self.conforming(z)?;
        Ok(self.energy_raw(coords))
    }

    pub fn energy_raw(&self, z: &DVector<f64>) -> f64 {
        0.5 * self.g_inner(z, z)
    }

    /// Observation `B* z = B^T G z`, a vector in the channel space.
    pub fn apply_bstar(&self, z: &StateVector) -> Result<DVector<f64>, ModelError> {
        let coords = self.conforming(z)?;
        Ok(self.apply_bstar_raw(coords))
    }

    pub fn apply_bstar_raw(&self, z: &DVector<f64>) -> DVector<f64> {
        self.b.tr_mul(&(&self.g * z))
    }

    pub fn apply_b(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.b * v
    }

    pub fn apply_a(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.a * z
    }

    /// Damped generator `M = A - B B*` as a dense matrix.
    pub fn damped_generator(&self) -> DMatrix<f64> {
        let bstar = self.b.tr_mul(&self.g); // m x n
        &self.a - &self.b * bstar
    }

    /// Skewness and SPD report; `skew_pass` uses the relative criterion
    /// `||A^T G + G A||_F <= TOL_SKEW * (1 + ||G A||_F)`.
    pub fn validate(&self) -> ValidationReport {
        let ga = &self.g * &self.a;
        let resid = (self.a.tr_mul(&self.g) + &ga).norm();
        let scale = 1.0 + ga.norm();
        ValidationReport {
            skew_residual: resid,
            skew_pass: resid <= TOL_SKEW * scale,
            gram_spd: true,
            channels: self.channels(),
        }
    }
}

/// Free-function form of [`SystemModel::validate`].
pub fn validate_model(model: &SystemModel) -> ValidationReport {
    model.validate()
}
