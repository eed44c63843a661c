//! Numerical certificates for the stabilization hypotheses.
//!
//! Exponential decay of the damped system is equivalent to a chain of
//! frequency-domain and observability conditions on the conservative part,
//! and every link of that chain is checkable in finite dimensions:
//!
//! * the Hautus form `||(i w I - A) y||_G^2 + ||B* y||_Y^2` stays positive
//!   on the unit G-sphere, uniformly in `w`;
//! * the transfer function `H(lambda) = B* (lambda I - A)^{-1} B` is
//!   bounded on vertical lines `Re lambda = beta > 0`;
//! * `B*` is bounded on the graph of `A` with constant `C_B`;
//! * observability Gramians of the conservative, viscous, and filtered
//!   propagators have positive smallest G-eigenvalue;
//! * the forced viscous scheme maps forcing sequences to observation
//!   sequences with a step-size-stable gain;
//! * the damped generator `A - B B*` has negative spectral abscissa.
//!
//! Hautus values are computed by two independent routes: a dense Hermitian
//! eigensolve of the form itself, and (for one feedback channel) the secular
//! equation of the rank-one update `diag((w - mu_j)^2) + beta beta^H` in the
//! modal basis. The scan uses the secular route when it applies and the
//! dense route otherwise; tests hold the two against each other.

use crate::schemes::{ForcedStepper, SimulateError};
use crate::solvers::{ShiftedSolver, SolveError, ViscositySolver};
use crate::spectral::{decompose, ModalDecomposition, ModeClass, SpectralError};
use crate::system::{ModelError, SystemModel};
use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Hard ceiling on Gramian propagation length.
pub const GRAMIAN_STEP_BUDGET: usize = 1_000_000;

/// Grid density of [`hautus_scan_auto`], in points per unit frequency.
pub const HAUTUS_POINTS_PER_UNIT: f64 = 8.0;

#[derive(Debug, Error)]
pub enum CertificationError {
    #[error("frequency grid needs at least 3 points, got {0}")]
    GridTooSmall(usize),
    #[error("frequency range [{min}, {max}] is empty or non-finite")]
    BadRange { min: f64, max: f64 },
    #[error("beta must be positive and finite, got {0}")]
    BadBeta(f64),
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("discrete Gramians need T/dt >= 2, got T = {t_final}, dt = {dt}")]
    WindowTooShort { t_final: f64, dt: f64 },
    #[error("propagation needs {steps} steps, over the budget of {budget}")]
    StepBudget { steps: usize, budget: usize },
    #[error("filtered Gramian requires a delta threshold")]
    MissingDelta,
    #[error("delta must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("no modes with |mu| <= {threshold}; the filtered subspace is empty")]
    EmptySubspace { threshold: f64 },
    #[error("need at least one forcing sample")]
    NoSamples,
    #[error("forcing sample {0} has zero norm")]
    ZeroForcing(usize),
    #[error("forced state became non-finite at step {0}")]
    NonFiniteState(usize),
    #[error("resolvent solve failed at omega = {omega}")]
    SingularResolvent { omega: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

// ---------------------------------------------------------------------------
// Hautus scan
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct HautusScanReport {
    /// Sorted scan frequencies, eigenfrequencies injected.
    pub omega_grid: Vec<f64>,
    /// `kappa(w)` per grid point; nonnegative.
    pub kappa: Vec<f64>,
    pub kappa_min: f64,
    pub argmin_omega: f64,
}

/// Modal data shared by the secular Hautus route and the transfer
/// cross-check: signed frequencies and squared feedback amplitudes
/// `|<phi_j, B e_c>_G|^2` per complex mode.
struct ModalWeights {
    mu: Vec<f64>,
    /// One weight vector per feedback channel.
    weights: Vec<Vec<f64>>,
}

fn modal_weights(model: &SystemModel, decomp: &ModalDecomposition) -> ModalWeights {
    let dim = decomp.dim();
    let channels = model.channels();
    // analysis row j dotted with B column c gives <mode_j, B e_c>_G.
    let coeff = decomp.modes().transpose() * model.gram() * model.feedback();
    let mut weights = vec![vec![0.0; dim]; channels];
    for (j, class) in decomp.classes().iter().enumerate() {
        for c in 0..channels {
            let va = coeff[(j, c)];
            weights[c][j] = match class {
                ModeClass::Zero => va * va,
                ModeClass::PairPlus { partner } | ModeClass::PairMinus { partner } => {
                    let vb = coeff[(*partner, c)];
                    0.5 * (va * va + vb * vb)
                }
            };
        }
    }
    ModalWeights {
        mu: decomp.frequencies().to_vec(),
        weights,
    }
}

/// Smallest eigenvalue of `diag(d) + sum_c beta_c beta_c^H` via the secular
/// equation; valid for a single channel, where the update has rank one.
fn kappa_secular(weights: &ModalWeights, omega: f64) -> f64 {
    let w = &weights.weights[0];
    // Cluster equal diagonal entries; inside a cluster the rank-one update
    // acts on a single direction, leaving count - 1 eigenvalues in place.
    let mut order: Vec<usize> = (0..weights.mu.len()).collect();
    order.sort_by(|&i, &j| {
        let di = (omega - weights.mu[i]).powi(2);
        let dj = (omega - weights.mu[j]).powi(2);
        di.total_cmp(&dj)
    });
    let mut clusters: Vec<(f64, f64, usize)> = Vec::new();
    for &j in &order {
        let d = (omega - weights.mu[j]).powi(2);
        match clusters.last_mut() {
            Some((dc, wc, count)) if d - *dc <= 1e-12 * (1.0 + d) => {
                *wc += w[j];
                *count += 1;
            }
            _ => clusters.push((d, w[j], 1)),
        }
    }

    // Candidates below the secular root: diagonal values untouched by the
    // update (zero weight, or the surplus directions of a repeated value).
    let mut best = f64::INFINITY;
    let mut active: Vec<(f64, f64)> = Vec::new();
    for &(d, wc, count) in &clusters {
        if wc > 0.0 {
            active.push((d, wc));
            if count >= 2 {
                best = best.min(d);
            }
        } else {
            best = best.min(d);
        }
    }
    match active.len() {
        0 => return best,
        1 => return best.min(active[0].0 + active[0].1),
        _ => {}
    }
    // The smallest secular root lies in (d_(1), d_(2)) of the active
    // clusters: f goes from -inf to +inf across that interval.
    let f = |lambda: f64| -> f64 {
        1.0 + active
            .iter()
            .map(|&(d, wc)| wc / (d - lambda))
            .sum::<f64>()
    };
    let (mut lo, mut hi) = (active[0].0, active[1].0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.min(0.5 * (lo + hi))
}

/// Cached dense-route data: `S = L^T A L^{-T}` and `B~ = L^T B`, in which
/// the Hautus form on the unit G-sphere becomes a plain Hermitian form.
struct OrthoForm {
    s: DMatrix<f64>,
    bbt: DMatrix<f64>,
}

fn ortho_form(model: &SystemModel) -> OrthoForm {
    let l = model.gram_cholesky().l();
    let mut s = l.tr_mul(model.generator());
    // right-multiply by L^{-T}: solve X L^T = S, i.e. L X^T = S^T.
    s = l.solve_lower_triangular(&s.transpose()).expect("L invertible").transpose();
    let bt = l.tr_mul(model.feedback());
    let bbt = &bt * bt.transpose();
    OrthoForm { s, bbt }
}

/// Smallest eigenvalue of `(i w I - S)^H (i w I - S) + B~ B~^T` by a dense
/// complex Hermitian eigensolve.
fn kappa_dense(form: &OrthoForm, omega: f64) -> f64 {
    let n = form.s.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { omega } else { 0.0 };
        Complex::new(-form.s[(i, j)], diag)
    });
    let mut k = m.adjoint() * &m;
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] += Complex::new(form.bbt[(i, j)], 0.0);
        }
    }
    let eig = SymmetricEigen::new(k);
    eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b)).max(0.0)
}

/// Scans `kappa(w)` over a uniform grid with all eigenfrequencies of the
/// model injected; `kappa_min > 0` certifies the Hautus test on the grid.
pub fn hautus_scan(
    model: &SystemModel,
    omega_min: f64,
    omega_max: f64,
    num_points: usize,
) -> Result<HautusScanReport, CertificationError> {
    if num_points < 3 {
        return Err(CertificationError::GridTooSmall(num_points));
    }
    if !(omega_min < omega_max) || !omega_min.is_finite() || !omega_max.is_finite() {
        return Err(CertificationError::BadRange {
            min: omega_min,
            max: omega_max,
        });
    }
    let decomp = decompose(model)?;
    let mut grid: Vec<f64> = (0..num_points)
        .map(|i| {
            omega_min + (omega_max - omega_min) * i as f64 / (num_points - 1) as f64
        })
        .collect();
    for &mu in decomp.frequencies() {
        if mu >= omega_min && mu <= omega_max {
            grid.push(mu);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let secular = (model.channels() == 1).then(|| modal_weights(model, &decomp));
    let form = ortho_form(model);
    let kappa: Vec<f64> = grid
        .par_iter()
        .map(|&omega| match &secular {
            Some(weights) => kappa_secular(weights, omega).max(0.0),
            None => kappa_dense(&form, omega),
        })
        .collect();
    let (argmin, kappa_min) = kappa
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &k)| (grid[i], k))
        .expect("grid is non-empty");
    Ok(HautusScanReport {
        omega_grid: grid,
        kappa,
        kappa_min,
        argmin_omega: argmin,
    })
}

/// [`hautus_scan`] over `[-max|mu| - 1, max|mu| + 1]` at the default density.
pub fn hautus_scan_auto(model: &SystemModel) -> Result<HautusScanReport, CertificationError> {
    let decomp = decompose(model)?;
    let edge = decomp.max_abs_frequency() + 1.0;
    let points = ((2.0 * edge * HAUTUS_POINTS_PER_UNIT).ceil() as usize).max(3);
    hautus_scan(model, -edge, edge, points)
}

// ---------------------------------------------------------------------------
// Transfer function scan
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct TransferScanReport {
    pub beta: f64,
    pub omega_grid: Vec<f64>,
    /// `||H(beta + i w)||_op` per grid point.
    pub norms: Vec<f64>,
    pub sup: f64,
    pub argmax_omega: f64,
}

/// Y-operator norm of `H(beta + i w) = B* (lambda I - A)^{-1} B` per grid
/// point, by `m` complex solves against a factored resolvent.
pub fn transfer_norm_scan(
    model: &SystemModel,
    beta: f64,
    omega_grid: &[f64],
) -> Result<TransferScanReport, CertificationError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(CertificationError::BadBeta(beta));
    }
    if omega_grid.is_empty() {
        return Err(CertificationError::GridTooSmall(0));
    }
    let n = model.dim();
    let a = model.generator();
    let b_complex = model.feedback().map(|x| Complex::new(x, 0.0));
    let bstar = model.feedback().transpose() * model.gram();
    let bstar_complex = bstar.map(|x| Complex::new(x, 0.0));
    let norms: Vec<f64> = omega_grid
        .par_iter()
        .map(|&omega| -> Result<f64, CertificationError> {
            let resolvent = DMatrix::from_fn(n, n, |i, j| {
                let diag = if i == j { Complex::new(beta, omega) } else { Complex::default() };
                diag - Complex::new(a[(i, j)], 0.0)
            });
            let lu = resolvent.lu();
            let x = lu
                .solve(&b_complex)
                .ok_or(CertificationError::SingularResolvent { omega })?;
            let h = &bstar_complex * x;
            Ok(h.svd(false, false).singular_values.max())
        })
        .collect::<Result<_, _>>()?;
    let (argmax, sup) = norms
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &v)| (omega_grid[i], v))
        .expect("grid is non-empty");
    Ok(TransferScanReport {
        beta,
        omega_grid: omega_grid.to_vec(),
        norms,
        sup,
        argmax_omega: argmax,
    })
}

// ---------------------------------------------------------------------------
// Graph-norm bound on B*
// ---------------------------------------------------------------------------

/// Smallest `C_B` with `||B* z||_Y^2 <= C_B^2 (||A z||_G^2 + ||z||_G^2)`,
/// the largest generalized singular value of the form pair.
pub fn bstar_graph_bound(model: &SystemModel) -> f64 {
    let a = model.generator();
    let g = model.gram();
    let mut graph = a.transpose() * g * a + g;
    // Symmetrize before factoring; the product picks up rounding skew.
    let gt = graph.transpose();
    graph = 0.5 * (&graph + &gt);
    let chol = nalgebra::Cholesky::new(graph).expect("graph form is positive definite");
    let gb = g * model.feedback();
    let x = chol
        .l()
        .solve_lower_triangular(&gb)
        .expect("Cholesky factor invertible");
    x.svd(false, false).singular_values.max()
}

// ---------------------------------------------------------------------------
// Observability Gramians
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramianVariant {
    /// Quadrature of the continuous form `int_0^T ||B* y||^2 dt` along the
    /// conservative midpoint propagator at a caller-supplied fine step.
    Continuous,
    /// Full viscous right side: node samples of `||B* u^k||^2` plus the
    /// `dt^3 ||A u^{k+1}||_G^2` and `dt^6 ||A^2 u^{k+1}||_G^2` sums, along
    /// the viscous conservative propagator.
    DiscreteViscous,
    /// Midpoint samples of the plain conservative scheme restricted to the
    /// filtered subspace `C_{delta/dt}`.
    Filtered,
}

impl GramianVariant {
    pub fn name(self) -> &'static str {
        match self {
            GramianVariant::Continuous => "continuous",
            GramianVariant::DiscreteViscous => "discrete_viscous",
            GramianVariant::Filtered => "filtered",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObservabilityReport {
    pub variant: GramianVariant,
    pub dt: f64,
    pub t_final: f64,
    /// Smallest G-eigenvalue: the observability constant of the variant.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Traces of the three term Gramians in the G inner product.
    pub term_b: f64,
    pub term_a1: f64,
    pub term_a2: f64,
    /// Dimension the form acts on: the filtered rank, or the full dimension.
    pub subspace_dim: usize,
}

/// Term Gramians before eigenanalysis. For the filtered variant the matrices
/// live on the subspace basis; otherwise on the full state space.
struct GramianParts {
    w_b: DMatrix<f64>,
    w_a1: DMatrix<f64>,
    w_a2: DMatrix<f64>,
    /// Filtered basis columns, when the form lives on a subspace.
    basis: Option<DMatrix<f64>>,
}

fn propagate_gramian(
    model: &SystemModel,
    variant: GramianVariant,
    dt: f64,
    t_final: f64,
    delta: Option<f64>,
) -> Result<GramianParts, CertificationError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CertificationError::BadStep(dt));
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(CertificationError::BadHorizon(t_final));
    }
    let k_t = (t_final / dt + 1e-9).floor() as usize;
    if variant != GramianVariant::Continuous && k_t < 2 {
        return Err(CertificationError::WindowTooShort { t_final, dt });
    }
    let steps = match variant {
        GramianVariant::Continuous => k_t.max(1),
        GramianVariant::DiscreteViscous | GramianVariant::Filtered => k_t + 1,
    };
    if steps > GRAMIAN_STEP_BUDGET {
        return Err(CertificationError::StepBudget {
            steps,
            budget: GRAMIAN_STEP_BUDGET,
        });
    }

    let basis = match variant {
        GramianVariant::Filtered => {
            let delta = delta.ok_or(CertificationError::MissingDelta)?;
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(CertificationError::BadDelta(delta));
            }
            let threshold = delta / dt;
            let decomp = decompose(model)?;
            let low = decomp.low_indices(threshold);
            if low.is_empty() {
                return Err(CertificationError::EmptySubspace { threshold });
            }
            let mut cols = DMatrix::zeros(model.dim(), low.len());
            for (c, &j) in low.iter().enumerate() {
                cols.set_column(c, &decomp.modes().column(j));
            }
            Some(cols)
        }
        _ => None,
    };

    let midpoint = ShiftedSolver::new(model, dt / 2.0, false)?;
    let viscosity = match variant {
        GramianVariant::DiscreteViscous => Some(ViscositySolver::new(model, dt)?),
        _ => None,
    };
    let a = model.generator();
    let g = model.gram();
    let bstar = model.feedback().transpose() * g;
    let c = dt / 2.0;

    let mut u = basis.clone().unwrap_or_else(|| DMatrix::identity(model.dim(), model.dim()));
    let cols = u.ncols();
    let mut w_b = DMatrix::zeros(cols, cols);
    let mut w_a1 = DMatrix::zeros(cols, cols);
    let mut w_a2 = DMatrix::zeros(cols, cols);
    let dt3 = dt.powi(3);
    let dt6 = dt3 * dt3;

    for _k in 0..steps {
        // Node sample of the state before the step; the loop covers
        // exactly u^0 .. u^{K_T}.
        if variant == GramianVariant::DiscreteViscous {
            let y = &bstar * &u;
            w_b += dt * y.transpose() * y;
        }
        let rhs = &u + c * (a * &u);
        let u_tilde = midpoint.solve_matrix(&rhs)?;
        let u_next = match &viscosity {
            Some(v) => v.solve_matrix(&u_tilde)?,
            None => u_tilde,
        };
        match variant {
            GramianVariant::Continuous | GramianVariant::Filtered => {
                let mid = 0.5 * (&u + &u_next);
                let y = &bstar * mid;
                w_b += dt * y.transpose() * y;
            }
            GramianVariant::DiscreteViscous => {
                // Arrival samples u^1 .. u^{K_T + 1} per the viscous sums.
                let au = a * &u_next;
                let ga = g * &au;
                w_a1 += dt3 * au.transpose() * ga;
                let a2u = a * au;
                let ga2 = g * &a2u;
                w_a2 += dt6 * a2u.transpose() * ga2;
            }
        }
        u = u_next;
    }
    Ok(GramianParts { w_b, w_a1, w_a2, basis })
}

/// Extremal eigenvalues of `W y = lambda G y`; on a G-orthonormal subspace
/// basis the pencil is already the identity.
fn pencil_extremes(model: &SystemModel, w: &DMatrix<f64>, on_subspace: bool) -> (f64, f64) {
    let sym = if on_subspace {
        w.clone()
    } else {
        let l = model.gram_cholesky().l();
        let y = l.solve_lower_triangular(w).expect("L invertible");
        l.solve_lower_triangular(&y.transpose()).expect("L invertible")
    };
    let sym = 0.5 * (&sym + &sym.transpose());
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let max = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    (min.max(0.0), max.max(0.0))
}

fn pencil_trace(model: &SystemModel, w: &DMatrix<f64>, on_subspace: bool) -> f64 {
    if on_subspace {
        w.trace()
    } else {
        model.gram_cholesky().solve(w).trace()
    }
}

/// Builds the observability Gramian of the requested variant and reports
/// its extremal G-eigenvalues; `lambda_min` is the observability constant.
pub fn observability_gramian(
    model: &SystemModel,
    variant: GramianVariant,
    dt: f64,
    t_final: f64,
    delta: Option<f64>,
) -> Result<ObservabilityReport, CertificationError> {
    let parts = propagate_gramian(model, variant, dt, t_final, delta)?;
    let on_subspace = parts.basis.is_some();
    let total = &parts.w_b + &parts.w_a1 + &parts.w_a2;
    let (lambda_min, lambda_max) = pencil_extremes(model, &total, on_subspace);
    Ok(ObservabilityReport {
        variant,
        dt,
        t_final,
        lambda_min,
        lambda_max,
        term_b: pencil_trace(model, &parts.w_b, on_subspace),
        term_a1: pencil_trace(model, &parts.w_a1, on_subspace),
        term_a2: pencil_trace(model, &parts.w_a2, on_subspace),
        subspace_dim: parts.w_b.nrows(),
    })
}

// ---------------------------------------------------------------------------
// Admissibility of the forced scheme
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ForcedBoundReport {
    pub dt: f64,
    pub t_final: f64,
    /// Max over samples of `dt sum ||B* S_k||^2 / dt sum ||v^k||^2`.
    pub worst_ratio: f64,
    pub samples: usize,
}

/// Empirical input-to-observation gain of the forced viscous scheme from
/// `w^0 = 0`: the first sample is a single impulse, the rest are random
/// dense sequences, all normalized to unit summed Y-norm.
pub fn forced_bound_ratio(
    model: &SystemModel,
    dt: f64,
    t_final: f64,
    num_samples: usize,
    seed: u64,
) -> Result<ForcedBoundReport, CertificationError> {
    if num_samples == 0 {
        return Err(CertificationError::NoSamples);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CertificationError::BadStep(dt));
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(CertificationError::BadHorizon(t_final));
    }
    let k_t = (t_final / dt + 1e-9).floor() as usize;
    if k_t + 1 > GRAMIAN_STEP_BUDGET {
        return Err(CertificationError::StepBudget {
            steps: k_t + 1,
            budget: GRAMIAN_STEP_BUDGET,
        });
    }
    let stepper = ForcedStepper::new(model, dt)?;
    let channels = model.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for sample in 0..num_samples {
        let mut forcing: Vec<DVector<f64>> = if sample == 0 {
            let mut impulse = vec![DVector::zeros(channels); k_t + 1];
            impulse[0][0] = 1.0;
            impulse
        } else {
            (0..=k_t)
                .map(|_| DVector::from_fn(channels, |_, _| rng.random_range(-1.0..1.0)))
                .collect()
        };
        let total: f64 = forcing.iter().map(|v| v.norm_squared()).sum();
        if total == 0.0 {
            return Err(CertificationError::ZeroForcing(sample));
        }
        let scale = total.sqrt();
        for v in &mut forcing {
            *v /= scale;
        }
        let mut w = model.zero_state();
        let mut lhs = 0.0;
        for v in &forcing {
            let step = stepper.step(&w, v).map_err(|e| match e {
                SimulateError::Solve(s) => CertificationError::Solve(s),
                SimulateError::Model(m) => CertificationError::Model(m),
                SimulateError::NonFinite { step, .. } => CertificationError::NonFiniteState(step),
            })?;
            lhs += dt * step.damping_sample.norm_squared();
            w = step.z_next;
        }
        let rhs = dt; // unit summed norm by construction
        worst = worst.max(lhs / rhs);
    }
    Ok(ForcedBoundReport {
        dt,
        t_final,
        worst_ratio: worst,
        samples: num_samples,
    })
}

// ---------------------------------------------------------------------------
// Continuous decay rate
// ---------------------------------------------------------------------------

/// Energy decay rate `nu = -2 max Re sigma(A - B B*)` of the spatially
/// discretized damped system; positive means exponential stability.
pub fn continuous_decay_rate(model: &SystemModel) -> f64 {
    let damped = model.damped_generator();
    let eigen = damped.complex_eigenvalues();
    let abscissa = eigen.iter().fold(f64::NEG_INFINITY, |m, l| m.max(l.re));
    -2.0 * abscissa
}
