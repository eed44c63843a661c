//! Modal decomposition of the conservative generator and the filtered
//! subspaces built from it.
//!
//! A G-skew generator is unitarily diagonalizable after symmetrization: with
//! the Cholesky factor `G = L L^T`, the matrix `S = L^T A L^{-T}` is real
//! skew-symmetric, so `i S` is Hermitian and its eigenvalues come in pairs
//! `-mu, +mu` plus a kernel. Back in model coordinates each pair `+-i mu`
//! of eigenvalues of `A` spans a real invariant plane; this module returns a
//! real G-orthonormal basis of those planes.
//!
//! Column layout: kernel vectors first, then one `(a, b)` column pair per
//! frequency in ascending order of `mu > 0`, normalized so that
//!
//! ```text
//! A a = mu b,    A b = -mu a,
//! ```
//!
//! i.e. `(a - i b)/sqrt(2)` is the eigenvector for `+i mu` and its conjugate
//! the one for `-i mu`. The `frequencies` list carries both signed entries
//! of each pair (`+mu` at the `a` column, `-mu` at the `b` column), so its
//! length always equals the state dimension.
//!
//! The filtered class at threshold `s` is the span of all columns with
//! `|mu| <= s` (ties included, kernel always low). On its G-orthogonal
//! complement the inverse inequality `dt ||A y||_G >= delta ||y||_G` holds
//! with `s = delta/dt`; [`verify_high_frequency_bound`] probes it with
//! random trial vectors rather than trusting the algebra.

use crate::system::{ModelError, StateVector, SystemModel};
use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Bound on `||A phi - i mu phi||_G` relative to `max(1, max |mu|)`.
pub const TOL_MODE_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("hermitian eigensolver failed: {0}")]
    EigenFailed(String),
    #[error("spectrum does not split into conjugate pairs plus a kernel (pairs {pairs}, kernel {kernel}, dim {dim})")]
    UnpairedSpectrum {
        pairs: usize,
        kernel: usize,
        dim: usize,
    },
    #[error("filter threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("decomposition belongs to model `{decomp}`, state to `{state}`")]
    ModelMismatch { decomp: String, state: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How a column of [`ModalDecomposition::modes`] participates in the
/// spectrum of `A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeClass {
    /// Kernel vector of `A`.
    Zero,
    /// First column of a pair; the entry's frequency is `+mu`.
    PairPlus { partner: usize },
    /// Second column of a pair; the entry's frequency is `-mu`.
    PairMinus { partner: usize },
}

#[derive(Clone, Debug)]
pub struct ModalDecomposition {
    frequencies: Vec<f64>,
    modes: DMatrix<f64>,
    residuals: Vec<f64>,
    classes: Vec<ModeClass>,
    /// `modes^T G`, so coefficient extraction is a single product.
    analysis: DMatrix<f64>,
    model_label: String,
}

impl ModalDecomposition {
    /// Signed frequencies, kernel first, then pairs ascending in `|mu|`.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Real G-orthonormal basis columns aligned with `frequencies`.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// `||A phi_j - i mu_j phi_j||_G` per entry, on the complexified modes.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn classes(&self) -> &[ModeClass] {
        &self.classes
    }

    pub fn model_label(&self) -> &str {
        &self.model_label
    }

    pub fn dim(&self) -> usize {
        self.frequencies.len()
    }

    pub fn max_abs_frequency(&self) -> f64 {
        self.frequencies.iter().fold(0.0, |m, f| m.max(f.abs()))
    }

    /// Indices of columns with `|mu| <= s` (the filtered class).
    pub fn low_indices(&self, s: f64) -> Vec<usize> {
        (0..self.dim())
            .filter(|&j| self.frequencies[j].abs() <= s)
            .collect()
    }

    /// G-orthogonal projection of `z` onto the span of the given columns.
    fn project_onto(&self, cols: &[usize], z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(z.len());
        for &j in cols {
            let coeff = self.analysis.row(j).transpose().dot(z);
            out.axpy(coeff, &self.modes.column(j).into_owned(), 1.0);
        }
        out
    }
}

fn check_model_binding(
    decomp: &ModalDecomposition,
    z: &StateVector,
) -> Result<(), SpectralError> {
    if decomp.model_label != z.model_label() {
        return Err(SpectralError::ModelMismatch {
            decomp: decomp.model_label.clone(),
            state: z.model_label().to_string(),
        });
    }
    Ok(())
}

/// Full modal decomposition of the conservative generator.
pub fn decompose(model: &SystemModel) -> Result<ModalDecomposition, SpectralError> {
    let n = model.dim();
    let l = model.gram_cholesky().l();

    // S = L^T A L^{-T}; solve L S^T = (L^T A)^T, then hard-project onto the
    // skew part to keep the Hermitian eigensolver honest.
    let t = l.tr_mul(model.generator());
    let s_t = l
        .solve_lower_triangular(&t.transpose())
        .ok_or_else(|| SpectralError::EigenFailed("gram factor is singular".into()))?;
    let s = 0.5 * (s_t.transpose() - &s_t);

    let herm = DMatrix::from_fn(n, n, |i, j| Complex::new(0.0, s[(i, j)]));
    let eig = SymmetricEigen::new(herm);
    let lam = &eig.eigenvalues;

    let scale = lam.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let zero_tol = (n as f64) * f64::EPSILON * scale;

    let mut kernel_idx = Vec::new();
    let mut plus_idx = Vec::new(); // lambda < 0  <=>  mu = -lambda > 0
    let mut minus_count = 0usize;
    for j in 0..n {
        if lam[j].abs() <= zero_tol {
            kernel_idx.push(j);
        } else if lam[j] < 0.0 {
            plus_idx.push(j);
        } else {
            minus_count += 1;
        }
    }
    if plus_idx.len() != minus_count || 2 * plus_idx.len() + kernel_idx.len() != n {
        return Err(SpectralError::UnpairedSpectrum {
            pairs: plus_idx.len(),
            kernel: kernel_idx.len(),
            dim: n,
        });
    }
    // Ascending mu = -lambda.
    plus_idx.sort_by(|&i, &j| lam[j].partial_cmp(&lam[i]).unwrap());

    // Kernel: real and imaginary parts of the kernel eigenvectors span the
    // real kernel of S; orthonormalize them (plain MGS, the symmetrized
    // coordinates are Euclidean).
    let mut kernel_basis: Vec<DVector<f64>> = Vec::with_capacity(kernel_idx.len());
    for &j in &kernel_idx {
        let col = eig.eigenvectors.column(j);
        for part in [
            DVector::from_fn(n, |i, _| col[i].re),
            DVector::from_fn(n, |i, _| col[i].im),
        ] {
            if kernel_basis.len() == kernel_idx.len() {
                break;
            }
            let mut q = part;
            for accepted in &kernel_basis {
                let c = accepted.dot(&q);
                q.axpy(-c, accepted, 1.0);
            }
            let norm = q.norm();
            if norm > 1e-6 {
                kernel_basis.push(q / norm);
            }
        }
    }
    if kernel_basis.len() != kernel_idx.len() {
        return Err(SpectralError::EigenFailed(
            "kernel eigenvectors did not yield a real basis".into(),
        ));
    }

    // Map back to model coordinates: phi = L^{-T} psi.
    let lt = l.transpose();
    let back = |v: &DVector<f64>| -> Result<DVector<f64>, SpectralError> {
        lt.solve_upper_triangular(v)
            .ok_or_else(|| SpectralError::EigenFailed("gram factor is singular".into()))
    };

    let mut frequencies = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut classes = Vec::with_capacity(n);
    let mut modes = DMatrix::zeros(n, n);
    let mut col = 0usize;

    for q in &kernel_basis {
        let phi = back(q)?;
        let r = model.g_norm(&model.apply_a(&phi));
        frequencies.push(0.0);
        residuals.push(r);
        classes.push(ModeClass::Zero);
        modes.set_column(col, &phi);
        col += 1;
    }

    let sqrt2 = 2.0_f64.sqrt();
    for &j in &plus_idx {
        let mu = -lam[j];
        let psi = eig.eigenvectors.column(j);
        let phi_re = back(&DVector::from_fn(n, |i, _| psi[i].re))?;
        let phi_im = back(&DVector::from_fn(n, |i, _| psi[i].im))?;
        // A(re + i im) = i mu (re + i im) gives A re = -mu im, A im = mu re;
        // the pair below then satisfies A a = mu b, A b = -mu a.
        let a = sqrt2 * &phi_re;
        let b = -sqrt2 * &phi_im;
        let res = {
            let ra = model.apply_a(&a) - mu * &b;
            let rb = model.apply_a(&b) + mu * &a;
            (0.5 * (model.g_norm(&ra).powi(2) + model.g_norm(&rb).powi(2))).sqrt()
        };
        frequencies.push(mu);
        residuals.push(res);
        classes.push(ModeClass::PairPlus { partner: col + 1 });
        modes.set_column(col, &a);
        frequencies.push(-mu);
        residuals.push(res);
        classes.push(ModeClass::PairMinus { partner: col });
        modes.set_column(col + 1, &b);
        col += 2;
    }

    let analysis = modes.tr_mul(model.gram());
    Ok(ModalDecomposition {
        frequencies,
        modes,
        residuals,
        classes,
        analysis,
        model_label: model.label().to_string(),
    })
}

/// G-orthogonal projection onto the filtered class `C_s = span{phi_j : |mu_j| <= s}`.
pub fn project_filtered(
    decomp: &ModalDecomposition,
    s: f64,
    z: &StateVector,
) -> Result<StateVector, SpectralError> {
    if !(s > 0.0) {
        return Err(SpectralError::NonPositiveThreshold(s));
    }
    check_model_binding(decomp, z)?;
    let low = decomp.low_indices(s);
    let coords = decomp.project_onto(&low, z.coords());
    Ok(StateVector::from_parts(
        coords,
        decomp.model_label.clone(),
    ))
}

/// Result of probing `dt ||A y||_G >= delta ||y||_G` on the complement of
/// the filtered class at `s = delta/dt`.
#[derive(Clone, Debug)]
pub struct HighFrequencyCheck {
    /// Frequency threshold `delta/dt` that split the spectrum.
    pub threshold: f64,
    /// Number of mode columns above the threshold.
    pub high_count: usize,
    pub trials: usize,
    /// Worst observed `dt ||A y||_G / ||y||_G`; `None` when the complement
    /// is trivial and there is nothing to probe.
    pub min_ratio: Option<f64>,
    pub pass: bool,
}

/// Samples random vectors in the complement of `C_{delta/dt}` and returns
/// the worst ratio `dt ||A y||_G / ||y||_G` against the bound `delta`.
pub fn verify_high_frequency_bound(
    model: &SystemModel,
    decomp: &ModalDecomposition,
    delta: f64,
    dt: f64,
    trials: usize,
    seed: u64,
) -> Result<HighFrequencyCheck, SpectralError> {
    if !(delta > 0.0) {
        return Err(SpectralError::NonPositiveThreshold(delta));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SpectralError::NonPositiveThreshold(dt));
    }
    let s = delta / dt;
    let high: Vec<usize> = (0..decomp.dim())
        .filter(|&j| decomp.frequencies[j].abs() > s)
        .collect();
    if high.is_empty() {
        return Ok(HighFrequencyCheck {
            threshold: s,
            high_count: 0,
            trials,
            min_ratio: None,
            pass: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..trials.max(1) {
        let mut y = DVector::zeros(decomp.dim());
        loop {
            for &j in &high {
                y.axpy(
                    rng.random_range(-1.0..1.0),
                    &decomp.modes.column(j).into_owned(),
                    1.0,
                );
            }
            if y.norm() > 1e-8 {
                break;
            }
        }
        let ratio = dt * model.g_norm(&model.apply_a(&y)) / model.g_norm(&y);
        min_ratio = min_ratio.min(ratio);
    }
    Ok(HighFrequencyCheck {
        threshold: s,
        high_count: high.len(),
        trials: trials.max(1),
        min_ratio: Some(min_ratio),
        pass: min_ratio >= delta * (1.0 - 1e-10),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn oracle2() -> SystemModel {
        SystemModel::new(
            "oracle2",
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    fn orthonormality_defect(model: &SystemModel, d: &ModalDecomposition) -> f64 {
        let gram = d.modes().tr_mul(model.gram()) * d.modes();
        (&gram - DMatrix::identity(d.dim(), d.dim())).amax()
    }

    #[test]
    fn oracle_pair() {
        let m = oracle2();
        let d = decompose(&m).unwrap();
        assert_eq!(d.frequencies(), &[1.0, -1.0]);
        assert!(d.residuals().iter().all(|&r| r < 1e-12));
        assert!(orthonormality_defect(&m, &d) < 1e-12);
        // Pair convention A a = mu b, A b = -mu a.
        let a = d.modes().column(0).into_owned();
        let b = d.modes().column(1).into_owned();
        assert_abs_diff_eq!((m.apply_a(&a) - &b).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((m.apply_a(&b) + &a).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_generator_gives_kernel_basis() {
        let g = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let m = SystemModel::new("rest", DMatrix::zeros(3, 3), DMatrix::zeros(3, 1), g).unwrap();
        let d = decompose(&m).unwrap();
        assert_eq!(d.frequencies(), &[0.0, 0.0, 0.0]);
        assert!(d.classes().iter().all(|c| *c == ModeClass::Zero));
        assert!(orthonormality_defect(&m, &d) < 1e-12);
        assert!(d.residuals().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn degenerate_pair_stays_orthonormal() {
        // Two uncoupled copies of the oracle rotation: mu = 1 twice.
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = -1.0;
        a[(2, 3)] = 1.0;
        a[(3, 2)] = -1.0;
        let m = SystemModel::new("twin", a, DMatrix::zeros(4, 1), DMatrix::identity(4, 4)).unwrap();
        let d = decompose(&m).unwrap();
        assert_eq!(d.frequencies(), &[1.0, -1.0, 1.0, -1.0]);
        assert!(orthonormality_defect(&m, &d) < 1e-10);
        assert!(d.residuals().iter().all(|&r| r < 1e-10));
    }

    fn random_skew_model(n: usize, seed: u64) -> SystemModel {
        use rand::prelude::*;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let w = &r - r.transpose();
        let q = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let g = &q * q.transpose() + DMatrix::identity(n, n);
        let a = nalgebra::Cholesky::new(g.clone()).unwrap().solve(&w);
        let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        SystemModel::new(format!("rand{n}-{seed}"), a, b, g).unwrap()
    }

    #[test]
    fn random_models_decompose_cleanly() {
        for seed in 0..4 {
            let n = 5 + seed as usize; // odd sizes force a kernel mode
            let m = random_skew_model(n, seed);
            let d = decompose(&m).unwrap();
            assert_eq!(d.dim(), n);
            assert!(orthonormality_defect(&m, &d) < 1e-9);
            let bound = TOL_MODE_RESIDUAL * d.max_abs_frequency().max(1.0);
            assert!(d.residuals().iter().all(|&r| r <= bound));
            // Frequencies ascend in magnitude.
            let mags: Vec<f64> = d.frequencies().iter().map(|f| f.abs()).collect();
            assert!(mags.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        }
    }

    #[test]
    fn projector_reconstructs_and_is_idempotent() {
        let m = random_skew_model(6, 7);
        let d = decompose(&m).unwrap();
        let z = m
            .state(DVector::from_fn(6, |i, _| (i as f64 * 0.77).sin()))
            .unwrap();

        // s above every frequency reconstructs z.
        let s_all = d.max_abs_frequency() + 1.0;
        let full = project_filtered(&d, s_all, &z).unwrap();
        assert!((full.coords() - z.coords()).norm() < 1e-10 * z.coords().norm());

        // Idempotence and G-orthogonality of the split at an interior s.
        let s = d.max_abs_frequency() * 0.5;
        let low = project_filtered(&d, s, &z).unwrap();
        let low_again = project_filtered(&d, s, &low).unwrap();
        assert!((low.coords() - low_again.coords()).norm() <= 1e-10 * low.coords().norm().max(1e-30));
        let rest = z.coords() - low.coords();
        assert!(m.g_inner(low.coords(), &rest).abs() <= 1e-10 * m.g_norm(z.coords()).powi(2));
    }

    #[test]
    fn projector_threshold_must_be_positive() {
        let m = oracle2();
        let d = decompose(&m).unwrap();
        let z = m.state(DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(matches!(
            project_filtered(&d, 0.0, &z),
            Err(SpectralError::NonPositiveThreshold(_))
        ));
    }

    #[test]
    fn projector_kills_everything_below_the_band() {
        let m = oracle2();
        let d = decompose(&m).unwrap();
        let z = m.state(DVector::from_vec(vec![0.3, -0.9])).unwrap();
        let p = project_filtered(&d, 0.5, &z).unwrap();
        assert_eq!(p.coords().norm(), 0.0);
    }

    #[test]
    fn high_frequency_bound_holds_on_random_models() {
        for seed in 20..23 {
            let m = random_skew_model(7, seed);
            let d = decompose(&m).unwrap();
            let dt = 0.25;
            // Pick delta so the split lands strictly inside the spectrum.
            let delta = 0.5 * d.max_abs_frequency() * dt;
            let check = verify_high_frequency_bound(&m, &d, delta, dt, 32, seed).unwrap();
            assert!(check.high_count > 0);
            assert!(check.pass, "ratio {:?} below {delta}", check.min_ratio);
        }
    }

    #[test]
    fn high_frequency_bound_trivial_complement() {
        let m = oracle2();
        let d = decompose(&m).unwrap();
        let check = verify_high_frequency_bound(&m, &d, 10.0, 1.0, 8, 1).unwrap();
        assert_eq!(check.high_count, 0);
        assert_eq!(check.min_ratio, None);
        assert!(check.pass);
    }
}
