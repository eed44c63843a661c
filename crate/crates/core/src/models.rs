//! Finite-difference wave and beam models with interior point damping.
//!
//! Both models live on the uniform grid `x_i = i/n`, `i = 1..n`, with the
//! left end pinned (`u(0) = 0`) and a zero-slope right end (`u_x(1) = 0`);
//! the beam adds the natural conditions `u_xx(0) = u_xxx(1) = 0`. Damping
//! acts through a single feedback channel `B = sqrt(alpha) delta_xi`, the
//! Dirac mass at the grid node `xi = p/q`, discretized as `e_j / h`. With
//! the velocity mass `M = diag(h, ..., h, h/2)` this makes the observation
//! exactly `B* z = sqrt(alpha) v(xi)`.
//!
//! The Gram matrix is `G = blockdiag(K, M)` where `K` is the stiffness form
//! of the displacement energy (`int u_x^2` for the wave, `int u_xx^2` for
//! the beam). The boundary closures are chosen so that the stiffness is
//! *exactly* the mass-weighted negative of the generator block; entries are
//! built from the same products in the same order, so `A^T G + G A = 0`
//! holds bitwise, not just to rounding. Two payoffs: validation reports a
//! zero residual, and the discrete frequencies quantize in closed form,
//!
//! ```text
//! wave:  mu_j = 2 n sin((j - 1/2) pi / (2n))      j = 1..n
//! beam:  mu_j = (2 n sin((j - 1/2) pi / (2n)))^2
//! ```
//!
//! which converge at order h^2 to `(j - 1/2) pi` and its square. The tests
//! freeze these formulas as oracles for both the builders and the spectral
//! module.
//!
//! The numerator parity rule: modes of either model are proportional to
//! `sin((j - 1/2) pi x)` at the nodes, and `sin((j - 1/2) pi p / q)`
//! vanishes for some `j` exactly when `p` is even. An even numerator
//! therefore parks the damper on a nodal line of some mode and destroys
//! stabilizability, so builders reject it unless explicitly overridden.

use crate::system::{ModelError, SystemModel};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Clone, Copy, Debug)]
pub struct WaveModelSpec {
    /// Number of displacement nodes; the state dimension is `2n`.
    pub n: usize,
    /// Damping location `xi = xi_p / xi_q` in lowest terms.
    pub xi_p: usize,
    pub xi_q: usize,
    /// Damping gain `alpha >= 0`; zero gives the conservative model.
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct BeamModelSpec {
    pub n: usize,
    pub xi_p: usize,
    pub xi_q: usize,
    pub alpha: f64,
}

#[derive(Debug, Error)]
pub enum ModelBuildError {
    #[error("xi = {p}/{q} is not in lowest terms (gcd {g})")]
    NotCoprime { p: usize, q: usize, g: usize },
    #[error("xi = {p}/{q} must lie strictly between 0 and 1")]
    XiOutOfRange { p: usize, q: usize },
    #[error("xi = {p}/{q} has an even numerator, which places the damper on a mode's nodal line; pass the override to build anyway")]
    EvenNumerator { p: usize, q: usize },
    #[error("denominator {q} must divide the grid size n = {n} so the damper sits on a node")]
    OffGridDamper { q: usize, n: usize },
    #[error("alpha must be non-negative and finite, got {0}")]
    BadAlpha(f64),
    #[error("{model} needs n >= {min} grid nodes, got {n}")]
    TooCoarse {
        model: &'static str,
        min: usize,
        n: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn check_spec(
    model: &'static str,
    min_n: usize,
    n: usize,
    p: usize,
    q: usize,
    alpha: f64,
    allow_even: bool,
) -> Result<(), ModelBuildError> {
    if n < min_n {
        return Err(ModelBuildError::TooCoarse { model, min: min_n, n });
    }
    if p == 0 || q == 0 || p >= q {
        return Err(ModelBuildError::XiOutOfRange { p, q });
    }
    let g = gcd(p, q);
    if g != 1 {
        return Err(ModelBuildError::NotCoprime { p, q, g });
    }
    if p % 2 == 0 && !allow_even {
        return Err(ModelBuildError::EvenNumerator { p, q });
    }
    if n % q != 0 {
        return Err(ModelBuildError::OffGridDamper { q, n });
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(ModelBuildError::BadAlpha(alpha));
    }
    Ok(())
}

/// 0-based state index of the damped velocity component.
pub fn damping_node(n: usize, p: usize, q: usize) -> usize {
    n + (n / q) * p - 1
}

/// Trapezoid node weights `(h, ..., h, h/2)` shared by both models.
fn node_mass(n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    (0..n).map(|i| if i + 1 == n { h / 2.0 } else { h }).collect()
}

/// Integer second-difference pattern with the pinned/zero-slope closures:
/// interior rows `(1, -2, 1)`, first row missing the `u_0 = 0` neighbor,
/// last row `(2, -2)` from the reflected ghost node.
fn second_difference_pattern(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    for r in 0..n - 1 {
        if r > 0 {
            p[(r, r - 1)] = 1.0;
        }
        p[(r, r)] = -2.0;
        p[(r, r + 1)] = 1.0;
    }
    p[(n - 1, n - 2)] = 2.0;
    p[(n - 1, n - 1)] = -2.0;
    p
}

/// Assembles `A = [[0, I], [gen, 0]]`, `G = blockdiag(K, M)` with
/// `K = -M gen` built entry-by-entry from the same products, and the Dirac
/// feedback column. `gen` must hold exact (integer-valued) entries.
fn assemble(
    label: String,
    n: usize,
    gen: &DMatrix<f64>,
    mass: &[f64],
    p: usize,
    q: usize,
    alpha: f64,
) -> Result<SystemModel, ModelBuildError> {
    let dim = 2 * n;
    let mut a = DMatrix::zeros(dim, dim);
    let mut g = DMatrix::zeros(dim, dim);
    for i in 0..n {
        a[(i, n + i)] = 1.0;
        g[(n + i, n + i)] = mass[i];
        for j in 0..n {
            let gen_ij = gen[(i, j)];
            if gen_ij != 0.0 {
                a[(n + i, j)] = gen_ij;
                g[(i, j)] = -(mass[i] * gen_ij);
            }
        }
    }
    let mut b = DMatrix::zeros(dim, 1);
    b[(damping_node(n, p, q), 0)] = alpha.sqrt() * n as f64;
    Ok(SystemModel::new(label, a, b, g)?)
}

/// 1-d wave equation `u_tt = u_xx` with point damping `alpha u_t(xi)`.
pub fn build_wave_interior(spec: &WaveModelSpec) -> Result<SystemModel, ModelBuildError> {
    build_wave_with_options(spec, false)
}

/// As [`build_wave_interior`], optionally allowing an even `xi` numerator
/// (useful for demonstrating the unobservable-mode failure).
pub fn build_wave_with_options(
    spec: &WaveModelSpec,
    allow_even_numerator: bool,
) -> Result<SystemModel, ModelBuildError> {
    let WaveModelSpec { n, xi_p, xi_q, alpha } = *spec;
    check_spec("wave", 2, n, xi_p, xi_q, alpha, allow_even_numerator)?;
    let n2 = (n * n) as f64;
    let gen = n2 * second_difference_pattern(n);
    let label = format!("wave[n={n},xi={xi_p}/{xi_q},alpha={alpha}]");
    assemble(label, n, &gen, &node_mass(n), xi_p, xi_q, alpha)
}

/// Euler-Bernoulli beam `u_tt = -u_xxxx` with point damping, pinned at the
/// left end and slope-guided at the right.
pub fn build_beam_interior(spec: &BeamModelSpec) -> Result<SystemModel, ModelBuildError> {
    build_beam_with_options(spec, false)
}

pub fn build_beam_with_options(
    spec: &BeamModelSpec,
    allow_even_numerator: bool,
) -> Result<SystemModel, ModelBuildError> {
    let BeamModelSpec { n, xi_p, xi_q, alpha } = *spec;
    check_spec("beam", 5, n, xi_p, xi_q, alpha, allow_even_numerator)?;
    let pat = second_difference_pattern(n);
    // The curvature pattern is self-adjoint in the trapezoid weights
    // (lambda^{-1} P^T lambda == P), so the fourth-difference form
    // M^{-1} P^T W P collapses to n^4 P^2 with integer entries.
    let conj = DMatrix::from_fn(n, n, |i, j| {
        let lam_ratio = match (i + 1 == n, j + 1 == n) {
            (true, false) => 2.0,
            (false, true) => 0.5,
            _ => 1.0,
        };
        pat[(j, i)] * lam_ratio
    });
    debug_assert_eq!(conj, pat);
    let n4 = ((n * n) * (n * n)) as f64;
    let gen = -n4 * (&conj * &pat);
    let label = format!("beam[n={n},xi={xi_p}/{xi_q},alpha={alpha}]");
    assemble(label, n, &gen, &node_mass(n), xi_p, xi_q, alpha)
}

/// Closed-form discrete wave frequencies `2 n sin((j - 1/2) pi / (2n))`,
/// ascending, `j = 1..n`.
pub fn wave_frequencies(n: usize) -> Vec<f64> {
    let nf = n as f64;
    (1..=n)
        .map(|j| 2.0 * nf * ((j as f64 - 0.5) * std::f64::consts::PI / (2.0 * nf)).sin())
        .collect()
}

/// Closed-form discrete beam frequencies: squares of the wave ones.
pub fn beam_frequencies(n: usize) -> Vec<f64> {
    wave_frequencies(n).into_iter().map(|m| m * m).collect()
}
