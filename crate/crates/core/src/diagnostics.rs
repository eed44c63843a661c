//! Post-processing of trajectories: ledger verification, exponential decay
//! fitting, and uniformity of the fitted rate across a step-size sweep.
//!
//! The decay fit reads an energy history `E_0, E_1, ...` as samples of an
//! envelope `mu0 E_0 exp(-nu0 t)` and recovers `(mu0, nu0)` by least squares
//! on `(k dt, ln E_k)`. Two windowing rules keep the slope honest: the first
//! tenth of the samples is discarded (early transients are not governed by
//! the envelope), and the window ends at the first energy below
//! `1e2 eps E_0`, where the logarithm would measure round-off instead of
//! decay.

use crate::schemes::{simulate, SchemeId, SimulateError, Trajectory};
use crate::spectral::{decompose, SpectralError};
use crate::system::{ModelError, StateVector, SystemModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Energies below `ENERGY_FLOOR_FACTOR * eps * E_0` end the fit window.
pub const ENERGY_FLOOR_FACTOR: f64 = 1e2;

/// Fitted rates with magnitude at or below this are treated as zero when
/// deciding whether a sweep's uniformity ratio is defined; a conservative
/// run fits a slope of pure round-off whose sign is meaningless.
pub const NU_ZERO_TOL: f64 = 1e-12;

/// Exponential envelope fitted to an energy history.
#[derive(Clone, Debug)]
pub struct DecayFit {
    /// Envelope amplitude, clamped below at 1.
    pub mu0: f64,
    /// Decay rate per unit time; positive means decay.
    pub nu0: f64,
    /// Coefficient of determination of the log-linear fit, in [0, 1].
    pub r_squared: f64,
    /// Half-open sample index range `[start, end)` used for the fit.
    pub window: (usize, usize),
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("energy sequence is empty")]
    Empty,
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("energy at index {index} is negative or non-finite: {value}")]
    BadSample { index: usize, value: f64 },
    #[error("initial energy is zero; the decay envelope is degenerate")]
    Degenerate,
    #[error("fit window [{start}, {end}) has fewer than two samples")]
    TooFewSamples { start: usize, end: usize },
}

/// Least-squares exponential fit of an energy history sampled every `dt`.
pub fn fit_decay_rate(energies: &[f64], dt: f64) -> Result<DecayFit, FitError> {
    if energies.is_empty() {
        return Err(FitError::Empty);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FitError::BadStep(dt));
    }
    for (index, &value) in energies.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(FitError::BadSample { index, value });
        }
    }
    let e0 = energies[0];
    if e0 == 0.0 {
        return Err(FitError::Degenerate);
    }
    let floor = ENERGY_FLOOR_FACTOR * f64::EPSILON * e0;
    let start = energies.len() / 10;
    let end = (start..energies.len())
        .find(|&k| energies[k] <= floor)
        .unwrap_or(energies.len());
    if end.saturating_sub(start) < 2 {
        return Err(FitError::TooFewSamples { start, end });
    }

    let count = (end - start) as f64;
    let mut x_bar = 0.0;
    let mut y_bar = 0.0;
    for k in start..end {
        x_bar += k as f64 * dt;
        y_bar += energies[k].ln();
    }
    x_bar /= count;
    y_bar /= count;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut ss_tot = 0.0;
    for k in start..end {
        let dx = k as f64 * dt - x_bar;
        let dy = energies[k].ln() - y_bar;
        sxx += dx * dx;
        sxy += dx * dy;
        ss_tot += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let mut ss_res = 0.0;
    for k in start..end {
        let resid = energies[k].ln() - (intercept + slope * k as f64 * dt);
        ss_res += resid * resid;
    }
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        mu0: (intercept.exp() / e0).max(1.0),
        nu0: -slope,
        r_squared,
        window: (start, end),
    })
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("trajectory has no steps")]
    Empty,
}

/// Relative defect of the two stage identities at arrival row `k >= 1`:
/// `E~_k = E_{k-1} - damp_k` (damped schemes only) and
/// `E_k + visc3_k + visc6_k = E~_k`. Row 0 is zero by convention.
pub fn stage_residuals(traj: &Trajectory) -> Vec<f64> {
    let ledger = &traj.ledger;
    let damped = traj.scheme.is_damped();
    let mut out = vec![0.0; ledger.len()];
    for k in 1..ledger.len() {
        let drain = if damped { ledger.damp[k] } else { 0.0 };
        let first = ledger.energy_tilde[k] - (ledger.energy[k - 1] - drain);
        let second = ledger.energy[k] + ledger.visc3[k] + ledger.visc6[k] - ledger.energy_tilde[k];
        let scale = ledger.energy[k - 1]
            .max(ledger.energy_tilde[k])
            .max(ledger.energy[k]);
        let defect = first.abs().max(second.abs());
        out[k] = if defect == 0.0 { 0.0 } else { defect / scale };
    }
    out
}

/// Verifies the energy ledger of a trajectory.
///
/// Returns `(max stage residual, telescoped residual)`: the worst per-step
/// defect of the two stage identities, and the defect of the summed balance
/// `E_K + sum_k (damp_k + visc3_k + visc6_k) = E_0`, both relative. A zero
/// trajectory reports zero residuals.
pub fn ledger_residuals(traj: &Trajectory) -> Result<(f64, f64), LedgerError> {
    if traj.states.len() < 2 {
        return Err(LedgerError::Empty);
    }
    let stage = stage_residuals(traj)
        .into_iter()
        .fold(0.0_f64, f64::max);

    let ledger = &traj.ledger;
    let damped = traj.scheme.is_damped();
    let mut drained = 0.0;
    for k in 1..ledger.len() {
        if damped {
            drained += ledger.damp[k];
        }
        drained += ledger.visc3[k] + ledger.visc6[k];
    }
    let e0 = ledger.energy[0];
    let e_last = *ledger.energy.last().expect("non-empty ledger");
    let defect = (e_last + drained - e0).abs();
    let telescoped = if defect == 0.0 { 0.0 } else { defect / e0.max(e_last) };
    Ok((stage, telescoped))
}

/// Initial-state policy for sweeps and CLI runs.
#[derive(Clone, Debug)]
pub enum Z0Policy {
    /// A caller-supplied state, validated against the model.
    Fixed(StateVector),
    /// The modal vector of largest `|mu_j|`; exhibits the high-frequency
    /// behavior that separates the schemes.
    HighestMode,
    /// Uniform random coordinates from a seeded generator, normalized to
    /// unit G-norm.
    RandomSeeded(u64),
}

/// Per-step-size fit inside a [`SweepReport`].
#[derive(Clone, Debug)]
pub struct SweepMember {
    pub dt: f64,
    pub fit: DecayFit,
}

/// Decay fits across a step-size sweep.
#[derive(Clone, Debug)]
pub struct SweepReport {
    pub scheme: SchemeId,
    pub members: Vec<SweepMember>,
    /// `min nu / max nu` over the sweep; `None` unless every fitted rate is
    /// positive (beyond round-off), in which case it lies in (0, 1].
    pub rho: Option<f64>,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("dt list needs at least 3 distinct positive values")]
    TooFewSteps,
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("simulation at dt = {dt} failed: {source}")]
    Simulation {
        dt: f64,
        #[source]
        source: SimulateError,
    },
    #[error("decay fit at dt = {dt} failed: {source}")]
    Fit {
        dt: f64,
        #[source]
        source: FitError,
    },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Materializes a policy into a concrete initial state for `model`.
pub fn initial_state(model: &SystemModel, policy: &Z0Policy) -> Result<StateVector, SweepError> {
    match policy {
        Z0Policy::Fixed(z) => {
            model.conforming(z)?;
            Ok(z.clone())
        }
        Z0Policy::HighestMode => {
            let decomp = decompose(model)?;
            let index = decomp
                .frequencies()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .expect("decomposition of a non-empty model has columns");
            Ok(model.state(decomp.modes().column(index).into_owned())?)
        }
        Z0Policy::RandomSeeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut coords =
                nalgebra::DVector::from_fn(model.dim(), |_, _| rng.random_range(-1.0..1.0));
            let norm = model.g_norm(&coords);
            if norm > 0.0 {
                coords /= norm;
            }
            Ok(model.state(coords)?)
        }
    }
}

/// Runs `simulate` for each step size to the common horizon, fits the decay
/// rate of each run, and reports the uniformity ratio.
pub fn sweep_uniformity(
    model: &SystemModel,
    scheme: SchemeId,
    dt_list: &[f64],
    t_final: f64,
    policy: &Z0Policy,
) -> Result<SweepReport, SweepError> {
    let mut distinct: Vec<f64> = dt_list
        .iter()
        .copied()
        .filter(|dt| *dt > 0.0 && dt.is_finite())
        .collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 || distinct.len() != dt_list.len() {
        return Err(SweepError::TooFewSteps);
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(SweepError::BadHorizon(t_final));
    }
    let z0 = initial_state(model, policy)?;
    let members: Vec<SweepMember> = dt_list
        .par_iter()
        .map(|&dt| {
            let steps = ((t_final / dt).round() as usize).max(1);
            let traj = simulate(model, scheme, dt, steps, &z0)
                .map_err(|source| SweepError::Simulation { dt, source })?;
            let fit = fit_decay_rate(traj.energies(), dt)
                .map_err(|source| SweepError::Fit { dt, source })?;
            Ok(SweepMember { dt, fit })
        })
        .collect::<Result<_, SweepError>>()?;
    let rho = if members.iter().all(|m| m.fit.nu0 > NU_ZERO_TOL) {
        let min = members.iter().map(|m| m.fit.nu0).fold(f64::INFINITY, f64::min);
        let max = members.iter().map(|m| m.fit.nu0).fold(0.0_f64, f64::max);
        Some(min / max)
    } else {
        None
    };
    Ok(SweepReport { scheme, members, rho })
}
