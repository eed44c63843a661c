//! Implicit midpoint time stepping, with and without feedback damping and
//! numerical viscosity.
//!
//! One step of the damped midpoint scheme solves
//!
//! ```text
//! (z~ - z) / dt = M (z + z~) / 2,      M = A - B B*  (or A when conservative)
//! ```
//!
//! i.e. `(I - dt/2 M) z~ = (I + dt/2 M) z`. The viscous schemes append the
//! stage `(I - dt^3 A^2) z' = z~`, which leaves well-resolved modes nearly
//! untouched and damps a mode of frequency mu by roughly `(dt mu)^2` per
//! step — exactly the modes the midpoint rule fails to damp uniformly.
//!
//! Every step records an energy ledger row. With `S = (z + z~)/2` the two
//! stages satisfy, exactly in real arithmetic,
//!
//! ```text
//! E(z~)  =  E(z) - dt ||B* S||^2                       (damped stage)
//! E(z') + dt^3 ||A z'||_G^2 + dt^6/2 ||A^2 z'||_G^2  =  E(z~)
//! ```
//!
//! and the conservative stage keeps `E(z~) = E(z)`. Telescoping these rows
//! over a run reproduces the global energy balance; `ledger_residuals` in
//! [`crate::diagnostics`] measures how far floating point strays from it.

use crate::solvers::{ShiftedSolver, SolveError, ViscositySolver};
use crate::system::{ModelError, StateVector, SystemModel};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeId {
    MidpointDamped,
    ViscousDamped,
    MidpointConservative,
    ViscousConservative,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [
        SchemeId::MidpointDamped,
        SchemeId::ViscousDamped,
        SchemeId::MidpointConservative,
        SchemeId::ViscousConservative,
    ];

    pub fn is_viscous(self) -> bool {
        matches!(self, SchemeId::ViscousDamped | SchemeId::ViscousConservative)
    }

    pub fn is_damped(self) -> bool {
        matches!(self, SchemeId::MidpointDamped | SchemeId::ViscousDamped)
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::MidpointDamped => "midpoint_damped",
            SchemeId::ViscousDamped => "viscous_damped",
            SchemeId::MidpointConservative => "midpoint_conservative",
            SchemeId::ViscousConservative => "viscous_conservative",
        }
    }
}

impl std::fmt::Display for SchemeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown scheme `{0}`; expected one of midpoint_damped, viscous_damped, midpoint_conservative, viscous_conservative")]
pub struct ParseSchemeError(String);

impl std::str::FromStr for SchemeId {
    type Err = ParseSchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| ParseSchemeError(s.to_string()))
    }
}

/// Both stages of one step, plus the midpoint observation
/// `B* (z + z~)/2`. For non-viscous schemes `z_next == z_tilde`.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub z_tilde: StateVector,
    pub z_next: StateVector,
    pub damping_sample: DVector<f64>,
}

pub(crate) struct RawStep {
    pub z_tilde: DVector<f64>,
    pub z_next: DVector<f64>,
    pub damping_sample: DVector<f64>,
}

/// Per-state energy bookkeeping, one row per trajectory state.
///
/// Transition quantities are stored at the *arrival* index: row `k >= 1`
/// holds the damping and viscosity terms of the step from `k-1` to `k`, and
/// row 0 holds zeros (with `energy_tilde[0] = energy[0]`). `damp` records
/// the midpoint observation energy `dt ||B* S||^2` for every scheme; it
/// equals the dissipated energy exactly when the scheme is damped.
#[derive(Clone, Debug, Default)]
pub struct EnergyLedger {
    pub energy: Vec<f64>,
    pub energy_tilde: Vec<f64>,
    pub damp: Vec<f64>,
    pub visc3: Vec<f64>,
    pub visc6: Vec<f64>,
}

impl EnergyLedger {
    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    fn with_initial(e0: f64) -> Self {
        EnergyLedger {
            energy: vec![e0],
            energy_tilde: vec![e0],
            damp: vec![0.0],
            visc3: vec![0.0],
            visc6: vec![0.0],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub scheme: SchemeId,
    pub dt: f64,
    pub states: Vec<StateVector>,
    pub ledger: EnergyLedger,
}

impl Trajectory {
    pub fn num_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn energies(&self) -> &[f64] {
        &self.ledger.energy
    }

    pub fn final_energy(&self) -> f64 {
        *self.ledger.energy.last().expect("trajectory is never empty")
    }
}

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state became non-finite at step {step} (last finite energy {last_energy:.6e})")]
    NonFinite { step: usize, last_energy: f64 },
}

/// Time stepper with factorizations cached for a fixed `(model, scheme, dt)`.
pub struct Stepper<'m> {
    model: &'m SystemModel,
    scheme: SchemeId,
    dt: f64,
    midpoint: ShiftedSolver,
    viscosity: Option<ViscositySolver>,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m SystemModel, scheme: SchemeId, dt: f64) -> Result<Self, SolveError> {
        let midpoint = ShiftedSolver::new(model, dt / 2.0, scheme.is_damped())?;
        let viscosity = if scheme.is_viscous() {
            Some(ViscositySolver::new(model, dt)?)
        } else {
            None
        };
        Ok(Self {
            model,
            scheme,
            dt,
            midpoint,
            viscosity,
        })
    }

    pub fn scheme(&self) -> SchemeId {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn model(&self) -> &SystemModel {
        self.model
    }

    pub fn step(&self, z: &StateVector) -> Result<StepResult, SimulateError> {
        let coords = self.model.conforming(z)?;
        let raw = self.step_raw(coords)?;
        Ok(StepResult {
            z_tilde: self.model.state(raw.z_tilde)?,
            z_next: self.model.state(raw.z_next)?,
            damping_sample: raw.damping_sample,
        })
    }

    pub(crate) fn step_raw(&self, z: &DVector<f64>) -> Result<RawStep, SolveError> {
        let c = self.dt / 2.0;
        let m_z = if self.scheme.is_damped() {
            self.model.apply_a(z) - self.model.apply_b(&self.model.apply_bstar_raw(z))
        } else {
            self.model.apply_a(z)
        };
        let rhs = z + c * m_z;
        let z_tilde = self.midpoint.solve_raw(&rhs)?;
        let midpoint_state = 0.5 * (z + &z_tilde);
        let damping_sample = self.model.apply_bstar_raw(&midpoint_state);
        let z_next = match &self.viscosity {
            Some(v) => v.solve_raw(&z_tilde)?,
            None => z_tilde.clone(),
        };
        Ok(RawStep {
            z_tilde,
            z_next,
            damping_sample,
        })
    }

    fn ledger_row(&self, raw: &RawStep, ledger: &mut EnergyLedger) {
        ledger.energy.push(self.model.energy_raw(&raw.z_next));
        ledger.energy_tilde.push(self.model.energy_raw(&raw.z_tilde));
        ledger.damp.push(self.dt * raw.damping_sample.norm_squared());
        if self.scheme.is_viscous() {
            let az = self.model.apply_a(&raw.z_next);
            let aaz = self.model.apply_a(&az);
            let g = self.model;
            ledger.visc3.push(self.dt.powi(3) * g.g_inner(&az, &az));
            ledger
                .visc6
                .push(0.5 * self.dt.powi(6) * g.g_inner(&aaz, &aaz));
        } else {
            ledger.visc3.push(0.0);
            ledger.visc6.push(0.0);
        }
    }
}

/// Runs `num_steps` steps from `z0`, recording every state and ledger row.
/// Aborts at the first non-finite state rather than writing garbage.
pub fn simulate(
    model: &SystemModel,
    scheme: SchemeId,
    dt: f64,
    num_steps: usize,
    z0: &StateVector,
) -> Result<Trajectory, SimulateError> {
    let stepper = Stepper::new(model, scheme, dt)?;
    let mut coords = model.conforming(z0)?.clone();
    let mut states = Vec::with_capacity(num_steps + 1);
    states.push(z0.clone());
    let mut ledger = EnergyLedger::with_initial(model.energy_raw(&coords));
    for step in 1..=num_steps {
        let raw = stepper.step_raw(&coords)?;
        // The energy overflows before the raw entries do, so gate on both.
        if raw.z_next.iter().any(|x| !x.is_finite())
            || !model.energy_raw(&raw.z_next).is_finite()
        {
            return Err(SimulateError::NonFinite {
                step,
                last_energy: *ledger.energy.last().unwrap(),
            });
        }
        stepper.ledger_row(&raw, &mut ledger);
        coords = raw.z_next;
        states.push(model.state(coords.clone())?);
    }
    Ok(Trajectory {
        scheme,
        dt,
        states,
        ledger,
    })
}

/// Forced conservative stepper: `(I - dt/2 A) w~ = (I + dt/2 A) w + dt B v`
/// followed by the viscosity stage. Used for input-to-output bounds, where
/// the forcing enters through the feedback channels.
pub struct ForcedStepper<'m> {
    model: &'m SystemModel,
    dt: f64,
    midpoint: ShiftedSolver,
    viscosity: ViscositySolver,
}

impl<'m> ForcedStepper<'m> {
    pub fn new(model: &'m SystemModel, dt: f64) -> Result<Self, SolveError> {
        Ok(Self {
            model,
            dt,
            midpoint: ShiftedSolver::new(model, dt / 2.0, false)?,
            viscosity: ViscositySolver::new(model, dt)?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, w: &StateVector, v: &DVector<f64>) -> Result<StepResult, SimulateError> {
        let coords = self.model.conforming(w)?;
        let raw = self.step_raw(coords, v)?;
        Ok(StepResult {
            z_tilde: self.model.state(raw.z_tilde)?,
            z_next: self.model.state(raw.z_next)?,
            damping_sample: raw.damping_sample,
        })
    }

    pub(crate) fn step_raw(
        &self,
        w: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<RawStep, SolveError> {
        let c = self.dt / 2.0;
        let rhs = w + c * self.model.apply_a(w) + self.dt * self.model.apply_b(v);
        let w_tilde = self.midpoint.solve_raw(&rhs)?;
        let midpoint_state = 0.5 * (w + &w_tilde);
        let damping_sample = self.model.apply_bstar_raw(&midpoint_state);
        let w_next = self.viscosity.solve_raw(&w_tilde)?;
        Ok(RawStep {
            z_tilde: w_tilde,
            z_next: w_next,
            damping_sample,
        })
    }
}

/// One forced viscous step, factoring on the spot. Loops should hold a
/// [`ForcedStepper`].
pub fn step_viscous_forced(
    model: &SystemModel,
    dt: f64,
    w: &StateVector,
    v: &DVector<f64>,
) -> Result<StepResult, SimulateError> {
    ForcedStepper::new(model, dt)?.step(w, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn oracle2() -> SystemModel {
        SystemModel::new(
            "oracle2",
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    fn state2(m: &SystemModel, x: f64, y: f64) -> StateVector {
        m.state(DVector::from_vec(vec![x, y])).unwrap()
    }

    #[test]
    fn scheme_names_round_trip() {
        for id in SchemeId::ALL {
            assert_eq!(id.name().parse::<SchemeId>().unwrap(), id);
        }
        assert!("rk4".parse::<SchemeId>().is_err());
    }

    #[test]
    fn midpoint_conservative_quarter_turn() {
        // dt = 2 makes the Cayley map an exact quarter turn for this A.
        let m = oracle2();
        let stepper = Stepper::new(&m, SchemeId::MidpointConservative, 2.0).unwrap();
        let r = stepper.step(&state2(&m, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(r.z_next.coords()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z_next.coords()[1], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.energy(&r.z_next).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn viscous_conservative_frozen_step_and_ledger() {
        let m = oracle2();
        let traj = simulate(
            &m,
            SchemeId::ViscousConservative,
            2.0,
            1,
            &state2(&m, 1.0, 0.0),
        )
        .unwrap();
        let z1 = traj.states[1].coords();
        assert_abs_diff_eq!(z1[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z1[1], -1.0 / 9.0, epsilon = 1e-15);

        let l = &traj.ledger;
        assert_eq!(l.len(), 2);
        assert_abs_diff_eq!(l.energy[0], 0.5, epsilon = 1e-16);
        assert_abs_diff_eq!(l.energy_tilde[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(l.energy[1], 1.0 / 162.0, epsilon = 1e-16);
        assert_abs_diff_eq!(l.visc3[1], 8.0 / 81.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.visc6[1], 32.0 / 81.0, epsilon = 1e-15);
        // Viscous stage identity, exact up to roundoff.
        assert_abs_diff_eq!(
            l.energy[1] + l.visc3[1] + l.visc6[1],
            l.energy_tilde[1],
            epsilon = 1e-15
        );
    }

    #[test]
    fn midpoint_damped_frozen_step() {
        let m = oracle2();
        let stepper = Stepper::new(&m, SchemeId::MidpointDamped, 2.0).unwrap();
        let r = stepper.step(&state2(&m, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(r.z_next.coords()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z_next.coords()[1], -2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.energy(&r.z_next).unwrap(), 5.0 / 18.0, epsilon = 1e-15);
        assert_eq!(r.damping_sample.len(), 1);
        assert_abs_diff_eq!(r.damping_sample[0], -1.0 / 3.0, epsilon = 1e-15);
        // z_tilde and z_next coincide without viscosity.
        assert_eq!(r.z_tilde, r.z_next);
    }

    #[test]
    fn damped_stage_identity_in_ledger() {
        let m = oracle2();
        let traj = simulate(&m, SchemeId::MidpointDamped, 2.0, 1, &state2(&m, 1.0, 0.0)).unwrap();
        let l = &traj.ledger;
        // E~_1 = E_0 - dt ||B* S||^2 = 1/2 - 2/9 = 5/18.
        assert_abs_diff_eq!(l.damp[1], 2.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.energy_tilde[1], l.energy[0] - l.damp[1], epsilon = 1e-15);
    }

    #[test]
    fn forced_step_frozen_value() {
        let m = oracle2();
        let r = step_viscous_forced(&m, 2.0, &m.zero_state(), &DVector::from_vec(vec![1.0]))
            .unwrap();
        assert_abs_diff_eq!(r.z_tilde.coords()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z_tilde.coords()[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z_next.coords()[0], 1.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z_next.coords()[1], 1.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn forced_step_matches_one_step_matrix_form() {
        // w' = L w + dt R B v with R = (I - dt^3 A^2)^{-1} (I - dt/2 A)^{-1}
        // and L = R (I + dt/2 A).
        let m = oracle2();
        let dt = 0.7;
        let n = 2;
        let a = m.generator();
        let half = DMatrix::identity(n, n) - (dt / 2.0) * a;
        let visc = DMatrix::identity(n, n) - dt.powi(3) * (a * a);
        let r_mat = visc.clone().try_inverse().unwrap() * half.clone().try_inverse().unwrap();
        let l_mat = &r_mat * (DMatrix::identity(n, n) + (dt / 2.0) * a);

        let stepper = ForcedStepper::new(&m, dt).unwrap();
        let w = DVector::from_vec(vec![0.4, -1.1]);
        let v = DVector::from_vec(vec![0.9]);
        let raw = stepper.step_raw(&w, &v).unwrap();
        let expected = &l_mat * &w + dt * (&r_mat * (m.feedback() * &v));
        assert_abs_diff_eq!(
            (raw.z_next - expected).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn forced_step_is_affine_superposition() {
        let m = oracle2();
        let stepper = ForcedStepper::new(&m, 0.3).unwrap();
        let w = DVector::from_vec(vec![1.0, 2.0]);
        let v = DVector::from_vec(vec![-0.5]);
        let full = stepper.step_raw(&w, &v).unwrap().z_next;
        let homogeneous = stepper.step_raw(&w, &DVector::zeros(1)).unwrap().z_next;
        let forced = stepper.step_raw(&DVector::zeros(2), &v).unwrap().z_next;
        assert_abs_diff_eq!((full - homogeneous - forced).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn conservative_energy_drift_stays_tiny() {
        let m = oracle2();
        let traj = simulate(
            &m,
            SchemeId::MidpointConservative,
            0.31,
            500,
            &state2(&m, 0.6, -0.8),
        )
        .unwrap();
        let e0 = traj.ledger.energy[0];
        for &e in traj.energies() {
            assert!((e - e0).abs() <= 1e-12 * e0);
        }
    }

    #[test]
    fn damped_schemes_dissipate_monotonically() {
        let m = oracle2();
        for scheme in [SchemeId::MidpointDamped, SchemeId::ViscousDamped] {
            let traj = simulate(&m, scheme, 0.25, 200, &state2(&m, 1.0, 0.5)).unwrap();
            for w in traj.energies().windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-13), "{scheme}: {} > {}", w[1], w[0]);
            }
            assert!(traj.final_energy() < 0.01 * traj.ledger.energy[0]);
        }
    }

    #[test]
    fn overflow_aborts_with_step_index() {
        // A = I is expansive for the conservative midpoint map, so the state
        // blows up to infinity after a few hundred steps.
        let m = SystemModel::new(
            "runaway",
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let z0 = m.state(DVector::from_vec(vec![1.0])).unwrap();
        let err = simulate(&m, SchemeId::MidpointConservative, 1.9, 20_000, &z0).unwrap_err();
        match err {
            SimulateError::NonFinite { step, last_energy } => {
                assert!(step > 0);
                assert!(last_energy.is_finite());
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_shapes() {
        let m = oracle2();
        let traj = simulate(&m, SchemeId::ViscousDamped, 0.5, 7, &state2(&m, 1.0, 0.0)).unwrap();
        assert_eq!(traj.states.len(), 8);
        assert_eq!(traj.ledger.len(), 8);
        assert_eq!(traj.num_steps(), 7);
    }
}
