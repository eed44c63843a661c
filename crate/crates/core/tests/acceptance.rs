//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines
//! regardless of outcome.

use nalgebra::{dvector, DMatrix};
use viscostab::certification::{
    forced_bound_ratio, hautus_scan, hautus_scan_auto, observability_gramian,
    transfer_norm_scan, GramianVariant,
};
use viscostab::diagnostics::{ledger_residuals, sweep_uniformity, Z0Policy};
use viscostab::models::{
    build_beam_interior, build_wave_interior, BeamModelSpec, WaveModelSpec,
};
use viscostab::schemes::simulate;
use viscostab::spectral::decompose;
use viscostab::{SchemeId, StateVector, SystemModel};

fn report(number: usize, name: &str, pass: bool) {
    println!(
        "ACCEPTANCE {number} {name}: {}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn oracle2(beta: f64) -> SystemModel {
    SystemModel::new(
        "oracle2",
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, beta]),
        DMatrix::identity(2, 2),
    )
    .unwrap()
}

fn wave(n: usize, alpha: f64) -> SystemModel {
    build_wave_interior(&WaveModelSpec {
        n,
        xi_p: 1,
        xi_q: 2,
        alpha,
    })
    .unwrap()
}

/// `u(x) = sin(pi x / 2)`, `v = 0`: smooth, satisfies the boundary
/// conditions of both models.
fn smooth_state(model: &SystemModel) -> StateVector {
    let n = model.dim() / 2;
    model
        .state_from_fn(|i| {
            if i < n {
                let x = (i + 1) as f64 / n as f64;
                (std::f64::consts::FRAC_PI_2 * x).sin()
            } else {
                0.0
            }
        })
        .unwrap()
}

#[test]
fn criterion_1_exact_ledger() {
    let model = oracle2(1.0);
    let z0 = model.state(dvector![1.0, 0.0]).unwrap();
    let traj = simulate(&model, SchemeId::ViscousConservative, 2.0, 1, &z0).unwrap();
    let ledger = &traj.ledger;
    let tol = 1e-14;
    let pass = (ledger.energy[1] - 1.0 / 162.0).abs() <= tol
        && (ledger.visc3[1] - 8.0 / 81.0).abs() <= tol
        && (ledger.visc6[1] - 32.0 / 81.0).abs() <= tol
        && (ledger.energy_tilde[1] - 0.5).abs() <= tol
        && (ledger.energy[1] + ledger.visc3[1] + ledger.visc6[1] - ledger.energy_tilde[1]).abs()
            <= tol;
    report(1, "exact ledger on the 2x2 oracle", pass);
    assert!(
        pass,
        "E1 {} visc3 {} visc6 {} E~1 {}",
        ledger.energy[1], ledger.visc3[1], ledger.visc6[1], ledger.energy_tilde[1]
    );
}

#[test]
fn criterion_2_energy_identities_at_scale() {
    let model = wave(100, 1.0);
    let z0 = smooth_state(&model);
    let traj = simulate(&model, SchemeId::ViscousDamped, 0.01, 2000, &z0).unwrap();
    let (stage, telescoped) = ledger_residuals(&traj).unwrap();
    let pass = stage <= 1e-9 && telescoped <= 1e-9;
    report(2, "energy identities on the n=100 wave", pass);
    assert!(pass, "stage {stage} telescoped {telescoped}");
}

#[test]
fn criterion_3_exact_conservation() {
    let model = wave(100, 0.0);
    let z0 = smooth_state(&model);
    let traj = simulate(&model, SchemeId::MidpointConservative, 0.01, 2000, &z0).unwrap();
    let e0 = traj.energies()[0];
    let drift = traj
        .energies()
        .iter()
        .map(|e| (e - e0).abs() / e0)
        .fold(0.0_f64, f64::max);
    let pass = drift <= 1e-10;
    report(3, "exact conservation without damping", pass);
    assert!(pass, "max relative drift {drift}");
}

#[test]
fn criterion_4_uniform_decay_with_viscosity() {
    let model = wave(100, 1.0);
    let z0 = Z0Policy::Fixed(smooth_state(&model));
    let sweep = sweep_uniformity(
        &model,
        SchemeId::ViscousDamped,
        &[0.1, 0.05, 0.02, 0.01],
        20.0,
        &z0,
    )
    .unwrap();
    let all_positive = sweep.members.iter().all(|m| m.fit.nu0 > 0.0);
    let rho = sweep.rho.unwrap_or(f64::NAN);
    let pass = all_positive && rho >= 0.5;
    report(4, "uniform decay with viscosity", pass);
    assert!(
        pass,
        "rates {:?} rho {rho}",
        sweep.members.iter().map(|m| m.fit.nu0).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_5_non_uniformity_without_viscosity() {
    let model = wave(100, 1.0);
    let sweep = sweep_uniformity(
        &model,
        SchemeId::MidpointDamped,
        &[0.1, 0.05, 0.02, 0.01],
        20.0,
        &Z0Policy::HighestMode,
    )
    .unwrap();
    let nu: Vec<f64> = sweep.members.iter().map(|m| m.fit.nu0).collect();
    // Criterion as stated: nu decreases monotonically as dt decreases, with
    // nu(0.01)/nu(0.1) <= 0.5. The dt list is ordered largest first.
    let monotone = nu.windows(2).all(|w| w[1] < w[0]);
    let ratio = nu[3] / nu[0];
    let pass = monotone && ratio <= 0.5;
    report(5, "non-uniformity without viscosity", pass);
    assert!(pass, "rates by dt {:?} ratio {ratio}", nu);
}

#[test]
fn criterion_6_hautus_certificate() {
    let oracle = oracle2(1.0);
    let scan = hautus_scan(&oracle, 0.5, 1.5, 3).unwrap();
    let at_one = scan
        .omega_grid
        .iter()
        .position(|&w| w == 1.0)
        .expect("omega = 1 on the grid");
    let expected = (5.0 - 17.0_f64.sqrt()) / 2.0;
    let oracle_ok = (scan.kappa[at_one] - expected).abs() <= 1e-10;

    let damped = wave(100, 1.0);
    let damped_scan = hautus_scan_auto(&damped).unwrap();
    let wave_ok = damped_scan.kappa_min > 0.0;

    let conservative = wave(100, 0.0);
    let decomp = decompose(&conservative).unwrap();
    let cons_scan = hautus_scan_auto(&conservative).unwrap();
    let zeros_ok = decomp
        .frequencies()
        .iter()
        .filter(|&&mu| mu > 0.0)
        .all(|&mu| {
            let at = cons_scan
                .omega_grid
                .iter()
                .position(|&w| w == mu)
                .expect("eigenfrequency injected");
            cons_scan.kappa[at] <= 1e-10
        });

    let pass = oracle_ok && wave_ok && zeros_ok;
    report(6, "Hautus certificate", pass);
    assert!(
        pass,
        "oracle kappa(1) {} (want {expected}), wave kappa_min {}, zeros {zeros_ok}",
        scan.kappa[at_one], damped_scan.kappa_min
    );
}

#[test]
fn criterion_7_observability_uniformity() {
    let model = wave(100, 1.0);
    let mut pass = true;
    let mut detail = String::new();
    for variant in [GramianVariant::DiscreteViscous, GramianVariant::Filtered] {
        let delta = (variant == GramianVariant::Filtered).then_some(1.0);
        let fine = observability_gramian(&model, variant, 0.05, 4.0, delta).unwrap();
        let finer = observability_gramian(&model, variant, 0.025, 4.0, delta).unwrap();
        let ratio = fine.lambda_min / finer.lambda_min;
        let ok = fine.lambda_min > 0.0
            && finer.lambda_min > 0.0
            && (0.5..=2.0).contains(&ratio);
        detail.push_str(&format!(
            "{}: {:.3e} / {:.3e} (ratio {:.3}) ",
            variant.name(),
            fine.lambda_min,
            finer.lambda_min,
            ratio
        ));
        pass &= ok;
    }
    report(7, "observability uniformity", pass);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_8_admissibility_bound() {
    let model = wave(100, 1.0);
    let ratios: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| {
            forced_bound_ratio(&model, dt, 4.0, 50, 2026)
                .unwrap()
                .worst_ratio
        })
        .collect();
    let finite = ratios.iter().all(|r| r.is_finite() && *r > 0.0);
    let spread = ratios.iter().fold(0.0_f64, |a, &b| a.max(b))
        / ratios.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let pass = finite && spread <= 2.0;
    report(8, "admissibility bound stability", pass);
    assert!(pass, "ratios {ratios:?} spread {spread}");
}

#[test]
fn criterion_9_transfer_bounded() {
    let grid: Vec<f64> = (0..2001).map(|i| -100.0 + 0.1 * i as f64).collect();
    let wave_sup = transfer_norm_scan(&wave(40, 1.0), 1.0, &grid).unwrap().sup;
    let beam = build_beam_interior(&BeamModelSpec {
        n: 40,
        xi_p: 1,
        xi_q: 2,
        alpha: 1.0,
    })
    .unwrap();
    let beam_sup = transfer_norm_scan(&beam, 1.0, &grid).unwrap().sup;
    let oracle_sup = transfer_norm_scan(&oracle2(1.0), 1.0, &[0.0]).unwrap().sup;
    let pass = wave_sup.is_finite()
        && beam_sup.is_finite()
        && (oracle_sup - 0.5).abs() <= 1e-12;
    report(9, "transfer function bounded on the beta = 1 line", pass);
    assert!(pass, "wave {wave_sup} beam {beam_sup} oracle {oracle_sup}");
}

#[test]
fn criterion_10_spectral_consistency() {
    let coarse = decompose(&wave(50, 0.0)).unwrap();
    let fine = decompose(&wave(100, 0.0)).unwrap();
    let lowest = |d: &viscostab::spectral::ModalDecomposition| -> Vec<f64> {
        let mut plus: Vec<f64> = d.frequencies().iter().copied().filter(|f| *f > 0.0).collect();
        plus.sort_by(f64::total_cmp);
        plus.truncate(5);
        plus
    };
    let pass = lowest(&coarse)
        .iter()
        .zip(lowest(&fine).iter())
        .enumerate()
        .all(|(j, (mc, mf))| {
            let target = (j as f64 + 0.5) * std::f64::consts::PI;
            let ratio = (mc - target).abs() / (mf - target).abs();
            (3.5..=4.5).contains(&ratio)
        });
    report(10, "second-order spectral consistency", pass);
    assert!(pass);
}
