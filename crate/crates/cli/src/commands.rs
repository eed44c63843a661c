//! Subcommand implementations: config in, CSV artifacts out.

use std::fs;
use std::path::PathBuf;

use viscostab::certification::{
    bstar_graph_bound, continuous_decay_rate, hautus_scan, hautus_scan_auto,
    observability_gramian, transfer_norm_scan, CertificationError, GramianVariant,
    HAUTUS_POINTS_PER_UNIT,
};
use viscostab::diagnostics::{initial_state, stage_residuals, sweep_uniformity, NU_ZERO_TOL};
use viscostab::models::{build_beam_interior, build_wave_interior, BeamModelSpec, WaveModelSpec};
use viscostab::spectral::decompose;
use viscostab::{StateVector, SystemModel, Z0Policy};

use crate::config::{
    parse_config, ConfigError, ExperimentConfig, HautusGrid, ModelKind, ModelSection,
    RunSection, Z0PolicyKind,
};
use crate::output::{atomic_write, emit, fmt17, Csv, DECAY_PLOT};
use crate::{CliError, RunArgs};

struct Prepared {
    config: ExperimentConfig,
    model: SystemModel,
    out_dir: PathBuf,
}

fn prepare(args: &RunArgs) -> Result<Prepared, CliError> {
    if let Some(n) = args.threads {
        // Only the first global-pool initialization can win; later calls
        // (e.g. under tests) are harmless no-ops.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let text = fs::read_to_string(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut config = parse_config(&text).map_err(CliError::Config)?;
    if let Some(seed) = args.seed {
        config.run.get_or_insert_with(RunSection::default).seed = seed;
    }
    if args.emit_plots {
        config.output.emit_plots = true;
    }
    if let Some(dir) = &args.out {
        config.output.directory = dir.clone();
    }
    let model = build_model(&config.model)?;
    let out_dir = config.output.directory.clone();
    Ok(Prepared {
        config,
        model,
        out_dir,
    })
}

fn build_model(section: &ModelSection) -> Result<SystemModel, CliError> {
    match section.kind {
        ModelKind::Wave => build_wave_interior(&WaveModelSpec {
            n: section.n,
            xi_p: section.xi_p,
            xi_q: section.xi_q,
            alpha: section.alpha,
        }),
        ModelKind::Beam => build_beam_interior(&BeamModelSpec {
            n: section.n,
            xi_p: section.xi_p,
            xi_q: section.xi_q,
            alpha: section.alpha,
        }),
    }
    .map_err(CliError::Model)
}

/// The fixed profile behind `z0_policy = smooth`: `u(x) = sin(pi x / 2)`,
/// `v = 0`; compatible with both models' boundary conditions.
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
        .expect("smooth profile is finite")
}

fn z0_policy(model: &SystemModel, run: &RunSection) -> Z0Policy {
    match run.z0_policy {
        Z0PolicyKind::Smooth => Z0Policy::Fixed(smooth_state(model)),
        Z0PolicyKind::HighestMode => Z0Policy::HighestMode,
        Z0PolicyKind::RandomSeeded => Z0Policy::RandomSeeded(run.seed),
    }
}

fn plan_steps(dt: f64, t_final: f64, budget: usize) -> Result<usize, CliError> {
    let steps = ((t_final / dt).round() as usize).max(1);
    if steps > budget {
        return Err(CliError::Budget { steps, budget });
    }
    Ok(steps)
}

fn numerics(err: impl std::fmt::Display) -> CliError {
    CliError::Numerics(err.to_string())
}

fn cert_err(err: CertificationError) -> CliError {
    match err {
        CertificationError::StepBudget { steps, budget } => CliError::Budget { steps, budget },
        other => CliError::Numerics(other.to_string()),
    }
}

pub fn run_simulate(args: &RunArgs) -> Result<(), CliError> {
    let prep = prepare(args)?;
    let run = prep.config.run().map_err(CliError::Config)?;
    let scheme = run.scheme().map_err(CliError::Config)?;
    let dt = run.single_dt().map_err(CliError::Config)?;
    let t_final = run.t_final().map_err(CliError::Config)?;
    let steps = plan_steps(dt, t_final, run.step_budget)?;
    let z0 = initial_state(&prep.model, &z0_policy(&prep.model, run)).map_err(numerics)?;
    let traj =
        viscostab::schemes::simulate(&prep.model, scheme, dt, steps, &z0).map_err(numerics)?;
    let stage = stage_residuals(&traj);
    let ledger = &traj.ledger;
    let mut csv = Csv::new("k,t,E,E_tilde,damp,visc3,visc6,stage_residual");
    for k in 0..=steps {
        csv.row(&[
            k.to_string(),
            fmt17(k as f64 * dt),
            fmt17(ledger.energy[k]),
            fmt17(ledger.energy_tilde[k]),
            fmt17(ledger.damp[k]),
            fmt17(ledger.visc3[k]),
            fmt17(ledger.visc6[k]),
            fmt17(stage[k]),
        ]);
    }
    csv.write(&prep.out_dir.join("trajectory.csv"))
}

pub fn run_sweep(args: &RunArgs) -> Result<(), CliError> {
    let prep = prepare(args)?;
    let run = prep.config.run().map_err(CliError::Config)?;
    let scheme = run.scheme().map_err(CliError::Config)?;
    let t_final = run.t_final().map_err(CliError::Config)?;
    let dts = run.dt_list().map_err(CliError::Config)?;
    if dts.len() < 3 {
        return Err(CliError::Config(ConfigError::global(
            "sweep requires 'dt_list' with at least 3 entries",
        )));
    }
    for &dt in dts {
        plan_steps(dt, t_final, run.step_budget)?;
    }
    let policy = z0_policy(&prep.model, run);
    let report =
        sweep_uniformity(&prep.model, scheme, dts, t_final, &policy).map_err(numerics)?;
    let mut csv = Csv::new("dt,nu_hat,mu_hat,r2,rho_running");
    let mut min_nu = f64::INFINITY;
    let mut max_nu = 0.0_f64;
    let mut all_damped = true;
    for member in &report.members {
        all_damped &= member.fit.nu0 > NU_ZERO_TOL;
        min_nu = min_nu.min(member.fit.nu0);
        max_nu = max_nu.max(member.fit.nu0);
        let rho_running = if all_damped { min_nu / max_nu } else { f64::NAN };
        csv.row(&[
            fmt17(member.dt),
            fmt17(member.fit.nu0),
            fmt17(member.fit.mu0),
            fmt17(member.fit.r_squared),
            fmt17(rho_running),
        ]);
    }
    csv.write(&prep.out_dir.join("sweep.csv"))?;
    if prep.config.output.emit_plots {
        let path = prep.out_dir.join("decay.gnuplot");
        atomic_write(&path, DECAY_PLOT)?;
        emit(&format!("wrote {}", path.display()));
    }
    Ok(())
}

/// Scan grid for the transfer sweep: the explicit Hautus grid when one is
/// configured, otherwise the same spectrum-derived default the auto Hautus
/// scan uses.
fn transfer_grid(
    model: &SystemModel,
    grid: Option<HautusGrid>,
) -> Result<Vec<f64>, CliError> {
    let (min, max, points) = match grid {
        Some(HautusGrid::Explicit {
            omega_min,
            omega_max,
            points,
        }) => (omega_min, omega_max, points),
        Some(HautusGrid::Auto) | None => {
            let decomp = decompose(model).map_err(numerics)?;
            let edge = decomp.max_abs_frequency() + 1.0;
            let points = ((2.0 * edge * HAUTUS_POINTS_PER_UNIT).ceil() as usize).max(3);
            (-edge, edge, points)
        }
    };
    Ok((0..points)
        .map(|i| min + (max - min) * i as f64 / (points - 1) as f64)
        .collect())
}

pub fn run_certify(args: &RunArgs) -> Result<(), CliError> {
    let prep = prepare(args)?;
    let certify = &prep.config.certify;
    if !certify.any_enabled() {
        return Err(CliError::Config(ConfigError::global(
            "[certify] enables nothing: set hautus_grid, beta_list, or gramian_variants",
        )));
    }
    if let Some(grid) = certify.hautus_grid {
        let report = match grid {
            HautusGrid::Auto => hautus_scan_auto(&prep.model),
            HautusGrid::Explicit {
                omega_min,
                omega_max,
                points,
            } => hautus_scan(&prep.model, omega_min, omega_max, points),
        }
        .map_err(cert_err)?;
        let mut csv = Csv::new("omega,kappa");
        for (omega, kappa) in report.omega_grid.iter().zip(&report.kappa) {
            csv.row(&[fmt17(*omega), fmt17(*kappa)]);
        }
        csv.write(&prep.out_dir.join("hautus.csv"))?;
    }
    if let Some(betas) = &certify.beta_list {
        let omegas = transfer_grid(&prep.model, certify.hautus_grid)?;
        let mut csv = Csv::new("beta,omega,hnorm");
        for &beta in betas {
            let scan = transfer_norm_scan(&prep.model, beta, &omegas).map_err(cert_err)?;
            for (omega, hnorm) in scan.omega_grid.iter().zip(&scan.norms) {
                csv.row(&[fmt17(beta), fmt17(*omega), fmt17(*hnorm)]);
            }
        }
        csv.write(&prep.out_dir.join("transfer.csv"))?;
    }
    if let Some(variants) = &certify.gramian_variants {
        let run = prep.config.run().map_err(CliError::Config)?;
        let dts = run.dt_list().map_err(CliError::Config)?;
        let t_final = certify
            .t_final
            .or(run.t_final)
            .ok_or_else(|| {
                CliError::Config(ConfigError::global(
                    "gramian_variants needs 't_final' in [certify] or [run]",
                ))
            })?;
        if variants.contains(&GramianVariant::Filtered) && certify.delta.is_none() {
            return Err(CliError::Config(ConfigError::global(
                "the filtered gramian needs 'delta' in [certify]",
            )));
        }
        let mut csv = Csv::new("variant,dt,T,lambda_min,lambda_max,term_b,term_a1,term_a2");
        for &variant in variants {
            for &dt in dts {
                let delta = (variant == GramianVariant::Filtered)
                    .then(|| certify.delta.expect("checked above"));
                let report = observability_gramian(&prep.model, variant, dt, t_final, delta)
                    .map_err(cert_err)?;
                csv.row(&[
                    variant.name().to_string(),
                    fmt17(dt),
                    fmt17(t_final),
                    fmt17(report.lambda_min),
                    fmt17(report.lambda_max),
                    fmt17(report.term_b),
                    fmt17(report.term_a1),
                    fmt17(report.term_a2),
                ]);
            }
        }
        csv.write(&prep.out_dir.join("gramian.csv"))?;
    }
    Ok(())
}

pub fn run_spectrum(args: &RunArgs) -> Result<(), CliError> {
    let prep = prepare(args)?;
    let decomp = decompose(&prep.model).map_err(numerics)?;
    let mut csv = Csv::new("index,mu,residual");
    for i in 0..decomp.dim() {
        csv.row(&[
            i.to_string(),
            fmt17(decomp.frequencies()[i]),
            fmt17(decomp.residuals()[i]),
        ]);
    }
    csv.write(&prep.out_dir.join("spectrum.csv"))
}

pub fn run_model_info(args: &RunArgs) -> Result<(), CliError> {
    let prep = prepare(args)?;
    let validation = prep.model.validate();
    let decomp = decompose(&prep.model).map_err(numerics)?;
    emit(&format!("label = {}", prep.model.label()));
    emit(&format!("dim = {}", prep.model.dim()));
    emit(&format!("channels = {}", prep.model.channels()));
    emit(&format!("skew_residual = {}", fmt17(validation.skew_residual)));
    emit(&format!("skew_pass = {}", validation.skew_pass));
    emit(&format!("gram_spd = {}", validation.gram_spd));
    emit(&format!("max_frequency = {}", fmt17(decomp.max_abs_frequency())));
    emit(&format!("graph_bound = {}", fmt17(bstar_graph_bound(&prep.model))));
    emit(&format!(
        "continuous_decay_rate = {}",
        fmt17(continuous_decay_rate(&prep.model))
    ));
    Ok(())
}
