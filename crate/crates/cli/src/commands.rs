//! The `synthesize`, `certify`, `simulate`, `pipeline` and `sweep` commands.

use crate::config::{parse_strict, sweep_entry, RunConfig, DEFAULT_Z0_MODES};
use crate::error::CliError;
use crate::report;
use log::{info, warn};
use parstab::certification::{certify, required_modes, CertificationRun};
use parstab::simulation::{default_n_sim, gaussian_bump, project_initial, SimulationRun, Simulator};
use parstab::synthesis::{synthesize, SynthesisArtifacts};
use parstab::{BasisProvider, Error, SeparableBasis};
use rayon::prelude::*;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

pub const SYNTHESIS_FILE: &str = "synthesis.json";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.json";

/// Caps sweep parallelism.
pub const THREADS_ENV: &str = "PARSTAB_THREADS";

/// Basis and design shared by every command.
pub struct Prepared {
    pub basis: SeparableBasis,
    pub artifacts: SynthesisArtifacts,
}

/// Modes the basis must hold for every stage of this config. Depends only
/// on the config, so all commands see the same enumeration.
pub fn basis_size(config: &RunConfig) -> usize {
    let n = config.synthesis.n;
    let n_sim = config.simulation.n_sim.unwrap_or_else(|| default_n_sim(n));
    let z0 = config.simulation.z0.coefficients.as_ref().map_or(0, Vec::len);
    let bump = config.simulation.z0.bump.as_ref().and_then(|b| b.modes).unwrap_or(0);
    [
        config.synthesis.admissibility_modes,
        required_modes(config.certification.n_max, &config.certification_options()),
        n_sim,
        z0,
        bump,
        n,
    ]
    .into_iter()
    .max()
    .unwrap_or(n)
        + 1
}

pub fn prepare(config: &RunConfig) -> Result<Prepared, CliError> {
    let plant = config.plant_config()?;
    let basis = SeparableBasis::new(&plant, basis_size(config)).map_err(CliError::Synthesis)?;
    let artifacts = synthesize(
        &basis,
        &config.sensors(),
        config.synthesis.n,
        &config.synthesis_options(),
    )
    .map_err(CliError::Synthesis)?;
    info!(
        "synthesized N = {}, N0 = {}, gamma = {:?}, abscissa(F) = {:.4}",
        artifacts.n(),
        artifacts.n0,
        artifacts.gammas(),
        artifacts.closed_loop.f_abscissa
    );
    Ok(Prepared { basis, artifacts })
}

pub fn run_certification(config: &RunConfig, p: &Prepared) -> Result<CertificationRun, CliError> {
    let run = certify(
        &p.artifacts,
        &p.basis,
        config.n_start(),
        config.certification.n_max,
        &config.certification_options(),
    )
    .map_err(|e| CliError::Certification(e.to_string()))?;
    for w in &run.warnings {
        warn!("{w}");
    }
    Ok(run)
}

/// Plant coefficients of the configured initial state.
pub fn initial_coefficients(config: &RunConfig, basis: &dyn BasisProvider) -> Result<Vec<f64>, CliError> {
    let z = &config.simulation.z0;
    if let Some(modes) = &z.modes {
        let mut out = Vec::new();
        for (i, m) in modes.iter().enumerate() {
            let pos = basis
                .eigenpairs()
                .iter()
                .position(|e| e.multi_index == m.index)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "/simulation/z0/modes/{i}/index: mode {:?} is not among the {} enumerated modes",
                        m.index,
                        basis.len()
                    ))
                })?;
            if out.len() <= pos {
                out.resize(pos + 1, 0.0);
            }
            out[pos] += m.value;
        }
        return Ok(out);
    }
    if let Some(c) = &z.coefficients {
        return Ok(c.clone());
    }
    if let Some(b) = &z.bump {
        let n_sim = config
            .simulation
            .n_sim
            .unwrap_or_else(|| default_n_sim(config.synthesis.n));
        let f = gaussian_bump(b.centre.clone(), b.sigma, b.amplitude);
        return project_initial(basis, f, b.modes.unwrap_or(n_sim))
            .map_err(|e| CliError::Config(format!("/simulation/z0/bump: {e}")));
    }
    Ok(vec![1.0; DEFAULT_Z0_MODES])
}

pub fn run_simulation(config: &RunConfig, p: &Prepared) -> Result<SimulationRun, CliError> {
    let sim = Simulator::new(&p.basis, &p.artifacts, config.sim_options()).map_err(sim_error)?;
    let z0 = initial_coefficients(config, &p.basis)?;
    let run = sim
        .run(&z0, config.simulation.t_end, None)
        .map_err(sim_error)?;
    info!(
        "simulated {} steps (h = {:.3e}, N_sim = {}): decay rate {:.4}",
        run.steps, run.h, run.n_sim, run.decay_rate
    );
    Ok(run)
}

fn sim_error(e: Error) -> CliError {
    match e {
        Error::Divergence { .. } => CliError::Divergence(e),
        other => CliError::Config(format!("/simulation: {other}")),
    }
}

fn out_dir(config: &RunConfig, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output.dir.clone());
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_synthesize(config: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let dir = out_dir(config, out)?;
    let p = prepare(config)?;
    write(&dir, SYNTHESIS_FILE, &report::to_json_string(&report::synthesis_report(&p.artifacts)))
}

pub fn cmd_certify(config: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let dir = out_dir(config, out)?;
    let p = prepare(config)?;
    let run = run_certification(config, &p)?;
    write(&dir, CERTIFICATE_FILE, &report::to_json_string(&report::certificate_report(&run)))?;
    check_certified(&run)
}

/// Synthesis is recomputed from the config (it is deterministic) rather than
/// read back from a previous report.
pub fn cmd_simulate(config: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let dir = out_dir(config, out)?;
    let p = prepare(config)?;
    let run = run_simulation(config, &p)?;
    write(&dir, TIMESERIES_FILE, &report::timeseries_csv(&run.records))?;
    let summary = report::simulation_summary(&run, p.artifacts.delta, None);
    write(&dir, SUMMARY_FILE, &report::to_json_string(&summary))
}

/// All three stages. A failed certificate is recorded in the reports and,
/// when `certification.enforce` is set, turns into exit code 3 after the
/// simulation has been written.
pub fn cmd_pipeline(config: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let dir = out_dir(config, out)?;
    let p = prepare(config)?;
    write(&dir, SYNTHESIS_FILE, &report::to_json_string(&report::synthesis_report(&p.artifacts)))?;
    let cert = run_certification(config, &p)?;
    write(&dir, CERTIFICATE_FILE, &report::to_json_string(&report::certificate_report(&cert)))?;
    let run = run_simulation(config, &p)?;
    write(&dir, TIMESERIES_FILE, &report::timeseries_csv(&run.records))?;
    let summary = report::simulation_summary(&run, p.artifacts.delta, Some(&cert.certificate));
    write(&dir, SUMMARY_FILE, &report::to_json_string(&summary))?;
    if config.certification.enforce {
        check_certified(&cert)
    } else {
        Ok(())
    }
}

fn check_certified(run: &CertificationRun) -> Result<(), CliError> {
    let c = &run.certificate;
    if c.is_certified() {
        Ok(())
    } else {
        Err(CliError::Certification(format!(
            "no certificate up to N = {}: {}",
            c.n,
            c.blocking.join("; ")
        )))
    }
}

/// Runs the pipeline for every sweep entry in `out/sweep-XXX/` and writes an
/// index. Returns the first failure in entry order, after all runs finish.
pub fn cmd_sweep(config_path: &Path, config: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    if config.sweep.is_empty() {
        return Err(CliError::Config("/sweep: no sweep entries".into()));
    }
    let dir = out_dir(config, out)?;
    let text = fs::read_to_string(config_path)?;
    let base = parse_strict(&text)?;
    let entries = (0..config.sweep.len())
        .map(|i| sweep_entry(&base, i))
        .collect::<Result<Vec<_>, _>>()?;
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let results: Vec<Result<(), CliError>> = pool.install(|| {
        entries
            .par_iter()
            .enumerate()
            .map(|(i, entry)| cmd_pipeline(entry, Some(&dir.join(format!("sweep-{i:03}")))))
            .collect()
    });
    let index: Vec<_> = results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "entry": i,
                "dir": format!("sweep-{i:03}"),
                "exit_code": r.as_ref().map_or_else(CliError::exit_code, |_| 0),
                "error": r.as_ref().err().map(ToString::to_string),
            })
        })
        .collect();
    let doc = json!({"schema_version": report::SCHEMA_VERSION, "runs": index});
    write(&dir, SWEEP_FILE, &report::to_json_string(&doc))?;
    results.into_iter().find_map(Result::err).map_or(Ok(()), Err)
}
