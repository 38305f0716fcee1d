//! JSON reports and the CSV time series.
//!
//! Floats are written in shortest round-trip form, so re-parsing a report
//! reproduces every matrix entry bit for bit.

use nalgebra::DMatrix;
use parstab::certification::{Certificate, CertificationRun};
use parstab::simulation::{SimulationRun, StepRecord};
use parstab::synthesis::SynthesisArtifacts;
use serde_json::{json, Value};
use std::fmt::Write as _;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 10] = [
    "t",
    "l2_proxy",
    "h1_proxy",
    "y1",
    "y2",
    "u_l2_gamma1",
    "err_finite",
    "err_residual",
    "zhat_l1",
    "combined",
];

pub fn matrix(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::from((0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>()))
            .collect(),
    )
}

/// Inverse of [`matrix`]; `None` on ragged or non-numeric input.
pub fn matrix_from(v: &Value) -> Option<DMatrix<f64>> {
    let rows = v.as_array()?;
    let ncols = rows.first().map_or(Some(0), |r| r.as_array().map(Vec::len))?;
    let mut out = DMatrix::zeros(rows.len(), ncols);
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_array()?;
        if r.len() != ncols {
            return None;
        }
        for (j, x) in r.iter().enumerate() {
            out[(i, j)] = x.as_f64()?;
        }
    }
    Some(out)
}

pub fn synthesis_report(art: &SynthesisArtifacts) -> Value {
    let ladder = &art.ladder;
    let cl = &art.closed_loop;
    json!({
        "schema_version": SCHEMA_VERSION,
        "delta": art.delta,
        "N": cl.n,
        "N0": art.n0,
        "pattern": art.pattern,
        "eigenvalues": art.lambdas,
        "eta": art.eta,
        "gamma_base": ladder.gamma_base,
        "gamma": ladder.gammas,
        "Lambda_gamma": ladder.lambda_gammas.iter().map(matrix).collect::<Vec<_>>(),
        "B": matrix(&art.b),
        "Bk": ladder.bk.iter().map(matrix).collect::<Vec<_>>(),
        "A": matrix(&ladder.a),
        "Xi": matrix(&art.xi),
        "gain_matrix": matrix(&ladder.gain_matrix),
        "gain_abscissa": ladder.abscissa,
        "sum_Bk_cond": ladder.cond,
        "sensors": {"xi1": art.sensors.xi1, "xi2": art.sensors.xi2},
        "C0": matrix(&art.c0),
        "L": matrix(&art.l),
        "observer_abscissa": art.observer_abscissa,
        "K": matrix(&art.k),
        "F_abscissa": cl.f_abscissa,
    })
}

fn round_summary(c: &Certificate) -> Value {
    json!({
        "N": c.n,
        "status": c.status.label(),
        "blocking": c.blocking,
        "epsilon": c.epsilon,
        "eta": c.eta_cert,
        "S1": c.s1,
        "S2": c.s2,
        "S_phi": c.sphi,
        "theta1_max": c.theta1_max,
        "Theta2": c.psi_bound,
        "P_norm": c.p_norm,
        "P_min_eig": c.p_min_eig,
        "lyapunov_residual": c.lyapunov_residual,
        "tail_converged": c.tail_converged,
        "N_tail": c.n_tail,
    })
}

pub fn certificate_report(run: &CertificationRun) -> Value {
    let c = &run.certificate;
    let mut v = round_summary(c);
    let extra = json!({
        "schema_version": SCHEMA_VERSION,
        "nu": c.nu,
        "delta": c.delta,
        "P": matrix(&c.p),
        "rounds": run.rounds.iter().map(round_summary).collect::<Vec<_>>(),
        "P_norm_history": run.p_norm_history,
        "warnings": run.warnings,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    v
}

pub fn simulation_summary(run: &SimulationRun, delta: f64, certificate: Option<&Certificate>) -> Value {
    let first = run.records.first().copied();
    let last = run.records.last().copied();
    let combined = |r: Option<StepRecord>| r.map(|r| r.combined());
    json!({
        "schema_version": SCHEMA_VERSION,
        "decay_rate": run.decay_rate,
        "delta": delta,
        "meets_target": run.decay_rate <= -delta,
        "t_skip": run.t_skip,
        "t_end": last.map(|r| r.t),
        "steps": run.steps,
        "h": run.h,
        "N_sim": run.n_sim,
        "initial_combined": combined(first),
        "terminal_combined": combined(last),
        "initial_h1_proxy": first.map(|r| r.h1_proxy),
        "terminal_h1_proxy": last.map(|r| r.h1_proxy),
        "identity_max": run.identity_max,
        "identity_checks": run.identity_checks,
        "certificate": certificate.map(|c| json!({
            "status": c.status.label(),
            "N": c.n,
            "blocking": c.blocking,
        })),
    })
}

pub fn to_json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn push_float(out: &mut String, x: f64) {
    if x.is_finite() {
        let mut buf = ryu::Buffer::new();
        out.push_str(buf.format_finite(x));
    } else {
        let _ = write!(out, "{x}");
    }
}

pub fn timeseries_csv(records: &[StepRecord]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let row = [
            r.t,
            r.l2_proxy,
            r.h1_proxy,
            r.y1,
            r.y2,
            r.u_l2_gamma1,
            r.err_finite,
            r.err_residual,
            r.zhat_l1,
            r.combined(),
        ];
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            push_float(&mut out, *x);
        }
        out.push('\n');
    }
    out
}
