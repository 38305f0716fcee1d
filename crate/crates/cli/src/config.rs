//! Run configuration: JSON in, validated [`RunConfig`] out.
//!
//! Parsing is strict. Repeated keys are rejected, unknown keys are rejected,
//! and every error carries a JSON pointer to the offending value.

use crate::error::CliError;
use parstab::certification::CertificationOptions;
use parstab::lifting::TailPolicy;
use parstab::simulation::{Integrator, SimOptions};
use parstab::synthesis::{Sensors, SynthesisOptions};
use parstab::{Face, PlantConfig, Side};
use serde::de::{self, DeserializeSeed, MapAccess, SeqAccess, Visitor};
use serde::Deserialize;
use serde_json::Value;
use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantBlock,
    pub sensors: SensorBlock,
    #[serde(default)]
    pub synthesis: SynthesisBlock,
    #[serde(default)]
    pub certification: CertificationBlock,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub output: OutputBlock,
    /// Partial configs merged over this one, one run each.
    #[serde(default)]
    pub sweep: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `(0, π)²`, `b = (3, 3)`, `c = 10`, control on `{x₂ = 0}`.
    Example,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantBlock {
    pub preset: Option<Preset>,
    pub d: Option<usize>,
    pub lengths: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub c: Option<f64>,
    pub control_face: Option<FaceBlock>,
    pub nu: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceBlock {
    /// Zero-based normal axis.
    pub axis: usize,
    pub side: SideName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideName {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorBlock {
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisBlock {
    pub n: usize,
    pub c_ratio: f64,
    pub gamma_base: f64,
    pub gamma_base_cap: f64,
    pub spread: Option<f64>,
    pub cond_limit: f64,
    pub sensor_tol: f64,
    pub allow_generalized: bool,
    pub admissibility_modes: usize,
}

impl Default for SynthesisBlock {
    fn default() -> Self {
        let o = SynthesisOptions::default();
        Self {
            n: 30,
            c_ratio: o.c_ratio,
            gamma_base: o.gamma_base,
            gamma_base_cap: o.gamma_base_cap,
            spread: o.spread,
            cond_limit: o.cond_limit,
            sensor_tol: o.sensor_tol,
            allow_generalized: o.allow_generalized,
            admissibility_modes: o.admissibility_modes,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificationBlock {
    /// Defaults to `synthesis.n`.
    pub n_start: Option<usize>,
    pub n_max: usize,
    /// Whether a failed certificate makes `pipeline` exit non-zero.
    pub enforce: bool,
    pub tail: TailBlock,
}

impl Default for CertificationBlock {
    fn default() -> Self {
        Self {
            n_start: None,
            n_max: 200,
            enforce: true,
            tail: TailBlock::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailBlock {
    pub min_tail: usize,
    pub start_factor: usize,
    pub cap_factor: usize,
    pub block_tolerance: f64,
}

impl Default for TailBlock {
    fn default() -> Self {
        let t = TailPolicy::default();
        Self {
            min_tail: t.min_tail,
            start_factor: t.start_factor,
            cap_factor: t.cap_factor,
            block_tolerance: t.block_tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    Exact,
    IfMidpoint,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub z0: Z0Block,
    pub t_end: f64,
    pub h: Option<f64>,
    pub n_sim: Option<usize>,
    pub integrator: IntegratorName,
    pub open_loop: bool,
    pub t_skip: Option<f64>,
    pub identity_every: usize,
    pub divergence_factor: f64,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        let o = SimOptions::default();
        Self {
            z0: Z0Block::default(),
            t_end: 20.0,
            h: None,
            n_sim: None,
            integrator: IntegratorName::Exact,
            open_loop: false,
            t_skip: None,
            identity_every: o.identity_every,
            divergence_factor: o.divergence_factor,
        }
    }
}

/// Initial plant state; at most one form may be given. With none, the first
/// five modes get unit coefficients.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Z0Block {
    pub modes: Option<Vec<ModeCoefficient>>,
    pub coefficients: Option<Vec<f64>>,
    pub bump: Option<BumpBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCoefficient {
    /// One-based multi-index, e.g. `[1, 2]`.
    pub index: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpBlock {
    pub centre: Vec<f64>,
    pub sigma: f64,
    pub amplitude: f64,
    /// Modes to project onto; defaults to `N_sim`.
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

pub const DEFAULT_Z0_MODES: usize = 5;

/// Reads, de-duplicates, type-checks and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let value = parse_strict(text)?;
    let config = from_value(value.clone(), "")?;
    for (i, _) in config.sweep.iter().enumerate() {
        sweep_entry(&value, i)?;
    }
    Ok(config)
}

/// The `i`-th sweep run: the base config with `sweep[i]` merged over it.
pub fn sweep_entry(base: &Value, i: usize) -> Result<RunConfig, CliError> {
    let mut merged = base.clone();
    let overlay = base
        .get("sweep")
        .and_then(|s| s.get(i))
        .cloned()
        .ok_or_else(|| CliError::Config(format!("/sweep/{i}: no such sweep entry")))?;
    if let Value::Object(m) = &mut merged {
        m.remove("sweep");
    }
    if !overlay.is_object() {
        return Err(CliError::Config(format!("/sweep/{i}: expected an object")));
    }
    if overlay.get("sweep").is_some() {
        return Err(CliError::Config(format!("/sweep/{i}/sweep: nested sweeps are not allowed")));
    }
    merge(&mut merged, overlay);
    from_value(merged, &format!("/sweep/{i}"))
}

/// Parses JSON text, rejecting repeated keys anywhere in the document.
pub fn parse_strict(text: &str) -> Result<Value, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    UniqueKeys { path: String::new() }
        .deserialize(&mut de)
        .and_then(|()| de.end())
        .map_err(|e| CliError::Config(e.to_string()))?;
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn from_value(value: Value, prefix: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let pointer = pointer_of(e.path());
        CliError::Config(format!("{prefix}{pointer}: {}", e.inner()))
    })?;
    config.validate().map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{prefix}{msg}")),
        other => other,
    })?;
    Ok(config)
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", escape_pointer(key))),
            Segment::Enum { variant } => out.push_str(&format!("/{}", escape_pointer(variant))),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        "/".into()
    } else {
        out
    }
}

fn escape_pointer(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

struct UniqueKeys {
    path: String,
}

impl<'de> DeserializeSeed<'de> for UniqueKeys {
    type Value = ();

    fn deserialize<D: de::Deserializer<'de>>(self, d: D) -> Result<(), D::Error> {
        d.deserialize_any(self)
    }
}

impl<'de> Visitor<'de> for UniqueKeys {
    type Value = ();

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("any JSON value")
    }

    fn visit_bool<E>(self, _: bool) -> Result<(), E> {
        Ok(())
    }
    fn visit_i64<E>(self, _: i64) -> Result<(), E> {
        Ok(())
    }
    fn visit_u64<E>(self, _: u64) -> Result<(), E> {
        Ok(())
    }
    fn visit_f64<E>(self, _: f64) -> Result<(), E> {
        Ok(())
    }
    fn visit_str<E>(self, _: &str) -> Result<(), E> {
        Ok(())
    }
    fn visit_unit<E>(self) -> Result<(), E> {
        Ok(())
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<(), A::Error> {
        let mut i = 0;
        while seq
            .next_element_seed(UniqueKeys {
                path: format!("{}/{i}", self.path),
            })?
            .is_some()
        {
            i += 1;
        }
        Ok(())
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<(), A::Error> {
        let mut seen = HashSet::new();
        while let Some(key) = map.next_key::<String>()? {
            let here = format!("{}/{}", self.path, escape_pointer(&key));
            if !seen.insert(key) {
                return Err(de::Error::custom(format!("{here}: duplicate key")));
            }
            map.next_value_seed(UniqueKeys { path: here })?;
        }
        Ok(())
    }
}

fn invalid(pointer: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{pointer}: {msg}"))
}

fn positive(pointer: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(pointer, format!("must be positive and finite (got {v})")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let plant = self.plant_config()?;
        let lengths = plant.lengths();
        for (name, xi) in [("xi1", &self.sensors.xi1), ("xi2", &self.sensors.xi2)] {
            let ptr = format!("/sensors/{name}");
            if xi.len() != lengths.len() {
                return Err(invalid(
                    &ptr,
                    format!("has {} coordinates for a {}-dimensional box", xi.len(), lengths.len()),
                ));
            }
            if let Some(i) = (0..xi.len()).find(|&i| !(xi[i] > 0.0 && xi[i] < lengths[i])) {
                return Err(invalid(
                    &format!("{ptr}/{i}"),
                    format!("sensor coordinate {} is not interior to (0, {})", xi[i], lengths[i]),
                ));
            }
        }

        let s = &self.synthesis;
        if s.n == 0 {
            return Err(invalid("/synthesis/n", "must be at least 1"));
        }
        if !(s.c_ratio.is_finite() && s.c_ratio > 1.0) {
            return Err(invalid("/synthesis/c_ratio", "must exceed 1"));
        }
        positive("/synthesis/gamma_base", s.gamma_base)?;
        positive("/synthesis/gamma_base_cap", s.gamma_base_cap)?;
        positive("/synthesis/cond_limit", s.cond_limit)?;
        positive("/synthesis/sensor_tol", s.sensor_tol)?;
        if let Some(sp) = s.spread {
            positive("/synthesis/spread", sp)?;
        }

        let c = &self.certification;
        let n_start = self.n_start();
        if n_start == 0 {
            return Err(invalid("/certification/n_start", "must be at least 1"));
        }
        if c.n_max < n_start {
            return Err(invalid(
                "/certification/n_max",
                format!("N_max = {} is below N_start = {n_start}", c.n_max),
            ));
        }
        if c.tail.start_factor == 0 || c.tail.cap_factor == 0 {
            return Err(invalid("/certification/tail", "factors must be at least 1"));
        }
        positive("/certification/tail/block_tolerance", c.tail.block_tolerance)?;

        let sim = &self.simulation;
        positive("/simulation/t_end", sim.t_end)?;
        if let Some(h) = sim.h {
            positive("/simulation/h", h)?;
        }
        if let Some(n_sim) = sim.n_sim {
            if n_sim < s.n {
                return Err(invalid(
                    "/simulation/n_sim",
                    format!("N_sim = {n_sim} is below the observer's N = {}", s.n),
                ));
            }
        }
        if let Some(t) = sim.t_skip {
            if !(t.is_finite() && t >= 0.0 && t < sim.t_end) {
                return Err(invalid("/simulation/t_skip", "must lie in [0, t_end)"));
            }
        }
        if sim.identity_every == 0 {
            return Err(invalid("/simulation/identity_every", "must be at least 1"));
        }
        positive("/simulation/divergence_factor", sim.divergence_factor)?;
        let z = &sim.z0;
        let forms = [z.modes.is_some(), z.coefficients.is_some(), z.bump.is_some()];
        if forms.iter().filter(|f| **f).count() > 1 {
            return Err(invalid("/simulation/z0", "give at most one of modes, coefficients, bump"));
        }
        if let Some(modes) = &z.modes {
            for (i, m) in modes.iter().enumerate() {
                let ptr = format!("/simulation/z0/modes/{i}");
                if m.index.len() != lengths.len() || m.index.contains(&0) {
                    return Err(invalid(
                        &format!("{ptr}/index"),
                        "needs one positive index per dimension",
                    ));
                }
                if !m.value.is_finite() {
                    return Err(invalid(&format!("{ptr}/value"), "must be finite"));
                }
            }
        }
        if let Some(cs) = &z.coefficients {
            if let Some(i) = cs.iter().position(|v| !v.is_finite()) {
                return Err(invalid(&format!("/simulation/z0/coefficients/{i}"), "must be finite"));
            }
        }
        if let Some(b) = &z.bump {
            if b.centre.len() != lengths.len() {
                return Err(invalid("/simulation/z0/bump/centre", "dimension mismatch"));
            }
            positive("/simulation/z0/bump/sigma", b.sigma)?;
            if !b.amplitude.is_finite() {
                return Err(invalid("/simulation/z0/bump/amplitude", "must be finite"));
            }
        }
        Ok(())
    }

    /// The plant, with preset values filled in and explicit fields on top.
    pub fn plant_config(&self) -> Result<PlantConfig, CliError> {
        let p = &self.plant;
        let preset = p.preset.map(|Preset::Example| {
            (vec![PI, PI], vec![3.0, 3.0], 10.0, Face::new(1, Side::Lower))
        });
        let missing = |k: &str| invalid(&format!("/plant/{k}"), "required without a preset");
        let lengths = match (&p.lengths, &preset) {
            (Some(l), _) => l.clone(),
            (None, Some(pr)) => pr.0.clone(),
            (None, None) => return Err(missing("lengths")),
        };
        let drift = match (&p.b, &preset) {
            (Some(b), _) => b.clone(),
            (None, Some(pr)) => pr.1.clone(),
            (None, None) => return Err(missing("b")),
        };
        let reaction = match (p.c, &preset) {
            (Some(c), _) => c,
            (None, Some(pr)) => pr.2,
            (None, None) => return Err(missing("c")),
        };
        let face = match (p.control_face, &preset) {
            (Some(f), _) => Face::new(
                f.axis,
                match f.side {
                    SideName::Lower => Side::Lower,
                    SideName::Upper => Side::Upper,
                },
            ),
            (None, Some(pr)) => pr.3,
            (None, None) => return Err(missing("control_face")),
        };
        if let Some(d) = p.d {
            if d != lengths.len() {
                return Err(invalid(
                    "/plant/d",
                    format!("d = {d} but {} side lengths were given", lengths.len()),
                ));
            }
        }
        let delta = p.delta.unwrap_or(0.5);
        let plant = PlantConfig::new(lengths, drift, reaction, face, delta)
            .map_err(|e| invalid("/plant", e))?;
        match p.nu {
            Some(nu) => plant.with_nu(nu).map_err(|e| invalid("/plant/nu", e)),
            None => Ok(plant),
        }
    }

    pub fn sensors(&self) -> Sensors {
        Sensors::new(self.sensors.xi1.clone(), self.sensors.xi2.clone())
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        let s = &self.synthesis;
        SynthesisOptions {
            c_ratio: s.c_ratio,
            gamma_base: s.gamma_base,
            gamma_base_cap: s.gamma_base_cap,
            spread: s.spread,
            cond_limit: s.cond_limit,
            sensor_tol: s.sensor_tol,
            allow_generalized: s.allow_generalized,
            admissibility_modes: s.admissibility_modes,
        }
    }

    pub fn n_start(&self) -> usize {
        self.certification.n_start.unwrap_or(self.synthesis.n)
    }

    pub fn certification_options(&self) -> CertificationOptions {
        let t = &self.certification.tail;
        CertificationOptions {
            tail: TailPolicy {
                min_tail: t.min_tail,
                start_factor: t.start_factor,
                cap_factor: t.cap_factor,
                block_tolerance: t.block_tolerance,
            },
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        let s = &self.simulation;
        SimOptions {
            n_sim: s.n_sim,
            h: s.h,
            integrator: match s.integrator {
                IntegratorName::Exact => Integrator::Exact,
                IntegratorName::IfMidpoint => Integrator::IfMidpoint,
            },
            open_loop: s.open_loop,
            t_skip: s.t_skip,
            identity_every: s.identity_every,
            divergence_factor: s.divergence_factor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "plant": {"preset": "example"},
        "sensors": {"xi1": [1.5707963267948966, 1.0471975511965976],
                    "xi2": [1.0471975511965976, 0.7853981633974483]}
    }"#;

    fn err(text: &str) -> String {
        match parse_config_str(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        let plant = c.plant_config().unwrap();
        assert_eq!(plant.lengths(), &[PI, PI]);
        assert_eq!(plant.reaction(), 10.0);
        assert_eq!(plant.delta(), 0.5);
        assert_eq!(c.synthesis.n, 30);
        assert_eq!(c.n_start(), 30);
        assert_eq!(c.certification.n_max, 200);
        assert_eq!(c.simulation.t_end, 20.0);
        assert_eq!(c.synthesis_options(), SynthesisOptions::default());
        assert_eq!(c.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn boundary_sensor_is_rejected() {
        let text = MINIMAL.replace("1.5707963267948966", "0.0");
        let msg = err(&text);
        assert!(msg.starts_with("/sensors/xi1/0"), "{msg}");
    }

    #[test]
    fn unknown_key_is_rejected_with_pointer() {
        let text = MINIMAL.replace(
            r#""plant": {"preset": "example"}"#,
            r#""plant": {"preset": "example"}, "synthesis": {"gamma_ladder_x": 3}"#,
        );
        let msg = err(&text);
        assert!(msg.starts_with("/synthesis"), "{msg}");
        assert!(msg.contains("gamma_ladder_x"), "{msg}");
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = MINIMAL.replace(
            r#"{"preset": "example"}"#,
            r#"{"preset": "example", "c": 1.0, "c": 2.0}"#,
        );
        let msg = err(&text);
        assert!(msg.contains("/plant/c: duplicate key"), "{msg}");
        let text = MINIMAL.replace(
            r#""plant": {"preset": "example"}"#,
            r#""plant": {"preset": "example"}, "sweep": [{"plant": {"delta": 1, "delta": 2}}]"#,
        );
        assert!(err(&text).contains("/sweep/0/plant/delta: duplicate key"));
    }

    #[test]
    fn type_errors_carry_pointer() {
        let text = MINIMAL.replace(r#""preset": "example""#, r#""preset": "example", "c": "ten""#);
        assert!(err(&text).starts_with("/plant/c"));
    }

    #[test]
    fn explicit_plant_needs_all_fields() {
        let text = r#"{"plant": {"lengths": [1.0]}, "sensors": {"xi1": [0.2], "xi2": [0.7]}}"#;
        assert!(err(text).starts_with("/plant/b"));
        let text = r#"{"plant": {"d": 2, "lengths": [1.0], "b": [0.0], "c": 0.0,
                      "control_face": {"axis": 0, "side": "upper"}},
                      "sensors": {"xi1": [0.2], "xi2": [0.7]}}"#;
        assert!(err(text).starts_with("/plant/d"));
    }

    #[test]
    fn sweep_entries_merge_and_validate() {
        let text = MINIMAL.replace(
            r#""plant": {"preset": "example"}"#,
            r#""plant": {"preset": "example"}, "sweep": [{"synthesis": {"gamma_base": 1.0}}, {"plant": {"delta": 0.4}}]"#,
        );
        let c = parse_config_str(&text).unwrap();
        let value = parse_strict(&text).unwrap();
        let a = sweep_entry(&value, 0).unwrap();
        assert_eq!(a.synthesis.gamma_base, 1.0);
        assert!(a.sweep.is_empty());
        let b = sweep_entry(&value, 1).unwrap();
        assert_eq!(b.plant_config().unwrap().delta(), 0.4);
        assert_eq!(b.plant.preset, Some(Preset::Example));
        assert_eq!(c.sweep.len(), 2);
        let bad = text.replace(r#""delta": 0.4"#, r#""delta": -1"#);
        assert!(err(&bad).starts_with("/sweep/1/plant"));
    }

    #[test]
    fn several_initial_state_forms_are_rejected() {
        let text = MINIMAL.replace(
            r#""plant": {"preset": "example"}"#,
            r#""plant": {"preset": "example"}, "simulation": {"z0": {"coefficients": [1], "bump": {"centre": [1, 1], "sigma": 0.3, "amplitude": 1}}}"#,
        );
        assert!(err(&text).starts_with("/simulation/z0"));
    }
}
