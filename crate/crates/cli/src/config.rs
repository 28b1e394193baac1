//! Run configuration: a flat table of dotted keys, layered as
//! defaults < config file < `INSTABLAB_OUT` < command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const OUT_ENV: &str = "INSTABLAB_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Classify,
    Steady,
    Spectrum,
    Evolve,
    Ode,
    Verify,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Steady => "steady",
            Command::Spectrum => "spectrum",
            Command::Evolve => "evolve",
            Command::Ode => "ode",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    Power,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKey {
    Heat,
    Wave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    Constant,
    AlgebraicDecay,
    InverseSquareTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKey {
    Bubble,
    Exp2d,
    Supercritical,
    Potential,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKindKey {
    Uniform,
    Stretched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationFamily {
    ChiMultiple,
    GaussianBump,
}

/// How the wave run picks `ψ₁` from `ψ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psi1Rule {
    Zero,
    /// `σ ψ₀`
    Sigma,
    /// `λ₂ ψ₀` with the damped rate `λ₂`.
    Lambda2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactionKey {
    Full,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    Ode1,
    Ode2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    Zero,
    Trig,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOp {
    GroundState,
    Classify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecKeys {
    pub n: u32,
    /// Absent means the Sobolev exponent for bubbles.
    pub p: Option<f64>,
    pub nonlinearity: NonlinearityKind,
    pub equation: EquationKey,
    pub damping: f64,
    pub potential: PotentialKind,
    pub potential_strength: f64,
    pub potential_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyKeys {
    pub family: FamilyKey,
    pub lambda: f64,
    pub alpha: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub tail_tol: f64,
    pub residual_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridKeys {
    pub r_max: f64,
    pub nodes: usize,
    pub kind: GridKindKey,
    pub core_spacing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationKeys {
    pub family: PerturbationFamily,
    pub amplitude: f64,
    pub centre: f64,
    pub width: f64,
    pub psi1: Psi1Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverKeys {
    pub t_max: f64,
    pub output_interval: f64,
    pub dt_max: f64,
    pub reaction_factor: f64,
    pub cfl: f64,
    pub cap: f64,
    pub dt_floor: f64,
    pub sponge_fraction: f64,
    pub sponge_strength: f64,
    pub reflection_tol: Option<f64>,
    pub fit_lo: Option<f64>,
    pub fit_hi: Option<f64>,
    pub reaction: ReactionKey,
    pub max_steps: usize,
    /// Sup norm bounding the linear regime used for the default rate fit.
    pub linear_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeKeys {
    pub lemma: Lemma,
    pub a: f64,
    pub b: f64,
    pub y0: f64,
    pub yp0: f64,
    pub p: f64,
    pub horizon: f64,
    pub samples: usize,
    pub forcing: ForcingKind,
    pub forcing_c0: f64,
    pub forcing_c1: f64,
    pub forcing_omega: f64,
    pub cap: f64,
    pub dt_floor: f64,
    pub rtol: f64,
    pub max_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepKeys {
    /// `lo:hi:step`, inclusive of both ends.
    pub p_range: String,
    pub op: SweepOp,
    /// Worker count; absent means one per logical core.
    pub threads: Option<usize>,
    pub core: f64,
    pub r_max: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputKeys {
    pub dir: String,
    pub plot: bool,
    pub wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyKeys {
    /// Empty means every criterion.
    pub criteria: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub spec: SpecKeys,
    pub steady: SteadyKeys,
    pub grid: GridKeys,
    pub perturbation: PerturbationKeys,
    pub solver: SolverKeys,
    pub ode: OdeKeys,
    pub sweep: SweepKeys,
    pub output: OutputKeys,
    pub verify: VerifyKeys,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            spec: SpecKeys {
                n: 3,
                p: None,
                nonlinearity: NonlinearityKind::Power,
                equation: EquationKey::Heat,
                damping: 0.0,
                potential: PotentialKind::Zero,
                potential_strength: 1.0,
                potential_decay: 0.5,
            },
            steady: SteadyKeys {
                family: FamilyKey::Bubble,
                lambda: 1.0,
                alpha: 1.0,
                bracket_lo: 0.1,
                bracket_hi: 20.0,
                tail_tol: 1e-2,
                residual_tol: 1e-6,
            },
            grid: GridKeys { r_max: 60.0, nodes: 4097, kind: GridKindKey::Uniform, core_spacing: None },
            perturbation: PerturbationKeys {
                family: PerturbationFamily::ChiMultiple,
                amplitude: 1e-2,
                centre: 0.0,
                width: 1.0,
                psi1: Psi1Rule::Sigma,
            },
            solver: SolverKeys {
                t_max: 10.0,
                output_interval: 0.01,
                dt_max: 1e-2,
                reaction_factor: 0.2,
                cfl: 0.5,
                cap: 1e8,
                dt_floor: 1e-12,
                sponge_fraction: 0.1,
                sponge_strength: 5.0,
                reflection_tol: Some(0.1),
                fit_lo: None,
                fit_hi: None,
                reaction: ReactionKey::Full,
                max_steps: 20_000_000,
                linear_limit: 1e-2,
            },
            ode: OdeKeys {
                lemma: Lemma::Ode1,
                a: 0.0,
                b: 1.0,
                y0: 1.0,
                yp0: 2.0,
                p: 3.0,
                horizon: 10.0,
                samples: 200,
                forcing: ForcingKind::Zero,
                forcing_c0: 1.0,
                forcing_c1: 1.0,
                forcing_omega: 1.0,
                cap: 1e10,
                dt_floor: 1e-13,
                rtol: 1e-12,
                max_time: 1e8,
            },
            sweep: SweepKeys {
                p_range: "3.0:5.0:0.1".into(),
                op: SweepOp::GroundState,
                threads: None,
                core: 1.0,
                r_max: 1e4,
                nodes: 8193,
            },
            output: OutputKeys { dir: "instablab-out".into(), plot: false, wall_time: false },
            verify: VerifyKeys { criteria: Vec::new() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    File,
    Env,
    Flag,
}

/// A configuration under construction, kept as a sorted flat table so each
/// assignment can be checked and attributed to its key.
pub struct Layered {
    flat: BTreeMap<String, Value>,
    sources: BTreeMap<String, Source>,
    file: Option<String>,
}

impl Layered {
    pub fn new() -> Self {
        let flat = flatten(&serde_json::to_value(RunConfig::default()).expect("defaults serialize"));
        let sources = flat.keys().map(|k| (k.clone(), Source::Default)).collect();
        Self { flat, sources, file: None }
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let label = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read config file {label}: {e}")))?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::config(format!("{label}: {}", e.message().trim())))?;
        let value = serde_json::to_value(&table).map_err(|e| CliError::config(format!("{label}: {e}")))?;
        self.file = Some(label);
        for (key, v) in flatten(&value) {
            self.set(&key, v, Source::File)?;
        }
        Ok(())
    }

    /// `INSTABLAB_OUT` replaces the output directory unless a flag does.
    pub fn apply_env(&mut self, value: Option<String>) -> Result<(), CliError> {
        match value {
            Some(dir) if !dir.is_empty() => self.set("output.dir", Value::String(dir), Source::Env),
            _ => Ok(()),
        }
    }

    pub fn set(&mut self, key: &str, value: Value, source: Source) -> Result<(), CliError> {
        let Some(old) = self.flat.get(key).cloned() else {
            let origin = match (source, &self.file) {
                (Source::File, Some(f)) => format!(" in {f}"),
                _ => String::new(),
            };
            return Err(CliError::config(format!("unknown key `{key}`{origin}")));
        };
        let previous = self.sources[key];
        if source > previous && previous != Source::Default && old != value {
            eprintln!("instablab: {key} = {value} ({}) overrides {old} ({})", describe(source), self.describe_source(previous));
        }
        self.flat.insert(key.to_string(), value);
        if let Err(e) = self.build() {
            self.flat.insert(key.to_string(), old);
            return Err(CliError::config(format!("key `{key}`: {}", e.message)));
        }
        self.sources.insert(key.to_string(), source);
        Ok(())
    }

    fn describe_source(&self, source: Source) -> String {
        match (source, &self.file) {
            (Source::File, Some(f)) => format!("file {f}"),
            _ => describe(source).to_string(),
        }
    }

    fn build(&self) -> Result<RunConfig, CliError> {
        serde_json::from_value(unflatten(&self.flat)).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn finish(self) -> Result<RunConfig, CliError> {
        let config = self.build()?;
        config.validate()?;
        Ok(config)
    }
}

impl Default for Layered {
    fn default() -> Self {
        Self::new()
    }
}

fn describe(source: Source) -> &'static str {
    match source {
        Source::Default => "default",
        Source::File => "file",
        Source::Env => OUT_ENV,
        Source::Flag => "flag",
    }
}

impl PartialOrd for Source {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some((*self as u8).cmp(&(*other as u8)))
    }
}

/// Dotted-key view of a nested JSON object. Arrays and scalars are leaves.
pub fn flatten(value: &Value) -> BTreeMap<String, Value> {
    fn walk(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
        match value {
            Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            leaf => {
                out.insert(prefix.to_string(), leaf.clone());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk("", value, &mut out);
    out
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, value) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), value.clone());
            } else {
                node = node
                    .entry(part.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .expect("keys never nest under a leaf");
            }
        }
    }
    Value::Object(root)
}

/// Parses the right-hand side of `--set key=value` as a TOML value, falling
/// back to a bare string.
pub fn parse_assignment(text: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("expected key=value, got `{text}`")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("parsed key")).map_err(|e| CliError::config(e.to_string()))?,
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key, value))
}

fn require(ok: bool, key: &str, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(format!("key `{key}`: {msg}")))
    }
}

fn positive(v: f64, key: &str) -> Result<(), CliError> {
    require(v > 0.0 && v.is_finite(), key, &format!("must be positive and finite, got {v}"))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        require(self.spec.n >= 1, "spec.n", "dimension must be at least 1")?;
        if let Some(p) = self.spec.p {
            require(p > 1.0 && p.is_finite(), "spec.p", &format!("must exceed 1, got {p}"))?;
        }
        require(self.spec.damping.is_finite(), "spec.damping", "must be finite")?;
        positive(self.steady.lambda, "steady.lambda")?;
        positive(self.steady.alpha, "steady.alpha")?;
        positive(self.steady.bracket_lo, "steady.bracket_lo")?;
        require(self.steady.bracket_hi > self.steady.bracket_lo, "steady.bracket_hi", "must exceed steady.bracket_lo")?;
        positive(self.steady.tail_tol, "steady.tail_tol")?;
        positive(self.steady.residual_tol, "steady.residual_tol")?;
        positive(self.grid.r_max, "grid.r_max")?;
        require(
            self.grid.nodes >= instablab::grid::MIN_NODES,
            "grid.nodes",
            &format!("must be at least {}, got {}", instablab::grid::MIN_NODES, self.grid.nodes),
        )?;
        if let Some(h) = self.grid.core_spacing {
            positive(h, "grid.core_spacing")?;
        }
        require(
            self.grid.kind == GridKindKey::Uniform || self.grid.core_spacing.is_some(),
            "grid.core_spacing",
            "required for stretched grids",
        )?;
        require(self.perturbation.amplitude.is_finite(), "perturbation.amplitude", "must be finite")?;
        positive(self.perturbation.width, "perturbation.width")?;
        let s = &self.solver;
        for (v, key) in [
            (s.t_max, "solver.t_max"),
            (s.output_interval, "solver.output_interval"),
            (s.dt_max, "solver.dt_max"),
            (s.reaction_factor, "solver.reaction_factor"),
            (s.cfl, "solver.cfl"),
            (s.cap, "solver.cap"),
            (s.dt_floor, "solver.dt_floor"),
            (s.linear_limit, "solver.linear_limit"),
        ] {
            positive(v, key)?;
        }
        if let Some(tol) = s.reflection_tol {
            positive(tol, "solver.reflection_tol")?;
        }
        require((0.0..1.0).contains(&s.sponge_fraction), "solver.sponge_fraction", "must lie in [0, 1)")?;
        require(s.sponge_strength >= 0.0, "solver.sponge_strength", "must be nonnegative")?;
        if let (Some(lo), Some(hi)) = (s.fit_lo, s.fit_hi) {
            require(lo < hi, "solver.fit_hi", "must exceed solver.fit_lo")?;
        }
        let o = &self.ode;
        for (v, key) in [
            (o.b, "ode.b"),
            (o.horizon, "ode.horizon"),
            (o.cap, "ode.cap"),
            (o.dt_floor, "ode.dt_floor"),
            (o.rtol, "ode.rtol"),
            (o.max_time, "ode.max_time"),
        ] {
            positive(v, key)?;
        }
        require(o.samples > 0, "ode.samples", "must be positive")?;
        require(self.sweep.threads != Some(0), "sweep.threads", "must be positive when given")?;
        positive(self.sweep.core, "sweep.core")?;
        positive(self.sweep.r_max, "sweep.r_max")?;
        require(self.sweep.nodes >= instablab::grid::MIN_NODES, "sweep.nodes", "too few nodes")?;
        parse_range(&self.sweep.p_range)?;
        require(!self.output.dir.is_empty(), "output.dir", "must not be empty")?;
        Ok(())
    }

    /// Sorted dotted-key echo of every setting.
    pub fn echo(&self) -> BTreeMap<String, Value> {
        flatten(&serde_json::to_value(self).expect("config serializes"))
    }
}

/// Values of `lo:hi:step`, both ends included.
pub fn parse_range(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::config(format!("key `sweep.p_range`: expected lo:hi:step, got `{text}`"));
    let parts: Vec<f64> = text.split(':').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [lo, hi, step] = parts[..] else { return Err(bad()) };
    if !(lo.is_finite() && hi >= lo && step > 0.0 && step.is_finite()) {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    if count > 100_000 {
        return Err(CliError::config("key `sweep.p_range`: more than 100000 values"));
    }
    // Rounding to 12 digits keeps values like 3.3 free of accumulated drift.
    Ok((0..=count).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let layered = Layered::new();
        let config = layered.finish().unwrap();
        assert_eq!(config, RunConfig::default());
        assert!(config.echo().contains_key("grid.nodes"));
    }

    #[test]
    fn unknown_and_mistyped_keys_name_the_path() {
        let mut layered = Layered::new();
        let err = layered.set("grid.nodez", Value::from(10), Source::Flag).unwrap_err();
        assert!(err.message.contains("grid.nodez"));
        let err = layered.set("grid.nodes", Value::from(-5), Source::Flag).unwrap_err();
        assert!(err.message.contains("grid.nodes"), "{}", err.message);
    }

    #[test]
    fn ranges_include_both_ends() {
        let v = parse_range("3.0:5.0:0.1").unwrap();
        assert_eq!(v.len(), 21);
        assert_eq!(v[3], 3.3);
        assert_eq!(*v.last().unwrap(), 5.0);
        assert!(parse_range("5:3:0.1").is_err());
        assert!(parse_range("1:2").is_err());
    }

    #[test]
    fn assignments_parse_as_toml() {
        assert_eq!(parse_assignment("spec.n = 12").unwrap(), ("spec.n".into(), Value::from(12)));
        assert_eq!(parse_assignment("spec.equation=wave").unwrap().1, Value::from("wave"));
        assert_eq!(parse_assignment("verify.criteria=[1,2]").unwrap().1, serde_json::json!([1, 2]));
        assert!(parse_assignment("nothing").is_err());
    }
}
