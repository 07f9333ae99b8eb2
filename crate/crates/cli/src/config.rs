//! Scenario files: strict TOML, `--set` overrides, and conversion into
//! library objects.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use safebar::barrier::{counterexample_barrier_fn, marginal_barrier, BarrierFn, DiffMode, Region, RelaxFn};
use safebar::dynamics::{BundlePlan, FieldHandle, InclusionSpec};
use safebar::geometry::{Aabb, ScalarFn, SearchGrid, SetSpec};
use safebar::reachability::{ReachMode, ReachResolution};
use safebar::smoothing::{converse_smooth_barrier, ConverseConfig};
use safebar::solver::IntegratorConfig;
use safebar::state;
use safebar::verify::{NagumoMode, Prop1Mode};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    /// Output directory; `--out` wins over this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub system: SystemConfig,
    #[serde(default)]
    pub sets: BTreeMap<String, SetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<BarrierConfig>,
    #[serde(default)]
    pub solver: IntegratorConfig,
    #[serde(default)]
    pub bundle: BundlePlan,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reach: Option<ReachConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth: Option<SmoothConfig>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionKind {
    #[default]
    Singleton,
    Ball,
    Hull,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    /// Component expressions over `x1..xn`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<String>>,
    /// Row-major matrix of a linear field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub inclusion: InclusionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Extra vertex fields of a hull, each a list of component expressions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hull: Option<Vec<Vec<String>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    Points {
        points: Vec<Vec<f64>>,
    },
    Sublevel {
        expr: String,
        level: f64,
        lo: Vec<f64>,
        hi: Vec<f64>,
        per_axis: usize,
    },
    /// Complement of another named set.
    Complement {
        of: String,
    },
    Union {
        of: Vec<String>,
    },
    Intersection {
        of: Vec<String>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BarrierConfig {
    /// The explicit barrier of the counterexample system.
    ClosedForm,
    Marginal {
        #[serde(default = "default_x_o")]
        target: String,
        #[serde(default = "default_stride")]
        node_stride: usize,
    },
    Expression {
        expr: String,
    },
    Converse {
        #[serde(default = "default_x_o")]
        target: String,
        #[serde(default = "default_t_max")]
        t_max: f64,
        #[serde(default = "default_converse_axis")]
        per_axis: usize,
        #[serde(default = "default_inner")]
        inner_radius: f64,
    },
}

fn default_x_o() -> String {
    "x_o".into()
}
fn default_stride() -> usize {
    1
}
fn default_t_max() -> f64 {
    0.25
}
fn default_converse_axis() -> usize {
    12
}
fn default_inner() -> f64 {
    0.01
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default = "default_per_axis")]
    pub per_axis: usize,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    pub horizon: f64,
    #[serde(default = "default_boundary")]
    pub boundary: usize,
    #[serde(default = "default_interior")]
    pub interior: usize,
    #[serde(default = "default_n_u")]
    pub n_u: usize,
    /// Number of simulated trajectories when `starts` is absent.
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<Vec<Vec<f64>>>,
}

fn default_per_axis() -> usize {
    21
}
fn default_t_grid() -> Vec<f64> {
    vec![0.0]
}
fn default_boundary() -> usize {
    64
}
fn default_interior() -> usize {
    32
}
fn default_n_u() -> usize {
    200
}
fn default_trajectories() -> usize {
    8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Sign,
    Monotonicity,
    Infinitesimal,
    Safety,
    Nagumo,
    Prop1,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default)]
    pub run: Vec<CheckKind>,
    #[serde(default)]
    pub monotonicity: MonotonicityConfig,
    #[serde(default)]
    pub infinitesimal: InfinitesimalSettings,
    #[serde(default)]
    pub safety: SafetySettings,
    #[serde(default)]
    pub nagumo: NagumoSettings,
    #[serde(default)]
    pub prop1: Prop1Settings,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityConfig {
    pub trajectories: usize,
    pub horizon: f64,
    pub tol: f64,
}

impl Default for MonotonicityConfig {
    fn default() -> Self {
        MonotonicityConfig {
            trajectories: 50,
            horizon: 5.0,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RelaxConfig {
    Zero,
    Linear { l: f64 },
    ExtendedClassK { expr: String },
    Minimal { expr: String },
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig::Zero
    }
}

impl RelaxConfig {
    pub fn build(&self) -> Result<RelaxFn> {
        Ok(match self {
            RelaxConfig::Zero => RelaxFn::Zero,
            RelaxConfig::Linear { l } => RelaxFn::linear(*l)?,
            RelaxConfig::ExtendedClassK { expr } => RelaxFn::extended_class_k(expr)?,
            RelaxConfig::Minimal { expr } => RelaxFn::minimal(expr)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionName {
    Everywhere,
    MarginBand,
    Boundary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfinitesimalSettings {
    pub mode: DiffMode,
    pub region: RegionName,
    /// Band width for `margin_band`, tolerance for `boundary`.
    pub width: f64,
    pub samples: usize,
    pub fd_step: f64,
    pub tol: f64,
    #[serde(default)]
    pub relax: RelaxConfig,
    /// Samples within this distance of `x_o` are skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude_radius: Option<f64>,
}

impl Default for InfinitesimalSettings {
    fn default() -> Self {
        InfinitesimalSettings {
            mode: DiffMode::Smooth,
            region: RegionName::Everywhere,
            width: 0.05,
            samples: 400,
            fd_step: 1e-5,
            tol: 1e-6,
            relax: RelaxConfig::Zero,
            exclude_radius: None,
        }
    }
}

impl InfinitesimalSettings {
    pub fn region(&self) -> Region {
        match self.region {
            RegionName::Everywhere => Region::Everywhere,
            RegionName::MarginBand => Region::MarginBand(self.width),
            RegionName::Boundary => Region::Boundary(self.width),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyModeName {
    Safety,
    Conditional,
    PreInvariance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetySettings {
    pub mode: SafetyModeName,
    pub tol: f64,
}

impl Default for SafetySettings {
    fn default() -> Self {
        SafetySettings {
            mode: SafetyModeName::Safety,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NagumoSettings {
    pub mode: NagumoMode,
    /// Name of the set `K`.
    pub set: String,
    pub samples: usize,
    pub tol: f64,
}

impl Default for NagumoSettings {
    fn default() -> Self {
        NagumoSettings {
            mode: NagumoMode::Boundary,
            set: "x_o".into(),
            samples: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prop1Settings {
    pub mode: Prop1Mode,
    #[serde(default)]
    pub relax: RelaxConfig,
    pub samples: usize,
    pub tol: f64,
}

impl Default for Prop1Settings {
    fn default() -> Self {
        Prop1Settings {
            mode: Prop1Mode::Conditional,
            relax: RelaxConfig::Zero,
            samples: 400,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachConfig {
    pub starts: Vec<Vec<f64>>,
    /// Negative for backward reach.
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub node_stride: usize,
    #[serde(default = "default_reach_mode")]
    pub mode: ReachMode,
}

fn default_reach_mode() -> ReachMode {
    ReachMode::FullTube
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmoothConfig {
    /// Smooths the configured barrier over `{inner <= |x|_K <= outer}`.
    Compact {
        #[serde(default = "default_x_o")]
        set: String,
        inner: f64,
        outer: f64,
        k_max: usize,
        bandwidth: f64,
    },
    /// Smooth converse barrier of a single-valued system.
    Converse {
        #[serde(default = "default_x_o")]
        target: String,
        #[serde(default = "default_t_max")]
        t_max: f64,
        #[serde(default = "default_converse_axis")]
        per_axis: usize,
        #[serde(default = "default_inner")]
        inner_radius: f64,
    },
}

/// Applies one `key.path=value` override to a parsed TOML table.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override `{spec}` has an empty key");
    }
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{p}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Reads, overrides and validates a scenario.
pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let mut table: toml::Table = text
        .parse()
        .with_context(|| format!("cannot parse config {}", path.display()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    if let Some(s) = seed {
        table.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    let cfg: ScenarioConfig = toml::Value::Table(table)
        .try_into()
        .with_context(|| format!("invalid config {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn vector(v: &[f64]) -> safebar::StateVector {
    state(v)
}

impl ScenarioConfig {
    pub fn dim(&self) -> usize {
        self.sampling.lo.len()
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 || self.sampling.hi.len() != n {
            bail!("sampling.lo and sampling.hi must be nonempty and of equal length");
        }
        let f = self.inclusion()?;
        if f.dim() != n {
            bail!("system has dimension {} but sampling bounds have {n}", f.dim());
        }
        for name in self.sets.keys() {
            let s = self.set(name)?;
            if let Some(d) = s.dimension() {
                if d != n {
                    bail!("set `{name}` has dimension {d}, expected {n}");
                }
            }
        }
        if !(self.sampling.horizon > 0.0) {
            bail!("sampling.horizon must be positive");
        }
        Ok(())
    }

    pub fn bounds(&self) -> Result<Aabb> {
        Ok(Aabb::new(self.sampling.lo.clone(), self.sampling.hi.clone())?)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        self.solver.clone()
    }

    pub fn field(&self) -> Result<FieldHandle> {
        let s = &self.system;
        let given = [s.builtin.is_some(), s.fields.is_some(), s.matrix.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            bail!("system needs exactly one of builtin, fields or matrix");
        }
        Ok(if let Some(b) = &s.builtin {
            FieldHandle::builtin(b)?
        } else if let Some(fs) = &s.fields {
            FieldHandle::from_exprs(fs)?
        } else {
            let rows = s.matrix.as_ref().expect("checked above");
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                bail!("system.matrix must be square");
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            FieldHandle::linear(nalgebra::DMatrix::from_row_slice(n, n, &flat))?
        })
    }

    pub fn inclusion(&self) -> Result<InclusionSpec> {
        let f = self.field()?;
        let s = &self.system;
        Ok(match s.inclusion {
            InclusionKind::Singleton => {
                if s.epsilon.is_some() || s.hull.is_some() {
                    bail!("system.epsilon and system.hull need a ball or hull inclusion");
                }
                InclusionSpec::singleton(f)
            }
            InclusionKind::Ball => {
                let eps = s.epsilon.ok_or_else(|| anyhow!("ball inclusion needs system.epsilon"))?;
                InclusionSpec::ball(f, eps)?
            }
            InclusionKind::Hull => {
                let extra = s.hull.as_ref().ok_or_else(|| anyhow!("hull inclusion needs system.hull"))?;
                let mut fields = vec![f];
                for comps in extra {
                    fields.push(FieldHandle::from_exprs(comps)?);
                }
                InclusionSpec::hull(fields)?
            }
        })
    }

    pub fn set(&self, name: &str) -> Result<SetSpec> {
        self.set_depth(name, 0)
    }

    fn set_depth(&self, name: &str, depth: usize) -> Result<SetSpec> {
        if depth > 16 {
            bail!("set references nest too deeply near `{name}`");
        }
        let c = self.sets.get(name).ok_or_else(|| anyhow!("unknown set `{name}`"))?;
        let many = |of: &[String]| -> Result<Vec<SetSpec>> { of.iter().map(|o| self.set_depth(o, depth + 1)).collect() };
        Ok(match c {
            SetConfig::Ball { center, radius } => SetSpec::ball(vector(center), *radius)?,
            SetConfig::Box { lo, hi } => SetSpec::boxed(vector(lo), vector(hi))?,
            SetConfig::Halfspace { normal, offset } => SetSpec::halfspace(vector(normal), *offset)?,
            SetConfig::Points { points } => {
                let s = SetSpec::Points(points.iter().map(|p| vector(p)).collect());
                s.validate()?;
                s
            }
            SetConfig::Sublevel {
                expr,
                level,
                lo,
                hi,
                per_axis,
            } => {
                let func = ScalarFn::from_expr(expr, lo.len())?;
                SetSpec::sublevel(
                    func,
                    *level,
                    SearchGrid {
                        bounds: Aabb::new(lo.clone(), hi.clone())?,
                        per_axis: *per_axis,
                    },
                )?
            }
            SetConfig::Complement { of } => self.set_depth(of, depth + 1)?.complement(),
            SetConfig::Union { of } => {
                let s = SetSpec::Union(many(of)?);
                s.validate()?;
                s
            }
            SetConfig::Intersection { of } => {
                let s = SetSpec::Intersection(many(of)?);
                s.validate()?;
                s
            }
        })
    }

    pub fn barrier(&self) -> Result<BarrierFn> {
        let n = self.dim();
        let cfg = self
            .barrier
            .as_ref()
            .ok_or_else(|| anyhow!("this command needs a [barrier] section"))?;
        Ok(match cfg {
            BarrierConfig::ClosedForm => {
                if self.system.builtin.as_deref() != Some("counterexample2d") {
                    bail!("the closed-form barrier belongs to the builtin counterexample2d");
                }
                counterexample_barrier_fn()
            }
            BarrierConfig::Marginal { target, node_stride } => marginal_barrier(
                &self.inclusion()?,
                &self.set(target)?,
                &self.integrator(),
                &ReachResolution::new(self.bundle.clone(), *node_stride),
            )?,
            BarrierConfig::Expression { expr } => BarrierFn::user(expr, n)?,
            BarrierConfig::Converse {
                target,
                t_max,
                per_axis,
                inner_radius,
            } => self.converse(target, *t_max, *per_axis, *inner_radius)?,
        })
    }

    pub fn converse(&self, target: &str, t_max: f64, per_axis: usize, inner_radius: f64) -> Result<BarrierFn> {
        let f = match self.inclusion()? {
            InclusionSpec::Singleton(h) => h,
            _ => bail!("the converse barrier needs a single-valued system"),
        };
        let mut c = ConverseConfig::new(self.bounds()?);
        c.t_max = t_max;
        c.per_axis = per_axis;
        c.inner_radius = inner_radius;
        Ok(converse_smooth_barrier(&f, &self.set(target)?, &c)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3

[system]
builtin = "linear_safe"

[sets.x_o]
kind = "ball"
center = [0.0, 0.0]
radius = 1.0

[sets.x_s]
kind = "complement"
of = "x_o"

[sampling]
lo = [-2.0, -2.0]
hi = [2.0, 2.0]
horizon = 1.0
"#;

    fn parse(text: &str, overrides: &[&str]) -> Result<ScenarioConfig> {
        let dir = tempfile::tempdir()?;
        let p = dir.path().join("s.toml");
        std::fs::write(&p, text)?;
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        load(&p, &o, None)
    }

    #[test]
    fn minimal_roundtrips() {
        let c = parse(MINIMAL, &[]).unwrap();
        assert_eq!(c.seed, 3);
        let text = c.to_toml().unwrap();
        let again: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(again.to_toml().unwrap(), text);
        assert!(c.set("x_s").unwrap().contains(&state(&[2.0, 0.0])));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(&format!("{MINIMAL}\nbogus = 1\n"), &[]).is_err());
        assert!(parse(MINIMAL, &["sampling.bogus=1"]).is_err());
        assert!(parse(MINIMAL, &["sets.x_o.radiuss=2"]).is_err());
        assert!(parse("", &[]).is_err());
    }

    #[test]
    fn overrides_are_typed() {
        let c = parse(MINIMAL, &["sampling.horizon=7.5", "checks.run=[\"sign\"]", "name=demo"]).unwrap();
        assert_eq!(c.sampling.horizon, 7.5);
        assert_eq!(c.checks.run, vec![CheckKind::Sign]);
        assert_eq!(c.name.as_deref(), Some("demo"));
        assert!(parse(MINIMAL, &["sampling.horizon"]).is_err());
    }

    #[test]
    fn dangling_set_reference() {
        assert!(parse(MINIMAL, &["sets.x_s.of=nowhere"]).is_err());
    }
}
