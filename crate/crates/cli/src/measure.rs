//! The measurement registry: every operation a scenario can request, the
//! law it instruments, its parameters, and how it is executed.

use std::collections::BTreeMap;

use bundle_qm::bundle::{inner_product, self_adjointness_residual};
use bundle_qm::dsl::{parse_expression, CompiledExpr};
use bundle_qm::holonomy::{
    curvature_commutator_residual, extract_curvature, holonomy_expansion_residual, loop_transport,
    observable_loop_expansion_residual,
};
use bundle_qm::linalg::{self, c, CMatrix, C64};
use bundle_qm::observables::{
    expectation, heisenberg_residual_s, heisenberg_residual_t, intertwining_residual, loop_commutator_residual,
    path_expectation, path_independence_residual, subpath_flow_residual, transport_observable,
    two_path_commutator_residual, PathFamily,
};
use bundle_qm::paths::{build_holonomy_loop, reparametrize, restrict, HolonomyLoop, Path, Reparametrization};
use bundle_qm::transport::{
    compose, derivative_along_path, evolve_state, frame_factorize, metric_consistency_residual,
};
use bundle_qm::{EvolutionOperator, StateVector};
use serde_json::{json, Value};

use crate::config::{MatrixConfig, MeasurementConfig};
use crate::error::ConfigError;
use crate::report::{matrix_json, Diagnostics, Series};
use crate::scenario::{matrix_from, Scenario};

/// Static description of one measurement operation.
#[derive(Debug)]
pub struct OpInfo {
    pub op: &'static str,
    pub law: &'static str,
    pub default_tolerance: f64,
    pub keys: &'static [&'static str],
}

/// Allowed distance of a step-halving ratio from 4 when `order = true`.
pub const ORDER_TOLERANCE: f64 = 0.5;

const LOOP_KEYS: &[&str] = &["surface", "base", "sides"];

pub const REGISTRY: &[OpInfo] = &[
    OpInfo {
        op: "expectation_series",
        law: "expectation value in the state predicted by transport along the path",
        default_tolerance: 1e-8,
        keys: &["path", "observable", "samples", "from", "to", "reference"],
    },
    OpInfo {
        op: "groupoid",
        law: "composition of transports: L(t→r) L(s→t) = L(s→r)",
        default_tolerance: 1e-8,
        keys: &["path", "s", "t", "r"],
    },
    OpInfo {
        op: "inverse",
        law: "inverse relation: L(s→t) L(t→s) = I",
        default_tolerance: 1e-8,
        keys: &["path", "s", "t"],
    },
    OpInfo {
        op: "metric_consistency",
        law: "transport preserves the fibre metric: L† G(γ(t)) L = G(γ(s))",
        default_tolerance: 1e-8,
        keys: &["path", "s", "t"],
    },
    OpInfo {
        op: "reparametrization",
        law: "reparametrization condition: transport along γ∘τ equals transport along γ between the image parameters",
        default_tolerance: 1e-8,
        keys: &["path", "exponent"],
    },
    OpInfo {
        op: "locality",
        law: "locality: transport along a restricted path equals transport along the full path",
        default_tolerance: 1e-10,
        keys: &["path", "a", "b", "s", "t"],
    },
    OpInfo {
        op: "frame_factorization",
        law: "factorized form of a transport: L(s→t) = F(t)⁻¹ F(s)",
        default_tolerance: 1e-8,
        keys: &["path", "base", "s", "t"],
    },
    OpInfo {
        op: "parallel_section",
        law: "covariant derivative along the path vanishes on transported sections",
        default_tolerance: 1e-6,
        keys: &["path", "s", "h"],
    },
    OpInfo {
        op: "self_adjointness",
        law: "metric self-adjointness of an observable: A = G⁻¹ A† G",
        default_tolerance: 1e-12,
        keys: &["observable", "path", "s"],
    },
    OpInfo {
        op: "double_evaluation",
        law: "expectation in the predicted state equals expectation of the transported observable",
        default_tolerance: 1e-9,
        keys: &["path", "observable", "s", "t"],
    },
    OpInfo {
        op: "spectrum_invariance",
        law: "transported observable L(t→s) A L(s→t) keeps the spectrum of A",
        default_tolerance: 1e-8,
        keys: &["path", "observable", "s", "t"],
    },
    OpInfo {
        op: "heisenberg_s",
        law: "observable equation of motion in the observer parameter: ∂s A = −[Γ(s), A]",
        default_tolerance: 1e-6,
        keys: &["path", "observable", "s", "t", "h", "order"],
    },
    OpInfo {
        op: "heisenberg_t",
        law: "observable equation of motion in the event parameter: iħ ∂t A = −[H(s,t), A]",
        default_tolerance: 1e-6,
        keys: &["path", "observable", "s", "t", "h", "order"],
    },
    OpInfo {
        op: "subpath_flow",
        law: "flow of observables along sub-paths of a path family: iħ ∂τ A = −[H(τ), A]",
        default_tolerance: 1e-6,
        keys: &["family", "member", "observable", "tau", "h", "order"],
    },
    OpInfo {
        op: "intertwining",
        law: "transported observables intertwine with transports: A(r,s) L(r'→r) = L(r'→r) A(r',t) for t = s",
        default_tolerance: 1e-8,
        keys: &["path", "observable", "r_prime", "r", "s", "t"],
    },
    OpInfo {
        op: "path_independence",
        law: "path independence of expectation values between common endpoints",
        default_tolerance: 1e-8,
        keys: &["path", "other", "observable"],
    },
    OpInfo {
        op: "loop_commutator",
        law: "observables commute with transport around closed loops",
        default_tolerance: 1e-8,
        keys: &["observable", "path", "surface", "base", "sides"],
    },
    OpInfo {
        op: "two_path_commutator",
        law: "observables commute with the round trip along two paths with common endpoints",
        default_tolerance: 1e-8,
        keys: &["path", "other", "observable"],
    },
    OpInfo {
        op: "holonomy",
        law: "holonomy around a rectangle loop (deviation from the identity)",
        default_tolerance: 1e-7,
        keys: LOOP_KEYS,
    },
    OpInfo {
        op: "curvature",
        law: "curvature operator from the small-loop holonomy expansion L = I − δε R",
        default_tolerance: 0.05,
        keys: &["surface", "base", "sides", "levels", "reference"],
    },
    OpInfo {
        op: "curvature_commutator",
        law: "curvature commutes with observables when expectations are path independent",
        default_tolerance: 1e-6,
        keys: &["surface", "base", "sides", "levels", "observable"],
    },
    OpInfo {
        op: "holonomy_expansion_order",
        law: "holonomy expansion L = I − δε R is accurate to third order",
        default_tolerance: 1.5,
        keys: &["surface", "base", "sides", "scales", "levels", "reference"],
    },
    OpInfo {
        op: "observable_loop_expansion_order",
        law: "observable transported around a loop is A + δε[R, A] to third order",
        default_tolerance: 1.5,
        keys: &[
            "surface",
            "base",
            "sides",
            "scales",
            "levels",
            "reference",
            "observable",
        ],
    },
];

pub fn find_op(op: &str) -> Option<&'static OpInfo> {
    REGISTRY.iter().find(|info| info.op == op)
}

/// Where a closed loop comes from.
#[derive(Debug, Clone)]
enum LoopSpec {
    Path(String),
    Rectangle {
        surface: String,
        base: (f64, f64),
        sides: (f64, f64),
    },
}

#[derive(Debug, Clone)]
enum Kind {
    ExpectationSeries {
        path: String,
        observable: String,
        samples: usize,
        from: f64,
        to: f64,
        reference: Option<CompiledExpr>,
    },
    Groupoid {
        path: String,
        s: f64,
        t: f64,
        r: f64,
    },
    Inverse {
        path: String,
        s: f64,
        t: f64,
    },
    MetricConsistency {
        path: String,
        s: f64,
        t: f64,
    },
    Reparametrization {
        path: String,
        exponent: f64,
    },
    Locality {
        path: String,
        a: f64,
        b: f64,
        s: f64,
        t: f64,
    },
    Frame {
        path: String,
        base: f64,
        s: f64,
        t: f64,
    },
    ParallelSection {
        path: String,
        s: f64,
        h: f64,
    },
    SelfAdjointness {
        observable: String,
        path: Option<String>,
        s: f64,
    },
    DoubleEvaluation {
        path: String,
        observable: String,
        s: f64,
        t: f64,
    },
    Spectrum {
        path: String,
        observable: String,
        s: f64,
        t: f64,
    },
    Heisenberg {
        in_t: bool,
        path: String,
        observable: String,
        s: f64,
        t: f64,
        h: f64,
        order: bool,
    },
    SubpathFlow {
        family: Vec<String>,
        member: usize,
        observable: String,
        tau: f64,
        h: f64,
        order: bool,
    },
    Intertwining {
        path: String,
        observable: String,
        r_prime: f64,
        r: f64,
        s: f64,
        t: f64,
    },
    PathIndependence {
        path: String,
        other: String,
        observable: String,
    },
    LoopCommutator {
        observable: String,
        target: LoopSpec,
    },
    TwoPath {
        path: String,
        other: String,
        observable: String,
    },
    Holonomy {
        surface: String,
        base: (f64, f64),
        sides: (f64, f64),
    },
    Curvature {
        surface: String,
        base: (f64, f64),
        sides: (f64, f64),
        levels: usize,
        reference: Option<CMatrix>,
        observable: Option<String>,
    },
    ExpansionOrder {
        surface: String,
        base: (f64, f64),
        sides: (f64, f64),
        scales: usize,
        levels: usize,
        reference: Option<CMatrix>,
        observable: Option<String>,
    },
}

/// A measurement whose parameters and references have been validated.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub info: &'static OpInfo,
    pub tolerance: f64,
    pub inputs: BTreeMap<String, Value>,
    kind: Kind,
}

/// Surface name, base point and sides of a rectangle loop.
type Rectangle = (String, (f64, f64), (f64, f64));

struct Params<'a> {
    key: &'a str,
    map: &'a BTreeMap<String, toml::Value>,
}

impl Params<'_> {
    fn err(&self, name: &str, message: impl std::fmt::Display) -> ConfigError {
        ConfigError::at(format!("{}.{name}", self.key), message)
    }

    fn opt_f64(&self, name: &str) -> Result<Option<f64>, ConfigError> {
        match self.map.get(name) {
            None => Ok(None),
            Some(toml::Value::Float(v)) if v.is_finite() => Ok(Some(*v)),
            Some(toml::Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(_) => Err(self.err(name, "expected a finite number")),
        }
    }

    fn f64_or(&self, name: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.opt_f64(name)?.unwrap_or(default))
    }

    fn f64(&self, name: &str) -> Result<f64, ConfigError> {
        self.opt_f64(name)?.ok_or_else(|| self.err(name, "missing parameter"))
    }

    fn usize_or(&self, name: &str, default: usize) -> Result<usize, ConfigError> {
        match self.map.get(name) {
            None => Ok(default),
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(*v as usize),
            Some(_) => Err(self.err(name, "expected a non-negative integer")),
        }
    }

    fn bool_or(&self, name: &str, default: bool) -> Result<bool, ConfigError> {
        match self.map.get(name) {
            None => Ok(default),
            Some(toml::Value::Boolean(v)) => Ok(*v),
            Some(_) => Err(self.err(name, "expected true or false")),
        }
    }

    fn opt_str(&self, name: &str) -> Result<Option<String>, ConfigError> {
        match self.map.get(name) {
            None => Ok(None),
            Some(toml::Value::String(v)) => Ok(Some(v.clone())),
            Some(_) => Err(self.err(name, "expected a string")),
        }
    }

    fn pair(&self, name: &str) -> Result<Option<(f64, f64)>, ConfigError> {
        match self.map.get(name) {
            None => Ok(None),
            Some(toml::Value::Array(items)) if items.len() == 2 => {
                let num = |v: &toml::Value| match v {
                    toml::Value::Float(x) if x.is_finite() => Ok(*x),
                    toml::Value::Integer(x) => Ok(*x as f64),
                    _ => Err(self.err(name, "expected two finite numbers")),
                };
                Ok(Some((num(&items[0])?, num(&items[1])?)))
            }
            Some(_) => Err(self.err(name, "expected a pair [a, b]")),
        }
    }

    fn path(&self, name: &str, sc: &Scenario) -> Result<String, ConfigError> {
        let p = self.opt_str(name)?.ok_or_else(|| self.err(name, "missing parameter"))?;
        if !sc.paths.contains_key(&p) {
            return Err(self.err(name, format!("unknown path `{p}`")));
        }
        Ok(p)
    }

    fn observable(&self, sc: &Scenario) -> Result<String, ConfigError> {
        let o = self
            .opt_str("observable")?
            .ok_or_else(|| self.err("observable", "missing parameter"))?;
        if !sc.observables.contains_key(&o) {
            return Err(self.err("observable", format!("unknown observable `{o}`")));
        }
        Ok(o)
    }

    fn opt_observable(&self, sc: &Scenario) -> Result<Option<String>, ConfigError> {
        match self.map.contains_key("observable") {
            true => self.observable(sc).map(Some),
            false => Ok(None),
        }
    }

    fn surface(&self, sc: &Scenario) -> Result<String, ConfigError> {
        let s = self
            .opt_str("surface")?
            .ok_or_else(|| self.err("surface", "missing parameter"))?;
        if !sc.surfaces.contains_key(&s) {
            return Err(self.err("surface", format!("unknown surface `{s}`")));
        }
        Ok(s)
    }

    fn rectangle(&self, sc: &Scenario, default_sides: (f64, f64)) -> Result<Rectangle, ConfigError> {
        let surface = self.surface(sc)?;
        let (sd, td) = sc.surfaces[&surface].domain();
        let base = self.pair("base")?.unwrap_or((sd.0, td.0));
        let sides = self.pair("sides")?.unwrap_or(default_sides);
        Ok((surface, base, sides))
    }

    fn matrix(&self, name: &str) -> Result<Option<CMatrix>, ConfigError> {
        match self.map.get(name) {
            None => Ok(None),
            Some(v) => {
                let m: MatrixConfig = v
                    .clone()
                    .try_into()
                    .map_err(|e: toml::de::Error| self.err(name, e.message().to_string()))?;
                matrix_from(&format!("{}.{name}", self.key), &m).map(Some)
            }
        }
    }
}

fn domain_of(sc: &Scenario, path: &str) -> (f64, f64) {
    sc.paths[path].domain()
}

/// Validate one `[[measurements]]` entry against the scenario.
pub fn prepare(key: &str, m: &MeasurementConfig, sc: &Scenario) -> Result<Prepared, ConfigError> {
    let info =
        find_op(&m.op).ok_or_else(|| ConfigError::at(format!("{key}.op"), format!("unknown operation `{}`", m.op)))?;
    for k in m.params.keys() {
        if !info.keys.contains(&k.as_str()) {
            return Err(ConfigError::at(
                format!("{key}.{k}"),
                format!(
                    "unknown parameter for `{}` (expected one of: {})",
                    info.op,
                    info.keys.join(", ")
                ),
            ));
        }
    }
    let p = Params { key, map: &m.params };
    let default_tolerance = if p.bool_or("order", false)? {
        ORDER_TOLERANCE
    } else {
        info.default_tolerance
    };
    let tolerance = m.tolerance.unwrap_or(default_tolerance);
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(ConfigError::at(format!("{key}.tolerance"), "must be positive"));
    }
    let needs_state = || {
        if sc.initial_state.is_none() {
            Err(ConfigError::at(key, format!("`{}` needs an [initial_state]", info.op)))
        } else {
            Ok(())
        }
    };
    let path_st = |p: &Params| -> Result<(String, f64, f64), ConfigError> {
        let path = p.path("path", sc)?;
        let (a, b) = domain_of(sc, &path);
        Ok((path.clone(), p.f64_or("s", a)?, p.f64_or("t", b)?))
    };
    let kind = match info.op {
        "expectation_series" => {
            needs_state()?;
            let path = p.path("path", sc)?;
            let (a, b) = domain_of(sc, &path);
            let samples = p.usize_or("samples", 101)?;
            if samples < 2 {
                return Err(p.err("samples", "need at least 2 samples"));
            }
            let reference = match p.opt_str("reference")? {
                None => None,
                Some(src) => Some(
                    parse_expression(&src)
                        .and_then(|e| e.compile(&sc.symbols))
                        .map_err(|e| p.err("reference", format!("{e} (in `{src}`)")))?,
                ),
            };
            Kind::ExpectationSeries {
                observable: p.observable(sc)?,
                samples,
                from: p.f64_or("from", a)?,
                to: p.f64_or("to", b)?,
                reference,
                path,
            }
        }
        "groupoid" => {
            let (path, s, t) = path_st(&p)?;
            let (a, b) = domain_of(sc, &path);
            Kind::Groupoid {
                r: p.f64_or("r", 0.5 * (a + b))?,
                path,
                s,
                t,
            }
        }
        "inverse" => {
            let (path, s, t) = path_st(&p)?;
            Kind::Inverse { path, s, t }
        }
        "metric_consistency" => {
            let (path, s, t) = path_st(&p)?;
            Kind::MetricConsistency { path, s, t }
        }
        "reparametrization" => Kind::Reparametrization {
            path: p.path("path", sc)?,
            exponent: p.f64_or("exponent", 2.0)?,
        },
        "locality" => {
            let path = p.path("path", sc)?;
            let (a, b) = (p.f64("a")?, p.f64("b")?);
            Kind::Locality {
                s: p.f64_or("s", a)?,
                t: p.f64_or("t", b)?,
                path,
                a,
                b,
            }
        }
        "frame_factorization" => {
            let (path, s, t) = path_st(&p)?;
            let (a, _) = domain_of(sc, &path);
            Kind::Frame {
                base: p.f64_or("base", a)?,
                path,
                s,
                t,
            }
        }
        "parallel_section" => {
            needs_state()?;
            let path = p.path("path", sc)?;
            let (a, b) = domain_of(sc, &path);
            Kind::ParallelSection {
                s: p.f64_or("s", 0.5 * (a + b))?,
                h: p.f64_or("h", 1e-3)?,
                path,
            }
        }
        "self_adjointness" => {
            let path = match p.opt_str("path")? {
                Some(_) => Some(p.path("path", sc)?),
                None => None,
            };
            let default_s = path.as_ref().map(|q| domain_of(sc, q).0).unwrap_or(0.0);
            Kind::SelfAdjointness {
                observable: p.observable(sc)?,
                s: p.f64_or("s", default_s)?,
                path,
            }
        }
        "double_evaluation" => {
            needs_state()?;
            let (path, s, t) = path_st(&p)?;
            Kind::DoubleEvaluation {
                observable: p.observable(sc)?,
                path,
                s,
                t,
            }
        }
        "spectrum_invariance" => {
            let (path, s, t) = path_st(&p)?;
            Kind::Spectrum {
                observable: p.observable(sc)?,
                path,
                s,
                t,
            }
        }
        op @ ("heisenberg_s" | "heisenberg_t") => {
            let path = p.path("path", sc)?;
            let (a, b) = domain_of(sc, &path);
            let mid = 0.5 * (a + b);
            Kind::Heisenberg {
                in_t: op == "heisenberg_t",
                observable: p.observable(sc)?,
                s: p.f64_or("s", mid)?,
                t: p.f64_or("t", mid)?,
                h: p.f64_or("h", 1e-3)?,
                order: p.bool_or("order", false)?,
                path,
            }
        }
        "subpath_flow" => {
            let family = match m.params.get("family") {
                Some(toml::Value::Array(items)) => items
                    .iter()
                    .map(|v| match v {
                        toml::Value::String(name) if sc.paths.contains_key(name) => Ok(name.clone()),
                        _ => Err(p.err("family", "expected a list of declared path names")),
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                _ => return Err(p.err("family", "expected a list of declared path names")),
            };
            let member = p.usize_or("member", 0)?;
            if member >= family.len() {
                return Err(p.err("member", format!("family has {} members", family.len())));
            }
            Kind::SubpathFlow {
                observable: p.observable(sc)?,
                tau: p.f64_or("tau", 0.5)?,
                h: p.f64_or("h", 1e-3)?,
                order: p.bool_or("order", false)?,
                family,
                member,
            }
        }
        "intertwining" => {
            let path = p.path("path", sc)?;
            let (a, b) = domain_of(sc, &path);
            let s = p.f64_or("s", b)?;
            Kind::Intertwining {
                observable: p.observable(sc)?,
                r_prime: p.f64_or("r_prime", a)?,
                r: p.f64_or("r", 0.5 * (a + b))?,
                t: p.f64_or("t", s)?,
                s,
                path,
            }
        }
        "path_independence" => {
            needs_state()?;
            Kind::PathIndependence {
                path: p.path("path", sc)?,
                other: p.path("other", sc)?,
                observable: p.observable(sc)?,
            }
        }
        "loop_commutator" => {
            let target = if m.params.contains_key("path") {
                LoopSpec::Path(p.path("path", sc)?)
            } else {
                let (surface, base, sides) = p.rectangle(sc, (0.1, 0.1))?;
                LoopSpec::Rectangle { surface, base, sides }
            };
            Kind::LoopCommutator {
                observable: p.observable(sc)?,
                target,
            }
        }
        "two_path_commutator" => Kind::TwoPath {
            path: p.path("path", sc)?,
            other: p.path("other", sc)?,
            observable: p.observable(sc)?,
        },
        "holonomy" => {
            let (surface, base, sides) = p.rectangle(sc, (0.1, 0.1))?;
            Kind::Holonomy { surface, base, sides }
        }
        "curvature" | "curvature_commutator" => {
            let (surface, base, sides) = p.rectangle(sc, (0.1, 0.1))?;
            Kind::Curvature {
                levels: p.usize_or("levels", 2)?,
                reference: p.matrix("reference")?,
                observable: p.opt_observable(sc)?,
                surface,
                base,
                sides,
            }
        }
        "holonomy_expansion_order" | "observable_loop_expansion_order" => {
            let (surface, base, sides) = p.rectangle(sc, (0.1, 0.1))?;
            let scales = p.usize_or("scales", 3)?;
            if scales < 2 {
                return Err(p.err("scales", "need at least 2 scales"));
            }
            let observable = if info.op == "observable_loop_expansion_order" {
                Some(p.observable(sc)?)
            } else {
                None
            };
            Kind::ExpansionOrder {
                levels: p.usize_or("levels", 2)?,
                reference: p.matrix("reference")?,
                scales,
                observable,
                surface,
                base,
                sides,
            }
        }
        other => unreachable!("registry entry `{other}` has no parser"),
    };
    if let Some(r) = match &kind {
        Kind::Curvature { reference, .. } | Kind::ExpansionOrder { reference, .. } => reference.as_ref(),
        _ => None,
    } {
        if r.nrows() != sc.n || r.ncols() != sc.n {
            return Err(p.err("reference", format!("expected a {0}x{0} matrix", sc.n)));
        }
    }
    let inputs = m
        .params
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::to_value(v).unwrap_or(Value::Null)))
        .collect();
    Ok(Prepared {
        name: m.name.clone(),
        info,
        tolerance,
        inputs,
        kind,
    })
}

/// What a measurement produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub residual: f64,
    pub values: BTreeMap<String, Value>,
    pub diagnostics: Option<Diagnostics>,
    pub series: Option<Series>,
}

type Run<T> = bundle_qm::Result<T>;

fn diagnostics(l: &EvolutionOperator) -> Option<Diagnostics> {
    Some(Diagnostics {
        steps: l.steps,
        achieved_tol: l.achieved_tol,
    })
}

fn state_at(sc: &Scenario, path: &Path, s: f64) -> Run<StateVector> {
    let coords = sc.initial_state.as_ref().expect("checked at load");
    StateVector::from_slice(coords, path.point(s))
}

fn order_ratio(f: impl Fn(f64) -> Run<f64>, h: f64) -> Run<(f64, f64, f64)> {
    let coarse = f(h)?;
    let fine = f(h / 2.0)?;
    Ok((coarse, fine, coarse / fine))
}

fn loop_for(sc: &Scenario, surface: &str, base: (f64, f64), sides: (f64, f64)) -> Run<HolonomyLoop> {
    build_holonomy_loop(&sc.surfaces[surface], base.0, base.1, sides.0, sides.1)
}

fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

impl Prepared {
    /// Run the measurement. Engine errors are returned, not panicked on.
    pub fn execute(&self, sc: &Scenario) -> Run<Outcome> {
        let tr = &sc.transport;
        let mut out = Outcome::default();
        match &self.kind {
            Kind::ExpectationSeries {
                path,
                observable,
                samples,
                from,
                to,
                reference,
            } => {
                let p = &sc.paths[path];
                let a = &sc.observables[observable];
                let psi0 = state_at(sc, p, *from)?;
                let x0 = p.point(*from);
                let norm0 = inner_product(&sc.metric, &x0, &psi0, &psi0)?.re.sqrt();
                let mut rows = Vec::with_capacity(*samples);
                let mut worst_ref = 0.0f64;
                let mut worst_norm = 0.0f64;
                let mut l = EvolutionOperator::identity(sc.n, p.id(), *from);
                let mut steps = 0;
                for k in 0..*samples {
                    let s = if k + 1 == *samples {
                        *to
                    } else {
                        from + (to - from) * (k as f64 / (*samples - 1) as f64)
                    };
                    let leg = tr.solve(p, l.to, s)?;
                    steps += leg.steps;
                    l = compose(&leg, &l)?;
                    let state = evolve_state(&l, &psi0, p)?;
                    let e = expectation(a, &state, &sc.metric)?;
                    let x = p.point(s);
                    let norm = inner_product(&sc.metric, &x, &state, &state)?.re.sqrt();
                    worst_norm = worst_norm.max((norm - norm0).abs());
                    if let Some(r) = reference {
                        let want = r.eval(&x, s)?;
                        worst_ref = worst_ref.max((e - c(want, 0.0)).norm());
                    }
                    rows.push([s, e.re, e.im, norm]);
                }
                out.residual = if reference.is_some() { worst_ref } else { worst_norm };
                out.values.insert("max_norm_drift".into(), json!(worst_norm));
                out.values.insert(
                    "residual_kind".into(),
                    json!(if reference.is_some() {
                        "max |expectation - reference|"
                    } else {
                        "max norm drift"
                    }),
                );
                if reference.is_some() {
                    out.values.insert("max_reference_error".into(), json!(worst_ref));
                }
                out.values.insert("samples".into(), json!(samples));
                out.diagnostics = Some(Diagnostics {
                    steps,
                    achieved_tol: l.achieved_tol,
                });
                out.series = Some(Series {
                    file: format!("{}.csv", self.name),
                    header: ["s", "re_expect", "im_expect", "norm"],
                    rows,
                });
            }
            Kind::Groupoid { path, s, t, r } => {
                let p = &sc.paths[path];
                let l_st = tr.solve(p, *s, *t)?;
                let l_tr = tr.solve(p, *t, *r)?;
                let l_sr = tr.solve(p, *s, *r)?;
                out.residual = linalg::distance(&compose(&l_tr, &l_st)?.matrix, &l_sr.matrix);
                out.diagnostics = diagnostics(&l_sr);
            }
            Kind::Inverse { path, s, t } => {
                let p = &sc.paths[path];
                let l = tr.solve(p, *s, *t)?;
                let back = tr.invert(&l, p)?;
                out.residual = linalg::distance(&(&l.matrix * &back.matrix), &linalg::identity(sc.n));
                out.diagnostics = diagnostics(&l);
            }
            Kind::MetricConsistency { path, s, t } => {
                let p = &sc.paths[path];
                let l = tr.solve(p, *s, *t)?;
                out.residual = metric_consistency_residual(&l, &sc.metric, &p.point(*s), &p.point(*t))?;
                out.values.insert("matrix".into(), matrix_json(&l.matrix));
                out.diagnostics = diagnostics(&l);
            }
            Kind::Reparametrization { path, exponent } => {
                let p = &sc.paths[path];
                let (a, b) = p.domain();
                let tau = Reparametrization::power(*exponent, (0.0, 1.0), (a, b));
                let q = reparametrize(p, &tau, (0.0, 1.0))?.with_id(format!("{path}∘τ"));
                let lq = tr.solve(&q, 0.0, 1.0)?;
                let lp = tr.solve(p, a, b)?;
                out.residual = linalg::distance(&lq.matrix, &lp.matrix);
                out.diagnostics = diagnostics(&lq);
            }
            Kind::Locality { path, a, b, s, t } => {
                let p = &sc.paths[path];
                let sub = restrict(p, *a, *b)?;
                let l_sub = tr.solve(&sub, *s, *t)?;
                let l = tr.solve(p, *s, *t)?;
                out.residual = linalg::distance(&l_sub.matrix, &l.matrix);
                out.diagnostics = diagnostics(&l);
            }
            Kind::Frame { path, base, s, t } => {
                let p = &sc.paths[path];
                let frame = frame_factorize(tr, p, *base)?;
                let l = tr.solve(p, *s, *t)?;
                out.residual = linalg::distance(&frame.transport(*s, *t)?, &l.matrix);
                out.diagnostics = diagnostics(&l);
            }
            Kind::ParallelSection { path, s, h } => {
                let p = &sc.paths[path];
                let (a, _) = p.domain();
                let psi0 = state_at(sc, p, a)?;
                let section = |u: f64| evolve_state(&tr.solve(p, a, u)?, &psi0, p);
                let d = derivative_along_path(section, tr.coefficients(), p, *s, *h)?;
                out.residual = linalg::vector_norm(&d);
            }
            Kind::SelfAdjointness { observable, path, s } => {
                let x = match path {
                    Some(q) => sc.paths[q].point(*s),
                    None => bundle_qm::SpacetimePoint::origin(sc.config.spacetime_dimension),
                };
                let a = sc.observables[observable].matrix_at(&x);
                out.residual = self_adjointness_residual(&sc.metric.matrix_at(&x), &a)?;
            }
            Kind::DoubleEvaluation { path, observable, s, t } => {
                let p = &sc.paths[path];
                let psi = state_at(sc, p, *s)?;
                let pe = path_expectation(&sc.observables[observable], &psi, tr, p, *s, *t, &sc.metric)?;
                out.residual = pe.discrepancy();
                out.values.insert("via_state".into(), complex_json(pe.via_state));
                out.values
                    .insert("via_observable".into(), complex_json(pe.via_observable));
                out.diagnostics = diagnostics(&tr.solve(p, *s, *t)?);
            }
            Kind::Spectrum { path, observable, s, t } => {
                let p = &sc.paths[path];
                let a = &sc.observables[observable];
                let moved = transport_observable(a, tr, p, *s, *t)?;
                let before = linalg::eigenvalues(&a.matrix_at(&p.point(*t)))?;
                let after = linalg::eigenvalues(&moved.matrix)?;
                out.residual = before
                    .iter()
                    .zip(&after)
                    .map(|(x, y)| (x - y).norm())
                    .fold(0.0, f64::max);
                out.values.insert(
                    "eigenvalues".into(),
                    Value::Array(after.into_iter().map(complex_json).collect()),
                );
                out.diagnostics = diagnostics(&tr.solve(p, *s, *t)?);
            }
            Kind::Heisenberg {
                in_t,
                path,
                observable,
                s,
                t,
                h,
                order,
            } => {
                let p = &sc.paths[path];
                let a = &sc.observables[observable];
                let f = |step: f64| {
                    if *in_t {
                        heisenberg_residual_t(a, tr, p, *s, *t, step)
                    } else {
                        heisenberg_residual_s(a, tr, p, *s, *t, step)
                    }
                };
                self.finite_difference(&mut out, f, *h, *order)?;
                out.diagnostics = diagnostics(&tr.solve(p, *s, *t)?);
            }
            Kind::SubpathFlow {
                family,
                member,
                observable,
                tau,
                h,
                order,
            } => {
                let members: Vec<Path> = family.iter().map(|name| sc.paths[name].clone()).collect();
                let fam = PathFamily::new(members[0].start(), members)?;
                let a = &sc.observables[observable];
                let f = |step: f64| subpath_flow_residual(a, tr, &fam, *member, *tau, step);
                self.finite_difference(&mut out, f, *h, *order)?;
            }
            Kind::Intertwining {
                path,
                observable,
                r_prime,
                r,
                s,
                t,
            } => {
                let p = &sc.paths[path];
                out.residual = intertwining_residual(&sc.observables[observable], tr, p, *r_prime, *r, *s, *t)?;
                out.diagnostics = diagnostics(&tr.solve(p, *r_prime, *r)?);
            }
            Kind::PathIndependence {
                path,
                other,
                observable,
            } => {
                let p1 = &sc.paths[path];
                let psi = state_at(sc, p1, p1.domain().0)?;
                out.residual = path_independence_residual(
                    &sc.observables[observable],
                    &psi,
                    tr,
                    p1,
                    &sc.paths[other],
                    &sc.metric,
                )?;
            }
            Kind::LoopCommutator { observable, target } => {
                let a = &sc.observables[observable];
                out.residual = match target {
                    LoopSpec::Path(name) => loop_commutator_residual(a, tr, &sc.paths[name])?,
                    LoopSpec::Rectangle { surface, base, sides } => {
                        let lp = loop_for(sc, surface, *base, *sides)?;
                        let l = loop_transport(tr, &lp)?;
                        out.diagnostics = diagnostics(&l);
                        linalg::frobenius(&linalg::commutator(&l.matrix, &a.matrix_at(&lp.as_path().start())))
                    }
                };
            }
            Kind::TwoPath {
                path,
                other,
                observable,
            } => {
                out.residual =
                    two_path_commutator_residual(&sc.observables[observable], tr, &sc.paths[path], &sc.paths[other])?;
            }
            Kind::Holonomy { surface, base, sides } => {
                let lp = loop_for(sc, surface, *base, *sides)?;
                let l = loop_transport(tr, &lp)?;
                out.residual = linalg::distance(&l.matrix, &linalg::identity(sc.n));
                out.values.insert("matrix".into(), matrix_json(&l.matrix));
                out.diagnostics = diagnostics(&l);
            }
            Kind::Curvature {
                surface,
                base,
                sides,
                levels,
                reference,
                observable,
            } => {
                let r = extract_curvature(tr, &sc.surfaces[surface], base.0, base.1, sides.0, sides.1, *levels)?;
                out.values.insert("matrix".into(), matrix_json(&r.matrix));
                out.values
                    .insert("raw".into(), Value::Array(r.raw.iter().map(matrix_json).collect()));
                out.values.insert(
                    "by_level".into(),
                    Value::Array(r.by_level.iter().map(matrix_json).collect()),
                );
                let disagreement = r.level_disagreement();
                out.values.insert("level_disagreement".into(), json!(disagreement));
                out.residual = match (observable, reference) {
                    (Some(o), _) => {
                        let x = sc.surfaces[surface].point(base.0, base.1);
                        curvature_commutator_residual(&r, &sc.observables[o], &x)?
                    }
                    (None, Some(want)) => {
                        linalg::distance(&r.matrix, want) / linalg::frobenius(want).max(f64::MIN_POSITIVE)
                    }
                    (None, None) => disagreement.unwrap_or(f64::NAN),
                };
            }
            Kind::ExpansionOrder {
                surface,
                base,
                sides,
                scales,
                levels,
                reference,
                observable,
            } => {
                let r = match reference {
                    Some(m) => m.clone(),
                    None => {
                        extract_curvature(tr, &sc.surfaces[surface], base.0, base.1, sides.0, sides.1, *levels)?.matrix
                    }
                };
                let mut residuals = Vec::with_capacity(*scales);
                for k in 0..*scales {
                    let f = 0.5f64.powi(k as i32);
                    let lp = loop_for(sc, surface, *base, (sides.0 * f, sides.1 * f))?;
                    residuals.push(match observable {
                        Some(o) => observable_loop_expansion_residual(&sc.observables[o], tr, &lp, &r)?,
                        None => holonomy_expansion_residual(tr, &lp, &r)?,
                    });
                }
                let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
                out.residual = ratios.iter().map(|q| (q - 8.0).abs()).fold(0.0, f64::max);
                out.values.insert("residuals".into(), json!(residuals));
                out.values.insert("ratios".into(), json!(ratios));
                out.values.insert("curvature".into(), matrix_json(&r));
            }
        }
        Ok(out)
    }

    fn finite_difference(&self, out: &mut Outcome, f: impl Fn(f64) -> Run<f64>, h: f64, order: bool) -> Run<()> {
        if order {
            let (coarse, fine, ratio) = order_ratio(f, h)?;
            out.residual = (ratio - 4.0).abs();
            out.values.insert("residual_h".into(), json!(coarse));
            out.values.insert("residual_half_h".into(), json!(fine));
            out.values.insert("ratio".into(), json!(ratio));
        } else {
            out.residual = f(h)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique_and_described() {
        let mut ops: Vec<&str> = REGISTRY.iter().map(|i| i.op).collect();
        ops.sort_unstable();
        ops.dedup();
        assert_eq!(ops.len(), REGISTRY.len());
        for info in REGISTRY {
            assert!(!info.law.is_empty() && info.default_tolerance > 0.0, "{}", info.op);
            assert_eq!(find_op(info.op).map(|i| i.op), Some(info.op));
        }
        assert!(find_op("nope").is_none());
    }
}
