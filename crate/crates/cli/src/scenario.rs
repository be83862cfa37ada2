//! Turning a parsed [`ScenarioConfig`] into engine objects.

use std::collections::BTreeMap;

use bundle_qm::dsl::{parse_expression, DslError, SymbolTable, DSL_VERSION};
use bundle_qm::hamiltonian::{gell_mann_basis, HamiltonianField, HamiltonianTerm};
use bundle_qm::linalg::{self, c, CMatrix, C64};
use bundle_qm::paths::{
    make_path, reparametrize, restrict, AffinePlane, ParamSurface, Path, PathDescriptor, Reparametrization,
};
use bundle_qm::{FibreDimension, FibreMetric, Mode, Observable, SolverSettings, Transport, TransportCoefficients};

use crate::config::{BasisConfig, MatrixConfig, MetricConfig, ObservableSource, PathShape, ScenarioConfig};
use crate::error::ConfigError;
use crate::measure::{prepare, Prepared};

/// A validated scenario, ready to run.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub n: usize,
    pub symbols: SymbolTable,
    pub transport: Transport,
    pub metric: FibreMetric,
    pub paths: BTreeMap<String, Path>,
    pub surfaces: BTreeMap<String, ParamSurface>,
    pub observables: BTreeMap<String, Observable>,
    pub initial_state: Option<Vec<C64>>,
    pub measurements: Vec<Prepared>,
}

pub fn matrix_from(key: &str, m: &MatrixConfig) -> Result<CMatrix, ConfigError> {
    linalg::from_parts(&m.re, m.im.as_deref()).map_err(|e| ConfigError::at(key, e))
}

fn dsl_error(key: &str, src: &str, e: DslError) -> ConfigError {
    match e.column() {
        Some(col) => ConfigError::at(key, format!("{e} (in `{src}`, column {col})")),
        None => ConfigError::at(key, e),
    }
}

fn interval(key: &str, d: [f64; 2]) -> Result<(f64, f64), ConfigError> {
    if d[0].is_finite() && d[1].is_finite() && d[0] < d[1] {
        Ok((d[0], d[1]))
    } else {
        Err(ConfigError::at(key, format!("invalid interval [{}, {}]", d[0], d[1])))
    }
}

fn build_basis(cfg: &ScenarioConfig) -> Result<Vec<CMatrix>, ConfigError> {
    let basis = match &cfg.basis {
        BasisConfig::GellMann => gell_mann_basis(cfg.dimension),
        BasisConfig::Custom { matrices } => matrices
            .iter()
            .enumerate()
            .map(|(k, m)| matrix_from(&format!("basis.matrices[{k}]"), m))
            .collect::<Result<_, _>>()?,
    };
    bundle_qm::hamiltonian::validate_basis(cfg.dimension, &basis).map_err(|e| ConfigError::at("basis", e))?;
    Ok(basis)
}

fn build_symbols(cfg: &ScenarioConfig) -> Result<SymbolTable, ConfigError> {
    let mut symbols = SymbolTable::new(cfg.spacetime_dimension);
    for (name, value) in &cfg.constants {
        symbols
            .insert_constant(name, *value)
            .map_err(|e| ConfigError::at(format!("constants.{name}"), e))?;
    }
    Ok(symbols)
}

fn build_metric(cfg: &ScenarioConfig, dim: FibreDimension) -> Result<FibreMetric, ConfigError> {
    let metric = match &cfg.metric {
        MetricConfig::Identity => Ok(FibreMetric::identity(dim)),
        MetricConfig::Diagonal { values } => FibreMetric::diagonal(values),
        MetricConfig::Matrix { re, im } => {
            let m = linalg::from_parts(re, im.as_deref()).map_err(|e| ConfigError::at("metric", e))?;
            FibreMetric::constant(m)
        }
    }
    .map_err(|e| ConfigError::at("metric", e))?;
    if metric.dim() != cfg.dimension {
        return Err(ConfigError::at(
            "metric",
            format!("metric is {0}x{0} but dimension is {1}", metric.dim(), cfg.dimension),
        ));
    }
    Ok(metric)
}

fn build_path(
    key: &str,
    name: &str,
    shape: &PathShape,
    built: &BTreeMap<String, Path>,
    dim: usize,
) -> Result<Path, ConfigError> {
    let lookup = |of: &str| {
        built
            .get(of)
            .ok_or_else(|| ConfigError::at(key, format!("unknown path `{of}` (paths must be declared before use)")))
    };
    let err = |e: bundle_qm::Error| ConfigError::at(key, e);
    let desc = match shape {
        PathShape::Line { from, to, domain } => PathDescriptor::Line {
            from: from.clone(),
            to: to.clone(),
            domain: interval(key, *domain)?,
        },
        PathShape::Circle {
            center,
            radius,
            plane,
            domain,
        } => PathDescriptor::Circle {
            center: center.clone(),
            radius: *radius,
            plane: (plane[0], plane[1]),
            domain: interval(key, *domain)?,
        },
        PathShape::Rest { spatial, domain } => PathDescriptor::Rest {
            spatial: spatial.clone(),
            domain: interval(key, *domain)?,
        },
        PathShape::Sampled { samples, domain } => PathDescriptor::Sampled {
            samples: samples.clone(),
            domain: interval(key, *domain)?,
        },
        PathShape::Reparametrized { of, exponent, domain } => {
            let inner = lookup(of)?;
            let new_domain = interval(key, *domain)?;
            let tau = Reparametrization::power(*exponent, new_domain, inner.domain());
            return reparametrize(inner, &tau, new_domain)
                .map(|p| p.with_id(name))
                .map_err(err);
        }
        PathShape::Restricted { of, domain } => {
            let (a, b) = interval(key, *domain)?;
            return restrict(lookup(of)?, a, b).map(|p| p.with_id(name)).map_err(err);
        }
        PathShape::Concatenated { legs } => {
            let legs = legs.iter().map(|l| lookup(l).cloned()).collect::<Result<Vec<_>, _>>()?;
            return Path::concatenate(name, legs).map_err(err);
        }
    };
    let path = make_path(name, &desc).map_err(err)?;
    if path.spacetime_dim() != dim {
        return Err(ConfigError::at(
            key,
            format!(
                "path lives in {} dimensions, spacetime_dimension is {dim}",
                path.spacetime_dim()
            ),
        ));
    }
    Ok(path)
}

fn build_observable(
    key: &str,
    name: &str,
    source: &ObservableSource,
    basis: &[CMatrix],
    cfg: &ScenarioConfig,
    symbols: &SymbolTable,
    dim: FibreDimension,
) -> Result<Observable, ConfigError> {
    let basis_element = |k: usize| {
        basis.get(k).cloned().ok_or_else(|| {
            ConfigError::at(
                key,
                format!("basis index {k} out of range (basis has {} elements)", basis.len()),
            )
        })
    };
    match source {
        ObservableSource::Basis { basis } => {
            Observable::constant(name, basis_element(*basis)?).map_err(|e| ConfigError::at(key, e))
        }
        ObservableSource::Matrix { re, im } => {
            let m = linalg::from_parts(re, im.as_deref()).map_err(|e| ConfigError::at(key, e))?;
            if m.nrows() != cfg.dimension {
                return Err(ConfigError::at(
                    key,
                    format!("observable must be {0}x{0}", cfg.dimension),
                ));
            }
            Observable::constant(name, m).map_err(|e| ConfigError::at(key, e))
        }
        ObservableSource::Terms { terms } => {
            let mut compiled = Vec::with_capacity(terms.len());
            for (k, term) in terms.iter().enumerate() {
                let tkey = format!("{key}.terms[{k}]");
                let expr = parse_expression(&term.expr)
                    .and_then(|e| e.compile(symbols))
                    .map_err(|e| dsl_error(&tkey, &term.expr, e))?;
                if expr.uses_param() {
                    return Err(ConfigError::at(tkey, "observable coefficients may not depend on `s`"));
                }
                compiled.push(HamiltonianTerm {
                    coefficient: expr,
                    basis_index: term.basis,
                    direction: 0,
                });
            }
            let field = HamiltonianField::new(cfg.dimension, 1.0, basis.to_vec(), compiled, cfg.spacetime_dimension)
                .map_err(|e| ConfigError::at(key, e))?;
            let n = cfg.dimension;
            Ok(Observable::field(name, dim, true, move |x| {
                field
                    .hamiltonian_at(x, 0.0)
                    .unwrap_or_else(|_| CMatrix::from_element(n, n, c(f64::NAN, 0.0)))
            }))
        }
    }
}

fn check_name(key: &str, name: &str) -> Result<(), ConfigError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-');
    if ok {
        Ok(())
    } else {
        Err(ConfigError::at(
            key,
            format!("name `{name}` must be non-empty and use only [A-Za-z0-9_-]"),
        ))
    }
}

fn insert_unique<T>(map: &mut BTreeMap<String, T>, key: &str, name: &str, value: T) -> Result<(), ConfigError> {
    check_name(key, name)?;
    if map.insert(name.to_string(), value).is_some() {
        return Err(ConfigError::at(key, format!("duplicate name `{name}`")));
    }
    Ok(())
}

/// Validate a parsed config and build every engine object it declares.
pub fn build(cfg: ScenarioConfig) -> Result<Scenario, ConfigError> {
    if cfg.dsl_version != DSL_VERSION {
        return Err(ConfigError::at(
            "dsl_version",
            format!(
                "unsupported version {} (this build understands {DSL_VERSION})",
                cfg.dsl_version
            ),
        ));
    }
    let dim = FibreDimension::new(cfg.dimension).map_err(|e| ConfigError::at("dimension", e))?;
    if cfg.spacetime_dimension == 0 {
        return Err(ConfigError::at("spacetime_dimension", "must be at least 1"));
    }
    let mode: Mode = cfg.mode.parse().map_err(|e| ConfigError::at("mode", e))?;
    let symbols = build_symbols(&cfg)?;
    let basis = build_basis(&cfg)?;

    let mut terms = Vec::with_capacity(cfg.hamiltonian.len());
    for (k, term) in cfg.hamiltonian.iter().enumerate() {
        let key = format!("hamiltonian[{k}].expr");
        let coefficient = parse_expression(&term.expr)
            .and_then(|e| e.compile(&symbols))
            .map_err(|e| dsl_error(&key, &term.expr, e))?;
        terms.push(HamiltonianTerm {
            coefficient,
            basis_index: term.basis,
            direction: term.direction,
        });
    }
    let coefficients = if terms.is_empty() {
        TransportCoefficients::zero(cfg.dimension)
    } else {
        let field = HamiltonianField::new(cfg.dimension, cfg.hbar, basis.clone(), terms, cfg.spacetime_dimension)
            .map_err(|e| ConfigError::at("hamiltonian", e))?;
        TransportCoefficients::from_field(field, mode).map_err(|e| ConfigError::at("hamiltonian", e))?
    };
    let settings = SolverSettings::default()
        .with_step(cfg.solver.step)
        .with_tol(cfg.solver.tol);
    settings.validate().map_err(|e| ConfigError::at("solver", e))?;
    let transport = Transport::new(coefficients, settings);

    let metric = build_metric(&cfg, dim)?;

    let mut paths = BTreeMap::new();
    for (k, p) in cfg.paths.iter().enumerate() {
        let key = format!("paths[{k}]");
        let path = build_path(&key, &p.name, &p.shape, &paths, cfg.spacetime_dimension)?;
        insert_unique(&mut paths, &key, &p.name, path)?;
    }

    let mut surfaces = BTreeMap::new();
    for (k, s) in cfg.surfaces.iter().enumerate() {
        let key = format!("surfaces[{k}]");
        let d = cfg.spacetime_dimension;
        if s.plane[0] >= d || s.plane[1] >= d || s.plane[0] == s.plane[1] {
            return Err(ConfigError::at(
                &key,
                format!("plane axes {:?} invalid for dimension {d}", s.plane),
            ));
        }
        let mut plane = AffinePlane::coordinate(d, s.plane[0], s.plane[1]);
        if let Some(origin) = &s.origin {
            plane.origin = origin.clone();
        }
        let surface = ParamSurface::plane(
            s.name.as_str(),
            plane,
            interval(&key, s.s_domain)?,
            interval(&key, s.t_domain)?,
        )
        .map_err(|e| ConfigError::at(&key, e))?;
        insert_unique(&mut surfaces, &key, &s.name, surface)?;
    }

    let mut observables = BTreeMap::new();
    for (k, o) in cfg.observables.iter().enumerate() {
        let key = format!("observables[{k}]");
        let obs = build_observable(&key, &o.name, &o.source, &basis, &cfg, &symbols, dim)?;
        insert_unique(&mut observables, &key, &o.name, obs)?;
    }

    let initial_state = match &cfg.initial_state {
        None => None,
        Some(st) => {
            let im = st.im.clone().unwrap_or_else(|| vec![0.0; st.re.len()]);
            if st.re.len() != cfg.dimension || im.len() != cfg.dimension {
                return Err(ConfigError::at(
                    "initial_state",
                    format!("state needs {} components", cfg.dimension),
                ));
            }
            let coords: Vec<C64> = st.re.iter().zip(&im).map(|(a, b)| c(*a, *b)).collect();
            if coords.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(ConfigError::at("initial_state", "entries must be finite"));
            }
            Some(coords)
        }
    };

    let mut scenario = Scenario {
        config: cfg,
        n: dim.get(),
        symbols,
        transport,
        metric,
        paths,
        surfaces,
        observables,
        initial_state,
        measurements: Vec::new(),
    };
    let mut names = std::collections::BTreeSet::new();
    let mut prepared = Vec::with_capacity(scenario.config.measurements.len());
    for (k, m) in scenario.config.measurements.iter().enumerate() {
        let key = format!("measurements[{k}]");
        check_name(&key, &m.name)?;
        if !names.insert(m.name.clone()) {
            return Err(ConfigError::at(&key, format!("duplicate name `{}`", m.name)));
        }
        prepared.push(prepare(&key, m, &scenario)?);
    }
    scenario.measurements = prepared;
    Ok(scenario)
}

/// Parse and build in one step.
pub fn load_config(text: &str) -> Result<Scenario, ConfigError> {
    build(crate::config::parse_config(text)?)
}
