//! Spacetime points, parametrized paths, two-parameter surfaces and the
//! rectangle holonomy loop built from a surface.
//!
//! A [`Path`] pairs a parameter interval with a [`Curve`]; curves know their
//! point and velocity at every parameter and may report breakpoints where
//! the velocity is discontinuous (the corners of a concatenated loop). The
//! transport solver never steps across a breakpoint.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tolerance;

/// A point of the base manifold in its single global chart.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacetimePoint(Vec<f64>);

impl SpacetimePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Invalid("spacetime point needs at least one coordinate".into()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("spacetime point".into()));
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Max-norm distance; infinite when the dimensions differ.
    pub fn distance(&self, other: &SpacetimePoint) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &SpacetimePoint, tol: f64) -> bool {
        self.distance(other) <= tol
    }
}

impl From<SpacetimePoint> for Vec<f64> {
    fn from(p: SpacetimePoint) -> Self {
        p.0
    }
}

fn lerp(a: f64, b: f64, u: f64) -> f64 {
    a * (1.0 - u) + b * u
}

/// Anything that can be evaluated as a smooth curve in spacetime.
pub trait Curve: Send + Sync + fmt::Debug {
    fn point(&self, s: f64) -> SpacetimePoint;
    fn velocity(&self, s: f64) -> Vec<f64>;
    /// One-sided velocity at `s`, taken from above or below. Differs from
    /// [`Curve::velocity`] only at breakpoints.
    fn velocity_limit(&self, s: f64, from_above: bool) -> Vec<f64> {
        let _ = from_above;
        self.velocity(s)
    }
    /// Parameters where the velocity may jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Clone)]
pub struct Path {
    id: Arc<str>,
    a: f64,
    b: f64,
    curve: Arc<dyn Curve>,
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Path")
            .field("id", &self.id)
            .field("domain", &(self.a, self.b))
            .field("curve", &self.curve)
            .finish()
    }
}

impl Path {
    pub fn from_curve(id: impl Into<Arc<str>>, a: f64, b: f64, curve: Arc<dyn Curve>) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInterval(a, b));
        }
        Ok(Self {
            id: id.into(),
            a,
            b,
            curve,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<Arc<str>>) -> Self {
        self.id = id.into();
        self
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn start(&self) -> SpacetimePoint {
        self.curve.point(self.a)
    }

    pub fn end(&self) -> SpacetimePoint {
        self.curve.point(self.b)
    }

    pub fn point(&self, s: f64) -> SpacetimePoint {
        self.curve.point(s)
    }

    pub fn velocity(&self, s: f64) -> Vec<f64> {
        self.curve.velocity(s)
    }

    pub fn velocity_limit(&self, s: f64, from_above: bool) -> Vec<f64> {
        self.curve.velocity_limit(s, from_above)
    }

    pub fn spacetime_dim(&self) -> usize {
        self.start().dim()
    }

    pub fn contains(&self, s: f64) -> bool {
        let slack = tolerance::POINT_MATCH * (1.0 + self.a.abs().max(self.b.abs()));
        s >= self.a - slack && s <= self.b + slack
    }

    pub fn check_contains(&self, s: f64) -> Result<()> {
        if s.is_finite() && self.contains(s) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                value: s,
                a: self.a,
                b: self.b,
            })
        }
    }

    pub fn is_closed(&self, tol: f64) -> bool {
        self.start().approx_eq(&self.end(), tol)
    }

    /// Breakpoints strictly between `s` and `t`, ordered from `s` towards `t`.
    pub fn breakpoints_between(&self, s: f64, t: f64) -> Vec<f64> {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        let mut bps: Vec<f64> = self
            .curve
            .breakpoints()
            .into_iter()
            .filter(|&b| b > lo && b < hi)
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        if s > t {
            bps.reverse();
        }
        bps
    }

    /// Glue paths end to end. Each leg keeps its parameter length; the
    /// combined domain starts at the first leg's start.
    pub fn concatenate(id: impl Into<Arc<str>>, legs: Vec<Path>) -> Result<Path> {
        let first = legs
            .first()
            .ok_or_else(|| Error::Invalid("cannot concatenate zero paths".into()))?;
        let mut offset = first.a;
        let mut placed = Vec::with_capacity(legs.len());
        for (k, leg) in legs.iter().enumerate() {
            if k > 0 {
                let prev: &Path = &legs[k - 1];
                let gap = prev.end().distance(&leg.start());
                if gap > tolerance::POINT_MATCH {
                    return Err(Error::EndpointMismatch(gap));
                }
            }
            placed.push((offset, leg.clone()));
            offset += leg.b - leg.a;
        }
        let end = offset;
        let curve = Arc::new(ConcatCurve { legs: placed, end });
        Path::from_curve(id, first.a, end, curve)
    }
}

/// Strictly monotone smooth map from a new parameter interval onto an old one.
#[derive(Clone)]
pub struct Reparametrization {
    label: Arc<str>,
    map: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    rate: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for Reparametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Reparametrization({})", self.label)
    }
}

impl Reparametrization {
    /// `map` is the parameter change and `rate` its derivative.
    pub fn custom(
        label: impl Into<Arc<str>>,
        map: impl Fn(f64) -> f64 + Send + Sync + 'static,
        rate: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            map: Arc::new(map),
            rate: Arc::new(rate),
        }
    }

    pub fn identity() -> Self {
        Self::custom("id", |s| s, |_| 1.0)
    }

    pub fn affine(scale: f64, offset: f64) -> Self {
        Self::custom(
            format!("{scale}*s+{offset}"),
            move |s| scale * s + offset,
            move |_| scale,
        )
    }

    /// `a + (b - a) * ((σ - c) / (d - c))^p`, taking `[c, d]` onto `[a, b]`.
    pub fn power(exponent: f64, from: (f64, f64), onto: (f64, f64)) -> Self {
        let (c0, d0) = from;
        let (a0, b0) = onto;
        let width = d0 - c0;
        let span = b0 - a0;
        Self::custom(
            format!("pow{exponent}"),
            move |s| a0 + span * ((s - c0) / width).max(0.0).powf(exponent),
            move |s| {
                let u = ((s - c0) / width).max(0.0);
                if exponent == 1.0 {
                    span / width
                } else {
                    span * exponent * u.powf(exponent - 1.0) / width
                }
            },
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn apply(&self, s: f64) -> f64 {
        (self.map)(s)
    }

    pub fn rate(&self, s: f64) -> f64 {
        (self.rate)(s)
    }

    /// Solve `apply(σ) = value` on `[c, d]` by bisection.
    fn invert_on(&self, value: f64, c0: f64, d0: f64) -> f64 {
        let increasing = self.apply(d0) > self.apply(c0);
        let (mut lo, mut hi) = (c0, d0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let below = self.apply(mid) < value;
            if below == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Precompose a path with a parameter change `tau: [c, d] -> domain(p)`.
pub fn reparametrize(p: &Path, tau: &Reparametrization, new_domain: (f64, f64)) -> Result<Path> {
    let (c0, d0) = new_domain;
    if !(c0.is_finite() && d0.is_finite() && c0 < d0) {
        return Err(Error::InvalidInterval(c0, d0));
    }
    const PROBES: usize = 256;
    let mut prev = tau.apply(c0);
    let mut sign = 0.0;
    for k in 1..=PROBES {
        let s = c0 + (d0 - c0) * k as f64 / PROBES as f64;
        let v = tau.apply(s);
        let step = v - prev;
        if !(step.is_finite()) || step == 0.0 || (sign != 0.0 && step.signum() != sign) {
            return Err(Error::NonMonotone);
        }
        sign = step.signum();
        prev = v;
    }
    let (a, b) = p.domain();
    let (lo, hi) = {
        let x = tau.apply(c0);
        let y = tau.apply(d0);
        if x < y {
            (x, y)
        } else {
            (y, x)
        }
    };
    let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
    if (lo - a).abs() > slack || (hi - b).abs() > slack {
        return Err(Error::Invalid(format!(
            "reparametrization maps [{c0}, {d0}] onto [{lo}, {hi}], not [{a}, {b}]"
        )));
    }
    let id = format!("{}@{}", p.id(), tau.label());
    let curve = Arc::new(ReparamCurve {
        inner: p.clone(),
        tau: tau.clone(),
        new_domain,
    });
    Path::from_curve(id, c0, d0, curve)
}

/// Restrict a path to a subinterval of its domain.
pub fn restrict(p: &Path, a: f64, b: f64) -> Result<Path> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidInterval(a, b));
    }
    let (pa, pb) = p.domain();
    if a < pa || b > pb {
        return Err(Error::NotContained {
            inner_a: a,
            inner_b: b,
            outer_a: pa,
            outer_b: pb,
        });
    }
    Ok(Path {
        id: format!("{}[{a},{b}]", p.id()).into(),
        a,
        b,
        curve: p.curve.clone(),
    })
}

/// Built-in path generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Line,
    Circle,
    Rest,
    Sampled,
}

impl FromStr for Generator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(Self::Line),
            "circle" => Ok(Self::Circle),
            "rest" | "rest_worldline" => Ok(Self::Rest),
            "sampled" => Ok(Self::Sampled),
            other => Err(Error::UnknownGenerator(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathDescriptor {
    /// Straight segment from `from` (at the domain start) to `to`.
    Line {
        from: Vec<f64>,
        to: Vec<f64>,
        domain: (f64, f64),
    },
    /// `center + r (cos s e_i + sin s e_j)` in the coordinate plane `(i, j)`.
    Circle {
        center: Vec<f64>,
        radius: f64,
        plane: (usize, usize),
        domain: (f64, f64),
    },
    /// Observer at rest: `x0 = s`, spatial coordinates fixed.
    Rest { spatial: Vec<f64>, domain: (f64, f64) },
    /// Uniform samples over the domain, natural cubic spline in between.
    Sampled { samples: Vec<Vec<f64>>, domain: (f64, f64) },
}

impl PathDescriptor {
    pub fn generator(&self) -> Generator {
        match self {
            Self::Line { .. } => Generator::Line,
            Self::Circle { .. } => Generator::Circle,
            Self::Rest { .. } => Generator::Rest,
            Self::Sampled { .. } => Generator::Sampled,
        }
    }
}

pub fn make_path(id: &str, desc: &PathDescriptor) -> Result<Path> {
    fn finite(v: &[f64], what: &str) -> Result<()> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.into()))
        }
    }
    match desc {
        PathDescriptor::Line { from, to, domain } => {
            if from.len() != to.len() {
                return Err(Error::DimensionMismatch {
                    expected: from.len(),
                    found: to.len(),
                });
            }
            if from.is_empty() {
                return Err(Error::Invalid("line endpoints are empty".into()));
            }
            finite(from, "line start")?;
            finite(to, "line end")?;
            let curve = LineCurve {
                from: from.clone(),
                to: to.clone(),
                a: domain.0,
                b: domain.1,
            };
            Path::from_curve(id, domain.0, domain.1, Arc::new(curve))
        }
        PathDescriptor::Circle {
            center,
            radius,
            plane,
            domain,
        } => {
            finite(center, "circle center")?;
            let (i, j) = *plane;
            if i == j || i >= center.len() || j >= center.len() {
                return Err(Error::Invalid(format!(
                    "circle plane ({i}, {j}) invalid for dimension {}",
                    center.len()
                )));
            }
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(Error::Invalid(format!("circle radius {radius} must be positive")));
            }
            let curve = CircleCurve {
                center: center.clone(),
                radius: *radius,
                plane: *plane,
            };
            Path::from_curve(id, domain.0, domain.1, Arc::new(curve))
        }
        PathDescriptor::Rest { spatial, domain } => {
            finite(spatial, "rest worldline")?;
            let curve = RestCurve {
                spatial: spatial.clone(),
            };
            Path::from_curve(id, domain.0, domain.1, Arc::new(curve))
        }
        PathDescriptor::Sampled { samples, domain } => {
            if samples.len() < 2 {
                return Err(Error::TooFewSamples(samples.len()));
            }
            let dim = samples[0].len();
            if dim == 0 {
                return Err(Error::Invalid("samples are empty".into()));
            }
            for s in samples {
                if s.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: s.len(),
                    });
                }
                finite(s, "path sample")?;
            }
            if domain.0.is_nan() || domain.1.is_nan() || domain.0 >= domain.1 {
                return Err(Error::InvalidInterval(domain.0, domain.1));
            }
            let curve = SplineCurve::new(samples.clone(), domain.0, domain.1);
            Path::from_curve(id, domain.0, domain.1, Arc::new(curve))
        }
    }
}

#[derive(Debug)]
struct LineCurve {
    from: Vec<f64>,
    to: Vec<f64>,
    a: f64,
    b: f64,
}

impl Curve for LineCurve {
    fn point(&self, s: f64) -> SpacetimePoint {
        let u = (s - self.a) / (self.b - self.a);
        SpacetimePoint(self.from.iter().zip(&self.to).map(|(p, q)| lerp(*p, *q, u)).collect())
    }

    fn velocity(&self, _s: f64) -> Vec<f64> {
        let w = self.b - self.a;
        self.from.iter().zip(&self.to).map(|(p, q)| (q - p) / w).collect()
    }
}

#[derive(Debug)]
struct CircleCurve {
    center: Vec<f64>,
    radius: f64,
    plane: (usize, usize),
}

impl Curve for CircleCurve {
    fn point(&self, s: f64) -> SpacetimePoint {
        let mut x = self.center.clone();
        x[self.plane.0] += self.radius * s.cos();
        x[self.plane.1] += self.radius * s.sin();
        SpacetimePoint(x)
    }

    fn velocity(&self, s: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.center.len()];
        v[self.plane.0] = -self.radius * s.sin();
        v[self.plane.1] = self.radius * s.cos();
        v
    }
}

#[derive(Debug)]
struct RestCurve {
    spatial: Vec<f64>,
}

impl Curve for RestCurve {
    fn point(&self, s: f64) -> SpacetimePoint {
        let mut x = Vec::with_capacity(self.spatial.len() + 1);
        x.push(s);
        x.extend_from_slice(&self.spatial);
        SpacetimePoint(x)
    }

    fn velocity(&self, _s: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.spatial.len() + 1];
        v[0] = 1.0;
        v
    }
}

/// Natural cubic spline through uniformly spaced samples.
#[derive(Debug)]
struct SplineCurve {
    samples: Vec<Vec<f64>>,
    /// Second derivatives at the knots, per knot then per coordinate.
    curvature: Vec<Vec<f64>>,
    a: f64,
    span: f64,
    h: f64,
}

impl SplineCurve {
    fn new(samples: Vec<Vec<f64>>, a: f64, b: f64) -> Self {
        let n = samples.len();
        let dim = samples[0].len();
        let h = (b - a) / (n - 1) as f64;
        let mut curvature = vec![vec![0.0; dim]; n];
        if n > 2 {
            // Thomas algorithm for M[k-1] + 4 M[k] + M[k+1] = rhs[k], M[0] = M[n-1] = 0.
            let m = n - 2;
            for d in 0..dim {
                let rhs: Vec<f64> = (1..n - 1)
                    .map(|k| 6.0 * (samples[k + 1][d] - 2.0 * samples[k][d] + samples[k - 1][d]) / (h * h))
                    .collect();
                let mut diag = vec![4.0; m];
                let mut r = rhs;
                for k in 1..m {
                    let w = 1.0 / diag[k - 1];
                    diag[k] -= w;
                    r[k] -= w * r[k - 1];
                }
                let mut sol = vec![0.0; m];
                sol[m - 1] = r[m - 1] / diag[m - 1];
                for k in (0..m - 1).rev() {
                    sol[k] = (r[k] - sol[k + 1]) / diag[k];
                }
                for k in 0..m {
                    curvature[k + 1][d] = sol[k];
                }
            }
        }
        Self {
            samples,
            curvature,
            a,
            span: b - a,
            h,
        }
    }

    fn knot(&self, k: usize) -> f64 {
        self.a + self.span * k as f64 / (self.samples.len() - 1) as f64
    }

    fn locate(&self, s: f64) -> usize {
        let last = self.samples.len() - 2;
        let pos = ((s - self.a) / self.h).floor();
        if pos <= 0.0 {
            0
        } else {
            (pos as usize).min(last)
        }
    }

    fn exact_knot(&self, s: f64) -> Option<usize> {
        let k = self.locate(s);
        (k..=k + 1).find(|&j| self.knot(j) == s)
    }
}

impl Curve for SplineCurve {
    fn point(&self, s: f64) -> SpacetimePoint {
        if let Some(k) = self.exact_knot(s) {
            return SpacetimePoint(self.samples[k].clone());
        }
        let k = self.locate(s);
        let h = self.h;
        let left = s - self.knot(k);
        let right = self.knot(k + 1) - s;
        let (y0, y1) = (&self.samples[k], &self.samples[k + 1]);
        let (m0, m1) = (&self.curvature[k], &self.curvature[k + 1]);
        SpacetimePoint(
            (0..y0.len())
                .map(|d| {
                    m0[d] * right.powi(3) / (6.0 * h)
                        + m1[d] * left.powi(3) / (6.0 * h)
                        + (y0[d] / h - m0[d] * h / 6.0) * right
                        + (y1[d] / h - m1[d] * h / 6.0) * left
                })
                .collect(),
        )
    }

    fn velocity(&self, s: f64) -> Vec<f64> {
        let k = self.locate(s);
        let h = self.h;
        let left = s - self.knot(k);
        let right = self.knot(k + 1) - s;
        let (y0, y1) = (&self.samples[k], &self.samples[k + 1]);
        let (m0, m1) = (&self.curvature[k], &self.curvature[k + 1]);
        (0..y0.len())
            .map(|d| {
                -m0[d] * right * right / (2.0 * h) + m1[d] * left * left / (2.0 * h) - (y0[d] / h - m0[d] * h / 6.0)
                    + (y1[d] / h - m1[d] * h / 6.0)
            })
            .collect()
    }
}

#[derive(Debug)]
struct ReparamCurve {
    inner: Path,
    tau: Reparametrization,
    new_domain: (f64, f64),
}

impl Curve for ReparamCurve {
    fn point(&self, s: f64) -> SpacetimePoint {
        self.inner.point(self.tau.apply(s))
    }

    fn velocity(&self, s: f64) -> Vec<f64> {
        let rate = self.tau.rate(s);
        self.inner
            .velocity(self.tau.apply(s))
            .into_iter()
            .map(|v| v * rate)
            .collect()
    }

    fn velocity_limit(&self, s: f64, from_above: bool) -> Vec<f64> {
        let rate = self.tau.rate(s);
        self.inner
            .curve
            .velocity_limit(self.tau.apply(s), from_above == (rate > 0.0))
            .into_iter()
            .map(|v| v * rate)
            .collect()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let (c0, d0) = self.new_domain;
        self.inner
            .curve
            .breakpoints()
            .into_iter()
            .map(|b| self.tau.invert_on(b, c0, d0))
            .collect()
    }
}

#[derive(Debug)]
struct ConcatCurve {
    /// Global start parameter of each leg, with the leg itself.
    legs: Vec<(f64, Path)>,
    end: f64,
}

impl ConcatCurve {
    fn local(&self, s: f64) -> (&Path, f64) {
        let (last_offset, last) = self.legs.last().expect("non-empty");
        if s >= self.end {
            return (last, last.b);
        }
        if s >= *last_offset {
            return (last, last.a + (s - last_offset));
        }
        let k = self.legs.iter().rposition(|(offset, _)| s >= *offset).unwrap_or(0);
        let (offset, leg) = &self.legs[k];
        (leg, leg.a + (s - offset))
    }
}

impl Curve for ConcatCurve {
    fn point(&self, s: f64) -> SpacetimePoint {
        let (leg, local) = self.local(s);
        leg.point(local)
    }

    fn velocity(&self, s: f64) -> Vec<f64> {
        let (leg, local) = self.local(s);
        leg.velocity(local)
    }

    fn velocity_limit(&self, s: f64, from_above: bool) -> Vec<f64> {
        if !from_above {
            if let Some(k) = self.legs.iter().skip(1).position(|(offset, _)| *offset == s) {
                let leg = &self.legs[k].1;
                return leg.velocity_limit(leg.b, false);
            }
        }
        let (leg, local) = self.local(s);
        leg.velocity_limit(local, from_above)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (k, (offset, leg)) in self.legs.iter().enumerate() {
            if k > 0 {
                out.push(*offset);
            }
            out.extend(leg.curve.breakpoints().into_iter().map(|b| offset + (b - leg.a)));
        }
        out
    }
}

/// A C² map from a parameter rectangle into spacetime.
pub trait Surface: Send + Sync + fmt::Debug {
    fn point(&self, s: f64, t: f64) -> SpacetimePoint;
    fn partial_s(&self, s: f64, t: f64) -> Vec<f64>;
    fn partial_t(&self, s: f64, t: f64) -> Vec<f64>;
}

/// `origin + s u + t v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePlane {
    pub origin: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl AffinePlane {
    /// The plane spanned by coordinate axes `i` and `j` through the origin.
    pub fn coordinate(dim: usize, i: usize, j: usize) -> Self {
        let mut u = vec![0.0; dim];
        let mut v = vec![0.0; dim];
        u[i] = 1.0;
        v[j] = 1.0;
        Self {
            origin: vec![0.0; dim],
            u,
            v,
        }
    }
}

impl Surface for AffinePlane {
    fn point(&self, s: f64, t: f64) -> SpacetimePoint {
        SpacetimePoint(
            self.origin
                .iter()
                .zip(self.u.iter().zip(&self.v))
                .map(|(o, (u, v))| o + s * u + t * v)
                .collect(),
        )
    }

    fn partial_s(&self, _s: f64, _t: f64) -> Vec<f64> {
        self.u.clone()
    }

    fn partial_t(&self, _s: f64, _t: f64) -> Vec<f64> {
        self.v.clone()
    }
}

/// Two-parameter surface with a rectangular domain.
#[derive(Clone)]
pub struct ParamSurface {
    id: Arc<str>,
    s_domain: (f64, f64),
    t_domain: (f64, f64),
    map: Arc<dyn Surface>,
}

impl fmt::Debug for ParamSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamSurface")
            .field("id", &self.id)
            .field("s_domain", &self.s_domain)
            .field("t_domain", &self.t_domain)
            .finish()
    }
}

impl ParamSurface {
    pub fn new(
        id: impl Into<Arc<str>>,
        s_domain: (f64, f64),
        t_domain: (f64, f64),
        map: Arc<dyn Surface>,
    ) -> Result<Self> {
        for (a, b) in [s_domain, t_domain] {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidInterval(a, b));
            }
        }
        Ok(Self {
            id: id.into(),
            s_domain,
            t_domain,
            map,
        })
    }

    pub fn plane(
        id: impl Into<Arc<str>>,
        plane: AffinePlane,
        s_domain: (f64, f64),
        t_domain: (f64, f64),
    ) -> Result<Self> {
        if plane.origin.len() != plane.u.len() || plane.u.len() != plane.v.len() {
            return Err(Error::DimensionMismatch {
                expected: plane.origin.len(),
                found: plane.u.len().max(plane.v.len()),
            });
        }
        Self::new(id, s_domain, t_domain, Arc::new(plane))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn domain(&self) -> ((f64, f64), (f64, f64)) {
        (self.s_domain, self.t_domain)
    }

    pub fn point(&self, s: f64, t: f64) -> SpacetimePoint {
        self.map.point(s, t)
    }

    pub fn partial_s(&self, s: f64, t: f64) -> Vec<f64> {
        self.map.partial_s(s, t)
    }

    pub fn partial_t(&self, s: f64, t: f64) -> Vec<f64> {
        self.map.partial_t(s, t)
    }

    fn contains_rectangle(&self, s: f64, t: f64, ds: f64, dt: f64) -> bool {
        let (sa, sb) = self.s_domain;
        let (ta, tb) = self.t_domain;
        s >= sa && s + ds <= sb && t >= ta && t + dt <= tb
    }
}

/// Straight segment in the parameter rectangle of a surface, pushed forward.
#[derive(Debug)]
struct SurfaceSegment {
    surface: ParamSurface,
    from: (f64, f64),
    to: (f64, f64),
    length: f64,
}

impl SurfaceSegment {
    fn params(&self, sigma: f64) -> (f64, f64) {
        let u = sigma / self.length;
        (lerp(self.from.0, self.to.0, u), lerp(self.from.1, self.to.1, u))
    }
}

impl Curve for SurfaceSegment {
    fn point(&self, sigma: f64) -> SpacetimePoint {
        let (s, t) = self.params(sigma);
        self.surface.point(s, t)
    }

    fn velocity(&self, sigma: f64) -> Vec<f64> {
        let (s, t) = self.params(sigma);
        let ds = (self.to.0 - self.from.0) / self.length;
        let dt = (self.to.1 - self.from.1) / self.length;
        let ps = self.surface.partial_s(s, t);
        let pt = self.surface.partial_t(s, t);
        ps.iter().zip(&pt).map(|(a, b)| a * ds + b * dt).collect()
    }
}

/// The oriented boundary of the parameter rectangle
/// `[s, s + δ] × [t, t + ε]`, traversed
/// `(s,t) → (s+δ,t) → (s+δ,t+ε) → (s,t+ε) → (s,t)`.
#[derive(Debug, Clone)]
pub struct HolonomyLoop {
    surface: ParamSurface,
    base: (f64, f64),
    sides: (f64, f64),
    path: Path,
}

impl HolonomyLoop {
    pub fn surface(&self) -> &ParamSurface {
        &self.surface
    }

    pub fn base(&self) -> (f64, f64) {
        self.base
    }

    pub fn sides(&self) -> (f64, f64) {
        self.sides
    }

    pub fn area(&self) -> f64 {
        self.sides.0 * self.sides.1
    }

    pub fn as_path(&self) -> &Path {
        &self.path
    }

    /// Parameter values of the five corners along [`Self::as_path`].
    pub fn leg_bounds(&self) -> [f64; 5] {
        let (d, e) = self.sides;
        [0.0, d, d + e, d + e + d, d + e + d + e]
    }

    /// Surface images of the five visited corners, in traversal order.
    pub fn corners(&self) -> [SpacetimePoint; 5] {
        let (s, t) = self.base;
        let (d, e) = self.sides;
        [
            self.surface.point(s, t),
            self.surface.point(s + d, t),
            self.surface.point(s + d, t + e),
            self.surface.point(s, t + e),
            self.surface.point(s, t),
        ]
    }
}

pub fn build_holonomy_loop(surface: &ParamSurface, s: f64, t: f64, delta: f64, eps: f64) -> Result<HolonomyLoop> {
    if !(delta > 0.0 && eps > 0.0) {
        return Err(Error::NonPositiveSides(delta, eps));
    }
    if !surface.contains_rectangle(s, t, delta, eps) {
        return Err(Error::RectangleOutsideDomain {
            s,
            s_end: s + delta,
            t,
            t_end: t + eps,
        });
    }
    let corners = [(s, t), (s + delta, t), (s + delta, t + eps), (s, t + eps), (s, t)];
    let lengths = [delta, eps, delta, eps];
    let mut legs = Vec::with_capacity(4);
    for k in 0..4 {
        let seg = SurfaceSegment {
            surface: surface.clone(),
            from: corners[k],
            to: corners[k + 1],
            length: lengths[k],
        };
        legs.push(Path::from_curve(
            format!("{}:leg{k}", surface.id()),
            0.0,
            lengths[k],
            Arc::new(seg),
        )?);
    }
    let id = format!("loop({}@{s},{t};{delta}x{eps})", surface.id());
    let path = Path::concatenate(id, legs)?;
    Ok(HolonomyLoop {
        surface: surface.clone(),
        base: (s, t),
        sides: (delta, eps),
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rest(domain: (f64, f64)) -> Path {
        make_path(
            "rest",
            &PathDescriptor::Rest {
                spatial: vec![0.0, 0.0, 0.0],
                domain,
            },
        )
        .unwrap()
    }

    #[test]
    fn rest_worldline_tracks_parameter() {
        let p = rest((0.0, 1.0));
        assert_eq!(p.point(0.5).coords(), &[0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn line_hits_endpoints() {
        let from = vec![1.0, -2.0, 0.5, 3.0];
        let to = vec![0.0, 4.0, 0.25, -1.0];
        let p = make_path(
            "l",
            &PathDescriptor::Line {
                from: from.clone(),
                to: to.clone(),
                domain: (2.0, 5.0),
            },
        )
        .unwrap();
        assert_eq!(p.start().coords(), from.as_slice());
        assert_eq!(p.end().coords(), to.as_slice());
    }

    #[test]
    fn circle_closes() {
        let p = make_path(
            "c",
            &PathDescriptor::Circle {
                center: vec![0.0; 4],
                radius: 1.0,
                plane: (1, 2),
                domain: (0.0, 2.0 * PI),
            },
        )
        .unwrap();
        assert!(p.start().distance(&p.end()) < 1e-15);
        assert!(p.is_closed(1e-12));
    }

    #[test]
    fn unknown_generator_and_short_samples() {
        assert_eq!(
            "spiral".parse::<Generator>(),
            Err(Error::UnknownGenerator("spiral".into()))
        );
        let err = make_path(
            "s",
            &PathDescriptor::Sampled {
                samples: vec![vec![0.0; 4]],
                domain: (0.0, 1.0),
            },
        )
        .unwrap_err();
        assert_eq!(err, Error::TooFewSamples(1));
    }

    #[test]
    fn identity_and_affine_reparametrization() {
        let p = make_path(
            "c",
            &PathDescriptor::Circle {
                center: vec![0.0; 4],
                radius: 2.0,
                plane: (0, 3),
                domain: (0.0, 1.0),
            },
        )
        .unwrap();
        let q = reparametrize(&p, &Reparametrization::identity(), (0.0, 1.0)).unwrap();
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            assert_eq!(q.point(s), p.point(s));
        }
        let r = reparametrize(&p, &Reparametrization::affine(2.0, 0.0), (0.0, 0.5)).unwrap();
        assert_eq!(r.point(0.25), p.point(0.5));
    }

    #[test]
    fn square_reparametrization_composes_pointwise() {
        let p = make_path(
            "l",
            &PathDescriptor::Line {
                from: vec![0.0, 1.0, 2.0, 3.0],
                to: vec![1.0, -1.0, 0.0, 5.0],
                domain: (0.0, 1.0),
            },
        )
        .unwrap();
        let tau = Reparametrization::power(2.0, (0.0, 1.0), (0.0, 1.0));
        let q = reparametrize(&p, &tau, (0.0, 1.0)).unwrap();
        for k in 0..10 {
            let sigma = 0.05 + 0.1 * k as f64;
            let expected = p.point(sigma * sigma);
            assert!(q.point(sigma).distance(&expected) < 1e-15);
        }
    }

    #[test]
    fn non_monotone_reparametrization_rejected() {
        let p = rest((0.0, 1.0));
        let tau = Reparametrization::custom("fold", |s: f64| 4.0 * s * (1.0 - s), |s: f64| 4.0 - 8.0 * s);
        assert_eq!(reparametrize(&p, &tau, (0.0, 1.0)).unwrap_err(), Error::NonMonotone);
    }

    #[test]
    fn reparametrization_must_cover_domain() {
        let p = rest((0.0, 1.0));
        assert!(reparametrize(&p, &Reparametrization::affine(1.0, 0.0), (0.0, 0.5)).is_err());
    }

    #[test]
    fn restriction_is_pointwise() {
        let p = rest((0.0, 1.0));
        let full = restrict(&p, 0.0, 1.0).unwrap();
        assert_eq!(full.domain(), p.domain());
        let q = restrict(&p, 0.2, 0.6).unwrap();
        assert_eq!(q.point(0.3), p.point(0.3));
        assert!(matches!(restrict(&p, 0.5, 1.5), Err(Error::NotContained { .. })));
    }

    #[test]
    fn spline_velocity_matches_finite_difference() {
        let samples: Vec<Vec<f64>> = (0..9)
            .map(|k| {
                let s = k as f64 / 8.0;
                vec![s, (3.0 * s).sin(), s * s, 1.0]
            })
            .collect();
        let p = make_path(
            "sp",
            &PathDescriptor::Sampled {
                samples,
                domain: (0.0, 1.0),
            },
        )
        .unwrap();
        let h = 1e-6;
        for s in [0.1, 0.37, 0.5, 0.93] {
            let v = p.velocity(s);
            let a = p.point(s - h);
            let b = p.point(s + h);
            for (d, vd) in v.iter().enumerate() {
                let fd = (b.coords()[d] - a.coords()[d]) / (2.0 * h);
                assert!((fd - vd).abs() < 1e-6, "coord {d} at {s}: {fd} vs {vd}");
            }
        }
    }

    fn flat_plane() -> ParamSurface {
        ParamSurface::plane("plane", AffinePlane::coordinate(4, 0, 1), (0.0, 1.0), (0.0, 1.0)).unwrap()
    }

    #[test]
    fn square_loop_corners_and_closure() {
        let eta = flat_plane();
        let lp = build_holonomy_loop(&eta, 0.2, 0.3, 0.1, 0.1).unwrap();
        let path = lp.as_path();
        assert_eq!(path.start(), path.end());
        let bounds = lp.leg_bounds();
        let corners = lp.corners();
        for (b, c) in bounds.iter().zip(corners.iter()) {
            assert!(path.point(*b).distance(c) < 1e-14);
        }
        assert!((corners[1].coords()[0] - corners[0].coords()[0] - 0.1).abs() < 1e-15);
        assert!((corners[2].coords()[1] - corners[1].coords()[1] - 0.1).abs() < 1e-15);
        assert_eq!(path.breakpoints_between(0.0, bounds[4]).len(), 3);
    }

    #[test]
    fn loop_must_fit_in_domain() {
        let eta = flat_plane();
        assert!(matches!(
            build_holonomy_loop(&eta, 0.95, 0.3, 0.1, 0.1),
            Err(Error::RectangleOutsideDomain { .. })
        ));
        assert_eq!(
            build_holonomy_loop(&eta, 0.2, 0.2, 0.0, 0.0).unwrap_err(),
            Error::NonPositiveSides(0.0, 0.0)
        );
    }

    #[test]
    fn reversed_breakpoints_are_descending() {
        let eta = flat_plane();
        let lp = build_holonomy_loop(&eta, 0.0, 0.0, 0.25, 0.5).unwrap();
        let bps = lp.as_path().breakpoints_between(1.5, 0.0);
        assert_eq!(bps, vec![1.0, 0.75, 0.25]);
    }
}
