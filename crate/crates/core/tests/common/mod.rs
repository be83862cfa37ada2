#![allow(dead_code)]

use bundle_qm::dsl::{Expr, Func, SymbolTable};
use bundle_qm::hamiltonian::{gell_mann_basis, HamiltonianField};
use bundle_qm::linalg::{c, CMatrix};
use bundle_qm::paths::{make_path, Path, PathDescriptor};
use bundle_qm::{Mode, SolverSettings, Transport, TransportCoefficients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pauli(k: usize) -> CMatrix {
    gell_mann_basis(2)[k].clone()
}

/// Straightforward recursive interpreter, kept separate from the compiled
/// evaluator on purpose.
pub fn tree_eval(e: &Expr, x: &[f64], s: f64, constants: &[(&str, f64)]) -> f64 {
    match e {
        Expr::Num(v) => *v,
        Expr::Ident(name) => {
            if name == "s" {
                s
            } else if name == "pi" {
                std::f64::consts::PI
            } else if let Some(idx) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                x[idx]
            } else {
                constants
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| *v)
                    .unwrap_or(f64::NAN)
            }
        }
        Expr::Neg(a) => -tree_eval(a, x, s, constants),
        Expr::Add(a, b) => tree_eval(a, x, s, constants) + tree_eval(b, x, s, constants),
        Expr::Sub(a, b) => tree_eval(a, x, s, constants) - tree_eval(b, x, s, constants),
        Expr::Mul(a, b) => tree_eval(a, x, s, constants) * tree_eval(b, x, s, constants),
        Expr::Div(a, b) => tree_eval(a, x, s, constants) / tree_eval(b, x, s, constants),
        Expr::Pow(a, b) => tree_eval(a, x, s, constants).powf(tree_eval(b, x, s, constants)),
        Expr::Call(f, a) => {
            let v = tree_eval(a, x, s, constants);
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Tanh => v.tanh(),
            }
        }
    }
}

/// A random expression source over `x0..x3`, `s`, `pi` and the constant `k`.
pub fn random_source(r: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || r.random_bool(0.25) {
        return match r.random_range(0..5) {
            0 => format!("{:.3}", r.random_range(0.0..3.0)),
            1 => format!("x{}", r.random_range(0..4)),
            2 => "s".to_string(),
            3 => "pi".to_string(),
            _ => "k".to_string(),
        };
    }
    let a = random_source(r, depth - 1);
    match r.random_range(0..9) {
        0 => format!("{a} + {}", random_source(r, depth - 1)),
        1 => format!("{a} - {}", random_source(r, depth - 1)),
        2 => format!("({a}) * ({})", random_source(r, depth - 1)),
        3 => format!("({a}) / (1.5 + tanh({}))", random_source(r, depth - 1)),
        4 => format!("-({a})"),
        5 => format!("({a})^2"),
        6 => format!("sin({a})"),
        7 => format!("cos({a}) * exp(-({})^2)", random_source(r, depth - 1)),
        _ => format!("tanh({a})"),
    }
}

/// Smooth bounded coefficient in the spacetime coordinates only.
pub fn random_coefficient(r: &mut ChaCha8Rng) -> String {
    let amp = r.random_range(0.2..1.0);
    let mu = r.random_range(0..4);
    let k = r.random_range(0.3..1.5);
    let phase = r.random_range(-1.0..1.0);
    match r.random_range(0..3) {
        0 => format!("{amp:.4}*sin({k:.4}*x{mu} + {phase:.4})"),
        1 => format!("{amp:.4}*cos({k:.4}*x{mu}) + {phase:.4}"),
        _ => format!("{amp:.4}*tanh({k:.4}*x{mu} - {phase:.4})"),
    }
}

pub struct RandomInstance {
    pub n: usize,
    pub transport: Transport,
    pub path: Path,
    pub sources: Vec<(String, usize, usize)>,
}

/// A Hermitian geometric field with a few random terms per direction, and a
/// line segment to transport along.
pub fn random_instance(r: &mut ChaCha8Rng, n: usize, hbar: f64) -> RandomInstance {
    let count = r.random_range(2..5);
    let sources: Vec<(String, usize, usize)> = (0..count)
        .map(|_| (random_coefficient(r), r.random_range(0..n * n), r.random_range(0..4)))
        .collect();
    let refs: Vec<(&str, usize, usize)> = sources.iter().map(|(e, b, d)| (e.as_str(), *b, *d)).collect();
    let field = HamiltonianField::from_sources(n, hbar, &SymbolTable::new(4), &refs).unwrap();
    let transport = Transport::new(
        TransportCoefficients::from_field(field, Mode::Geometric).unwrap(),
        SolverSettings::default(),
    );
    let mut point = || (0..4).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let path = make_path(
        "rand",
        &PathDescriptor::Line {
            from: point(),
            to: point(),
            domain: (0.0, 2.0),
        },
    )
    .unwrap();
    RandomInstance {
        n,
        transport,
        path,
        sources,
    }
}

pub fn random_direction(r: &mut ChaCha8Rng, n: usize) -> Vec<bundle_qm::linalg::C64> {
    (0..n)
        .map(|_| c(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect()
}

pub fn gauss_legendre_5() -> [(f64, f64); 5] {
    let a = (5.0f64 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let b = (5.0f64 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let wa = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
    let wb = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
    [(-b, wb), (-a, wa), (0.0, 128.0 / 225.0), (a, wa), (b, wb)]
}

/// Composite Gauss-Legendre quadrature of `f` on `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (node, w) in gauss_legendre_5() {
            total += w * f(mid + 0.5 * h * node);
        }
    }
    0.5 * h * total
}
