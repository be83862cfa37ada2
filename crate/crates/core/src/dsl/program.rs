use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use super::{CoefficientExpr, DslError, Expr, Func};
use crate::paths::SpacetimePoint;

/// Names an expression may refer to besides the built-ins.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTable {
    spacetime_dim: usize,
    constants: BTreeMap<String, f64>,
}

impl SymbolTable {
    pub fn new(spacetime_dim: usize) -> Self {
        Self {
            spacetime_dim,
            constants: BTreeMap::new(),
        }
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Result<Self, DslError> {
        self.insert_constant(name, value)?;
        Ok(self)
    }

    pub fn insert_constant(&mut self, name: &str, value: f64) -> Result<(), DslError> {
        let coordinate_like = name
            .strip_prefix('x')
            .is_some_and(|k| !k.is_empty() && k.chars().all(|c| c.is_ascii_digit()));
        if coordinate_like || self.builtin(name).is_some() || Func::from_name(name).is_some() {
            return Err(DslError::ReservedName(name.to_string()));
        }
        if !value.is_finite() {
            return Err(DslError::NonFinite(name.to_string()));
        }
        self.constants.insert(name.to_string(), value);
        Ok(())
    }

    pub fn spacetime_dim(&self) -> usize {
        self.spacetime_dim
    }

    fn builtin(&self, name: &str) -> Option<Op> {
        match name {
            "pi" => return Some(Op::Const(PI)),
            "s" => return Some(Op::Param),
            _ => {}
        }
        let index = name.strip_prefix('x')?;
        if index.is_empty() || (index.len() > 1 && index.starts_with('0')) {
            return None;
        }
        let k: usize = index.parse().ok()?;
        (k < self.spacetime_dim).then_some(Op::Coord(k))
    }

    fn resolve(&self, name: &str) -> Option<Op> {
        self.builtin(name)
            .or_else(|| self.constants.get(name).map(|v| Op::Const(*v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Coord(usize),
    Param,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Call(Func),
}

/// A coefficient lowered to a postfix program with identifiers resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    source: Arc<str>,
    ops: Vec<Op>,
    depth: usize,
}

impl CompiledExpr {
    pub(super) fn compile(expr: &CoefficientExpr, symbols: &SymbolTable) -> Result<Self, DslError> {
        let mut ops = Vec::new();
        lower(expr.ast(), symbols, expr.source(), &mut ops)?;
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Coord(_) | Op::Param => depth += 1,
                Op::Neg | Op::Call(_) => {}
                _ => depth -= 1,
            }
            max_depth = max_depth.max(depth);
        }
        Ok(Self {
            source: expr.source.clone(),
            ops,
            depth: max_depth,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when the value depends on the raw path parameter `s`.
    pub fn uses_param(&self) -> bool {
        self.ops.iter().any(|op| matches!(op, Op::Param))
    }

    pub fn eval(&self, x: &SpacetimePoint, s: f64) -> Result<f64, DslError> {
        let coords = x.coords();
        let mut stack: Vec<f64> = Vec::with_capacity(self.depth);
        for op in &self.ops {
            match *op {
                Op::Const(v) => stack.push(v),
                Op::Coord(k) => match coords.get(k) {
                    Some(v) => stack.push(*v),
                    None => {
                        return Err(DslError::UnknownIdentifier {
                            name: format!("x{k}"),
                            source_text: self.source.to_string(),
                        })
                    }
                },
                Op::Param => stack.push(s),
                Op::Neg => {
                    let top = stack.last_mut().expect("operand");
                    *top = -*top;
                }
                Op::Call(f) => {
                    let top = stack.last_mut().expect("operand");
                    *top = f.apply(*top);
                }
                binary => {
                    let rhs = stack.pop().expect("operand");
                    let lhs = stack.last_mut().expect("operand");
                    *lhs = match binary {
                        Op::Add => *lhs + rhs,
                        Op::Sub => *lhs - rhs,
                        Op::Mul => *lhs * rhs,
                        Op::Div => {
                            if rhs == 0.0 {
                                return Err(DslError::DivisionByZero(self.source.to_string()));
                            }
                            *lhs / rhs
                        }
                        Op::Pow => lhs.powf(rhs),
                        _ => unreachable!(),
                    };
                }
            }
        }
        let value = stack.pop().expect("result");
        if value.is_finite() {
            Ok(value)
        } else {
            Err(DslError::NonFinite(self.source.to_string()))
        }
    }
}

fn lower(e: &Expr, symbols: &SymbolTable, source: &str, ops: &mut Vec<Op>) -> Result<(), DslError> {
    match e {
        Expr::Num(v) => ops.push(Op::Const(*v)),
        Expr::Ident(name) => {
            let op = symbols.resolve(name).ok_or_else(|| DslError::UnknownIdentifier {
                name: name.clone(),
                source_text: source.to_string(),
            })?;
            ops.push(op);
        }
        Expr::Neg(a) => {
            lower(a, symbols, source, ops)?;
            ops.push(Op::Neg);
        }
        Expr::Call(f, a) => {
            lower(a, symbols, source, ops)?;
            ops.push(Op::Call(*f));
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
            lower(a, symbols, source, ops)?;
            lower(b, symbols, source, ops)?;
            ops.push(match e {
                Expr::Add(..) => Op::Add,
                Expr::Sub(..) => Op::Sub,
                Expr::Mul(..) => Op::Mul,
                Expr::Div(..) => Op::Div,
                _ => Op::Pow,
            });
        }
    }
    Ok(())
}

pub fn eval_coefficient(expr: &CompiledExpr, x: &SpacetimePoint, s: f64) -> Result<f64, DslError> {
    expr.eval(x, s)
}

#[cfg(test)]
mod tests {
    use super::super::parse_expression;
    use super::*;

    fn eval(src: &str, x: &[f64], s: f64) -> Result<f64, DslError> {
        let symbols = SymbolTable::new(4).with_constant("omega", 2.0).unwrap();
        let e = parse_expression(src)?.compile(&symbols)?;
        e.eval(&SpacetimePoint::new(x.to_vec()).unwrap(), s)
    }

    #[test]
    fn arithmetic_and_substitution() {
        let origin = [0.0; 4];
        assert_eq!(eval("2+3*4", &origin, 0.0).unwrap(), 14.0);
        assert_eq!(eval("cos(0)", &origin, 0.0).unwrap(), 1.0);
        assert_eq!(eval("x0*s", &[2.0, 0.0, 0.0, 0.0], 3.0).unwrap(), 6.0);
        assert_eq!(eval("omega/2", &origin, 0.0).unwrap(), 1.0);
        assert_eq!(eval("-2^2", &origin, 0.0).unwrap(), -4.0);
        assert_eq!(eval("2^3^2", &origin, 0.0).unwrap(), 512.0);
        assert_eq!(eval("8/4/2", &origin, 0.0).unwrap(), 1.0);
        assert_eq!(eval("1-2-3", &origin, 0.0).unwrap(), -4.0);
    }

    #[test]
    fn unknown_identifier_at_compile() {
        let err = eval("x9 + 1", &[0.0; 4], 0.0).unwrap_err();
        assert!(matches!(err, DslError::UnknownIdentifier { ref name, .. } if name == "x9"));
        assert!(matches!(
            eval("x01", &[0.0; 4], 0.0),
            Err(DslError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            eval("t", &[0.0; 4], 0.0),
            Err(DslError::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn evaluation_errors() {
        assert_eq!(
            eval("1/(x1-x1)", &[0.0; 4], 0.0).unwrap_err(),
            DslError::DivisionByZero("1/(x1-x1)".into())
        );
        assert_eq!(
            eval("exp(1000)", &[0.0; 4], 0.0).unwrap_err(),
            DslError::NonFinite("exp(1000)".into())
        );
    }

    #[test]
    fn reserved_constants_rejected() {
        let t = SymbolTable::new(4);
        assert!(t.clone().with_constant("pi", 3.0).is_err());
        assert!(t.clone().with_constant("x2", 3.0).is_err());
        assert!(t.clone().with_constant("cos", 3.0).is_err());
        assert!(t.clone().with_constant("x7", 3.0).is_err());
        assert!(t.with_constant("x_7", 3.0).is_ok());
    }

    #[test]
    fn parameter_use_detected() {
        let t = SymbolTable::new(4);
        assert!(parse_expression("cos(s)").unwrap().compile(&t).unwrap().uses_param());
        assert!(!parse_expression("cos(x0)").unwrap().compile(&t).unwrap().uses_param());
    }
}
