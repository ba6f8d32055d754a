use super::operator::OperatorSpec;
use super::OpError;
use crate::expr::Expr;
use crate::linalg::SpectralMatrix;
use nalgebra::DMatrix;
use serde_json::Value;

/// Tolerance on the smallest eigenvalue of a shift matrix.
const PSD_TOL: f64 = 1e-12;

fn field<'a>(params: &'a Value, key: &str) -> Result<&'a Value, OpError> {
    params
        .get(key)
        .ok_or_else(|| OpError::BadParams(format!("missing parameter '{key}'")))
}

fn uint(params: &Value, key: &str) -> Result<usize, OpError> {
    field(params, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| OpError::BadParams(format!("'{key}' must be a nonnegative integer")))
}

fn string<'a>(params: &'a Value, key: &str) -> Result<&'a str, OpError> {
    field(params, key)?
        .as_str()
        .ok_or_else(|| OpError::BadParams(format!("'{key}' must be a string")))
}

fn matrix(v: &Value, n: usize) -> Result<DMatrix<f64>, OpError> {
    let bad = || OpError::BadParams(format!("expected a {n}x{n} matrix"));
    let rows = v.as_array().ok_or_else(bad)?;
    if rows.len() != n {
        return Err(bad());
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().filter(|r| r.len() == n).ok_or_else(bad)?;
        for (j, e) in row.iter().enumerate() {
            m[(i, j)] = e.as_f64().ok_or_else(bad)?;
        }
    }
    Ok(m)
}

fn nested(v: &Value) -> Result<OperatorSpec, OpError> {
    let kind = string(v, "kind")?;
    let params = v.get("params").unwrap_or(&Value::Null);
    catalogue_make(kind, params)
}

fn inner_expr(op: &OperatorSpec) -> Result<Expr, OpError> {
    op.expr()
        .cloned()
        .ok_or_else(|| OpError::BadParams("custom operators cannot be nested".into()))
}

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

/// Builds a named operator from its kind and a JSON parameter block.
///
/// | kind | parameters |
/// |---|---|
/// | `sigma_k` | `n`, `k` |
/// | `sigma_quotient` | `n`, `l`, `k` (`σ_l/σ_k`) |
/// | `convex_composition` | `g` (expression in `a_1..a_m`), `ops` (list of `{kind, params}`) |
/// | `shift` | `op` (`{kind, params}`), `e` (matrix) or `scale` (`E = scale·I`) |
/// | `harmonic_reciprocal` | `n`, `f` (expression), optional `a` (matrix, default `I`) |
/// | `expression` | `n`, `expr` |
///
/// An optional `name` overrides the generated name.
pub fn catalogue_make(kind: &str, params: &Value) -> Result<OperatorSpec, OpError> {
    let (expr, n, default_name) = match kind {
        "sigma_k" => {
            let (n, k) = (uint(params, "n")?, uint(params, "k")?);
            (Expr::Sigma(k), n, format!("sigma_{k}"))
        }
        "sigma_quotient" => {
            let (n, l, k) = (uint(params, "n")?, uint(params, "l")?, uint(params, "k")?);
            (Expr::Div(b(Expr::Sigma(l)), b(Expr::Sigma(k))), n, format!("sigma_{l}/sigma_{k}"))
        }
        "convex_composition" => {
            let g = Expr::parse(string(params, "g")?)?;
            let ops = field(params, "ops")?
                .as_array()
                .ok_or_else(|| OpError::BadParams("'ops' must be a list".into()))?
                .iter()
                .map(nested)
                .collect::<Result<Vec<_>, _>>()?;
            let n = ops.first().map(|o| o.n).ok_or_else(|| OpError::BadParams("'ops' is empty".into()))?;
            if let Some(o) = ops.iter().find(|o| o.n != n) {
                return Err(OpError::DimensionMismatch { expected: n, found: o.n });
            }
            if g.usage().args > ops.len() {
                return Err(OpError::BadParams(format!("g uses a_{} but only {} ops given", g.usage().args, ops.len())));
            }
            let args = ops.iter().map(inner_expr).collect::<Result<Vec<_>, _>>()?;
            let names: Vec<&str> = ops.iter().map(|o| o.name.as_str()).collect();
            (g.substitute_args(&args), n, format!("compose[{}]({})", string(params, "g")?, names.join(", ")))
        }
        "shift" => {
            let inner = nested(field(params, "op")?)?;
            let n = inner.n;
            let e = match (params.get("e"), params.get("scale")) {
                (Some(m), _) => matrix(m, n)?,
                (None, Some(s)) => {
                    let s = s.as_f64().ok_or_else(|| OpError::BadParams("'scale' must be a number".into()))?;
                    DMatrix::identity(n, n) * s
                }
                (None, None) => return Err(OpError::BadParams("shift needs 'e' or 'scale'".into())),
            };
            if (&e - e.transpose()).amax() > PSD_TOL {
                return Err(OpError::BadParams("shift matrix must be symmetric".into()));
            }
            let min = SpectralMatrix::new(e.clone()).spectrum().min();
            if min < -PSD_TOL {
                return Err(OpError::NotPsd(min));
            }
            let flat = super::operator::row_major(&e);
            let name = format!("shift({})", inner.name);
            (Expr::Shifted(b(inner_expr(&inner)?), flat), n, name)
        }
        "harmonic_reciprocal" => {
            let n = uint(params, "n")?;
            let a = match params.get("a") {
                Some(m) => matrix(m, n)?,
                None => DMatrix::identity(n, n),
            };
            let f = Expr::parse(string(params, "f")?)?;
            if f.usage().r {
                return Err(OpError::BadParams("f must not depend on r".into()));
            }
            let mut lin: Option<Expr> = None;
            for i in 0..n {
                for j in 0..n {
                    if a[(i, j)] != 0.0 {
                        let t = Expr::Mul(b(Expr::Num(a[(i, j)])), b(Expr::R(i, j)));
                        lin = Some(match lin {
                            None => t,
                            Some(acc) => Expr::Add(b(acc), b(t)),
                        });
                    }
                }
            }
            let lin = lin.ok_or_else(|| OpError::BadParams("coefficient matrix is zero".into()))?;
            let e = Expr::Add(
                b(Expr::Neg(b(Expr::Div(b(Expr::Num(1.0)), b(lin))))),
                b(Expr::Div(b(Expr::Num(1.0)), b(f))),
            );
            (e, n, format!("harmonic_reciprocal({})", string(params, "f")?))
        }
        "expression" => {
            let src = string(params, "expr")?;
            (Expr::parse(src)?, uint(params, "n")?, src.to_string())
        }
        other => return Err(OpError::UnknownKind(other.to_string())),
    };
    let name = params
        .get("name")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or(default_name);
    OperatorSpec::from_expr(name, n, expr)
}
