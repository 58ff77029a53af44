//! JSON rendering and matrix input. Nodes are always reported by name.

use std::fmt::Debug;
use std::path::Path;

use serde_json::{json, Map, Value};

use semident::census::{CensusReport, ClassRecord, OracleEvidence};
use semident::cycle::CycleFiber;
use semident::fiber::{FiberDescription, FiberPoint};
use semident::graph::name_value;
use semident::inversion::Inversion;
use semident::linalg::Matrix;
use semident::witness::WitnessPair;
use semident::{IdentVerdict, InversionError, MixedGraph, RealField, StepRecord};

pub enum Failure {
    /// Bad invocation or unreadable input; exit status 1.
    Usage(String),
    /// Input understood but outside the model; exit status 2.
    Domain(Value),
}

fn snake_case(camel: &str) -> String {
    let mut out = String::new();
    for (k, c) in camel.chars().enumerate() {
        if c.is_uppercase() {
            if k > 0 {
                out.push('_');
            }
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

/// Variant name of an error, innermost first for wrapped errors.
fn error_kind(debug: &str) -> String {
    let mut rest = debug;
    let mut last = "Error";
    loop {
        let end = rest.find(|c: char| !c.is_alphanumeric() && c != '_').unwrap_or(rest.len());
        if end == 0 {
            break;
        }
        last = &rest[..end];
        match rest[end..].strip_prefix('(') {
            Some(r) if r.starts_with(|c: char| c.is_uppercase()) => rest = r,
            _ => break,
        }
    }
    snake_case(last)
}

pub fn domain_error<E: std::error::Error + Debug>(e: E) -> Failure {
    Failure::Domain(json!({
        "error": { "kind": error_kind(&format!("{e:?}")), "message": e.to_string() }
    }))
}

pub fn inversion_error(h: &MixedGraph, e: InversionError) -> Failure {
    let mut body = Map::new();
    body.insert("kind".into(), json!(error_kind(&format!("{e:?}"))));
    match &e {
        InversionError::DimensionMismatch { .. } => return Failure::Usage(e.to_string()),
        InversionError::RankDeficientStep { step, rank, required } => {
            body.insert("step".into(), node(h, *step));
            body.insert("rank".into(), json!(rank));
            body.insert("required_rank".into(), json!(required));
        }
        InversionError::InconsistentSystem { step, residual } => {
            body.insert("step".into(), node(h, *step));
            body.insert("residual".into(), json!(residual));
        }
        _ => {}
    }
    body.insert("message".into(), json!(e.to_string()));
    Failure::Domain(json!({ "error": body }))
}

fn node(g: &MixedGraph, i: usize) -> Value {
    name_value(g.name(i))
}

pub fn names_json(g: &MixedGraph, nodes: &[usize]) -> Value {
    Value::Array(nodes.iter().map(|&i| node(g, i)).collect())
}

fn labels(g: &MixedGraph) -> Value {
    Value::Array(g.names().iter().map(|n| name_value(n)).collect())
}

pub fn matrix_json<F: RealField>(g: &MixedGraph, m: &Matrix<F>) -> Value {
    entries_json(g, &m.map(F::to_json))
}

fn entries_json(g: &MixedGraph, m: &Matrix<Value>) -> Value {
    json!({ "labels": labels(g), "entries": m.to_rows() })
}

fn label_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Square matrix over the nodes of `g`, either a bare array of rows or
/// `{"labels": [...], "entries": [[...]]}`; labels may list the nodes in
/// any order.
pub fn read_matrix<F: RealField>(g: &MixedGraph, v: &Value, path: &Path) -> Result<Matrix<F>, Failure> {
    let bad = |msg: String| Failure::Usage(format!("{}: {msg}", path.display()));
    let (rows, given) = match v {
        Value::Array(rows) => (rows, None),
        Value::Object(obj) => match obj.get("entries") {
            Some(Value::Array(rows)) => (rows, obj.get("labels")),
            _ => return Err(bad("expected an \"entries\" array".into())),
        },
        _ => return Err(bad("expected a matrix".into())),
    };
    let m = g.m();
    let cols = rows.first().and_then(Value::as_array).map_or(0, Vec::len);
    if rows.len() != m || rows.iter().any(|r| r.as_array().map(Vec::len) != Some(m)) {
        return Err(bad(format!(
            "expected a {m}x{m} matrix for a graph on {m} nodes, found {}x{cols}",
            rows.len()
        )));
    }
    let mut values = Matrix::<F>::zeros(m, m);
    for (r, row) in rows.iter().enumerate() {
        for (c, x) in row.as_array().expect("checked").iter().enumerate() {
            values[(r, c)] = F::from_json(x).ok_or_else(|| bad(format!("entry ({r}, {c}) is not a number: {x}")))?;
        }
    }
    let Some(given) = given else {
        return Ok(values);
    };
    let given: Vec<String> = given
        .as_array()
        .ok_or_else(|| bad("labels must be an array".into()))?
        .iter()
        .map(|l| label_text(l).ok_or_else(|| bad(format!("bad label {l}"))))
        .collect::<Result<_, _>>()?;
    if given.len() != m {
        return Err(bad(format!("{} labels for a graph on {m} nodes", given.len())));
    }
    let mut perm = Vec::with_capacity(m);
    for l in &given {
        let i = g.index_of(l).ok_or_else(|| bad(format!("label {l} is not a node of the graph")))?;
        if perm.contains(&i) {
            return Err(bad(format!("label {l} repeated")));
        }
        perm.push(i);
    }
    Ok(values.permuted(&perm))
}

pub fn verdict_json(g: &MixedGraph, v: &IdentVerdict) -> Value {
    let mut out = Map::new();
    out.insert("identifiable".into(), json!(v.identifiable));
    if let Some(a) = &v.violating_set {
        out.insert("violating_set".into(), names_json(g, a));
    }
    if let Some(y) = v.sink {
        out.insert("sink".into(), node(g, y));
    }
    out.insert("simple".into(), json!(v.simple));
    out.insert("ancestral".into(), json!(v.ancestral));
    out.insert("acyclic".into(), json!(v.acyclic));
    Value::Object(out)
}

fn step_json<F>(h: &MixedGraph, s: &StepRecord<F>) -> Value {
    json!({
        "step": node(h, s.step),
        "parents": names_json(h, &s.parents),
        "siblings": names_json(h, &s.siblings),
        "rank": s.rank,
        "required_rank": s.required_rank,
        "passes": s.passes(),
    })
}

/// `h` is `g` relabeled so that node `k` of `h` is node `order[k]` of `g`.
pub fn inversion_json<F: RealField>(g: &MixedGraph, h: &MixedGraph, order: &[usize], inv: &Inversion<F>) -> Value {
    json!({
        "lambda": matrix_json(g, &inv.lambda.matrix().permuted(order)),
        "omega": matrix_json(g, &inv.omega.matrix().permuted(order)),
        "steps": inv.steps.iter().map(|s| step_json(h, s)).collect::<Vec<_>>(),
    })
}

pub fn witness_json<F: RealField>(g: &MixedGraph, w: &WitnessPair<F>) -> Value {
    let point = |(l, o): &(semident::LambdaMatrix<F>, semident::OmegaMatrix<F>)| {
        json!({ "lambda": matrix_json(g, l.matrix()), "omega": matrix_json(g, o.matrix()) })
    };
    json!({
        "point_a": point(&w.point_a),
        "point_b": point(&w.point_b),
        "sigma": matrix_json(g, w.sigma.matrix()),
        "separation": w.separation,
        "residual": w.residual,
        "support": names_json(g, &w.support),
        "sink": w.sink.map(|y| node(g, y)),
    })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn original_names(h: &MixedGraph, order: &[usize]) -> MixedGraph {
    h.relabeled(&inverse(order))
}

fn inverse(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (k, &v) in order.iter().enumerate() {
        inv[v] = k;
    }
    inv
}

fn point_json(g: &MixedGraph, order: &[usize], p: &FiberPoint) -> Value {
    let (lambda, omega) = match &p.exact {
        Some((l, o)) => (matrix_json(g, &l.permuted(order)), matrix_json(g, &o.permuted(order))),
        None => (matrix_json(g, &p.lambda.permuted(order)), matrix_json(g, &p.omega.permuted(order))),
    };
    json!({
        "lambda": lambda,
        "omega": omega,
        "exact": p.exact.is_some(),
        "t": p.t.map(finite_or_null),
    })
}

pub fn fiber_json(h: &MixedGraph, order: &[usize], f: &FiberDescription) -> Value {
    let g = original_names(h, order);
    let family = f.family.as_ref().map(|fam| {
        let text = |m: &Matrix<semident::poly::RatFun>| entries_json(&g, &m.map(|x| json!(format!("{x:?}"))).permuted(order));
        json!({
            "interval": [finite_or_null(fam.interval.0), finite_or_null(fam.interval.1)],
            "anchor": fam.anchor,
            "lambda": text(fam.lambda_entries()),
            "omega": text(fam.omega_entries()),
        })
    });
    json!({
        "kind": f.kind,
        "points": f.points.iter().map(|p| point_json(&g, order, p)).collect::<Vec<_>>(),
        "family": family,
        "deficient_steps": names_json(h, &f.deficient_steps),
        "constraint": f.constraint.as_ref().map(|c| format!("{c:?}")),
        "reason": f.reason,
    })
}

pub fn cycle_fiber_json<F: RealField>(f: &CycleFiber<F>) -> Value {
    json!({
        "points": f.points.iter().map(|p| json!({
            "lambda": p.lambda().iter().map(F::to_json).collect::<Vec<_>>(),
            "delta": p.delta().iter().map(F::to_json).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "degenerate": f.degenerate,
        "kappa_residual": f.kappa_residual,
    })
}

fn class_json(c: &ClassRecord) -> Value {
    let g = &c.graph;
    let evidence = match &c.oracle.evidence {
        OracleEvidence::RankConditions { points } => json!({ "kind": "rank_conditions", "points": points }),
        OracleEvidence::Witness {
            violating_set,
            sink,
            separation,
            residual,
        } => json!({
            "kind": "witness",
            "violating_set": names_json(g, violating_set),
            "sink": node(g, *sink),
            "separation": separation,
            "residual": residual,
        }),
        OracleEvidence::Failure { reason } => json!({ "kind": "failure", "reason": reason }),
    };
    let mut out = Map::new();
    out.insert("key".into(), json!(c.key.to_string()));
    out.insert("graph".into(), g.to_json());
    out.insert("labeled".into(), json!(c.labeled));
    out.insert("simple".into(), json!(c.simple));
    out.insert("ancestral".into(), json!(c.ancestral));
    out.insert("identifiable".into(), json!(c.identifiable));
    if let Some(a) = &c.violating_set {
        out.insert("violating_set".into(), names_json(g, a));
    }
    if let Some(y) = c.sink {
        out.insert("sink".into(), node(g, y));
    }
    out.insert("oracle".into(), json!({ "injective": c.oracle.injective, "evidence": evidence }));
    Value::Object(out)
}

/// Summary with the simple noninjective classes spelled out.
pub fn census_json(r: &CensusReport) -> Value {
    json!({
        "n": r.n,
        "simple_only": r.simple_only,
        "trials": r.trials,
        "representatives": r.representatives,
        "classes": r.classes.len(),
        "labeled": r.labeled,
        "unlabeled": r.unlabeled,
        "simple_noninjective": r.noninjective().filter(|c| c.simple).map(class_json).collect::<Vec<_>>(),
        "disagreements": r.disagreements.iter().map(|d| json!({
            "key": d.key.to_string(),
            "graph": d.graph.to_json(),
            "criterion": d.criterion,
            "oracle": d.oracle,
            "detail": d.detail,
        })).collect::<Vec<_>>(),
    })
}
