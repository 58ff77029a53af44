//! Edge-list and JSON graph formats.
//!
//! Text: one item per line, `a -> b`, `a <-> b`, or a bare node name to
//! declare an isolated node; `#` starts a comment. JSON:
//! `{"nodes": [...], "directed": [[a, b], ...], "bidirected": [[a, b], ...]}`.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use super::{GraphError, MixedGraph};

/// A parsed graph plus non-fatal diagnostics (duplicate edges).
#[derive(Debug, Clone)]
pub struct ParsedGraph {
    pub graph: MixedGraph,
    pub warnings: Vec<String>,
}

enum EdgeKind {
    Directed,
    Bidirected,
}

struct Builder {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    directed: BTreeSet<(usize, usize)>,
    bidirected: BTreeSet<(usize, usize)>,
    warnings: Vec<String>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            names: Vec::new(),
            index: BTreeMap::new(),
            directed: BTreeSet::new(),
            bidirected: BTreeSet::new(),
            warnings: Vec::new(),
        }
    }

    fn node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    fn edge(&mut self, kind: EdgeKind, a: &str, b: &str, line: Option<usize>) -> Result<(), GraphError> {
        if a == b {
            return Err(match line {
                Some(line) => GraphError::Syntax {
                    line,
                    message: format!("self-loop on node {a}"),
                },
                None => GraphError::SelfLoop { node: a.to_string() },
            });
        }
        let (i, j) = (self.node(a), self.node(b));
        let (fresh, glyph) = match kind {
            EdgeKind::Directed => (self.directed.insert((i, j)), "->"),
            EdgeKind::Bidirected => (self.bidirected.insert((i.min(j), i.max(j))), "<->"),
        };
        if !fresh {
            let at = line.map(|l| format!("line {l}: ")).unwrap_or_default();
            self.warnings.push(format!("{at}duplicate edge {a} {glyph} {b} ignored"));
        }
        Ok(())
    }

    /// Integer names sort numerically; otherwise first appearance wins.
    fn finish(self, keep_order: bool) -> Result<ParsedGraph, GraphError> {
        let m = self.names.len();
        let mut order: Vec<usize> = (0..m).collect();
        if !keep_order {
            let numeric: Option<Vec<u64>> = self.names.iter().map(|n| n.parse().ok()).collect();
            if let Some(values) = numeric {
                order.sort_by_key(|&i| values[i]);
            }
        }
        let mut position = vec![0; m];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k;
        }
        let names = order.iter().map(|&v| self.names[v].clone()).collect();
        let graph = MixedGraph::with_names(
            names,
            self.directed.iter().map(|&(i, j)| (position[i], position[j])),
            self.bidirected.iter().map(|&(i, j)| (position[i], position[j])),
        )?;
        Ok(ParsedGraph {
            graph,
            warnings: self.warnings,
        })
    }
}

fn valid_name(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses either format; JSON is recognised by a leading `{`.
pub fn parse_graph(text: &str) -> Result<ParsedGraph, GraphError> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_edge_list(text)
    }
}

fn parse_edge_list(text: &str) -> Result<ParsedGraph, GraphError> {
    let mut b = Builder::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |message: String| GraphError::Syntax { line, message };
        let (kind, lhs, rhs) = if let Some((l, r)) = content.split_once("<->") {
            (EdgeKind::Bidirected, l.trim(), r.trim())
        } else if let Some((l, r)) = content.split_once("->") {
            (EdgeKind::Directed, l.trim(), r.trim())
        } else if valid_name(content) {
            b.node(content);
            continue;
        } else {
            return Err(syntax(format!("expected `a -> b` or `a <-> b`, found `{content}`")));
        };
        for tok in [lhs, rhs] {
            if !valid_name(tok) {
                return Err(syntax(format!("invalid node name `{tok}`")));
            }
        }
        b.edge(kind, lhs, rhs, Some(line))?;
    }
    b.finish(false)
}

fn name_of(value: &Value) -> Result<String, GraphError> {
    match value {
        Value::String(s) if valid_name(s) => Ok(s.clone()),
        Value::Number(n) if n.is_u64() => Ok(n.to_string()),
        other => Err(GraphError::Json(format!("invalid node name {other}"))),
    }
}

fn parse_json(text: &str) -> Result<ParsedGraph, GraphError> {
    let value: Value = serde_json::from_str(text).map_err(|e| GraphError::Json(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| GraphError::Json("expected an object".into()))?;
    let mut b = Builder::new();
    let explicit_nodes = match obj.get("nodes") {
        Some(Value::Array(nodes)) => {
            for n in nodes {
                let name = name_of(n)?;
                if b.index.contains_key(&name) {
                    return Err(GraphError::DuplicateName(name));
                }
                b.node(&name);
            }
            true
        }
        Some(_) => return Err(GraphError::Json("`nodes` must be an array".into())),
        None => false,
    };
    for (key, kind) in [("directed", EdgeKind::Directed), ("bidirected", EdgeKind::Bidirected)] {
        let Some(list) = obj.get(key) else { continue };
        let list = list
            .as_array()
            .ok_or_else(|| GraphError::Json(format!("`{key}` must be an array")))?;
        for pair in list {
            let ends = pair
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| GraphError::Json(format!("`{key}` entries must be pairs")))?;
            let (l, r) = (name_of(&ends[0])?, name_of(&ends[1])?);
            if explicit_nodes {
                for n in [&l, &r] {
                    if !b.index.contains_key(n) {
                        return Err(GraphError::Json(format!("edge mentions undeclared node {n}")));
                    }
                }
            }
            let kind = match kind {
                EdgeKind::Directed => EdgeKind::Directed,
                EdgeKind::Bidirected => EdgeKind::Bidirected,
            };
            b.edge(kind, &l, &r, None)?;
        }
    }
    b.finish(explicit_nodes)
}

/// JSON value for a node name: integers stay numbers.
pub fn name_value(name: &str) -> Value {
    match name.parse::<u64>() {
        Ok(v) if v.to_string() == name => json!(v),
        _ => json!(name),
    }
}

impl MixedGraph {
    /// Edge-list text; isolated nodes are listed on their own line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let mut touched = vec![false; self.m()];
        for (i, j) in self.directed_edges() {
            touched[i] = true;
            touched[j] = true;
            out.push_str(&format!("{} -> {}\n", self.name(i), self.name(j)));
        }
        for (i, j) in self.bidirected_edges() {
            touched[i] = true;
            touched[j] = true;
            out.push_str(&format!("{} <-> {}\n", self.name(i), self.name(j)));
        }
        for (i, t) in touched.iter().enumerate() {
            if !t {
                out.push_str(&format!("{}\n", self.name(i)));
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let pair = |(i, j): (usize, usize)| json!([name_value(self.name(i)), name_value(self.name(j))]);
        json!({
            "nodes": self.names().iter().map(|n| name_value(n)).collect::<Vec<_>>(),
            "directed": self.directed_edges().map(pair).collect::<Vec<_>>(),
            "bidirected": self.bidirected_edges().map(pair).collect::<Vec<_>>(),
        })
    }
}
