//! Graph and dendrogram serialization: DOT, GraphML, edge lists, Newick and
//! JSON, plus readers for the files these writers produce.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hier::{Merge, MergeTree};
use crate::topo::ThresholdGraph;
use crate::tree::SpanningTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExportError {
    #[error("unknown export format {0:?}")]
    UnknownFormat(String),
    #[error("format {format} does not apply to {artifact}")]
    FormatMismatch { format: ExportFormat, artifact: &'static str },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Dot,
    Graphml,
    Edgelist,
    Newick,
    Json,
    Csv,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Dot => "dot",
            ExportFormat::Graphml => "graphml",
            ExportFormat::Edgelist => "tsv",
            ExportFormat::Newick => "nwk",
            ExportFormat::Json => "json",
            ExportFormat::Csv => "csv",
        }
    }
}

impl std::fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExportFormat::Dot => "dot",
            ExportFormat::Graphml => "graphml",
            ExportFormat::Edgelist => "edgelist",
            ExportFormat::Newick => "newick",
            ExportFormat::Json => "json",
            ExportFormat::Csv => "csv",
        };
        f.write_str(s)
    }
}

impl FromStr for ExportFormat {
    type Err = ExportError;
    fn from_str(s: &str) -> Result<Self, ExportError> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "graphml" => Ok(ExportFormat::Graphml),
            "edgelist" | "edges" => Ok(ExportFormat::Edgelist),
            "newick" | "nwk" => Ok(ExportFormat::Newick),
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            _ => Err(ExportError::UnknownFormat(s.to_string())),
        }
    }
}

/// A vertex-labeled, optionally weighted undirected graph ready to be written.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabeledGraph {
    pub name: String,
    pub labels: Vec<String>,
    pub sectors: Vec<Option<String>>,
    pub edges: Vec<(usize, usize, Option<f64>)>,
}

impl LabeledGraph {
    pub fn from_threshold(name: &str, g: &ThresholdGraph, labels: &[String], sectors: &[Option<String>]) -> Self {
        LabeledGraph {
            name: name.to_string(),
            labels: labels.to_vec(),
            sectors: sectors.to_vec(),
            edges: g.edges().iter().map(|&(a, b)| (a, b, None)).collect(),
        }
    }

    pub fn from_tree(name: &str, t: &SpanningTree, labels: &[String], sectors: &[Option<String>]) -> Self {
        LabeledGraph {
            name: name.to_string(),
            labels: labels.to_vec(),
            sectors: sectors.to_vec(),
            edges: t.edges().iter().map(|e| (e.a, e.b, Some(e.weight))).collect(),
        }
    }

    pub fn write(&self, format: ExportFormat) -> Result<String, ExportError> {
        match format {
            ExportFormat::Dot => Ok(to_dot(self)),
            ExportFormat::Graphml => Ok(to_graphml(self)),
            ExportFormat::Edgelist => Ok(to_edge_list(self)),
            ExportFormat::Json => Ok(serde_json::to_string_pretty(&graph_json(self)).expect("json") + "\n"),
            f => Err(ExportError::FormatMismatch { format: f, artifact: "graph" }),
        }
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn to_dot(g: &LabeledGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "graph \"{}\" {{", dot_escape(&g.name));
    for (i, label) in g.labels.iter().enumerate() {
        let _ = write!(out, "  n{i} [label=\"{}\"", dot_escape(label));
        if let Some(Some(sector)) = g.sectors.get(i) {
            let _ = write!(out, ", sector=\"{}\"", dot_escape(sector));
        }
        out.push_str("];\n");
    }
    for &(a, b, w) in &g.edges {
        match w {
            Some(w) => {
                let _ = writeln!(out, "  n{a} -- n{b} [weight={w}];");
            }
            None => {
                let _ = writeln!(out, "  n{a} -- n{b};");
            }
        }
    }
    out.push_str("}\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

fn xml_unescape(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

pub fn to_graphml(g: &LabeledGraph) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n\
         \x20 <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n\
         \x20 <key id=\"sector\" for=\"node\" attr.name=\"sector\" attr.type=\"string\"/>\n\
         \x20 <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n",
    );
    let _ = writeln!(out, "  <graph id=\"{}\" edgedefault=\"undirected\">", xml_escape(&g.name));
    for (i, label) in g.labels.iter().enumerate() {
        let _ = writeln!(out, "    <node id=\"n{i}\">");
        let _ = writeln!(out, "      <data key=\"label\">{}</data>", xml_escape(label));
        if let Some(Some(sector)) = g.sectors.get(i) {
            let _ = writeln!(out, "      <data key=\"sector\">{}</data>", xml_escape(sector));
        }
        out.push_str("    </node>\n");
    }
    for &(a, b, w) in &g.edges {
        let _ = writeln!(out, "    <edge source=\"n{a}\" target=\"n{b}\">");
        if let Some(w) = w {
            let _ = writeln!(out, "      <data key=\"weight\">{w}</data>");
        }
        out.push_str("    </edge>\n");
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

/// Tab-separated `ticker_a ticker_b [weight]`, one edge per line, no header.
pub fn to_edge_list(g: &LabeledGraph) -> String {
    let mut out = String::new();
    for &(a, b, w) in &g.edges {
        match w {
            Some(w) => {
                let _ = writeln!(out, "{}\t{}\t{w}", g.labels[a], g.labels[b]);
            }
            None => {
                let _ = writeln!(out, "{}\t{}", g.labels[a], g.labels[b]);
            }
        }
    }
    out
}

#[derive(Serialize)]
struct JsonNode<'a> {
    id: usize,
    label: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    sector: Option<&'a str>,
}

#[derive(Serialize)]
struct JsonEdge {
    source: usize,
    target: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

fn graph_json(g: &LabeledGraph) -> serde_json::Value {
    let nodes: Vec<JsonNode> = g
        .labels
        .iter()
        .enumerate()
        .map(|(id, label)| JsonNode {
            id,
            label,
            sector: g.sectors.get(id).and_then(|s| s.as_deref()),
        })
        .collect();
    let edges: Vec<JsonEdge> = g
        .edges
        .iter()
        .map(|&(source, target, weight)| JsonEdge { source, target, weight })
        .collect();
    serde_json::json!({ "name": g.name, "nodes": nodes, "edges": edges })
}

fn parse_err(msg: impl Into<String>) -> ExportError {
    ExportError::Parse(msg.into())
}

fn node_index(token: &str) -> Result<usize, ExportError> {
    token
        .trim()
        .strip_prefix('n')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(format!("bad node id {token:?}")))
}

/// Parses `key="quoted", key=bare` attribute lists.
fn dot_attrs(s: &str) -> Result<Vec<(String, String)>, ExportError> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace() || *c == ',') {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let key: String = chars.by_ref().take_while(|&c| c != '=').collect();
        let mut value = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            loop {
                match chars.next() {
                    Some('\\') => value.extend(chars.next()),
                    Some('"') => break,
                    Some(c) => value.push(c),
                    None => return Err(parse_err("unterminated string")),
                }
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c == ',' || c.is_whitespace() {
                    break;
                }
                value.push(c);
                chars.next();
            }
        }
        out.push((key.trim().to_string(), value));
    }
    Ok(out)
}

fn dot_unquote(s: &str) -> Option<String> {
    let inner = s.strip_prefix('"')?.strip_suffix('"')?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            out.extend(chars.next());
        } else {
            out.push(c);
        }
    }
    Some(out)
}

fn split_statement(line: &str) -> (&str, Option<&str>) {
    let line = line.trim().trim_end_matches(';');
    match line.find('[') {
        Some(i) => (line[..i].trim(), Some(line[i + 1..].trim_end_matches(']'))),
        None => (line.trim(), None),
    }
}

fn finish(mut nodes: Vec<(usize, String, Option<String>)>, edges: Vec<(usize, usize, Option<f64>)>, name: String) -> Result<LabeledGraph, ExportError> {
    nodes.sort_by_key(|n| n.0);
    if nodes.iter().enumerate().any(|(i, n)| n.0 != i) {
        return Err(parse_err("node ids are not 0..N"));
    }
    if edges.iter().any(|&(a, b, _)| a >= nodes.len() || b >= nodes.len()) {
        return Err(parse_err("edge references unknown node"));
    }
    let (labels, sectors) = nodes.into_iter().map(|(_, l, s)| (l, s)).unzip();
    Ok(LabeledGraph { name, labels, sectors, edges })
}

/// Reads DOT produced by [`to_dot`].
pub fn parse_dot(text: &str) -> Result<LabeledGraph, ExportError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let head = lines.next().ok_or_else(|| parse_err("empty input"))?;
    let name = head
        .strip_prefix("graph")
        .and_then(|s| s.trim().strip_suffix('{'))
        .and_then(|s| dot_unquote(s.trim()))
        .ok_or_else(|| parse_err("expected `graph \"name\" {`"))?;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut closed = false;
    for line in lines {
        if line == "}" {
            closed = true;
            break;
        }
        let (stmt, attrs) = split_statement(line);
        let attrs = attrs.map(dot_attrs).transpose()?.unwrap_or_default();
        let get = |k: &str| attrs.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
        if let Some((a, b)) = stmt.split_once("--") {
            let weight = get("weight")
                .map(|w| w.parse::<f64>().map_err(|_| parse_err(format!("bad weight {w:?}"))))
                .transpose()?;
            edges.push((node_index(a)?, node_index(b)?, weight));
        } else {
            let label = get("label").ok_or_else(|| parse_err(format!("node without label: {line}")))?;
            nodes.push((node_index(stmt)?, label, get("sector")));
        }
    }
    if !closed {
        return Err(parse_err("missing closing brace"));
    }
    finish(nodes, edges, name)
}

fn xml_attr(tag: &str, name: &str) -> Option<String> {
    let pat = format!("{name}=\"");
    let start = tag.find(&pat)? + pat.len();
    let end = tag[start..].find('"')? + start;
    Some(xml_unescape(&tag[start..end]))
}

/// Reads GraphML produced by [`to_graphml`].
pub fn parse_graphml(text: &str) -> Result<LabeledGraph, ExportError> {
    let mut name = String::new();
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut current_node: Option<(usize, String, Option<String>)> = None;
    let mut current_edge: Option<(usize, usize, Option<f64>)> = None;
    for line in text.lines().map(str::trim) {
        if line.starts_with("<graph ") {
            name = xml_attr(line, "id").unwrap_or_default();
        } else if line.starts_with("<node ") {
            let id = xml_attr(line, "id").ok_or_else(|| parse_err("node without id"))?;
            current_node = Some((node_index(&id)?, String::new(), None));
        } else if line.starts_with("<edge ") {
            let s = xml_attr(line, "source").ok_or_else(|| parse_err("edge without source"))?;
            let t = xml_attr(line, "target").ok_or_else(|| parse_err("edge without target"))?;
            current_edge = Some((node_index(&s)?, node_index(&t)?, None));
        } else if line.starts_with("<data ") {
            let key = xml_attr(line, "key").ok_or_else(|| parse_err("data without key"))?;
            let value = line
                .split_once('>')
                .and_then(|(_, rest)| rest.rsplit_once("</data>"))
                .map(|(v, _)| xml_unescape(v))
                .ok_or_else(|| parse_err(format!("bad data element {line}")))?;
            match (key.as_str(), current_node.as_mut(), current_edge.as_mut()) {
                ("label", Some(n), _) => n.1 = value,
                ("sector", Some(n), _) => n.2 = Some(value),
                ("weight", _, Some(e)) => {
                    e.2 = Some(value.parse().map_err(|_| parse_err(format!("bad weight {value:?}")))?)
                }
                _ => return Err(parse_err(format!("unexpected data {key:?}"))),
            }
        } else if line == "</node>" {
            nodes.push(current_node.take().ok_or_else(|| parse_err("stray </node>"))?);
        } else if line == "</edge>" {
            edges.push(current_edge.take().ok_or_else(|| parse_err("stray </edge>"))?);
        }
    }
    finish(nodes, edges, name)
}

/// Reads an edge list against known vertex labels.
pub fn parse_edge_list(text: &str, labels: &[String]) -> Result<Vec<(usize, usize, Option<f64>)>, ExportError> {
    let index = |t: &str| {
        labels
            .iter()
            .position(|l| l == t)
            .ok_or_else(|| parse_err(format!("unknown ticker {t:?}")))
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split('\t').collect();
            match cols.as_slice() {
                [a, b] => Ok((index(a)?, index(b)?, None)),
                [a, b, w] => Ok((
                    index(a)?,
                    index(b)?,
                    Some(w.parse().map_err(|_| parse_err(format!("bad weight {w:?}")))?),
                )),
                _ => Err(parse_err(format!("bad edge line {line:?}"))),
            }
        })
        .collect()
}

fn newick_label(s: &str) -> String {
    if !s.is_empty() && !s.chars().any(|c| "()[]':;, \t\n".contains(c)) {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', "''"))
    }
}

/// Rooted Newick with branch lengths `parent height - child height`.
pub fn to_newick(t: &MergeTree, labels: &[String]) -> String {
    fn write_node(t: &MergeTree, labels: &[String], id: usize, out: &mut String) {
        let n = t.n();
        if id < n {
            out.push_str(&newick_label(&labels[id]));
            return;
        }
        let m = &t.merges()[id - n];
        out.push('(');
        for (k, child) in [m.left, m.right].into_iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write_node(t, labels, child, out);
            let _ = write!(out, ":{}", m.height - t.node_height(child));
        }
        out.push(')');
    }
    let mut out = String::new();
    write_node(t, labels, 2 * t.n() - 2, &mut out);
    out.push_str(";\n");
    out
}

struct NewickNode {
    label: Option<String>,
    branch: f64,
    children: Vec<usize>,
}

struct NewickParser<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    nodes: Vec<NewickNode>,
}

impl NewickParser<'_> {
    fn skip_ws(&mut self) {
        while self.chars.peek().is_some_and(|c| c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn label(&mut self) -> Result<Option<String>, ExportError> {
        self.skip_ws();
        if self.chars.peek() == Some(&'\'') {
            self.chars.next();
            let mut s = String::new();
            loop {
                match self.chars.next() {
                    Some('\'') if self.chars.peek() == Some(&'\'') => {
                        self.chars.next();
                        s.push('\'');
                    }
                    Some('\'') => return Ok(Some(s)),
                    Some(c) => s.push(c),
                    None => return Err(parse_err("unterminated quoted label")),
                }
            }
        }
        let mut s = String::new();
        while let Some(&c) = self.chars.peek() {
            if "(),:;".contains(c) || c.is_whitespace() {
                break;
            }
            s.push(c);
            self.chars.next();
        }
        Ok((!s.is_empty()).then_some(s))
    }

    fn branch(&mut self) -> Result<f64, ExportError> {
        self.skip_ws();
        if self.chars.peek() != Some(&':') {
            return Ok(0.0);
        }
        self.chars.next();
        self.skip_ws();
        let mut s = String::new();
        while let Some(&c) = self.chars.peek() {
            if "(),:;".contains(c) || c.is_whitespace() {
                break;
            }
            s.push(c);
            self.chars.next();
        }
        s.parse().map_err(|_| parse_err(format!("bad branch length {s:?}")))
    }

    fn node(&mut self) -> Result<usize, ExportError> {
        self.skip_ws();
        let mut children = Vec::new();
        if self.chars.peek() == Some(&'(') {
            self.chars.next();
            loop {
                children.push(self.node()?);
                self.skip_ws();
                match self.chars.next() {
                    Some(',') => continue,
                    Some(')') => break,
                    other => return Err(parse_err(format!("expected , or ) but found {other:?}"))),
                }
            }
        }
        let label = self.label()?;
        let branch = self.branch()?;
        self.nodes.push(NewickNode { label, branch, children });
        Ok(self.nodes.len() - 1)
    }
}

/// A dendrogram read back from Newick.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedDendrogram {
    pub labels: Vec<String>,
    pub tree: MergeTree,
}

/// Reads a binary ultrametric Newick tree. Leaves are numbered by position
/// in `labels` when given, otherwise in order of appearance. Node heights are
/// reconstructed from branch lengths; merges are ordered by height, then
/// size, then smallest leaf.
pub fn parse_newick(text: &str, labels: Option<&[String]>) -> Result<ParsedDendrogram, ExportError> {
    let mut p = NewickParser {
        chars: text.chars().peekable(),
        nodes: Vec::new(),
    };
    let root = p.node()?;
    p.skip_ws();
    if p.chars.next() != Some(';') {
        return Err(parse_err("expected terminating ;"));
    }
    let nodes = p.nodes;

    let mut leaf_labels: Vec<String> = Vec::new();
    let mut leaf_ids = vec![usize::MAX; nodes.len()];
    for (i, node) in nodes.iter().enumerate() {
        if node.children.is_empty() {
            let label = node.label.clone().ok_or_else(|| parse_err("unlabeled leaf"))?;
            leaf_ids[i] = match labels {
                Some(known) => known
                    .iter()
                    .position(|l| *l == label)
                    .ok_or_else(|| parse_err(format!("unknown leaf {label:?}")))?,
                None => leaf_labels.len(),
            };
            leaf_labels.push(label);
        } else if node.children.len() != 2 {
            return Err(parse_err("dendrogram nodes must be binary"));
        }
    }
    let n = leaf_labels.len();
    if n < 2 {
        return Err(parse_err("need at least two leaves"));
    }
    let labels_out = match labels {
        Some(known) => {
            if known.len() != n {
                return Err(parse_err(format!("{n} leaves for {} labels", known.len())));
            }
            known.to_vec()
        }
        None => leaf_labels,
    };

    // children are pushed before their parent, so one pass suffices
    let mut height = vec![0.0f64; nodes.len()];
    let mut min_leaf = vec![usize::MAX; nodes.len()];
    let mut size = vec![1usize; nodes.len()];
    for (i, node) in nodes.iter().enumerate() {
        if node.children.is_empty() {
            min_leaf[i] = leaf_ids[i];
        } else {
            height[i] = node
                .children
                .iter()
                .map(|&c| height[c] + nodes[c].branch)
                .fold(f64::NEG_INFINITY, f64::max);
            min_leaf[i] = node.children.iter().map(|&c| min_leaf[c]).min().unwrap_or(usize::MAX);
            size[i] = node.children.iter().map(|&c| size[c]).sum();
        }
    }
    if size[root] != n {
        return Err(parse_err("root does not span all leaves"));
    }

    let mut internal: Vec<usize> = (0..nodes.len()).filter(|&i| !nodes[i].children.is_empty()).collect();
    internal.sort_by(|&a, &b| {
        height[a]
            .total_cmp(&height[b])
            .then(size[a].cmp(&size[b]))
            .then(min_leaf[a].cmp(&min_leaf[b]))
    });
    let mut cluster = leaf_ids.clone();
    let mut merges = Vec::with_capacity(n - 1);
    for (k, &i) in internal.iter().enumerate() {
        let (mut a, mut b) = (nodes[i].children[0], nodes[i].children[1]);
        if min_leaf[b] < min_leaf[a] {
            std::mem::swap(&mut a, &mut b);
        }
        merges.push(Merge {
            left: cluster[a],
            right: cluster[b],
            height: height[i],
            size: size[i],
        });
        cluster[i] = n + k;
    }
    let tree = MergeTree::from_merges(n, merges).map_err(|e| parse_err(e.to_string()))?;
    Ok(ParsedDendrogram {
        labels: labels_out,
        tree,
    })
}

/// Flat merge-record list `(left, right, height, size)`.
pub fn dendrogram_json(t: &MergeTree, labels: &[String]) -> String {
    serde_json::to_string_pretty(&serde_json::json!({ "labels": labels, "merges": t.merges() })).expect("json") + "\n"
}
