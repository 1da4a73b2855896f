//! Finite probability trees with payoffs attached to nodes.
//!
//! Text format (whitespace-insensitive, `#` starts a comment):
//!
//! ```text
//! node   := "(" payoff [ "stop=" marks ] { probability node } ")"
//! marks  := any combination of the letters A and B
//! ```
//!
//! A node's children are the `probability node` pairs that follow its
//! payoff. All leaves must sit at the same depth `J`. The optional `stop=`
//! marks define the two node-set stopping rules `A` and `B` used by the
//! command line and the bundled examples.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Process;
use crate::error::{invalid, NcmcError, Result};

pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// One period, `X_0 = 1`, `X_1 ∈ {3, 0}` with equal probability. Rule A
/// stops at the root, rule B waits until maturity.
pub const ONE_PERIOD_TREE: &str = include_str!("../../data/one_period.tree");

/// Two periods with three branches at the root and state-dependent stopping
/// marks, so that both variance components are non-zero.
pub const TWO_PERIOD_TREE: &str = include_str!("../../data/two_period.tree");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub payoff: f64,
    pub depth: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<(f64, NodeId)>,
    pub stop_a: bool,
    pub stop_b: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
    depth: usize,
}

impl TreeModel {
    pub fn parse(text: &str) -> Result<Self> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let mut nodes = Vec::new();
        parse_node(&tokens, &mut pos, &mut nodes, None, 0)?;
        if let Some(t) = tokens.get(pos) {
            return Err(NcmcError::Parse {
                line: t.line,
                message: format!("unexpected trailing token `{}`", t.text),
            });
        }
        Self::from_nodes(nodes)
    }

    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(invalid("tree has no nodes"));
        }
        let mut depth = None;
        for (i, n) in nodes.iter().enumerate() {
            if !n.payoff.is_finite() {
                return Err(invalid(format!("node {i} has non-finite payoff")));
            }
            if n.children.is_empty() {
                match depth {
                    None => depth = Some(n.depth),
                    Some(d) if d != n.depth => {
                        return Err(invalid(format!(
                            "leaves at depths {d} and {} (all leaves must share one depth)",
                            n.depth
                        )))
                    }
                    _ => {}
                }
                continue;
            }
            let mut total = 0.0;
            for (p, c) in &n.children {
                if !(p.is_finite() && *p >= 0.0) {
                    return Err(invalid(format!("node {i} has an invalid probability {p}")));
                }
                if nodes.get(c.0).map(|ch| ch.depth) != Some(n.depth + 1) {
                    return Err(invalid(format!("node {i} has a malformed child")));
                }
                total += p;
            }
            if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(invalid(format!(
                    "probabilities at node {i} sum to {total}, not 1"
                )));
            }
        }
        let depth = depth.unwrap_or(0);
        if depth == 0 {
            return Err(invalid("tree must have depth at least 1"));
        }
        Ok(Self { nodes, depth })
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_marked(&self, id: NodeId, mark: Mark) -> bool {
        let n = self.node(id);
        match mark {
            Mark::A => n.stop_a,
            Mark::B => n.stop_b,
        }
    }

    /// Number of root-to-leaf paths, one per leaf.
    pub fn leaf_count(&self) -> u64 {
        self.nodes
            .iter()
            .filter(|n| n.children.is_empty())
            .count() as u64
    }
}

impl Process for TreeModel {
    type State = NodeId;

    fn horizon(&self) -> usize {
        self.depth
    }

    fn initial_state(&self) -> NodeId {
        self.root()
    }

    fn date(&self, state: &NodeId) -> usize {
        self.node(*state).depth
    }

    fn payoff(&self, state: &NodeId) -> f64 {
        self.node(*state).payoff
    }

    fn transition(&self, state: &NodeId, rng: &mut ChaCha8Rng) -> NodeId {
        let children = &self.node(*state).children;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (p, c) in children {
            acc += p;
            if u < acc {
                return *c;
            }
        }
        // Rounding can leave the cumulative sum a hair under 1.
        children
            .iter()
            .rev()
            .find(|(p, _)| *p > 0.0)
            .map(|(_, c)| *c)
            .expect("non-leaf node has a positive-probability child")
    }

    fn step_work(&self) -> u64 {
        1
    }
}

struct Token<'a> {
    text: &'a str,
    line: usize,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let body = line.split('#').next().unwrap_or("");
        let mut start = None;
        for (i, ch) in body.char_indices() {
            let delim = ch == '(' || ch == ')';
            if ch.is_whitespace() || delim {
                if let Some(s) = start.take() {
                    out.push(Token { text: &body[s..i], line: line_no });
                }
                if delim {
                    out.push(Token { text: &body[i..i + 1], line: line_no });
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            out.push(Token { text: &body[s..], line: line_no });
        }
    }
    out
}

fn parse_error(tokens: &[Token<'_>], pos: usize, message: impl Into<String>) -> NcmcError {
    let line = tokens
        .get(pos)
        .or_else(|| tokens.last())
        .map(|t| t.line)
        .unwrap_or(1);
    NcmcError::Parse { line, message: message.into() }
}

fn parse_number(tokens: &[Token<'_>], pos: usize, what: &str) -> Result<f64> {
    let tok = tokens
        .get(pos)
        .ok_or_else(|| parse_error(tokens, pos, format!("expected {what}, found end of input")))?;
    tok.text
        .parse::<f64>()
        .map_err(|_| parse_error(tokens, pos, format!("expected {what}, found `{}`", tok.text)))
}

fn parse_node(
    tokens: &[Token<'_>],
    pos: &mut usize,
    nodes: &mut Vec<Node>,
    parent: Option<NodeId>,
    depth: usize,
) -> Result<NodeId> {
    match tokens.get(*pos) {
        Some(t) if t.text == "(" => *pos += 1,
        Some(t) => return Err(parse_error(tokens, *pos, format!("expected `(`, found `{}`", t.text))),
        None => return Err(parse_error(tokens, *pos, "expected `(`, found end of input")),
    }
    let payoff = parse_number(tokens, *pos, "payoff")?;
    *pos += 1;
    let id = NodeId(nodes.len());
    nodes.push(Node {
        payoff,
        depth,
        parent,
        children: Vec::new(),
        stop_a: false,
        stop_b: false,
    });
    if let Some(marks) = tokens.get(*pos).and_then(|t| t.text.strip_prefix("stop=")) {
        for ch in marks.chars() {
            match ch {
                'A' | 'a' => nodes[id.0].stop_a = true,
                'B' | 'b' => nodes[id.0].stop_b = true,
                other => {
                    return Err(parse_error(tokens, *pos, format!("unknown stop mark `{other}`")))
                }
            }
        }
        *pos += 1;
    }
    loop {
        match tokens.get(*pos) {
            Some(t) if t.text == ")" => {
                *pos += 1;
                return Ok(id);
            }
            Some(_) => {
                let p = parse_number(tokens, *pos, "branch probability")?;
                *pos += 1;
                let child = parse_node(tokens, pos, nodes, Some(id), depth + 1)?;
                nodes[id.0].children.push((p, child));
            }
            None => return Err(parse_error(tokens, *pos, "unclosed `(`")),
        }
    }
}
