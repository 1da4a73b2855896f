//! Exact ground truth on finite trees by enumerating every path.

use serde::Serialize;

use crate::error::{NcmcError, Result};
use crate::process::{NodeId, Process, TreeModel};
use crate::stopping::{Decision, StoppingRule};

pub const MAX_ENUMERATED_PATHS: u64 = 1_000_000;

/// One atom of the information at `τ^∧`: a prefix ending where the first
/// rule stops, with the exact conditional law of the increment after it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumeratedAtom {
    pub prefix: Vec<usize>,
    pub probability: f64,
    pub sign: i8,
    pub x_wedge: f64,
    /// `E[S (X_{τ^∨} - X_{τ^∧}) | prefix]`.
    pub conditional_mean: f64,
    pub conditional_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactComponents {
    pub delta: f64,
    pub v1: f64,
    pub v2: f64,
}

fn check_size(tree: &TreeModel) -> Result<()> {
    let paths = tree.leaf_count();
    if paths > MAX_ENUMERATED_PATHS {
        return Err(NcmcError::TreeTooLarge { paths, limit: MAX_ENUMERATED_PATHS });
    }
    Ok(())
}

fn stops<R: StoppingRule<TreeModel> + ?Sized>(tree: &TreeModel, rule: &R, node: NodeId) -> bool {
    rule.decide(tree, &node) == Decision::Stop
}

/// `(probability, X_{τ^A} - X_{τ^B})` for every root-to-leaf path.
pub fn path_differences<A, B>(tree: &TreeModel, rule_a: &A, rule_b: &B) -> Result<Vec<(f64, f64)>>
where
    A: StoppingRule<TreeModel> + ?Sized,
    B: StoppingRule<TreeModel> + ?Sized,
{
    check_size(tree)?;
    let mut out = Vec::new();
    let mut stack = vec![(tree.root(), 1.0, None::<f64>, None::<f64>)];
    while let Some((node, prob, mut xa, mut xb)) = stack.pop() {
        if xa.is_none() && stops(tree, rule_a, node) {
            xa = Some(tree.payoff(&node));
        }
        if xb.is_none() && stops(tree, rule_b, node) {
            xb = Some(tree.payoff(&node));
        }
        let children = &tree.node(node).children;
        if children.is_empty() {
            let (a, b) = (xa.expect("stops at maturity"), xb.expect("stops at maturity"));
            out.push((prob, a - b));
            continue;
        }
        for (p, c) in children.iter().rev() {
            stack.push((*c, prob * p, xa, xb));
        }
    }
    Ok(out)
}

/// `E[X_{τ^A} - X_{τ^B}]`.
pub fn exact_delta<A, B>(tree: &TreeModel, rule_a: &A, rule_b: &B) -> Result<f64>
where
    A: StoppingRule<TreeModel> + ?Sized,
    B: StoppingRule<TreeModel> + ?Sized,
{
    Ok(path_differences(tree, rule_a, rule_b)?.iter().map(|(p, d)| p * d).sum())
}

/// `Var(X_{τ^A} - X_{τ^B})` from the path distribution directly.
pub fn exact_total_variance<A, B>(tree: &TreeModel, rule_a: &A, rule_b: &B) -> Result<f64>
where
    A: StoppingRule<TreeModel> + ?Sized,
    B: StoppingRule<TreeModel> + ?Sized,
{
    let dist = path_differences(tree, rule_a, rule_b)?;
    let m: f64 = dist.iter().map(|(p, d)| p * d).sum();
    Ok(dist.iter().map(|(p, d)| p * (d - m) * (d - m)).sum())
}

fn prefix_of(tree: &TreeModel, node: NodeId) -> Vec<usize> {
    let mut prefix = vec![node.0];
    let mut cur = node;
    while let Some(parent) = tree.node(cur).parent {
        prefix.push(parent.0);
        cur = parent;
    }
    prefix.reverse();
    prefix
}

/// Law of the surviving rule's stopped payoff below `node`, relative to it.
fn stopped_payoffs<R: StoppingRule<TreeModel> + ?Sized>(tree: &TreeModel, rule: &R, node: NodeId) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut stack: Vec<(NodeId, f64)> = tree.node(node).children.iter().map(|(p, c)| (*c, *p)).collect();
    while let Some((n, prob)) = stack.pop() {
        if stops(tree, rule, n) {
            out.push((prob, tree.payoff(&n)));
        } else {
            stack.extend(tree.node(n).children.iter().map(|(p, c)| (*c, prob * p)));
        }
    }
    out
}

pub fn enumerate_atoms<A, B>(tree: &TreeModel, rule_a: &A, rule_b: &B) -> Result<Vec<EnumeratedAtom>>
where
    A: StoppingRule<TreeModel> + ?Sized,
    B: StoppingRule<TreeModel> + ?Sized,
{
    check_size(tree)?;
    let mut atoms = Vec::new();
    let mut stack = vec![(tree.root(), 1.0)];
    while let Some((node, prob)) = stack.pop() {
        let a = stops(tree, rule_a, node);
        let b = stops(tree, rule_b, node);
        if !(a || b) {
            for (p, c) in tree.node(node).children.iter().rev() {
                stack.push((*c, prob * p));
            }
            continue;
        }
        let x_wedge = tree.payoff(&node);
        let (sign, law) = match (a, b) {
            (true, true) => (0i8, vec![(1.0, x_wedge)]),
            (true, false) => (-1, stopped_payoffs(tree, rule_b, node)),
            (false, true) => (1, stopped_payoffs(tree, rule_a, node)),
            (false, false) => unreachable!(),
        };
        let s = sign as f64;
        let m: f64 = law.iter().map(|(p, x)| p * s * (x - x_wedge)).sum();
        let v: f64 = law
            .iter()
            .map(|(p, x)| {
                let d = s * (x - x_wedge) - m;
                p * d * d
            })
            .sum();
        atoms.push(EnumeratedAtom {
            prefix: prefix_of(tree, node),
            probability: prob,
            sign,
            x_wedge,
            conditional_mean: m,
            conditional_var: v,
        });
    }
    Ok(atoms)
}

/// `Δ`, `v1 = Var(E[·|F_{τ^∧}])` and `v2 = E[Var(·|F_{τ^∧})]`.
pub fn exact_components<A, B>(tree: &TreeModel, rule_a: &A, rule_b: &B) -> Result<ExactComponents>
where
    A: StoppingRule<TreeModel> + ?Sized,
    B: StoppingRule<TreeModel> + ?Sized,
{
    let atoms = enumerate_atoms(tree, rule_a, rule_b)?;
    let delta: f64 = atoms.iter().map(|a| a.probability * a.conditional_mean).sum();
    let v1 = atoms
        .iter()
        .map(|a| a.probability * (a.conditional_mean - delta).powi(2))
        .sum();
    let v2 = atoms.iter().map(|a| a.probability * a.conditional_var).sum();
    Ok(ExactComponents { delta, v1, v2 })
}
