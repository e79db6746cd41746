//! Backbone trees: the prefix tree of all acyclic start-to-target paths of a
//! program, annotated during symbolic execution.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::program_model::{Loop, Program};
use crate::symexpr::{Expr, State, Var};

/// Loop entered at a tree node, together with the instantiated summary
/// data symbolic execution attached to it.
#[derive(Clone, Debug)]
pub struct LoopNode {
    /// The loop, in the vertex numbering of the tree's program.
    pub lp: Loop,
    /// Number of backbone paths of the induced program.
    pub eta: usize,
    /// Path counters introduced here, one per surviving induced path.
    pub counters: Vec<Var>,
    /// Parameters standing for the counters inside the looping condition.
    pub params: Vec<Var>,
    /// Per induced path, the parameterized path condition (already composed
    /// with the incoming state).
    pub parts: Vec<Expr>,
}

/// A node of a backbone tree: the last CFG vertex of a path prefix.
#[derive(Clone, Debug)]
pub struct TreeNode {
    pub vertex: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub alive: bool,
    pub loop_node: Option<LoopNode>,
    /// Part of the path condition contributed by this node.
    pub psi: Expr,
    /// Final symbolic state; set on leaves by symbolic execution.
    pub theta: Option<State>,
}

impl TreeNode {
    /// Number of induced backbone paths when this node enters a loop.
    pub fn eta(&self) -> usize {
        self.loop_node.as_ref().map_or(0, |l| l.eta)
    }

    /// Counters bound at this node.
    pub fn counters(&self) -> &[Var] {
        self.loop_node.as_ref().map_or(&[], |l| &l.counters)
    }
}

/// Prefix tree of the backbone paths of a program. Node 0 is the root when
/// the tree is not empty.
#[derive(Clone, Debug, Default)]
pub struct BackboneTree {
    pub nodes: Vec<TreeNode>,
}

impl BackboneTree {
    /// Builds the tree of all acyclic paths from the start to the target.
    /// Prefixes that cannot be extended to the target are not kept.
    pub fn build(p: &Program) -> BackboneTree {
        let mut tree = BackboneTree::default();
        let mut path = vec![p.start];
        let mut on_path = vec![false; p.num_vertices];
        on_path[p.start] = true;
        let mut etas = BTreeMap::new();
        tree.grow(p, None, &mut path, &mut on_path, &mut etas);
        tree
    }

    fn grow(
        &mut self,
        p: &Program,
        parent: Option<usize>,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        etas: &mut BTreeMap<(usize, Vec<usize>), usize>,
    ) -> Option<usize> {
        let v = *path.last().unwrap();
        let id = self.nodes.len();
        let loop_node = p.find_loop(path).map(|lp| {
            let key = (lp.entry, lp.body.iter().copied().collect::<Vec<_>>());
            let eta = *etas
                .entry(key)
                .or_insert_with(|| BackboneTree::build(&p.induced_program(&lp)).leaves().len());
            LoopNode {
                lp,
                eta,
                counters: vec![],
                params: vec![],
                parts: vec![],
            }
        });
        self.nodes.push(TreeNode {
            vertex: v,
            parent,
            children: vec![],
            alive: true,
            loop_node,
            psi: Expr::tt(),
            theta: None,
        });
        if v == p.target {
            return Some(id);
        }
        let succs: Vec<usize> = p.out_edges(v).map(|e| e.dst).collect();
        for w in succs {
            if on_path[w] {
                continue;
            }
            on_path[w] = true;
            path.push(w);
            if let Some(c) = self.grow(p, Some(id), path, on_path, etas) {
                self.nodes[id].children.push(c);
            }
            path.pop();
            on_path[w] = false;
        }
        if self.nodes[id].children.is_empty() {
            // Dead prefix: drop the node and everything allocated below it.
            self.nodes.truncate(id);
            return None;
        }
        Some(id)
    }

    /// The root node, if the tree is not empty.
    pub fn root(&self) -> Option<usize> {
        self.nodes.first().filter(|n| n.alive).map(|_| 0)
    }

    /// Whether the tree has no backbone path.
    pub fn is_empty(&self) -> bool {
        self.root().is_none()
    }

    /// Live children of a node.
    pub fn children(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes[n]
            .children
            .iter()
            .copied()
            .filter(|&c| self.nodes[c].alive)
    }

    /// Whether the node is a live leaf.
    pub fn is_leaf(&self, n: usize) -> bool {
        self.nodes[n].alive && self.children(n).next().is_none()
    }

    /// Live nodes in depth-first order.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.root().into_iter().collect();
        while let Some(n) = stack.pop() {
            out.push(n);
            let kids: Vec<usize> = self.children(n).collect();
            stack.extend(kids.into_iter().rev());
        }
        out
    }

    /// Live leaves in depth-first order.
    pub fn leaves(&self) -> Vec<usize> {
        self.preorder()
            .into_iter()
            .filter(|&n| self.is_leaf(n))
            .collect()
    }

    /// Nodes from the root to `n`.
    pub fn ancestry(&self, n: usize) -> Vec<usize> {
        let mut out = vec![n];
        let mut cur = n;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// CFG path of a node.
    pub fn path(&self, n: usize) -> Vec<usize> {
        self.ancestry(n)
            .into_iter()
            .map(|m| self.nodes[m].vertex)
            .collect()
    }

    /// Removes every backbone path through `n`. Ancestors left without
    /// children are removed as well.
    pub fn prune(&mut self, n: usize) {
        let mut stack = vec![n];
        while let Some(m) = stack.pop() {
            self.nodes[m].alive = false;
            self.nodes[m].theta = None;
            stack.extend(self.nodes[m].children.iter().copied());
        }
        let mut cur = self.nodes[n].parent;
        while let Some(p) = cur {
            if self.children(p).next().is_some() {
                break;
            }
            self.nodes[p].alive = false;
            cur = self.nodes[p].parent;
        }
    }

    /// Text dump: one backbone path per line, then the loop entries with
    /// their number of induced backbone paths.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in self.leaves() {
            let path: Vec<String> = self.path(l).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", path.join(" "));
        }
        for n in self.preorder() {
            if self.nodes[n].eta() > 0 {
                let path: Vec<String> = self.path(n).iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "eta [{}] = {}", path.join(" "), self.nodes[n].eta());
            }
        }
        out
    }
}
