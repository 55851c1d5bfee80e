//! Binarized constituency trees in post-order layout.

use serde::{Deserialize, Serialize};

use super::sexpr::LabeledTree;
use super::vocab::Vocab;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub parent: Option<usize>,
    /// `(left, right)`; `None` for leaves.
    pub children: Option<(usize, usize)>,
    /// Vocabulary index of the leaf token; 0 (unknown) until indexed and for
    /// internal nodes.
    pub word: usize,
    pub label: Option<String>,
    /// Half-open token range covered by the node.
    pub span: (usize, usize),
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// A full binary tree over a token sequence. Nodes are stored in post-order:
/// children always precede their parent and the root is the last node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryTree {
    nodes: Vec<TreeNode>,
    tokens: Vec<String>,
}

enum Bin {
    Leaf {
        label: Option<String>,
        token: String,
    },
    Node {
        label: Option<String>,
        left: Box<Bin>,
        right: Box<Bin>,
    },
}

impl Bin {
    fn set_label(&mut self, new: Option<String>) {
        if new.is_none() {
            return;
        }
        match self {
            Bin::Leaf { label, .. } | Bin::Node { label, .. } => *label = new,
        }
    }
}

fn to_bin(tree: &LabeledTree) -> Bin {
    match tree {
        LabeledTree::Token(t) => Bin::Leaf {
            label: None,
            token: t.clone(),
        },
        LabeledTree::Node { label, children } => match children.as_slice() {
            // Not produced by the reader; a childless node is read as a bare token.
            [] => Bin::Leaf {
                label: None,
                token: label.clone().unwrap_or_default(),
            },
            [only] => {
                let mut b = to_bin(only);
                b.set_label(label.clone());
                b
            }
            [first, rest @ ..] => {
                let mut acc = to_bin(first);
                for c in rest {
                    acc = Bin::Node {
                        label: None,
                        left: Box::new(acc),
                        right: Box::new(to_bin(c)),
                    };
                }
                acc.set_label(label.clone());
                acc
            }
        },
    }
}

/// Converts an arbitrary tree to a binary one: unary chains collapse onto
/// their child (the outermost label wins) and n-ary nodes are folded
/// left-branching, `(P a b c) -> (P (a b) c)`, with the introduced nodes
/// unlabeled.
pub fn binarize(tree: &LabeledTree) -> BinaryTree {
    let bin = to_bin(tree);
    let mut out = BinaryTree {
        nodes: Vec::new(),
        tokens: Vec::new(),
    };
    let root = out.push_bin(bin);
    out.nodes[root].parent = None;
    out
}

impl BinaryTree {
    fn push_bin(&mut self, bin: Bin) -> usize {
        match bin {
            Bin::Leaf { label, token } => {
                let pos = self.tokens.len();
                self.tokens.push(token);
                self.nodes.push(TreeNode {
                    parent: None,
                    children: None,
                    word: 0,
                    label,
                    span: (pos, pos + 1),
                });
                self.nodes.len() - 1
            }
            Bin::Node { label, left, right } => {
                let l = self.push_bin(*left);
                let r = self.push_bin(*right);
                let span = (self.nodes[l].span.0, self.nodes[r].span.1);
                self.nodes.push(TreeNode {
                    parent: None,
                    children: Some((l, r)),
                    word: 0,
                    label,
                    span,
                });
                let id = self.nodes.len() - 1;
                self.nodes[l].parent = Some(id);
                self.nodes[r].parent = Some(id);
                id
            }
        }
    }

    /// Builds a tree from raw parts, checking every structural invariant.
    pub fn from_parts(nodes: Vec<TreeNode>, tokens: Vec<String>) -> Result<Self> {
        let tree = BinaryTree { nodes, tokens };
        tree.validate()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// The tokens covered by `node`, space separated.
    pub fn phrase(&self, node: usize) -> String {
        let (a, b) = self.nodes[node].span;
        self.tokens[a..b].join(" ")
    }

    /// Parent index per node, `-1` for the root.
    pub fn parent_array(&self) -> Vec<i64> {
        self.nodes
            .iter()
            .map(|n| n.parent.map_or(-1, |p| p as i64))
            .collect()
    }

    /// Leaf tokens read left to right.
    pub fn leaf_tokens(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| self.tokens[n.span.0].as_str())
            .collect()
    }

    /// Assigns vocabulary indices to leaves; unknown tokens map to 0.
    pub fn index_with(&mut self, vocab: &Vocab) {
        for n in &mut self.nodes {
            if n.is_leaf() {
                n.word = vocab.lookup(&self.tokens[n.span.0]);
            }
        }
    }

    /// Converts back to a bracketed tree; unlabeled nodes get the label `*`.
    pub fn to_labeled(&self) -> LabeledTree {
        self.labeled_at(self.root())
    }

    fn labeled_at(&self, id: usize) -> LabeledTree {
        let n = &self.nodes[id];
        let label = Some(n.label.clone().unwrap_or_else(|| "*".to_string()));
        match n.children {
            None => LabeledTree::Node {
                label,
                children: vec![LabeledTree::Token(self.tokens[n.span.0].clone())],
            },
            Some((l, r)) => LabeledTree::Node {
                label,
                children: vec![self.labeled_at(l), self.labeled_at(r)],
            },
        }
    }

    pub fn to_sexpr(&self) -> String {
        self.to_labeled().to_sexpr()
    }

    /// Checks post-order layout, single root, full binarity, `N = 2L - 1`
    /// and contiguous spans.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Tree(m));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        let mut roots = 0;
        let mut leaf_pos = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            match n.parent {
                None => roots += 1,
                Some(p) if p <= i || p >= self.nodes.len() => {
                    return bad(format!("node {i} has parent {p} out of post-order"))
                }
                Some(p) => match self.nodes[p].children {
                    Some((l, r)) if l == i || r == i => {}
                    _ => return bad(format!("node {i} not a child of its parent {p}")),
                },
            }
            match n.children {
                None => {
                    if n.span != (leaf_pos, leaf_pos + 1) {
                        return bad(format!("leaf {i} span {:?} out of order", n.span));
                    }
                    leaf_pos += 1;
                }
                Some((l, r)) => {
                    if l >= i || r >= i || l == r {
                        return bad(format!("node {i} has invalid children ({l}, {r})"));
                    }
                    let (ls, rs) = (self.nodes[l].span, self.nodes[r].span);
                    if ls.1 != rs.0 || n.span != (ls.0, rs.1) {
                        return bad(format!("node {i} span not the union of its children"));
                    }
                    if self.nodes[l].parent != Some(i) || self.nodes[r].parent != Some(i) {
                        return bad(format!("children of node {i} do not point back"));
                    }
                }
            }
        }
        if roots != 1 || self.nodes[self.root()].parent.is_some() {
            return bad(format!("expected exactly one root at the end, found {roots}"));
        }
        if leaf_pos != self.tokens.len() {
            return bad(format!(
                "{} leaves for {} tokens",
                leaf_pos,
                self.tokens.len()
            ));
        }
        if self.nodes.len() != 2 * leaf_pos - 1 {
            return bad(format!("{} nodes for {} leaves", self.nodes.len(), leaf_pos));
        }
        Ok(())
    }
}
