//! Tree composition functions.
//!
//! Four variants share one bottom-up traversal:
//!
//! * `recnn`: `h = tanh(W [h_l; h_r] + b)` with a shared `W ∈ R^{d×2d}`.
//! * `treelstm`: gate block `[c̃; o; i; f_l; f_r]` from `W [x; h_l; h_r] + b`.
//! * `dc-recnn` / `dc-treelstm`: a smaller meta network runs over the same
//!   tree, reads out a controlling vector `z` at every node, and the basic
//!   cell's weights at that node are generated from `z` as low-rank products
//!   `P · diag(z) · Q` with biases `B · z`.
//!
//! Parameter groups are generic over their element type so the same struct
//! describes shapes, [`ParamId`]s in a store, or [`NodeId`]s bound on a tape.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result, TensorError};
use crate::params::{ParamId, ParamKind, ParamSlot, ParamStore};
use crate::tape::{NodeId, Tape};
use crate::treebank::BinaryTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "recnn")]
    Recnn,
    #[serde(rename = "treelstm")]
    Treelstm,
    #[serde(rename = "dc-recnn")]
    DcRecnn,
    #[serde(rename = "dc-treelstm")]
    DcTreelstm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Recnn,
        Variant::Treelstm,
        Variant::DcRecnn,
        Variant::DcTreelstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Recnn => "recnn",
            Variant::Treelstm => "treelstm",
            Variant::DcRecnn => "dc-recnn",
            Variant::DcTreelstm => "dc-treelstm",
        }
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, Variant::DcRecnn | Variant::DcTreelstm)
    }

    pub fn is_lstm(self) -> bool {
        matches!(self, Variant::Treelstm | Variant::DcTreelstm)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// Hidden size `d`, embedding size `e`, meta hidden size `m`, and controlling
/// vector size `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub d: usize,
    pub e: usize,
    pub m: usize,
    pub z: usize,
}

impl Sizes {
    pub fn new(d: usize, e: usize, m: usize, z: usize) -> Self {
        Sizes { d, e, m, z }
    }

    /// `m` and `z` only matter for dynamic variants and may be 0 otherwise.
    pub fn validate(&self, variant: Variant) -> Result<()> {
        let meta_ok = !variant.is_dynamic() || (self.m > 0 && self.z > 0);
        if self.d == 0 || self.e == 0 || !meta_ok {
            return Err(Error::Config(format!("sizes must be positive: {self:?}")));
        }
        if variant.is_lstm() && self.e != self.d {
            return Err(Error::Config(format!(
                "{variant} feeds embeddings straight into the cell and needs e == d (got e={}, d={})",
                self.e, self.d
            )));
        }
        Ok(())
    }
}

macro_rules! param_group {
    ($(#[$meta:meta])* $name:ident { $($field:ident : $label:literal),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name<T> {
            $(pub $field: T,)*
        }

        impl<T> $name<T> {
            pub const NAMES: &'static [&'static str] = &[$($label),*];

            pub fn try_from_fn<E>(mut f: impl FnMut(&'static str) -> Result<T, E>) -> Result<Self, E> {
                Ok($name { $($field: f($label)?,)* })
            }

            pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> $name<U> {
                $name { $($field: f(&self.$field),)* }
            }

            pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> Result<U, E>) -> Result<$name<U>, E> {
                Ok($name { $($field: f(&self.$field)?,)* })
            }

            pub fn entries(&self) -> Vec<(&'static str, &T)> {
                vec![$(($label, &self.$field)),*]
            }
        }
    };
}

param_group!(
    /// `h = tanh(W [h_l; h_r] + b)`, `W: d×2d`.
    StaticRecnn { w: "W", b: "b" }
);
param_group!(
    /// Leaf transform of the RecNN family, `h = tanh(W x + b)`, `W: d×e`.
    LeafProjection { w: "W", b: "b" }
);
param_group!(
    /// `W: 5d×3d`, `b: 5d`, rows ordered `c̃, o, i, f_l, f_r`.
    StaticTreelstm { w: "W", b: "b" }
);
param_group!(
    /// `W_m: m×(2d+2m)`, `b_m: m`, `W_z: z×m`.
    MetaRecnn { w_m: "W_m", b_m: "b_m", w_z: "W_z" }
);
param_group!(
    /// `W_m: 5m×(3d+2m)`, `b_m: 5m`, `W_z: z×m`.
    MetaTreelstm { w_m: "W_m", b_m: "b_m", w_z: "W_z" }
);
param_group!(
    /// Generator of the RecNN composition weights: `P: d×z`, `Q: z×d`,
    /// `B: d×z` for each child side.
    RecnnGenerator { p_l: "P_l", q_l: "Q_l", p_r: "P_r", q_r: "Q_r", b_l: "B_l", b_r: "B_r" }
);
param_group!(
    /// Generator of the dynamic leaf projection: `P: d×z`, `Q: z×e`, `B: d×z`.
    LeafGenerator { p: "P", q: "Q", b: "B" }
);
param_group!(
    /// Generator of one TreeLSTM gate: blocks for the input, left and right
    /// child columns plus one bias block.
    GateGenerator { p_x: "P_x", q_x: "Q_x", p_l: "P_l", q_l: "Q_l", p_r: "P_r", q_r: "Q_r", b: "B" }
);

/// Gate names in row order of the TreeLSTM pre-activation.
pub const GATES: [&str; 5] = ["c", "o", "i", "fl", "fr"];

/// One [`GateGenerator`] per gate, in [`GATES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct TreelstmGenerator<T> {
    pub gates: [GateGenerator<T>; 5],
}

impl<T> TreelstmGenerator<T> {
    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> Result<U, E>) -> Result<TreelstmGenerator<U>, E> {
        let [a, b, c, d, e] = &self.gates;
        Ok(TreelstmGenerator {
            gates: [
                a.try_map(&mut f)?,
                b.try_map(&mut f)?,
                c.try_map(&mut f)?,
                d.try_map(&mut f)?,
                e.try_map(&mut f)?,
            ],
        })
    }
}

/// Parameters of one model variant's composition function.
#[derive(Debug, Clone, PartialEq)]
pub enum Composer<T> {
    Recnn {
        leaf: LeafProjection<T>,
        cell: StaticRecnn<T>,
    },
    Treelstm {
        cell: StaticTreelstm<T>,
    },
    DcRecnn {
        meta: MetaRecnn<T>,
        gen: RecnnGenerator<T>,
        leaf: LeafGenerator<T>,
    },
    DcTreelstm {
        meta: MetaTreelstm<T>,
        gen: TreelstmGenerator<T>,
    },
}

/// Name, kind and shape of one stored parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        let name = name.into();
        let last = name.rsplit('.').next().unwrap_or("");
        let kind = if last == "b" || last == "b_m" || last.starts_with("b_") {
            ParamKind::Bias
        } else {
            ParamKind::Weight
        };
        ParamSpec {
            name,
            kind,
            rows,
            cols,
        }
    }
}

fn group_shape(group: &str, field: &str, s: Sizes) -> (usize, usize) {
    let Sizes { d, e, m, z } = s;
    match (group, field) {
        ("leaf", "W") => (d, e),
        ("leaf", "b") => (d, 1),
        ("recnn", "W") => (d, 2 * d),
        ("recnn", "b") => (d, 1),
        ("treelstm", "W") => (5 * d, 3 * d),
        ("treelstm", "b") => (5 * d, 1),
        ("meta-recnn", "W_m") => (m, 2 * d + 2 * m),
        ("meta-recnn", "b_m") => (m, 1),
        ("meta-treelstm", "W_m") => (5 * m, 3 * d + 2 * m),
        ("meta-treelstm", "b_m") => (5 * m, 1),
        (_, "W_z") => (z, m),
        ("gen.leaf", "Q") => (z, e),
        (_, f) if f.starts_with('P') || f.starts_with('B') => (d, z),
        (_, f) if f.starts_with('Q') => (z, d),
        _ => unreachable!("no shape for {group}.{field}"),
    }
}

/// Canonical parameter names and shapes for a variant, in storage order.
pub fn composer_layout(variant: Variant, sizes: Sizes) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let mut add = |prefix: &str, shape_group: &str, names: &[&str]| {
        for n in names {
            let (r, c) = group_shape(shape_group, n, sizes);
            out.push(ParamSpec::new(format!("{prefix}.{n}"), r, c));
        }
    };
    match variant {
        Variant::Recnn => {
            add("leaf", "leaf", LeafProjection::<()>::NAMES);
            add("recnn", "recnn", StaticRecnn::<()>::NAMES);
        }
        Variant::Treelstm => add("treelstm", "treelstm", StaticTreelstm::<()>::NAMES),
        Variant::DcRecnn => {
            add("meta", "meta-recnn", MetaRecnn::<()>::NAMES);
            add("gen", "gen", RecnnGenerator::<()>::NAMES);
            add("gen.leaf", "gen.leaf", LeafGenerator::<()>::NAMES);
        }
        Variant::DcTreelstm => {
            add("meta", "meta-treelstm", MetaTreelstm::<()>::NAMES);
            for g in GATES {
                add(&format!("gen.{g}"), "gen", GateGenerator::<()>::NAMES);
            }
        }
    }
    out
}

impl Composer<ParamId> {
    /// Looks up every parameter of `variant` in `store`, checking shapes.
    pub fn resolve(store: &ParamStore, variant: Variant, sizes: Sizes) -> Result<Self> {
        let lookup = |prefix: &str, group: &str, field: &'static str| -> Result<ParamId> {
            let (r, c) = group_shape(group, field, sizes);
            store.id_with_shape(&format!("{prefix}.{field}"), r, c)
        };
        Ok(match variant {
            Variant::Recnn => Composer::Recnn {
                leaf: LeafProjection::try_from_fn(|f| lookup("leaf", "leaf", f))?,
                cell: StaticRecnn::try_from_fn(|f| lookup("recnn", "recnn", f))?,
            },
            Variant::Treelstm => Composer::Treelstm {
                cell: StaticTreelstm::try_from_fn(|f| lookup("treelstm", "treelstm", f))?,
            },
            Variant::DcRecnn => Composer::DcRecnn {
                meta: MetaRecnn::try_from_fn(|f| lookup("meta", "meta-recnn", f))?,
                gen: RecnnGenerator::try_from_fn(|f| lookup("gen", "gen", f))?,
                leaf: LeafGenerator::try_from_fn(|f| lookup("gen.leaf", "gen.leaf", f))?,
            },
            Variant::DcTreelstm => {
                let gate = |g: &str| {
                    GateGenerator::try_from_fn(|f| lookup(&format!("gen.{g}"), "gen", f))
                };
                Composer::DcTreelstm {
                    meta: MetaTreelstm::try_from_fn(|f| lookup("meta", "meta-treelstm", f))?,
                    gen: TreelstmGenerator {
                        gates: [gate("c")?, gate("o")?, gate("i")?, gate("fl")?, gate("fr")?],
                    },
                }
            }
        })
    }

    /// Binds every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Result<Composer<NodeId>> {
        self.try_map(|id| tape.bind(store, ParamSlot::Whole(*id)))
    }
}

impl<T> Composer<T> {
    pub fn variant(&self) -> Variant {
        match self {
            Composer::Recnn { .. } => Variant::Recnn,
            Composer::Treelstm { .. } => Variant::Treelstm,
            Composer::DcRecnn { .. } => Variant::DcRecnn,
            Composer::DcTreelstm { .. } => Variant::DcTreelstm,
        }
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> Result<U, E>) -> Result<Composer<U>, E> {
        Ok(match self {
            Composer::Recnn { leaf, cell } => Composer::Recnn {
                leaf: leaf.try_map(&mut f)?,
                cell: cell.try_map(&mut f)?,
            },
            Composer::Treelstm { cell } => Composer::Treelstm {
                cell: cell.try_map(&mut f)?,
            },
            Composer::DcRecnn { meta, gen, leaf } => Composer::DcRecnn {
                meta: meta.try_map(&mut f)?,
                gen: gen.try_map(&mut f)?,
                leaf: leaf.try_map(&mut f)?,
            },
            Composer::DcTreelstm { meta, gen } => Composer::DcTreelstm {
                meta: meta.try_map(&mut f)?,
                gen: gen.try_map(&mut f)?,
            },
        })
    }
}

/// Per-node forward state. Which fields are present depends on the variant:
/// `c` and `gates` for the TreeLSTM family, `meta_h` and `z` for dynamic
/// variants, `meta_c` for the meta TreeLSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState<T> {
    pub h: T,
    pub c: Option<T>,
    /// Post-activation gate block `[c̃; o; i; f_l; f_r]`.
    pub gates: Option<T>,
    pub meta_h: Option<T>,
    pub meta_c: Option<T>,
    pub z: Option<T>,
}

impl<T> NodeState<T> {
    fn basic(h: T) -> Self {
        NodeState {
            h,
            c: None,
            gates: None,
            meta_h: None,
            meta_c: None,
            z: None,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> NodeState<U> {
        NodeState {
            h: f(&self.h),
            c: self.c.as_ref().map(&mut f),
            gates: self.gates.as_ref().map(&mut f),
            meta_h: self.meta_h.as_ref().map(&mut f),
            meta_c: self.meta_c.as_ref().map(&mut f),
            z: self.z.as_ref().map(&mut f),
        }
    }
}

/// `h = tanh(W [h_l; h_r] + b)`.
pub fn recnn_compose(
    tape: &mut Tape,
    h_l: NodeId,
    h_r: NodeId,
    w: NodeId,
    b: NodeId,
) -> Result<NodeId, TensorError> {
    let input = tape.concat_rows(&[h_l, h_r])?;
    let pre = tape.matmul(w, input)?;
    let pre = tape.add(pre, b)?;
    tape.tanh(pre)
}

/// Output of an LSTM-style cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOut {
    pub h: NodeId,
    pub c: NodeId,
    pub gates: NodeId,
}

/// Splits a `5k` pre-activation into `[tanh; σ; σ; σ; σ]` gates and applies
/// `c = c̃⊙i + c_l⊙f_l + c_r⊙f_r`, `h = o⊙tanh(c)`.
fn lstm_cell(tape: &mut Tape, pre: NodeId, c_l: NodeId, c_r: NodeId) -> Result<CellOut, TensorError> {
    let k = tape.value(pre).rows() / 5;
    let slice = |tape: &mut Tape, g: usize| tape.slice_rows(pre, g * k, (g + 1) * k);
    let cand = slice(tape, 0)?;
    let cand = tape.tanh(cand)?;
    let o = slice(tape, 1)?;
    let o = tape.sigmoid(o)?;
    let i = slice(tape, 2)?;
    let i = tape.sigmoid(i)?;
    let f_l = slice(tape, 3)?;
    let f_l = tape.sigmoid(f_l)?;
    let f_r = slice(tape, 4)?;
    let f_r = tape.sigmoid(f_r)?;

    let ci = tape.mul(cand, i)?;
    let cl = tape.mul(c_l, f_l)?;
    let cr = tape.mul(c_r, f_r)?;
    let c = tape.add(ci, cl)?;
    let c = tape.add(c, cr)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    let gates = tape.concat_rows(&[cand, o, i, f_l, f_r])?;
    Ok(CellOut { h, c, gates })
}

/// TreeLSTM transition with `W: 5d×3d` over `[x; h_l; h_r]`.
#[allow(clippy::too_many_arguments)]
pub fn treelstm_compose(
    tape: &mut Tape,
    x: NodeId,
    h_l: NodeId,
    h_r: NodeId,
    c_l: NodeId,
    c_r: NodeId,
    w: NodeId,
    b: NodeId,
) -> Result<CellOut, TensorError> {
    let input = tape.concat_rows(&[x, h_l, h_r])?;
    let pre = tape.matmul(w, input)?;
    let pre = tape.add(pre, b)?;
    lstm_cell(tape, pre, c_l, c_r)
}

/// Meta RecNN: `ĥ = tanh(W_m [h_l; h_r; ĥ_l; ĥ_r] + b_m)`, `z = W_z ĥ`.
/// Returns `(ĥ, z)`.
pub fn meta_recnn_step(
    tape: &mut Tape,
    h_l: NodeId,
    h_r: NodeId,
    meta_h_l: NodeId,
    meta_h_r: NodeId,
    meta: &MetaRecnn<NodeId>,
) -> Result<(NodeId, NodeId), TensorError> {
    let input = tape.concat_rows(&[h_l, h_r, meta_h_l, meta_h_r])?;
    let pre = tape.matmul(meta.w_m, input)?;
    let pre = tape.add(pre, meta.b_m)?;
    let meta_h = tape.tanh(pre)?;
    let z = tape.matmul(meta.w_z, meta_h)?;
    Ok((meta_h, z))
}

/// Meta TreeLSTM over `[x; h_l; h_r; ĥ_l; ĥ_r]` with meta cell states
/// `ĉ_l, ĉ_r`. Returns the cell output (`h` is `ĥ`, `c` is `ĉ`) and `z`.
#[allow(clippy::too_many_arguments)]
pub fn meta_treelstm_step(
    tape: &mut Tape,
    x: NodeId,
    h_l: NodeId,
    h_r: NodeId,
    meta_h_l: NodeId,
    meta_h_r: NodeId,
    meta_c_l: NodeId,
    meta_c_r: NodeId,
    meta: &MetaTreelstm<NodeId>,
) -> Result<(CellOut, NodeId), TensorError> {
    let input = tape.concat_rows(&[x, h_l, h_r, meta_h_l, meta_h_r])?;
    let pre = tape.matmul(meta.w_m, input)?;
    let pre = tape.add(pre, meta.b_m)?;
    let out = lstm_cell(tape, pre, meta_c_l, meta_c_r)?;
    let z = tape.matmul(meta.w_z, out.h)?;
    Ok((out, z))
}

/// `P · diag(z) · Q`; rank at most `len(z)`.
pub fn low_rank(tape: &mut Tape, p: NodeId, diag_z: NodeId, q: NodeId) -> Result<NodeId, TensorError> {
    let pd = tape.matmul(p, diag_z)?;
    tape.matmul(pd, q)
}

/// `W(z) = [P_l D(z) Q_l | P_r D(z) Q_r]` (`d×2d`), `b(z) = B_l z + B_r z`.
pub fn generate_recnn_params(
    tape: &mut Tape,
    z: NodeId,
    gen: &RecnnGenerator<NodeId>,
) -> Result<(NodeId, NodeId), TensorError> {
    let dz = tape.diag_from_vector(z)?;
    let wl = low_rank(tape, gen.p_l, dz, gen.q_l)?;
    let wr = low_rank(tape, gen.p_r, dz, gen.q_r)?;
    let w = tape.concat_cols(&[wl, wr])?;
    let bl = tape.matmul(gen.b_l, z)?;
    let br = tape.matmul(gen.b_r, z)?;
    let b = tape.add(bl, br)?;
    Ok((w, b))
}

/// Per gate `W* = [P_x D Q_x | P_l D Q_l | P_r D Q_r]` (`d×3d`) and
/// `b* = B* z`, stacked in [`GATES`] order into `5d×3d` and `5d`.
pub fn generate_treelstm_params(
    tape: &mut Tape,
    z: NodeId,
    gen: &TreelstmGenerator<NodeId>,
) -> Result<(NodeId, NodeId), TensorError> {
    let dz = tape.diag_from_vector(z)?;
    let mut ws = Vec::with_capacity(5);
    let mut bs = Vec::with_capacity(5);
    for g in &gen.gates {
        let wx = low_rank(tape, g.p_x, dz, g.q_x)?;
        let wl = low_rank(tape, g.p_l, dz, g.q_l)?;
        let wr = low_rank(tape, g.p_r, dz, g.q_r)?;
        ws.push(tape.concat_cols(&[wx, wl, wr])?);
        bs.push(tape.matmul(g.b, z)?);
    }
    Ok((tape.concat_rows(&ws)?, tape.concat_rows(&bs)?))
}

/// Dynamic leaf projection `W(z) = P D(z) Q` (`d×e`), `b(z) = B z`.
pub fn generate_leaf_params(
    tape: &mut Tape,
    z: NodeId,
    gen: &LeafGenerator<NodeId>,
) -> Result<(NodeId, NodeId), TensorError> {
    let dz = tape.diag_from_vector(z)?;
    let w = low_rank(tape, gen.p, dz, gen.q)?;
    let b = tape.matmul(gen.b, z)?;
    Ok((w, b))
}

/// Runs the composer bottom-up over `tree` and returns the state of every
/// node in the tree's post-order (the root is last).
///
/// Leaves read their word vector from row `word` of the `embeddings`
/// parameter. RecNN-family leaves apply `tanh(W x + b)`; for the dynamic
/// variant that projection is generated from the leaf's own `z`, computed by
/// the meta cell with all-zero children. TreeLSTM-family leaves run the cell
/// with `x` set to the embedding and zero child states; internal nodes use
/// `x = 0`.
pub fn encode_tree(
    tape: &mut Tape,
    store: &ParamStore,
    composer: &Composer<NodeId>,
    embeddings: ParamId,
    tree: &BinaryTree,
    sizes: Sizes,
) -> Result<Vec<NodeState<NodeId>>> {
    if tree.is_empty() {
        return Err(Error::Tree("empty tree".into()));
    }
    let zero_d = tape.zeros(sizes.d);
    let zero_m = tape.zeros(sizes.m);
    let mut states: Vec<NodeState<NodeId>> = Vec::with_capacity(tree.len());

    for node in tree.nodes() {
        let children = match node.children {
            Some((l, r)) => {
                if l >= states.len() || r >= states.len() {
                    return Err(Error::Tree("children must precede their parent".into()));
                }
                Some((l, r))
            }
            None => None,
        };
        let x = match children {
            None => Some(tape.bind(store, ParamSlot::Row(embeddings, node.word))?),
            Some(_) => None,
        };

        let state = match composer {
            Composer::Recnn { leaf, cell } => match children {
                None => {
                    let pre = tape.matmul(leaf.w, x.unwrap())?;
                    let pre = tape.add(pre, leaf.b)?;
                    NodeState::basic(tape.tanh(pre)?)
                }
                Some((l, r)) => NodeState::basic(recnn_compose(
                    tape,
                    states[l].h,
                    states[r].h,
                    cell.w,
                    cell.b,
                )?),
            },
            Composer::Treelstm { cell } => {
                let (x, h_l, h_r, c_l, c_r) = lstm_inputs(&states, children, x, zero_d);
                let out = treelstm_compose(tape, x, h_l, h_r, c_l, c_r, cell.w, cell.b)?;
                NodeState {
                    c: Some(out.c),
                    gates: Some(out.gates),
                    ..NodeState::basic(out.h)
                }
            }
            Composer::DcRecnn { meta, gen, leaf } => match children {
                None => {
                    let (meta_h, z) = meta_recnn_step(tape, zero_d, zero_d, zero_m, zero_m, meta)?;
                    let (w, b) = generate_leaf_params(tape, z, leaf)?;
                    let pre = tape.matmul(w, x.unwrap())?;
                    let pre = tape.add(pre, b)?;
                    NodeState {
                        meta_h: Some(meta_h),
                        z: Some(z),
                        ..NodeState::basic(tape.tanh(pre)?)
                    }
                }
                Some((l, r)) => {
                    let (h_l, h_r) = (states[l].h, states[r].h);
                    let (mh_l, mh_r) = (meta_of(&states[l])?, meta_of(&states[r])?);
                    let (meta_h, z) = meta_recnn_step(tape, h_l, h_r, mh_l, mh_r, meta)?;
                    let (w, b) = generate_recnn_params(tape, z, gen)?;
                    NodeState {
                        meta_h: Some(meta_h),
                        z: Some(z),
                        ..NodeState::basic(recnn_compose(tape, h_l, h_r, w, b)?)
                    }
                }
            },
            Composer::DcTreelstm { meta, gen } => {
                let (xi, h_l, h_r, c_l, c_r) = lstm_inputs(&states, children, x, zero_d);
                let (mh_l, mh_r, mc_l, mc_r) = match children {
                    None => (zero_m, zero_m, zero_m, zero_m),
                    Some((l, r)) => (
                        meta_of(&states[l])?,
                        meta_of(&states[r])?,
                        meta_cell_of(&states[l])?,
                        meta_cell_of(&states[r])?,
                    ),
                };
                let (m_out, z) =
                    meta_treelstm_step(tape, xi, h_l, h_r, mh_l, mh_r, mc_l, mc_r, meta)?;
                let (w, b) = generate_treelstm_params(tape, z, gen)?;
                let out = treelstm_compose(tape, xi, h_l, h_r, c_l, c_r, w, b)?;
                NodeState {
                    h: out.h,
                    c: Some(out.c),
                    gates: Some(out.gates),
                    meta_h: Some(m_out.h),
                    meta_c: Some(m_out.c),
                    z: Some(z),
                }
            }
        };
        states.push(state);
    }
    Ok(states)
}

fn lstm_inputs(
    states: &[NodeState<NodeId>],
    children: Option<(usize, usize)>,
    x: Option<NodeId>,
    zero_d: NodeId,
) -> (NodeId, NodeId, NodeId, NodeId, NodeId) {
    match children {
        None => (x.unwrap_or(zero_d), zero_d, zero_d, zero_d, zero_d),
        Some((l, r)) => (
            zero_d,
            states[l].h,
            states[r].h,
            states[l].c.unwrap_or(zero_d),
            states[r].c.unwrap_or(zero_d),
        ),
    }
}

fn meta_of(state: &NodeState<NodeId>) -> Result<NodeId> {
    state
        .meta_h
        .ok_or_else(|| Error::Tree("child is missing its meta state".into()))
}

fn meta_cell_of(state: &NodeState<NodeId>) -> Result<NodeId> {
    state
        .meta_c
        .ok_or_else(|| Error::Tree("child is missing its meta cell".into()))
}

/// Parameter counts of the composition function.
///
/// `compositional` follows the customary accounting: `2d²+d` for RecNN,
/// `15d²+5d` for TreeLSTM, `6dz+mz` for DC-RecNN (generator plus `W_z`) and
/// `35dz+mz` for DC-TreeLSTM. The meta network's own cell (`W_m`, `b_m`), the
/// leaf projection and the per-token embedding width are listed separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub variant: Variant,
    pub compositional: usize,
    pub meta_core: usize,
    pub leaf: usize,
    pub embedding_per_token: usize,
}

impl ParamCount {
    /// Everything stored by the composer (excludes embeddings and task heads).
    pub fn composer_total(&self) -> usize {
        self.compositional + self.meta_core + self.leaf
    }
}

pub fn count_params(sizes: Sizes, variant: Variant) -> ParamCount {
    let Sizes { d, e, m, z } = sizes;
    let (compositional, meta_core, leaf) = match variant {
        Variant::Recnn => (2 * d * d + d, 0, d * e + d),
        Variant::Treelstm => (15 * d * d + 5 * d, 0, 0),
        Variant::DcRecnn => (6 * d * z + m * z, m * (2 * d + 2 * m) + m, d * z + z * e + d * z),
        Variant::DcTreelstm => (35 * d * z + m * z, 5 * m * (3 * d + 2 * m) + 5 * m, 0),
    };
    ParamCount {
        variant,
        compositional,
        meta_core,
        leaf,
        embedding_per_token: e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamKind;
    use crate::tensor::Tensor;

    fn consts<T: std::borrow::Borrow<Tensor>>(tape: &mut Tape, vals: &[T]) -> Vec<NodeId> {
        vals.iter().map(|t| tape.constant(t.borrow().clone())).collect()
    }

    #[test]
    fn recnn_zero_weights_give_zero() {
        let mut tape = Tape::new();
        let v = consts(
            &mut tape,
            &[
                Tensor::vector(&[0.3, -0.4]),
                Tensor::vector(&[0.9, 0.1]),
                Tensor::zeros(2, 4),
                Tensor::zeros(2, 1),
            ],
        );
        let h = recnn_compose(&mut tape, v[0], v[1], v[2], v[3]).unwrap();
        assert_eq!(tape.value(h), &Tensor::zeros(2, 1));
    }

    #[test]
    fn recnn_hand_value() {
        let mut tape = Tape::new();
        let v = consts(
            &mut tape,
            &[
                Tensor::vector(&[0.5]),
                Tensor::vector(&[0.5]),
                Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap(),
                Tensor::zeros(1, 1),
            ],
        );
        let h = recnn_compose(&mut tape, v[0], v[1], v[2], v[3]).unwrap();
        assert!((tape.value(h).data()[0] - 0.76159).abs() < 1e-5);
    }

    #[test]
    fn treelstm_hand_values() {
        let mut tape = Tape::new();
        let z = Tensor::zeros(1, 1);
        let v = consts(
            &mut tape,
            &[&z, &z, &z, &Tensor::vector(&[2.0]), &z, &Tensor::zeros(5, 3), &Tensor::zeros(5, 1)],
        );
        let out = treelstm_compose(&mut tape, v[0], v[1], v[2], v[3], v[4], v[5], v[6]).unwrap();
        assert!((tape.value(out.c).data()[0] - 1.0).abs() < 1e-15);
        assert!((tape.value(out.h).data()[0] - 0.38080).abs() < 1e-5);
        let gates = tape.value(out.gates).data().to_vec();
        assert_eq!(gates, vec![0.0, 0.5, 0.5, 0.5, 0.5]);

        let mut tape = Tape::new();
        let v = consts(&mut tape, &[&z, &z, &z, &z, &z, &Tensor::zeros(5, 3), &Tensor::zeros(5, 1)]);
        let out = treelstm_compose(&mut tape, v[0], v[1], v[2], v[3], v[4], v[5], v[6]).unwrap();
        assert_eq!(tape.value(out.h).data(), &[0.0]);
        assert_eq!(tape.value(out.c).data(), &[0.0]);
    }

    #[test]
    fn meta_recnn_zero_cases() {
        let mut tape = Tape::new();
        let (d, m, z) = (2, 2, 3);
        let children = consts(
            &mut tape,
            &[
                Tensor::vector(&[0.1, 0.2]),
                Tensor::vector(&[0.3, 0.4]),
                Tensor::vector(&[0.5, 0.6]),
                Tensor::vector(&[0.7, 0.8]),
            ],
        );
        let meta = MetaRecnn {
            w_m: tape.constant(Tensor::zeros(m, 2 * d + 2 * m)),
            b_m: tape.constant(Tensor::zeros(m, 1)),
            w_z: tape.constant(Tensor::filled(z, m, 1.0)),
        };
        let (mh, zz) =
            meta_recnn_step(&mut tape, children[0], children[1], children[2], children[3], &meta).unwrap();
        assert_eq!(tape.value(mh), &Tensor::zeros(m, 1));
        assert_eq!(tape.value(zz), &Tensor::zeros(z, 1));

        let meta = MetaRecnn {
            w_m: tape.constant(Tensor::filled(m, 2 * d + 2 * m, 0.3)),
            b_m: tape.constant(Tensor::filled(m, 1, 0.1)),
            w_z: tape.constant(Tensor::zeros(z, m)),
        };
        let (mh, zz) =
            meta_recnn_step(&mut tape, children[0], children[1], children[2], children[3], &meta).unwrap();
        assert!(tape.value(mh).data().iter().all(|v| *v != 0.0));
        assert_eq!(tape.value(zz), &Tensor::zeros(z, 1));
    }

    #[test]
    fn meta_treelstm_hand_value() {
        let mut tape = Tape::new();
        let zero = tape.constant(Tensor::zeros(1, 1));
        let two = tape.constant(Tensor::vector(&[2.0]));
        let meta = MetaTreelstm {
            w_m: tape.constant(Tensor::zeros(5, 5)),
            b_m: tape.constant(Tensor::zeros(5, 1)),
            w_z: tape.constant(Tensor::vector(&[3.0])),
        };
        let (out, z) =
            meta_treelstm_step(&mut tape, zero, zero, zero, zero, zero, two, zero, &meta).unwrap();
        assert!((tape.value(out.c).data()[0] - 1.0).abs() < 1e-15);
        let h = 0.5 * 1f64.tanh();
        assert!((tape.value(out.h).data()[0] - h).abs() < 1e-15);
        assert!((tape.value(z).data()[0] - 3.0 * h).abs() < 1e-15);
    }

    fn recnn_gen_consts(tape: &mut Tape, d: usize, z: usize, eye: bool) -> RecnnGenerator<NodeId> {
        let p = if eye { Tensor::identity(d) } else { Tensor::filled(d, z, 0.2) };
        let q = if eye { Tensor::identity(d) } else { Tensor::filled(z, d, 0.3) };
        RecnnGenerator {
            p_l: tape.constant(p.clone()),
            q_l: tape.constant(q.clone()),
            p_r: tape.constant(p),
            q_r: tape.constant(q),
            b_l: tape.constant(Tensor::filled(d, z, 0.5)),
            b_r: tape.constant(Tensor::filled(d, z, 0.5)),
        }
    }

    #[test]
    fn recnn_generator_zero_and_identity() {
        let mut tape = Tape::new();
        let gen = recnn_gen_consts(&mut tape, 3, 2, false);
        let z = tape.zeros(2);
        let (w, b) = generate_recnn_params(&mut tape, z, &gen).unwrap();
        assert_eq!(tape.value(w), &Tensor::zeros(3, 6));
        assert_eq!(tape.value(b), &Tensor::zeros(3, 1));

        let gen = recnn_gen_consts(&mut tape, 3, 3, true);
        let ones = tape.constant(Tensor::filled(3, 1, 1.0));
        let (w, _) = generate_recnn_params(&mut tape, ones, &gen).unwrap();
        let eye = Tensor::identity(3);
        assert_eq!(tape.value(w), &Tensor::concat_cols(&[&eye, &eye]).unwrap());
    }

    #[test]
    fn treelstm_generator_identity_blocks() {
        let d = 2;
        let mut tape = Tape::new();
        let eye = tape.constant(Tensor::identity(d));
        let b = tape.constant(Tensor::zeros(d, d));
        let gate = GateGenerator {
            p_x: eye,
            q_x: eye,
            p_l: eye,
            q_l: eye,
            p_r: eye,
            q_r: eye,
            b,
        };
        let gen = TreelstmGenerator {
            gates: [gate.clone(), gate.clone(), gate.clone(), gate.clone(), gate],
        };
        let ones = tape.constant(Tensor::filled(d, 1, 1.0));
        let (w, bias) = generate_treelstm_params(&mut tape, ones, &gen).unwrap();
        let w = tape.value(w);
        assert_eq!(w.shape(), (5 * d, 3 * d));
        for gi in 0..5 {
            for bj in 0..3 {
                for r in 0..d {
                    for c in 0..d {
                        let expect = if r == c { 1.0 } else { 0.0 };
                        assert_eq!(w.get(gi * d + r, bj * d + c), expect);
                    }
                }
            }
        }
        assert_eq!(tape.value(bias), &Tensor::zeros(5 * d, 1));
    }

    #[test]
    fn shape_errors_propagate() {
        let mut tape = Tape::new();
        let v = consts(
            &mut tape,
            &[
                Tensor::vector(&[0.0, 0.0]),
                Tensor::vector(&[0.0]),
                Tensor::zeros(2, 4),
                Tensor::zeros(2, 1),
            ],
        );
        assert!(recnn_compose(&mut tape, v[0], v[1], v[2], v[3]).is_err());
    }

    #[test]
    fn customary_counts() {
        let s = Sizes::new(100, 100, 20, 20);
        assert_eq!(count_params(s, Variant::DcRecnn).compositional, 12_400);
        assert_eq!(count_params(s, Variant::Recnn).compositional, 20_100);
        assert_eq!(count_params(Sizes::new(1, 1, 1, 1), Variant::DcRecnn).compositional, 7);
        assert!(
            count_params(s, Variant::DcRecnn).compositional
                < count_params(s, Variant::Recnn).compositional
        );
    }

    #[test]
    fn layout_matches_breakdown() {
        for variant in Variant::ALL {
            for sizes in [Sizes::new(4, 4, 3, 2), Sizes::new(7, 7, 5, 3), Sizes::new(5, 5, 2, 6)] {
                let total: usize = composer_layout(variant, sizes)
                    .iter()
                    .map(|p| p.rows * p.cols)
                    .sum();
                assert_eq!(total, count_params(sizes, variant).composer_total(), "{variant}");
            }
        }
    }

    #[test]
    fn resolve_checks_names_and_shapes() {
        let sizes = Sizes::new(3, 3, 2, 2);
        let mut store = ParamStore::new();
        for spec in composer_layout(Variant::DcTreelstm, sizes) {
            store.insert(&spec.name, spec.kind, Tensor::zeros(spec.rows, spec.cols));
        }
        assert!(Composer::resolve(&store, Variant::DcTreelstm, sizes).is_ok());
        assert!(store.id("gen.fl.P_x").is_ok());
        assert!(matches!(
            Composer::resolve(&store, Variant::Recnn, sizes),
            Err(Error::UnknownParam(_))
        ));
        store.insert("meta.W_z", ParamKind::Weight, Tensor::zeros(1, 1));
        assert!(matches!(
            Composer::resolve(&store, Variant::DcTreelstm, sizes),
            Err(Error::ParamShape { .. })
        ));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("rntn".parse::<Variant>().is_err());
    }

    #[test]
    fn bias_kinds() {
        assert_eq!(ParamSpec::new("meta.b_m", 1, 1).kind, ParamKind::Bias);
        assert_eq!(ParamSpec::new("recnn.b", 1, 1).kind, ParamKind::Bias);
        assert_eq!(ParamSpec::new("gen.B_l", 1, 1).kind, ParamKind::Weight);
        assert_eq!(ParamSpec::new("match.b_h", 1, 1).kind, ParamKind::Bias);
    }
}
