//! Scalar reference implementations. Everything here is written with plain
//! index loops over `Vec<f64>` so it shares no code with the tensor module.

#![allow(dead_code)]

use dctree::composers::{Sizes, Variant, GATES};
use dctree::params::ParamStore;
use dctree::tensor::Tensor;
use dctree::treebank::BinaryTree;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| (0..t.cols()).map(|j| t.get(i, j)).collect()).collect()
}

pub fn mat(store: &ParamStore, name: &str) -> Mat {
    to_mat(store.by_name(name).unwrap_or_else(|| panic!("missing {name}")))
}

pub fn vecp(store: &ParamStore, name: &str) -> Vec<f64> {
    mat(store, name).into_iter().map(|r| r[0]).collect()
}

pub fn matvec(w: &Mat, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for i in 0..w.len() {
        assert_eq!(w[i].len(), x.len(), "oracle matvec shape");
        let mut s = 0.0;
        for j in 0..x.len() {
            s += w[i][j] * x[j];
        }
        out[i] = s;
    }
    out
}

pub fn cat(parts: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::new();
    for p in parts {
        for v in p.iter() {
            out.push(*v);
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(w: &Mat, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = matvec(w, x);
    for i in 0..y.len() {
        y[i] += b[i];
    }
    y
}

pub fn recnn(h_l: &[f64], h_r: &[f64], w: &Mat, b: &[f64]) -> Vec<f64> {
    affine(w, &cat(&[h_l, h_r]), b).into_iter().map(f64::tanh).collect()
}

/// Returns `(h, c, gates)` for a `5k` pre-activation.
pub fn lstm_cell(pre: &[f64], c_l: &[f64], c_r: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = pre.len() / 5;
    let mut gates = vec![0.0; 5 * k];
    let mut h = vec![0.0; k];
    let mut c = vec![0.0; k];
    for j in 0..k {
        let cand = pre[j].tanh();
        let o = sigmoid(pre[k + j]);
        let i = sigmoid(pre[2 * k + j]);
        let fl = sigmoid(pre[3 * k + j]);
        let fr = sigmoid(pre[4 * k + j]);
        c[j] = cand * i + c_l[j] * fl + c_r[j] * fr;
        h[j] = o * c[j].tanh();
        gates[j] = cand;
        gates[k + j] = o;
        gates[2 * k + j] = i;
        gates[3 * k + j] = fl;
        gates[4 * k + j] = fr;
    }
    (h, c, gates)
}

#[allow(clippy::too_many_arguments)]
pub fn treelstm(
    x: &[f64],
    h_l: &[f64],
    h_r: &[f64],
    c_l: &[f64],
    c_r: &[f64],
    w: &Mat,
    b: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    lstm_cell(&affine(w, &cat(&[x, h_l, h_r]), b), c_l, c_r)
}

/// `(ĥ, z)`.
pub fn meta_recnn(
    h_l: &[f64],
    h_r: &[f64],
    mh_l: &[f64],
    mh_r: &[f64],
    w_m: &Mat,
    b_m: &[f64],
    w_z: &Mat,
) -> (Vec<f64>, Vec<f64>) {
    let mh: Vec<f64> = affine(w_m, &cat(&[h_l, h_r, mh_l, mh_r]), b_m)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let z = matvec(w_z, &mh);
    (mh, z)
}

/// `(ĥ, ĉ, z)`.
#[allow(clippy::too_many_arguments)]
pub fn meta_treelstm(
    x: &[f64],
    h_l: &[f64],
    h_r: &[f64],
    mh_l: &[f64],
    mh_r: &[f64],
    mc_l: &[f64],
    mc_r: &[f64],
    w_m: &Mat,
    b_m: &[f64],
    w_z: &Mat,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let pre = affine(w_m, &cat(&[x, h_l, h_r, mh_l, mh_r]), b_m);
    let (h, c, _) = lstm_cell(&pre, mc_l, mc_r);
    let z = matvec(w_z, &h);
    (h, c, z)
}

/// `Σ_k P[i][k] z[k] Q[k][j]`.
pub fn low_rank(p: &Mat, z: &[f64], q: &Mat) -> Mat {
    let rows = p.len();
    let cols = q[0].len();
    let mut out = vec![vec![0.0; cols]; rows];
    for i in 0..rows {
        for j in 0..cols {
            let mut s = 0.0;
            for k in 0..z.len() {
                s += p[i][k] * z[k] * q[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn hcat(blocks: &[Mat]) -> Mat {
    let rows = blocks[0].len();
    (0..rows)
        .map(|i| blocks.iter().flat_map(|b| b[i].iter().copied()).collect())
        .collect()
}

pub fn gen_recnn(store: &ParamStore, z: &[f64]) -> (Mat, Vec<f64>) {
    let g = |n: &str| mat(store, &format!("gen.{n}"));
    let w = hcat(&[low_rank(&g("P_l"), z, &g("Q_l")), low_rank(&g("P_r"), z, &g("Q_r"))]);
    let bl = matvec(&g("B_l"), z);
    let br = matvec(&g("B_r"), z);
    let b = (0..bl.len()).map(|i| bl[i] + br[i]).collect();
    (w, b)
}

pub fn gen_leaf(store: &ParamStore, z: &[f64]) -> (Mat, Vec<f64>) {
    let g = |n: &str| mat(store, &format!("gen.leaf.{n}"));
    (low_rank(&g("P"), z, &g("Q")), matvec(&g("B"), z))
}

pub fn gen_treelstm(store: &ParamStore, z: &[f64]) -> (Mat, Vec<f64>) {
    let mut w = Vec::new();
    let mut b = Vec::new();
    for gate in GATES {
        let g = |n: &str| mat(store, &format!("gen.{gate}.{n}"));
        let block = hcat(&[
            low_rank(&g("P_x"), z, &g("Q_x")),
            low_rank(&g("P_l"), z, &g("Q_l")),
            low_rank(&g("P_r"), z, &g("Q_r")),
        ]);
        w.extend(block);
        b.extend(matvec(&g("B"), z));
    }
    (w, b)
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for v in x {
        if *v > max {
            max = *v;
        }
    }
    let mut total = 0.0;
    let mut out = vec![0.0; x.len()];
    for i in 0..x.len() {
        out[i] = (x[i] - max).exp();
        total += out[i];
    }
    for v in out.iter_mut() {
        *v /= total;
    }
    out
}

pub fn cross_entropy(logits: &[f64], gold: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for v in logits {
        if *v > max {
            max = *v;
        }
    }
    let mut total = 0.0;
    for v in logits {
        total += (v - max).exp();
    }
    max + total.ln() - logits[gold]
}

/// One AdaGrad update in place.
pub fn adagrad(theta: &mut [f64], state: &mut [f64], grad: &[f64], lr: f64, l2: f64, eps: f64) {
    for i in 0..theta.len() {
        let g = grad[i] + l2 * theta[i];
        state[i] += g * g;
        theta[i] -= lr * g / (state[i].sqrt() + eps);
    }
}

/// Per-node `(h, z)` of a whole tree, post-order.
pub fn encode(store: &ParamStore, variant: Variant, sizes: Sizes, tree: &BinaryTree) -> Vec<(Vec<f64>, Option<Vec<f64>>)> {
    let d = sizes.d;
    let m = sizes.m;
    let emb = mat(store, "embed.E");
    let zd = vec![0.0; d];
    let zm = vec![0.0; m];
    // (h, c, meta_h, meta_c, z)
    let mut st: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Option<Vec<f64>>)> = Vec::new();
    for node in tree.nodes() {
        let x = emb[node.word].clone();
        let s = match (variant, node.children) {
            (Variant::Recnn, None) => {
                let h = affine(&mat(store, "leaf.W"), &x, &vecp(store, "leaf.b"))
                    .into_iter()
                    .map(f64::tanh)
                    .collect();
                (h, zd.clone(), zm.clone(), zm.clone(), None)
            }
            (Variant::Recnn, Some((l, r))) => {
                let h = recnn(&st[l].0, &st[r].0, &mat(store, "recnn.W"), &vecp(store, "recnn.b"));
                (h, zd.clone(), zm.clone(), zm.clone(), None)
            }
            (Variant::Treelstm, ch) => {
                let (xi, hl, hr, cl, cr) = match ch {
                    None => (x, zd.clone(), zd.clone(), zd.clone(), zd.clone()),
                    Some((l, r)) => (zd.clone(), st[l].0.clone(), st[r].0.clone(), st[l].1.clone(), st[r].1.clone()),
                };
                let (h, c, _) = treelstm(&xi, &hl, &hr, &cl, &cr, &mat(store, "treelstm.W"), &vecp(store, "treelstm.b"));
                (h, c, zm.clone(), zm.clone(), None)
            }
            (Variant::DcRecnn, ch) => {
                let (hl, hr, mhl, mhr) = match ch {
                    None => (zd.clone(), zd.clone(), zm.clone(), zm.clone()),
                    Some((l, r)) => (st[l].0.clone(), st[r].0.clone(), st[l].2.clone(), st[r].2.clone()),
                };
                let (mh, z) = meta_recnn(
                    &hl,
                    &hr,
                    &mhl,
                    &mhr,
                    &mat(store, "meta.W_m"),
                    &vecp(store, "meta.b_m"),
                    &mat(store, "meta.W_z"),
                );
                let h = match ch {
                    None => {
                        let (w, b) = gen_leaf(store, &z);
                        affine(&w, &x, &b).into_iter().map(f64::tanh).collect()
                    }
                    Some(_) => {
                        let (w, b) = gen_recnn(store, &z);
                        recnn(&hl, &hr, &w, &b)
                    }
                };
                (h, zd.clone(), mh, zm.clone(), Some(z))
            }
            (Variant::DcTreelstm, ch) => {
                let (xi, hl, hr, cl, cr, mhl, mhr, mcl, mcr) = match ch {
                    None => (x, zd.clone(), zd.clone(), zd.clone(), zd.clone(), zm.clone(), zm.clone(), zm.clone(), zm.clone()),
                    Some((l, r)) => (
                        zd.clone(),
                        st[l].0.clone(),
                        st[r].0.clone(),
                        st[l].1.clone(),
                        st[r].1.clone(),
                        st[l].2.clone(),
                        st[r].2.clone(),
                        st[l].3.clone(),
                        st[r].3.clone(),
                    ),
                };
                let (mh, mc, z) = meta_treelstm(
                    &xi,
                    &hl,
                    &hr,
                    &mhl,
                    &mhr,
                    &mcl,
                    &mcr,
                    &mat(store, "meta.W_m"),
                    &vecp(store, "meta.b_m"),
                    &mat(store, "meta.W_z"),
                );
                let (w, b) = gen_treelstm(store, &z);
                let (h, c, _) = treelstm(&xi, &hl, &hr, &cl, &cr, &w, &b);
                (h, c, mh, mc, Some(z))
            }
        };
        st.push(s);
    }
    st.into_iter().map(|s| (s.0, s.4)).collect()
}
