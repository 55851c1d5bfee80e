//! Task heads over root representations.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::composers::ParamSpec;
use crate::error::{Error, Result, TensorError};
use crate::params::{ParamId, ParamSlot, ParamStore};
use crate::tape::{NodeId, Tape};
use crate::tensor::{softmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Match,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Match => "match",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(Task::Classify),
            "match" => Ok(Task::Match),
            _ => Err(Error::Config(format!("unknown task {s:?}"))),
        }
    }
}

/// Softmax classifier `W_t: C×d`, `b_t: C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T> {
    pub w: T,
    pub b: T,
}

/// Matching MLP: one tanh hidden layer of width `p` over the merged pair
/// features, then a 3-way output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Matcher<T> {
    pub w_h: T,
    pub b_h: T,
    pub w_o: T,
    pub b_o: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head<T> {
    Classifier(Classifier<T>),
    Matcher(Matcher<T>),
}

/// Number of matching classes (entailment, contradiction, neutral).
pub const MATCH_CLASSES: usize = 3;

/// Head parameters: `clf.W`, `clf.b` for classification; `match.W_h`,
/// `match.b_h`, `match.W_o`, `match.b_o` for matching. With `rich_merge` the
/// matcher input is `[h_a; h_b; |h_a - h_b|; h_a ⊙ h_b]` instead of
/// `[h_a; h_b]`.
pub fn head_layout(task: Task, d: usize, classes: usize, hidden: usize, rich_merge: bool) -> Vec<ParamSpec> {
    match task {
        Task::Classify => vec![
            ParamSpec::new("clf.W", classes, d),
            ParamSpec::new("clf.b", classes, 1),
        ],
        Task::Match => {
            let input = if rich_merge { 4 * d } else { 2 * d };
            vec![
                ParamSpec::new("match.W_h", hidden, input),
                ParamSpec::new("match.b_h", hidden, 1),
                ParamSpec::new("match.W_o", MATCH_CLASSES, hidden),
                ParamSpec::new("match.b_o", MATCH_CLASSES, 1),
            ]
        }
    }
}

impl Head<ParamId> {
    pub fn resolve(store: &ParamStore, task: Task, d: usize, classes: usize, hidden: usize, rich_merge: bool) -> Result<Self> {
        let specs = head_layout(task, d, classes, hidden, rich_merge);
        let ids = specs
            .iter()
            .map(|s| store.id_with_shape(&s.name, s.rows, s.cols))
            .collect::<Result<Vec<_>>>()?;
        Ok(match task {
            Task::Classify => Head::Classifier(Classifier { w: ids[0], b: ids[1] }),
            Task::Match => Head::Matcher(Matcher {
                w_h: ids[0],
                b_h: ids[1],
                w_o: ids[2],
                b_o: ids[3],
            }),
        })
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Result<Head<NodeId>> {
        let mut b = |id: &ParamId| tape.bind(store, ParamSlot::Whole(*id));
        Ok(match self {
            Head::Classifier(c) => Head::Classifier(Classifier { w: b(&c.w)?, b: b(&c.b)? }),
            Head::Matcher(m) => Head::Matcher(Matcher {
                w_h: b(&m.w_h)?,
                b_h: b(&m.b_h)?,
                w_o: b(&m.w_o)?,
                b_o: b(&m.b_o)?,
            }),
        })
    }
}

/// Classifier logits `W_t h_R + b_t`.
pub fn classify_logits(tape: &mut Tape, root_h: NodeId, clf: &Classifier<NodeId>) -> Result<NodeId, TensorError> {
    let l = tape.matmul(clf.w, root_h)?;
    tape.add(l, clf.b)
}

/// `softmax(W_t h_R + b_t)`.
pub fn classify(root_h: &Tensor, clf: &Classifier<Tensor>) -> Result<Tensor, TensorError> {
    let logits = clf.w.matmul(root_h)?.add(&clf.b)?;
    Ok(softmax(&logits))
}

/// Matcher logits over the merged pair representation.
pub fn match_logits(
    tape: &mut Tape,
    h_a: NodeId,
    h_b: NodeId,
    matcher: &Matcher<NodeId>,
    rich_merge: bool,
) -> Result<NodeId, TensorError> {
    let merged = if rich_merge {
        let diff = tape.sub(h_a, h_b)?;
        // |x| = x ⊙ sign(x), with the sign held constant.
        let sign = tape.value(diff).map(|v| if v < 0.0 { -1.0 } else { 1.0 });
        let sign = tape.constant(sign);
        let abs = tape.mul(diff, sign)?;
        let prod = tape.mul(h_a, h_b)?;
        tape.concat_rows(&[h_a, h_b, abs, prod])?
    } else {
        tape.concat_rows(&[h_a, h_b])?
    };
    let hidden = tape.matmul(matcher.w_h, merged)?;
    let hidden = tape.add(hidden, matcher.b_h)?;
    let hidden = tape.tanh(hidden)?;
    let out = tape.matmul(matcher.w_o, hidden)?;
    tape.add(out, matcher.b_o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_classifier_is_uniform() {
        let clf = Classifier {
            w: Tensor::zeros(3, 4),
            b: Tensor::zeros(3, 1),
        };
        let p = classify(&Tensor::vector(&[0.1, 0.2, 0.3, 0.4]), &clf).unwrap();
        for v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_bias() {
        let clf = Classifier {
            w: Tensor::zeros(2, 2),
            b: Tensor::vector(&[10.0, -10.0]),
        };
        let p = classify(&Tensor::vector(&[1.0, 1.0]), &clf).unwrap();
        assert!((p.data()[1] - 2.06e-9).abs() < 1e-11);
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matcher_is_uniform() {
        let mut tape = Tape::new();
        let ha = tape.constant(Tensor::vector(&[0.5, -0.5]));
        let hb = tape.constant(Tensor::vector(&[0.2, 0.1]));
        for rich in [false, true] {
            let input = if rich { 8 } else { 4 };
            let m = Matcher {
                w_h: tape.constant(Tensor::zeros(4, input)),
                b_h: tape.constant(Tensor::zeros(4, 1)),
                w_o: tape.constant(Tensor::zeros(3, 4)),
                b_o: tape.constant(Tensor::zeros(3, 1)),
            };
            let l = match_logits(&mut tape, ha, hb, &m, rich).unwrap();
            let p = softmax(tape.value(l));
            for v in p.data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn task_names() {
        assert_eq!("match".parse::<Task>().unwrap(), Task::Match);
        assert!("regress".parse::<Task>().is_err());
    }
}
