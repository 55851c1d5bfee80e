//! Central finite-difference oracle for analytic gradients.

use crate::error::{Error, Result};
use crate::params::{ParamGrads, ParamStore};

/// Finite-difference comparison of one named parameter.
///
/// `rel_error` compares the whole group at once,
/// `‖a - n‖ / max(‖a‖, ‖n‖, 1e-8)` in the Euclidean norm, and decides
/// pass/fail. `max_entry_error` is the worst [`relative_error`] over single
/// entries; entries whose gradient is near the round-off floor of the
/// difference quotient (around `1e-7` at `eps = 1e-5`) can push it up on
/// their own, so it is reported but not used as the verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub entries: usize,
    pub rel_error: f64,
    pub max_entry_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    /// Worst group-level error.
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_error).fold(0.0, f64::max)
    }

    /// Worst single-entry error over all groups.
    pub fn max_entry_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_entry_error)
            .fold(0.0, f64::max)
    }

    /// Groups whose group-level error is at or above `tol` (or NaN).
    pub fn failures(&self, tol: f64) -> Vec<&GroupError> {
        self.groups.iter().filter(|g| !(g.rel_error < tol)).collect()
    }

    /// Folds another report in, keeping the worst error per group.
    pub fn merge(&mut self, other: &GradCheckReport) {
        for g in &other.groups {
            match self.groups.iter_mut().find(|s| s.name == g.name) {
                Some(s) => {
                    s.entries += g.entries;
                    s.rel_error = worse(s.rel_error, g.rel_error);
                    s.max_entry_error = worse(s.max_entry_error, g.max_entry_error);
                }
                None => self.groups.push(g.clone()),
            }
        }
    }
}

fn worse(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::INFINITY
    } else {
        a.max(b)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against `(f(θ+eps) - f(θ-eps)) / 2eps` for every scalar
/// entry of every parameter in `params`.
///
/// `f` is evaluated twice at the unperturbed point first; if the two values
/// differ the oracle is meaningless and [`Error::NonDeterministic`] is
/// returned.
pub fn finite_diff_check<F>(
    f: F,
    params: &ParamStore,
    analytic: &ParamGrads,
    eps: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let first = f(params)?;
    let second = f(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut work = params.clone();
    let mut groups = Vec::with_capacity(params.len());
    for (id, param) in params.iter() {
        let (rows, cols) = param.value.shape();
        let mut worst = 0.0f64;
        let (mut diff_sq, mut a_sq, mut n_sq) = (0.0, 0.0, 0.0);
        for r in 0..rows {
            for c in 0..cols {
                let orig = param.value.get(r, c);
                work.get_mut(id).set(r, c, orig + eps);
                let plus = f(&work)?;
                work.get_mut(id).set(r, c, orig - eps);
                let minus = f(&work)?;
                work.get_mut(id).set(r, c, orig);
                let numeric = (plus - minus) / (2.0 * eps);
                let a = analytic.entry(id, r, c);
                // NaN must register as a failure.
                worst = worse(worst, relative_error(a, numeric));
                diff_sq += (a - numeric) * (a - numeric);
                a_sq += a * a;
                n_sq += numeric * numeric;
            }
        }
        let group = diff_sq.sqrt() / a_sq.sqrt().max(n_sq.sqrt()).max(1e-8);
        groups.push(GroupError {
            name: param.name.clone(),
            entries: rows * cols,
            rel_error: worse(0.0, group),
            max_entry_error: worst,
        });
    }
    Ok(GradCheckReport { groups })
}
