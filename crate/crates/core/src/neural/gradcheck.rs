//! Central finite-difference verification of analytic gradients.

use super::{Gradients, ParamId, ParamStore};
use crate::{Result, Scalar};

pub const FD_STEP: f64 = 1e-5;
/// Magnitudes below this are compared absolutely rather than relatively.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub elements: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tolerance
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "{:<48} n={:<6} max_rel_err={:.3e} max_abs_err={:.3e}",
                p.name, p.elements, p.max_rel_err, p.max_abs_err
            )?;
        }
        write!(
            f,
            "max_rel_err={:.3e} tolerance={:.1e} {}",
            self.max_rel_err(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares `f`'s analytic gradients with central differences (step `1e-5`) on every
/// element of every parameter in `store`.
///
/// `f` evaluates a scalar loss and its gradients at the store's current values.
pub fn grad_check<S, F>(store: &mut ParamStore<S>, f: F, tolerance: f64) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&ParamStore<S>) -> Result<(S, Gradients<S>)>,
{
    let ids: Vec<ParamId> = store.ids().collect();
    grad_check_params(store, &ids, f, tolerance)
}

pub fn grad_check_params<S, F>(
    store: &mut ParamStore<S>,
    ids: &[ParamId],
    f: F,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&ParamStore<S>) -> Result<(S, Gradients<S>)>,
{
    let (_, analytic) = f(store)?;
    let h = S::of(FD_STEP);
    let mut params = Vec::with_capacity(ids.len());
    for &id in ids {
        let n = store.value(id).len();
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for k in 0..n {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + h;
            let (plus, _) = f(store)?;
            store.value_mut(id).data_mut()[k] = orig - h;
            let (minus, _) = f(store)?;
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus).to_f64_lossy() / (2.0 * FD_STEP);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[k].to_f64_lossy());
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        params.push(ParamCheck {
            name: store.name(id).to_string(),
            elements: n,
            max_rel_err: max_rel,
            max_abs_err: max_abs,
        });
    }
    Ok(GradCheckReport { tolerance, params })
}
