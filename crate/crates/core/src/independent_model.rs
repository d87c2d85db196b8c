//! Independent-demand baseline and its comparison with the martingale model.

use serde::Serialize;

use crate::closed_form::ClosedForm;
use crate::error::{Error, Result};
use crate::model::{DiscreteMeasure, ProblemInstance};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndReport {
    pub chi_ind: Rational,
    pub opt_ind: Rational,
    pub worst_marginal: DiscreteMeasure,
    /// `Opt_MAR / Opt_IND` from an empty start; absent when both vanish.
    pub ratio_mar_over_ind: Option<Rational>,
    /// Whether `x0 <= chi_ind`, i.e. whether `opt_ind` is the value at `x0`.
    pub x0_within_threshold: bool,
}

/// `mu <= U / (b + 1)`: the regime where holding nothing is optimal.
fn low_mean(inst: &ProblemInstance) -> bool {
    inst.mu() * &(inst.b() + &Rational::one()) <= *inst.cap()
}

pub fn ind_policy_value(inst: &ProblemInstance) -> IndReport {
    let t = Rational::from(inst.horizon());
    let (mu, u, b) = (inst.mu(), inst.cap(), inst.b());
    let chi_ind = if low_mean(inst) { Rational::zero() } else { u.clone() };
    let opt_ind = Rational::min_of(&(&t * b * mu), &(&t * &(u - mu)));
    let up = mu / u;
    let worst_marginal = DiscreteMeasure::new([(Rational::zero(), Rational::one() - &up), (u.clone(), up)])
        .expect("two-point marginal is normalized");
    let ratio_mar_over_ind = if opt_ind.is_zero() { None } else { Some(&ClosedForm::new(inst).value().opt / &opt_ind) };
    IndReport { x0_within_threshold: inst.x0() <= &chi_ind, chi_ind, opt_ind, worst_marginal, ratio_mar_over_ind }
}

/// Independent-demand value when the initial inventory is `U` (the `x0` of
/// `inst` is ignored):
/// `b mu T + U^2/mu - (b+1) U + (1 - mu/U)^T (1 + b - U/mu) U`.
/// Requires `0 < mu/U < 1/(b+1)`.
pub fn full_inventory_value(inst: &ProblemInstance) -> Result<Rational> {
    let (mu, u, b) = (inst.mu(), inst.cap(), inst.b());
    if mu.is_zero() {
        return Err(Error::Degenerate("full-inventory formula divides by mu = 0".into()));
    }
    if mu * &(b + &Rational::one()) >= *u {
        return Err(Error::Regime(format!(
            "full-inventory formula needs mu/U < 1/(b+1); got mu = {mu}, U = {u}, b = {b}"
        )));
    }
    let t = inst.horizon();
    let one = Rational::one();
    let tail = (&one - &(mu / u)).pow(t as u32) * (&one + b - u / mu) * u;
    Ok(b * mu * &Rational::from(t) + u * u / mu - &(b + &one) * u + tail)
}

/// Martingale-model value at full initial inventory, `(U - mu) T`, valid for
/// `mu <= U/(b+1)`. Computed through the closed form so it holds in general.
pub fn martingale_full_inventory_value(inst: &ProblemInstance) -> Rational {
    let full = inst.with_x0(inst.cap().clone()).expect("U is a valid initial inventory");
    ClosedForm::new(&full).value().value_at_x0
}

/// `Opt_MAR / Opt_IND` from an empty start (the `x0` of `inst` is ignored).
pub fn finite_ratio(inst: &ProblemInstance) -> Result<Rational> {
    if inst.mu().is_zero() || inst.mu() == inst.cap() {
        return Err(Error::Degenerate(format!(
            "both optimal values vanish at mu = {}; the ratio is undefined",
            inst.mu()
        )));
    }
    let rep = ind_policy_value(inst);
    Ok(rep.ratio_mar_over_ind.expect("opt_ind > 0 for 0 < mu < U"))
}
