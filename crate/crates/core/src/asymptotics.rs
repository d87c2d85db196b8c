//! Large-horizon limits of the worst-case chain and of the value ratio, and
//! diagnostics measuring how fast finite horizons approach them.
//!
//! Limits involve `gamma^(1/b)`, which is irrational in general, so this
//! module works in `f64`. Finite-horizon inputs are computed exactly and
//! converted at the end.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::closed_form::ClosedForm;
use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::rational::Rational;
use crate::worst_case_sim::{stopping_law, ChainSchedule};

/// Instance data relevant to the limits. The regime test `mu <= U/(b+1)` is
/// done on the exact values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitParams {
    pub mu: f64,
    pub cap: f64,
    pub b: f64,
    low_mean: bool,
}

impl LimitParams {
    pub fn new(mu: &Rational, cap: &Rational, b: &Rational) -> Result<Self> {
        if !mu.is_positive() || mu > cap || !b.is_positive() {
            return Err(Error::OutOfRange {
                what: "mu for the limit law",
                value: mu.to_string(),
                range: format!("(0, {cap}] with b > 0"),
            });
        }
        Ok(LimitParams {
            mu: mu.to_f64(),
            cap: cap.to_f64(),
            b: b.to_f64(),
            low_mean: mu * &(b + &Rational::one()) <= *cap,
        })
    }

    pub fn from_instance(inst: &ProblemInstance) -> Result<Self> {
        Self::new(inst.mu(), inst.cap(), inst.b())
    }

    pub fn gamma(&self) -> f64 {
        self.mu / self.cap
    }

    pub fn law(&self) -> LimitLaw {
        let gamma = self.gamma();
        LimitLaw { gamma, lambda_inf: 1.0 - gamma.powf(1.0 / self.b), atom: gamma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitLaw {
    pub gamma: f64,
    pub lambda_inf: f64,
    pub atom: f64,
}

/// `(D_alpha, X_alpha) = (mu (1-alpha)^-b, mu gamma^(1/b) (1-alpha)^-(b+1))`
/// for `alpha in [0, Lambda]`.
pub fn limit_paths(p: &LimitParams, alpha: f64) -> Result<(f64, f64)> {
    let law = p.law();
    if !(0.0..=law.lambda_inf).contains(&alpha) {
        return Err(Error::OutOfRange {
            what: "alpha",
            value: alpha.to_string(),
            range: format!("[0, {}]", law.lambda_inf),
        });
    }
    let rest = 1.0 - alpha;
    let d = p.mu * rest.powf(-p.b);
    let x = p.mu * p.gamma().powf(1.0 / p.b) * rest.powf(-(p.b + 1.0));
    Ok((d, x))
}

/// CDF of the limiting stopping time: `1 - (1-alpha)^b` below `Lambda`, then 1.
pub fn z_inf_cdf(p: &LimitParams, alpha: f64) -> f64 {
    let law = p.law();
    if alpha < 0.0 {
        0.0
    } else if alpha < law.lambda_inf {
        1.0 - (1.0 - alpha).powf(p.b)
    } else {
        1.0
    }
}

/// Left limit of [`z_inf_cdf`].
fn z_inf_cdf_left(p: &LimitParams, alpha: f64) -> f64 {
    let law = p.law();
    if alpha <= 0.0 {
        0.0
    } else if alpha <= law.lambda_inf {
        1.0 - (1.0 - alpha).powf(p.b)
    } else {
        1.0
    }
}

/// Density `b (1-alpha)^(b-1)` of the continuous part.
pub fn z_inf_density(p: &LimitParams, alpha: f64) -> f64 {
    p.b * (1.0 - alpha).powf(p.b - 1.0)
}

/// Limit of `Opt_MAR / Opt_IND` as the horizon grows.
pub fn ratio_limit(p: &LimitParams) -> Result<f64> {
    if p.mu >= p.cap {
        return Err(Error::OutOfRange {
            what: "mu for the ratio limit",
            value: p.mu.to_string(),
            range: format!("(0, {})", p.cap),
        });
    }
    let base = 1.0 - p.gamma().powf(1.0 / p.b);
    Ok(if p.low_mean { base } else { base * p.b * p.mu / (p.cap - p.mu) })
}

/// Large-`b` limit `ln(1/gamma) / (1/gamma - 1)`, for `0 < gamma < 1`.
pub fn large_b_ratio_limit(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::OutOfRange { what: "gamma", value: gamma.to_string(), range: "(0, 1)".into() });
    }
    Ok(-gamma.ln() / (1.0 / gamma - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceEntry {
    pub horizon: usize,
    pub sup_dx: f64,
    pub sup_dd: f64,
    pub sup_dz: f64,
    /// `sup_dz` without the first atom, which also carries the gap between
    /// `mu` and the threshold grid and does not settle on the limit density.
    pub sup_dz_interior: f64,
    pub gamma_frac: f64,
    pub lambda_frac: f64,
    pub ks: f64,
}

/// Distances between the horizon-`T` chain and its limit for each horizon.
///
/// Path discrepancies are taken over `t in [1, Lambda_T]` with `alpha = t/T`
/// capped at the limit's absorption time, since the limit paths end there.
pub fn convergence_report(base: &ProblemInstance, horizons: &[usize]) -> Result<Vec<ConvergenceEntry>> {
    let p = LimitParams::from_instance(base)?;
    if base.mu() == base.cap() {
        return Err(Error::OutOfRange {
            what: "mu for convergence diagnostics",
            value: base.mu().to_string(),
            range: format!("(0, {})", base.cap()),
        });
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInstance("horizons must be strictly ascending".into()));
    }
    horizons.par_iter().map(|&t| convergence_entry(base, &p, t)).collect()
}

fn convergence_entry(base: &ProblemInstance, p: &LimitParams, t: usize) -> Result<ConvergenceEntry> {
    let inst = base.with_horizon(t)?.with_x0(Rational::zero())?;
    let sched = ChainSchedule::from_closed_form(&ClosedForm::new(&inst));
    let law = stopping_law(&sched, inst.cap())?;
    let lim = p.law();
    let tf = t as f64;
    let lam = sched.lambda;

    let (mut sup_dx, mut sup_dd) = (0.0f64, 0.0f64);
    for step in 1..=lam {
        let alpha = (step as f64 / tf).min(lim.lambda_inf);
        let (d_inf, x_inf) = limit_paths(p, alpha)?;
        sup_dd = sup_dd.max((sched.d[step].to_f64() - d_inf).abs());
        sup_dx = sup_dx.max((sched.x[step].to_f64() - x_inf).abs());
    }

    let masses: Vec<f64> = (1..=lam).map(|k| law.z_mass(k).to_f64()).collect();
    let dz = |k: usize| (tf * masses[k - 1] - z_inf_density(p, k as f64 / tf)).abs();
    let sup_dz_interior = (2..lam).map(dz).fold(0.0, f64::max);
    let sup_dz = if lam > 1 { sup_dz_interior.max(dz(1)) } else { 0.0 };

    // Kolmogorov distance: both CDFs are monotone, so the supremum is reached
    // at an atom of Z_T / T or at the limit's atom, from one side or the other.
    let atoms: Vec<f64> = (1..=lam).map(|k| k as f64 / tf).collect();
    let cdf_t = |a: f64, left: bool| -> f64 {
        atoms.iter().zip(&masses).filter(|(x, _)| if left { **x < a } else { **x <= a }).map(|(_, m)| m).sum()
    };
    let mut ks = 0.0f64;
    for &c in atoms.iter().chain(std::iter::once(&lim.lambda_inf)) {
        ks = ks.max((cdf_t(c, false) - z_inf_cdf(p, c)).abs());
        ks = ks.max((cdf_t(c, true) - z_inf_cdf_left(p, c)).abs());
    }

    Ok(ConvergenceEntry {
        horizon: t,
        sup_dx,
        sup_dd,
        sup_dz,
        sup_dz_interior,
        gamma_frac: sched.gamma as f64 / tf,
        lambda_frac: lam as f64 / tf,
        ks,
    })
}

/// Writes `alpha,d_t,d_inf,x_t,x_inf` for `t in [1, Lambda_T]`.
pub fn write_paths_csv<W: Write>(w: W, base: &ProblemInstance, horizon: usize) -> Result<()> {
    let p = LimitParams::from_instance(base)?;
    let inst = base.with_horizon(horizon)?.with_x0(Rational::zero())?;
    let sched = ChainSchedule::from_closed_form(&ClosedForm::new(&inst));
    let lim = p.law();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["alpha", "d_t", "d_inf", "x_t", "x_inf"])?;
    for step in 1..=sched.lambda {
        let alpha = step as f64 / horizon as f64;
        let (d_inf, x_inf) = limit_paths(&p, alpha.min(lim.lambda_inf))?;
        out.write_record([
            alpha.to_string(),
            sched.d[step].to_f64().to_string(),
            d_inf.to_string(),
            sched.x[step].to_f64().to_string(),
            x_inf.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn params(mu: Rational, b: Rational) -> LimitParams {
        LimitParams::new(&mu, &q(1, 1), &b).unwrap()
    }

    #[test]
    fn limit_path_examples() {
        let p = params(q(1, 2), q(1, 1));
        let (d, x) = limit_paths(&p, 0.5).unwrap();
        assert!((d - 1.0).abs() < 1e-12 && (x - 1.0).abs() < 1e-12);
        let (d, x) = limit_paths(&p, 0.0).unwrap();
        assert!((d - 0.5).abs() < 1e-12 && (x - 0.25).abs() < 1e-12);
        let (d, x) = limit_paths(&p, 0.25).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-12 && (x - 4.0 / 9.0).abs() < 1e-12);
        assert!(limit_paths(&p, 0.6).is_err());
        assert!(limit_paths(&p, -0.1).is_err());
    }

    #[test]
    fn cdf_examples() {
        let p = params(q(1, 2), q(1, 1));
        assert!((z_inf_cdf(&p, 0.25) - 0.25).abs() < 1e-12);
        assert_eq!(z_inf_cdf(&p, 0.5), 1.0);
        assert_eq!(z_inf_cdf(&p, 0.0), 0.0);
        // continuous part carries 1 - gamma
        let p = params(q(1, 4), q(2, 1));
        assert!((z_inf_cdf_left(&p, p.law().lambda_inf) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ratio_limit_examples() {
        assert!((ratio_limit(&params(q(1, 2), q(1, 1))).unwrap() - 0.5).abs() < 1e-12);
        assert!((ratio_limit(&params(q(3, 4), q(1, 1))).unwrap() - 0.75).abs() < 1e-12);
        let edge = ratio_limit(&params(q(1, 3), q(2, 1))).unwrap();
        let above = (1.0 - (1.0f64 / 3.0).sqrt()) * 2.0 * (1.0 / 3.0) / (2.0 / 3.0);
        assert!((edge - above).abs() < 1e-12);
        assert!(ratio_limit(&params(q(1, 1), q(1, 1))).is_err());
        assert!(LimitParams::new(&q(0, 1), &q(1, 1), &q(1, 1)).is_err());
    }

    #[test]
    fn large_b_examples() {
        assert!((large_b_ratio_limit(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let e = std::f64::consts::E;
        assert!((large_b_ratio_limit(1.0 / e).unwrap() - 1.0 / (e - 1.0)).abs() < 1e-12);
        assert!((large_b_ratio_limit(1.0 - 1e-9).unwrap() - 1.0).abs() < 1e-6);
        assert!(large_b_ratio_limit(0.0).is_err());
        assert!(large_b_ratio_limit(1.0).is_err());
    }

    #[test]
    fn report_shrinks_for_unit_instance() {
        let base = ProblemInstance::new(q(1, 2), q(1, 1), q(1, 1), 1, q(0, 1)).unwrap();
        let r = convergence_report(&base, &[100, 400, 1600]).unwrap();
        assert!(r[0].sup_dd > r[1].sup_dd && r[1].sup_dd > r[2].sup_dd);
        assert!((r[2].gamma_frac - 0.5).abs() < 1e-3);
        assert!((r[2].lambda_frac - 0.5).abs() < 1e-3);
        assert!(convergence_report(&base, &[400, 100]).is_err());
    }
}
