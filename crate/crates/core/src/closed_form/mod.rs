//! Closed-form minimax objects for the martingale model: indices, the
//! piecewise value functions, the optimal order-up-to policy and the
//! worst-case conditional demand law.
//!
//! Horizons are counted in periods remaining. Arguments named `x` are
//! order-up-to levels and `mu`/`d` are conditional means (the previous
//! period's demand); all of them must lie in `[0, U]`.

mod thresholds;

use serde::Serialize;

pub use thresholds::{build_thresholds, ThresholdTable};

use crate::error::{Error, Result};
use crate::model::{stage_cost, DiscreteMeasure, ProblemInstance};
use crate::rational::Rational;

/// Evaluator for one instance. Owns the lazily built threshold table, so it
/// can be shared between threads and reused across many queries.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    inst: ProblemInstance,
    table: ThresholdTable,
}

/// Index and region constants at a given `(s, x, mu)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegionIndex {
    pub gamma: usize,
    pub upsilon: usize,
    pub z_cross: Rational,
    pub zeta: usize,
    pub aleph: Rational,
    #[serde(rename = "calA")]
    pub cal_a: Rational,
    pub alphax: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolicyReport {
    pub chi: Rational,
    pub opt: Rational,
    pub value_at_x0: Rational,
    pub first_order_level: Rational,
    /// Reachable demand ladder `D_1, ..., D_Lambda` of the worst-case chain.
    pub support_points: Vec<Rational>,
}

impl ClosedForm {
    pub fn new(inst: &ProblemInstance) -> Self {
        ClosedForm { inst: inst.clone(), table: ThresholdTable::for_instance(inst) }
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.inst
    }

    pub fn table(&self) -> &ThresholdTable {
        &self.table
    }

    fn u(&self) -> &Rational {
        self.inst.cap()
    }

    fn b(&self) -> &Rational {
        self.inst.b()
    }

    pub fn gamma(&self, s: usize, mu: &Rational) -> usize {
        self.table.gamma(s, mu)
    }

    pub fn upsilon(&self, s: usize, x: &Rational) -> usize {
        self.table.upsilon(s, x)
    }

    /// `chi^s(d) = B^s_{Gamma^s_d}`, the order-up-to target with `s` periods left.
    pub fn chi_mar(&self, s: usize, d: &Rational) -> Rational {
        self.table.beta(s, d)
    }

    /// `F^t_j(x, mu) = -b x + (b + t) B^t_{j+1} + (t b - (b + 1)(j + 1)) mu`.
    pub fn piece_f(&self, t: usize, j: isize, x: &Rational, mu: &Rational) -> Rational {
        let b = self.b();
        let tr = Rational::from(t);
        let jp1 = Rational::from_int(j as i64 + 1);
        let slope_mu = &tr * b - &(b + &Rational::one()) * &jp1;
        -(b * x) + &(b + &tr) * self.table.b_at(t, j + 1) + slope_mu * mu
    }

    /// `G^t_j(x, mu) = (t - (b + t) mu / A^t_j) x + (t - j) b mu`.
    pub fn piece_g(&self, t: usize, j: usize, x: &Rational, mu: &Rational) -> Rational {
        let b = self.b();
        let tr = Rational::from(t);
        let a = self.table.a(t, j as isize);
        let slope = &tr - &(&(b + &tr) * mu / a);
        slope * x + Rational::from(t - j) * b * mu
    }

    /// `Fbar^t_j(x, d) = t x + ((b - 1) t - b j - (b + t) x / A^t_j) d + (b + t) d^2 / A^t_j`.
    pub fn piece_fbar(&self, t: usize, j: usize, x: &Rational, d: &Rational) -> Rational {
        let b = self.b();
        let tr = Rational::from(t);
        let a = self.table.a(t, j as isize);
        let k = &(b + &tr) / a;
        let lin = &(b - &Rational::one()) * &tr - b * &Rational::from(j) - &k * x;
        &tr * x + lin * d + k * d * d
    }

    /// `Gbar^t_j(d) = t B^t_{j+1} + (t b - (b + 1)(j + 1)) d`.
    pub fn piece_gbar(&self, t: usize, j: isize, d: &Rational) -> Rational {
        let b = self.b();
        let tr = Rational::from(t);
        let jp1 = Rational::from_int(j as i64 + 1);
        &tr * self.table.b_at(t, j + 1) + (&tr * b - &(b + &Rational::one()) * &jp1) * d
    }

    /// `g^s(x, mu)`: worst-case expected cost-to-go with `s` periods left after
    /// ordering up to `x` under conditional mean `mu`.
    pub fn g_frak(&self, s: usize, x: &Rational, mu: &Rational) -> Rational {
        assert!(s >= 1);
        let jm = self.table.gamma(s - 1, mu);
        if x < self.table.b_at(s, jm as isize) {
            self.piece_f(s, jm as isize - 1, x, mu)
        } else {
            self.piece_g(s, self.table.upsilon(s - 1, x), x, mu)
        }
    }

    /// `gbar^s(x, d) = g^s(max(beta^s_d, x - d), d)`: optimal cost-to-go when
    /// inventory `x` meets demand `d` and `s` periods remain.
    pub fn g_bar(&self, s: usize, x: &Rational, d: &Rational) -> Rational {
        let beta = self.table.beta(s, d);
        let carried = x - d;
        self.g_frak(s, &Rational::max_of(&beta, &carried), d)
    }

    /// The explicit piecewise form of [`ClosedForm::g_bar`], kept as an
    /// independent evaluation path.
    pub fn g_bar_piecewise(&self, s: usize, x: &Rational, d: &Rational) -> Rational {
        let z = self.z_cross(s, x);
        if d < &z {
            let j = self.table.upsilon(s - 1, &(x - d));
            self.piece_fbar(s, j, x, d)
        } else {
            let j = self.table.gamma(s, d) as isize - 1;
            self.piece_gbar(s, j, d)
        }
    }

    /// `f^s(x, d) = C(x, d) + gbar^{s-1}(x, d)`, the integrand of the inner
    /// supremum with `s` periods left.
    pub fn f_frak(&self, s: usize, x: &Rational, d: &Rational) -> Result<Rational> {
        if s < 2 {
            return Err(Error::OutOfRange {
                what: "periods remaining for f",
                value: s.to_string(),
                range: "[2, T]".into(),
            });
        }
        Ok(stage_cost(x, d, self.b()) + self.g_bar(s - 1, x, d))
    }

    /// `z^s_x = inf { d >= 0 : beta^s_d >= x - d }`.
    ///
    /// `beta^s` equals `B^s_j` on `(A^{s+1}_{j-1}, A^{s+1}_j]` (closed at 0 for
    /// `j = 0`); the scan returns the infimum even when it sits on an open
    /// segment end.
    pub fn z_cross(&self, s: usize, x: &Rational) -> Rational {
        for j in 0..=s as isize {
            let lo = self.table.a(s + 1, j - 1);
            let hi = self.table.a(s + 1, j);
            let c = Rational::max_of(&(x - self.table.b_at(s, j)), lo);
            if &c <= hi {
                return c;
            }
        }
        unreachable!("segment j = s always contains the crossing")
    }

    /// Region constants. Requires `s >= 2` because `calA` reads `z^{s-1}`.
    pub fn region_index(&self, s: usize, x: &Rational, mu: &Rational) -> Result<RegionIndex> {
        if s < 2 {
            return Err(Error::OutOfRange {
                what: "periods remaining for region constants",
                value: s.to_string(),
                range: "[2, T]".into(),
            });
        }
        let z = self.z_cross(s, x);
        let zeta = self.table.gamma(s, &z);
        let z_prev = self.z_cross(s - 1, x);
        let zeta_prev = self.table.gamma(s - 1, &z_prev);
        Ok(RegionIndex {
            gamma: self.table.gamma(s, mu),
            upsilon: self.table.upsilon(s, x),
            z_cross: z,
            zeta,
            aleph: self.table.a(s, self.table.upsilon(s - 1, x) as isize).clone(),
            cal_a: self.table.a(s, zeta_prev as isize).clone(),
            alphax: self.table.a(s, self.table.gamma(s - 1, x) as isize).clone(),
        })
    }

    /// `q^s_{x,mu}`: the worst-case law of the next demand given order level
    /// `x`, conditional mean `mu` and `s` periods left (including this one).
    pub fn worst_case_measure(&self, s: usize, x: &Rational, mu: &Rational) -> DiscreteMeasure {
        let u = self.u();
        let built = if mu.is_zero() || x >= u {
            DiscreteMeasure::two_point(&Rational::zero(), u, mu)
        } else {
            let jm = self.table.gamma(s - 1, mu) as isize;
            if x < self.table.b_at(s, jm) {
                DiscreteMeasure::two_point(self.table.a(s, jm - 1), self.table.a(s, jm), mu)
            } else {
                let k = self.table.upsilon(s - 1, x) as isize;
                DiscreteMeasure::two_point(&Rational::zero(), self.table.a(s, k), mu)
            }
        };
        built.expect("worst-case atoms bracket the conditional mean")
    }

    /// `max(clamp(y, 0, U), chi^s(prev_d))`.
    pub fn policy_order_level(&self, s: usize, y: &Rational, prev_d: &Rational) -> Rational {
        let clamped = Rational::min_of(&y.pos_part(), self.u());
        Rational::max_of(&clamped, &self.chi_mar(s, prev_d))
    }

    /// `Opt^T` through the single affine piece active at the optimum,
    /// `Gamma A^{T+1}_Gamma + (T b - (b + 1) Gamma) mu`.
    pub fn opt_direct(&self) -> Rational {
        let t = self.inst.horizon();
        let mu = self.inst.mu();
        let b = self.b();
        let g = self.table.gamma(t, mu);
        let gr = Rational::from(g);
        &gr * self.table.a(t + 1, g as isize) + (Rational::from(t) * b - &(b + &Rational::one()) * &gr) * mu
    }

    /// Demand ladder `D_0 = mu, D_1, ..., D_Lambda = U` of the worst-case chain
    /// started below the threshold. Only row `T + 1` of the table is touched.
    pub fn demand_ladder(&self) -> (usize, Vec<Rational>) {
        let t = self.inst.horizon();
        let b = self.b();
        let g = self.table.gamma(t, self.inst.mu());
        let lambda = t.saturating_sub(g).max(1);
        let mut d = vec![Rational::zero(); lambda + 1];
        d[0] = self.inst.mu().clone();
        d[lambda] = self.u().clone();
        // D_t = D_{t+1} (T - t) / (b + T - t)
        for step in (1..lambda).rev() {
            let k = Rational::from(t - step);
            d[step] = &d[step + 1] * &k / &(b + &k);
        }
        (g, d)
    }

    pub fn value(&self) -> PolicyReport {
        let t = self.inst.horizon();
        let mu = self.inst.mu();
        let chi = self.chi_mar(t, mu);
        let opt = self.g_frak(t, &chi, mu);
        let start = Rational::max_of(&chi, self.inst.x0());
        let value_at_x0 = self.g_frak(t, &start, mu);
        let (_, ladder) = self.demand_ladder();
        PolicyReport { chi, opt, value_at_x0, first_order_level: start, support_points: ladder[1..].to_vec() }
    }
}

/// Convenience wrapper for a one-off evaluation.
pub fn value(inst: &ProblemInstance) -> PolicyReport {
    ClosedForm::new(inst).value()
}
