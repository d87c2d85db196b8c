//! Problem instances, finite measures, trajectories and the one-period cost.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// Primitives of one newsvendor instance. Holding cost is normalized to one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct ProblemInstance {
    mu: Rational,
    cap: Rational,
    b: Rational,
    horizon: usize,
    x0: Rational,
}

#[derive(Deserialize)]
struct RawInstance {
    mu: Rational,
    cap: Rational,
    b: Rational,
    horizon: usize,
    x0: Rational,
}

impl TryFrom<RawInstance> for ProblemInstance {
    type Error = Error;
    fn try_from(r: RawInstance) -> Result<Self> {
        ProblemInstance::new(r.mu, r.cap, r.b, r.horizon, r.x0)
    }
}

impl ProblemInstance {
    /// Validates `0 <= mu <= cap`, `0 <= x0 <= cap`, `cap > 0`, `b > 0`,
    /// `horizon >= 1`.
    pub fn new(mu: Rational, cap: Rational, b: Rational, horizon: usize, x0: Rational) -> Result<Self> {
        if !cap.is_positive() {
            return Err(Error::InvalidInstance(format!("cap U = {cap} must be > 0")));
        }
        if !b.is_positive() {
            return Err(Error::InvalidInstance(format!("b = {b} must be > 0")));
        }
        if horizon == 0 {
            return Err(Error::InvalidInstance("horizon T must be >= 1".into()));
        }
        if mu.is_negative() || mu > cap {
            return Err(Error::InvalidInstance(format!("mean mu = {mu} must lie in [0, U = {cap}]")));
        }
        if x0.is_negative() || x0 > cap {
            return Err(Error::InvalidInstance(format!("initial inventory x0 = {x0} must lie in [0, U = {cap}]")));
        }
        Ok(ProblemInstance { mu, cap, b, horizon, x0 })
    }

    pub fn mu(&self) -> &Rational {
        &self.mu
    }

    pub fn cap(&self) -> &Rational {
        &self.cap
    }

    pub fn b(&self) -> &Rational {
        &self.b
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn x0(&self) -> &Rational {
        &self.x0
    }

    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(self.mu.clone(), self.cap.clone(), self.b.clone(), horizon, self.x0.clone())
    }

    pub fn with_x0(&self, x0: Rational) -> Result<Self> {
        Self::new(self.mu.clone(), self.cap.clone(), self.b.clone(), self.horizon, x0)
    }

    pub fn with_mu(&self, mu: Rational) -> Result<Self> {
        Self::new(mu, self.cap.clone(), self.b.clone(), self.horizon, self.x0.clone())
    }

    pub(crate) fn check_in_cap(&self, what: &'static str, v: &Rational) -> Result<()> {
        if v.is_negative() || v > &self.cap {
            return Err(Error::OutOfRange { what, value: v.to_string(), range: format!("[0, {}]", self.cap) });
        }
        Ok(())
    }
}

/// One-period cost `b (d - x)_+ + (x - d)_+`.
pub fn stage_cost(x: &Rational, d: &Rational, b: &Rational) -> Rational {
    if d > x {
        b * (d - x)
    } else {
        x - d
    }
}

/// A finitely supported probability measure on the rationals.
///
/// Atoms are kept sorted by point, with duplicate points merged and
/// zero-mass atoms dropped; masses sum to exactly one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DiscreteMeasure {
    atoms: Vec<(Rational, Rational)>,
}

impl DiscreteMeasure {
    pub fn new<I>(atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Rational, Rational)>,
    {
        let mut merged: BTreeMap<Rational, Rational> = BTreeMap::new();
        for (p, m) in atoms {
            if m.is_negative() {
                return Err(Error::InvalidMeasure(format!("negative mass {m} at {p}")));
            }
            if m.is_zero() {
                continue;
            }
            *merged.entry(p).or_insert_with(Rational::zero) += m;
        }
        let total: Rational = merged.values().sum();
        if total != Rational::one() {
            return Err(Error::InvalidMeasure(format!("masses sum to {total}, not 1")));
        }
        if let Some(m) = merged.values().find(|m| *m > &Rational::one()) {
            return Err(Error::InvalidMeasure(format!("mass {m} exceeds 1")));
        }
        Ok(DiscreteMeasure { atoms: merged.into_iter().collect() })
    }

    pub fn point(p: Rational) -> Self {
        DiscreteMeasure { atoms: vec![(p, Rational::one())] }
    }

    /// Measure on `{lo, hi}` with the given mean, `lo <= mean <= hi`.
    pub fn two_point(lo: &Rational, hi: &Rational, mean: &Rational) -> Result<Self> {
        if lo == hi {
            return Ok(Self::point(lo.clone()));
        }
        if mean < lo || mean > hi {
            return Err(Error::InvalidMeasure(format!("mean {mean} not bracketed by [{lo}, {hi}]")));
        }
        let span = hi - lo;
        Self::new([(lo.clone(), (hi - mean) / &span), (hi.clone(), (mean - lo) / &span)])
    }

    pub fn atoms(&self) -> &[(Rational, Rational)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mass_at(&self, p: &Rational) -> Rational {
        self.atoms.iter().find(|(x, _)| x == p).map(|(_, m)| m.clone()).unwrap_or_else(Rational::zero)
    }

    pub fn mean(&self) -> Rational {
        measure_mean(self)
    }

    pub fn support_within(&self, lo: &Rational, hi: &Rational) -> bool {
        self.atoms.iter().all(|(p, _)| p >= lo && p <= hi)
    }

    pub fn expect<F: Fn(&Rational) -> Rational>(&self, f: F) -> Rational {
        self.atoms.iter().map(|(p, m)| f(p) * m).sum()
    }
}

/// Exact mean `sum point * mass`.
pub fn measure_mean(m: &DiscreteMeasure) -> Rational {
    m.atoms.iter().map(|(p, w)| p * w).sum()
}

/// One period of a trajectory. `y` is the level before ordering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step {
    pub t: usize,
    pub y: Rational,
    pub x: Rational,
    pub d: Rational,
    pub cost: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub weight: Rational,
}

impl Trajectory {
    pub fn total_cost(&self) -> Rational {
        self.steps.iter().map(|s| &s.cost).sum()
    }

    pub fn demands(&self) -> Vec<Rational> {
        self.steps.iter().map(|s| s.d.clone()).collect()
    }

    /// Checks the trajectory invariants against an instance: ordering is
    /// nonnegative, levels and demands lie in `[0, U]`, and every recorded
    /// cost equals `stage_cost`.
    pub fn validate(&self, inst: &ProblemInstance) -> Result<()> {
        let zero = Rational::zero();
        for (i, s) in self.steps.iter().enumerate() {
            if s.x < zero || &s.x > inst.cap() || s.d < zero || &s.d > inst.cap() {
                return Err(Error::OutOfRange {
                    what: "trajectory level or demand",
                    value: format!("(x={}, d={})", s.x, s.d),
                    range: format!("[0, {}]", inst.cap()),
                });
            }
            if s.x < s.y {
                return Err(Error::InvalidInstance(format!("negative order at t={}: x={} < y={}", s.t, s.x, s.y)));
            }
            if i > 0 {
                let prev = &self.steps[i - 1];
                if s.y != &prev.x - &prev.d {
                    return Err(Error::InvalidInstance(format!(
                        "pre-order level at t={} is {}, expected {}",
                        s.t,
                        s.y,
                        &prev.x - &prev.d
                    )));
                }
            }
            if s.cost != stage_cost(&s.x, &s.d, inst.b()) {
                return Err(Error::InvalidInstance(format!("stage cost mismatch at t={}", s.t)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;
    use proptest::prelude::*;

    #[test]
    fn stage_cost_examples() {
        assert_eq!(stage_cost(&q(1, 3), &q(2, 3), &q(1, 1)), q(1, 3));
        assert_eq!(stage_cost(&q(5, 7), &q(5, 7), &q(3, 1)), q(0, 1));
        assert_eq!(stage_cost(&q(0, 1), &q(1, 1), &q(2, 1)), q(2, 1));
        assert_eq!(stage_cost(&q(1, 1), &q(1, 4), &q(2, 1)), q(3, 4));
    }

    #[test]
    fn measure_mean_examples() {
        let m = DiscreteMeasure::new([(q(0, 1), q(1, 2)), (q(1, 1), q(1, 2))]).unwrap();
        assert_eq!(measure_mean(&m), q(1, 2));
        assert_eq!(measure_mean(&DiscreteMeasure::point(q(1, 2))), q(1, 2));
        let m = DiscreteMeasure::new([(q(0, 1), q(1, 2)), (q(1, 2), q(1, 2))]).unwrap();
        assert_eq!(measure_mean(&m), q(1, 4));
    }

    #[test]
    fn measure_merges_and_drops() {
        let m = DiscreteMeasure::new([(q(1, 2), q(1, 4)), (q(0, 1), q(0, 1)), (q(1, 2), q(3, 4))]).unwrap();
        assert_eq!(m.atoms(), &[(q(1, 2), q(1, 1))]);
        assert!(DiscreteMeasure::new([(q(0, 1), q(1, 2))]).is_err());
        assert!(DiscreteMeasure::new([(q(0, 1), q(3, 2)), (q(1, 1), q(-1, 2))]).is_err());
    }

    #[test]
    fn instance_validation_names_invariant() {
        let one = q(1, 1);
        let e = ProblemInstance::new(q(2, 1), one.clone(), one.clone(), 2, q(0, 1)).unwrap_err();
        assert!(e.to_string().contains("mu"));
        let e = ProblemInstance::new(q(1, 2), one.clone(), q(0, 1), 2, q(0, 1)).unwrap_err();
        assert!(e.to_string().contains("b ="));
        assert!(ProblemInstance::new(q(1, 2), one.clone(), one.clone(), 0, q(0, 1)).is_err());
        assert!(ProblemInstance::new(q(1, 2), one.clone(), one.clone(), 1, q(3, 2)).is_err());
        assert!(ProblemInstance::new(q(1, 2), q(0, 1), one, 1, q(0, 1)).is_err());
    }

    #[test]
    fn instance_deserialization_validates() {
        let ok: ProblemInstance =
            serde_json::from_str(r#"{"mu":"1/2","cap":"1","b":"1","horizon":2,"x0":"0"}"#).unwrap();
        assert_eq!(ok.mu(), &q(1, 2));
        let bad = serde_json::from_str::<ProblemInstance>(r#"{"mu":"3/2","cap":"1","b":"1","horizon":2,"x0":"0"}"#);
        assert!(bad.is_err());
    }

    proptest! {
        #[test]
        fn stage_cost_nonnegative_and_zero_iff_match(
            x in (0i64..50, 1i64..20), d in (0i64..50, 1i64..20), b in (1i64..30, 1i64..7)
        ) {
            let (x, d, b) = (q(x.0, x.1), q(d.0, d.1), q(b.0, b.1));
            let c = stage_cost(&x, &d, &b);
            prop_assert!(!c.is_negative());
            prop_assert_eq!(c.is_zero(), x == d);
        }

        #[test]
        fn measure_normalized_after_construction(
            pts in proptest::collection::vec((0i64..10, 1i64..6), 1..6)
        ) {
            let n = pts.len() as i64;
            let m = DiscreteMeasure::new(pts.iter().map(|&(p, w)| (q(p, 3), q(w, 1) / q(n * w, 1)))).unwrap();
            let total: Rational = m.atoms().iter().map(|(_, w)| w).sum();
            prop_assert_eq!(total, Rational::one());
            prop_assert!(m.atoms().windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
