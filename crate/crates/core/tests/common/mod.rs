//! Property checks shared by the proptest suite and the acceptance harness.
//! Each check returns a description of the first violation it finds.
#![allow(dead_code)]

use newsvendor_core::dp_oracle::UpperHull;
use newsvendor_core::worst_case_sim::enumerate_tree;
use newsvendor_core::{enumerate_exact, q, ClosedForm, ProblemInstance, Rational, ThresholdTable};
use proptest::prelude::*;

pub type Check = std::result::Result<(), String>;

/// Random instance with small denominators and `1 <= T <= max_t`.
pub fn arb_instance(max_t: usize) -> impl Strategy<Value = ProblemInstance> {
    (1i64..=4, 1i64..=3, 1i64..=10, 1i64..=4, 0i64..=12, 1usize..=max_t, 0i64..=12).prop_map(
        |(un, ud, bn, bd, mu_k, t, x_k)| {
            let u = q(un, ud);
            let mu = &u * &q(mu_k, 12);
            let x0 = &u * &q(x_k, 12);
            ProblemInstance::new(mu, u, q(bn, bd), t, x0).expect("generated instance is valid")
        },
    )
}

/// `n + 1` equispaced points on `[0, U]` merged with `extra`.
pub fn grid(u: &Rational, n: i64, extra: impl IntoIterator<Item = Rational>) -> Vec<Rational> {
    let mut v: Vec<Rational> = (0..=n).map(|k| u * &q(k, n)).collect();
    v.extend(extra.into_iter().filter(|p| !p.is_negative() && p <= u));
    v.sort();
    v.dedup();
    v
}

fn ladder_a(t: &ThresholdTable, s: usize) -> Vec<Rational> {
    (-1..=s as isize).map(|j| t.a(s, j).clone()).collect()
}

fn ladder_b(t: &ThresholdTable, s: usize) -> Vec<Rational> {
    (-1..=s as isize).map(|j| t.b_at(s, j).clone()).collect()
}

/// `f(x2) <= chord` on every consecutive triple of `pts` (sorted by x).
fn discrete_convex(pts: &[(Rational, Rational)], concave: bool) -> std::result::Result<(), String> {
    for w in pts.windows(3) {
        let (x1, f1) = &w[0];
        let (x2, f2) = &w[1];
        let (x3, f3) = &w[2];
        let lhs = f2 * &(x3 - x1);
        let rhs = f1 * &(x3 - x2) + f3 * &(x2 - x1);
        let ok = if concave { lhs >= rhs } else { lhs <= rhs };
        if !ok {
            return Err(format!("({x1}, {x2}, {x3})"));
        }
    }
    Ok(())
}

fn within(pts: &[Rational], lo: &Rational, hi: &Rational) -> Vec<Rational> {
    pts.iter().filter(|p| *p >= lo && *p <= hi).cloned().collect()
}

pub fn check_thresholds(inst: &ProblemInstance) -> Check {
    let t = inst.horizon();
    let table = ThresholdTable::for_instance(inst);
    table.check_invariants(t + 1)?;
    let mus = grid(inst.cap(), 12, []);
    for s in 0..=t {
        for w in mus.windows(2) {
            if table.gamma(s, &w[0]) > table.gamma(s, &w[1]) {
                return Err(format!("Gamma^{s} decreases between {} and {}", w[0], w[1]));
            }
        }
        if s >= 1 {
            for m in &mus {
                if table.gamma(s - 1, m) > table.gamma(s, m) {
                    return Err(format!("Gamma decreases in s at s={s}, mu={m}"));
                }
            }
        }
    }
    Ok(())
}

pub fn check_g_convex_and_beta_min(inst: &ProblemInstance) -> Check {
    let cf = ClosedForm::new(inst);
    let u = inst.cap();
    let ds = grid(u, 6, [inst.mu().clone()]);
    for s in 1..=inst.horizon() {
        let xs = grid(u, 12, ladder_b(cf.table(), s));
        for d in &ds {
            let pts: Vec<_> = xs.iter().map(|x| (x.clone(), cf.g_frak(s, x, d))).collect();
            if let Err(p) = discrete_convex(&pts, false) {
                return Err(format!("g^{s}(., {d}) not convex at {p}"));
            }
            let beta = cf.chi_mar(s, d);
            let at_beta = cf.g_frak(s, &beta, d);
            if let Some((x, v)) = pts.iter().find(|(_, v)| *v < at_beta) {
                return Err(format!("g^{s}({x}, {d}) = {v} below the value {at_beta} at beta = {beta}"));
            }
        }
    }
    Ok(())
}

pub fn check_gbar_dual_path(inst: &ProblemInstance) -> Check {
    let cf = ClosedForm::new(inst);
    let u = inst.cap();
    for s in 1..=inst.horizon() {
        let xs = grid(u, 8, ladder_b(cf.table(), s));
        let ds = grid(u, 8, ladder_a(cf.table(), s + 1));
        for x in &xs {
            let mut ds_x = ds.clone();
            ds_x.push(cf.z_cross(s, x));
            for d in &ds_x {
                let a = cf.g_bar(s, x, d);
                let b = cf.g_bar_piecewise(s, x, d);
                if a != b {
                    return Err(format!("gbar^{s}({x}, {d}): composition {a} != piecewise {b}"));
                }
            }
        }
    }
    Ok(())
}

pub fn check_gbar_shape(inst: &ProblemInstance) -> Check {
    let cf = ClosedForm::new(inst);
    let u = inst.cap();
    for s in 1..=inst.horizon() {
        for x in grid(u, 6, []) {
            let z = cf.z_cross(s, &x);
            if z > x || (z.is_zero() != x.is_zero()) {
                return Err(format!("z^{s}_{x} = {z} violates z <= x with z = 0 iff x = 0"));
            }
            let ds = grid(u, 16, ladder_a(cf.table(), s + 1).into_iter().chain([z.clone()]));
            let eval = |pts: Vec<Rational>| -> Vec<(Rational, Rational)> {
                pts.into_iter()
                    .map(|d| {
                        let v = cf.g_bar(s, &x, &d);
                        (d, v)
                    })
                    .collect()
            };
            if let Err(p) = discrete_convex(&eval(within(&ds, &Rational::zero(), &z)), false) {
                return Err(format!("gbar^{s}({x}, .) not convex below z = {z} at {p}"));
            }
            if let Err(p) = discrete_convex(&eval(within(&ds, &z, u)), true) {
                return Err(format!("gbar^{s}({x}, .) not concave above z = {z} at {p}"));
            }
        }
    }
    Ok(())
}

pub fn check_f_regions(inst: &ProblemInstance) -> Check {
    let cf = ClosedForm::new(inst);
    let u = inst.cap();
    for s in 2..=inst.horizon() {
        let row = ladder_a(cf.table(), s);
        for x in grid(u, 6, []) {
            let r = cf.region_index(s, &x, inst.mu()).map_err(|e| e.to_string())?;
            let ds = grid(u, 16, row.iter().cloned().chain([r.cal_a.clone(), r.alphax.clone()]));
            let eval = |pts: Vec<Rational>| -> Vec<(Rational, Rational)> {
                pts.into_iter()
                    .map(|d| {
                        let v = cf.f_frak(s, &x, &d).expect("s >= 2");
                        (d, v)
                    })
                    .collect()
            };
            let zero = Rational::zero();
            if let Err(p) = discrete_convex(&eval(within(&ds, &zero, &r.cal_a)), false) {
                return Err(format!("f^{s}({x}, .) not convex below calA = {} at {p}", r.cal_a));
            }
            if let Err(p) = discrete_convex(&eval(within(&ds, &r.alphax, u)), true) {
                return Err(format!("f^{s}({x}, .) not concave above alpha = {} at {p}", r.alphax));
            }
            for w in row.windows(2).take(s) {
                if let Err(p) = discrete_convex(&eval(within(&ds, &w[0], &w[1])), false) {
                    return Err(format!("f^{s}({x}, .) not convex on [{}, {}] at {p}", w[0], w[1]));
                }
            }
        }
    }
    Ok(())
}

pub fn check_measure_means(inst: &ProblemInstance) -> Check {
    let cf = ClosedForm::new(inst);
    let u = inst.cap();
    let zero = Rational::zero();
    for s in 1..=inst.horizon() {
        for x in grid(u, 6, []) {
            for m in grid(u, 6, [cf.table().a(s, 0).clone()]) {
                let law = cf.worst_case_measure(s, &x, &m);
                if law.mean() != m || !law.support_within(&zero, u) || law.len() > 2 {
                    return Err(format!("q^{s}_({x}, {m}) = {law:?} is not a two-point law with mean {m}"));
                }
            }
        }
    }
    Ok(())
}

/// Envelope value equals the best measure with at most two atoms, found by
/// brute force over all pairs.
pub fn check_envelope(points: &[(Rational, Rational)], mean: &Rational) -> Check {
    let hull = UpperHull::new(points);
    let e = hull.eval(mean).map_err(|e| e.to_string())?;
    let mut best: Option<Rational> = None;
    for (i, (a, fa)) in points.iter().enumerate() {
        if a == mean {
            best = Some(best.map_or(fa.clone(), |b: Rational| b.max(fa.clone())));
        }
        for (c, fc) in &points[i + 1..] {
            if a < mean && c > mean {
                let w = (c - mean) / (c - a);
                let v = &w * fa + (Rational::one() - &w) * fc;
                if best.as_ref().is_some_and(|b| &v > b) || best.is_none() {
                    best = Some(v);
                }
            }
        }
    }
    let best = best.ok_or("no feasible two-point measure")?;
    if e.value != best {
        return Err(format!("envelope {} != brute force {best} at mean {mean}", e.value));
    }
    let (wl, wr) = &e.weights;
    if wl + wr != Rational::one() || &(wl * &e.left.0 + wr * &e.right.0) != mean {
        return Err("envelope weights do not reproduce the mean".into());
    }
    Ok(())
}

pub fn arb_envelope() -> impl Strategy<Value = (Vec<(Rational, Rational)>, Rational)> {
    (prop::collection::vec((0i64..=24, -20i64..=20), 2..10), 0i64..=24).prop_map(|(raw, m)| {
        let mut pts: Vec<(Rational, Rational)> = raw.into_iter().map(|(x, f)| (q(x, 24), q(f, 7))).collect();
        pts.push((q(0, 1), q(0, 1)));
        pts.push((q(1, 1), q(1, 3)));
        pts.sort();
        pts.dedup_by(|a, b| a.0 == b.0);
        (pts, q(m, 24))
    })
}

/// Absorption at 0 and at U, martingale consistency of every branch, and
/// agreement of the chain with the full tree below the threshold.
pub fn check_trajectories(inst: &ProblemInstance) -> Check {
    let u = inst.cap();
    let cf = ClosedForm::new(inst);
    let en = enumerate_exact(inst).map_err(|e| e.to_string())?;
    let total: Rational = en.trajectories.iter().map(|t| &t.weight).sum();
    if total != Rational::one() {
        return Err(format!("trajectory weights sum to {total}"));
    }
    if en.expected_cost != cf.value().value_at_x0 {
        return Err(format!("enumerated cost {} != closed form {}", en.expected_cost, cf.value().value_at_x0));
    }
    for tr in &en.trajectories {
        tr.validate(inst).map_err(|e| e.to_string())?;
        for w in tr.steps.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.d.is_zero() && (!b.d.is_zero() || b.x != a.x) {
                return Err(format!("no absorption at 0 after t={}", a.t));
            }
            if &a.d == u && (&b.d != u || &b.x != u || !b.cost.is_zero()) {
                return Err(format!("no absorption at U after t={}", a.t));
            }
        }
    }
    let tree = enumerate_tree(&cf).map_err(|e| e.to_string())?;
    let t_max = inst.horizon();
    for tr in &tree.trajectories {
        let mut prev = inst.mu().clone();
        for st in &tr.steps {
            let law = cf.worst_case_measure(t_max - st.t + 1, &st.x, &prev);
            if law.mean() != prev || law.mass_at(&st.d).is_zero() {
                return Err(format!("branch at t={} is not drawn from a law with mean {prev}", st.t));
            }
            prev = st.d.clone();
        }
    }
    let key = |v: &[newsvendor_core::Trajectory]| {
        let mut k: Vec<_> = v.iter().map(|t| (t.demands(), t.weight.clone())).collect();
        k.sort();
        k
    };
    if key(&en.trajectories) != key(&tree.trajectories) {
        return Err("chain and tree enumerations induce different path laws".into());
    }
    Ok(())
}
