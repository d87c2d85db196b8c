//! Brute-force grid dynamic programs for both demand models.
//!
//! The inner supremum over mean-constrained measures is the upper concave
//! envelope of the integrand over the demand grid, evaluated at the mean.
//! Everything is exact, so on a breakpoint-closure grid the oracle reproduces
//! the closed form with zero deviation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::closed_form::{ClosedForm, ThresholdTable};
use crate::error::{Error, Result};
use crate::model::{stage_cost, ProblemInstance};
use crate::rational::Rational;

/// Largest horizon accepted by [`breakpoint_closure_grid`].
pub const CLOSURE_MAX_HORIZON: usize = 12;
/// Largest number of order points a closure grid may hold.
pub const CLOSURE_MAX_POINTS: usize = 250_000;

/// Discretization of `[0, U]`.
///
/// Each order point carries a depth: a point of depth `k` is only offered to
/// the controller when at most `T - k` periods remain. Depth-0 points are
/// available everywhere; uniform and user-built grids use depth 0 throughout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    demand_points: Vec<Rational>,
    order_points: Vec<Rational>,
    depth: Vec<usize>,
}

impl Grid {
    /// Grid with every order point available at every stage. Inputs are sorted
    /// and deduplicated; `0` and `U` are required among the demand points.
    pub fn new(cap: &Rational, demand: Vec<Rational>, orders: Vec<Rational>) -> Result<Self> {
        let demand = sorted_unique(demand);
        let orders = sorted_unique(orders);
        let inside = |v: &Rational| !v.is_negative() && v <= cap;
        if !demand.iter().chain(&orders).all(inside) {
            return Err(Error::InvalidGrid(format!("all points must lie in [0, {cap}]")));
        }
        if demand.first().is_none_or(|p| !p.is_zero()) || demand.last() != Some(cap) {
            return Err(Error::InvalidGrid("demand points must contain 0 and U".into()));
        }
        if orders.is_empty() {
            return Err(Error::InvalidGrid("order points must be nonempty".into()));
        }
        let depth = vec![0; orders.len()];
        Ok(Grid { demand_points: demand, order_points: orders, depth })
    }

    /// `n + 1` equispaced points `kU/n` for both demands and orders, plus `x0`
    /// among the orders.
    pub fn uniform(inst: &ProblemInstance, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("uniform grid needs n >= 1".into()));
        }
        let u = inst.cap();
        let pts: Vec<Rational> = (0..=n).map(|k| u * &Rational::from(k) / &Rational::from(n)).collect();
        let mut orders = pts.clone();
        orders.push(inst.x0().clone());
        Grid::new(u, pts, orders)
    }

    pub fn demand_points(&self) -> &[Rational] {
        &self.demand_points
    }

    pub fn order_points(&self) -> &[Rational] {
        &self.order_points
    }

    pub fn depths(&self) -> &[usize] {
        &self.depth
    }

    /// Order points usable when `s` of `horizon` periods remain.
    fn orders_for_stage(&self, horizon: usize, s: usize) -> Vec<Rational> {
        let limit = horizon - s;
        self.order_points.iter().zip(&self.depth).filter(|(_, d)| **d <= limit).map(|(p, _)| p.clone()).collect()
    }
}

fn sorted_unique(mut v: Vec<Rational>) -> Vec<Rational> {
    v.sort();
    v.dedup();
    v
}

/// Grid containing every breakpoint of the closed form and every inventory
/// level the optimal policy can reach against it.
///
/// Demand points are `{0, U}` together with `A^s_j <= U` for `s <= T`. Depth-0
/// orders are `{0, U, x0}` and every `B^s_j`. Depth `k + 1` orders are the
/// positive differences `z - q` with `z` of depth `k` and `q` a demand point.
pub fn breakpoint_closure_grid(inst: &ProblemInstance) -> Result<Grid> {
    let t = inst.horizon();
    if t > CLOSURE_MAX_HORIZON {
        return Err(Error::GuardExceeded { what: "horizon for the closure grid", limit: CLOSURE_MAX_HORIZON, got: t });
    }
    let u = inst.cap();
    let table = ThresholdTable::for_instance(inst);
    let mut demand = vec![Rational::zero(), u.clone()];
    let mut base = vec![Rational::zero(), u.clone(), inst.x0().clone()];
    for s in 1..=t {
        for j in 0..=s as isize {
            let a = table.a(s, j);
            if a <= u {
                demand.push(a.clone());
            }
            base.push(table.b_at(s, j).clone());
        }
    }
    let demand = sorted_unique(demand);

    let mut depth_of: BTreeMap<Rational, usize> = BTreeMap::new();
    let mut layer = sorted_unique(base);
    for p in &layer {
        depth_of.insert(p.clone(), 0);
    }
    for k in 1..t {
        let mut next = Vec::new();
        for z in &layer {
            for d in &demand {
                let y = z - d;
                if y.is_positive() && !depth_of.contains_key(&y) {
                    next.push(y);
                }
            }
        }
        let next = sorted_unique(next);
        for p in &next {
            depth_of.insert(p.clone(), k);
        }
        if depth_of.len() > CLOSURE_MAX_POINTS {
            return Err(Error::GuardExceeded {
                what: "closure grid order points",
                limit: CLOSURE_MAX_POINTS,
                got: depth_of.len(),
            });
        }
        layer = next;
    }
    let (order_points, depth) = depth_of.into_iter().unzip();
    Ok(Grid { demand_points: demand, order_points, depth })
}

/// Maximal expectation of `f` over measures on the given atoms with the given
/// mean, together with the two-point measure attaining it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnvelopeResult {
    pub value: Rational,
    pub left: (Rational, Rational),
    pub right: (Rational, Rational),
    pub weights: (Rational, Rational),
}

/// Upper concave hull of a finite point set, built once and queried many times.
#[derive(Debug, Clone)]
pub struct UpperHull {
    vertices: Vec<(Rational, Rational)>,
}

impl UpperHull {
    /// `points` must be sorted by abscissa. Repeated abscissae keep the
    /// largest ordinate.
    pub fn new(points: &[(Rational, Rational)]) -> Self {
        let mut hull: Vec<(Rational, Rational)> = Vec::with_capacity(points.len());
        for p in points {
            if let Some(last) = hull.last() {
                if last.0 == p.0 {
                    if p.1 <= last.1 {
                        continue;
                    }
                    hull.pop();
                }
            }
            push_upper(&mut hull, p.clone());
        }
        UpperHull { vertices: hull }
    }

    pub fn vertices(&self) -> &[(Rational, Rational)] {
        &self.vertices
    }

    pub fn eval(&self, mean: &Rational) -> Result<EnvelopeResult> {
        let v = &self.vertices;
        let (lo, hi) = match (v.first(), v.last()) {
            (Some(a), Some(b)) => (&a.0, &b.0),
            _ => return Err(Error::InvalidGrid("envelope of an empty point set".into())),
        };
        if mean < lo || mean > hi {
            return Err(Error::OutOfRange {
                what: "envelope mean",
                value: mean.to_string(),
                range: format!("[{lo}, {hi}]"),
            });
        }
        // first vertex with abscissa >= mean
        let i = v.partition_point(|p| &p.0 < mean);
        if &v[i].0 == mean {
            return Ok(EnvelopeResult {
                value: v[i].1.clone(),
                left: v[i].clone(),
                right: v[i].clone(),
                weights: (Rational::one(), Rational::zero()),
            });
        }
        let (l, r) = (&v[i - 1], &v[i]);
        let wl = &(&r.0 - mean) / &(&r.0 - &l.0);
        let wr = Rational::one() - &wl;
        Ok(EnvelopeResult { value: &wl * &l.1 + &wr * &r.1, left: l.clone(), right: r.clone(), weights: (wl, wr) })
    }
}

fn push_upper(hull: &mut Vec<(Rational, Rational)>, p: (Rational, Rational)) {
    while hull.len() >= 2 {
        let o = &hull[hull.len() - 2];
        let a = &hull[hull.len() - 1];
        // pop unless o -> a -> p turns clockwise
        let cross = (&a.0 - &o.0) * (&p.1 - &o.1) - (&a.1 - &o.1) * (&p.0 - &o.0);
        if cross.is_negative() {
            break;
        }
        hull.pop();
    }
    hull.push(p);
}

pub fn upper_concave_envelope(points: &[(Rational, Rational)], mean: &Rational) -> Result<EnvelopeResult> {
    if !points.windows(2).all(|w| w[0].0 <= w[1].0) {
        return Err(Error::InvalidGrid("envelope points must be sorted".into()));
    }
    UpperHull::new(points).eval(mean)
}

/// Stage-by-stage tables of the martingale DP. Stage `s` means `s` periods
/// remain.
#[derive(Debug, Clone)]
pub struct DPTables {
    horizon: usize,
    means: Vec<Rational>,
    orders: Vec<Vec<Rational>>,
    /// `ghat[s-1][z][m]`
    ghat: Vec<Vec<Vec<Rational>>>,
    /// `vhat[s-1][m][z]`: suffix minima of `ghat` over `z`.
    vhat: Vec<Vec<Vec<Rational>>>,
}

impl DPTables {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Conditional means tracked by the tables (the demand grid plus `mu`).
    pub fn means(&self) -> &[Rational] {
        &self.means
    }

    pub fn stage_orders(&self, s: usize) -> &[Rational] {
        &self.orders[s - 1]
    }

    fn mean_index(&self, m: &Rational) -> Option<usize> {
        self.means.binary_search(m).ok()
    }

    pub fn ghat(&self, s: usize, z: &Rational, m: &Rational) -> Option<&Rational> {
        let zi = self.orders[s - 1].binary_search(z).ok()?;
        Some(&self.ghat[s - 1][zi][self.mean_index(m)?])
    }

    /// `min { ghat_s(z, m) : z >= y }` over the stage's order points.
    pub fn vhat(&self, s: usize, y: &Rational, m: &Rational) -> Option<&Rational> {
        let mi = self.mean_index(m)?;
        let zi = self.orders[s - 1].partition_point(|z| z < y);
        self.vhat[s - 1][mi].get(zi)
    }

    /// Iterates `(z, m, ghat_s(z, m))` over one stage.
    pub fn stage_cells(&self, s: usize) -> impl Iterator<Item = (&Rational, &Rational, &Rational)> {
        self.orders[s - 1]
            .iter()
            .zip(&self.ghat[s - 1])
            .flat_map(move |(z, row)| self.means.iter().zip(row).map(move |(m, g)| (z, m, g)))
    }
}

fn suffix_minima(ghat: &[Vec<Rational>], n_means: usize) -> Vec<Vec<Rational>> {
    (0..n_means)
        .map(|mi| {
            let mut out: Vec<Rational> = ghat.iter().map(|row| row[mi].clone()).collect();
            for zi in (0..out.len().saturating_sub(1)).rev() {
                if out[zi + 1] < out[zi] {
                    out[zi] = out[zi + 1].clone();
                }
            }
            out
        })
        .collect()
}

/// Root value `vhat_T(x0, mu)` of the martingale DP on `grid`, plus all tables.
pub fn solve_martingale_dp(inst: &ProblemInstance, grid: &Grid) -> Result<(Rational, DPTables)> {
    let t = inst.horizon();
    let b = inst.b();
    let demand = grid.demand_points();
    let mut means = demand.to_vec();
    means.push(inst.mu().clone());
    let means = sorted_unique(means);

    let mut tables = DPTables {
        horizon: t,
        means,
        orders: Vec::with_capacity(t),
        ghat: Vec::with_capacity(t),
        vhat: Vec::with_capacity(t),
    };
    for s in 1..=t {
        let orders = grid.orders_for_stage(t, s);
        let prev = if s >= 2 { Some(&tables) } else { None };
        let ghat: Vec<Vec<Rational>> = orders
            .par_iter()
            .map(|z| {
                let pts: Vec<(Rational, Rational)> = demand
                    .iter()
                    .map(|qv| {
                        let mut f = stage_cost(z, qv, b);
                        if let Some(tb) = prev {
                            let carried = z - qv;
                            f += tb
                                .vhat(s - 1, &carried, qv)
                                .expect("demand points are tracked means and U is an order point");
                        }
                        (qv.clone(), f)
                    })
                    .collect();
                let hull = UpperHull::new(&pts);
                tables.means.iter().map(|m| hull.eval(m).map(|e| e.value)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let vhat = suffix_minima(&ghat, tables.means.len());
        tables.orders.push(orders);
        tables.ghat.push(ghat);
        tables.vhat.push(vhat);
    }
    let root = tables
        .vhat(t, inst.x0(), inst.mu())
        .cloned()
        .ok_or_else(|| Error::InvalidGrid("no order point at or above x0".into()))?;
    Ok((root, tables))
}

/// Root value `V_T(x0, mu)` of the independent-demand DP on `grid`. Every
/// order point is available at every stage.
pub fn solve_independent_dp(inst: &ProblemInstance, grid: &Grid) -> Result<Rational> {
    let t = inst.horizon();
    let b = inst.b();
    let mu = inst.mu();
    let orders = grid.order_points();
    let demand = grid.demand_points();
    let mut vhat: Vec<Rational> = Vec::new();
    for s in 1..=t {
        let ghat: Vec<Rational> = orders
            .par_iter()
            .map(|z| {
                let pts: Vec<(Rational, Rational)> = demand
                    .iter()
                    .map(|qv| {
                        let mut f = stage_cost(z, qv, b);
                        if s >= 2 {
                            let carried = z - qv;
                            let zi = orders.partition_point(|o| o < &carried);
                            f += &vhat[zi];
                        }
                        (qv.clone(), f)
                    })
                    .collect();
                UpperHull::new(&pts).eval(mu).map(|e| e.value)
            })
            .collect::<Result<_>>()?;
        let mut next = ghat;
        for zi in (0..next.len().saturating_sub(1)).rev() {
            if next[zi + 1] < next[zi] {
                next[zi] = next[zi + 1].clone();
            }
        }
        vhat = next;
    }
    let zi = orders.partition_point(|o| o < inst.x0());
    vhat.get(zi).cloned().ok_or_else(|| Error::InvalidGrid("no order point at or above x0".into()))
}

/// Largest deviation between the oracle's stage tables and the closed form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageDeviation {
    pub stage: usize,
    pub cells: usize,
    pub max_abs_delta: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub oracle_value: Rational,
    pub closed_form_value: Rational,
    pub delta: Rational,
    pub stages: Vec<StageDeviation>,
}

/// Solves the DP on `grid` and compares every stage cell with `g^s(z, m)`.
pub fn verify_against_closed_form(inst: &ProblemInstance, grid: &Grid) -> Result<VerifyReport> {
    let (oracle_value, tables) = solve_martingale_dp(inst, grid)?;
    let cf = ClosedForm::new(inst);
    let closed_form_value = cf.value().value_at_x0;
    let stages = (1..=inst.horizon())
        .map(|s| {
            let cells: Vec<_> = tables.stage_cells(s).collect();
            let max_abs_delta =
                cells.par_iter().map(|(z, m, g)| (*g - &cf.g_frak(s, z, m)).abs()).max().unwrap_or_default();
            StageDeviation { stage: s, cells: cells.len(), max_abs_delta }
        })
        .collect();
    Ok(VerifyReport { delta: (&oracle_value - &closed_form_value).abs(), oracle_value, closed_form_value, stages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn pts(v: &[(i64, i64, i64, i64)]) -> Vec<(Rational, Rational)> {
        v.iter().map(|&(a, b, c, d)| (q(a, b), q(c, d))).collect()
    }

    #[test]
    fn envelope_tent() {
        let p = pts(&[(0, 1, 0, 1), (1, 2, 1, 1), (1, 1, 0, 1)]);
        let e = upper_concave_envelope(&p, &q(1, 4)).unwrap();
        assert_eq!(e.value, q(1, 2));
        assert_eq!(e.left.0, q(0, 1));
        assert_eq!(e.right.0, q(1, 2));
        assert_eq!(e.weights, (q(1, 2), q(1, 2)));
    }

    #[test]
    fn envelope_of_affine_data() {
        let p: Vec<_> = (0..=6).map(|k| (q(k, 6), q(3, 1) * q(k, 6) - q(1, 2))).collect();
        for k in 0..=12 {
            let m = q(k, 12);
            assert_eq!(upper_concave_envelope(&p, &m).unwrap().value, q(3, 1) * &m - q(1, 2));
        }
    }

    #[test]
    fn envelope_skips_low_middle_point() {
        let p = pts(&[(0, 1, 0, 1), (1, 2, 1, 10), (1, 1, 1, 1)]);
        let e = upper_concave_envelope(&p, &q(1, 2)).unwrap();
        assert_eq!(e.value, q(1, 2));
        assert_eq!((e.left.0, e.right.0), (q(0, 1), q(1, 1)));
        // every two-point measure with mean 1/2 on these atoms
        let f = |x: &Rational| p.iter().find(|(a, _)| a == x).unwrap().1.clone();
        let mut best = f(&q(1, 2));
        for lo in [q(0, 1), q(1, 2)] {
            for hi in [q(1, 2), q(1, 1)] {
                if lo < q(1, 2) && hi > q(1, 2) {
                    let w = (&hi - q(1, 2)) / (&hi - &lo);
                    let v = &w * f(&lo) + (q(1, 1) - &w) * f(&hi);
                    best = best.max(v);
                }
            }
        }
        assert_eq!(best, e.value);
    }

    #[test]
    fn envelope_rejects_mean_outside_range() {
        let p = pts(&[(0, 1, 0, 1), (1, 2, 1, 1)]);
        assert!(upper_concave_envelope(&p, &q(3, 4)).is_err());
    }

    fn inst(mu: Rational, b: Rational, t: usize, x0: Rational) -> ProblemInstance {
        ProblemInstance::new(mu, q(1, 1), b, t, x0).unwrap()
    }

    #[test]
    fn martingale_dp_examples() {
        let i1 = inst(q(1, 2), q(1, 1), 1, q(0, 1));
        let three = vec![q(0, 1), q(1, 2), q(1, 1)];
        let g = Grid::new(&q(1, 1), three.clone(), three).unwrap();
        assert_eq!(solve_martingale_dp(&i1, &g).unwrap().0, q(1, 2));

        let i2 = inst(q(1, 2), q(1, 1), 2, q(0, 1));
        let g = breakpoint_closure_grid(&i2).unwrap();
        assert_eq!(solve_martingale_dp(&i2, &g).unwrap().0, q(2, 3));

        let i3 = inst(q(1, 2), q(1, 1), 3, q(0, 1));
        let g = breakpoint_closure_grid(&i3).unwrap();
        assert_eq!(solve_martingale_dp(&i3, &g).unwrap().0, q(1, 1));
    }

    #[test]
    fn closure_stage_tables_match_closed_form() {
        let i = inst(q(2, 5), q(5, 2), 3, q(1, 7));
        let g = breakpoint_closure_grid(&i).unwrap();
        let r = verify_against_closed_form(&i, &g).unwrap();
        assert!(r.delta.is_zero());
        for st in &r.stages {
            assert!(st.max_abs_delta.is_zero(), "stage {}", st.stage);
        }
    }

    #[test]
    fn independent_dp_examples() {
        let i = inst(q(1, 2), q(1, 1), 2, q(0, 1));
        let g = Grid::new(&q(1, 1), vec![q(0, 1), q(1, 1)], vec![q(0, 1), q(1, 2), q(1, 1)]).unwrap();
        assert_eq!(solve_independent_dp(&i, &g).unwrap(), q(1, 1));

        let zero = inst(q(0, 1), q(1, 1), 3, q(0, 1));
        assert_eq!(solve_independent_dp(&zero, &g).unwrap(), q(0, 1));

        let full = inst(q(1, 4), q(1, 1), 2, q(1, 1));
        assert_eq!(solve_independent_dp(&full, &g).unwrap(), q(11, 8));
    }

    #[test]
    fn closure_grid_contents() {
        let g = breakpoint_closure_grid(&inst(q(1, 2), q(1, 1), 1, q(0, 1))).unwrap();
        assert_eq!(g.demand_points(), &[q(0, 1), q(1, 1)]);
        let g = breakpoint_closure_grid(&inst(q(1, 2), q(1, 1), 2, q(0, 1))).unwrap();
        assert_eq!(g.demand_points(), &[q(0, 1), q(1, 2), q(1, 1)]);
        let g = breakpoint_closure_grid(&inst(q(1, 2), q(1, 1), 3, q(0, 1))).unwrap();
        for p in [q(1, 3), q(2, 3), q(1, 2)] {
            assert!(g.demand_points().contains(&p));
        }
        let err = breakpoint_closure_grid(&inst(q(1, 2), q(1, 1), 13, q(0, 1))).unwrap_err();
        assert!(matches!(err, Error::GuardExceeded { .. }));
    }

    #[test]
    fn grid_validation() {
        let u = q(1, 1);
        assert!(Grid::new(&u, vec![q(1, 2), q(1, 1)], vec![q(0, 1)]).is_err());
        assert!(Grid::new(&u, vec![q(0, 1), q(1, 1)], vec![q(3, 2)]).is_err());
        assert!(Grid::new(&u, vec![q(0, 1), q(1, 1)], vec![]).is_err());
        let g = Grid::new(&u, vec![q(1, 1), q(0, 1), q(1, 1)], vec![q(1, 2), q(0, 1)]).unwrap();
        assert_eq!(g.demand_points(), &[q(0, 1), q(1, 1)]);
        assert_eq!(g.order_points(), &[q(0, 1), q(1, 2)]);
    }
}
