//! The optimal policy played against the worst-case martingale: the
//! demand/level chain, its stopping-time form, exact enumeration of all
//! trajectories, seeded Monte Carlo and replay against external demand data.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::closed_form::ClosedForm;
use crate::error::{Error, Result};
use crate::model::{stage_cost, DiscreteMeasure, ProblemInstance, Step, Trajectory};
use crate::rational::Rational;

/// Horizon limit for enumeration through the chain (below-threshold start).
pub const CHAIN_MAX_HORIZON: usize = 16;
/// Horizon limit for the full branching enumeration.
pub const TREE_MAX_HORIZON: usize = 12;

/// Demand and level ladders of the worst-case chain, index `0..=lambda`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainSchedule {
    pub lambda: usize,
    pub gamma: usize,
    pub d: Vec<Rational>,
    pub x: Vec<Rational>,
}

impl ChainSchedule {
    pub fn from_closed_form(cf: &ClosedForm) -> Self {
        let inst = cf.instance();
        let t = inst.horizon();
        let b = inst.b();
        let (gamma, d) = cf.demand_ladder();
        let lambda = d.len() - 1;
        let g = Rational::from(gamma);
        let mut x = Vec::with_capacity(lambda + 1);
        x.push(&g * inst.mu() / &(b + &Rational::from(t + 1)));
        if gamma == t {
            x.push(inst.cap().clone());
        } else {
            for (step, dt) in d.iter().enumerate().skip(1) {
                x.push(&g * dt / &(b + &Rational::from(t + 1 - step)));
            }
        }
        ChainSchedule { lambda, gamma, d, x }
    }

    /// Monotone ladders on `[1, lambda]`, `X_t <= D_t` and `D_lambda = U`.
    pub fn check(&self, cap: &Rational) -> Result<()> {
        let bad = |m: String| Err(Error::Degenerate(m));
        if &self.d[self.lambda] != cap {
            return bad(format!("D at lambda is {}, not U", self.d[self.lambda]));
        }
        for t in 1..=self.lambda {
            if self.x[t] > self.d[t] {
                return bad(format!("X_{t} > D_{t}"));
            }
            if t > 1 && (self.d[t] <= self.d[t - 1] || self.x[t] < self.x[t - 1]) {
                return bad(format!("ladder not increasing at t={t}"));
            }
        }
        Ok(())
    }
}

pub fn chain_schedule(inst: &ProblemInstance) -> ChainSchedule {
    ChainSchedule::from_closed_form(&ClosedForm::new(inst))
}

/// Law of the stopping period `Z` (points `1..=lambda`) and of the terminal
/// jump `Y` (points `{0, U}`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoppingLaw {
    pub z_pmf: DiscreteMeasure,
    pub y_pmf: DiscreteMeasure,
}

impl StoppingLaw {
    pub fn z_mass(&self, t: usize) -> Rational {
        self.z_pmf.mass_at(&Rational::from(t))
    }

    pub fn y_mass_at_cap(&self, cap: &Rational) -> Rational {
        self.y_pmf.mass_at(cap)
    }
}

/// `P(Z = t) = (1 - D_{t-1}/D_t) mu / D_{t-1}` for `t < lambda`,
/// `P(Z = lambda) = mu / D_{lambda-1}`, `P(Y = U) = D_{lambda-1} / U`,
/// reading `mu / D_0` as 1 so that `mu = 0` gives the all-zero chain.
pub fn stopping_law(sched: &ChainSchedule, cap: &Rational) -> Result<StoppingLaw> {
    let d = &sched.d;
    let lam = sched.lambda;
    let ratio = |k: usize| {
        if k == 0 {
            Rational::one()
        } else {
            &d[0] / &d[k]
        }
    };
    let mut atoms = Vec::with_capacity(lam);
    for t in 1..lam {
        let p = (Rational::one() - &d[t - 1] / &d[t]) * ratio(t - 1);
        atoms.push((Rational::from(t), p));
    }
    atoms.push((Rational::from(lam), ratio(lam - 1)));
    let z_pmf = DiscreteMeasure::new(atoms)?;
    let up = &d[lam - 1] / cap;
    let y_pmf = DiscreteMeasure::new([(Rational::zero(), Rational::one() - &up), (cap.clone(), up)])?;
    Ok(StoppingLaw { z_pmf, y_pmf })
}

/// Plays the policy for `T` periods, drawing each demand from `draw(s, x,
/// prev_d)` where `s` counts the periods left including the current one.
fn rollout<F>(cf: &ClosedForm, mut draw: F) -> Result<Trajectory>
where
    F: FnMut(usize, &Rational, &Rational) -> Result<Rational>,
{
    let inst = cf.instance();
    let t_max = inst.horizon();
    let mut steps = Vec::with_capacity(t_max);
    let mut y = inst.x0().clone();
    let mut prev = inst.mu().clone();
    for t in 1..=t_max {
        let s = t_max - t + 1;
        let x = cf.policy_order_level(s, &y, &prev);
        let d = draw(s, &x, &prev)?;
        let cost = stage_cost(&x, &d, inst.b());
        let next_y = &x - &d;
        steps.push(Step { t, y, x, d: d.clone(), cost });
        y = next_y;
        prev = d;
    }
    Ok(Trajectory { steps, weight: Rational::one() })
}

/// Replays the policy against a fixed demand sequence of length `T`.
pub fn simulate_under(inst: &ProblemInstance, demands: &[Rational]) -> Result<Trajectory> {
    simulate_under_with(&ClosedForm::new(inst), demands)
}

pub fn simulate_under_with(cf: &ClosedForm, demands: &[Rational]) -> Result<Trajectory> {
    let inst = cf.instance();
    if demands.len() != inst.horizon() {
        return Err(Error::OutOfRange {
            what: "demand stream length",
            value: demands.len().to_string(),
            range: format!("exactly T = {}", inst.horizon()),
        });
    }
    for d in demands {
        inst.check_in_cap("demand", d)?;
    }
    let mut it = demands.iter();
    rollout(cf, |_, _, _| Ok(it.next().expect("length checked").clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnumerationMethod {
    Chain,
    Tree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Enumeration {
    pub method: EnumerationMethod,
    pub trajectories: Vec<Trajectory>,
    pub expected_cost: Rational,
}

impl Enumeration {
    fn from_paths(method: EnumerationMethod, trajectories: Vec<Trajectory>) -> Self {
        let expected_cost = trajectories.iter().map(|tr| &tr.weight * &tr.total_cost()).sum();
        Enumeration { method, trajectories, expected_cost }
    }

    pub fn estimate(&self) -> CostEstimate {
        CostEstimate {
            mean: self.expected_cost.to_f64(),
            stderr: 0.0,
            runs: self.trajectories.len(),
            exact: Some(self.expected_cost.clone()),
        }
    }
}

/// All positive-probability trajectories of the optimal policy against the
/// worst-case law. Starts at or below the threshold go through the chain,
/// other starts walk the branching recursion.
pub fn enumerate_exact(inst: &ProblemInstance) -> Result<Enumeration> {
    let cf = ClosedForm::new(inst);
    let chi = cf.chi_mar(inst.horizon(), inst.mu());
    if inst.x0() <= &chi {
        enumerate_chain(&cf)
    } else {
        enumerate_tree(&cf)
    }
}

/// Enumeration through the chain ladders and the stopping law. Only valid
/// when `x0 <= chi`.
pub fn enumerate_chain(cf: &ClosedForm) -> Result<Enumeration> {
    let inst = cf.instance();
    let t_max = inst.horizon();
    if t_max > CHAIN_MAX_HORIZON {
        return Err(Error::GuardExceeded {
            what: "horizon for chain enumeration",
            limit: CHAIN_MAX_HORIZON,
            got: t_max,
        });
    }
    if inst.x0() > &cf.chi_mar(t_max, inst.mu()) {
        return Err(Error::Regime("chain enumeration needs x0 at or below the order-up-to threshold".into()));
    }
    let sched = ChainSchedule::from_closed_form(cf);
    let law = stopping_law(&sched, inst.cap())?;
    let lam = sched.lambda;
    let zero = Rational::zero();
    let path = |stop: usize, tail: &Rational| -> Vec<Rational> {
        (1..=t_max).map(|k| if k < stop { sched.d[k].clone() } else { tail.clone() }).collect()
    };
    let mut outcomes: Vec<(Vec<Rational>, Rational)> = Vec::new();
    for stop in 1..lam {
        let w = law.z_mass(stop);
        if w.is_positive() {
            outcomes.push((path(stop, &zero), w));
        }
    }
    let w = law.z_mass(lam);
    for (yv, wy) in law.y_pmf.atoms() {
        if w.is_positive() {
            outcomes.push((path(lam, yv), &w * wy));
        }
    }
    let trajectories = outcomes
        .into_iter()
        .map(|(ds, w)| {
            let mut tr = simulate_under_with(cf, &ds)?;
            tr.weight = w;
            Ok(tr)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Enumeration::from_paths(EnumerationMethod::Chain, trajectories))
}

/// Enumeration by branching on the worst-case law in every period.
pub fn enumerate_tree(cf: &ClosedForm) -> Result<Enumeration> {
    let inst = cf.instance();
    let t_max = inst.horizon();
    if t_max > TREE_MAX_HORIZON {
        return Err(Error::GuardExceeded { what: "horizon for tree enumeration", limit: TREE_MAX_HORIZON, got: t_max });
    }
    let mut out = Vec::new();
    let mut steps = Vec::with_capacity(t_max);
    walk(cf, 1, inst.x0().clone(), inst.mu().clone(), Rational::one(), &mut steps, &mut out);
    Ok(Enumeration::from_paths(EnumerationMethod::Tree, out))
}

fn walk(
    cf: &ClosedForm,
    t: usize,
    y: Rational,
    prev: Rational,
    weight: Rational,
    steps: &mut Vec<Step>,
    out: &mut Vec<Trajectory>,
) {
    let inst = cf.instance();
    let t_max = inst.horizon();
    if t > t_max {
        out.push(Trajectory { steps: steps.clone(), weight });
        return;
    }
    let s = t_max - t + 1;
    let x = cf.policy_order_level(s, &y, &prev);
    let law = cf.worst_case_measure(s, &x, &prev);
    for (d, p) in law.atoms() {
        let cost = stage_cost(&x, d, inst.b());
        steps.push(Step { t, y: y.clone(), x: x.clone(), d: d.clone(), cost });
        walk(cf, t + 1, &x - d, d.clone(), &weight * p, steps, out);
        steps.pop();
    }
}

/// Monte Carlo summary. `exact` is only set when the numbers come from
/// enumeration rather than sampling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
    pub exact: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulation {
    pub cost: CostEstimate,
    pub demand_means: Vec<f64>,
    pub demand_stderrs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    sum: Rational,
    sq: Rational,
}

impl Moments {
    fn new() -> Self {
        Moments { n: 0, sum: Rational::zero(), sq: Rational::zero() }
    }

    fn push(&mut self, v: &Rational) {
        self.n += 1;
        self.sum += v;
        self.sq += v * v;
    }

    fn merge(mut self, other: Moments) -> Moments {
        self.n += other.n;
        self.sum += other.sum;
        self.sq += other.sq;
        self
    }

    fn mean_stderr(&self) -> (f64, f64) {
        if self.n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let n = Rational::from(self.n);
        let mean = &self.sum / &n;
        if self.n == 1 {
            return (mean.to_f64(), 0.0);
        }
        let var = (&self.sq - &(&mean * &self.sum)) / (n - Rational::one());
        (mean.to_f64(), (var.to_f64().max(0.0) / self.n as f64).sqrt())
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    cost: Moments,
    demand: Vec<Moments>,
}

impl Accumulator {
    fn new(t: usize) -> Self {
        Accumulator { cost: Moments::new(), demand: vec![Moments::new(); t] }
    }

    fn push(mut self, tr: &Trajectory) -> Self {
        self.cost.push(&tr.total_cost());
        for (m, s) in self.demand.iter_mut().zip(&tr.steps) {
            m.push(&s.d);
        }
        self
    }

    fn merge(self, other: Accumulator) -> Accumulator {
        Accumulator {
            cost: self.cost.merge(other.cost),
            demand: self.demand.into_iter().zip(other.demand).map(|(a, b)| a.merge(b)).collect(),
        }
    }
}

/// Exact uniform on the dyadic grid `k / 2^53`.
fn dyadic_uniform(rng: &mut ChaCha8Rng) -> Rational {
    Rational::dyadic(rng.next_u64() >> 11, 53)
}

fn pick<'a>(law: &'a DiscreteMeasure, u: &Rational) -> &'a Rational {
    let mut acc = Rational::zero();
    for (p, m) in law.atoms() {
        acc += m;
        if u < &acc {
            return p;
        }
    }
    &law.atoms().last().expect("measures are nonempty").0
}

type LawCache = HashMap<(usize, Rational, Rational), DiscreteMeasure>;

/// One sampled run. Run `r` uses stream `r` of a ChaCha8 generator seeded
/// with `seed`, so results do not depend on thread scheduling.
pub fn sample_run(cf: &ClosedForm, seed: u64, run: u64) -> Trajectory {
    sample_run_cached(cf, seed, run, &mut LawCache::new())
}

fn sample_run_cached(cf: &ClosedForm, seed: u64, run: u64, cache: &mut LawCache) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rollout(cf, |s, x, prev| {
        let law = cache.entry((s, x.clone(), prev.clone())).or_insert_with(|| cf.worst_case_measure(s, x, prev));
        Ok(pick(law, &dyadic_uniform(&mut rng)).clone())
    })
    .expect("sampled demands are always admissible")
}

/// Seeded Monte Carlo of the policy against the worst-case law.
pub fn simulate(inst: &ProblemInstance, runs: usize, seed: u64) -> Result<Simulation> {
    if runs == 0 {
        return Err(Error::OutOfRange { what: "runs", value: "0".into(), range: ">= 1".into() });
    }
    let cf = ClosedForm::new(inst);
    let t = inst.horizon();
    let acc = (0..runs as u64)
        .into_par_iter()
        .map_init(LawCache::new, |cache, r| sample_run_cached(&cf, seed, r, cache))
        .fold(|| Accumulator::new(t), |acc, tr| acc.push(&tr))
        .reduce(|| Accumulator::new(t), Accumulator::merge);
    let (mean, stderr) = acc.cost.mean_stderr();
    let (demand_means, demand_stderrs) = acc.demand.iter().map(Moments::mean_stderr).unzip();
    Ok(Simulation { cost: CostEstimate { mean, stderr, runs, exact: None }, demand_means, demand_stderrs })
}

/// The first `n` sampled trajectories, identical to the runs `simulate` uses.
pub fn sample_trajectories(inst: &ProblemInstance, n: usize, seed: u64) -> Vec<Trajectory> {
    let cf = ClosedForm::new(inst);
    let mut cache = LawCache::new();
    (0..n as u64).map(|r| sample_run_cached(&cf, seed, r, &mut cache)).collect()
}

/// Writes `run,t,y,x,d,cost,weight` rows with rationals as `p/q`.
pub fn write_trajectories_csv<W: Write>(w: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["run", "t", "y", "x", "d", "cost", "weight"])?;
    for (run, tr) in trajectories.iter().enumerate() {
        for s in &tr.steps {
            out.write_record([
                run.to_string(),
                s.t.to_string(),
                s.y.to_string(),
                s.x.to_string(),
                s.d.to_string(),
                s.cost.to_string(),
                tr.weight.to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// Reads one demand per line. A leading `d` or `demand` header is skipped and
/// blank lines are ignored.
pub fn read_demands_csv<R: Read>(r: R) -> Result<Vec<Rational>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(false).from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("");
        if rec.len() != 1 {
            return Err(Error::Csv(format!("line {}: expected one demand per line", i + 1)));
        }
        if field.is_empty() || (i == 0 && matches!(field, "d" | "demand")) {
            continue;
        }
        out.push(field.parse()?);
    }
    Ok(out)
}
