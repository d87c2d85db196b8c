use std::sync::OnceLock;

use crate::model::ProblemInstance;
use crate::rational::Rational;

/// One horizon's worth of breakpoints, indexed by `j + 1` for `j in [-1, s]`.
#[derive(Debug, Clone)]
struct Row {
    a: Vec<Rational>,
    b: Vec<Rational>,
}

/// The breakpoint ladders `A^s_j` and `B^s_j` for `1 <= s <= max_row`.
///
/// `A^s_j = U * prod_{k=j+1}^{s-1} k / (b + k)` for `j <= s - 1`,
/// `A^s_s = (b + s) U / s`, and `B^s_j = j A^s_j / (b + s)`.
///
/// Rows are computed on first access and memoized behind a [`OnceLock`], so a
/// table can be shared across threads. Only the rows that are actually touched
/// get built, which keeps long horizons cheap when a caller needs just the top
/// two rows.
#[derive(Debug)]
pub struct ThresholdTable {
    cap: Rational,
    b: Rational,
    rows: Vec<OnceLock<Row>>,
}

impl Clone for ThresholdTable {
    fn clone(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|cell| {
                let fresh = OnceLock::new();
                if let Some(r) = cell.get() {
                    let _ = fresh.set(r.clone());
                }
                fresh
            })
            .collect();
        ThresholdTable { cap: self.cap.clone(), b: self.b.clone(), rows }
    }
}

impl ThresholdTable {
    /// Table covering rows `1..=max_row`.
    pub fn new(cap: Rational, b: Rational, max_row: usize) -> Self {
        assert!(max_row >= 1);
        ThresholdTable { cap, b, rows: (0..max_row).map(|_| OnceLock::new()).collect() }
    }

    /// Rows `1..=T+1`, enough for every closed-form quantity at horizons up to `T`.
    pub fn for_instance(inst: &ProblemInstance) -> Self {
        Self::new(inst.cap().clone(), inst.b().clone(), inst.horizon() + 1)
    }

    pub fn max_row(&self) -> usize {
        self.rows.len()
    }

    /// Largest horizon whose quantities this table can evaluate.
    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn cap(&self) -> &Rational {
        &self.cap
    }

    pub fn b(&self) -> &Rational {
        &self.b
    }

    fn row(&self, s: usize) -> &Row {
        assert!(s >= 1 && s <= self.rows.len(), "threshold row {s} outside 1..={}", self.rows.len());
        self.rows[s - 1].get_or_init(|| self.build_row(s))
    }

    fn build_row(&self, s: usize) -> Row {
        // a[j + 1] for j in -1..=s
        let mut a = vec![Rational::zero(); s + 2];
        a[s] = self.cap.clone(); // j = s - 1
        for j in (0..s.saturating_sub(1)).rev() {
            // A_j = A_{j+1} * (j+1) / (b + j + 1)
            let k = Rational::from(j + 1);
            let factor = &k / &(&self.b + &k);
            a[j + 1] = &a[j + 2] * &factor;
        }
        // A_{-1} carries the k = 0 factor.
        a[0] = Rational::zero();
        let sr = Rational::from(s);
        a[s + 1] = &(&self.b + &sr) * &self.cap / &sr;
        let denom = &self.b + &sr;
        let b = (0..s + 2)
            .map(|idx| {
                if idx == 0 {
                    Rational::zero()
                } else {
                    let j = Rational::from(idx - 1);
                    &j * &a[idx] / &denom
                }
            })
            .collect();
        Row { a, b }
    }

    /// Forces every row to be built.
    pub fn populate(&self) {
        for s in 1..=self.rows.len() {
            self.row(s);
        }
    }

    /// `A^s_j`, `j in [-1, s]`.
    pub fn a(&self, s: usize, j: isize) -> &Rational {
        assert!(j >= -1 && j <= s as isize, "A index {j} outside [-1, {s}]");
        &self.row(s).a[(j + 1) as usize]
    }

    /// `B^s_j`, `j in [-1, s]`.
    pub fn b_at(&self, s: usize, j: isize) -> &Rational {
        assert!(j >= -1 && j <= s as isize, "B index {j} outside [-1, {s}]");
        &self.row(s).b[(j + 1) as usize]
    }

    /// `Gamma^s_mu`: 0 when `mu = 0`, else `j + 1` for
    /// `mu in (A^{s+1}_j, A^{s+1}_{j+1}]`. Reads row `s + 1`.
    pub fn gamma(&self, s: usize, mu: &Rational) -> usize {
        if !mu.is_positive() {
            return 0;
        }
        let row = &self.row(s + 1).a;
        // Count A^{s+1}_m < mu over m in [0, s].
        row[1..=s + 1].partition_point(|a| a < mu)
    }

    /// `Upsilon^s_x`: `s` when `x = U`, else `j` for `x in [B^{s+1}_j, B^{s+1}_{j+1})`.
    pub fn upsilon(&self, s: usize, x: &Rational) -> usize {
        if x >= &self.cap {
            return s;
        }
        let row = &self.row(s + 1).b;
        // Count B^{s+1}_m <= x over m in [1, s + 1].
        row[2..=s + 2].partition_point(|bm| bm <= x)
    }

    /// `beta^s_d = B^s_{Gamma^s_d}`.
    pub fn beta(&self, s: usize, d: &Rational) -> Rational {
        self.b_at(s, self.gamma(s, d) as isize).clone()
    }

    /// Checks the ladder invariants for rows `1..=upto`: the boundary values,
    /// strict monotonicity in `j`, monotonicity in `s`, and interlacing.
    pub fn check_invariants(&self, upto: usize) -> Result<(), String> {
        let u = &self.cap;
        for s in 1..=upto {
            let si = s as isize;
            if !self.a(s, -1).is_zero() || !self.b_at(s, -1).is_zero() || !self.b_at(s, 0).is_zero() {
                return Err(format!("row {s}: A_-1, B_-1, B_0 must vanish"));
            }
            if self.a(s, si - 1) != u || self.b_at(s, si) != u {
                return Err(format!("row {s}: A_(s-1) and B_s must equal U"));
            }
            for j in -1..si {
                if self.a(s, j) >= self.a(s, j + 1) {
                    return Err(format!("row {s}: A not increasing at j={j}"));
                }
                if j >= 0 && self.b_at(s, j) >= self.b_at(s, j + 1) {
                    return Err(format!("row {s}: B not increasing at j={j}"));
                }
            }
            if s < upto {
                for j in 0..si {
                    if self.a(s + 1, j) > self.a(s, j) || self.b_at(s + 1, j) > self.b_at(s, j) {
                        return Err(format!("rows {s},{}: not decreasing in s at j={j}", s + 1));
                    }
                }
                for j in 0..=si - 2 {
                    let lo = self.a(s, j);
                    let mid = self.a(s + 1, j + 1);
                    let hi = self.a(s, j + 1);
                    if !(lo < mid && mid < hi) {
                        return Err(format!("rows {s},{}: interlacing fails at j={j}", s + 1));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Threshold table for an instance, covering every row its closed form needs.
pub fn build_thresholds(inst: &ProblemInstance) -> ThresholdTable {
    ThresholdTable::for_instance(inst)
}
