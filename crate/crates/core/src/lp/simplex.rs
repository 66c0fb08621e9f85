use log::debug;

use super::{LinearProgram, LpSolution, LpStatus};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 64;
const BLAND_AFTER: usize = 60;
const NONE: usize = usize::MAX;

enum Outcome {
    Done,
    Infeasible,
    Unbounded,
    Failure(String),
}

/// Bounded-variable revised simplex.
///
/// Row `i` is written `a_i^T x - r_i = 0` with a logical variable `r_i`
/// carrying the row bounds, so every constraint becomes a variable bound.
/// Variables `0..n` are structural, `n..n+m` are logicals.
#[derive(Debug, Clone)]
pub struct Simplex {
    n: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    x: Vec<f64>,
    head: Vec<usize>,
    pos: Vec<usize>,
    /// Basis inverse, column major: entry (i, k) at `k * m + i`.
    binv: Vec<f64>,
    updates: usize,
    iterations: usize,
    /// Pivot limit of each call to `solve`.
    pub max_iterations: usize,
    start: usize,
}

fn tol_of(b: f64) -> f64 {
    PRIMAL_TOL * (1.0 + b.abs())
}

impl Simplex {
    pub fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.constraints.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(j, v) in &c.coeffs {
                assert!(j < n, "constraint references variable {j} of {n}");
                if v != 0.0 {
                    cols[j].push((i, v));
                }
            }
        }
        let mut cost = lp.objective.clone();
        cost.resize(n + m, 0.0);
        let mut lo = Vec::with_capacity(n + m);
        let mut up = Vec::with_capacity(n + m);
        for &(l, u) in &lp.bounds {
            lo.push(l);
            up.push(u);
        }
        for c in &lp.constraints {
            let (l, u) = c.bounds();
            lo.push(l);
            up.push(u);
        }
        let mut x = vec![0.0; n + m];
        for j in 0..n {
            x[j] = rest_value(lo[j], up[j], 0.0);
        }
        let head: Vec<usize> = (n..n + m).collect();
        let mut pos = vec![NONE; n + m];
        for (i, &j) in head.iter().enumerate() {
            pos[j] = i;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = -1.0;
        }
        let max_iterations = 50 * (n + m) + 10_000;
        let mut s = Simplex {
            n,
            m,
            cols,
            cost,
            lo,
            up,
            x,
            head,
            pos,
            binv,
            updates: 0,
            iterations: 0,
            max_iterations,
            start: 0,
        };
        s.recompute_basics();
        s
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Replaces the objective over structural variables.
    pub fn set_objective(&mut self, c: &[f64]) {
        assert_eq!(c.len(), self.n);
        self.cost[..self.n].copy_from_slice(c);
    }

    pub fn set_var_bounds(&mut self, j: usize, lo: f64, up: f64) {
        self.set_bounds_internal(j, lo, up);
    }

    pub fn set_row_bounds(&mut self, i: usize, lo: f64, up: f64) {
        self.set_bounds_internal(self.n + i, lo, up);
    }

    fn set_bounds_internal(&mut self, j: usize, lo: f64, up: f64) {
        self.lo[j] = lo;
        self.up[j] = up;
        if self.pos[j] == NONE {
            self.x[j] = rest_value(lo, up, self.x[j]);
        }
    }

    /// Appends the row `lo <= a^T x <= up`; its logical enters the basis.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], lo: f64, up: f64) -> usize {
        let m = self.m;
        let n = self.n;
        let i_new = m;
        for &(j, v) in coeffs {
            assert!(j < n);
            if v != 0.0 {
                self.cols[j].push((i_new, v));
            }
        }
        // New logical variable index n + m.
        self.cost.push(0.0);
        self.lo.push(lo);
        self.up.push(up);
        let act: f64 = coeffs.iter().map(|(j, v)| v * self.x[*j]).sum();
        self.x.push(act);
        self.pos.push(m);
        self.head.push(n + m);
        // Row of the new basis restricted to basic columns.
        let mut rb = vec![0.0; m];
        for &(j, v) in coeffs {
            let p = self.pos[j];
            if p != NONE && p < m {
                rb[p] += v;
            }
        }
        let m1 = m + 1;
        let mut nb = vec![0.0; m1 * m1];
        for k in 0..m {
            let col = &self.binv[k * m..(k + 1) * m];
            nb[k * m1..k * m1 + m].copy_from_slice(col);
            let mut s = 0.0;
            for i in 0..m {
                s += rb[i] * col[i];
            }
            nb[k * m1 + m] = s;
        }
        nb[m * m1 + m] = -1.0;
        self.binv = nb;
        self.m = m1;
        i_new
    }

    fn column(&self, j: usize) -> ColIter<'_> {
        if j < self.n {
            ColIter::Sparse(self.cols[j].iter())
        } else {
            ColIter::Unit(Some(j - self.n))
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut a = vec![0.0; m];
        for (k, v) in self.column(j) {
            let col = &self.binv[k * m..(k + 1) * m];
            for i in 0..m {
                a[i] += v * col[i];
            }
        }
        a
    }

    fn prices(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|k| {
                let col = &self.binv[k * m..(k + 1) * m];
                cb.iter().zip(col).map(|(c, b)| c * b).sum()
            })
            .collect()
    }

    fn dot_col(&self, pi: &[f64], j: usize) -> f64 {
        self.column(j).map(|(k, v)| pi[k] * v).sum()
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut h = vec![0.0; m];
        for j in 0..self.n + m {
            if self.pos[j] == NONE && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (k, v) in self.column(j) {
                    h[k] -= v * xj;
                }
            }
        }
        let mut xb = vec![0.0; m];
        for (k, hk) in h.iter().enumerate() {
            if *hk != 0.0 {
                let col = &self.binv[k * m..(k + 1) * m];
                for i in 0..m {
                    xb[i] += col[i] * hk;
                }
            }
        }
        for i in 0..m {
            self.x[self.head[i]] = xb[i];
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination, replacing
    /// dependent basic columns by logicals.
    fn refactor(&mut self) -> Result<(), String> {
        for _attempt in 0..3 {
            let m = self.m;
            // Row-major working copy of B.
            let mut a = vec![0.0; m * m];
            for (c, &j) in self.head.iter().enumerate() {
                for (k, v) in self.column(j) {
                    a[k * m + c] = v;
                }
            }
            let mut inv = vec![0.0; m * m];
            for i in 0..m {
                inv[i * m + i] = 1.0;
            }
            let mut pivot_row = vec![NONE; m];
            let mut row_used = vec![false; m];
            let mut dependent = Vec::new();
            for c in 0..m {
                let mut best = NONE;
                let mut bv = 0.0;
                for r in 0..m {
                    if !row_used[r] {
                        let v = a[r * m + c].abs();
                        if v > bv {
                            bv = v;
                            best = r;
                        }
                    }
                }
                if best == NONE || bv < SINGULAR_TOL {
                    dependent.push(c);
                    continue;
                }
                let p = best;
                row_used[p] = true;
                pivot_row[c] = p;
                let piv = a[p * m + c];
                for k in 0..m {
                    a[p * m + k] /= piv;
                    inv[p * m + k] /= piv;
                }
                for r in 0..m {
                    if r != p {
                        let f = a[r * m + c];
                        if f != 0.0 {
                            for k in 0..m {
                                a[r * m + k] -= f * a[p * m + k];
                                inv[r * m + k] -= f * inv[p * m + k];
                            }
                        }
                    }
                }
            }
            if dependent.is_empty() {
                let mut binv = vec![0.0; m * m];
                for c in 0..m {
                    let p = pivot_row[c];
                    for k in 0..m {
                        binv[k * m + c] = inv[p * m + k];
                    }
                }
                self.binv = binv;
                self.updates = 0;
                self.recompute_basics();
                return Ok(());
            }
            let free_rows: Vec<usize> = (0..m).filter(|r| !row_used[*r]).collect();
            for (slot, r) in dependent.into_iter().zip(free_rows) {
                let old = self.head[slot];
                self.pos[old] = NONE;
                self.x[old] = rest_value(self.lo[old], self.up[old], self.x[old]);
                let new = self.n + r;
                if self.pos[new] != NONE {
                    return Err("basis repair collision".into());
                }
                self.head[slot] = new;
                self.pos[new] = slot;
            }
        }
        Err("basis matrix remained singular after repair".into())
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[r];
        for k in 0..m {
            let col = &mut self.binv[k * m..(k + 1) * m];
            let t = col[r] / ar;
            if t != 0.0 {
                for i in 0..m {
                    col[i] -= alpha[i] * t;
                }
            }
            col[r] = t;
        }
        let leaving = self.head[r];
        self.pos[leaving] = NONE;
        self.head[r] = q;
        self.pos[q] = r;
        self.updates += 1;
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let xj = self.x[j];
        if xj < self.lo[j] - tol_of(self.lo[j]) {
            self.lo[j] - xj
        } else if xj > self.up[j] + tol_of(self.up[j]) {
            xj - self.up[j]
        } else {
            0.0
        }
    }

    fn primal_feasible(&self) -> bool {
        self.head.iter().all(|&j| self.infeasibility(j) == 0.0)
    }

    fn reduced_costs(&self, pi: &[f64]) -> Vec<f64> {
        (0..self.n + self.m)
            .map(|j| {
                if self.pos[j] != NONE {
                    0.0
                } else {
                    self.cost[j] - self.dot_col(pi, j)
                }
            })
            .collect()
    }

    fn basic_costs(&self) -> Vec<f64> {
        self.head.iter().map(|&j| self.cost[j]).collect()
    }

    fn dual_feasible(&self) -> bool {
        let pi = self.prices(&self.basic_costs());
        for j in 0..self.n + self.m {
            if self.pos[j] != NONE {
                continue;
            }
            let d = self.cost[j] - self.dot_col(&pi, j);
            let (inc, dec) = self.mobility(j);
            if inc && d < -DUAL_TOL {
                return false;
            }
            if dec && d > DUAL_TOL {
                return false;
            }
        }
        true
    }

    fn mobility(&self, j: usize) -> (bool, bool) {
        let xj = self.x[j];
        let inc = self.up[j] == f64::INFINITY || xj < self.up[j] - tol_of(self.up[j]);
        let dec = self.lo[j] == f64::NEG_INFINITY || xj > self.lo[j] + tol_of(self.lo[j]);
        (inc, dec)
    }

    fn budget_exceeded(&self) -> bool {
        self.iterations - self.start > self.max_iterations
    }

    /// Primal simplex. In phase one the objective is the sum of bound
    /// violations of basic variables.
    fn primal(&mut self, phase1: bool) -> Outcome {
        let mut degenerate = 0usize;
        loop {
            if self.budget_exceeded() {
                return Outcome::Failure("iteration limit in primal simplex".into());
            }
            if self.updates >= REFACTOR_EVERY {
                if let Err(e) = self.refactor() {
                    return Outcome::Failure(e);
                }
            }
            let cb: Vec<f64> = if phase1 {
                self.head
                    .iter()
                    .map(|&j| {
                        let xj = self.x[j];
                        if xj < self.lo[j] - tol_of(self.lo[j]) {
                            -1.0
                        } else if xj > self.up[j] + tol_of(self.up[j]) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            } else {
                self.basic_costs()
            };
            if phase1 && cb.iter().all(|c| *c == 0.0) {
                return Outcome::Done;
            }
            let pi = self.prices(&cb);
            let bland = degenerate > BLAND_AFTER;
            let mut enter = NONE;
            let mut dir = 0.0;
            let mut best = 0.0;
            for j in 0..self.n + self.m {
                if self.pos[j] != NONE {
                    continue;
                }
                let cj = if phase1 { 0.0 } else { self.cost[j] };
                let d = cj - self.dot_col(&pi, j);
                let (inc, dec) = self.mobility(j);
                let (score, dj) = if inc && d < -DUAL_TOL {
                    (-d, 1.0)
                } else if dec && d > DUAL_TOL {
                    (d, -1.0)
                } else {
                    continue;
                };
                if bland {
                    enter = j;
                    dir = dj;
                    break;
                }
                if score > best {
                    best = score;
                    enter = j;
                    dir = dj;
                }
            }
            if enter == NONE {
                if phase1 {
                    return if self.primal_feasible() {
                        Outcome::Done
                    } else {
                        Outcome::Infeasible
                    };
                }
                return Outcome::Done;
            }
            let q = enter;
            let alpha = self.ftran(q);
            // Harris two-pass ratio test.
            let mut relaxed = f64::INFINITY;
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            for i in 0..self.m {
                let a = alpha[i] * dir;
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.head[i];
                let xj = self.x[j];
                let (lo, up) = (self.lo[j], self.up[j]);
                let target = if a > 0.0 {
                    // basic decreases
                    if phase1 && xj > up + tol_of(up) {
                        up
                    } else if phase1 && xj < lo - tol_of(lo) {
                        continue;
                    } else {
                        lo
                    }
                } else if phase1 && xj < lo - tol_of(lo) {
                    lo
                } else if phase1 && xj > up + tol_of(up) {
                    continue;
                } else {
                    up
                };
                if !target.is_finite() {
                    continue;
                }
                let t_exact = ((xj - target) / a).max(0.0);
                let t_relax = ((xj - target).abs() + tol_of(target)) / a.abs();
                relaxed = relaxed.min(t_relax);
                cands.push((i, t_exact, target));
            }
            let flip = up_minus_lo(self.lo[q], self.up[q]);
            if cands.is_empty() && !flip.is_finite() {
                if phase1 {
                    return Outcome::Failure("phase one ray".into());
                }
                return Outcome::Unbounded;
            }
            let mut leave = NONE;
            let mut theta = f64::INFINITY;
            let mut leave_target = 0.0;
            if !cands.is_empty() {
                let mut best_piv = -1.0;
                for &(i, t, target) in &cands {
                    if t <= relaxed {
                        let key = if bland {
                            -(self.head[i] as f64)
                        } else {
                            alpha[i].abs()
                        };
                        if key > best_piv {
                            best_piv = key;
                            leave = i;
                            theta = t;
                            leave_target = target;
                        }
                    }
                }
            }
            if flip <= theta {
                // Bound flip of the entering variable.
                let step = flip * dir;
                self.x[q] += step;
                for i in 0..self.m {
                    let j = self.head[i];
                    self.x[j] -= alpha[i] * step;
                }
                self.x[q] = if dir > 0.0 { self.up[q] } else { self.lo[q] };
                self.iterations += 1;
                degenerate = 0;
                continue;
            }
            let step = theta * dir;
            self.x[q] += step;
            for i in 0..self.m {
                let j = self.head[i];
                self.x[j] -= alpha[i] * step;
            }
            let lj = self.head[leave];
            self.x[lj] = leave_target;
            self.pivot(leave, q, &alpha);
            self.iterations += 1;
            if theta < 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
        }
    }

    fn dual(&mut self) -> Outcome {
        let mut stalls = 0usize;
        loop {
            if self.budget_exceeded() {
                return Outcome::Failure("iteration limit in dual simplex".into());
            }
            if self.updates >= REFACTOR_EVERY {
                if let Err(e) = self.refactor() {
                    return Outcome::Failure(e);
                }
            }
            let bland = stalls > BLAND_AFTER;
            let mut r = NONE;
            let mut worst = 0.0;
            for i in 0..self.m {
                let j = self.head[i];
                let v = self.infeasibility(j);
                if v > 0.0 {
                    if bland {
                        if r == NONE || j < self.head[r] {
                            r = i;
                        }
                    } else {
                        let s = v / (1.0 + self.lo[j].abs().min(self.up[j].abs()));
                        if s > worst {
                            worst = s;
                            r = i;
                        }
                    }
                }
            }
            if r == NONE {
                return Outcome::Done;
            }
            let p = self.head[r];
            let (target, s) = if self.x[p] < self.lo[p] {
                (self.lo[p], 1.0)
            } else {
                (self.up[p], -1.0)
            };
            let m = self.m;
            let rho: Vec<f64> = (0..m).map(|k| self.binv[k * m + r]).collect();
            let pi = self.prices(&self.basic_costs());
            let mut enter = NONE;
            let mut best_ratio = f64::INFINITY;
            let mut best_piv = 0.0;
            for j in 0..self.n + m {
                if self.pos[j] != NONE {
                    continue;
                }
                let (inc, dec) = self.mobility(j);
                if !inc && !dec {
                    continue;
                }
                let arj = self.dot_col(&rho, j);
                if arj.abs() <= PIVOT_TOL {
                    continue;
                }
                let d = self.cost[j] - self.dot_col(&pi, j);
                let ratio = if inc && -s * arj > 0.0 {
                    d.max(0.0) / arj.abs()
                } else if dec && s * arj > 0.0 {
                    (-d).max(0.0) / arj.abs()
                } else {
                    continue;
                };
                let better = if bland {
                    ratio < best_ratio - 1e-12
                        || (ratio <= best_ratio + 1e-12 && (enter == NONE || j < enter))
                } else {
                    ratio < best_ratio - 1e-12
                        || (ratio <= best_ratio + 1e-12 && arj.abs() > best_piv)
                };
                if better {
                    best_ratio = ratio;
                    best_piv = arj.abs();
                    enter = j;
                }
            }
            if enter == NONE {
                return Outcome::Infeasible;
            }
            let q = enter;
            let alpha = self.ftran(q);
            if alpha[r].abs() <= PIVOT_TOL * 0.1 {
                if let Err(e) = self.refactor() {
                    return Outcome::Failure(e);
                }
                stalls += 1;
                continue;
            }
            let dq = (self.x[p] - target) / alpha[r];
            self.x[q] += dq;
            for i in 0..m {
                let j = self.head[i];
                self.x[j] -= alpha[i] * dq;
            }
            self.x[p] = target;
            self.pivot(r, q, &alpha);
            self.iterations += 1;
            if best_ratio < 1e-12 {
                stalls += 1;
            } else {
                stalls = 0;
            }
        }
    }

    /// Solves from the current basis.
    pub fn solve(&mut self) -> LpStatus {
        self.start = self.iterations;
        match self.solve_from_basis() {
            LpStatus::NumericFailure(e) => {
                debug!("simplex restart from the slack basis after: {e}");
                self.reset_basis();
                self.start = self.iterations;
                self.solve_from_basis()
            }
            st => st,
        }
    }

    /// Replaces the basis by the logical one.
    fn reset_basis(&mut self) {
        let (n, m) = (self.n, self.m);
        self.head = (n..n + m).collect();
        self.pos = vec![NONE; n + m];
        for (i, &j) in self.head.iter().enumerate() {
            self.pos[j] = i;
        }
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = -1.0;
        }
        self.updates = 0;
        for j in 0..n {
            self.x[j] = rest_value(self.lo[j], self.up[j], self.x[j]);
        }
        self.recompute_basics();
    }

    fn solve_from_basis(&mut self) -> LpStatus {
        if let Err(e) = self.refactor() {
            return LpStatus::NumericFailure(e);
        }
        for _round in 0..4 {
            if !self.primal_feasible() {
                if self.dual_feasible() {
                    match self.dual() {
                        Outcome::Done => {}
                        Outcome::Infeasible => {
                            // Confirm with phase one on a fresh factorization.
                            if let Err(e) = self.refactor() {
                                return LpStatus::NumericFailure(e);
                            }
                            match self.primal(true) {
                                Outcome::Done => {}
                                Outcome::Infeasible => return LpStatus::Infeasible,
                                Outcome::Unbounded => {
                                    return LpStatus::NumericFailure("phase one unbounded".into())
                                }
                                Outcome::Failure(e) => return LpStatus::NumericFailure(e),
                            }
                        }
                        Outcome::Unbounded => {
                            return LpStatus::NumericFailure("dual simplex unbounded".into())
                        }
                        Outcome::Failure(e) => return LpStatus::NumericFailure(e),
                    }
                } else {
                    match self.primal(true) {
                        Outcome::Done => {}
                        Outcome::Infeasible => return LpStatus::Infeasible,
                        Outcome::Unbounded => {
                            return LpStatus::NumericFailure("phase one unbounded".into())
                        }
                        Outcome::Failure(e) => return LpStatus::NumericFailure(e),
                    }
                }
            }
            match self.primal(false) {
                Outcome::Done => {}
                Outcome::Unbounded => return LpStatus::Unbounded,
                Outcome::Infeasible => return LpStatus::Infeasible,
                Outcome::Failure(e) => return LpStatus::NumericFailure(e),
            }
            if let Err(e) = self.refactor() {
                return LpStatus::NumericFailure(e);
            }
            if self.primal_feasible() && self.dual_feasible() {
                return LpStatus::Optimal(self.solution());
            }
        }
        LpStatus::NumericFailure("simplex failed to settle".into())
    }

    fn solution(&self) -> LpSolution {
        let pi = self.prices(&self.basic_costs());
        let d = self.reduced_costs(&pi);
        let x = self.x[..self.n].to_vec();
        let value = x.iter().zip(&self.cost).map(|(a, b)| a * b).sum();
        LpSolution {
            x,
            value,
            duals: pi,
            reduced_costs: d[..self.n].to_vec(),
        }
    }

    /// Current structural values.
    pub fn point(&self) -> &[f64] {
        &self.x[..self.n]
    }
}

fn up_minus_lo(lo: f64, up: f64) -> f64 {
    if lo.is_finite() && up.is_finite() {
        up - lo
    } else {
        f64::INFINITY
    }
}

fn rest_value(lo: f64, up: f64, cur: f64) -> f64 {
    match (lo.is_finite(), up.is_finite()) {
        (true, true) => {
            if (cur - lo).abs() <= (cur - up).abs() {
                lo
            } else {
                up
            }
        }
        (true, false) => lo,
        (false, true) => up,
        (false, false) => 0.0,
    }
}

enum ColIter<'a> {
    Sparse(std::slice::Iter<'a, (usize, f64)>),
    Unit(Option<usize>),
}

impl Iterator for ColIter<'_> {
    type Item = (usize, f64);
    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColIter::Sparse(it) => it.next().copied(),
            ColIter::Unit(o) => o.take().map(|i| (i, -1.0)),
        }
    }
}
