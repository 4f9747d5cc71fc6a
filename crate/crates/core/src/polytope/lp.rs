//! Dense two-phase tableau simplex with Bland's rule, generic over the field.
//!
//! The `f64` instantiation uses fixed tolerances and re-checks its answer
//! against the original problem; the `BigRational` one is exact.

use std::fmt::Debug;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Pivot and reduced-cost tolerance of the floating-point path.
pub const FLOAT_TOL: f64 = 1e-9;

const ITERATION_CAP: usize = 50_000;

pub trait LpField: Clone + Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn is_zero(&self) -> bool;
    fn is_positive(&self) -> bool;
    fn is_negative(&self) -> bool;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn lt(&self, o: &Self) -> bool;
    /// True zero, no tolerance; used to skip work on sparse rows.
    fn exact_zero(&self) -> bool;
    /// Flush values that are rounding noise to exact zero.
    fn clean(&mut self) {}
    fn render(&self) -> String;
}

impl LpField for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_zero(&self) -> bool {
        self.abs() <= FLOAT_TOL
    }
    fn is_positive(&self) -> bool {
        *self > FLOAT_TOL
    }
    fn is_negative(&self) -> bool {
        *self < -FLOAT_TOL
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
    fn exact_zero(&self) -> bool {
        *self == 0.0
    }
    fn clean(&mut self) {
        if self.abs() < 1e-13 {
            *self = 0.0;
        }
    }
    fn render(&self) -> String {
        format!("{self}")
    }
}

impl LpField for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num_traits::One::one()
    }
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite coefficient")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
    fn exact_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub kind: ConstraintKind,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarBound {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Default for VarBound {
    fn default() -> Self {
        VarBound {
            lower: Some(0.0),
            upper: None,
        }
    }
}

/// maximize objective·x subject to the constraints and bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<VarBound>,
}

impl LinearProgram {
    /// All variables nonnegative, no constraints yet.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            constraints: Vec::new(),
            bounds: vec![VarBound::default(); n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coefficients: Vec<f64>, kind: ConstraintKind, rhs: f64) {
        self.constraints.push(Constraint { coefficients, kind, rhs });
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.bounds.len() != n {
            return invalid(format!("{} bounds for {n} variables", self.bounds.len()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coefficients.len() != n {
                return invalid(format!("constraint {i} has {} coefficients, expected {n}", c.coefficients.len()));
            }
            if !c.rhs.is_finite() || c.coefficients.iter().any(|v| !v.is_finite()) {
                return invalid(format!("constraint {i} has non-finite data"));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return invalid("objective has non-finite coefficients");
        }
        for (j, b) in self.bounds.iter().enumerate() {
            let bad = |v: Option<f64>| v.is_some_and(|v| !v.is_finite());
            if bad(b.lower) || bad(b.upper) {
                return invalid(format!("bound of variable {j} is not finite"));
            }
            if let (Some(l), Some(u)) = (b.lower, b.upper) {
                if l > u {
                    return invalid(format!("variable {j} has lower bound {l} above upper bound {u}"));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of the constraints and bounds at `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for c in &self.constraints {
            let lhs: f64 = c.coefficients.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match c.kind {
                ConstraintKind::Le => lhs - c.rhs,
                ConstraintKind::Ge => c.rhs - lhs,
                ConstraintKind::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (b, v) in self.bounds.iter().zip(x) {
            if let Some(l) = b.lower {
                worst = worst.max(l - v);
            }
            if let Some(u) = b.upper {
                worst = worst.max(v - u);
            }
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    SolverFailure,
}

/// Exact values rendered as "p/q" strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactCertificate {
    pub optimum: String,
    pub primal: Vec<String>,
    pub dual: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub status: LpStatus,
    pub optimum: Option<f64>,
    pub primal: Vec<f64>,
    /// One multiplier per constraint: ≥ 0 for `<=`, ≤ 0 for `>=`, free for `=`.
    /// Together with `bound_duals` it satisfies objective = Σ dual·rhs + Σ bound terms.
    pub dual: Vec<f64>,
    /// Multipliers of finite upper bounds, by variable (zero where none).
    pub bound_duals: Vec<f64>,
    /// For infeasible problems: row multipliers y with yᵀA ≥ 0 on the
    /// (nonnegative, shifted) variables and yᵀb < 0.
    pub farkas: Option<Vec<f64>>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub duality_gap: f64,
    pub exact: Option<ExactCertificate>,
    pub message: Option<String>,
}

impl LpResult {
    fn failure(n_vars: usize, n_rows: usize, iterations: usize, message: String) -> Self {
        LpResult {
            status: LpStatus::SolverFailure,
            optimum: None,
            primal: vec![0.0; n_vars],
            dual: vec![0.0; n_rows],
            bound_duals: vec![0.0; n_vars],
            farkas: None,
            iterations,
            primal_residual: f64::NAN,
            duality_gap: f64::NAN,
            exact: None,
            message: Some(message),
        }
    }
}

/// How an original variable maps onto nonnegative standard-form columns:
/// x = offset + Σ sign·x'_col.
#[derive(Debug, Clone)]
struct VarMap {
    offset: f64,
    parts: Vec<(usize, f64)>,
}

struct StandardForm<T> {
    /// Rows over standard columns, already including slack/surplus columns.
    rows: Vec<Vec<T>>,
    rhs: Vec<T>,
    cost: Vec<T>,
    cost_offset: f64,
    /// +1 or −1: the row was multiplied by this to make its rhs nonnegative.
    row_sign: Vec<f64>,
    maps: Vec<VarMap>,
    /// For each standard row that encodes an upper bound: the variable.
    bound_row_var: Vec<Option<usize>>,
}

fn standardize<T: LpField>(p: &LinearProgram) -> StandardForm<T> {
    let n = p.n_vars();
    let mut maps = Vec::with_capacity(n);
    let mut n_struct = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new(); // (std column, limit)
    for b in &p.bounds {
        match (b.lower, b.upper) {
            (Some(l), u) => {
                maps.push(VarMap {
                    offset: l,
                    parts: vec![(n_struct, 1.0)],
                });
                if let Some(u) = u {
                    bound_rows.push((n_struct, u - l));
                }
                n_struct += 1;
            }
            (None, Some(u)) => {
                maps.push(VarMap {
                    offset: u,
                    parts: vec![(n_struct, -1.0)],
                });
                n_struct += 1;
            }
            (None, None) => {
                maps.push(VarMap {
                    offset: 0.0,
                    parts: vec![(n_struct, 1.0), (n_struct + 1, -1.0)],
                });
                n_struct += 2;
            }
        }
    }
    // The variable owning each bound row, for reporting.
    let mut bound_row_var = vec![None; p.constraints.len()];
    for &(col, _) in &bound_rows {
        let var = maps.iter().position(|m| m.parts[0].0 == col).expect("bound column");
        bound_row_var.push(Some(var));
    }

    let n_slack = p.constraints.iter().filter(|c| c.kind != ConstraintKind::Eq).count() + bound_rows.len();
    let width = n_struct + n_slack;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut row_sign = Vec::new();
    let mut slack = n_struct;
    let mut push_row = |mut row: Vec<f64>, kind: ConstraintKind, mut b: f64| {
        match kind {
            ConstraintKind::Le => {
                row[slack] = 1.0;
                slack += 1;
            }
            ConstraintKind::Ge => {
                row[slack] = -1.0;
                slack += 1;
            }
            ConstraintKind::Eq => {}
        }
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        if sign < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
            b = -b;
        }
        rows.push(row.into_iter().map(T::from_f64).collect::<Vec<T>>());
        rhs.push(T::from_f64(b));
        row_sign.push(sign);
    };
    for c in &p.constraints {
        let mut row = vec![0.0; width];
        let mut b = c.rhs;
        for (j, &a) in c.coefficients.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            b -= a * maps[j].offset;
            for &(col, s) in &maps[j].parts {
                row[col] += a * s;
            }
        }
        push_row(row, c.kind, b);
    }
    for &(col, limit) in &bound_rows {
        let mut row = vec![0.0; width];
        row[col] = 1.0;
        push_row(row, ConstraintKind::Le, limit);
    }
    let mut cost = vec![T::zero(); width];
    let mut cost_offset = 0.0;
    for (j, &c) in p.objective.iter().enumerate() {
        cost_offset += c * maps[j].offset;
        for &(col, s) in &maps[j].parts {
            cost[col] = T::from_f64(c * s);
        }
    }
    StandardForm {
        rows,
        rhs,
        cost,
        cost_offset,
        row_sign,
        maps,
        bound_row_var,
    }
}

/// Outcome of the generic simplex on a standard form.
pub(crate) struct RawSolution<T> {
    pub status: LpStatus,
    /// Standard-form column values (structural and slack).
    pub columns: Vec<T>,
    /// Row multipliers in the sign convention of the standardized rows.
    pub row_duals: Vec<T>,
    pub phase1_duals: Option<Vec<T>>,
    pub value: T,
    pub iterations: usize,
}

struct Tableau<T> {
    m: usize,
    width: usize, // structural + slack columns
    /// m rows of width + m (artificials) + 1 (rhs).
    t: Vec<Vec<T>>,
    /// Reduced costs followed by −objective in the last slot.
    obj: Vec<T>,
    basis: Vec<usize>,
    iterations: usize,
}

impl<T: LpField> Tableau<T> {
    fn rhs_col(&self) -> usize {
        self.width + self.m
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let cols = self.rhs_col() + 1;
        let p = self.t[r][c].clone();
        for j in 0..cols {
            if !self.t[r][j].exact_zero() {
                self.t[r][j] = self.t[r][j].div(&p);
            }
        }
        self.t[r][c] = T::one();
        let nz: Vec<usize> = (0..cols).filter(|&j| !self.t[r][j].exact_zero()).collect();
        let pivot_row = self.t[r].clone();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i][c].clone();
            if exact_zero(&f) {
                continue;
            }
            for &j in &nz {
                let v = self.t[i][j].sub(&f.mul(&pivot_row[j]));
                self.t[i][j] = v;
                self.t[i][j].clean();
            }
            self.t[i][c] = T::zero();
        }
        let f = self.obj[c].clone();
        if !exact_zero(&f) {
            for &j in &nz {
                let v = self.obj[j].sub(&f.mul(&pivot_row[j]));
                self.obj[j] = v;
                self.obj[j].clean();
            }
            self.obj[c] = T::zero();
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Bland's rule over columns `< limit`. Returns false on unboundedness.
    fn run(&mut self, limit: usize) -> std::result::Result<(), LpStatus> {
        let rhs = self.rhs_col();
        loop {
            if self.iterations >= ITERATION_CAP {
                return Err(LpStatus::SolverFailure);
            }
            let Some(c) = (0..limit).find(|&j| self.obj[j].is_positive()) else {
                return Ok(());
            };
            let mut best: Option<(usize, T)> = None;
            for i in 0..self.m {
                if !self.t[i][c].is_positive() {
                    continue;
                }
                let ratio = self.t[i][rhs].div(&self.t[i][c]);
                let better = match &best {
                    None => true,
                    Some((bi, br)) => ratio.lt(br) || (!br.lt(&ratio) && self.basis[i] < self.basis[*bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                None => return Err(LpStatus::Unbounded),
            }
        }
    }

    fn set_objective(&mut self, cost: &[T]) {
        let rhs = self.rhs_col();
        let mut obj = vec![T::zero(); rhs + 1];
        for (j, c) in cost.iter().enumerate() {
            obj[j] = c.clone();
        }
        for i in 0..self.m {
            let cb = if self.basis[i] < cost.len() { cost[self.basis[i]].clone() } else { T::zero() };
            if exact_zero(&cb) {
                continue;
            }
            for j in 0..=rhs {
                if !exact_zero(&self.t[i][j]) {
                    obj[j] = obj[j].sub(&cb.mul(&self.t[i][j]));
                }
            }
        }
        for j in 0..=rhs {
            obj[j].clean();
        }
        self.obj = obj;
    }

    /// Reduced cost of artificial column k equals −y_k for zero artificial cost.
    fn duals(&self, artificial_cost: &T) -> Vec<T> {
        (0..self.m)
            .map(|k| artificial_cost.sub(&self.obj[self.width + k]))
            .collect()
    }
}

fn exact_zero<T: LpField>(v: &T) -> bool {
    v.exact_zero()
}

/// Two-phase simplex on rows·x = rhs (rhs ≥ 0), x ≥ 0, maximizing cost·x.
/// `warm_basis` optionally lists columns to pivot into the basis first.
pub(crate) fn simplex<T: LpField>(
    rows: &[Vec<T>],
    rhs: &[T],
    cost: &[T],
    warm_basis: Option<&[usize]>,
) -> RawSolution<T> {
    let m = rows.len();
    let width = cost.len();
    let mut t = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = rows[i].clone();
        row.resize(width + m + 1, T::zero());
        row[width + i] = T::one();
        row[width + m] = rhs[i].clone();
        t.push(row);
    }
    let mut tab = Tableau {
        m,
        width,
        t,
        obj: Vec::new(),
        basis: (width..width + m).collect(),
        iterations: 0,
    };

    if let Some(cols) = warm_basis {
        // Crash the suggested columns in with ordinary Gauss-Jordan pivots.
        // Any resulting infeasibility is repaired by phase I below, which
        // restarts from the artificial basis if the crash left rhs < 0.
        let mut trial = Tableau {
            m,
            width,
            t: tab.t.clone(),
            obj: vec![T::zero(); width + m + 1],
            basis: tab.basis.clone(),
            iterations: 0,
        };
        for &c in cols {
            if c >= width || trial.basis.contains(&c) {
                continue;
            }
            let r = (0..m)
                .filter(|&i| trial.basis[i] >= width && !LpField::is_zero(&trial.t[i][c]))
                .max_by(|&a, &b| {
                    let va = trial.t[a][c].to_f64().abs();
                    let vb = trial.t[b][c].to_f64().abs();
                    va.partial_cmp(&vb).unwrap_or(std::cmp::Ordering::Equal)
                });
            if let Some(r) = r {
                trial.pivot(r, c);
            }
        }
        let feasible = (0..m).all(|i| !trial.t[i][width + m].is_negative());
        let artificials_zero = (0..m).all(|i| trial.basis[i] < width || LpField::is_zero(&trial.t[i][width + m]));
        if feasible && artificials_zero {
            trial.iterations = 0;
            tab = trial;
        }
    }

    // Phase I: maximize −Σ artificials.
    let mut phase1_cost = vec![T::zero(); width + m];
    for k in 0..m {
        phase1_cost[width + k] = T::one().neg();
    }
    tab.set_objective(&phase1_cost);
    if let Err(status) = tab.run(width + m) {
        return RawSolution {
            status: if status == LpStatus::Unbounded { LpStatus::SolverFailure } else { status },
            columns: vec![T::zero(); width],
            row_duals: vec![T::zero(); m],
            phase1_duals: None,
            value: T::zero(),
            iterations: tab.iterations,
        };
    }
    let rhs_col = width + m;
    let phase1_value = tab.obj[rhs_col].neg();
    if phase1_value.is_negative() {
        let y = tab.duals(&T::one().neg());
        return RawSolution {
            status: LpStatus::Infeasible,
            columns: vec![T::zero(); width],
            row_duals: vec![T::zero(); m],
            phase1_duals: Some(y),
            value: T::zero(),
            iterations: tab.iterations,
        };
    }
    // Drive zero-valued artificials out of the basis where possible.
    for r in 0..m {
        if tab.basis[r] >= width {
            if let Some(c) = (0..width).find(|&j| !LpField::is_zero(&tab.t[r][j])) {
                tab.pivot(r, c);
            }
        }
    }

    // Phase II over structural and slack columns only.
    let mut full_cost = cost.to_vec();
    full_cost.resize(width + m, T::zero());
    tab.set_objective(&full_cost);
    let status = match tab.run(width) {
        Ok(()) => LpStatus::Optimal,
        Err(s) => s,
    };
    let mut columns = vec![T::zero(); width];
    for i in 0..m {
        if tab.basis[i] < width {
            columns[tab.basis[i]] = tab.t[i][rhs_col].clone();
        }
    }
    RawSolution {
        status,
        columns,
        row_duals: tab.duals(&T::zero()),
        phase1_duals: None,
        value: tab.obj[rhs_col].neg(),
        iterations: tab.iterations,
    }
}

struct Solved<T> {
    result: LpResult,
    x: Vec<T>,
    y: Vec<T>,
    value: T,
    /// Standard-form columns that are nonzero at the optimum.
    support: Vec<usize>,
}

fn solve_generic<T: LpField>(p: &LinearProgram, warm: Option<&[usize]>) -> Result<Solved<T>> {
    p.validate()?;
    let sf = standardize::<T>(p);
    let raw = simplex(&sf.rows, &sf.rhs, &sf.cost, warm);
    let n = p.n_vars();
    let n_user = p.constraints.len();
    let signed = |y: &[T]| -> Vec<T> {
        y.iter()
            .zip(&sf.row_sign)
            .map(|(v, &s)| if s < 0.0 { v.neg() } else { v.clone() })
            .collect()
    };
    let mut result = LpResult::failure(n, n_user, raw.iterations, String::new());
    result.status = raw.status;
    result.message = None;
    match raw.status {
        LpStatus::Optimal => {
            let x: Vec<T> = sf
                .maps
                .iter()
                .map(|m| {
                    m.parts
                        .iter()
                        .fold(T::from_f64(m.offset), |acc, &(c, s)| acc.add(&raw.columns[c].mul(&T::from_f64(s))))
                })
                .collect();
            let y = signed(&raw.row_duals);
            let value = raw.value.add(&T::from_f64(sf.cost_offset));
            // Dual objective on the standardized data: Σ y'_i b'_i + offset.
            let dual_obj = raw
                .row_duals
                .iter()
                .zip(&sf.rhs)
                .fold(T::zero(), |acc, (yi, bi)| acc.add(&yi.mul(bi)))
                .add(&T::from_f64(sf.cost_offset));
            for (i, var) in sf.bound_row_var.iter().enumerate() {
                if let Some(v) = var {
                    result.bound_duals[*v] = y[i].to_f64();
                }
            }
            result.primal = x.iter().map(LpField::to_f64).collect();
            result.primal_residual = p.residual(&result.primal);
            result.dual = y[..n_user].iter().map(LpField::to_f64).collect();
            result.duality_gap = value.sub(&dual_obj).to_f64().abs();
            result.optimum = Some(value.to_f64());
            let support = raw
                .columns
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.exact_zero())
                .map(|(j, _)| j)
                .collect();
            Ok(Solved { result, x, y, value, support })
        }
        LpStatus::Infeasible => {
            result.farkas = raw
                .phase1_duals
                .map(|y| signed(&y)[..n_user].iter().map(LpField::to_f64).collect());
            Ok(Solved { result, x: Vec::new(), y: Vec::new(), value: T::zero(), support: Vec::new() })
        }
        status => {
            if status == LpStatus::SolverFailure {
                result.message = Some(format!("iteration cap of {ITERATION_CAP} reached"));
            }
            Ok(Solved { result, x: Vec::new(), y: Vec::new(), value: T::zero(), support: Vec::new() })
        }
    }
}

/// Floating-point solve. An "optimal" answer whose primal residual or duality
/// gap exceeds 1e-9 is downgraded to `SolverFailure`.
pub fn solve_lp(p: &LinearProgram) -> Result<LpResult> {
    let mut r = solve_generic::<f64>(p, None)?.result;
    if r.status == LpStatus::Optimal {
        let scale = 1.0 + r.optimum.unwrap_or(0.0).abs();
        if !(r.primal_residual <= 1e-9 && r.duality_gap <= 1e-9 * scale) {
            let msg = format!(
                "numerical check failed: residual {:e}, duality gap {:e}",
                r.primal_residual, r.duality_gap
            );
            r.status = LpStatus::SolverFailure;
            r.message = Some(msg);
        }
    }
    Ok(r)
}

/// Exact rational solve. The support of the floating-point optimum is pivoted
/// in first as a starting basis; everything after that, including the
/// optimality test, is exact.
pub fn solve_lp_exact(p: &LinearProgram) -> Result<LpResult> {
    let float = solve_generic::<f64>(p, None)?;
    let warm = (float.result.status == LpStatus::Optimal).then_some(float.support);
    let solved = solve_generic::<BigRational>(p, warm.as_deref())?;
    let mut r = solved.result;
    if r.status == LpStatus::Optimal {
        r.exact = Some(ExactCertificate {
            optimum: solved.value.render(),
            primal: solved.x.iter().map(LpField::render).collect(),
            dual: solved.y[..p.constraints.len()].iter().map(LpField::render).collect(),
        });
    }
    Ok(r)
}
