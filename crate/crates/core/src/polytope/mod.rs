//! Local deterministic strategies, local-polytope membership, and linear
//! programs bounding Bell expressions over restricted behavior sets.

pub mod lp;

use serde::Serialize;

use crate::correlations::{
    bit, entry_index, evaluate_bell, party_label, Behavior, BellExpression,
};
use crate::error::{invalid, Error, Result};
use crate::spacetime::OrderingPattern;
pub use lp::{
    solve_lp, solve_lp_exact, Constraint, ConstraintKind, ExactCertificate, LinearProgram, LpResult,
    LpStatus, VarBound,
};

/// Response functions of two parties with binary settings: `first[y]`, `second[z]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DeterministicStrategy {
    pub first: [u8; 2],
    pub second: [u8; 2],
}

impl DeterministicStrategy {
    /// All 16 strategies; index bits are (first[0], first[1], second[0], second[1]).
    pub fn all() -> Vec<DeterministicStrategy> {
        (0..16).map(DeterministicStrategy::from_index).collect()
    }

    pub fn from_index(i: usize) -> Self {
        let b = |k: usize| ((i >> (3 - k)) & 1) as u8;
        DeterministicStrategy {
            first: [b(0), b(1)],
            second: [b(2), b(3)],
        }
    }

    pub fn index(&self) -> usize {
        ((self.first[0] as usize) << 3)
            | ((self.first[1] as usize) << 2)
            | ((self.second[0] as usize) << 1)
            | self.second[1] as usize
    }

    pub fn behavior(&self) -> Behavior {
        Behavior::deterministic(&[self.first, self.second]).expect("deterministic table is valid")
    }
}

/// Every deterministic behavior of `n` parties (4^n of them).
pub fn local_deterministic_behaviors(n: usize) -> Result<Vec<Behavior>> {
    if !(1..=4).contains(&n) {
        return invalid(format!("unsupported number of parties {n}"));
    }
    (0..(1usize << (2 * n)))
        .map(|code| {
            let responses: Vec<[u8; 2]> = (0..n)
                .map(|k| {
                    let f = (code >> (2 * (n - 1 - k))) & 3;
                    [(f >> 1) as u8, (f & 1) as u8]
                })
                .collect();
            Behavior::deterministic(&responses)
        })
        .collect()
}

/// Maximum of `e` over the local polytope, by enumerating its vertices.
pub fn max_bell_local(e: &BellExpression) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for b in local_deterministic_behaviors(e.n_parties)? {
        best = best.max(evaluate_bell(e, &b)?);
    }
    Ok(best)
}

/// A Bell inequality `expression ≤ local_bound` that the tested behavior violates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparatingInequality {
    pub expression: BellExpression,
    pub local_bound: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalMembership {
    pub member: bool,
    /// Weights on the 16 deterministic strategies when `member`.
    pub weights: Vec<f64>,
    pub certificate: Option<SeparatingInequality>,
}

/// Decides whether a bipartite behavior is a mixture of the 16 deterministic
/// strategies. Outside the polytope, a second LP finds coefficients β in
/// [−1,1] and a bound β₀ with β·D ≤ β₀ on every vertex and β·P > β₀.
pub fn local_membership(b: &Behavior) -> Result<LocalMembership> {
    if b.n_parties() != 2 {
        return invalid("local membership is defined here for bipartite behaviors");
    }
    let vertices: Vec<Behavior> = DeterministicStrategy::all().iter().map(|s| s.behavior()).collect();
    let mut p = LinearProgram::new(vec![0.0; 16]);
    p.add(vec![1.0; 16], ConstraintKind::Eq, 1.0);
    for i in 0..16 {
        p.add(vertices.iter().map(|v| v.table()[i]).collect(), ConstraintKind::Eq, b.table()[i]);
    }
    let r = solve_lp(&p)?;
    match r.status {
        LpStatus::Optimal => {
            return Ok(LocalMembership {
                member: true,
                weights: r.primal,
                certificate: None,
            })
        }
        LpStatus::Infeasible => {}
        _ => return Err(Error::Solver(format!("membership LP: {:?} {:?}", r.status, r.message))),
    }

    // Variables β_0..β_15, then β₀ (free).
    let mut objective = b.table().to_vec();
    objective.push(-1.0);
    let mut sep = LinearProgram::new(objective);
    for j in 0..16 {
        sep.bounds[j] = VarBound { lower: Some(-1.0), upper: Some(1.0) };
    }
    sep.bounds[16] = VarBound { lower: None, upper: None };
    for v in &vertices {
        let mut row = v.table().to_vec();
        row.push(-1.0);
        sep.add(row, ConstraintKind::Le, 0.0);
    }
    let s = solve_lp(&sep)?;
    if s.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("separation LP: {:?} {:?}", s.status, s.message)));
    }
    let mut expression = BellExpression::new("separating", 2, s.primal[..16].to_vec())?;
    let local_bound = s.primal[16];
    expression.classical_bound = Some(local_bound);
    let value = evaluate_bell(&expression, b)?;
    Ok(LocalMembership {
        member: false,
        weights: Vec::new(),
        certificate: Some(SeparatingInequality {
            expression,
            local_bound,
            value,
        }),
    })
}

/// Column of u(a,x,d,w,λ) in the lemma program.
pub fn lemma_var(a: u8, x: u8, d: u8, w: u8, lambda: usize) -> usize {
    ((((a as usize) << 3) | ((x as usize) << 2) | ((d as usize) << 1) | w as usize) << 4) | lambda
}

/// The linear program for the maximum of `e` over four-party behaviors that
/// are no-signalling and whose BC|AD conditionals are all local.
///
/// Condition on the conditionals: P(bc|yz,axdw) = Σ_λ q(λ|axdw) D_λ(b|y) D_λ(c|z)
/// wherever P(ad|xw) > 0. Multiplying through,
///
///   P(abcd|xyzw) = P(ad|xw) · Σ_λ q(λ|axdw) D_λ(b|y) D_λ(c|z),
///
/// which is bilinear in (P(ad|xw), q). Substituting u(a,x,d,w,λ) = P(ad|xw)·q(λ|axdw)
/// makes it linear: P(abcd|xyzw) = Σ_λ u(a,x,d,w,λ) D_λ(b|y) D_λ(c|z) with u ≥ 0.
/// Conversely any u ≥ 0 gives P(ad|xyzw) = Σ_λ u(a,x,d,w,λ), independent of (y,z),
/// and q = u / Σ_λ u is a valid local decomposition; cells with Σ_λ u = 0 carry
/// no weight. So the feasible set is exactly described by
///
/// * Σ_{a,d,λ} u(a,x,d,w,λ) = 1 for every (x,w),
/// * the no-signalling conditions on the induced P.
///
/// Summing P over b leaves Σ_λ u [f_C(z)=c], free of y, and likewise for c, so
/// no-signalling from B and from C holds identically. Only the conditions for
/// A (marginal of BCD free of x) and D (marginal of ABC free of w) are rows.
/// The objective coefficient of u(a,x,d,w,λ) is Σ_{y,z} e(a, f_B(y), f_C(z), d | xyzw).
pub fn lemma_program(e: &BellExpression) -> Result<LinearProgram> {
    if e.n_parties != 4 {
        return invalid("the lemma program needs a 4-party expression");
    }
    let strategies = DeterministicStrategy::all();
    let coef = |a: u8, b: u8, c: u8, d: u8, x: u8, y: u8, z: u8, w: u8| {
        let o = ((a as usize) << 3) | ((b as usize) << 2) | ((c as usize) << 1) | d as usize;
        let s = ((x as usize) << 3) | ((y as usize) << 2) | ((z as usize) << 1) | w as usize;
        e.coefficients[entry_index(4, o, s)]
    };
    let mut objective = vec![0.0; 256];
    for a in 0..2 {
        for x in 0..2 {
            for d in 0..2 {
                for w in 0..2 {
                    for (l, st) in strategies.iter().enumerate() {
                        let mut v = 0.0;
                        for y in 0..2 {
                            for z in 0..2 {
                                v += coef(a, st.first[y as usize], st.second[z as usize], d, x, y, z, w);
                            }
                        }
                        objective[lemma_var(a, x, d, w, l)] = v;
                    }
                }
            }
        }
    }
    let mut p = LinearProgram::new(objective);
    for x in 0..2 {
        for w in 0..2 {
            let mut row = vec![0.0; 256];
            for a in 0..2 {
                for d in 0..2 {
                    for l in 0..16 {
                        row[lemma_var(a, x, d, w, l)] = 1.0;
                    }
                }
            }
            p.add(row, ConstraintKind::Eq, 1.0);
        }
    }
    let hits = |st: &DeterministicStrategy, b: u8, c: u8, y: u8, z: u8| {
        st.first[y as usize] == b && st.second[z as usize] == c
    };
    // A: Σ_a P(abcd|0yzw) − Σ_a P(abcd|1yzw) = 0.
    for b in 0..2 {
        for c in 0..2 {
            for d in 0..2 {
                for y in 0..2 {
                    for z in 0..2 {
                        for w in 0..2 {
                            let mut row = vec![0.0; 256];
                            for (l, st) in strategies.iter().enumerate() {
                                if hits(st, b, c, y, z) {
                                    for a in 0..2 {
                                        row[lemma_var(a, 0, d, w, l)] += 1.0;
                                        row[lemma_var(a, 1, d, w, l)] -= 1.0;
                                    }
                                }
                            }
                            p.add(row, ConstraintKind::Eq, 0.0);
                        }
                    }
                }
            }
        }
    }
    // D: Σ_d P(abcd|xyz0) − Σ_d P(abcd|xyz1) = 0.
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        for z in 0..2 {
                            let mut row = vec![0.0; 256];
                            for (l, st) in strategies.iter().enumerate() {
                                if hits(st, b, c, y, z) {
                                    for d in 0..2 {
                                        row[lemma_var(a, x, d, 0, l)] += 1.0;
                                        row[lemma_var(a, x, d, 1, l)] -= 1.0;
                                    }
                                }
                            }
                            p.add(row, ConstraintKind::Eq, 0.0);
                        }
                    }
                }
            }
        }
    }
    Ok(p)
}

/// The four-party behavior induced by lemma variables `u`.
pub fn lemma_behavior(u: &[f64]) -> Result<Behavior> {
    if u.len() != 256 {
        return invalid(format!("expected 256 lemma variables, got {}", u.len()));
    }
    let strategies = DeterministicStrategy::all();
    let mut table = vec![0.0; 256];
    for o in 0..16usize {
        let (a, b, c, d) = (bit(o, 0, 4), bit(o, 1, 4), bit(o, 2, 4), bit(o, 3, 4));
        for s in 0..16usize {
            let (x, y, z, w) = (bit(s, 0, 4), bit(s, 1, 4), bit(s, 2, 4), bit(s, 3, 4));
            table[entry_index(4, o, s)] = strategies
                .iter()
                .enumerate()
                .filter(|(_, st)| st.first[y as usize] == b && st.second[z as usize] == c)
                .map(|(l, _)| u[lemma_var(a, x, d, w, l)].max(0.0))
                .sum();
        }
    }
    Behavior::with_tolerance(4, table, 1e-8)
}

fn check_solved(r: &LpResult) -> Result<()> {
    match r.status {
        LpStatus::Optimal => Ok(()),
        status => Err(Error::Solver(format!(
            "lemma program ended with {status:?}{}",
            r.message.as_deref().map(|m| format!(": {m}")).unwrap_or_default()
        ))),
    }
}

/// Floating-point maximum of `e` over the no-signalling behaviors with local
/// BC|AD conditionals.
pub fn lemma_polytope_max(e: &BellExpression) -> Result<LpResult> {
    let r = solve_lp(&lemma_program(e)?)?;
    check_solved(&r)?;
    Ok(r)
}

/// As [`lemma_polytope_max`], in exact rational arithmetic.
pub fn lemma_polytope_max_exact(e: &BellExpression) -> Result<LpResult> {
    let r = solve_lp_exact(&lemma_program(e)?)?;
    check_solved(&r)?;
    Ok(r)
}

/// Maximum of `e` over deterministic v-causal models whose causal order is
/// `pattern`: each party's output is a function of its own setting and of the
/// settings and outputs of every party in earlier groups. Members of one group
/// see nothing of each other. With `impose_ns`, the maximum is instead taken
/// over the no-signalling behaviors such models can reach; that is supported
/// for A<D<(B∼C), where it is the lemma program.
pub fn vcausal_config_max(e: &BellExpression, pattern: &str, impose_ns: bool) -> Result<f64> {
    let pat = OrderingPattern::parse(pattern)?;
    let n = e.n_parties;
    let mut labels: Vec<&str> = pat.labels().collect();
    labels.sort_unstable();
    let expected: Vec<&str> = (0..n).map(party_label).collect();
    if labels != expected {
        return invalid(format!("pattern {pattern} must order exactly the parties {expected:?}"));
    }
    if impose_ns {
        if n == 4 && pat == OrderingPattern::parse("A<D<(B∼C)")? {
            let r = lemma_polytope_max(e)?;
            return Ok(r.optimum.unwrap_or(f64::NAN));
        }
        return invalid(format!("no-signalling restricted maximum is not supported for {pattern}"));
    }
    let groups: Vec<Vec<usize>> = pat
        .groups()
        .iter()
        .map(|g| g.iter().map(|l| expected.iter().position(|x| x == l).unwrap()).collect())
        .collect();
    let mut settings = vec![0u8; n];
    let mut outcomes = vec![0u8; n];
    Ok(best_from_group(e, &groups, 0, &mut settings, &mut outcomes))
}

/// Backward induction: for a fixed history of earlier groups, each member of
/// group `k` picks a function of its own setting; the best choice is made
/// separately for every history.
fn best_from_group(
    e: &BellExpression,
    groups: &[Vec<usize>],
    k: usize,
    settings: &mut [u8],
    outcomes: &mut [u8],
) -> f64 {
    let n = e.n_parties;
    if k == groups.len() {
        let o = outcomes.iter().fold(0usize, |acc, &v| (acc << 1) | v as usize);
        let s = settings.iter().fold(0usize, |acc, &v| (acc << 1) | v as usize);
        return e.coefficients[entry_index(n, o, s)];
    }
    let g = &groups[k];
    let m = g.len();
    let mut best = f64::NEG_INFINITY;
    for funcs in 0..(1usize << (2 * m)) {
        let mut total = 0.0;
        for gs in 0..(1usize << m) {
            for (j, &p) in g.iter().enumerate() {
                let s = ((gs >> (m - 1 - j)) & 1) as u8;
                let f = (funcs >> (2 * (m - 1 - j))) & 3;
                settings[p] = s;
                outcomes[p] = if s == 0 { (f >> 1) as u8 } else { (f & 1) as u8 };
            }
            total += best_from_group(e, groups, k + 1, settings, outcomes);
        }
        best = best.max(total);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_indexing_round_trips() {
        for i in 0..16 {
            assert_eq!(DeterministicStrategy::from_index(i).index(), i);
        }
    }

    #[test]
    fn chsh_local_bound() {
        assert_eq!(max_bell_local(&BellExpression::chsh()).unwrap(), 2.0);
    }

    #[test]
    fn lemma_variable_layout() {
        assert_eq!(lemma_var(0, 0, 0, 0, 0), 0);
        assert_eq!(lemma_var(1, 1, 1, 1, 15), 255);
        assert_eq!(lemma_var(0, 0, 0, 1, 0), 16);
    }

    #[test]
    fn config_max_for_chsh() {
        let e = BellExpression::chsh();
        assert_eq!(vcausal_config_max(&e, "A<B", false).unwrap(), 4.0);
        assert_eq!(vcausal_config_max(&e, "B<A", false).unwrap(), 4.0);
        assert_eq!(vcausal_config_max(&e, "A∼B", false).unwrap(), 2.0);
        assert!(vcausal_config_max(&e, "A<C", false).is_err());
        assert!(vcausal_config_max(&e, "A<B", true).is_err());
    }
}
