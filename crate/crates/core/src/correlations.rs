//! Conditional probability tables P(outcomes|settings) with binary outcomes and
//! settings, their marginals, no-signalling checks and Bell expressions.
//!
//! Tables are flat: `index = outcome_index · 2^n + setting_index`, where an
//! outcome (setting) tuple is read as a binary number with party A as the most
//! significant bit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const PARTY_LABELS: [&str; 4] = ["A", "B", "C", "D"];

/// Default tolerance for algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-12;

/// Conditioning weights at or below this are treated as zero.
pub const ZERO_WEIGHT: f64 = 1e-14;

pub fn party_label(k: usize) -> &'static str {
    PARTY_LABELS[k]
}

pub(crate) fn check_arity(n: usize) -> Result<()> {
    if (1..=4).contains(&n) {
        Ok(())
    } else {
        invalid(format!("number of parties must be between 1 and 4, got {n}"))
    }
}

pub fn table_len(n: usize) -> usize {
    1 << (2 * n)
}

/// Bit of party `k` in a tuple index over `n` parties.
#[inline]
pub fn bit(tuple: usize, k: usize, n: usize) -> u8 {
    ((tuple >> (n - 1 - k)) & 1) as u8
}

pub fn tuple_index(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

pub fn tuple_bits(tuple: usize, n: usize) -> Vec<u8> {
    (0..n).map(|k| bit(tuple, k, n)).collect()
}

#[inline]
pub fn entry_index(n: usize, outcomes: usize, settings: usize) -> usize {
    (outcomes << n) | settings
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BehaviorDoc", into = "BehaviorDoc")]
pub struct Behavior {
    n_parties: usize,
    table: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BehaviorDoc {
    n_parties: usize,
    outcomes: usize,
    settings: usize,
    table: Vec<f64>,
}

impl TryFrom<BehaviorDoc> for Behavior {
    type Error = Error;
    fn try_from(doc: BehaviorDoc) -> Result<Self> {
        if doc.outcomes != 2 || doc.settings != 2 {
            return invalid("only binary outcomes and settings are supported");
        }
        Behavior::new(doc.n_parties, doc.table)
    }
}

impl From<Behavior> for BehaviorDoc {
    fn from(b: Behavior) -> Self {
        BehaviorDoc {
            n_parties: b.n_parties,
            outcomes: 2,
            settings: 2,
            table: b.table,
        }
    }
}

impl Behavior {
    pub fn new(n_parties: usize, table: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(n_parties, table, ALGEBRAIC_TOL)
    }

    /// Like [`Behavior::new`] but accepts positivity and normalization errors up to `tol`.
    pub fn with_tolerance(n_parties: usize, table: Vec<f64>, tol: f64) -> Result<Self> {
        check_arity(n_parties)?;
        if table.len() != table_len(n_parties) {
            return invalid(format!(
                "a {n_parties}-party table needs {} entries, got {}",
                table_len(n_parties),
                table.len()
            ));
        }
        let b = Behavior { n_parties, table };
        b.validate(tol)?;
        Ok(b)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.n_parties;
        for (i, &p) in self.table.iter().enumerate() {
            if !p.is_finite() || p < -tol {
                return invalid(format!("entry {i} is {p}, not a probability"));
            }
        }
        for s in 0..(1 << n) {
            let total: f64 = (0..(1 << n)).map(|o| self.table[entry_index(n, o, s)]).sum();
            if (total - 1.0).abs() > tol {
                return invalid(format!(
                    "probabilities for settings {:?} sum to {total}",
                    tuple_bits(s, n)
                ));
            }
        }
        Ok(())
    }

    pub fn from_fn(n_parties: usize, f: impl Fn(&[u8], &[u8]) -> f64) -> Result<Self> {
        check_arity(n_parties)?;
        let mut table = vec![0.0; table_len(n_parties)];
        for o in 0..(1 << n_parties) {
            let ob = tuple_bits(o, n_parties);
            for s in 0..(1 << n_parties) {
                table[entry_index(n_parties, o, s)] = f(&ob, &tuple_bits(s, n_parties));
            }
        }
        Behavior::new(n_parties, table)
    }

    pub fn uniform(n_parties: usize) -> Result<Self> {
        let p = 1.0 / (1 << n_parties) as f64;
        Behavior::from_fn(n_parties, |_, _| p)
    }

    /// `responses[k][s]` is party k's outcome for setting s.
    pub fn deterministic(responses: &[[u8; 2]]) -> Result<Self> {
        let n = responses.len();
        Behavior::from_fn(n, |o, s| {
            let hit = (0..n).all(|k| responses[k][s[k] as usize] == o[k]);
            if hit {
                1.0
            } else {
                0.0
            }
        })
    }

    /// `p0[k][s]` is the probability that party k outputs 0 for setting s.
    pub fn product(p0: &[[f64; 2]]) -> Result<Self> {
        let n = p0.len();
        Behavior::from_fn(n, |o, s| {
            (0..n)
                .map(|k| {
                    let q = p0[k][s[k] as usize];
                    if o[k] == 0 {
                        q
                    } else {
                        1.0 - q
                    }
                })
                .product()
        })
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn prob(&self, outcomes: &[u8], settings: &[u8]) -> f64 {
        self.table[entry_index(self.n_parties, tuple_index(outcomes), tuple_index(settings))]
    }

    pub fn get(&self, outcomes: usize, settings: usize) -> f64 {
        self.table[entry_index(self.n_parties, outcomes, settings)]
    }

    /// λ·self + (1−λ)·other.
    pub fn mix(&self, other: &Behavior, lambda: f64) -> Result<Behavior> {
        if self.n_parties != other.n_parties {
            return invalid("cannot mix behaviors of different arity");
        }
        let table = self
            .table
            .iter()
            .zip(&other.table)
            .map(|(p, q)| lambda * p + (1.0 - lambda) * q)
            .collect();
        Behavior::new(self.n_parties, table)
    }

    pub fn max_abs_diff(&self, other: &Behavior) -> f64 {
        if self.n_parties != other.n_parties {
            return f64::INFINITY;
        }
        self.table
            .iter()
            .zip(&other.table)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }
}

/// Sums out the parties not in `keep`, holding their settings at
/// `fixed_settings` (listed in increasing party order). The result's parties
/// are ordered as in `keep`.
pub fn marginal(b: &Behavior, keep: &[usize], fixed_settings: &[u8]) -> Result<Behavior> {
    let n = b.n_parties;
    if keep.is_empty() {
        return invalid("marginal must keep at least one party");
    }
    let mut seen = [false; 4];
    for &k in keep {
        if k >= n || seen[k] {
            return invalid(format!("bad party subset {keep:?} for {n} parties"));
        }
        seen[k] = true;
    }
    let dropped: Vec<usize> = (0..n).filter(|k| !seen[*k]).collect();
    if dropped.len() != fixed_settings.len() || fixed_settings.iter().any(|&s| s > 1) {
        return invalid(format!(
            "need one binary setting per dropped party {dropped:?}, got {fixed_settings:?}"
        ));
    }
    let m = keep.len();
    let mut table = vec![0.0; table_len(m)];
    let mut full_s = vec![0u8; n];
    for (&k, &s) in dropped.iter().zip(fixed_settings) {
        full_s[k] = s;
    }
    for ks in 0..(1 << m) {
        for (j, &k) in keep.iter().enumerate() {
            full_s[k] = bit(ks, j, m);
        }
        let s = tuple_index(&full_s);
        for o in 0..(1 << n) {
            let ko = keep
                .iter()
                .fold(0usize, |acc, &k| (acc << 1) | bit(o, k, n) as usize);
            table[entry_index(m, ko, ks)] += b.get(o, s);
        }
    }
    Ok(Behavior { n_parties: m, table })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignallingEntry {
    /// Labels of the parties in the marginal, e.g. "BCD".
    pub marginal: String,
    /// Label of the party whose setting is varied.
    pub excluded: String,
    pub variation: f64,
    /// Outcomes and settings of the marginal's parties at the maximum.
    pub witness_outcomes: Vec<u8>,
    pub witness_settings: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignallingReport {
    pub entries: Vec<SignallingEntry>,
    pub max_variation: f64,
    /// Index into `entries` of the largest variation.
    pub witness: usize,
}

impl SignallingReport {
    pub fn witness_entry(&self) -> &SignallingEntry {
        &self.entries[self.witness]
    }

    pub fn entry(&self, excluded: &str) -> Option<&SignallingEntry> {
        self.entries.iter().find(|e| e.excluded == excluded)
    }
}

/// For every party k, how much the marginal of the other parties moves when
/// k's setting changes.
pub fn is_no_signalling(b: &Behavior, tol: f64) -> (bool, SignallingReport) {
    let n = b.n_parties;
    let mut entries = Vec::with_capacity(n);
    for k in 0..n {
        let keep: Vec<usize> = (0..n).filter(|&j| j != k).collect();
        let m = keep.len();
        let mut best = (0.0f64, 0usize, 0usize);
        for ko in 0..(1 << m) {
            for ks in 0..(1 << m) {
                let mut sum = [0.0f64; 2];
                for (sk, acc) in sum.iter_mut().enumerate() {
                    for ok in 0..2usize {
                        let mut o = vec![0u8; n];
                        let mut s = vec![0u8; n];
                        for (j, &p) in keep.iter().enumerate() {
                            o[p] = bit(ko, j, m);
                            s[p] = bit(ks, j, m);
                        }
                        o[k] = ok as u8;
                        s[k] = sk as u8;
                        *acc += b.prob(&o, &s);
                    }
                }
                let v = (sum[0] - sum[1]).abs();
                if v > best.0 {
                    best = (v, ko, ks);
                }
            }
        }
        entries.push(SignallingEntry {
            marginal: keep.iter().map(|&j| party_label(j)).collect(),
            excluded: party_label(k).to_string(),
            variation: best.0,
            witness_outcomes: tuple_bits(best.1, m),
            witness_settings: tuple_bits(best.2, m),
        });
    }
    let mut witness = 0;
    for (i, e) in entries.iter().enumerate() {
        if e.variation > entries[witness].variation {
            witness = i;
        }
    }
    let max_variation = entries[witness].variation;
    (
        max_variation <= tol,
        SignallingReport {
            entries,
            max_variation,
            witness,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalCell {
    pub a: u8,
    pub x: u8,
    pub d: u8,
    pub w: u8,
    /// P(ad|xw), averaged over (y,z).
    pub weight: f64,
    /// Largest difference of P(ad|xyzw) across (y,z); zero for no-signalling input.
    pub weight_spread: f64,
    /// P(bc|yz, axdw); absent when the weight vanishes for some (y,z).
    pub behavior: Option<Behavior>,
}

/// Conditional B,C behaviors for each (a,x,d,w), ordered lexicographically.
/// The conditional at (y,z) divides by P(ad|xyzw) at that same (y,z), so
/// recombining with those weights reproduces the input exactly.
pub fn conditional_bc_given_ad(b: &Behavior) -> Result<Vec<ConditionalCell>> {
    if b.n_parties != 4 {
        return invalid("conditional BC|AD needs a 4-party behavior");
    }
    let mut cells = Vec::with_capacity(16);
    for a in 0..2u8 {
        for x in 0..2u8 {
            for d in 0..2u8 {
                for w in 0..2u8 {
                    let mut weights = [0.0f64; 4];
                    for yz in 0..4usize {
                        let (y, z) = ((yz >> 1) as u8, (yz & 1) as u8);
                        weights[yz] = (0..4usize)
                            .map(|bc| b.prob(&[a, (bc >> 1) as u8, (bc & 1) as u8, d], &[x, y, z, w]))
                            .sum();
                    }
                    let lo = weights.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let behavior = if lo > ZERO_WEIGHT {
                        let mut table = vec![0.0; 16];
                        for bc in 0..4usize {
                            for yz in 0..4usize {
                                let p = b.prob(
                                    &[a, (bc >> 1) as u8, (bc & 1) as u8, d],
                                    &[x, (yz >> 1) as u8, (yz & 1) as u8, w],
                                );
                                table[entry_index(2, bc, yz)] = p / weights[yz];
                            }
                        }
                        Some(Behavior::with_tolerance(2, table, 1e-9)?)
                    } else {
                        None
                    };
                    cells.push(ConditionalCell {
                        a,
                        x,
                        d,
                        w,
                        weight: weights.iter().sum::<f64>() / 4.0,
                        weight_spread: hi - lo,
                        behavior,
                    });
                }
            }
        }
    }
    Ok(cells)
}

/// One term of a Bell expression in probability form: `weight · P(⊕ of the
/// listed parties' outcomes = parity | their settings)`. Settings of unlisted
/// parties are averaged over.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityTerm {
    pub weight: f64,
    pub parties: Vec<usize>,
    pub settings: Vec<u8>,
    pub parity: u8,
}

impl ParityTerm {
    pub fn new(weight: f64, parties: &[usize], settings: &[u8], parity: u8) -> Self {
        ParityTerm {
            weight,
            parties: parties.to_vec(),
            settings: settings.to_vec(),
            parity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BellDoc")]
pub struct BellExpression {
    pub name: String,
    pub n_parties: usize,
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub classical_bound: Option<f64>,
    #[serde(default)]
    pub quantum_target: Option<f64>,
}

#[derive(Deserialize)]
struct BellDoc {
    name: String,
    n_parties: usize,
    coefficients: Vec<f64>,
    #[serde(default)]
    classical_bound: Option<f64>,
    #[serde(default)]
    quantum_target: Option<f64>,
}

impl TryFrom<BellDoc> for BellExpression {
    type Error = Error;
    fn try_from(d: BellDoc) -> Result<Self> {
        let mut e = BellExpression::new(d.name, d.n_parties, d.coefficients)?;
        e.classical_bound = d.classical_bound;
        e.quantum_target = d.quantum_target;
        Ok(e)
    }
}

impl BellExpression {
    pub fn new(name: impl Into<String>, n_parties: usize, coefficients: Vec<f64>) -> Result<Self> {
        check_arity(n_parties)?;
        if coefficients.len() != table_len(n_parties) {
            return invalid(format!(
                "a {n_parties}-party expression needs {} coefficients, got {}",
                table_len(n_parties),
                coefficients.len()
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return invalid("coefficients must be finite");
        }
        Ok(BellExpression {
            name: name.into(),
            n_parties,
            coefficients,
            classical_bound: None,
            quantum_target: None,
        })
    }

    pub fn zero(n_parties: usize) -> Result<Self> {
        BellExpression::new("zero", n_parties, vec![0.0; table_len(n_parties)])
    }

    pub fn from_parity_terms(name: &str, n: usize, terms: &[ParityTerm]) -> Result<Self> {
        let mut e = BellExpression::zero(n)?;
        e.name = name.to_string();
        for t in terms {
            e.add_parity_term(t)?;
        }
        Ok(e)
    }

    pub fn add_parity_term(&mut self, t: &ParityTerm) -> Result<()> {
        let n = self.n_parties;
        if t.parties.len() != t.settings.len() || t.parties.iter().any(|&k| k >= n) || t.parity > 1 {
            return invalid(format!("malformed term {t:?}"));
        }
        let spread = (1 << (n - t.parties.len())) as f64;
        for o in 0..(1 << n) {
            let par = t.parties.iter().fold(0u8, |acc, &k| acc ^ bit(o, k, n));
            if par != t.parity {
                continue;
            }
            for s in 0..(1 << n) {
                if t.parties.iter().zip(&t.settings).all(|(&k, &v)| bit(s, k, n) == v) {
                    self.coefficients[entry_index(n, o, s)] += t.weight / spread;
                }
            }
        }
        Ok(())
    }

    /// Adds `weight · ⟨∏ parties at settings⟩` where outcome 0 counts as +1.
    pub fn add_correlator(&mut self, weight: f64, parties: &[usize], settings: &[u8]) -> Result<()> {
        self.add_parity_term(&ParityTerm::new(weight, parties, settings, 0))?;
        self.add_parity_term(&ParityTerm::new(-weight, parties, settings, 1))
    }

    pub fn chsh() -> Self {
        let mut e = BellExpression::zero(2).expect("arity 2");
        e.name = "CHSH".into();
        for (x, y, sign) in [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)] {
            e.add_correlator(sign, &[0, 1], &[x, y]).expect("valid term");
        }
        e.classical_bound = Some(2.0);
        e.quantum_target = Some(2.0 * std::f64::consts::SQRT_2);
        e
    }

    /// The four-party expression S. It only involves the ABD and ACD
    /// marginals, is at most 7 whenever the BC|AD conditionals are local and
    /// the behavior is no-signalling, and reaches 6+√2 with four qubits.
    ///
    /// S = 2P(a⊕b=0|x=0,y=0) + 2P(a⊕b⊕d=0|x=1,y=1,w=0) + P(c⊕d=0|z=0,w=0)
    ///   + P(c⊕d=1|z=1,w=0) + P(a⊕c⊕d=0|x=0,z=0,w=1) + P(a⊕c⊕d=0|x=0,z=1,w=1)
    pub fn lemma_s() -> Self {
        let terms = [
            ParityTerm::new(2.0, &[0, 1], &[0, 0], 0),
            ParityTerm::new(2.0, &[0, 1, 3], &[1, 1, 0], 0),
            ParityTerm::new(1.0, &[2, 3], &[0, 0], 0),
            ParityTerm::new(1.0, &[2, 3], &[1, 0], 1),
            ParityTerm::new(1.0, &[0, 2, 3], &[0, 0, 1], 0),
            ParityTerm::new(1.0, &[0, 2, 3], &[0, 1, 1], 0),
        ];
        let mut e = BellExpression::from_parity_terms("S", 4, &terms).expect("valid terms");
        e.classical_bound = Some(7.0);
        e.quantum_target = Some(6.0 + std::f64::consts::SQRT_2);
        e
    }

    /// Σ_{xyzw} (−1)^{yz ⊕ xw} ⟨A_x B_y C_z D_w⟩, a full four-body correlator
    /// that couples B and C.
    pub fn abcd_correlator() -> Self {
        let mut e = BellExpression::zero(4).expect("arity 4");
        e.name = "ABCD".into();
        for s in 0..16usize {
            let v = tuple_bits(s, 4);
            let sign = if (v[1] & v[2]) ^ (v[0] & v[3]) == 0 { 1.0 } else { -1.0 };
            e.add_correlator(sign, &[0, 1, 2, 3], &v).expect("valid term");
        }
        e
    }

    /// Sum of all probabilities at one setting tuple; equals 1 on any behavior.
    pub fn normalization(n: usize, settings: &[u8]) -> Result<Self> {
        if settings.len() != n {
            return invalid("one setting per party required");
        }
        let mut e = BellExpression::zero(n)?;
        e.name = "normalization".into();
        let s = tuple_index(settings);
        for o in 0..(1 << n) {
            e.coefficients[entry_index(n, o, s)] = 1.0;
        }
        Ok(e)
    }

    /// P(outcome of `party` = `outcome` | its setting), other settings averaged.
    pub fn single_marginal(n: usize, party: usize, setting: u8, outcome: u8) -> Result<Self> {
        let mut e = BellExpression::from_parity_terms(
            "marginal",
            n,
            &[ParityTerm::new(1.0, &[party], &[setting], outcome)],
        )?;
        e.name = format!("P({}={outcome}|{setting})", party_label(party));
        Ok(e)
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut e = self.clone();
        e.coefficients.iter_mut().for_each(|c| *c *= k);
        e.classical_bound = self.classical_bound.map(|b| b * k);
        e.quantum_target = self.quantum_target.map(|b| b * k);
        e
    }

    /// Σ over setting tuples of the largest |coefficient| at that tuple, an
    /// upper bound on the value over every behavior.
    pub fn algebraic_cap(&self) -> f64 {
        let n = self.n_parties;
        (0..(1 << n))
            .map(|s| {
                (0..(1 << n))
                    .map(|o| self.coefficients[entry_index(n, o, s)])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    }
}

pub fn evaluate_bell(e: &BellExpression, b: &Behavior) -> Result<f64> {
    if e.n_parties != b.n_parties {
        return invalid(format!(
            "expression has {} parties, behavior has {}",
            e.n_parties, b.n_parties
        ));
    }
    Ok(e.coefficients.iter().zip(&b.table).map(|(c, p)| c * p).sum())
}

/// Coefficient tables f(a,b,d | xyzw) and g(a,c,d | xyzw), each stored on the
/// full 4-party index with the other party's outcome fixed to 0, such that
/// coefficient(a,b,c,d) = f(a,b,d) + g(a,c,d).
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSplit {
    pub abd: Vec<f64>,
    pub acd: Vec<f64>,
    pub residual: f64,
}

/// Builds the split g(a,c,d) = e(a,0,c,d), f(a,b,d) = e(a,b,0,d) − e(a,0,0,d)
/// and reports how far f+g is from e. The split exists exactly when every
/// mixed (b,c) second difference of the coefficients vanishes.
pub fn abd_acd_split(e: &BellExpression) -> Result<MarginalSplit> {
    if e.n_parties != 4 {
        return invalid("the ABD/ACD split needs a 4-party expression");
    }
    let idx = |a: u8, b: u8, c: u8, d: u8, s: usize| entry_index(4, tuple_index(&[a, b, c, d]), s);
    let mut abd = vec![0.0; 256];
    let mut acd = vec![0.0; 256];
    let mut residual = 0.0f64;
    for s in 0..16 {
        for a in 0..2 {
            for d in 0..2 {
                for v in 0..2 {
                    acd[idx(a, 0, v, d, s)] = e.coefficients[idx(a, 0, v, d, s)];
                    abd[idx(a, v, 0, d, s)] =
                        e.coefficients[idx(a, v, 0, d, s)] - e.coefficients[idx(a, 0, 0, d, s)];
                }
                for b in 0..2 {
                    for c in 0..2 {
                        let rebuilt = abd[idx(a, b, 0, d, s)] + acd[idx(a, 0, c, d, s)];
                        residual = residual.max((rebuilt - e.coefficients[idx(a, b, c, d, s)]).abs());
                    }
                }
            }
        }
    }
    Ok(MarginalSplit { abd, acd, residual })
}

/// True iff the expression is a linear functional of the ABD and ACD marginals.
#[allow(non_snake_case)]
pub fn supports_only_ABD_ACD(e: &BellExpression) -> bool {
    let scale = e.coefficients.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    match abd_acd_split(e) {
        Ok(split) => split.residual <= ALGEBRAIC_TOL * scale,
        Err(_) => false,
    }
}

pub use supports_only_ABD_ACD as supports_only_abd_acd;
