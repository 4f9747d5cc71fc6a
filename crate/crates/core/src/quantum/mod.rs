//! Pure states of up to four qubits measured with two binary projective
//! measurements per party, and see-saw maximization of Bell expressions.

pub mod linalg;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlations::{bit, check_arity, entry_index, evaluate_bell, Behavior, BellExpression};
use crate::error::{invalid, Error, Result};
use crate::spacetime::Geometry;
use linalg::{hermitian_eigen, norm, CMatrix, C64, ONE, ZERO};

/// Residual allowed on state normalization and projector identities.
pub const SETUP_TOL: f64 = 1e-12;

/// `[setting][outcome]` projectors of one party.
pub type PartyMeasurements = [[CMatrix; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetupDoc", into = "SetupDoc")]
pub struct QuantumSetup {
    n_parties: usize,
    state: Vec<C64>,
    measurements: Vec<PartyMeasurements>,
}

/// State as interleaved (re, im) pairs; each projector as a row-major 2×2
/// matrix of interleaved (re, im) pairs, indexed [party][setting][outcome].
#[derive(Serialize, Deserialize)]
struct SetupDoc {
    n_parties: usize,
    state: Vec<f64>,
    measurements: Vec<Vec<Vec<Vec<f64>>>>,
}

fn interleave(v: &[C64]) -> Vec<f64> {
    v.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn deinterleave(v: &[f64]) -> Result<Vec<C64>> {
    if v.len() % 2 != 0 {
        return invalid("interleaved complex array has odd length");
    }
    Ok(v.chunks(2).map(|p| C64::new(p[0], p[1])).collect())
}

impl From<QuantumSetup> for SetupDoc {
    fn from(s: QuantumSetup) -> Self {
        SetupDoc {
            n_parties: s.n_parties,
            state: interleave(&s.state),
            measurements: s
                .measurements
                .iter()
                .map(|party| {
                    party
                        .iter()
                        .map(|setting| setting.iter().map(|m| interleave(m.data())).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

impl TryFrom<SetupDoc> for QuantumSetup {
    type Error = Error;
    fn try_from(doc: SetupDoc) -> Result<Self> {
        let state = deinterleave(&doc.state)?;
        let mut measurements = Vec::new();
        for party in &doc.measurements {
            if party.len() != 2 || party.iter().any(|s| s.len() != 2) {
                return invalid("each party needs two settings with two projectors each");
            }
            let proj = |v: &Vec<f64>| -> Result<CMatrix> {
                let entries = deinterleave(v)?;
                if entries.len() != 4 {
                    return invalid("projectors must be 2×2");
                }
                CMatrix::from_rows(&[entries[..2].to_vec(), entries[2..].to_vec()])
            };
            measurements.push([
                [proj(&party[0][0])?, proj(&party[0][1])?],
                [proj(&party[1][0])?, proj(&party[1][1])?],
            ]);
        }
        if measurements.len() != doc.n_parties {
            return invalid("one measurement set per party required");
        }
        QuantumSetup::new(state, measurements)
    }
}

/// {(I + v·σ)/2, (I − v·σ)/2} for a unit Bloch vector v.
pub fn measurement_from_bloch(v: [f64; 3]) -> Result<[CMatrix; 2]> {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(len - 1.0).abs().lt(&1e-12) {
        return invalid(format!("Bloch vector {v:?} is not a unit vector"));
    }
    let obs = linalg::pauli_x()
        .scale(C64::new(v[0], 0.0))
        .add(&linalg::pauli_y().scale(C64::new(v[1], 0.0)))
        .add(&linalg::pauli_z().scale(C64::new(v[2], 0.0)));
    Ok(measurement_from_observable(&obs))
}

/// Spectral projectors of a ±1-valued observable; outcome 0 is eigenvalue +1.
pub fn measurement_from_observable(obs: &CMatrix) -> [CMatrix; 2] {
    let id = CMatrix::identity(2);
    let half = C64::new(0.5, 0.0);
    [id.add(obs).scale(half), id.sub(obs).scale(half)]
}

fn random_unit_vector(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if len > 1e-6 {
            return [v[0] / len, v[1] / len, v[2] / len];
        }
    }
}

pub fn random_measurements(rng: &mut impl Rng) -> PartyMeasurements {
    let mut m = || measurement_from_bloch(random_unit_vector(rng)).expect("unit vector");
    [m(), m()]
}

/// Normalized complex Gaussian vector.
pub fn random_state(n_parties: usize, rng: &mut impl Rng) -> Vec<C64> {
    let dim = 1 << n_parties;
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let len = norm(&v);
    v.iter_mut().for_each(|a| *a /= len);
    v
}

impl QuantumSetup {
    pub fn new(state: Vec<C64>, measurements: Vec<PartyMeasurements>) -> Result<Self> {
        let n = measurements.len();
        check_arity(n)?;
        if state.len() != 1 << n {
            return invalid(format!("a {n}-qubit state has {} amplitudes, got {}", 1 << n, state.len()));
        }
        if state.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return invalid("state has non-finite amplitudes");
        }
        let len = norm(&state);
        if (len - 1.0).abs() > SETUP_TOL {
            return invalid(format!("state norm is {len}, expected 1"));
        }
        let id = CMatrix::identity(2);
        for (k, party) in measurements.iter().enumerate() {
            for (s, pair) in party.iter().enumerate() {
                for m in pair {
                    if m.dim() != 2 {
                        return invalid(format!("party {k} setting {s}: projectors must be 2×2"));
                    }
                    let idem = m.mul(m).max_abs_diff(m);
                    let herm = m.hermiticity_residual();
                    if idem > SETUP_TOL || herm > SETUP_TOL {
                        return invalid(format!(
                            "party {k} setting {s}: not an orthogonal projector (residuals {idem:e}, {herm:e})"
                        ));
                    }
                }
                let completeness = pair[0].add(&pair[1]).max_abs_diff(&id);
                if completeness > SETUP_TOL {
                    return invalid(format!(
                        "party {k} setting {s}: projectors do not sum to the identity (residual {completeness:e})"
                    ));
                }
            }
        }
        Ok(QuantumSetup {
            n_parties: n,
            state,
            measurements,
        })
    }

    pub fn random(n_parties: usize, rng: &mut impl Rng) -> Result<Self> {
        check_arity(n_parties)?;
        let state = random_state(n_parties, rng);
        let measurements = (0..n_parties).map(|_| random_measurements(rng)).collect();
        QuantumSetup::new(state, measurements)
    }

    /// Two qubits in (|01⟩ − |10⟩)/√2, each party measuring along the given Bloch vectors.
    pub fn singlet(first: [[f64; 3]; 2], second: [[f64; 3]; 2]) -> Result<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let state = vec![ZERO, C64::new(h, 0.0), C64::new(-h, 0.0), ZERO];
        let m = |v: [[f64; 3]; 2]| -> Result<PartyMeasurements> {
            Ok([measurement_from_bloch(v[0])?, measurement_from_bloch(v[1])?])
        };
        QuantumSetup::new(state, vec![m(first)?, m(second)?])
    }

    /// The four-qubit linear cluster state CZ_AB CZ_BC CZ_CD |++++⟩ with
    /// A: X, Z; B: Z, X; C: (Z+X)/√2, (X−Z)/√2; D: X, Z. It reaches 6+√2 on S.
    pub fn cluster_fixture() -> Self {
        let state = (0..16usize)
            .map(|i| {
                let b = |k: usize| bit(i, k, 4);
                let phase = (b(0) & b(1)) ^ (b(1) & b(2)) ^ (b(2) & b(3));
                C64::new(if phase == 0 { 0.25 } else { -0.25 }, 0.0)
            })
            .collect();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x = [1.0, 0.0, 0.0];
        let z = [0.0, 0.0, 1.0];
        let m = |a: [f64; 3], b: [f64; 3]| [measurement_from_bloch(a).unwrap(), measurement_from_bloch(b).unwrap()];
        QuantumSetup::new(
            state,
            vec![m(x, z), m(z, x), m([h, 0.0, h], [h, 0.0, -h]), m(x, z)],
        )
        .expect("fixture is a valid setup")
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn state(&self) -> &[C64] {
        &self.state
    }

    pub fn measurements(&self) -> &[PartyMeasurements] {
        &self.measurements
    }

    /// Same measurements, a different (validated) state.
    pub fn with_state(&self, state: Vec<C64>) -> Result<Self> {
        QuantumSetup::new(state, self.measurements.clone())
    }
}

/// Applies a single-qubit operator to qubit `k` of an `n`-qubit vector.
pub fn apply_local(state: &[C64], op: &CMatrix, k: usize, n: usize) -> Vec<C64> {
    let shift = n - 1 - k;
    let mut out = vec![ZERO; state.len()];
    for (i, amp) in state.iter().enumerate() {
        if *amp == ZERO {
            continue;
        }
        let bi = (i >> shift) & 1;
        for bo in 0..2 {
            let c = op[(bo, bi)];
            if c != ZERO {
                out[(i & !(1 << shift)) | (bo << shift)] += c * amp;
            }
        }
    }
    out
}

/// P(outcomes|settings) = ⟨ψ| ⊗_k M^{s_k}_{o_k} |ψ⟩ = ‖(⊗_k M^{s_k}_{o_k}) ψ‖².
pub fn behavior_from_quantum(s: &QuantumSetup) -> Result<Behavior> {
    let n = s.n_parties;
    let mut table = vec![0.0; 1 << (2 * n)];
    for st in 0..(1usize << n) {
        for o in 0..(1usize << n) {
            let mut v = s.state.clone();
            for k in 0..n {
                let m = &s.measurements[k][bit(st, k, n) as usize][bit(o, k, n) as usize];
                v = apply_local(&v, m, k, n);
            }
            table[entry_index(n, o, st)] = v.iter().map(|a| a.norm_sqr()).sum();
        }
    }
    Behavior::new(n, table)
}

/// Σ_{o,s} e(o|s) ⊗_k M^{s_k}_{o_k}.
pub fn bell_operator(e: &BellExpression, measurements: &[PartyMeasurements]) -> Result<CMatrix> {
    let n = e.n_parties;
    if measurements.len() != n {
        return invalid(format!("expression has {n} parties, got {} measurement sets", measurements.len()));
    }
    let mut op = CMatrix::zeros(1 << n);
    for st in 0..(1usize << n) {
        for o in 0..(1usize << n) {
            let c = e.coefficients[entry_index(n, o, st)];
            if c == 0.0 {
                continue;
            }
            let mut term = CMatrix::identity(1);
            for (k, m) in measurements.iter().enumerate() {
                term = term.kron(&m[bit(st, k, n) as usize][bit(o, k, n) as usize]);
            }
            op = op.add(&term.scale(C64::new(c, 0.0)));
        }
    }
    Ok(op)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeesawConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        SeesawConfig {
            restarts: 50,
            max_iterations: 500,
            tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartOutcome {
    pub restart: usize,
    pub value: f64,
    /// Value after every sub-step: state update, then each party in turn.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub setup: Option<QuantumSetup>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeesawResult {
    pub setup: QuantumSetup,
    pub value: f64,
    /// Sub-step history of the winning restart.
    pub trace: Vec<f64>,
    pub restarts_used: usize,
    pub best_restart: usize,
    pub restart_values: Vec<f64>,
    pub converged: bool,
}

/// Reduced 2×2 operator of qubit k for the vector φ: ρ[i][j] = Σ_L φ[i,L] φ̄[j,L].
fn reduced_operator(phi: &[C64], k: usize, n: usize) -> CMatrix {
    let shift = n - 1 - k;
    let mut x = CMatrix::zeros(2);
    for (idx, amp) in phi.iter().enumerate() {
        if (idx >> shift) & 1 != 0 {
            continue;
        }
        let other = phi[idx | (1 << shift)];
        x[(0, 0)] += amp * amp.conj();
        x[(0, 1)] += amp * other.conj();
        x[(1, 0)] += other * amp.conj();
        x[(1, 1)] += other * other.conj();
    }
    x
}

/// Best measurements for party k with the state and other parties fixed.
///
/// The value is affine in party k's projectors: for setting t it reads
/// tr(M_0 X_{t,0}) + tr((I − M_0) X_{t,1}), so the maximizer is the projector
/// onto the nonnegative eigenspace of X_{t,0} − X_{t,1}. A zero eigenvalue is
/// given to outcome 0.
fn optimal_party_update(
    e: &BellExpression,
    state: &[C64],
    measurements: &[PartyMeasurements],
    k: usize,
) -> Result<PartyMeasurements> {
    let n = e.n_parties;
    let mut x: [[CMatrix; 2]; 2] = [
        [CMatrix::zeros(2), CMatrix::zeros(2)],
        [CMatrix::zeros(2), CMatrix::zeros(2)],
    ];
    for st in 0..(1usize << n) {
        let t = bit(st, k, n) as usize;
        for o_rest in 0..(1usize << n) {
            if bit(o_rest, k, n) != 0 {
                continue;
            }
            let c0 = e.coefficients[entry_index(n, o_rest, st)];
            let c1 = e.coefficients[entry_index(n, o_rest | (1 << (n - 1 - k)), st)];
            if c0 == 0.0 && c1 == 0.0 {
                continue;
            }
            let mut phi = state.to_vec();
            for j in (0..n).filter(|&j| j != k) {
                let m = &measurements[j][bit(st, j, n) as usize][bit(o_rest, j, n) as usize];
                phi = apply_local(&phi, m, j, n);
            }
            // ⟨φ|M⊗I|φ⟩ = tr(M ρ) with ρ the reduced operator of φ on qubit k.
            let rho = reduced_operator(&phi, k, n);
            x[t][0] = x[t][0].add(&rho.scale(C64::new(c0, 0.0)));
            x[t][1] = x[t][1].add(&rho.scale(C64::new(c1, 0.0)));
        }
    }
    let mut out = measurements[k].clone();
    for t in 0..2 {
        let g = x[t][0].sub(&x[t][1]);
        let g = g.add(&g.adjoint()).scale(C64::new(0.5, 0.0));
        let eig = hermitian_eigen(&g)?;
        let mut p0 = CMatrix::zeros(2);
        for (idx, &val) in eig.values.iter().enumerate() {
            if val >= -1e-12 {
                p0 = p0.add(&CMatrix::outer(&eig.vector(idx)));
            }
        }
        let p1 = CMatrix::identity(2).sub(&p0);
        out[t] = [p0, p1];
    }
    Ok(out)
}

fn top_eigenvector(op: &CMatrix) -> Result<(f64, Vec<C64>)> {
    let eig = hermitian_eigen(op)?;
    let k = eig.values.len() - 1;
    let mut v = eig.vector(k);
    // Fix the global phase so the largest amplitude is real and positive.
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, -1.0), |acc, (i, a)| if a.norm() > acc.1 + 1e-12 { (i, a.norm()) } else { acc });
    let phase = v[imax].conj() / v[imax].norm();
    let len = norm(&v);
    v.iter_mut().for_each(|a| *a = *a * phase / len);
    Ok((eig.values[k], v))
}

fn value_of(e: &BellExpression, state: &[C64], measurements: &[PartyMeasurements]) -> Result<f64> {
    let op = bell_operator(e, measurements)?;
    let hv = op.apply(state);
    Ok(linalg::inner(state, &hv).re)
}

/// One see-saw run from a seeded random start.
pub fn seesaw_restart(e: &BellExpression, cfg: &SeesawConfig, restart: usize) -> Result<RestartOutcome> {
    let n = e.n_parties;
    check_arity(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut measurements: Vec<PartyMeasurements> = (0..n).map(|_| random_measurements(&mut rng)).collect();
    let mut trace = Vec::new();
    let mut state = vec![ONE; 1];
    let mut last = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let (top, v) = top_eigenvector(&bell_operator(e, &measurements)?)?;
        state = v;
        trace.push(top);
        for k in 0..n {
            measurements[k] = optimal_party_update(e, &state, &measurements, k)?;
            trace.push(value_of(e, &state, &measurements)?);
        }
        let now = *trace.last().unwrap();
        if (now - last).abs() < cfg.tol {
            converged = true;
            break;
        }
        last = now;
    }
    let setup = QuantumSetup::new(state, measurements)?;
    let value = evaluate_bell(e, &behavior_from_quantum(&setup)?)?;
    Ok(RestartOutcome {
        restart,
        value,
        trace,
        iterations,
        converged,
        setup: Some(setup),
    })
}

/// Best of `cfg.restarts` independent see-saw runs. Restarts run on the
/// current rayon pool; the winner is the largest value, ties going to the
/// lower restart index, so the result does not depend on scheduling.
pub fn seesaw_maximize(e: &BellExpression, cfg: &SeesawConfig) -> Result<SeesawResult> {
    if cfg.restarts == 0 {
        return invalid("at least one restart is required");
    }
    if cfg.max_iterations == 0 || !(cfg.tol.is_finite() && cfg.tol >= 0.0) {
        return invalid("iteration cap must be positive and tolerance a nonnegative real");
    }
    let outcomes: Vec<RestartOutcome> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| seesaw_restart(e, cfg, r))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.value > outcomes[best].value {
            best = i;
        }
    }
    let restart_values = outcomes.iter().map(|o| o.value).collect();
    let winner = &outcomes[best];
    Ok(SeesawResult {
        setup: winner.setup.clone().expect("restart keeps its setup"),
        value: winner.value,
        trace: winner.trace.clone(),
        restarts_used: cfg.restarts,
        best_restart: best,
        restart_values,
        converged: winner.converged,
    })
}

/// The quantum prediction has no ordering parameter. This evaluates it once
/// per supplied configuration and reports whether every table is bitwise equal.
pub fn ordering_independence_check(s: &QuantumSetup, configurations: &[Geometry]) -> Result<bool> {
    let reference = behavior_from_quantum(s)?;
    for _ in configurations {
        let b = behavior_from_quantum(s)?;
        if b.table().iter().zip(reference.table()).any(|(p, q)| p.to_bits() != q.to_bits()) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn computational_basis_product_state() {
        let mut state = vec![ZERO; 16];
        state[0] = ONE;
        let z = [0.0, 0.0, 1.0];
        let m = || [measurement_from_bloch(z).unwrap(), measurement_from_bloch(z).unwrap()];
        let s = QuantumSetup::new(state, vec![m(), m(), m(), m()]).unwrap();
        let b = behavior_from_quantum(&s).unwrap();
        for st in 0..16 {
            assert_eq!(b.get(0, st), 1.0);
        }
    }

    #[test]
    fn cluster_fixture_value() {
        let s = QuantumSetup::cluster_fixture();
        let v = evaluate_bell(&BellExpression::lemma_s(), &behavior_from_quantum(&s).unwrap()).unwrap();
        assert!((v - (6.0 + std::f64::consts::SQRT_2)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn apply_local_matches_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_state(3, &mut rng);
        let m = random_measurements(&mut rng)[0][0].clone();
        let full = CMatrix::identity(2).kron(&m).kron(&CMatrix::identity(2));
        let a = full.apply(&psi);
        let b = apply_local(&psi, &m, 1, 3);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_setups() {
        let z = [0.0, 0.0, 1.0];
        let m = || [measurement_from_bloch(z).unwrap(), measurement_from_bloch(z).unwrap()];
        assert!(QuantumSetup::new(vec![ONE, ONE, ZERO, ZERO], vec![m(), m()]).is_err());
        assert!(QuantumSetup::new(vec![ONE, ZERO], vec![m(), m()]).is_err());
        let mut bad = m();
        bad[0][1] = CMatrix::zeros(2);
        assert!(QuantumSetup::new(vec![ONE, ZERO, ZERO, ZERO], vec![m(), bad]).is_err());
        assert!(measurement_from_bloch([1.0, 1.0, 0.0]).is_err());
    }
}
