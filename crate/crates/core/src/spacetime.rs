//! Events in one spatial dimension of a privileged frame, v-cones, and the
//! four-party geometry used by the signalling argument. Units: c = 1.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Slack used by the floating-point path when an event sits on a v-cone boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Default position grid step for the meeting-point search.
pub const DEFAULT_GRID_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub label: String,
    pub position: f64,
    pub time: f64,
}

impl Event {
    pub fn new(label: impl Into<String>, position: f64, time: f64) -> Self {
        Event {
            label: label.into(),
            position,
            time,
        }
    }

    fn check_finite(&self) -> Result<()> {
        if self.position.is_finite() && self.time.is_finite() {
            Ok(())
        } else {
            invalid(format!(
                "event {} has non-finite coordinates ({}, {})",
                self.label, self.position, self.time
            ))
        }
    }

    pub fn to_exact(&self) -> Result<ExactEvent> {
        self.check_finite()?;
        Ok(ExactEvent {
            label: self.label.clone(),
            position: exact_from_f64(self.position)?,
            time: exact_from_f64(self.time)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CausalRelation {
    Before,
    After,
    Unrelated,
}

impl CausalRelation {
    pub fn symbol(self) -> &'static str {
        match self {
            CausalRelation::Before => "<",
            CausalRelation::After => ">",
            CausalRelation::Unrelated => "∼",
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            CausalRelation::Before => CausalRelation::After,
            CausalRelation::After => CausalRelation::Before,
            CausalRelation::Unrelated => CausalRelation::Unrelated,
        }
    }
}

impl fmt::Display for CausalRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl Serialize for CausalRelation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for CausalRelation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "<" => Ok(CausalRelation::Before),
            ">" => Ok(CausalRelation::After),
            "∼" | "~" => Ok(CausalRelation::Unrelated),
            other => Err(serde::de::Error::custom(format!("unknown relation {other:?}"))),
        }
    }
}

fn check_speed_ratio(r: f64) -> Result<()> {
    if !r.is_finite() || r <= 1.0 {
        return invalid(format!("speed ratio must be a finite real > 1, got {r}"));
    }
    Ok(())
}

/// Relation of `e1` to `e2` under influences of speed `r` (in units of c).
/// The v-cone boundary counts as inside.
pub fn causal_relation(e1: &Event, e2: &Event, r: f64) -> Result<CausalRelation> {
    e1.check_finite()?;
    e2.check_finite()?;
    check_speed_ratio(r)?;
    Ok(relation_f64(e1, e2, r))
}

fn relation_f64(e1: &Event, e2: &Event, r: f64) -> CausalRelation {
    let inside = |from: &Event, to: &Event| {
        let dt = to.time - from.time;
        if dt <= 0.0 {
            return false;
        }
        let dx = (to.position - from.position).abs();
        dx - r * dt <= BOUNDARY_TOL * dx.max(r * dt).max(1.0)
    };
    if inside(e1, e2) {
        CausalRelation::Before
    } else if inside(e2, e1) {
        CausalRelation::After
    } else {
        CausalRelation::Unrelated
    }
}

/// Exact counterpart of [`causal_relation`], no tolerance.
pub fn causal_relation_exact(e1: &ExactEvent, e2: &ExactEvent, r: &BigRational) -> Result<CausalRelation> {
    if *r <= BigRational::one() {
        return invalid(format!("speed ratio must be > 1, got {r}"));
    }
    let inside = |from: &ExactEvent, to: &ExactEvent| {
        let dt = &to.time - &from.time;
        dt.is_positive() && (&to.position - &from.position).abs() <= r * &dt
    };
    Ok(if inside(e1, e2) {
        CausalRelation::Before
    } else if inside(e2, e1) {
        CausalRelation::After
    } else {
        CausalRelation::Unrelated
    })
}

/// Labeled events plus the influence speed ratio r = v/c > 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryDoc")]
pub struct Geometry {
    pub speed_ratio: f64,
    pub events: Vec<Event>,
}

#[derive(Deserialize)]
struct GeometryDoc {
    speed_ratio: f64,
    events: Vec<Event>,
}

impl TryFrom<GeometryDoc> for Geometry {
    type Error = Error;
    fn try_from(doc: GeometryDoc) -> Result<Self> {
        Geometry::new(doc.speed_ratio, doc.events)
    }
}

impl Geometry {
    pub fn new(speed_ratio: f64, events: Vec<Event>) -> Result<Self> {
        check_speed_ratio(speed_ratio)?;
        let mut seen = BTreeSet::new();
        for e in &events {
            e.check_finite()?;
            if e.label.is_empty() {
                return invalid("event labels must be nonempty");
            }
            if !seen.insert(e.label.as_str()) {
                return invalid(format!("duplicate event label {}", e.label));
            }
        }
        Ok(Geometry { speed_ratio, events })
    }

    pub fn event(&self, label: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.label == label)
    }

    pub fn require(&self, label: &str) -> Result<&Event> {
        self.event(label)
            .ok_or_else(|| Error::InvalidInput(format!("geometry has no event labeled {label}")))
    }

    pub fn relation(&self, a: &str, b: &str) -> Result<CausalRelation> {
        causal_relation(self.require(a)?, self.require(b)?, self.speed_ratio)
    }

    pub fn ordering(&self) -> OrderingTable {
        let labels: Vec<String> = self.events.iter().map(|e| e.label.clone()).collect();
        let relations = self
            .events
            .iter()
            .map(|e1| self.events.iter().map(|e2| relation_f64(e1, e2, self.speed_ratio)).collect())
            .collect();
        OrderingTable { labels, relations }
    }

    /// `pattern` uses the syntax of [`OrderingPattern::parse`].
    pub fn matches(&self, pattern: &str) -> Result<bool> {
        Ok(self.ordering().matches(&OrderingPattern::parse(pattern)?))
    }

    /// Reflection x ↦ 2·center − x.
    pub fn mirrored(&self, center: f64) -> Geometry {
        Geometry {
            speed_ratio: self.speed_ratio,
            events: self
                .events
                .iter()
                .map(|e| Event::new(e.label.clone(), 2.0 * center - e.position, e.time))
                .collect(),
        }
    }

    pub fn with_time(&self, label: &str, time: f64) -> Result<Geometry> {
        let mut g = self.clone();
        match g.events.iter_mut().find(|e| e.label == label) {
            Some(e) => e.time = time,
            None => return invalid(format!("geometry has no event labeled {label}")),
        }
        Geometry::new(g.speed_ratio, g.events)
    }
}

/// Complete pairwise relation table of a geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingTable {
    labels: Vec<String>,
    relations: Vec<Vec<CausalRelation>>,
}

#[derive(Serialize)]
struct RelationEntry<'a> {
    first: &'a str,
    second: &'a str,
    relation: CausalRelation,
}

impl Serialize for OrderingTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut entries = Vec::new();
        for i in 0..self.labels.len() {
            for j in (i + 1)..self.labels.len() {
                entries.push(RelationEntry {
                    first: &self.labels[i],
                    second: &self.labels[j],
                    relation: self.relations[i][j],
                });
            }
        }
        entries.serialize(s)
    }
}

impl OrderingTable {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, a: &str, b: &str) -> Option<CausalRelation> {
        Some(self.relations[self.index(a)?][self.index(b)?])
    }

    pub fn matches(&self, pattern: &OrderingPattern) -> bool {
        let groups = pattern.groups();
        for (gi, g) in groups.iter().enumerate() {
            for (k, p) in g.iter().enumerate() {
                for q in &g[k + 1..] {
                    if self.get(p, q) != Some(CausalRelation::Unrelated) {
                        return false;
                    }
                }
                for later in &groups[gi + 1..] {
                    for q in later {
                        if self.get(p, q) != Some(CausalRelation::Before) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Pairwise relations in label order, e.g. "A<B, A∼C, ...".
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        for i in 0..self.labels.len() {
            for j in (i + 1)..self.labels.len() {
                parts.push(format!("{}{}{}", self.labels[i], self.relations[i][j], self.labels[j]));
            }
        }
        parts.join(", ")
    }
}

/// A chain of groups, e.g. `A<D<(B∼C)`: every member of an earlier group is
/// before every member of a later one, members of one group are unrelated.
/// `~` is accepted in place of `∼`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingPattern {
    groups: Vec<Vec<String>>,
}

impl OrderingPattern {
    pub fn parse(text: &str) -> Result<Self> {
        let mut groups = Vec::new();
        let mut seen = BTreeSet::new();
        for part in text.split('<') {
            let part = part.trim();
            let inner = part
                .strip_prefix('(')
                .and_then(|p| p.strip_suffix(')'))
                .unwrap_or(part);
            let mut group = Vec::new();
            for label in inner.split(['∼', '~']) {
                let label = label.trim();
                let ok = !label.is_empty()
                    && label.chars().all(|c| c.is_alphanumeric() || c == '\'' || c == '_');
                if !ok {
                    return invalid(format!("malformed ordering pattern {text:?}"));
                }
                if !seen.insert(label.to_string()) {
                    return invalid(format!("label {label} repeated in pattern {text:?}"));
                }
                group.push(label.to_string());
            }
            groups.push(group);
        }
        Ok(OrderingPattern { groups })
    }

    pub fn groups(&self) -> &[Vec<String>] {
        &self.groups
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().flatten().map(String::as_str)
    }

    pub fn is_total_chain(&self) -> bool {
        self.groups.iter().all(|g| g.len() == 1)
    }
}

impl fmt::Display for OrderingPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .groups
            .iter()
            .map(|g| {
                if g.len() == 1 {
                    g[0].clone()
                } else {
                    format!("({})", g.join("∼"))
                }
            })
            .collect();
        f.write_str(&parts.join("<"))
    }
}

fn exact_from_f64(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::InvalidInput(format!("{v} is not finite")))
}

fn rational_to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

fn serialize_rational<S: Serializer>(v: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExactEvent {
    pub label: String,
    #[serde(serialize_with = "serialize_rational")]
    pub position: BigRational,
    #[serde(serialize_with = "serialize_rational")]
    pub time: BigRational,
}

impl ExactEvent {
    pub fn to_f64(&self) -> Event {
        Event::new(self.label.clone(), rational_to_f64(&self.position), rational_to_f64(&self.time))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExactGeometry {
    #[serde(serialize_with = "serialize_rational")]
    pub speed_ratio: BigRational,
    pub events: Vec<ExactEvent>,
}

impl ExactGeometry {
    pub fn to_f64(&self) -> Result<Geometry> {
        Geometry::new(
            rational_to_f64(&self.speed_ratio),
            self.events.iter().map(ExactEvent::to_f64).collect(),
        )
    }

    pub fn event(&self, label: &str) -> Option<&ExactEvent> {
        self.events.iter().find(|e| e.label == label)
    }

    pub fn ordering(&self) -> Result<OrderingTable> {
        let labels = self.events.iter().map(|e| e.label.clone()).collect();
        let mut relations = Vec::new();
        for e1 in &self.events {
            let mut row = Vec::new();
            for e2 in &self.events {
                row.push(causal_relation_exact(e1, e2, &self.speed_ratio)?);
            }
            relations.push(row);
        }
        Ok(OrderingTable { labels, relations })
    }
}

/// The four-party arrangement: A=(0,0), B=(d_B, 2/(1+r)), C=(d_C, 2/(1+r)),
/// D=(1, 1/r) with d_B = (1+1/r)/4 + 1/(1+r) and d_C = 3(1+1/r)/4 − 1/(1+r).
pub fn figure3_geometry_exact(r: &BigRational) -> Result<ExactGeometry> {
    let one = BigRational::one();
    if *r <= one {
        return invalid(format!("speed ratio must be > 1, got {r}"));
    }
    let int = |n: i64| BigRational::from_integer(BigInt::from(n));
    let inv_r = &one / r;
    let inv_1r = &one / (&one + r);
    let d_b = (&one + &inv_r) / int(4) + &inv_1r;
    let d_c = int(3) * (&one + &inv_r) / int(4) - &inv_1r;
    let t_bc = int(2) * &inv_1r;
    let ev = |label: &str, position: BigRational, time: BigRational| ExactEvent {
        label: label.to_string(),
        position,
        time,
    };
    Ok(ExactGeometry {
        speed_ratio: r.clone(),
        events: vec![
            ev("A", BigRational::zero(), BigRational::zero()),
            ev("B", d_b, t_bc.clone()),
            ev("C", d_c, t_bc),
            ev("D", one.clone(), inv_r),
        ],
    })
}

/// Floating-point coordinates, each the correctly rounded exact value.
pub fn figure3_geometry(r: f64) -> Result<Geometry> {
    check_speed_ratio(r)?;
    figure3_geometry_exact(&exact_from_f64(r)?)?.to_f64()
}

/// Earliest event at which outcomes broadcast at speed c from every source are
/// all available: the minimizer of T(x) = max_p (t_p + |x − x_p|).
///
/// T is convex and piecewise linear with slopes ±1, so its minimum sits at a
/// source position or where a right-moving front of one source meets the
/// left-moving front of another. Those candidates are evaluated exactly; a
/// grid of step `grid_step` is scanned as well and the better point wins.
pub fn earliest_coavailability(label: &str, sources: &[&Event], grid_step: f64) -> Result<Event> {
    if sources.is_empty() {
        return invalid("meeting point needs at least one source");
    }
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return invalid(format!("grid step must be positive, got {grid_step}"));
    }
    for s in sources {
        s.check_finite()?;
    }
    let arrival = |x: f64| {
        sources
            .iter()
            .map(|s| s.time + (x - s.position).abs())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut candidates: Vec<f64> = sources.iter().map(|s| s.position).collect();
    for p in sources {
        for q in sources {
            candidates.push((q.time - p.time + p.position + q.position) / 2.0);
        }
    }
    let lo = sources.iter().map(|s| s.position).fold(f64::INFINITY, f64::min);
    let hi = sources.iter().map(|s| s.position).fold(f64::NEG_INFINITY, f64::max);
    let steps = ((hi - lo) / grid_step).ceil() as usize;
    candidates.extend((0..=steps).map(|k| (lo + k as f64 * grid_step).min(hi)));

    let mut best = (candidates[0], arrival(candidates[0]));
    for &x in &candidates[1..] {
        let t = arrival(x);
        if t < best.1 || (t == best.1 && x < best.0) {
            best = (x, t);
        }
    }
    Ok(Event::new(label, best.0, best.1))
}

/// D′: where B, C and D outcomes are first co-available; A′: same for A, B, C.
pub fn broadcast_meeting_events(g: &Geometry) -> Result<(Event, Event)> {
    broadcast_meeting_events_with_grid(g, DEFAULT_GRID_STEP)
}

pub fn broadcast_meeting_events_with_grid(g: &Geometry, grid_step: f64) -> Result<(Event, Event)> {
    let [a, b, c, d] = ["A", "B", "C", "D"].map(|l| g.require(l));
    let (a, b, c, d) = (a?, b?, c?, d?);
    let d_prime = earliest_coavailability("D'", &[b, c, d], grid_step)?;
    let a_prime = earliest_coavailability("A'", &[a, b, c], grid_step)?;
    Ok((d_prime, a_prime))
}

/// |Δx|/Δt in units of c.
pub fn effective_speed(source: &Event, target: &Event) -> Result<f64> {
    source.check_finite()?;
    target.check_finite()?;
    let dt = target.time - source.time;
    if dt <= 0.0 {
        return invalid(format!(
            "target {} is not later than source {} (Δt = {dt})",
            target.label, source.label
        ));
    }
    Ok((target.position - source.position).abs() / dt)
}

/// Geometries realizing A<D<B<C, A<D<C<B and A<D<(B∼C), in that order.
///
/// The input must realize A<D<(B∼C). For B<C, C is moved later so that it sits
/// `delta` beyond the edge of B's future v-cone; C<B mirrors this. A, D and the
/// unrelated configuration are left untouched. Moving an event later cannot
/// take it out of A's or D's future v-cone, so any finite `delta ≥ 0` is valid.
pub fn randomized_schedule(g: &Geometry, delta: f64) -> Result<[Geometry; 3]> {
    if !(delta.is_finite() && delta >= 0.0) {
        return invalid(format!("delta must be a finite nonnegative real, got {delta}"));
    }
    if !g.matches("A<D<(B∼C)")? {
        return invalid(format!(
            "schedule needs a geometry realizing A<D<(B∼C), got {}",
            g.ordering().describe()
        ));
    }
    let b = g.require("B")?;
    let c = g.require("C")?;
    let lag = (c.position - b.position).abs() / g.speed_ratio + delta;
    let b_first = g.with_time("C", b.time + lag)?;
    let c_first = g.with_time("B", c.time + lag)?;
    for (geom, pattern) in [(&b_first, "A<D<B<C"), (&c_first, "A<D<C<B")] {
        if !geom.matches(pattern)? {
            return Err(Error::Inconsistency(format!(
                "shifted geometry does not realize {pattern}: {}",
                geom.ordering().describe()
            )));
        }
    }
    Ok([b_first, c_first, g.clone()])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelSample {
    pub speed_ratio: f64,
    pub d_prime: Event,
    pub speed_a_to_d_prime: f64,
    pub a_prime: Event,
    pub speed_d_to_a_prime: f64,
}

pub fn channel_sample(r: f64) -> Result<ChannelSample> {
    let g = figure3_geometry(r)?;
    let (d_prime, a_prime) = broadcast_meeting_events(&g)?;
    Ok(ChannelSample {
        speed_ratio: r,
        speed_a_to_d_prime: effective_speed(g.require("A")?, &d_prime)?,
        speed_d_to_a_prime: effective_speed(g.require("D")?, &a_prime)?,
        d_prime,
        a_prime,
    })
}

/// `n` speed ratios evenly spaced on [lo, hi].
pub fn channel_sweep(lo: f64, hi: f64, n: usize) -> Result<Vec<ChannelSample>> {
    if n == 0 || !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return invalid(format!("bad sweep range {lo}:{hi}:{n}"));
    }
    (0..n)
        .map(|k| {
            let r = if n == 1 {
                lo
            } else if k == n - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            };
            channel_sample(r)
        })
        .collect()
}

/// Converts a decimal or fraction string ("2", "1.1", "17/24") to an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let bad = || Error::InvalidInput(format!("cannot parse {text:?} as a rational number"));
    if let Some((n, d)) = text.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let numer: BigInt = digits.parse().map_err(|_| bad())?;
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    let v = BigRational::new(numer, denom);
    Ok(if negative { -v } else { v })
}

/// Exact rational from an integer pair; used by tests and fixtures.
pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from_i64(n).unwrap(), BigInt::from_i64(d).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_is_inclusive() {
        let a = Event::new("A", 0.0, 0.0);
        let b = Event::new("B", 1.0, 0.5);
        assert_eq!(causal_relation(&a, &b, 2.0).unwrap(), CausalRelation::Before);
        assert_eq!(causal_relation(&b, &a, 2.0).unwrap(), CausalRelation::After);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = Event::new("A", 0.0, 0.0);
        let b = Event::new("B", f64::NAN, 0.5);
        assert!(causal_relation(&a, &b, 2.0).is_err());
        assert!(causal_relation(&a, &a, 1.0).is_err());
        assert!(figure3_geometry(1.0).is_err());
        assert!(Geometry::new(2.0, vec![a.clone(), a]).is_err());
    }

    #[test]
    fn pattern_round_trip() {
        let p = OrderingPattern::parse("A<D<(B~C)").unwrap();
        assert_eq!(p.to_string(), "A<D<(B∼C)");
        assert_eq!(p.groups().len(), 3);
        assert!(!p.is_total_chain());
        assert!(OrderingPattern::parse("A<<B").is_err());
        assert!(OrderingPattern::parse("A<A").is_err());
        assert!(OrderingPattern::parse("A∼B").unwrap().groups().len() == 1);
    }

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_rational("17/24").unwrap(), ratio(17, 24));
        assert_eq!(parse_rational("1.1").unwrap(), ratio(11, 10));
        assert_eq!(parse_rational("-2").unwrap(), ratio(-2, 1));
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn schedule_rejects_negative_delta() {
        let g = figure3_geometry(2.0).unwrap();
        assert!(randomized_schedule(&g, -0.1).is_err());
        let chain = Geometry::new(
            2.0,
            (0..4).map(|k| Event::new(["A", "B", "C", "D"][k], 0.0, k as f64)).collect(),
        )
        .unwrap();
        assert!(randomized_schedule(&chain, 0.01).is_err());
    }
}
