use num_rational::BigRational;
use proptest::prelude::*;

use vcone_core::spacetime::*;
use vcone_core::Error;

fn ev(label: &str, x: f64, t: f64) -> Event {
    Event::new(label, x, t)
}

/// Latest arrival at `x` of signals sent at speed c from every source.
fn arrival(sources: &[Event], x: f64) -> f64 {
    sources.iter().map(|s| s.time + (x - s.position).abs()).fold(f64::NEG_INFINITY, f64::max)
}

/// Brute-force scan of the arrival-time envelope on a fine grid.
fn scan_minimum(sources: &[Event], step: f64) -> (f64, f64) {
    let lo = sources.iter().map(|s| s.position).fold(f64::INFINITY, f64::min) - 1.0;
    let hi = sources.iter().map(|s| s.position).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let n = ((hi - lo) / step) as usize;
    (0..=n)
        .map(|k| lo + k as f64 * step)
        .map(|x| (x, arrival(sources, x)))
        .fold((lo, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
}

#[test]
fn causal_relation_examples() {
    let r = 2.0;
    assert_eq!(causal_relation(&ev("1", 0.0, 0.0), &ev("2", 0.0, 1.0), r).unwrap(), CausalRelation::Before);
    assert_eq!(causal_relation(&ev("1", 0.0, 0.0), &ev("2", 1.0, 0.5), r).unwrap(), CausalRelation::Before);
    let b = ev("B", 17.0 / 24.0, 2.0 / 3.0);
    let c = ev("C", 19.0 / 24.0, 2.0 / 3.0);
    assert_eq!(causal_relation(&b, &c, r).unwrap(), CausalRelation::Unrelated);
    // Same pair by the defining inequality |Δx| ≤ r·Δt with Δt = 0.
    assert!((c.position - b.position).abs() > r * (c.time - b.time).abs());
    assert!(matches!(
        causal_relation(&ev("1", f64::NAN, 0.0), &ev("2", 0.0, 1.0), r),
        Err(Error::InvalidInput(_))
    ));
    assert!(causal_relation(&ev("1", 0.0, 0.0), &ev("2", 0.0, 1.0), 1.0).is_err());
}

#[test]
fn exact_boundary_is_inclusive() {
    let r = ratio(2, 1);
    let e1 = ev("1", 0.0, 0.0).to_exact().unwrap();
    let e2 = ev("2", 1.0, 0.5).to_exact().unwrap();
    assert_eq!(causal_relation_exact(&e1, &e2, &r).unwrap(), CausalRelation::Before);
    assert_eq!(causal_relation_exact(&e2, &e1, &r).unwrap(), CausalRelation::After);
}

#[test]
fn figure3_coordinates_at_r2_are_exact() {
    let g = figure3_geometry_exact(&ratio(2, 1)).unwrap();
    // d_B = (1 + 1/2)/4 + 1/3 = 17/24, d_C = 9/8 − 1/3 = 19/24, t = 2/3, t_D = 1/2.
    let expect = [("A", (0, 1), (0, 1)), ("B", (17, 24), (2, 3)), ("C", (19, 24), (2, 3)), ("D", (1, 1), (1, 2))];
    for (label, x, t) in expect {
        let e = g.event(label).unwrap();
        assert_eq!(e.position, ratio(x.0, x.1), "{label} position");
        assert_eq!(e.time, ratio(t.0, t.1), "{label} time");
    }
    let table = g.ordering().unwrap();
    let want = [
        ("A", "D", "<"),
        ("A", "B", "<"),
        ("A", "C", "<"),
        ("D", "B", "<"),
        ("D", "C", "<"),
        ("B", "C", "∼"),
    ];
    for (p, q, rel) in want {
        assert_eq!(table.get(p, q).unwrap().symbol(), rel, "{p}{rel}{q}");
    }
    assert!(table.matches(&OrderingPattern::parse("A<D<(B∼C)").unwrap()));
    let f = figure3_geometry(2.0).unwrap();
    assert!(f.matches("A<D<(B∼C)").unwrap());
    assert!((f.require("B").unwrap().position - 17.0 / 24.0).abs() < 1e-15);
}

#[test]
fn figure3_large_r_limit() {
    let g = figure3_geometry(1e6).unwrap();
    let b = g.require("B").unwrap();
    let c = g.require("C").unwrap();
    assert!((b.position - 0.25).abs() < 1e-5 && b.position > 0.25);
    assert!((c.position - 0.75).abs() < 1e-5 && c.position < 0.75);
    assert!(b.time < 1e-5);
    assert!(figure3_geometry(1.0).is_err());
    assert!(figure3_geometry(0.5).is_err());
}

#[test]
fn simple_orderings() {
    let flat = Geometry::new(
        3.0,
        vec![ev("A", 0.0, 0.0), ev("B", 1.0, 0.0), ev("C", 2.0, 0.0), ev("D", 3.0, 0.0)],
    )
    .unwrap();
    assert!(flat.matches("(A∼B∼C∼D)").unwrap());
    let chain = Geometry::new(
        3.0,
        vec![ev("A", 0.0, 0.0), ev("B", 0.0, 1.0), ev("C", 0.0, 2.0), ev("D", 0.0, 3.0)],
    )
    .unwrap();
    assert!(chain.matches("A<B<C<D").unwrap());
    assert!(!chain.matches("A<B<D<C").unwrap());
}

#[test]
fn meeting_points_at_r2() {
    let g = figure3_geometry(2.0).unwrap();
    let (d_prime, a_prime) = broadcast_meeting_events(&g).unwrap();
    // B's right-moving front meets D's left-moving front: x − 1/24 = 3/2 − x.
    assert!((d_prime.position - 37.0 / 48.0).abs() < 1e-12);
    assert!((d_prime.time - 35.0 / 48.0).abs() < 1e-12);
    // A's right-moving front meets C's left-moving front: x = 35/24 − x.
    assert!((a_prime.position - 35.0 / 48.0).abs() < 1e-12);
    assert!((a_prime.time - 35.0 / 48.0).abs() < 1e-12);
    let a = g.require("A").unwrap();
    let d = g.require("D").unwrap();
    assert!((effective_speed(a, &d_prime).unwrap() - 37.0 / 35.0).abs() < 1e-12);
    assert!((effective_speed(d, &a_prime).unwrap() - 13.0 / 11.0).abs() < 1e-12);

    // The co-availability point at position 1 is later than the minimizer.
    let sources: Vec<Event> = ["B", "C", "D"].iter().map(|l| g.require(l).unwrap().clone()).collect();
    assert!((arrival(&sources, 1.0) - 23.0 / 24.0).abs() < 1e-15);
    assert!(d_prime.time < 23.0 / 24.0);
    let (x, t) = scan_minimum(&sources, 1e-5);
    assert!((t - d_prime.time).abs() < 2e-5 && (x - d_prime.position).abs() < 2e-5);
}

#[test]
fn colocated_sources_meet_in_place() {
    let p = ev("P", 0.3, 0.7);
    let m = earliest_coavailability("M", &[&p, &p.clone(), &p.clone()], DEFAULT_GRID_STEP).unwrap();
    assert_eq!((m.position, m.time), (0.3, 0.7));
}

#[test]
fn effective_speed_examples() {
    let o = ev("O", 0.0, 0.0);
    assert!((effective_speed(&o, &ev("T", 1.0, 23.0 / 24.0)).unwrap() - 24.0 / 23.0).abs() < 1e-15);
    assert_eq!(effective_speed(&o, &ev("T", 1.0, 1.0)).unwrap(), 1.0);
    assert_eq!(effective_speed(&o, &ev("T", 0.5, 1.0)).unwrap(), 0.5);
    assert!(effective_speed(&o, &ev("T", 0.5, 0.0)).is_err());
    assert!(effective_speed(&o, &ev("T", 0.5, -1.0)).is_err());
}

#[test]
fn schedule_realizes_the_three_orderings() {
    let g = figure3_geometry(2.0).unwrap();
    let [bc, cb, sim] = randomized_schedule(&g, 0.01).unwrap();
    assert!(bc.matches("A<D<B<C").unwrap());
    assert!(cb.matches("A<D<C<B").unwrap());
    assert!(sim.matches("A<D<(B∼C)").unwrap());
    assert_eq!(sim, g);
    // Only the later of B and C moves.
    assert_eq!(bc.require("B").unwrap(), g.require("B").unwrap());
    assert_eq!(cb.require("C").unwrap(), g.require("C").unwrap());
    assert!(randomized_schedule(&g, -0.01).is_err());
    assert!(randomized_schedule(&g, f64::INFINITY).is_err());
    assert!(randomized_schedule(&bc, 0.01).is_err());
}

#[test]
fn sweep_speeds_exceed_light() {
    for r in [1.1, 2.0, 10.0, 100.0] {
        let s = channel_sample(r).unwrap();
        assert!(s.speed_a_to_d_prime > 1.0, "r = {r}: {}", s.speed_a_to_d_prime);
        assert!(s.speed_d_to_a_prime > 1.0, "r = {r}: {}", s.speed_d_to_a_prime);
    }
    let sweep = channel_sweep(1.01, 100.0, 12).unwrap();
    assert_eq!(sweep.len(), 12);
    assert_eq!(sweep.last().unwrap().speed_ratio, 100.0);
    // The channel slows toward c as r approaches 1.
    assert!(sweep[0].speed_a_to_d_prime < sweep[11].speed_a_to_d_prime);
    assert!(sweep[0].speed_a_to_d_prime < 1.01);
}

#[test]
fn geometry_json_round_trip_and_validation() {
    let g = figure3_geometry(3.0).unwrap();
    let text = serde_json::to_string(&g).unwrap();
    let back: Geometry = serde_json::from_str(&text).unwrap();
    assert_eq!(back, g);
    assert!(serde_json::from_str::<Geometry>(r#"{"speed_ratio": 0.9, "events": []}"#).is_err());
    let dup = r#"{"speed_ratio": 2, "events": [{"label":"A","position":0,"time":0},{"label":"A","position":1,"time":0}]}"#;
    assert!(serde_json::from_str::<Geometry>(dup).is_err());
    let table = serde_json::to_value(g.ordering()).unwrap();
    assert_eq!(table.as_array().unwrap().len(), 6);
}

#[test]
fn parse_rational_forms() {
    assert_eq!(parse_rational("17/24").unwrap(), ratio(17, 24));
    assert_eq!(parse_rational("1.1").unwrap(), ratio(11, 10));
    assert_eq!(parse_rational("2").unwrap(), BigRational::from_integer(2.into()));
    assert!(parse_rational("x").is_err());
}

fn event_strategy() -> impl Strategy<Value = Event> {
    (-5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, t)| ev("E", x, t))
}

proptest! {
    #[test]
    fn relation_is_antisymmetric(e1 in event_strategy(), e2 in event_strategy(), r in 1.001..50.0f64) {
        let fwd = causal_relation(&e1, &e2, r).unwrap();
        let back = causal_relation(&e2, &e1, r).unwrap();
        prop_assert_eq!(fwd == CausalRelation::Before, back == CausalRelation::After);
        prop_assert_eq!(back, fwd.reversed());
    }

    #[test]
    fn relation_is_monotone_in_r(e1 in event_strategy(), e2 in event_strategy(), r in 1.001..50.0f64, k in 1.0..10.0f64) {
        if causal_relation(&e1, &e2, r).unwrap() == CausalRelation::Before {
            prop_assert_eq!(causal_relation(&e1, &e2, r * k).unwrap(), CausalRelation::Before);
        }
    }

    #[test]
    fn figure3_pattern_holds(log_r in 0.0001f64..6.0) {
        let r = 10f64.powf(log_r);
        let g = figure3_geometry(r).unwrap();
        prop_assert!(g.matches("A<D<(B∼C)").unwrap());
        let s = channel_sample(r).unwrap();
        prop_assert!(s.speed_a_to_d_prime > 1.0);
    }

    #[test]
    fn mirroring_preserves_relations(r in 1.01..100.0f64, center in -3.0..3.0f64) {
        let g = figure3_geometry(r).unwrap();
        prop_assert_eq!(g.mirrored(center).ordering(), g.ordering());
    }

    #[test]
    fn meeting_point_is_minimal(pts in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..5)) {
        let sources: Vec<Event> = pts.iter().map(|&(x, t)| ev("S", x, t)).collect();
        let refs: Vec<&Event> = sources.iter().collect();
        let m = earliest_coavailability("M", &refs, DEFAULT_GRID_STEP).unwrap();
        prop_assert!((arrival(&sources, m.position) - m.time).abs() < 1e-12);
        let (_, t) = scan_minimum(&sources, 1e-3);
        prop_assert!(m.time <= t + 1e-12);
    }

    #[test]
    fn exact_relation_agrees_off_the_boundary(p in 0i64..40, q in 0i64..40, rn in 11i64..60) {
        let e1 = ev("1", 0.0, 0.0);
        let e2 = ev("2", p as f64 / 8.0, q as f64 / 8.0 - 2.0);
        let r = ratio(rn, 10);
        let exact = causal_relation_exact(&e1.to_exact().unwrap(), &e2.to_exact().unwrap(), &r).unwrap();
        let float = causal_relation(&e1, &e2, rn as f64 / 10.0).unwrap();
        prop_assert_eq!(exact, float);
    }
}
