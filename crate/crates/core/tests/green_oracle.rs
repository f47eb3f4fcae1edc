use hyperwalk_core::asymptotics::FreeGroupOracle;
use hyperwalk_core::green::{
    decay_fit, green_truncated, harnack_check, DomainSpec, GreenSource, RestrictedPairs,
};
use hyperwalk_core::walk::{BallMode, BallTable, StepDistribution};
use hyperwalk_core::{Automaton, GroupElement, Presentation};

fn surface_ball(m: usize) -> (Presentation, BallTable) {
    let p = Presentation::surface(2).unwrap();
    let bt = BallTable::build(&p, &StepDistribution::srw(&p), m, BallMode::Exact).unwrap();
    (p, bt)
}

#[test]
fn truncated_green_grows_with_radius_and_r() {
    let p = Presentation::surface(2).unwrap();
    let sd = StepDistribution::srw(&p);
    let mut last = 0.0;
    for m in 2..=6 {
        let bt = BallTable::build(&p, &sd, m, BallMode::Exact).unwrap();
        let g = green_truncated(&bt, 1.4, &DomainSpec::FullBall, &p.identity()).unwrap().values[0];
        assert!(g > last, "M = {m}");
        last = g;
    }
    let (p, bt) = surface_ball(5);
    let mut last = 0.0;
    for r in [0.2, 0.6, 1.0, 1.3, 1.45] {
        let g = green_truncated(&bt, r, &DomainSpec::FullBall, &p.identity()).unwrap();
        assert!(g.values[0] > last);
        assert!(g.values.iter().all(|&v| v >= 0.0));
        last = g.values[0];
    }
}

#[test]
fn killed_walk_pairs_are_symmetric_and_supermultiplicative() {
    let (p, bt) = surface_ball(5);
    let srcs: Vec<GroupElement> =
        ["", "a1", "b1", "a1 b1", "A2", "B1 a2", "b2 b2"].iter().map(|s| p.parse_element(s).unwrap()).collect();
    let rp = RestrictedPairs::solve(&bt, 1.35, &srcs).unwrap();
    let n = srcs.len();
    for a in 0..n {
        for b in 0..n {
            let gab = rp.green(a, &srcs[b]).unwrap();
            let gba = rp.green(b, &srcs[a]).unwrap();
            assert!((gab - gba).abs() < 1e-9 * gab);
            for c in 0..n {
                let lhs = rp.first_passage(a, c);
                let rhs = rp.first_passage(a, b) * rp.first_passage(b, c);
                assert!(lhs >= rhs * (1.0 - 1e-10), "{a} {b} {c}");
                assert!(rp.metric(a, b) + rp.metric(b, c) >= rp.metric(a, c) - 1e-9);
            }
        }
    }
}

#[test]
fn free_group_decay_rate_at_criticality() {
    let o = FreeGroupOracle::new(2).unwrap();
    let src = o.green_source(o.big_r()).unwrap();
    let aut = Automaton::build(&o.presentation());
    let d = decay_fit(&src, &aut, 1, 10).unwrap();
    assert!((d.rate - 1.0 / 3f64.sqrt()).abs() < 1e-10, "{}", d.rate);
    assert!(d.strictly_decreasing);
}

#[test]
fn free_group_harnack_constant() {
    // G(x, z)/G(x, y) = F^{|x⁻¹z| − |x⁻¹y|} ≤ F^{−d(y, z)}
    let o = FreeGroupOracle::new(2).unwrap();
    let p = o.presentation();
    let src = o.green_source(0.9 * o.big_r()).unwrap();
    let words = ["", "a1", "a1 a1", "b1 A1", "a1 b1 a1 b1", "B1 B1 a1"];
    let els: Vec<GroupElement> = words.iter().map(|w| p.parse_element(w).unwrap()).collect();
    let mut triples = Vec::new();
    for x in &els {
        for y in &els {
            for z in &els {
                triples.push((x.clone(), y.clone(), z.clone()));
            }
        }
    }
    let h = harnack_check(&src, &triples).unwrap();
    assert!(h.constant <= 1.0 / src.f + 1e-12);
    assert!(h.constant > 1.0);
    let g = src.green(&p.parse_element("a1 b1").unwrap()).unwrap();
    assert!((g - src.g * src.f * src.f).abs() < 1e-14);
}

#[test]
fn radial_table_matches_closed_form_below_criticality() {
    let o = FreeGroupOracle::new(3).unwrap();
    let p = o.presentation();
    let bt = BallTable::build(&p, &StepDistribution::srw(&p), 40, BallMode::Radial).unwrap();
    for r in [0.3, 0.7, 1.0] {
        let t = green_truncated(&bt, r, &DomainSpec::FullBall, &p.identity()).unwrap();
        let (f, g, _) = o.values(r).unwrap();
        assert!((t.values[0] - g).abs() < 1e-9);
        assert!((t.values[3] - g * f.powi(3)).abs() < 1e-9);
    }
}
