use hyperwalk_core::automaton::{bfs_spheres, bijection_test};
use hyperwalk_core::{Automaton, Generator, Presentation};
use proptest::prelude::*;

fn level_of(p: &Presentation, spheres: &[Vec<Vec<Generator>>], w: &[Generator]) -> Option<usize> {
    for (m, s) in spheres.iter().enumerate() {
        for u in s {
            let mut t = w.to_vec();
            t.extend(p.invert_word(u));
            if p.is_trivial(&t) {
                return Some(m);
            }
        }
    }
    None
}

#[test]
fn geodesic_acceptor_is_a_bijection_up_to_six() {
    let p = Presentation::surface(2).unwrap();
    let a = Automaton::build(&p);
    let rep = bijection_test(&a, 6);
    for row in &rep.rows {
        println!("{row:?}");
    }
    assert!(rep.pass);
    let sizes: Vec<usize> = rep.rows.iter().map(|r| r.bfs_sphere).collect();
    assert_eq!(sizes, [1, 8, 56, 392, 2736, 19096, 133288]);
}

#[test]
fn window_acceptor_overcounts() {
    let p = Presentation::surface(2).unwrap();
    for forbid in [false, true] {
        let a = Automaton::literal(&p, forbid);
        let rep = bijection_test(&a, 4);
        println!("forbid_inverse={forbid}: {:?}", rep.rows.last().unwrap());
        assert!(!rep.pass);
    }
}

#[test]
fn short_reduced_words_are_geodesic() {
    let p = Presentation::surface(2).unwrap();
    let spheres = bfs_spheres(&p, 4);
    let a = Automaton::literal(&p, false);
    for m in 0..=4 {
        for w in a.sphere_words(m) {
            assert_eq!(p.dehn_reduce(&w), w);
        }
        assert_eq!(spheres[m].len(), if m < 4 { a.sphere_counts(m)[m] as usize } else { 2736 });
    }
}

#[test]
fn distance_matches_bfs_on_small_ball() {
    let p = Presentation::surface(2).unwrap();
    let spheres = bfs_spheres(&p, 5);
    // every BFS representative, perturbed by a letter and its relator continuation
    for (m, s) in spheres.iter().enumerate().take(5) {
        for u in s.iter().step_by(7) {
            for x in p.generators() {
                let mut w = u.clone();
                w.push(x);
                let d = p.dehn_reduce(&w).len();
                assert_eq!(Some(d), level_of(&p, &spheres, &w), "{}", p.format_word(&w));
                assert!(d + 1 >= m && d <= m + 1);
            }
        }
    }
}

fn word_strategy(len: usize) -> impl Strategy<Value = Vec<Generator>> {
    prop::collection::vec((0u8..8).prop_map(Generator), 0..len)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 400, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn normal_form_is_accepted_and_equivalent(w in word_strategy(40)) {
        let p = Presentation::surface(2).unwrap();
        let a = Automaton::build(&p);
        let nf = p.normal_form(&w);
        prop_assert!(a.accepts(&nf));
        let mut t = w.clone();
        t.extend(p.invert_word(&nf));
        prop_assert!(p.is_trivial(&t));
        prop_assert_eq!(p.normal_form(&nf), nf.clone());
        let g = p.dehn_reduce(&w);
        prop_assert_eq!(g.len(), nf.len());
        prop_assert!(g.len() <= w.len());
    }

    #[test]
    fn free_reduce_idempotent(w in word_strategy(40)) {
        let p = Presentation::surface(2).unwrap();
        let r = p.free_reduce(&w);
        prop_assert_eq!(p.free_reduce(&r), r);
    }

    #[test]
    fn metric_axioms(x in word_strategy(12), y in word_strategy(12), z in word_strategy(12)) {
        let p = Presentation::surface(2).unwrap();
        let (x, y, z) = (p.element(&x), p.element(&y), p.element(&z));
        let d = |u, v| p.word_distance(u, v).unwrap();
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z));
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert_eq!(d(&x, &y) == 0, x == y);
        let gx = p.multiply(&z, &x).unwrap();
        let gy = p.multiply(&z, &y).unwrap();
        prop_assert_eq!(d(&gx, &gy), d(&x, &y));
    }
}

#[test]
fn genus_three_counts() {
    // growth series numerator 1,2,...,2,1 over 1,-(4g-2),...,1 for g=3
    let p = Presentation::surface(3).unwrap();
    let a = Automaton::build(&p);
    let c = a.sphere_counts(8);
    let g = 3usize;
    let num: Vec<i128> = (0..=2 * g).map(|i| if i == 0 || i == 2 * g { 1 } else { 2 }).collect();
    let den: Vec<i128> = (0..=2 * g).map(|i| if i == 0 || i == 2 * g { 1 } else { -(4 * g as i128 - 2) }).collect();
    let mut series = vec![0i128; 9];
    for m in 0..9 {
        let mut v = if m < num.len() { num[m] } else { 0 };
        for j in 1..den.len().min(m + 1) {
            v -= den[j] * series[m - j];
        }
        series[m] = v;
    }
    let got: Vec<i128> = c.iter().map(|&x| x as i128).collect();
    assert_eq!(got, series);
    let bij = bijection_test(&a, 3);
    assert!(bij.pass);
}

#[test]
fn genus_two_growth_ratio() {
    // ζ is the largest root of z^4 − 6z^3 − 6z^2 − 6z + 1
    let q = |z: f64| z.powi(4) - 6.0 * z.powi(3) - 6.0 * z * z - 6.0 * z + 1.0;
    let (mut lo, mut hi) = (6.0, 8.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let zeta = lo;
    let a = Automaton::build(&Presentation::surface(2).unwrap());
    let c = a.sphere_counts(13);
    assert_eq!(&c[..4], &[1, 8, 56, 392]);
    let ratio = c[13] as f64 / c[12] as f64;
    assert!((ratio - zeta).abs() < 1e-3, "{ratio} vs {zeta}");
    assert!((a.growth_rate().unwrap() - zeta).abs() < 1e-9);
}
