use super::solve::generalized_top;
use super::*;
use crate::embed::{build_distortion_embedding, compression, distortion_kmax, pair_table};
use crate::generators::{gen_space, GenSpec};
use crate::property_a::{doubling_family, dyadic_scales, normalize};
use crate::space::Graph;
use nalgebra::{Cholesky, DMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graph_space(g: &Graph) -> FiniteSpace {
    FiniteSpace::from_graph(g).unwrap()
}

fn cycle(n: usize) -> FiniteSpace {
    graph_space(&Graph::cycle(n))
}

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|x| (x + 1..n).map(move |y| (x, y))).collect()
}

fn c4_diagonals() -> (FiniteSpace, MeasurePair) {
    let s = cycle(4);
    let mp = MeasurePair::uniform(&s, 2.0, &[(0, 2), (1, 3)], &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
    (s, mp)
}

/// Independent generalized eigenvalue: pin the last coordinate to zero
/// (killing the common constant kernel), Cholesky-factor the near form and
/// take the top eigenvalue of `L^{-1} A L^{-T}`. Needs a connected near graph.
fn grounded_lambda(space: &FiniteSpace, mp: &MeasurePair) -> f64 {
    let n = space.len();
    let form = |pairs: &[WeightedPair], near: bool| {
        let mut m = DMatrix::<f64>::zeros(n, n);
        for q in pairs {
            let w = if near { q.w / space.d(q.x, q.y).powi(2) } else { q.w };
            m[(q.x, q.x)] += w;
            m[(q.y, q.y)] += w;
            m[(q.x, q.y)] -= w;
            m[(q.y, q.x)] -= w;
        }
        m.view((0, 0), (n - 1, n - 1)).into_owned()
    };
    let a = form(mp.far(), false);
    let l = Cholesky::new(form(mp.near(), true)).expect("connected near graph").l();
    let li = l.try_inverse().unwrap();
    let m = &li * a * li.transpose();
    m.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn identical_forms_give_unit_constant() {
    let s = graph_space(&Graph::complete(3));
    let pairs = all_pairs(3);
    let mp = MeasurePair::uniform(&s, 1.0, &pairs, &pairs).unwrap();
    let c = optimal_constant_p2(&s, &mp).unwrap();
    assert!((c.j - 1.0).abs() < 1e-12);
    assert_eq!(c.method, Method::EigenExact);
}

#[test]
fn square_diagonals() {
    let (s, mp) = c4_diagonals();
    let c = optimal_constant_p2(&s, &mp).unwrap();
    assert!((c.j - 2f64.sqrt()).abs() < 1e-12);
    assert!((grounded_lambda(&s, &mp) - 2.0).abs() < 1e-12);
    // candidate φ = (1, 0, -1, 0) reaches the ratio 2
    assert!(c.slack(&s, &[1.0, 0.0, -1.0, 0.0]).abs() < 1e-12);
    let general = optimal_constant_general(&s, &mp, 2.0, &SearchBudget::default()).unwrap();
    assert!((general.j - c.j).abs() < 1e-6);
}

#[test]
fn disconnected_near_measure_is_infeasible() {
    let s = graph_space(&Graph::path(3));
    let mp = MeasurePair::uniform(&s, 2.0, &[(0, 2)], &[(0, 1)]).unwrap();
    assert!(matches!(optimal_constant_p2(&s, &mp), Err(PoincareError::Infeasible)));
    assert!(matches!(
        optimal_constant_general(&s, &mp, 1.5, &SearchBudget::default()),
        Err(PoincareError::Infeasible)
    ));
}

#[test]
fn measures_are_validated() {
    let s = cycle(4);
    let bad_far = MeasurePair::uniform(&s, 2.0, &[(0, 1)], &[(0, 1)]);
    assert!(matches!(bad_far, Err(PoincareError::InvalidMeasure(_))));
    let not_prob = MeasurePair::new(&s, 1.0, vec![WeightedPair::new(0, 1, 0.5)], uniform(&[(0, 1)]));
    assert!(matches!(not_prob, Err(PoincareError::InvalidMeasure(_))));
    let diagonal = MeasurePair::uniform(&s, 1.0, &[(0, 1)], &[(2, 2)]);
    assert!(matches!(diagonal, Err(PoincareError::InvalidMeasure(_))));
}

#[test]
fn equal_measures_at_unit_distance_for_any_p() {
    let s = graph_space(&Graph::complete(4));
    let pairs = all_pairs(4);
    let mp = MeasurePair::uniform(&s, 1.0, &pairs, &pairs).unwrap();
    for p in [1.0, 1.5, 3.0] {
        let c = optimal_constant_general(&s, &mp, p, &SearchBudget::default()).unwrap();
        assert!((c.j - 1.0).abs() < 1e-9, "p = {p}: {}", c.j);
    }
}

#[test]
fn hexagon_at_p1_matches_cut_enumeration() {
    let s = cycle(6);
    let far = [(0, 3), (1, 4), (2, 5)];
    let edges: Vec<(usize, usize)> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
    let mp = MeasurePair::uniform(&s, 3.0, &far, &edges).unwrap();
    let c = optimal_constant_general(&s, &mp, 1.0, &SearchBudget::default()).unwrap();
    let mut best = 0.0f64;
    for mask in 1u32..63 {
        let cut = |&(x, y): &(usize, usize)| ((mask >> x) ^ (mask >> y)) & 1 == 1;
        let a = far.iter().filter(|p| cut(p)).count() as f64 / 3.0;
        let b = edges.iter().filter(|p| cut(p)).count() as f64 / 6.0;
        best = best.max(a / b);
    }
    assert_eq!(best, 3.0);
    assert!((c.j - best).abs() < 1e-12);
    assert_eq!(c.method, Method::CutExhaustive);
}

#[test]
fn general_search_is_reproducible() {
    let s = cycle(9);
    let mp = MeasurePair::uniform(&s, 4.0, &[(0, 4), (1, 5), (2, 6)], &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (0, 8)]).unwrap();
    let b = SearchBudget { seed: 11, ..Default::default() };
    let c1 = optimal_constant_general(&s, &mp, 3.0, &b).unwrap();
    let c2 = optimal_constant_general(&s, &mp, 3.0, &b).unwrap();
    assert_eq!(c1.j.to_bits(), c2.j.to_bits());
}

#[test]
fn expander_examples() {
    let k2 = graph_space(&Graph::complete(2));
    assert!((expander_certificate(&k2).unwrap().j - 1.0).abs() < 1e-12);
    for n in [4, 8, 16] {
        let c = expander_certificate(&graph_space(&Graph::complete(n))).unwrap();
        assert!((c.j - 1.0).abs() < 1e-9);
    }
    let js: Vec<f64> = [8, 16, 32, 64].iter().map(|&n| expander_certificate(&cycle(n)).unwrap().j).collect();
    assert!(js.windows(2).all(|w| w[1] > 1.5 * w[0]), "{js:?}");
}

#[test]
fn expander_uses_half_of_the_pairs() {
    let s = cycle(16);
    let c = expander_certificate(&s).unwrap();
    let r = c.r();
    let count = |t: f64| all_pairs(16).iter().filter(|&&(x, y)| s.d(x, y) >= t).count() * 2;
    assert!(count(r) as f64 >= 128.0);
    assert!((count(r + 1.0) as f64) < 128.0);
}

#[test]
fn skew_cube_examples() {
    let s = graph_space(&Graph::path(5));
    let c = skew_cube_certificate(&s, &[1, 4]).unwrap();
    assert_eq!(c.j, 3.0);
    assert_eq!(c.r(), 3.0);

    let grid = gen_space(&GenSpec::grid(2, 9)).unwrap();
    let at = |x: usize, y: usize| x + 9 * y;
    let small = skew_cube_certificate(&grid, &[at(0, 0), at(2, 0), at(0, 2), at(2, 2)]).unwrap();
    assert!((small.j - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(small.r(), 4.0);
    assert_eq!(small.method, Method::SkewCube);

    let big = skew_cube_certificate(&grid, &[at(2, 2), at(6, 2), at(2, 6), at(6, 6)]).unwrap();
    let exact = optimal_constant_p2(&grid, &big.measures).unwrap();
    assert!(exact.j <= big.j + 1e-12, "{} > {}", exact.j, big.j);

    assert!(matches!(skew_cube_certificate(&grid, &[0, 1, 2]), Err(PoincareError::NotACube(_))));
    assert!(matches!(
        skew_cube_certificate(&grid, &[0, 1, 2, 1]),
        Err(PoincareError::NotInjective { a: 1, b: 3 })
    ));
}

#[test]
fn skew_cube_on_hypercube_is_valid() {
    // the 3-cube graph, embedded by the identity
    let g = gen_space(&GenSpec::grid(3, 2)).unwrap();
    let c = skew_cube_certificate(&g, &(0..8).collect::<Vec<_>>()).unwrap();
    assert!((c.j - 3f64.sqrt()).abs() < 1e-12);
    let exact = optimal_constant_p2(&g, &c.measures).unwrap();
    assert!(exact.j <= c.j + 1e-12);
    for mask in 0u32..256 {
        let phi: Vec<f64> = (0..8).map(|i| f64::from((mask >> i) & 1)).collect();
        assert!(c.slack(&g, &phi) >= -1e-9);
    }
}

#[test]
fn diametral_certificates_on_even_cycles() {
    let c4 = diametral_certificate(&cycle(4)).unwrap();
    assert!((c4.j - 2f64.sqrt()).abs() < 1e-12);
    assert!((compression_constraint(&c4).unwrap().lower_bound - 2f64.sqrt()).abs() < 1e-12);
    let c6 = diametral_certificate(&cycle(6)).unwrap();
    assert!((c6.j - 2.0).abs() < 1e-12);
    assert!((compression_constraint(&c6).unwrap().lower_bound - 1.5).abs() < 1e-12);
}

fn random_phi(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn check_validity(space: &FiniteSpace, c: &PoincareCertificate) {
    let n = space.len();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        assert!(c.slack(space, &random_phi(&mut rng, n)) >= -1e-9);
    }
    if n <= 20 {
        for mask in 0u32..1 << n {
            let phi: Vec<f64> = (0..n).map(|i| f64::from((mask >> i) & 1)).collect();
            assert!(c.slack(space, &phi) >= -1e-9);
        }
    }
}

#[test]
fn eigen_certificates_hold_for_test_functions() {
    let (s, mp) = c4_diagonals();
    check_validity(&s, &optimal_constant_p2(&s, &mp).unwrap());
    check_validity(&cycle(12), &expander_certificate(&cycle(12)).unwrap());
    let rr = gen_space(&GenSpec::random_regular(16, 3, 1)).unwrap();
    check_validity(&rr, &expander_certificate(&rr).unwrap());
    // the maximizer attains equality
    let (lambda, v) = generalized_top(&s, &mp);
    let c = optimal_constant_p2(&s, &mp).unwrap();
    assert!((lambda.sqrt() - c.j).abs() < 1e-12);
    assert!(c.slack(&s, &v).abs() < 1e-9);
}

#[test]
fn mixing_near_measures_never_raises_the_constant() {
    let s = cycle(10);
    let far = [(0, 5), (2, 7), (4, 9)];
    let edges: Vec<(usize, usize)> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
    let threes: Vec<(usize, usize)> = (0..10).map(|i| (i, (i + 3) % 10)).collect();
    let j_of = |near: Vec<WeightedPair>| {
        optimal_constant_p2(&s, &MeasurePair::new(&s, 5.0, uniform(&far), near).unwrap())
            .unwrap()
            .j
    };
    let j1 = j_of(uniform(&edges));
    let j2 = j_of(uniform(&threes));
    for lambda in [0.25, 0.5, 0.75] {
        let mixed: Vec<WeightedPair> = uniform(&edges)
            .into_iter()
            .map(|q| WeightedPair { w: q.w * lambda, ..q })
            .chain(uniform(&threes).into_iter().map(|q| WeightedPair { w: q.w * (1.0 - lambda), ..q }))
            .collect();
        assert!(j_of(mixed) <= j1.max(j2) + 1e-12);
    }
}

#[test]
fn constant_scales_with_the_metric() {
    let (s, mp) = c4_diagonals();
    let j = optimal_constant_p2(&s, &mp).unwrap().j;
    let s2 = s.rescaled(2.0);
    let mp2 = MeasurePair::new(&s2, 4.0, mp.far().to_vec(), mp.near().to_vec()).unwrap();
    let j2 = optimal_constant_p2(&s2, &mp2).unwrap().j;
    assert!((j2 - 2.0 * j).abs() <= 1e-12 * j2);
}

#[test]
fn tree_certificates() {
    let t4 = gen_space(&GenSpec::binary_tree(4)).unwrap();
    let c = tree_cp_certificate(&t4, 2.0, &SearchBudget::default()).unwrap();
    assert_eq!(c.r, 8.0);
    assert_eq!(c.scales.iter().map(|s| s.k).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert!(c.c > 0.0 && c.c <= 2.0, "{}", c.c);
    assert_eq!(c.method, Method::EigenExact);
    let bound = cumulative_constraint(&c).unwrap();
    assert!(bound.lower_bound > 1.0, "{}", bound.lower_bound);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        assert!(c.slack(&t4, &random_phi(&mut rng, t4.len())) >= -1e-9);
    }

    // depth 1: only the two leaves are a same-level pair, at distance 2
    let t1 = gen_space(&GenSpec::binary_tree(1)).unwrap();
    let c1 = tree_cp_certificate(&t1, 2.0, &SearchBudget::default()).unwrap();
    assert_eq!(c1.scales.len(), 1);
    assert_eq!(c1.scales[0].far, vec![WeightedPair::new(1, 2, 1.0)]);

    assert!(matches!(
        tree_cp_certificate(&cycle(6), 2.0, &SearchBudget::default()),
        Err(PoincareError::NotATree(_))
    ));
}

#[test]
fn tree_certificate_for_other_exponents_is_heuristic() {
    let t3 = gen_space(&GenSpec::binary_tree(3)).unwrap();
    for p in [1.5, 3.0] {
        let c = tree_cp_certificate(&t3, p, &SearchBudget::default()).unwrap();
        assert!(c.c > 0.0);
        assert_ne!(c.method, Method::EigenExact);
        assert_eq!(cumulative_constraint(&c).unwrap().q_differs(), p < 2.0);
    }
}

#[test]
fn laakso_certificates() {
    let budget = SearchBudget::default();
    let l1 = laakso_cp_check(1, 2.0, &budget).unwrap();
    assert!(l1.certificate.scales.iter().all(|s| s.isolated_j.is_finite() && s.isolated_j > 0.0));
    let l2 = laakso_cp_check(2, 2.0, &budget).unwrap();
    assert!(l2.linear_within_limit(), "{:?}", l2.ratios);
    assert_eq!(l2.certificate.scales.len(), 4);
    for s in &l2.certificate.scales {
        assert!(s.isolated_j <= l2.fitted_c * 2f64.powi(s.k as i32) * (1.0 + 1e-12));
        // the joint constant dominates every single scale
        assert!(s.j >= s.isolated_j * (1.0 - 1e-9));
    }
    assert!(laakso_cp_check(5, 2.0, &budget).is_err());
}

#[test]
fn single_scale_cumulation_is_a_plain_inequality() {
    let (s, mp) = c4_diagonals();
    let plain = optimal_constant_p2(&s, &mp).unwrap();
    let cum = cumulative_certificate(&s, 2.0, 2.0, vec![(1, mp.far().to_vec())], mp.near().to_vec(), &SearchBudget::default()).unwrap();
    assert!((cum.scales[0].j - plain.j).abs() < 1e-12);
    assert!((cum.scales[0].isolated_j - plain.j).abs() < 1e-12);
    let a = compression_constraint(&plain).unwrap();
    let b = cumulative_constraint(&cum).unwrap();
    assert!((a.lower_bound - b.lower_bound).abs() < 1e-12);
}

#[test]
fn constraint_examples() {
    let (s, mp) = c4_diagonals();
    let linear = PoincareCertificate { p: 2.0, j: 2.0, measures: mp.clone(), method: Method::EigenExact };
    assert_eq!(compression_constraint(&linear).unwrap().lower_bound, 1.0);
    let one = PoincareCertificate { p: 1.0, ..linear.clone() };
    assert!(matches!(compression_constraint(&one), Err(PoincareError::UnsupportedExponent { .. })));
    let heuristic = PoincareCertificate { method: Method::HeuristicLower, ..linear.clone() };
    let h = compression_constraint(&heuristic).unwrap();
    assert!(!h.certified && h.advisory.is_some());
    assert_eq!(h.ceiling_at(1.0), Some(2.0));
    assert_eq!(h.ceiling_at(3.0), None);
    assert_eq!(h.to_csv(), "t,ceiling\n1,2\n2,2\n");

    // J(t) = t at every scale: the sum counts the scales
    let t3 = gen_space(&GenSpec::binary_tree(3)).unwrap();
    let mut c = tree_cp_certificate(&t3, 2.0, &SearchBudget::default()).unwrap();
    for s in &mut c.scales {
        s.j = 2f64.powi(s.k as i32);
    }
    let k = c.scales.len() as f64;
    assert!((cumulative_constraint(&c).unwrap().lower_bound - k.sqrt()).abs() < 1e-12);
    let _ = s;
}

#[test]
fn certificates_round_trip_through_text() {
    let (s, mp) = c4_diagonals();
    let c = optimal_constant_p2(&s, &mp).unwrap();
    let text = c.to_text();
    assert!(text.starts_with("poincare p=2 r=2 J=1.4142135623730951 method=eigen_exact\nP\n0 2 0.5\n"));
    let parsed = parse_measures(&text).unwrap();
    assert_eq!(parsed.r, Some(2.0));
    let back = MeasurePair::new(&s, 2.0, parsed.far[0].1.clone(), parsed.near).unwrap();
    assert_eq!(back, mp);

    let t3 = gen_space(&GenSpec::binary_tree(3)).unwrap();
    let cum = tree_cp_certificate(&t3, 2.0, &SearchBudget::default()).unwrap();
    let parsed = parse_measures(&cum.to_text()).unwrap();
    assert_eq!(parsed.far.len(), cum.scales.len());
    assert_eq!(parsed.far[0].0, Some(1));
    assert_eq!(parsed.far[1].1, cum.scales[1].far);

    assert!(matches!(parse_measures("0 1 1\n"), Err(PoincareError::Parse { line: 1, .. })));
    assert!(matches!(parse_measures("P\n0 1\n"), Err(PoincareError::Parse { line: 2, .. })));
}

#[test]
fn measured_compression_respects_the_ceilings() {
    for s in [cycle(16), gen_space(&GenSpec::binary_tree(4)).unwrap()] {
        let fam = normalize(&s, &doubling_family(&s, 2.0, &dyadic_scales(distortion_kmax(&s))).unwrap())
            .unwrap()
            .0;
        let emb = build_distortion_embedding(&s, &fam, 0).unwrap();
        let lip = pair_table(&s, &emb).iter().map(|r| r.e / r.d).fold(0.0, f64::max);
        let rho = compression(&s, &emb);
        for c in [expander_certificate(&s).unwrap(), diametral_certificate(&s).unwrap()] {
            assert!(compression_constraint(&c).unwrap().worst_excess(&rho, lip) <= 1e-9);
        }
        if let Ok(cum) = tree_cp_certificate(&s, 2.0, &SearchBudget::default()) {
            assert!(cumulative_constraint(&cum).unwrap().constraint_value(&rho, lip) <= 1.0 + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eigen_matches_grounded_solver(n in 4usize..10, seed in 0u64..1000) {
        let s = cycle(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = (n / 2) as f64;
        let far: Vec<(usize, usize)> = all_pairs(n).into_iter().filter(|&(x, y)| s.d(x, y) >= r).collect();
        let weights: Vec<f64> = far.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let far_w: Vec<WeightedPair> = far.iter().zip(&weights).map(|(&(x, y), w)| WeightedPair::new(x, y, w / total)).collect();
        let near: Vec<(usize, usize)> = all_pairs(n).into_iter().filter(|&(x, y)| s.d(x, y) <= 2.0).collect();
        let mp = MeasurePair::new(&s, r, far_w, uniform(&near)).unwrap();
        let j = optimal_constant_p2(&s, &mp).unwrap().j;
        prop_assert!((j * j - grounded_lambda(&s, &mp)).abs() < 1e-9 * j * j);
    }
}
