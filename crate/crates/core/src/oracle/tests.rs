use super::*;
use crate::embed::{build_distortion_embedding, distortion_kmax};
use crate::generators::{gen_space, GenSpec};
use crate::property_a::{doubling_family, dyadic_scales, normalize};
use crate::space::Graph;
use proptest::prelude::*;

fn graph_space(g: &Graph) -> FiniteSpace {
    FiniteSpace::from_graph(g).unwrap()
}

/// Distortion of the regular `2m`-gon, which is optimal for even cycles.
fn polygon_distortion(m: usize) -> f64 {
    m as f64 * (std::f64::consts::PI / (2 * m) as f64).sin()
}

fn assert_bracket(b: &DistortionBracket, tol: f64) {
    assert!(b.lower >= 1.0 && b.lower <= b.upper, "{b:?}");
    assert!(b.width() <= tol, "{b:?}");
    assert!(b.certified_lower >= b.lower - 1e-15 || b.lower == b.upper);
    assert!(b.realized_upper <= b.upper + 1e-15);
}

#[test]
fn isometrically_euclidean_spaces_have_unit_c2() {
    for g in [Graph::path(2), Graph::path(5), Graph::path(9), Graph::complete(3), Graph::complete(6)] {
        let b = exact_c2(&graph_space(&g), 1e-5).unwrap();
        assert_bracket(&b, 1e-5);
        assert!((b.lower - 1.0).abs() <= 1e-5 && (b.upper - 1.0).abs() <= 1e-5, "{b:?}");
    }
}

#[test]
fn even_cycles_match_the_regular_polygon() {
    for m in [2usize, 3, 4, 5] {
        let b = exact_c2(&graph_space(&Graph::cycle(2 * m)), 1e-5).unwrap();
        assert_bracket(&b, 1e-5);
        let want = polygon_distortion(m);
        assert!(b.lower <= want + 1e-9 && want <= b.upper + 1e-9, "C_{}: {b:?} vs {want}", 2 * m);
    }
    let c4 = exact_c2(&graph_space(&Graph::cycle(4)), 1e-4).unwrap();
    assert!((c4.lower - 2f64.sqrt()).abs() <= 1e-4 && (c4.upper - 2f64.sqrt()).abs() <= 1e-4);
}

#[test]
fn exact_c2_checks_its_inputs() {
    let big = graph_space(&Graph::path(EXACT_C2_LIMIT + 1));
    assert!(matches!(exact_c2(&big, 1e-3), Err(OracleError::TooLarge { n: 65, limit: 64 })));
    let small = graph_space(&Graph::cycle(4));
    for tol in [1e-7, 0.0, -1.0, f64::NAN] {
        assert!(matches!(exact_c2(&small, tol), Err(OracleError::InvalidTolerance(_))));
    }
    assert!(exact_c2(&small, MIN_TOL).is_ok());
}

#[test]
fn scaling_does_not_change_c2() {
    let s = graph_space(&Graph::cycle(6));
    let a = exact_c2(&s, 1e-5).unwrap();
    let b = exact_c2(&s.rescaled(7.5), 1e-5).unwrap();
    assert!((a.lower - b.lower).abs() <= 2e-5 && (a.upper - b.upper).abs() <= 2e-5);
}

#[test]
fn subspaces_never_need_more_distortion() {
    let tree = gen_space(&GenSpec::binary_tree(3)).unwrap();
    let full = exact_c2(&tree, 1e-4).unwrap();
    let mut last = 1.0;
    for r in [1.0, 2.0, 3.0] {
        let ball = tree.ball(0, r);
        let b = exact_c2(&tree.subspace(&ball), 1e-4).unwrap();
        assert!(b.lower <= full.upper + 1e-9, "ball {r}: {b:?} vs {full:?}");
        assert!(b.upper >= last - 1e-4);
        last = b.lower;
    }
}

#[test]
fn numeric_search_examples() {
    let p5 = graph_space(&Graph::path(5));
    assert!(numeric_cp_upper(&p5, 2.0, 1, 2, 0).unwrap() <= 1.0 + 1e-6);
    assert!(numeric_cp_upper(&p5, 1.0, 1, 2, 0).unwrap() <= 1.0 + 1e-6);
    let c4 = graph_space(&Graph::cycle(4));
    let u = numeric_cp_upper(&c4, 2.0, 2, 3, 5).unwrap();
    assert!(u >= 2f64.sqrt() - 1e-9 && u <= 2f64.sqrt() + 1e-3, "{u}");
    // the 4-cycle is an ℓ_1 space
    assert!(numeric_cp_upper(&c4, 1.0, 2, 3, 5).unwrap() <= 1.0 + 1e-3);
}

#[test]
fn numeric_search_checks_its_inputs() {
    let s = graph_space(&Graph::cycle(4));
    assert!(matches!(numeric_cp_upper(&s, 0.5, 2, 1, 0), Err(OracleError::InvalidArgument(_))));
    assert!(matches!(numeric_cp_upper(&s, 2.0, 0, 1, 0), Err(OracleError::InvalidArgument(_))));
}

#[test]
fn numeric_search_is_reproducible() {
    let s = gen_space(&GenSpec::binary_tree(2)).unwrap();
    let a = numeric_cp_upper(&s, 3.0, 3, 4, 11).unwrap();
    let b = numeric_cp_upper(&s, 3.0, 3, 4, 11).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn tree_bounds_are_sandwiched() {
    let tree = gen_space(&GenSpec::binary_tree(3)).unwrap();
    let exact = exact_c2(&tree, 1e-3).unwrap();
    assert_bracket(&exact, 1e-3);
    let numeric = numeric_cp_upper(&tree, 2.0, tree.len() - 1, 2, 3).unwrap();
    assert!(exact.upper <= numeric + 1e-3, "{exact:?} vs {numeric}");
    let fam = normalize(&tree, &doubling_family(&tree, 2.0, &dyadic_scales(distortion_kmax(&tree))).unwrap())
        .unwrap()
        .0;
    let emb = build_distortion_embedding(&tree, &fam, 0).unwrap();
    let built = distortion(&tree, &emb).unwrap();
    assert!(numeric <= built + 1e-3 && exact.lower <= built, "{numeric} vs {built}");
}

#[test]
fn csv_rows_are_stable() {
    let b = DistortionBracket {
        lower: 1.25,
        upper: 1.5,
        certified_lower: 1.25,
        realized_upper: 1.5,
        method: "sdp_barrier".into(),
    };
    assert_eq!(
        bracket_csv([("cycle:6", 2.0, &b)]),
        "space,p,lower,upper,method\ncycle:6,2,1.25,1.5,sdp_barrier\n"
    );
}

fn weighted_graph() -> impl Strategy<Value = Graph> {
    (3usize..7).prop_flat_map(|n| {
        prop::collection::vec(1u8..5, n * (n - 1) / 2).prop_map(move |w| {
            let edges = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .zip(w)
                .map(|((i, j), w)| (i, j, w as f64))
                .collect();
            Graph::new(n, edges).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn numeric_configurations_respect_the_bracket(g in weighted_graph()) {
        let s = FiniteSpace::from_graph(&g).unwrap();
        let b = exact_c2(&s, 1e-4).unwrap();
        prop_assert!(b.lower >= 1.0 && b.width() <= 1e-4);
        let u = numeric_cp_upper(&s, 2.0, s.len(), 1, 0).unwrap();
        prop_assert!(u >= b.lower - 1e-9, "{} < {:?}", u, b);
    }
}
