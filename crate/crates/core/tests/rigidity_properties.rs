mod common;

use nalgebra::DMatrix;
use subrigid::graph::{diameter, GeodesicTable, Graph};
use subrigid::rigidity::{
    diameter_eigenvalue_bound, diameter_test_vector, is_infinitesimally_rigid, laplacian,
    neighborhood_in_general_position, numerical_rank, rayleigh_quotient, rigidity_matrix,
    rigidity_report, sorted_eigenvalues, symmetric_rigidity_matrix, trivial_dof, trivial_motion_basis,
    Framework, DEFAULT_TOL,
};

fn normalized_rho(fw: &Framework) -> f64 {
    rigidity_report(fw, DEFAULT_TOL).unwrap().rho
}

#[test]
fn rank_and_eigenvalue_tests_agree() {
    let mut rng = common::rng(7);
    let mut rigid = 0;
    for k in 0..400 {
        let dim = 2 + k % 2;
        let n = 4 + k % 12;
        let fw = common::random_framework(&mut rng, n, dim, 0.3 + 0.5 * ((k / 2) % 5) as f64 / 5.0);
        let report = rigidity_report(&fw, DEFAULT_TOL).unwrap();
        assert_eq!(report.rigid, report.rank_rigid, "disagreement on case {k}");
        assert_eq!(report.rigid, report.rank_r == dim * n - trivial_dof(dim));
        rigid += report.rigid as usize;
    }
    assert!(rigid > 50 && rigid < 350, "sample should mix verdicts, got {rigid} rigid");
}

#[test]
fn symmetric_matrix_is_psd_and_scales_linearly() {
    let mut rng = common::rng(8);
    for k in 0..100 {
        let fw = common::random_framework(&mut rng, 5 + k % 8, 2 + k % 2, 0.6);
        let r = rigidity_matrix(&fw).unwrap();
        let w: Vec<f64> = (0..r.nrows()).map(|i| 0.2 + (i % 5) as f64 * 0.3).collect();
        let s = symmetric_rigidity_matrix(&r, &w).unwrap();
        let ev = sorted_eigenvalues(&s);
        let max = ev.last().copied().unwrap_or(0.0);
        assert!(ev[0] >= -1e-9 * max.max(1.0));
        let w3: Vec<f64> = w.iter().map(|x| 3.0 * x).collect();
        let ev3 = sorted_eigenvalues(&symmetric_rigidity_matrix(&r, &w3).unwrap());
        for (a, b) in ev.iter().zip(&ev3) {
            assert!((3.0 * a - b).abs() <= 1e-10 * max.max(1.0));
        }
    }
}

#[test]
fn trivial_motions_lie_in_the_null_space() {
    let mut rng = common::rng(9);
    for k in 0..100 {
        let dim = 2 + k % 2;
        let fw = common::random_framework(&mut rng, 3 + k % 10, dim, 0.7);
        let b = trivial_motion_basis(&fw);
        assert_eq!(b.ncols(), trivial_dof(dim));
        assert!((b.transpose() * &b - DMatrix::identity(b.ncols(), b.ncols())).norm() < 1e-10);
        let r = rigidity_matrix(&fw).unwrap();
        for col in b.column_iter() {
            assert!((&r * col).norm() < 1e-10);
        }
    }
}

#[test]
fn planar_diameter_bound_holds() {
    let mut rng = common::rng(10);
    for k in 0..300 {
        let fw = common::random_connected_framework(&mut rng, 4 + k % 14, 2, 0.25 + 0.1 * (k % 4) as f64);
        let d = diameter(fw.graph()).unwrap();
        let bound = diameter_eigenvalue_bound(fw.graph().edge_count(), d);
        let rho = normalized_rho(&fw);
        assert!(rho <= bound * (1.0 + 1e-12), "rho {rho} > bound {bound}");
    }
}

#[test]
fn spatial_diameter_bound_is_logged() {
    // The bound is only established for planar frameworks; record how it
    // fares in 3-D without enforcing it.
    let mut rng = common::rng(12);
    let mut violations = 0;
    for k in 0..100 {
        let fw = common::random_connected_framework(&mut rng, 5 + k % 10, 3, 0.4);
        let d = diameter(fw.graph()).unwrap();
        if normalized_rho(&fw) > diameter_eigenvalue_bound(fw.graph().edge_count(), d) {
            violations += 1;
        }
    }
    eprintln!("3-D diameter bound violations: {violations}/100");
}

#[test]
fn diameter_test_vector_bounds_fiedler_value() {
    let mut rng = common::rng(13);
    for k in 0..200 {
        let fw = common::random_connected_framework(&mut rng, 3 + k % 18, 2, 0.2 + 0.1 * (k % 5) as f64);
        let g = fw.graph();
        let u = diameter_test_vector(g).unwrap();
        assert!(u.sum().abs() < 1e-12);
        let l = laplacian(g);
        let lambda2 = sorted_eigenvalues(&l)[1];
        let q = rayleigh_quotient(&l, &u);
        assert!(q >= lambda2 - 1e-10, "quotient {q} below λ2 {lambda2}");
        let bound = diameter_eigenvalue_bound(g.edge_count(), diameter(g).unwrap());
        assert!(q <= bound + 1e-12);
    }
}

#[test]
fn adding_an_edge_never_decreases_rho() {
    let mut rng = common::rng(14);
    for k in 0..150 {
        let n = 5 + k % 8;
        let fw = common::random_framework(&mut rng, n, 2, 0.4);
        let missing: Vec<_> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !fw.graph().has_edge(i, j))
            .collect();
        if missing.is_empty() {
            continue;
        }
        let extra = missing[k % missing.len()];
        let g2 = Graph::from_edges(n, fw.graph().edges().iter().copied().chain([extra])).unwrap();
        let fw2 = fw.with_graph(g2).unwrap();
        let (a, b) = (normalized_rho(&fw), normalized_rho(&fw2));
        assert!(b >= a - 1e-10 * (1.0 + a), "rho fell from {a} to {b}");
    }
}

#[test]
fn rigid_frameworks_have_neighborhoods_in_general_position() {
    let mut rng = common::rng(15);
    let mut checked = 0;
    while checked < 100 {
        let fw = common::random_framework(&mut rng, 4 + checked % 10, 2, 0.6);
        if !is_infinitesimally_rigid(&fw, DEFAULT_TOL).unwrap() {
            continue;
        }
        for i in 0..fw.node_count() {
            assert!(neighborhood_in_general_position(&fw, i));
        }
        checked += 1;
    }
}

#[test]
fn rank_of_random_connected_graph_matches_geodesics() {
    // sanity: rank R of any framework never exceeds dn − f
    let mut rng = common::rng(16);
    for k in 0..50 {
        let fw = common::random_connected_framework(&mut rng, 4 + k % 6, 2, 0.5);
        let r = rigidity_matrix(&fw).unwrap();
        assert!(numerical_rank(&r, DEFAULT_TOL) <= 2 * fw.node_count() - 3);
        assert!(GeodesicTable::new(fw.graph()).is_connected());
    }
}
