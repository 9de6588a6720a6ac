use manifold_lasso::embedding::{spectral_embed, EigenSolver, EmbeddingParams};
use manifold_lasso::graph::{GraphParams, Laplacian, NeighborGraph};
use manifold_lasso::synth::{circle, plane};
use manifold_lasso::tangent::estimate_frames;
use manifold_lasso::Parallelism;

fn cos_error(n: usize, eps: f64) -> f64 {
    let c = circle(n, 2, true, 0.0, 0).unwrap();
    let g = NeighborGraph::build(&c.cloud, &GraphParams::new(eps), Parallelism::Parallel).unwrap();
    let lap = Laplacian::from_graph(&g);
    let f: Vec<f64> = c.angles.iter().map(|a| a.cos()).collect();
    let mut lf = vec![0.0; n];
    lap.matrix().mul_vec(&f, &mut lf);
    let num: f64 = lf.iter().zip(&f).map(|(a, b)| (a + b).powi(2)).sum();
    (num / f.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

#[test]
fn laplacian_error_shrinks_with_bandwidth() {
    let coarse = cos_error(1000, 0.4);
    let fine = cos_error(1000, 0.2);
    assert!(fine < coarse, "{fine} >= {coarse}");
    assert!(fine < 0.05);
}

#[test]
fn laplacian_of_constant_vanishes() {
    let c = circle(500, 3, false, 0.01, 4).unwrap();
    let g = NeighborGraph::build(&c.cloud, &GraphParams::new(0.3), Parallelism::Parallel).unwrap();
    let lap = Laplacian::from_graph(&g);
    let mut out = vec![0.0; 500];
    lap.matrix().mul_vec(&vec![1.0; 500], &mut out);
    assert!(out.iter().all(|v| v.abs() < 1e-8));
}

#[test]
fn circle_spectrum_starts_with_unit_pair() {
    let c = circle(800, 2, true, 0.0, 0).unwrap();
    let g = NeighborGraph::build(&c.cloud, &GraphParams::new(0.15), Parallelism::Parallel).unwrap();
    let lap = Laplacian::from_graph(&g);
    for solver in [EigenSolver::Dense, EigenSolver::Lanczos] {
        let params = EmbeddingParams {
            solver,
            ..EmbeddingParams::new(4)
        };
        let e = spectral_embed(&lap, &params, Parallelism::Parallel).unwrap();
        let ev = e.eigenvalues().unwrap();
        // eigenvalues -1, -1, -4, -4 of the circle Laplacian
        for (got, want) in ev.iter().zip([-1.0, -1.0, -4.0, -4.0]) {
            assert!((got - want).abs() < 0.05 * want.abs(), "{solver:?}: {ev:?}");
        }
    }
}

#[test]
fn embedding_modes_agree() {
    let c = circle(400, 3, false, 0.0, 9).unwrap();
    let g = NeighborGraph::build(&c.cloud, &GraphParams::new(0.2), Parallelism::Parallel).unwrap();
    let lap = Laplacian::from_graph(&g);
    let params = EmbeddingParams::new(2);
    let a = spectral_embed(&lap, &params, Parallelism::Parallel).unwrap();
    let b = spectral_embed(&lap, &params, Parallelism::Sequential).unwrap();
    assert_eq!(a, b);
}

#[test]
fn local_pca_on_noisy_plane_is_close() {
    let pl = plane(600, 2, 5, 1e-3, 8).unwrap();
    let g = NeighborGraph::build(&pl.cloud, &GraphParams::new(0.15), Parallelism::Parallel).unwrap();
    let frames = estimate_frames(&pl.cloud, &g, 2, false, Parallelism::Parallel).unwrap();
    let truth = &pl.basis * pl.basis.transpose();
    for i in 0..pl.cloud.len() {
        let b = frames.basis(i).unwrap();
        assert!((b * b.transpose() - &truth).amax() < 0.05);
    }
}
