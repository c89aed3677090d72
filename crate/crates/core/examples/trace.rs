use std::time::Instant;
use tisr_core::degradation::*;
use tisr_core::image::Image;
use tisr_core::oracle::*;
use tisr_core::selfsim::*;
use tisr_core::simgen::synthetic_scene;
use tisr_core::solver::*;

fn main() {
    // 16x16 HR random instances, like acceptance criterion 1.
    let kernel = gaussian_kernel(7, 0.65).unwrap();
    for seed in 0..6u64 {
        let truth = synthetic_scene(16, 16, seed);
        let model = DegradationModel::standard(kernel.clone(), 16, 16).unwrap();
        let obs = apply_h(&model, &truth).unwrap();
        let ref_grid = PatchGrid::new(8, 8, 2, 1).unwrap();
        let hr_grid = PatchGrid::new(16, 16, 4, 2).unwrap();
        let graph = build_graph(&obs.y1, &ref_grid, &hr_grid, 3, None, 1e-6).unwrap();
        let amax = graph.edges().iter().map(|e| e.alpha).fold(0.0f64, f64::max);
        let lambda = 0.1;
        let dense = dense_tisr_minimizer(&obs, &model, &graph, lambda).unwrap();
        let obj_dense = objective(&dense, &obs, &model, &graph, lambda).unwrap();
        for c in [0.02, 0.1, 0.5, 2.0] {
            let config = SolverConfig { lambda, c, admm_iters: 1000, primal_tol: 1e-12, cg_tol: 1e-10, cg_max_iter: 4000, ..SolverConfig::default() };
            let t0 = Instant::now();
            let (z, state) = solve_tisr(&obs, &model, &graph, &config).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            let rel = z.sub(&dense).norm_l2() / dense.norm_l2();
            let obj = state.history.last().unwrap().objective;
            println!("seed {seed} amax {amax:9.2e} c={c:5.2} iters {:4} rel {rel:.2e} obj_gap {:.2e} time {dt:.3}s", state.iter, (obj-obj_dense).abs());
        }
        println!();
    }
}
