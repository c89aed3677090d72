//! Matrix-free conjugate gradient and the ADMM loop that minimizes the
//! twin-image criterion
//! 1/2 |DBz - y1|^2 + 1/2 |DBSz - y2|^2 + lambda f(z)
//! exactly: z-update as the prox of the self-similarity prior, x-update as
//! a warm-started CG solve of (H^T H + c I) x = H^T y + c (z + d), and the
//! scaled dual update d := d - (x - z).
//!
//! One solve is single-threaded and bit-reproducible for identical inputs.

use crate::degradation::{apply_h, apply_ht, DegradationModel, StackedObservation};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::selfsim::{prox_f_counted, regularizer_value, SelfSimGraph};

/// ADMM and inner-CG parameters.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Regularization strength lambda of the criterion.
    pub lambda: f64,
    /// ADMM penalty parameter c.
    pub c: f64,
    pub admm_iters: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Early stop on |x - z| / max(|z|, 1); 0 disables early stopping.
    pub primal_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            c: 2.0,
            admm_iters: 30,
            cg_tol: 1e-8,
            cg_max_iter: 500,
            primal_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidParameter(format!("c must be > 0, got {}", self.c)));
        }
        if self.admm_iters == 0 {
            return Err(Error::InvalidParameter("admm_iters must be >= 1".into()));
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return Err(Error::InvalidParameter("cg tolerance/budget must be positive".into()));
        }
        if !(self.primal_tol >= 0.0) {
            return Err(Error::InvalidParameter("primal_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-ADMM-iteration record.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub objective: f64,
    pub primal_residual: f64,
    pub z_cg_iters: usize,
    pub x_cg_iters: usize,
}

/// ADMM iterates and residual history.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Image,
    pub z: Image,
    pub d: Image,
    pub iter: usize,
    pub history: Vec<IterationRecord>,
}

/// CG outcome: solution estimate, iterations spent, final relative
/// residual, and whether the tolerance was met.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Image,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Conjugate gradient for an SPD operator given as a closure.
///
/// Stops when |A x - b| / |b| <= tol; returns the best iterate with
/// `converged = false` when the budget runs out. A NaN in the recurrence
/// signals a non-SPD operator or catastrophic conditioning and is an error.
pub fn cg_solve(
    apply_a: impl Fn(&Image) -> Image,
    b: &Image,
    x0: &Image,
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    if !b.same_shape(x0) {
        return Err(Error::DimensionMismatch("cg rhs and initial guess shapes differ".into()));
    }
    let b_norm = b.norm_l2();
    if b_norm == 0.0 {
        return Ok(CgSolution { x: Image::zeros(b.height(), b.width()), iterations: 0, residual: 0.0, converged: true });
    }

    let mut x = x0.clone();
    let mut r = b.sub(&apply_a(&x));
    let mut p = r.clone();
    let mut rs = r.dot(&r);
    let mut best = x.clone();
    let mut best_res = rs.sqrt() / b_norm;

    if best_res <= tol {
        return Ok(CgSolution { x, iterations: 0, residual: best_res, converged: true });
    }

    for iter in 1..=max_iter {
        let ap = apply_a(&p);
        let p_ap = p.dot(&ap);
        if !p_ap.is_finite() {
            return Err(Error::NumericalBreakdown("cg: non-finite curvature p^T A p".into()));
        }
        if p_ap <= 0.0 {
            return Err(Error::NumericalBreakdown(format!(
                "cg: nonpositive curvature {p_ap:.3e}, operator not SPD"
            )));
        }
        let alpha = rs / p_ap;
        x = x.axpy(alpha, &p);
        r = r.axpy(-alpha, &ap);
        let rs_new = r.dot(&r);
        if !rs_new.is_finite() {
            return Err(Error::NumericalBreakdown("cg: non-finite residual".into()));
        }
        let res = rs_new.sqrt() / b_norm;
        if res < best_res {
            best = x.clone();
            best_res = res;
        }
        if res <= tol {
            return Ok(CgSolution { x, iterations: iter, residual: res, converged: true });
        }
        p = r.axpy(rs_new / rs, &p);
        rs = rs_new;
    }

    Ok(CgSolution { x: best, iterations: max_iter, residual: best_res, converged: false })
}

/// The exact criterion value at z.
pub fn objective(
    z: &Image,
    obs: &StackedObservation,
    model: &DegradationModel,
    graph: &SelfSimGraph,
    lambda: f64,
) -> Result<f64> {
    let predicted = apply_h(model, z)?;
    let r1 = predicted.y1.sub(&obs.y1);
    let r2 = predicted.y2.sub(&obs.y2);
    let misfit = 0.5 * r1.dot(&r1) + 0.5 * r2.dot(&r2);
    Ok(misfit + lambda * regularizer_value(z, graph)?)
}

/// z-update: prox of (lambda/c) f at x - d.
pub fn z_update(
    state: &SolverState,
    graph: &SelfSimGraph,
    config: &SolverConfig,
) -> Result<(Image, usize)> {
    let v = state.x.sub(&state.d);
    prox_f_counted(&v, graph, config.lambda / config.c, config.cg_tol, config.cg_max_iter)
}

/// x-update: CG solve of (H^T H + c I) x = H^T y + c (z + d), warm-started
/// from the previous x.
pub fn x_update(
    state: &SolverState,
    obs: &StackedObservation,
    model: &DegradationModel,
    config: &SolverConfig,
) -> Result<(Image, usize)> {
    let hty = apply_ht(model, obs)?;
    let rhs = hty.add(&state.z.add(&state.d).scaled(config.c));
    let c = config.c;
    let apply = |u: &Image| {
        let hu = apply_h(model, u).expect("dimensions checked");
        apply_ht(model, &hu).expect("dimensions checked").axpy(c, u)
    };
    let solution = cg_solve(apply, &rhs, &state.x, config.cg_tol, config.cg_max_iter)?;
    if !solution.converged {
        return Err(Error::CgNoConvergence {
            iterations: solution.iterations,
            residual: solution.residual,
        });
    }
    Ok((solution.x, solution.iterations))
}

/// Dual update d := d - (x - z).
pub fn dual_update(state: &SolverState) -> Image {
    state.d.sub(&state.x.sub(&state.z))
}

/// Full ADMM loop with x0 = 1/2 H^T y and d0 = 0; returns the final z and
/// the complete iterate history.
pub fn solve_tisr(
    obs: &StackedObservation,
    model: &DegradationModel,
    graph: &SelfSimGraph,
    config: &SolverConfig,
) -> Result<(Image, SolverState)> {
    config.validate()?;
    if obs.y1.height() != model.lr_height() || obs.y1.width() != model.lr_width() {
        return Err(Error::DimensionMismatch(format!(
            "observation {}x{} does not match model LR {}x{}",
            obs.y1.height(),
            obs.y1.width(),
            model.lr_height(),
            model.lr_width()
        )));
    }
    if graph.grid().image_height() != model.hr_height
        || graph.grid().image_width() != model.hr_width
    {
        return Err(Error::DimensionMismatch(format!(
            "graph geometry {}x{} does not match model HR {}x{}",
            graph.grid().image_height(),
            graph.grid().image_width(),
            model.hr_height,
            model.hr_width
        )));
    }

    let x0 = apply_ht(model, obs)?.scaled(0.5);
    let mut state = SolverState {
        z: Image::zeros(model.hr_height, model.hr_width),
        d: Image::zeros(model.hr_height, model.hr_width),
        x: x0,
        iter: 0,
        history: Vec::with_capacity(config.admm_iters),
    };

    for _ in 0..config.admm_iters {
        let (z, z_cg_iters) = z_update(&state, graph, config)?;
        state.z = z;
        let (x, x_cg_iters) = x_update(&state, obs, model, config)?;
        state.x = x;
        state.d = dual_update(&state);
        state.iter += 1;

        let primal_residual = state.x.sub(&state.z).norm_l2();
        let objective = objective(&state.z, obs, model, graph, config.lambda)?;
        state.history.push(IterationRecord {
            objective,
            primal_residual,
            z_cg_iters,
            x_cg_iters,
        });

        if config.primal_tol > 0.0
            && primal_residual / state.z.norm_l2().max(1.0) <= config.primal_tol
        {
            break;
        }
    }

    Ok((state.z.clone(), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::gaussian_kernel;
    use crate::selfsim::{build_graph, PatchGrid, DEFAULT_EPS};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Image {
        Image::from_fn(h, w, |_, _| rng.random::<f64>())
    }

    fn toy_instance(
        hr: usize,
        rng: &mut ChaCha8Rng,
    ) -> (StackedObservation, DegradationModel, SelfSimGraph, Image) {
        let kernel = gaussian_kernel(3, 0.65).unwrap();
        let model = DegradationModel::standard(kernel, hr, hr).unwrap();
        let truth = random_image(hr, hr, rng);
        let obs = apply_h(&model, &truth).unwrap();
        let ref_grid = PatchGrid::new(hr / 2, hr / 2, 2, 1).unwrap();
        let hr_grid = PatchGrid::new(hr, hr, 4, 2).unwrap();
        let graph = build_graph(&obs.y1, &ref_grid, &hr_grid, 3, None, DEFAULT_EPS).unwrap();
        (obs, model, graph, truth)
    }

    #[test]
    fn cg_identity_converges_in_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = random_image(4, 4, &mut rng);
        let sol = cg_solve(|u| u.clone(), &b, &Image::zeros(4, 4), 1e-12, 10).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 1);
        for (a, want) in sol.x.pixels().iter().zip(b.pixels()) {
            assert_abs_diff_eq!(a, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn cg_diagonal_matches_elementwise_division() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let b = random_image(4, 4, &mut rng);
        let diag = |u: &Image| {
            Image::from_fn(4, 4, |r, c| (r as f64 * 4.0 + c as f64 + 1.0) * u.at(r, c))
        };
        let sol = cg_solve(diag, &b, &Image::zeros(4, 4), 1e-12, 100).unwrap();
        assert!(sol.converged);
        for r in 0..4 {
            for c in 0..4 {
                let want = b.at(r, c) / (r as f64 * 4.0 + c as f64 + 1.0);
                assert_abs_diff_eq!(sol.x.at(r, c), want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn cg_zero_rhs_returns_zero() {
        let sol = cg_solve(|u| u.clone(), &Image::zeros(3, 3), &Image::constant(3, 3, 1.0), 1e-10, 5)
            .unwrap();
        assert!(sol.converged);
        assert!(sol.x.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_flags_nonconvergence() {
        // Tiny budget on a non-trivial system leaves converged = false.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let b = random_image(4, 4, &mut rng);
        let diag = |u: &Image| {
            Image::from_fn(4, 4, |r, c| (1.0 + 1000.0 * ((r * 4 + c) as f64)) * u.at(r, c))
        };
        let sol = cg_solve(diag, &b, &Image::zeros(4, 4), 1e-14, 1).unwrap();
        assert!(!sol.converged);
        assert!(sol.residual > 1e-14);
    }

    #[test]
    fn cg_rejects_indefinite_operator() {
        let b = Image::constant(2, 2, 1.0);
        let neg = |u: &Image| u.scaled(-1.0);
        assert!(matches!(
            cg_solve(neg, &b, &Image::zeros(2, 2), 1e-10, 10),
            Err(Error::NumericalBreakdown(_))
        ));
    }

    #[test]
    fn objective_matches_stacked_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let (obs, model, graph, _) = toy_instance(8, &mut rng);
        let z = random_image(8, 8, &mut rng);
        let lambda = 0.3;
        let value = objective(&z, &obs, &model, &graph, lambda).unwrap();
        let hz = apply_h(&model, &z).unwrap();
        let diff = hz.sub(&obs);
        let stacked = 0.5 * diff.dot(&diff) + lambda * regularizer_value(&z, &graph).unwrap();
        assert_relative_eq!(value, stacked, max_relative = 1e-12);
        // lambda = 0 reduces to the pure stacked least-squares misfit.
        let value0 = objective(&z, &obs, &model, &graph, 0.0).unwrap();
        assert_relative_eq!(value0, 0.5 * diff.dot(&diff), max_relative = 1e-12);
    }

    #[test]
    fn objective_zero_on_consistent_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let (_, model, graph, _) = toy_instance(8, &mut rng);
        let constant = Image::constant(8, 8, 0.5);
        let obs = apply_h(&model, &constant).unwrap();
        let value = objective(&constant, &obs, &model, &graph, 0.7).unwrap();
        assert_abs_diff_eq!(value, 0.0, epsilon = 1e-20);
    }

    #[test]
    fn z_update_identity_when_lambda_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let (_, _, graph, _) = toy_instance(8, &mut rng);
        let state = SolverState {
            x: random_image(8, 8, &mut rng),
            z: Image::zeros(8, 8),
            d: random_image(8, 8, &mut rng),
            iter: 0,
            history: vec![],
        };
        let config = SolverConfig { lambda: 0.0, ..SolverConfig::default() };
        let (z, iters) = z_update(&state, &graph, &config).unwrap();
        assert_eq!(z, state.x.sub(&state.d));
        assert_eq!(iters, 0);
    }

    #[test]
    fn z_update_constant_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let (_, _, graph, _) = toy_instance(8, &mut rng);
        let state = SolverState {
            x: Image::constant(8, 8, 0.9),
            z: Image::zeros(8, 8),
            d: Image::constant(8, 8, 0.2),
            iter: 0,
            history: vec![],
        };
        let (z, _) = z_update(&state, &graph, &SolverConfig::default()).unwrap();
        for &v in z.pixels() {
            assert_abs_diff_eq!(v, 0.7, epsilon = 1e-9);
        }
    }

    #[test]
    fn x_update_penalty_dominated_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let (obs, model, _, _) = toy_instance(8, &mut rng);
        let z = random_image(8, 8, &mut rng);
        let d = random_image(8, 8, &mut rng);
        let state = SolverState {
            x: z.add(&d),
            z: z.clone(),
            d: d.clone(),
            iter: 0,
            history: vec![],
        };
        let config = SolverConfig { c: 1e8, cg_tol: 1e-12, cg_max_iter: 2000, ..SolverConfig::default() };
        let (x, _) = x_update(&state, &obs, &model, &config).unwrap();
        let target = z.add(&d);
        let rel = x.sub(&target).norm_l2() / target.norm_l2();
        assert!(rel <= 1e-6, "relative deviation {rel}");
    }

    #[test]
    fn x_update_constant_consistent_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (_, model, _, _) = toy_instance(8, &mut rng);
        let constant = Image::constant(8, 8, 0.5);
        let obs = apply_h(&model, &constant).unwrap();
        let state = SolverState {
            x: constant.clone(),
            z: constant.clone(),
            d: Image::zeros(8, 8),
            iter: 0,
            history: vec![],
        };
        let config = SolverConfig { cg_tol: 1e-12, ..SolverConfig::default() };
        let (x, _) = x_update(&state, &obs, &model, &config).unwrap();
        for &v in x.pixels() {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn dual_update_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let x = random_image(2, 2, &mut rng);
        let state = SolverState {
            x: x.clone(),
            z: x.clone(),
            d: random_image(2, 2, &mut rng),
            iter: 0,
            history: vec![],
        };
        assert_eq!(dual_update(&state), state.d);

        let g = random_image(2, 2, &mut rng);
        let state2 = SolverState {
            x: g.clone(),
            z: Image::zeros(2, 2),
            d: Image::zeros(2, 2),
            iter: 0,
            history: vec![],
        };
        assert_eq!(dual_update(&state2), g.scaled(-1.0));
    }

    #[test]
    fn dual_update_three_step_hand_trace() {
        // Scalars replicated on 2x2 images: d0=0.1, then x,z pairs
        // (0.5,0.2), (0.3,0.3), (0.1,0.4).
        let mk = |v: f64| Image::constant(2, 2, v);
        let mut d = mk(0.1);
        for (x, z, want) in [
            (0.5, 0.2, -0.2),       // 0.1 - 0.3
            (0.3, 0.3, -0.2),       // unchanged
            (0.1, 0.4, 0.1),        // -0.2 + 0.3
        ] {
            let state = SolverState { x: mk(x), z: mk(z), d, iter: 0, history: vec![] };
            d = dual_update(&state);
            for &v in d.pixels() {
                assert_abs_diff_eq!(v, want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn solve_constant_pair_recovers_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (_, model, graph, _) = toy_instance(8, &mut rng);
        let constant = Image::constant(8, 8, 0.5);
        let obs = apply_h(&model, &constant).unwrap();
        let config = SolverConfig { admm_iters: 50, ..SolverConfig::default() };
        let (z, state) = solve_tisr(&obs, &model, &graph, &config).unwrap();
        for &v in z.pixels() {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-5);
        }
        let last = state.history.last().unwrap();
        assert!(last.objective < 1e-9);
        assert_eq!(state.history.len(), state.iter);
    }

    #[test]
    fn solve_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (obs, model, graph, _) = toy_instance(8, &mut rng);
        let config = SolverConfig { admm_iters: 10, primal_tol: 0.0, ..SolverConfig::default() };
        let (z1, s1) = solve_tisr(&obs, &model, &graph, &config).unwrap();
        let (z2, s2) = solve_tisr(&obs, &model, &graph, &config).unwrap();
        assert_eq!(z1, z2);
        assert_eq!(s1.x, s2.x);
        assert_eq!(s1.d, s2.d);
    }

    #[test]
    fn merge_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (obs, model, _, _) = toy_instance(8, &mut rng);
        for _ in 0..20 {
            let z = random_image(8, 8, &mut rng);
            let hz = apply_h(&model, &z).unwrap();
            let stacked = {
                let diff = hz.sub(&obs);
                diff.dot(&diff)
            };
            let r1 = hz.y1.sub(&obs.y1);
            let r2 = hz.y2.sub(&obs.y2);
            let split = r1.dot(&r1) + r2.dot(&r2);
            assert_relative_eq!(stacked, split, max_relative = 1e-12);
        }
    }

    #[test]
    fn solve_rejects_mismatched_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let (obs, _, graph, _) = toy_instance(8, &mut rng);
        let kernel = gaussian_kernel(3, 0.65).unwrap();
        let other_model = DegradationModel::standard(kernel, 16, 16).unwrap();
        assert!(solve_tisr(&obs, &other_model, &graph, &SolverConfig::default()).is_err());
    }
}
