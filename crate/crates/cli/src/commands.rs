//! Subcommand implementations.
//!
//! All artifacts are deterministic functions of the resolved configuration:
//! randomness only enters through the `seed` key (synthetic scenes), floats
//! are formatted with fixed precision, and row order follows input order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use tisr_core::baselines::{bicubic_x2, ibp_reconstruct};
use tisr_core::degradation::{gaussian_kernel, DegradationModel, StackedObservation};
use tisr_core::image::Image;
use tisr_core::metrics::{estimate_shift, psnr, ssim};
use tisr_core::oracle::dense_tisr_minimizer;
use tisr_core::pgm;
use tisr_core::selfsim::{build_graph, PatchGrid, SelfSimGraph};
use tisr_core::simgen::{make_dataset, synthetic_scene, Protocol, TwinPair};
use tisr_core::solver::{objective, solve_tisr, SolverConfig, SolverState};

use crate::config::RunConfig;

fn fmt6(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn read_pgm(path: &str) -> Result<Image> {
    pgm::read_image(path).with_context(|| format!("reading {path}"))
}

fn write_pgm(img: &Image, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    pgm::write_image(img, path).with_context(|| format!("writing {}", path.display()))
}

fn solver_config(cfg: &RunConfig) -> SolverConfig {
    SolverConfig {
        lambda: cfg.lambda,
        c: cfg.c,
        admm_iters: cfg.admm_iters,
        cg_tol: cfg.cg_tol,
        cg_max_iter: cfg.cg_max_iter,
        primal_tol: cfg.primal_tol,
    }
}

fn build_model(cfg: &RunConfig, hr_h: usize, hr_w: usize) -> Result<DegradationModel> {
    let kernel = gaussian_kernel(cfg.kernel_size, cfg.kernel_variance)?;
    Ok(DegradationModel::standard(kernel, hr_h, hr_w)?)
}

/// Graph from the LR reference y1 in the doubled HR geometry; full search
/// below the configured LR size threshold.
fn graph_from_reference(cfg: &RunConfig, y1: &Image, hr_h: usize, hr_w: usize) -> Result<SelfSimGraph> {
    let ref_grid = PatchGrid::new(
        y1.height(),
        y1.width(),
        cfg.patch_size / 2,
        cfg.patch_stride / 2,
    )?;
    let hr_grid = PatchGrid::new(hr_h, hr_w, cfg.patch_size, cfg.patch_stride)?;
    let radius = if y1.height().min(y1.width()) <= cfg.full_search_max {
        None
    } else {
        Some(cfg.search_radius)
    };
    Ok(build_graph(y1, &ref_grid, &hr_grid, cfg.knn, radius, cfg.graph_eps)?)
}

struct SolveOutput {
    z: Image,
    state: SolverState,
    model: DegradationModel,
    graph: SelfSimGraph,
    obs: StackedObservation,
}

fn solve_pair(cfg: &RunConfig, y1: &Image, y2: &Image) -> Result<SolveOutput> {
    if !y1.same_shape(y2) {
        bail!(
            "twin images differ in size: {}x{} vs {}x{}",
            y1.height(),
            y1.width(),
            y2.height(),
            y2.width()
        );
    }
    let (hr_h, hr_w) = (2 * y1.height(), 2 * y1.width());
    let model = build_model(cfg, hr_h, hr_w)?;
    let graph = graph_from_reference(cfg, y1, hr_h, hr_w)?;
    let obs = StackedObservation::new(y1.clone(), y2.clone())?;
    let (z, state) = solve_tisr(&obs, &model, &graph, &solver_config(cfg))?;
    Ok(SolveOutput { z, state, model, graph, obs })
}

fn iteration_log(state: &SolverState) -> String {
    let mut out = String::from("iter,objective,primal_residual,cg_iters\n");
    for (k, rec) in state.history.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            k + 1,
            fmt6(rec.objective),
            fmt6(rec.primal_residual),
            rec.z_cg_iters + rec.x_cg_iters
        )
        .unwrap();
    }
    out
}

fn run_oracle_check(cfg: &RunConfig, solved: &SolveOutput) -> Result<()> {
    let dense = dense_tisr_minimizer(&solved.obs, &solved.model, &solved.graph, cfg.lambda)
        .context("dense oracle (use a toy instance, <= 32x32 HR)")?;
    let obj_admm = objective(&solved.z, &solved.obs, &solved.model, &solved.graph, cfg.lambda)?;
    let obj_dense = objective(&dense, &solved.obs, &solved.model, &solved.graph, cfg.lambda)?;
    let obj_gap = (obj_admm - obj_dense).abs();
    let rel = solved.z.sub(&dense).norm_l2() / dense.norm_l2();
    println!(
        "oracle-check: objective gap {:.3e} (tol {:.1e}), relative deviation {:.3e} (tol {:.1e})",
        obj_gap, cfg.oracle_obj_tol, rel, cfg.oracle_rel_tol
    );
    if obj_gap > cfg.oracle_obj_tol || rel > cfg.oracle_rel_tol {
        bail!(
            "oracle check failed: objective gap {obj_gap:.3e} > {:.1e} or deviation {rel:.3e} > {:.1e}",
            cfg.oracle_obj_tol,
            cfg.oracle_rel_tol
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- simulate

struct ManifestRow {
    id: String,
    y1: PathBuf,
    y2: PathBuf,
    truth: Option<PathBuf>,
}

fn load_simulation_sources(cfg: &RunConfig, size: usize) -> Result<Vec<(String, Image)>> {
    let mut sources = Vec::new();
    for path in &cfg.sources {
        sources.push((path.clone(), read_pgm(path)?));
    }
    for idx in 0..cfg.synthetic {
        let scene = synthetic_scene(size, size, cfg.seed.wrapping_add(idx as u64));
        sources.push((format!("synthetic:{idx}"), scene));
    }
    if sources.is_empty() {
        bail!("no inputs: set sources=... and/or synthetic=N");
    }
    Ok(sources)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let protocol = match cfg.protocol.as_str() {
        "ideal" => Protocol::Ideal,
        "nonideal" => Protocol::Nonideal { shift_n: cfg.shift_n },
        other => bail!("unknown protocol {other:?}"),
    };
    let sources = load_simulation_sources(cfg, cfg.tile)?;
    let entries = make_dataset(&sources, protocol, cfg.tile, cfg.seed)?;
    if entries.is_empty() {
        bail!("no tiles produced: sources smaller than tile={}", cfg.tile);
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut manifest =
        String::from("id,source,protocol,shift_n,true_shift_x,true_shift_y,y1,y2,truth\n");
    for entry in &entries {
        let y1_name = format!("{}_y1.pgm", entry.id);
        let y2_name = format!("{}_y2.pgm", entry.id);
        let truth_name = format!("{}_truth.pgm", entry.id);
        write_pgm(&entry.pair.y1, &cfg.out_dir.join(&y1_name))?;
        write_pgm(&entry.pair.y2, &cfg.out_dir.join(&y2_name))?;
        let truth_field = match &entry.pair.ground_truth {
            Some(truth) => {
                write_pgm(truth, &cfg.out_dir.join(&truth_name))?;
                truth_name.clone()
            }
            None => String::new(),
        };
        let shift_field = match entry.protocol {
            Protocol::Ideal => String::new(),
            Protocol::Nonideal { shift_n } => shift_n.to_string(),
        };
        writeln!(
            manifest,
            "{},{},{},{},{:.2},{:.2},{},{},{}",
            entry.id,
            entry.source,
            entry.protocol.name(),
            shift_field,
            entry.pair.true_shift_x,
            entry.pair.true_shift_y,
            y1_name,
            y2_name,
            truth_field
        )
        .unwrap();
    }
    std::fs::write(cfg.out_dir.join("manifest.csv"), manifest)?;
    cfg.write_meta("simulate")?;
    println!("simulate: {} pair(s) -> {}", entries.len(), cfg.out_dir.display());
    Ok(())
}

fn parse_manifest(path: &str) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let base = Path::new(path).parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut lines = text.lines();
    let header = lines.next().context("empty manifest")?;
    if header != "id,source,protocol,shift_n,true_shift_x,true_shift_y,y1,y2,truth" {
        bail!("unexpected manifest header: {header:?}");
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            bail!("{path}:{}: expected 9 fields, got {}", lineno + 2, fields.len());
        }
        rows.push(ManifestRow {
            id: fields[0].to_string(),
            y1: base.join(fields[6]),
            y2: base.join(fields[7]),
            truth: if fields[8].is_empty() { None } else { Some(base.join(fields[8])) },
        });
    }
    Ok(rows)
}

// ------------------------------------------------------------------- solve

pub fn cmd_solve(cfg: &RunConfig) -> Result<()> {
    println!(
        "solve: lambda={} c={} knn={} patch={} stride={} admm_iters={}",
        cfg.lambda, cfg.c, cfg.knn, cfg.patch_size, cfg.patch_stride, cfg.admm_iters
    );

    if !cfg.manifest.is_empty() {
        let rows = parse_manifest(&cfg.manifest)?;
        std::fs::create_dir_all(&cfg.out_dir)?;
        for row in &rows {
            let y1 = pgm::read_image(&row.y1)?;
            let y2 = pgm::read_image(&row.y2)?;
            let solved = solve_pair(cfg, &y1, &y2)?;
            if cfg.oracle_check {
                run_oracle_check(cfg, &solved)?;
            }
            write_pgm(&solved.z, &cfg.out_dir.join(format!("{}_solver.pgm", row.id)))?;
            if cfg.log_csv {
                std::fs::write(
                    cfg.out_dir.join(format!("{}_iterations.csv", row.id)),
                    iteration_log(&solved.state),
                )?;
            }
            if cfg.dump_graph {
                std::fs::write(
                    cfg.out_dir.join(format!("{}_graph.txt", row.id)),
                    solved.graph.dump(),
                )?;
            }
        }
        cfg.write_meta("solve")?;
        println!("solve: {} reconstruction(s) -> {}", rows.len(), cfg.out_dir.display());
        return Ok(());
    }

    if cfg.y1.is_empty() || cfg.y2.is_empty() {
        bail!("solve needs y1=... and y2=... (or manifest=...)");
    }
    let y1 = read_pgm(&cfg.y1)?;
    let y2 = read_pgm(&cfg.y2)?;
    let solved = solve_pair(cfg, &y1, &y2)?;
    if cfg.oracle_check {
        run_oracle_check(cfg, &solved)?;
    }
    let output = if cfg.output.is_empty() { "solution.pgm" } else { cfg.output.as_str() };
    let out_path = cfg.out_path(output);
    write_pgm(&solved.z, &out_path)?;
    if cfg.log_csv {
        let log_path = out_path.with_extension("iterations.csv");
        std::fs::write(&log_path, iteration_log(&solved.state))?;
    }
    if cfg.dump_graph {
        std::fs::write(out_path.with_extension("graph.txt"), solved.graph.dump())?;
    }
    cfg.write_meta("solve")?;
    let last = solved.state.history.last().expect("at least one iteration");
    println!(
        "solve: {} iterations, objective {}, primal residual {} -> {}",
        solved.state.iter,
        fmt6(last.objective),
        fmt6(last.primal_residual),
        out_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- baseline

fn baseline_reconstruct(cfg: &RunConfig, y1: &Image, y2: &Image) -> Result<(Image, Option<Vec<f64>>, bool)> {
    match cfg.method.as_str() {
        "bicubic" => Ok((bicubic_x2(y1), None, false)),
        "ibp" => {
            let (hr_h, hr_w) = (2 * y1.height(), 2 * y1.width());
            let model = build_model(cfg, hr_h, hr_w)?;
            let pair = TwinPair::new(y1.clone(), y2.clone(), 0.5, 0.5, None, model.clone())?;
            let result = ibp_reconstruct(&pair, &model, cfg.ibp_iters, cfg.ibp_step)?;
            if result.diverged {
                eprintln!("baseline: warning: ibp residual grew 3x in a row; returning best iterate");
            }
            Ok((result.image, Some(result.residual_history), result.diverged))
        }
        other => bail!("baseline method must be bicubic or ibp, got {other:?}"),
    }
}

pub fn cmd_baseline(cfg: &RunConfig) -> Result<()> {
    if !cfg.manifest.is_empty() {
        let rows = parse_manifest(&cfg.manifest)?;
        std::fs::create_dir_all(&cfg.out_dir)?;
        for row in &rows {
            let y1 = pgm::read_image(&row.y1)?;
            let y2 = pgm::read_image(&row.y2)?;
            let (image, history, _) = baseline_reconstruct(cfg, &y1, &y2)?;
            write_pgm(&image, &cfg.out_dir.join(format!("{}_{}.pgm", row.id, cfg.method)))?;
            if cfg.log_csv {
                if let Some(history) = history {
                    let mut log = String::from("iter,data_residual\n");
                    for (k, r) in history.iter().enumerate() {
                        writeln!(log, "{k},{}", fmt6(*r)).unwrap();
                    }
                    std::fs::write(
                        cfg.out_dir.join(format!("{}_{}_residuals.csv", row.id, cfg.method)),
                        log,
                    )?;
                }
            }
        }
        cfg.write_meta("baseline")?;
        println!(
            "baseline: {} {} reconstruction(s) -> {}",
            rows.len(),
            cfg.method,
            cfg.out_dir.display()
        );
        return Ok(());
    }

    if cfg.y1.is_empty() {
        bail!("baseline needs y1=... (and y2=... for ibp), or manifest=...");
    }
    let y1 = read_pgm(&cfg.y1)?;
    let y2 = if cfg.y2.is_empty() { y1.clone() } else { read_pgm(&cfg.y2)? };
    if cfg.method == "ibp" && cfg.y2.is_empty() {
        bail!("ibp needs the twin image: set y2=...");
    }
    let (image, history, _) = baseline_reconstruct(cfg, &y1, &y2)?;
    let output = if cfg.output.is_empty() {
        format!("{}.pgm", cfg.method)
    } else {
        cfg.output.clone()
    };
    let out_path = cfg.out_path(&output);
    write_pgm(&image, &out_path)?;
    if cfg.log_csv {
        if let Some(history) = history {
            let mut log = String::from("iter,data_residual\n");
            for (k, r) in history.iter().enumerate() {
                writeln!(log, "{k},{}", fmt6(*r)).unwrap();
            }
            std::fs::write(out_path.with_extension("residuals.csv"), log)?;
        }
    }
    cfg.write_meta("baseline")?;
    println!("baseline: {} -> {}", cfg.method, out_path.display());
    Ok(())
}

// ---------------------------------------------------------------- evaluate

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    if cfg.manifest.is_empty() {
        bail!("evaluate needs manifest=...");
    }
    let rows = parse_manifest(&cfg.manifest)?;
    let recon_dir = if cfg.recon_dir.is_empty() {
        Path::new(&cfg.manifest).parent().unwrap_or(Path::new(".")).to_path_buf()
    } else {
        PathBuf::from(&cfg.recon_dir)
    };
    let method = if cfg.method.is_empty() { "solver".to_string() } else { cfg.method.clone() };

    let mut csv = String::from("id,psnr_db,ssim,est_dx,est_dy\n");
    let mut psnr_values = Vec::new();
    let mut ssim_values = Vec::new();
    let mut dx_values = Vec::new();
    let mut dy_values = Vec::new();
    for row in &rows {
        let truth_path = row
            .truth
            .as_ref()
            .with_context(|| format!("manifest row {} has no ground truth", row.id))?;
        let truth = pgm::read_image(truth_path)?;
        let recon_path = recon_dir.join(format!("{}_{}.pgm", row.id, method));
        let recon = pgm::read_image(&recon_path)
            .with_context(|| format!("reading reconstruction {}", recon_path.display()))?;
        let p = psnr(&recon, &truth)?;
        let s = ssim(&recon, &truth)?;
        if p.is_finite() {
            psnr_values.push(p);
        }
        ssim_values.push(s);
        let (dx_field, dy_field) = if cfg.with_shift {
            let y1 = pgm::read_image(&row.y1)?;
            let y2 = pgm::read_image(&row.y2)?;
            let est = estimate_shift(&y1, &y2, cfg.upsample)?;
            dx_values.push(est.dx);
            dy_values.push(est.dy);
            (fmt6(est.dx), fmt6(est.dy))
        } else {
            (String::new(), String::new())
        };
        writeln!(csv, "{},{},{},{},{}", row.id, fmt6(p), fmt6(s), dx_field, dy_field).unwrap();
    }

    // Mean row; PSNR mean excludes infinite (identical-image) rows.
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let mean_psnr = if psnr_values.is_empty() { f64::INFINITY } else { mean(&psnr_values) };
    let (mean_dx, mean_dy) = if cfg.with_shift {
        (fmt6(mean(&dx_values)), fmt6(mean(&dy_values)))
    } else {
        (String::new(), String::new())
    };
    writeln!(
        csv,
        "mean,{},{},{},{}",
        fmt6(mean_psnr),
        fmt6(mean(&ssim_values)),
        mean_dx,
        mean_dy
    )
    .unwrap();

    let output = if cfg.output.is_empty() {
        format!("metrics_{method}.csv")
    } else {
        cfg.output.clone()
    };
    let out_path = cfg.out_path(&output);
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(&out_path, csv)?;
    cfg.write_meta("evaluate")?;
    println!(
        "evaluate: {} row(s), mean psnr {} -> {}",
        rows.len(),
        fmt6(mean_psnr),
        out_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- register

pub fn cmd_register(cfg: &RunConfig) -> Result<()> {
    if cfg.input_a.is_empty() || cfg.input_b.is_empty() {
        bail!("register needs a=... and b=...");
    }
    let a = read_pgm(&cfg.input_a)?;
    let b = read_pgm(&cfg.input_b)?;
    let est = estimate_shift(&a, &b, cfg.upsample)?;
    let output = if cfg.output.is_empty() { "register.csv" } else { cfg.output.as_str() };
    let out_path = cfg.out_path(output);
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(
        &out_path,
        format!(
            "a,b,dx,dy,confidence\n{},{},{},{},{}\n",
            cfg.input_a,
            cfg.input_b,
            fmt6(est.dx),
            fmt6(est.dy),
            fmt6(est.confidence)
        ),
    )?;
    cfg.write_meta("register")?;
    println!("register: dx={} dy={} confidence={}", fmt6(est.dx), fmt6(est.dy), fmt6(est.confidence));
    Ok(())
}

// --------------------------------------------------------------- benchmark

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<()> {
    if cfg.scene_size % 10 != 0 {
        bail!("scene_size must be divisible by 10, got {}", cfg.scene_size);
    }
    let mut scenes = Vec::new();
    for path in &cfg.sources {
        scenes.push(read_pgm(path)?);
    }
    for idx in 0..cfg.scenes {
        scenes.push(synthetic_scene(cfg.scene_size, cfg.scene_size, cfg.seed.wrapping_add(idx as u64)));
    }
    if scenes.is_empty() {
        bail!("no scenes: set scenes=N and/or sources=...");
    }

    const METHODS: [&str; 3] = ["bicubic", "ibp", "solver"];
    // psnr/ssim sums per method per shift level.
    let mut sums = vec![[0.0f64; 11]; METHODS.len() * 2];

    for shift_n in 0..=10u32 {
        eprintln!("benchmark: shift 0.{shift_n} ({} scene(s))", scenes.len());
        for scene in &scenes {
            let pair = tisr_core::simgen::simulate_nonideal(scene, shift_n)?;
            let truth = pair.ground_truth.as_ref().expect("nonideal pairs carry truth");
            for (m_idx, method) in METHODS.iter().enumerate() {
                let recon = match *method {
                    "bicubic" => bicubic_x2(&pair.y1),
                    "ibp" => ibp_reconstruct(&pair, &pair.model, cfg.ibp_iters, cfg.ibp_step)?.image,
                    "solver" => solve_pair(cfg, &pair.y1, &pair.y2)?.z,
                    _ => unreachable!(),
                };
                sums[2 * m_idx][shift_n as usize] += psnr(&recon, truth)?;
                sums[2 * m_idx + 1][shift_n as usize] += ssim(&recon, truth)?;
            }
        }
    }

    let mut csv = String::from("method,metric");
    for shift_n in 0..=10 {
        write!(csv, ",shift_{:.1}", 0.1 * shift_n as f64).unwrap();
    }
    csv.push('\n');
    let count = scenes.len() as f64;
    for (m_idx, method) in METHODS.iter().enumerate() {
        for (metric_idx, metric) in ["psnr", "ssim"].iter().enumerate() {
            write!(csv, "{method},{metric}").unwrap();
            for shift_n in 0..=10 {
                write!(csv, ",{}", fmt6(sums[2 * m_idx + metric_idx][shift_n] / count)).unwrap();
            }
            csv.push('\n');
        }
    }

    let output = if cfg.output.is_empty() { "benchmark.csv" } else { cfg.output.as_str() };
    let out_path = cfg.out_path(output);
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(&out_path, csv)?;
    cfg.write_meta("benchmark")?;
    println!("benchmark: {} scene(s) x 11 shifts -> {}", scenes.len(), out_path.display());
    Ok(())
}
