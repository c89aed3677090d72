//! Flat key=value run configuration.
//!
//! Every command reads the same documented key set from an optional file
//! plus repeatable --set overrides; unknown keys are rejected with the
//! offending line, and each command echoes the resolved configuration to
//! `run.meta` next to its outputs so reruns are diffable.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,

    // protocol / simulation
    pub protocol: String, // "ideal" | "nonideal"
    pub shift_n: u32,
    pub tile: usize,
    pub sources: Vec<String>,
    pub synthetic: usize,

    // degradation model
    pub kernel_size: usize,
    pub kernel_variance: f64,

    // self-similarity graph
    pub patch_size: usize,
    pub patch_stride: usize,
    pub knn: usize,
    pub search_radius: usize,
    pub full_search_max: usize,
    pub graph_eps: f64,

    // solver
    pub lambda: f64,
    pub c: f64,
    pub admm_iters: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub primal_tol: f64,
    pub log_csv: bool,
    pub dump_graph: bool,
    pub oracle_check: bool,
    pub oracle_obj_tol: f64,
    pub oracle_rel_tol: f64,

    // baselines
    pub method: String, // "bicubic" | "ibp"
    pub ibp_iters: usize,
    pub ibp_step: f64,

    // registration
    pub upsample: usize,
    pub with_shift: bool,

    // benchmark
    pub scenes: usize,
    pub scene_size: usize,

    // io
    pub y1: String,
    pub y2: String,
    pub output: String,
    pub manifest: String,
    pub recon_dir: String,
    pub input_a: String,
    pub input_b: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("."),
            protocol: "ideal".into(),
            shift_n: 5,
            tile: 512,
            sources: Vec::new(),
            synthetic: 0,
            kernel_size: 7,
            kernel_variance: 0.65,
            patch_size: 8,
            patch_stride: 4,
            knn: 3,
            search_radius: 10,
            full_search_max: 64,
            graph_eps: 1e-6,
            lambda: 0.1,
            c: 2.0,
            admm_iters: 30,
            cg_tol: 1e-8,
            cg_max_iter: 500,
            primal_tol: 1e-6,
            log_csv: false,
            dump_graph: false,
            oracle_check: false,
            oracle_obj_tol: 1e-6,
            oracle_rel_tol: 1e-4,
            method: "ibp".into(),
            ibp_iters: 50,
            ibp_step: 0.5,
            upsample: 100,
            with_shift: false,
            scenes: 10,
            scene_size: 320,
            y1: String::new(),
            y2: String::new(),
            output: String::new(),
            manifest: String::new(),
            recon_dir: String::new(),
            input_a: String::new(),
            input_b: String::new(),
        }
    }
}

impl RunConfig {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').with_context(|| {
                    format!("{}:{}: expected key=value, got {raw:?}", path.display(), lineno + 1)
                })?;
                cfg.assign(key.trim(), value.trim()).with_context(|| {
                    format!("{}:{}", path.display(), lineno + 1)
                })?;
            }
        }
        for (idx, item) in overrides.iter().enumerate() {
            let (key, value) = item
                .split_once('=')
                .with_context(|| format!("--set #{}: expected KEY=VALUE, got {item:?}", idx + 1))?;
            cfg.assign(key.trim(), value.trim())
                .with_context(|| format!("--set {item:?}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn assign(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("key {key}: cannot parse {value:?}: {e}"))
        }
        fn parse_bool(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                other => bail!("key {key}: expected true/false, got {other:?}"),
            }
        }

        match key {
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "protocol" => match value {
                "ideal" | "nonideal" => self.protocol = value.into(),
                other => bail!("key protocol: expected ideal|nonideal, got {other:?}"),
            },
            "shift_n" => self.shift_n = parse(key, value)?,
            "tile" => self.tile = parse(key, value)?,
            "sources" => {
                self.sources = value
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim().to_string())
                    .collect();
                if self.sources.iter().any(|s| s.contains('\n')) {
                    bail!("key sources: paths must not contain newlines");
                }
            }
            "synthetic" => self.synthetic = parse(key, value)?,
            "kernel_size" => self.kernel_size = parse(key, value)?,
            "kernel_variance" => self.kernel_variance = parse(key, value)?,
            "patch_size" => self.patch_size = parse(key, value)?,
            "patch_stride" => self.patch_stride = parse(key, value)?,
            "knn" => self.knn = parse(key, value)?,
            "search_radius" => self.search_radius = parse(key, value)?,
            "full_search_max" => self.full_search_max = parse(key, value)?,
            "graph_eps" => self.graph_eps = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "admm_iters" => self.admm_iters = parse(key, value)?,
            "cg_tol" => self.cg_tol = parse(key, value)?,
            "cg_max_iter" => self.cg_max_iter = parse(key, value)?,
            "primal_tol" => self.primal_tol = parse(key, value)?,
            "log_csv" => self.log_csv = parse_bool(key, value)?,
            "dump_graph" => self.dump_graph = parse_bool(key, value)?,
            "oracle_check" => self.oracle_check = parse_bool(key, value)?,
            "oracle_obj_tol" => self.oracle_obj_tol = parse(key, value)?,
            "oracle_rel_tol" => self.oracle_rel_tol = parse(key, value)?,
            "method" => match value {
                "bicubic" | "ibp" => self.method = value.into(),
                other => bail!("key method: expected bicubic|ibp, got {other:?}"),
            },
            "ibp_iters" => self.ibp_iters = parse(key, value)?,
            "ibp_step" => self.ibp_step = parse(key, value)?,
            "upsample" => self.upsample = parse(key, value)?,
            "with_shift" => self.with_shift = parse_bool(key, value)?,
            "scenes" => self.scenes = parse(key, value)?,
            "scene_size" => self.scene_size = parse(key, value)?,
            "y1" => self.y1 = value.into(),
            "y2" => self.y2 = value.into(),
            "output" => self.output = value.into(),
            "manifest" => self.manifest = value.into(),
            "recon_dir" => self.recon_dir = value.into(),
            "a" => self.input_a = value.into(),
            "b" => self.input_b = value.into(),
            other => bail!("unknown key {other:?}"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.kernel_size % 2 == 0 {
            bail!("kernel_size must be odd, got {}", self.kernel_size);
        }
        if !(self.kernel_variance > 0.0) {
            bail!("kernel_variance must be positive");
        }
        if self.patch_size < 4 || self.patch_size % 2 != 0 {
            bail!("patch_size must be an even HR size >= 4, got {}", self.patch_size);
        }
        if self.patch_stride < 2 || self.patch_stride % 2 != 0 {
            bail!("patch_stride must be an even HR stride >= 2, got {}", self.patch_stride);
        }
        if self.knn == 0 {
            bail!("knn must be >= 1");
        }
        if self.shift_n > 10 {
            bail!("shift_n must be in 0..=10, got {}", self.shift_n);
        }
        Ok(())
    }

    /// Resolved configuration echo, one sorted key=value per line.
    pub fn meta(&self, command: &str) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("a", self.input_a.clone()),
            ("admm_iters", self.admm_iters.to_string()),
            ("b", self.input_b.clone()),
            ("c", self.c.to_string()),
            ("cg_max_iter", self.cg_max_iter.to_string()),
            ("cg_tol", self.cg_tol.to_string()),
            ("command", command.to_string()),
            ("dump_graph", self.dump_graph.to_string()),
            ("full_search_max", self.full_search_max.to_string()),
            ("graph_eps", self.graph_eps.to_string()),
            ("ibp_iters", self.ibp_iters.to_string()),
            ("ibp_step", self.ibp_step.to_string()),
            ("kernel_size", self.kernel_size.to_string()),
            ("kernel_variance", self.kernel_variance.to_string()),
            ("knn", self.knn.to_string()),
            ("lambda", self.lambda.to_string()),
            ("log_csv", self.log_csv.to_string()),
            ("manifest", self.manifest.clone()),
            ("method", self.method.clone()),
            ("oracle_check", self.oracle_check.to_string()),
            ("oracle_obj_tol", self.oracle_obj_tol.to_string()),
            ("oracle_rel_tol", self.oracle_rel_tol.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("output", self.output.clone()),
            ("patch_size", self.patch_size.to_string()),
            ("patch_stride", self.patch_stride.to_string()),
            ("primal_tol", self.primal_tol.to_string()),
            ("protocol", self.protocol.clone()),
            ("recon_dir", self.recon_dir.clone()),
            ("scene_size", self.scene_size.to_string()),
            ("scenes", self.scenes.to_string()),
            ("search_radius", self.search_radius.to_string()),
            ("seed", self.seed.to_string()),
            ("shift_n", self.shift_n.to_string()),
            ("sources", self.sources.join(",")),
            ("synthetic", self.synthetic.to_string()),
            ("tile", self.tile.to_string()),
            ("upsample", self.upsample.to_string()),
            ("with_shift", self.with_shift.to_string()),
            ("y1", self.y1.clone()),
            ("y2", self.y2.clone()),
        ];
        pairs.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (key, value) in pairs {
            writeln!(out, "{key}={value}").unwrap();
        }
        out
    }

    /// Write the `run.meta` echo into the output directory.
    pub fn write_meta(&self, command: &str) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join("run.meta");
        std::fs::write(&path, self.meta(command))
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    /// Join a (possibly relative) output file name onto out_dir.
    pub fn out_path(&self, name: &str) -> PathBuf {
        let p = Path::new(name);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }
}
