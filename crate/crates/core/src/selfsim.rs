//! Convex self-similarity prior on a weighted patch graph.
//!
//! Patches live on a stride lattice; each node is connected to its k most
//! similar patches, weighted by the inverse Euclidean patch distance
//! (clamped below by eps). The prior is the quadratic
//! f(z) = 1/2 sum alpha_ij |P_i z - P_j z|^2, whose gradient is a
//! graph-Laplacian-like PSD operator applied matrix-free, and whose
//! proximal mapping is the SPD solve (I + weight L) z = v done by CG.
//!
//! The graph is built once from the low-resolution reference y1 and
//! indexed in the doubled HR geometry; it stays frozen during ADMM.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::solver::cg_solve;

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_KNN: usize = 3;

/// Lattice of q x q patch origins with a fixed stride, fully inside the
/// image. Patch index k enumerates origins row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    image_h: usize,
    image_w: usize,
    patch: usize,
    stride: usize,
}

impl PatchGrid {
    pub fn new(image_h: usize, image_w: usize, patch: usize, stride: usize) -> Result<Self> {
        if patch < 2 {
            return Err(Error::InvalidParameter(format!("patch size must be >= 2, got {patch}")));
        }
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be positive".into()));
        }
        if patch > image_h || patch > image_w {
            return Err(Error::InvalidDimensions(format!(
                "patch {patch} exceeds image {image_h}x{image_w}"
            )));
        }
        Ok(Self { image_h, image_w, patch, stride })
    }

    pub fn image_height(&self) -> usize {
        self.image_h
    }

    pub fn image_width(&self) -> usize {
        self.image_w
    }

    pub fn patch_size(&self) -> usize {
        self.patch
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Patch rows on the lattice.
    pub fn rows(&self) -> usize {
        (self.image_h - self.patch) / self.stride + 1
    }

    /// Patch columns on the lattice.
    pub fn cols(&self) -> usize {
        (self.image_w - self.patch) / self.stride + 1
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Top-left corner of patch k.
    pub fn origin(&self, k: usize) -> (usize, usize) {
        let pr = k / self.cols();
        let pc = k % self.cols();
        (pr * self.stride, pc * self.stride)
    }

    /// Lattice coordinates of patch k.
    pub fn lattice(&self, k: usize) -> (usize, usize) {
        (k / self.cols(), k % self.cols())
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.height() != self.image_h || img.width() != self.image_w {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{} does not match grid geometry {}x{}",
                img.height(),
                img.width(),
                self.image_h,
                self.image_w
            )));
        }
        Ok(())
    }
}

/// One directed similarity edge i -> j with weight alpha.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimEdge {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
}

/// Weighted patch graph in HR geometry.
#[derive(Debug, Clone)]
pub struct SelfSimGraph {
    grid: PatchGrid,
    edges: Vec<SelfSimEdge>,
    neighbors_per_node: usize,
}

impl SelfSimGraph {
    pub fn new(grid: PatchGrid, edges: Vec<SelfSimEdge>, neighbors_per_node: usize) -> Result<Self> {
        let nodes = grid.len();
        for e in &edges {
            if e.i == e.j {
                return Err(Error::InvalidParameter(format!("self edge at node {}", e.i)));
            }
            if e.i >= nodes || e.j >= nodes {
                return Err(Error::OutOfBounds(format!(
                    "edge ({}, {}) outside {} nodes",
                    e.i, e.j, nodes
                )));
            }
            if !e.alpha.is_finite() || e.alpha < 0.0 {
                return Err(Error::InvalidParameter(format!("bad edge weight {}", e.alpha)));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &edges {
            if !seen.insert((e.i, e.j)) {
                return Err(Error::InvalidParameter(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
        }
        Ok(Self { grid, edges, neighbors_per_node })
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn edges(&self) -> &[SelfSimEdge] {
        &self.edges
    }

    pub fn neighbors_per_node(&self) -> usize {
        self.neighbors_per_node
    }

    /// Debug dump, one "i j alpha" line per edge, ordered by (i, j).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!("{} {} {}\n", e.i, e.j, e.alpha));
        }
        out
    }
}

/// Row-major flattening of the q x q window of patch k.
pub fn extract_patch(img: &Image, grid: &PatchGrid, k: usize) -> Result<Vec<f64>> {
    grid.check_image(img)?;
    if k >= grid.len() {
        return Err(Error::OutOfBounds(format!("patch index {k} out of {}", grid.len())));
    }
    let (top, left) = grid.origin(k);
    let q = grid.patch_size();
    let mut out = Vec::with_capacity(q * q);
    for r in 0..q {
        for c in 0..q {
            out.push(img.at(top + r, left + c));
        }
    }
    Ok(out)
}

/// Adjoint of patch extraction: accumulate `scale * values` into the patch
/// footprint of `buffer` (a row-major image buffer of the grid geometry).
pub fn scatter_patch_add(
    buffer: &mut [f64],
    grid: &PatchGrid,
    k: usize,
    values: &[f64],
    scale: f64,
) -> Result<()> {
    if buffer.len() != grid.image_height() * grid.image_width() {
        return Err(Error::DimensionMismatch("buffer does not match grid geometry".into()));
    }
    if k >= grid.len() {
        return Err(Error::OutOfBounds(format!("patch index {k} out of {}", grid.len())));
    }
    let q = grid.patch_size();
    if values.len() != q * q {
        return Err(Error::DimensionMismatch(format!(
            "patch vector length {} does not match q^2 = {}",
            values.len(),
            q * q
        )));
    }
    let (top, left) = grid.origin(k);
    let w = grid.image_width();
    for r in 0..q {
        for c in 0..q {
            buffer[(top + r) * w + (left + c)] += scale * values[r * q + c];
        }
    }
    Ok(())
}

/// Inverse-distance similarity weight 1 / max(|pa - pb|_2, eps).
pub fn edge_weight(pa: &[f64], pb: &[f64], eps: f64) -> Result<f64> {
    if pa.len() != pb.len() {
        return Err(Error::DimensionMismatch(format!(
            "patch vectors of length {} vs {}",
            pa.len(),
            pb.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let dist = pa
        .iter()
        .zip(pb)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(1.0 / dist.max(eps))
}

/// Build the k-NN similarity graph from the LR reference image.
///
/// `ref_grid` enumerates reference patches of `reference`; `hr_grid` is the
/// corresponding HR geometry with the same lattice shape (for the canonical
/// scale-2 correspondence: origin, patch, and stride doubled). Neighbors are
/// searched within `search_radius` lattice steps per axis (None = full
/// search), ranked by descending weight with lower index breaking ties.
pub fn build_graph(
    reference: &Image,
    ref_grid: &PatchGrid,
    hr_grid: &PatchGrid,
    k: usize,
    search_radius: Option<usize>,
    eps: f64,
) -> Result<SelfSimGraph> {
    ref_grid.check_image(reference)?;
    if ref_grid.rows() != hr_grid.rows() || ref_grid.cols() != hr_grid.cols() {
        return Err(Error::GridMismatch(format!(
            "reference lattice {}x{} vs hr lattice {}x{}",
            ref_grid.rows(),
            ref_grid.cols(),
            hr_grid.rows(),
            hr_grid.cols()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }

    let nodes = ref_grid.len();
    let patches: Vec<Vec<f64>> = (0..nodes)
        .map(|i| extract_patch(reference, ref_grid, i))
        .collect::<Result<_>>()?;

    let (rows, cols) = (ref_grid.rows(), ref_grid.cols());
    let mut edges = Vec::with_capacity(nodes * k);
    let mut candidates: Vec<(f64, usize)> = Vec::new();

    for i in 0..nodes {
        let (pr, pc) = ref_grid.lattice(i);
        let (r_lo, r_hi, c_lo, c_hi) = match search_radius {
            None => (0, rows - 1, 0, cols - 1),
            Some(rad) => (
                pr.saturating_sub(rad),
                (pr + rad).min(rows - 1),
                pc.saturating_sub(rad),
                (pc + rad).min(cols - 1),
            ),
        };
        candidates.clear();
        for jr in r_lo..=r_hi {
            for jc in c_lo..=c_hi {
                let j = jr * cols + jc;
                if j == i {
                    continue;
                }
                let alpha = edge_weight(&patches[i], &patches[j], eps)?;
                candidates.push((alpha, j));
            }
        }
        // Descending weight, then ascending index for determinism.
        candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for &(alpha, j) in candidates.iter().take(k) {
            edges.push(SelfSimEdge { i, j, alpha });
        }
    }

    edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    SelfSimGraph::new(hr_grid.clone(), edges, k)
}

/// The prior value f(z) = 1/2 sum alpha_ij |P_i z - P_j z|^2.
pub fn regularizer_value(z: &Image, graph: &SelfSimGraph) -> Result<f64> {
    graph.grid().check_image(z)?;
    let mut total = 0.0;
    for e in graph.edges() {
        let pi = extract_patch(z, graph.grid(), e.i)?;
        let pj = extract_patch(z, graph.grid(), e.j)?;
        let sq: f64 = pi.iter().zip(&pj).map(|(a, b)| (a - b) * (a - b)).sum();
        total += e.alpha * sq;
    }
    Ok(0.5 * total)
}

/// Gradient of the prior: L z with
/// L = sum alpha_ij (P_i - P_j)^T (P_i - P_j), applied as gather/scatter
/// over edges in deterministic serial order.
pub fn apply_l(z: &Image, graph: &SelfSimGraph) -> Result<Image> {
    graph.grid().check_image(z)?;
    let mut out = vec![0.0; z.len()];
    for e in graph.edges() {
        let pi = extract_patch(z, graph.grid(), e.i)?;
        let pj = extract_patch(z, graph.grid(), e.j)?;
        let diff: Vec<f64> = pi.iter().zip(&pj).map(|(a, b)| a - b).collect();
        scatter_patch_add(&mut out, graph.grid(), e.i, &diff, e.alpha)?;
        scatter_patch_add(&mut out, graph.grid(), e.j, &diff, -e.alpha)?;
    }
    Ok(Image::from_raw(z.height(), z.width(), out))
}

/// Exact proximal mapping of `weight * f`: the unique minimizer of
/// weight f(z) + 1/2 |z - v|^2, i.e. the CG solution of
/// (I + weight L) z = v to relative residual `tol`.
pub fn prox_f(
    v: &Image,
    graph: &SelfSimGraph,
    weight: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Image> {
    prox_f_counted(v, graph, weight, tol, max_iter).map(|(z, _)| z)
}

/// Like `prox_f` but also reports the CG iteration count.
pub fn prox_f_counted(
    v: &Image,
    graph: &SelfSimGraph,
    weight: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Image, usize)> {
    graph.grid().check_image(v)?;
    if !(weight >= 0.0) {
        return Err(Error::InvalidParameter(format!("prox weight must be >= 0, got {weight}")));
    }
    if weight == 0.0 {
        return Ok((v.clone(), 0));
    }
    let apply = |z: &Image| z.add(&apply_l(z, graph).expect("grid checked").scaled(weight));
    let solution = cg_solve(apply, v, v, tol, max_iter)?;
    if !solution.converged {
        return Err(Error::CgNoConvergence {
            iterations: solution.iterations,
            residual: solution.residual,
        });
    }
    Ok((solution.x, solution.iterations))
}
