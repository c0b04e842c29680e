//! Non-local total variation on a semi-local patch-similarity graph.
//!
//! Each pixel is linked to the `m_best` most similar pixels of its search
//! window (Gaussian-weighted patch distance) and to its axis-adjacent
//! neighbours. Weights are `exp(-d^2 / h^2)`, the graph is symmetrized by
//! union, and it stays fixed for the whole reconstruction.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Result, WimError};
use crate::image::Image;
use crate::prox::{ProxConfig, ProxOutcome, Regularizer};

/// How the filtering parameter `h` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Filtering {
    /// `h = factor * std(d)` over every patch distance computed on the guide.
    Adaptive { factor: f64 },
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NlWeightParams {
    pub patch_size: usize,
    pub window_size: usize,
    pub m_best: usize,
    /// 0, 4 (axis-adjacent) or 8 (with diagonals).
    pub n_nearest: usize,
    /// Standard deviation of the Gaussian patch kernel, in pixels.
    pub kernel_sigma: f64,
    pub filtering: Filtering,
}

impl Default for NlWeightParams {
    fn default() -> Self {
        Self {
            patch_size: 5,
            window_size: 15,
            m_best: 10,
            n_nearest: 4,
            kernel_sigma: 1.25,
            filtering: Filtering::Adaptive { factor: 0.4 },
        }
    }
}

impl NlWeightParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(WimError::InvalidParameter(m.to_string()));
        if self.patch_size % 2 == 0 || self.window_size % 2 == 0 {
            return bad("patch and window sizes must be odd");
        }
        if self.window_size < 3 {
            return bad("window must be at least 3x3");
        }
        if !matches!(self.n_nearest, 0 | 4 | 8) {
            return bad("n_nearest must be 0, 4 or 8");
        }
        if self.m_best + self.n_nearest == 0 {
            return bad("graph would have no edges");
        }
        if !(self.kernel_sigma > 0.0) {
            return bad("kernel sigma must be positive");
        }
        match self.filtering {
            Filtering::Adaptive { factor } if !(factor > 0.0) => bad("filtering factor must be positive"),
            Filtering::Fixed(h) if !(h > 0.0) => bad("filtering parameter must be positive"),
            _ => Ok(()),
        }
    }

    /// Normalized Gaussian patch kernel, row-major.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.patch_size / 2) as isize;
        let s2 = 2.0 * self.kernel_sigma * self.kernel_sigma;
        let mut k: Vec<f64> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (-((dx * dx + dy * dy) as f64) / s2).exp()))
            .collect();
        let total: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= total);
        k
    }
}

/// Whole-sample symmetric index reflection into `0..n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Per-pixel neighbour choice before weighting and symmetrization:
/// `(neighbour index, squared patch distance)`, ordered by neighbour index.
#[derive(Clone, Debug)]
pub struct NeighborSelection {
    pub width: usize,
    pub height: usize,
    pub per_pixel: Vec<Vec<(usize, f64)>>,
    /// Mean and standard deviation of every distance `d = sqrt(d^2)`
    /// evaluated during the search.
    pub distance_mean: f64,
    pub distance_std: f64,
}

struct PatchKernel {
    offsets: Vec<(isize, isize)>,
    weights: Vec<f64>,
}

fn patch_distances(guide: &Image, params: &NlWeightParams) -> (Vec<f64>, PatchKernel) {
    // Pad once so patch reads need no reflection.
    let r = (params.patch_size / 2) as isize;
    let (w, h) = guide.dims();
    let pw = w + 2 * r as usize;
    let ph = h + 2 * r as usize;
    let mut padded = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = reflect(py as isize - r, h);
        for px in 0..pw {
            let sx = reflect(px as isize - r, w);
            padded[py * pw + px] = guide.get(sx, sy);
        }
    }
    let offsets: Vec<(isize, isize)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
    (
        padded,
        PatchKernel {
            offsets,
            weights: params.kernel(),
        },
    )
}

/// Chooses neighbours for every pixel of `guide`.
pub fn select_neighbors(guide: &Image, params: &NlWeightParams) -> Result<NeighborSelection> {
    params.validate()?;
    let (w, h) = guide.dims();
    if w < params.window_size || h < params.window_size {
        return Err(WimError::InvalidImage(format!(
            "{w}x{h} guide is smaller than the {0}x{0} search window",
            params.window_size
        )));
    }
    let r = (params.patch_size / 2) as isize;
    let half = (params.window_size / 2) as isize;
    let (padded, kernel) = patch_distances(guide, params);
    let pw = w + 2 * r as usize;
    let dist2 = |ax: usize, ay: usize, bx: usize, by: usize| -> f64 {
        let mut acc = 0.0;
        for (&(dx, dy), &k) in kernel.offsets.iter().zip(&kernel.weights) {
            let ia = ((ay as isize + r + dy) as usize) * pw + (ax as isize + r + dx) as usize;
            let ib = ((by as isize + r + dy) as usize) * pw + (bx as isize + r + dx) as usize;
            let d = padded[ia] - padded[ib];
            acc += k * d * d;
        }
        acc
    };
    let adjacent: &[(isize, isize)] = match params.n_nearest {
        4 => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
        8 => &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)],
        _ => &[],
    };

    // Per row: selections plus (count, sum d, sum d^2) for the statistics.
    let rows: Vec<(Vec<Vec<(usize, f64)>>, f64, f64, f64)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut out = Vec::with_capacity(w);
            let (mut cnt, mut s1, mut s2) = (0.0, 0.0, 0.0);
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(params.m_best + 1);
            for x in 0..w {
                best.clear();
                let mut adj: Vec<(usize, f64)> = Vec::with_capacity(adjacent.len());
                let y0 = (y as isize - half).max(0) as usize;
                let y1 = (y as isize + half).min(h as isize - 1) as usize;
                let x0 = (x as isize - half).max(0) as usize;
                let x1 = (x as isize + half).min(w as isize - 1) as usize;
                for cy in y0..=y1 {
                    for cx in x0..=x1 {
                        if (cx, cy) == (x, y) {
                            continue;
                        }
                        let d2 = dist2(x, y, cx, cy);
                        cnt += 1.0;
                        s1 += d2.sqrt();
                        s2 += d2;
                        let idx = cy * w + cx;
                        let (ddx, ddy) = (cx as isize - x as isize, cy as isize - y as isize);
                        if adjacent.contains(&(ddx, ddy)) {
                            adj.push((idx, d2));
                        }
                        if params.m_best == 0 {
                            continue;
                        }
                        // strict comparison keeps the earlier candidate on ties
                        if best.len() < params.m_best || d2 < best[best.len() - 1].0 {
                            let pos = best.partition_point(|&(bd, _)| bd <= d2);
                            best.insert(pos, (d2, idx));
                            best.truncate(params.m_best);
                        }
                    }
                }
                let mut chosen: Vec<(usize, f64)> = best.iter().map(|&(d2, i)| (i, d2)).collect();
                chosen.extend(adj);
                chosen.sort_by_key(|&(i, _)| i);
                chosen.dedup_by_key(|&mut (i, _)| i);
                out.push(chosen);
            }
            (out, cnt, s1, s2)
        })
        .collect();

    let mut per_pixel = Vec::with_capacity(w * h);
    let (mut cnt, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (row, c, a, b) in rows {
        per_pixel.extend(row);
        cnt += c;
        s1 += a;
        s2 += b;
    }
    let mean = s1 / cnt;
    let var = (s2 / cnt - mean * mean).max(0.0);
    Ok(NeighborSelection {
        width: w,
        height: h,
        per_pixel,
        distance_mean: mean,
        distance_std: var.sqrt(),
    })
}

/// Symmetric sparse weight graph in compressed row form.
#[derive(Clone, Debug, PartialEq)]
pub struct NlWeightGraph {
    width: usize,
    height: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    sqrt_weights: Vec<f64>,
    /// For edge `x -> y`, the index of edge `y -> x`.
    reverse: Vec<usize>,
    filtering_h: f64,
}

impl NlWeightGraph {
    /// Builds a graph from directed edges `(x, y, w)`. Every edge is
    /// mirrored; duplicates keep the larger weight.
    pub fn from_edges(width: usize, height: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        Self::from_edges_with_h(width, height, edges, f64::NAN)
    }

    fn from_edges_with_h(
        width: usize,
        height: usize,
        edges: &[(usize, usize, f64)],
        filtering_h: f64,
    ) -> Result<Self> {
        let n = width * height;
        let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(x, y, w) in edges {
            if x >= n || y >= n || x == y {
                return Err(WimError::GraphMismatch(format!("edge {x} -> {y}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(WimError::InvalidParameter(format!("edge weight {w}")));
            }
            lists[x].push((y, w));
            lists[y].push((x, w));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for list in &mut lists {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
            // after sorting, the first entry of each run has the max weight
            list.dedup_by_key(|e| e.0);
            for &(y, w) in list.iter() {
                neighbors.push(y);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        let reverse = (0..n)
            .flat_map(|x| (offsets[x]..offsets[x + 1]).map(move |e| (x, e)))
            .map(|(x, e)| {
                let y = neighbors[e];
                let row = &neighbors[offsets[y]..offsets[y + 1]];
                offsets[y] + row.binary_search(&x).expect("graph is symmetric")
            })
            .collect();
        let sqrt_weights = weights.iter().map(|w: &f64| w.sqrt()).collect();
        Ok(Self {
            width,
            height,
            offsets,
            neighbors,
            weights,
            sqrt_weights,
            reverse,
            filtering_h,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len()
    }

    /// Filtering parameter used for the weights (NaN for hand-built graphs).
    pub fn filtering_h(&self) -> f64 {
        self.filtering_h
    }

    pub fn degree(&self, x: usize) -> usize {
        self.offsets[x + 1] - self.offsets[x]
    }

    /// `(neighbour, weight)` pairs of pixel `x`.
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[x]..self.offsets[x + 1];
        self.neighbors[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn weight(&self, x: usize, y: usize) -> Option<f64> {
        let r = self.offsets[x]..self.offsets[x + 1];
        self.neighbors[r.clone()]
            .binary_search(&y)
            .ok()
            .map(|i| self.weights[r.start + i])
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.dims() != (self.width, self.height) {
            return Err(WimError::GraphMismatch(format!(
                "graph is {}x{}, image is {}x{}",
                self.width,
                self.height,
                img.width(),
                img.height()
            )));
        }
        Ok(())
    }

    fn check_field(&self, field: &NlField) -> Result<()> {
        if field.values.len() != self.num_edges() {
            return Err(WimError::GraphMismatch(format!(
                "field has {} entries for {} edges",
                field.values.len(),
                self.num_edges()
            )));
        }
        Ok(())
    }

    /// `(L f)(x) = 2 sum_y w(x,y) (f(x) - f(y))`, i.e. `-div(grad f)`.
    fn laplacian_into(&self, f: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(x, o)| {
            let mut acc = 0.0;
            for e in self.offsets[x]..self.offsets[x + 1] {
                acc += self.weights[e] * (f[x] - f[self.neighbors[e]]);
            }
            *o = 2.0 * acc;
        });
    }

    fn grad_into(&self, f: &[f64], out: &mut [f64]) {
        for x in 0..self.num_pixels() {
            for e in self.offsets[x]..self.offsets[x + 1] {
                out[e] = (f[self.neighbors[e]] - f[x]) * self.sqrt_weights[e];
            }
        }
    }

    fn div_into(&self, q: &[f64], out: &mut [f64]) {
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for e in self.offsets[x]..self.offsets[x + 1] {
                acc += self.sqrt_weights[e] * (q[e] - q[self.reverse[e]]);
            }
            *o = acc;
        }
    }

    /// Debug dump: one line `x_index y_index weight` per directed edge.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for x in 0..self.num_pixels() {
            for (y, w) in self.neighbors(x) {
                writeln!(out, "{x} {y} {w:e}")?;
            }
        }
        Ok(())
    }
}

/// Builds the frozen weight graph from a guide image.
pub fn build_weights(guide: &Image, params: &NlWeightParams) -> Result<NlWeightGraph> {
    let sel = select_neighbors(guide, params)?;
    let h = match params.filtering {
        Filtering::Adaptive { factor } => factor * sel.distance_std,
        Filtering::Fixed(h) => h,
    };
    let weight = |d2: f64| {
        if d2 == 0.0 {
            1.0
        } else if h > 0.0 {
            (-d2 / (h * h)).exp()
        } else {
            0.0
        }
    };
    let edges: Vec<(usize, usize, f64)> = sel
        .per_pixel
        .iter()
        .enumerate()
        .flat_map(|(x, list)| list.iter().map(move |&(y, d2)| (x, y, weight(d2))))
        .collect();
    NlWeightGraph::from_edges_with_h(sel.width, sel.height, &edges, h)
}

/// Values on the directed edges of a graph, indexed like its edge list.
#[derive(Clone, Debug, PartialEq)]
pub struct NlField {
    pub values: Vec<f64>,
}

impl NlField {
    pub fn zeros(gph: &NlWeightGraph) -> Self {
        Self {
            values: vec![0.0; gph.num_edges()],
        }
    }

    pub fn dot(&self, other: &NlField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// Nonlocal gradient: entry `(x, y)` is `(f(y) - f(x)) sqrt(w(x, y))`.
pub fn nl_grad(img: &Image, gph: &NlWeightGraph) -> Result<NlField> {
    gph.check_image(img)?;
    let mut values = vec![0.0; gph.num_edges()];
    gph.grad_into(img.as_slice(), &mut values);
    Ok(NlField { values })
}

/// Negative adjoint of [`nl_grad`]:
/// `div q (x) = sum_y sqrt(w(x, y)) (q(x, y) - q(y, x))`.
pub fn nl_div(field: &NlField, gph: &NlWeightGraph) -> Result<Image> {
    gph.check_field(field)?;
    let mut out = vec![0.0; gph.num_pixels()];
    gph.div_into(&field.values, &mut out);
    Image::new(gph.width, gph.height, out)
}

fn norm_from_grad(gph: &NlWeightGraph, grad: &[f64]) -> f64 {
    (0..gph.num_pixels())
        .map(|x| {
            grad[gph.offsets[x]..gph.offsets[x + 1]]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// `sum_x sqrt(sum_y (f(y) - f(x))^2 w(x, y))`.
pub fn nltv_norm(img: &Image, gph: &NlWeightGraph) -> Result<f64> {
    let g = nl_grad(img, gph)?;
    Ok(norm_from_grad(gph, &g.values))
}

/// Default ratio between the split-Bregman penalty and the prox weight.
pub const DEFAULT_PENALTY_RATIO: f64 = 10.0;

const CG_REL_TOL: f64 = 1e-6;
const CG_MAX_ITERS: usize = 500;

/// NL-TV proximity operator by split Bregman on `d = grad_w f`.
///
/// The penalty is `penalty_ratio * weight`, so the shrinkage threshold is
/// the constant `1 / penalty_ratio`. Auxiliary and Bregman variables and the
/// last iterate are kept between calls.
#[derive(Clone, Debug)]
pub struct NltvProx<'g> {
    graph: &'g NlWeightGraph,
    pub penalty_ratio: f64,
    state: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl<'g> NltvProx<'g> {
    pub fn new(graph: &'g NlWeightGraph) -> Self {
        Self {
            graph,
            penalty_ratio: DEFAULT_PENALTY_RATIO,
            state: None,
        }
    }

    pub fn graph(&self) -> &NlWeightGraph {
        self.graph
    }

    pub fn solve(&mut self, g: &Image, weight: f64, cfg: &ProxConfig) -> Result<ProxOutcome> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(WimError::InvalidParameter(format!(
                "prox weight must be positive, got {weight}"
            )));
        }
        let gph = self.graph;
        gph.check_image(g)?;
        let n = gph.num_pixels();
        let m = gph.num_edges();
        let rho = self.penalty_ratio * weight;
        let threshold = weight / rho;
        let gs = g.as_slice();

        let (mut d, mut b, mut f) = match self.state.take() {
            Some(s) => s,
            None => (vec![0.0; m], vec![0.0; m], gs.to_vec()),
        };
        let mut grad = vec![0.0; m];
        let mut tmp = vec![0.0; m];
        let mut rhs = vec![0.0; n];
        let mut div = vec![0.0; n];
        let mut cg = CgWork::new(n);
        let mut residual = f64::INFINITY;
        let mut iterations = 0;

        while iterations < cfg.max_iters {
            // (I + rho L) f = g - rho div(d - b)
            for ((t, di), bi) in tmp.iter_mut().zip(&d).zip(&b) {
                *t = di - bi;
            }
            gph.div_into(&tmp, &mut div);
            for ((r, gi), dv) in rhs.iter_mut().zip(gs).zip(&div) {
                *r = gi - rho * dv;
            }
            let previous = f.clone();
            cg.solve(gph, rho, &rhs, &mut f);

            gph.grad_into(&f, &mut grad);
            for x in 0..n {
                let r = gph.offsets[x]..gph.offsets[x + 1];
                let norm = r
                    .clone()
                    .map(|e| {
                        let v = grad[e] + b[e];
                        v * v
                    })
                    .sum::<f64>()
                    .sqrt();
                // zero-norm groups map to zero
                let shrink = if norm > threshold {
                    (norm - threshold) / norm
                } else {
                    0.0
                };
                for e in r {
                    d[e] = shrink * (grad[e] + b[e]);
                }
            }
            for e in 0..m {
                b[e] += grad[e] - d[e];
            }

            iterations += 1;
            let change = f
                .iter()
                .zip(&previous)
                .map(|(a, p)| (a - p) * (a - p))
                .sum::<f64>()
                .sqrt();
            let scale = previous.iter().map(|v| v * v).sum::<f64>().sqrt();
            residual = if scale > 0.0 { change / scale } else { change };
            if residual < cfg.tol {
                break;
            }
        }
        let image = Image::new(gph.width, gph.height, f.clone())?;
        self.state = Some((d, b, f));
        Ok(ProxOutcome {
            image,
            residual,
            iterations,
        })
    }
}

impl Regularizer for NltvProx<'_> {
    fn value(&self, img: &Image) -> f64 {
        nltv_norm(img, self.graph).expect("image matches graph")
    }

    fn prox(&mut self, g: &Image, weight: f64, cfg: &ProxConfig) -> Result<ProxOutcome> {
        self.solve(g, weight, cfg)
    }

    fn reset(&mut self) {
        self.state = None;
    }

    fn name(&self) -> &'static str {
        "nltv"
    }
}

/// Stateless NL-TV proximity operator.
pub fn nltv_prox(g: &Image, weight: f64, gph: &NlWeightGraph, cfg: &ProxConfig) -> Result<Image> {
    Ok(NltvProx::new(gph).solve(g, weight, cfg)?.image)
}

struct CgWork {
    r: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
}

impl CgWork {
    fn new(n: usize) -> Self {
        Self {
            r: vec![0.0; n],
            p: vec![0.0; n],
            ap: vec![0.0; n],
        }
    }

    fn apply(gph: &NlWeightGraph, rho: f64, x: &[f64], out: &mut [f64]) {
        gph.laplacian_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + rho * *o;
        }
    }

    /// Conjugate gradients on the SPD system `(I + rho L) x = rhs`,
    /// starting from the current `x`.
    fn solve(&mut self, gph: &NlWeightGraph, rho: f64, rhs: &[f64], x: &mut [f64]) {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        Self::apply(gph, rho, x, &mut self.ap);
        for i in 0..x.len() {
            self.r[i] = rhs[i] - self.ap[i];
        }
        self.p.copy_from_slice(&self.r);
        let target = CG_REL_TOL * dot(rhs, rhs).sqrt();
        let mut rr = dot(&self.r, &self.r);
        for _ in 0..CG_MAX_ITERS {
            if rr.sqrt() <= target {
                break;
            }
            Self::apply(gph, rho, &self.p, &mut self.ap);
            let alpha = rr / dot(&self.p, &self.ap);
            for i in 0..x.len() {
                x[i] += alpha * self.p[i];
                self.r[i] -= alpha * self.ap[i];
            }
            let rr_new = dot(&self.r, &self.r);
            let beta = rr_new / rr;
            for i in 0..x.len() {
                self.p[i] = self.r[i] + beta * self.p[i];
            }
            rr = rr_new;
        }
    }
}
