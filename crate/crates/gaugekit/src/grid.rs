//! Base grids, wrapped box regions and chart covers.
//!
//! Three base geometries are supported, all with collocated (cell-centered)
//! points:
//!
//! - the unit torus T² on an n×n grid, spacing 1/n, cell weight 1/n²,
//! - the unit torus T⁴ on an n⁴ grid, cell weight 1/n⁴,
//! - the round sphere S² on a global (θ, φ) grid with dims [n, 2n] and equal
//!   spacings π/n. θ is cell-centered so the poles carry no grid point, and
//!   the cell weights use the exact band areas
//!   `[cos(θ−Δθ/2) − cos(θ+Δθ/2)]·Δφ`, which telescope to a total of 4π in
//!   exact arithmetic.
//!
//! A [`BoxRegion`] is an axis-aligned box of grid cells that may wrap around
//! periodic axes, so per-axis footprints are arcs on a circle and the
//! intersection of two regions can have up to two components per axis.
//!
//! A [`Cover`] is built from per-axis runs whose products partition the grid
//! into chart cores; each chart's support is its core expanded by a fixed
//! margin (clamped at non-periodic edges, capped at a full wrap). Refinement
//! halves every splittable run and reports which parent chart each new chart
//! descends from, so bundle data can be pulled back along it.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub enum GridKind {
    Torus2,
    Torus4,
    Sphere2,
}

/// A global collocated grid on one of the supported base manifolds.
#[derive(Debug)]
pub struct BaseGrid {
    pub kind: GridKind,
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    wrap: Vec<bool>,
    /// Per-θ-row cell weight for the sphere; per-cell constant for tori.
    row_weight: Vec<f64>,
    strides: Vec<usize>,
}

impl BaseGrid {
    fn build(
        kind: GridKind,
        dims: Vec<usize>,
        spacing: Vec<f64>,
        wrap: Vec<bool>,
        row_weight: Vec<f64>,
    ) -> Arc<BaseGrid> {
        let mut strides = vec![1usize; dims.len()];
        for a in (0..dims.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        Arc::new(BaseGrid { kind, dims, spacing, wrap, row_weight, strides })
    }

    /// Unit 2-torus on n×n cells.
    pub fn torus2(n: usize) -> Result<Arc<BaseGrid>> {
        if n < 8 {
            return Err(Error::InvalidGrid { reason: format!("torus2 needs n ≥ 8, got {n}") });
        }
        let h = 1.0 / n as f64;
        Ok(Self::build(
            GridKind::Torus2,
            vec![n, n],
            vec![h, h],
            vec![true, true],
            vec![h * h],
        ))
    }

    /// Unit 4-torus on n⁴ cells.
    pub fn torus4(n: usize) -> Result<Arc<BaseGrid>> {
        if n < 8 {
            return Err(Error::InvalidGrid { reason: format!("torus4 needs n ≥ 8, got {n}") });
        }
        let h = 1.0 / n as f64;
        Ok(Self::build(
            GridKind::Torus4,
            vec![n; 4],
            vec![h; 4],
            vec![true; 4],
            vec![h * h * h * h],
        ))
    }

    /// Round 2-sphere on an [n, 2n] grid in (θ, φ), both spacings π/n.
    pub fn sphere(n_theta: usize) -> Result<Arc<BaseGrid>> {
        if n_theta < 8 || n_theta % 2 != 0 {
            return Err(Error::InvalidGrid {
                reason: format!("sphere needs even n ≥ 8, got {n_theta}"),
            });
        }
        let dt = std::f64::consts::PI / n_theta as f64;
        let dphi = dt;
        let row_weight = (0..n_theta)
            .map(|i| ((i as f64 * dt).cos() - ((i + 1) as f64 * dt).cos()) * dphi)
            .collect();
        Ok(Self::build(
            GridKind::Sphere2,
            vec![n_theta, 2 * n_theta],
            vec![dt, dphi],
            vec![false, true],
            row_weight,
        ))
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn num_points(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn wraps(&self, axis: usize) -> bool {
        self.wrap[axis]
    }

    pub fn flat(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(c, s)| c * s)
            .sum()
    }

    pub fn coords_into(&self, mut flat: usize, out: &mut [usize]) {
        for a in 0..self.dims.len() {
            out[a] = flat / self.strides[a];
            flat %= self.strides[a];
        }
    }

    pub fn coords(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        self.coords_into(flat, &mut out);
        out
    }

    /// Coordinate values of a point (cell centers on every axis).
    pub fn point(&self, coords: &[usize]) -> Vec<f64> {
        coords
            .iter()
            .zip(&self.spacing)
            .map(|(&c, &h)| (c as f64 + 0.5) * h)
            .collect()
    }

    /// Measure of the cell around a grid point.
    pub fn cell_weight(&self, coords: &[usize]) -> f64 {
        match self.kind {
            GridKind::Torus2 | GridKind::Torus4 => self.row_weight[0],
            GridKind::Sphere2 => self.row_weight[coords[0]],
        }
    }

    /// Metric scale factor √g_aa at a point (1 on tori; 1 resp. sin θ on the
    /// sphere).
    pub fn scale_factor(&self, axis: usize, coords: &[usize]) -> f64 {
        match self.kind {
            GridKind::Torus2 | GridKind::Torus4 => 1.0,
            GridKind::Sphere2 => {
                if axis == 0 {
                    1.0
                } else {
                    ((coords[0] as f64 + 0.5) * self.spacing[0]).sin()
                }
            }
        }
    }

    pub fn total_volume(&self) -> f64 {
        match self.kind {
            GridKind::Torus2 | GridKind::Torus4 => 1.0,
            GridKind::Sphere2 => self
                .row_weight
                .iter()
                .map(|w| w * self.dims[1] as f64)
                .sum(),
        }
    }
}

/// Intersection of two per-axis footprints (arcs when `wrap`, intervals
/// otherwise), as at most two disjoint pieces.
fn arc_intersect(
    n: usize,
    wrap: bool,
    a: (usize, usize),
    b: (usize, usize),
) -> Vec<(usize, usize)> {
    if a.1 == 0 || b.1 == 0 {
        return vec![];
    }
    if !wrap {
        let lo = a.0.max(b.0);
        let hi = (a.0 + a.1).min(b.0 + b.1);
        return if lo < hi { vec![(lo, hi - lo)] } else { vec![] };
    }
    if a.1 >= n {
        return vec![if b.1 >= n { (0, n) } else { b }];
    }
    if b.1 >= n {
        return vec![a];
    }
    // Unroll b in a's frame: a occupies [0, a.1).
    let d = (b.0 + n - a.0 % n) % n;
    let mut pieces: Vec<(usize, usize)> = Vec::with_capacity(2);
    let first_end = (d + b.1).min(n);
    if d < first_end {
        pieces.push((d, first_end));
    }
    if d + b.1 > n {
        pieces.push((0, d + b.1 - n));
    }
    let mut out = Vec::with_capacity(2);
    for (s, e) in pieces {
        let lo = s;
        let hi = e.min(a.1);
        if lo < hi {
            out.push(((a.0 + lo) % n, hi - lo));
        }
    }
    // Adjacent pieces in a's frame merge into one arc.
    if out.len() == 2 {
        let f0 = (out[0].0 + n - a.0) % n;
        let f1 = (out[1].0 + n - a.0) % n;
        if f1 + out[1].1 == f0 {
            out = vec![(out[1].0, out[0].1 + out[1].1)];
        } else if f0 + out[0].1 == f1 {
            out = vec![(out[0].0, out[0].1 + out[1].1)];
        }
    }
    out
}

/// An axis-aligned box of cells, possibly wrapping periodic axes.
#[derive(Clone, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub struct BoxRegion {
    pub start: Vec<usize>,
    pub len: Vec<usize>,
}

impl BoxRegion {
    pub fn new(start: Vec<usize>, len: Vec<usize>) -> Self {
        BoxRegion { start, len }
    }

    pub fn full(grid: &BaseGrid) -> Self {
        BoxRegion { start: vec![0; grid.ndim()], len: grid.dims.clone() }
    }

    pub fn ndim(&self) -> usize {
        self.start.len()
    }

    pub fn num_points(&self) -> usize {
        self.len.iter().product()
    }

    /// Whether the region's footprint covers the whole circle on `axis`
    /// (only then do stencils wrap on that axis).
    pub fn wraps_axis(&self, grid: &BaseGrid, axis: usize) -> bool {
        grid.wraps(axis) && self.len[axis] == grid.dims[axis]
    }

    pub fn contains(&self, grid: &BaseGrid, coords: &[usize]) -> bool {
        for a in 0..self.ndim() {
            let n = grid.dims[a];
            let off = (coords[a] + n - self.start[a] % n) % n;
            if off >= self.len[a] {
                return false;
            }
        }
        true
    }

    /// Local (row-major, in-region) coordinates of a global point.
    pub fn local_of(&self, grid: &BaseGrid, coords: &[usize]) -> Option<Vec<usize>> {
        let mut out = vec![0; self.ndim()];
        for a in 0..self.ndim() {
            let n = grid.dims[a];
            let off = (coords[a] + n - self.start[a] % n) % n;
            if off >= self.len[a] {
                return None;
            }
            out[a] = off;
        }
        Some(out)
    }

    pub fn global_of(&self, grid: &BaseGrid, local: &[usize], out: &mut [usize]) {
        for a in 0..self.ndim() {
            out[a] = (self.start[a] + local[a]) % grid.dims[a];
        }
    }

    /// Iterates global coordinates in local row-major order.
    pub fn iter_global<'a>(&'a self, grid: &'a BaseGrid) -> impl Iterator<Item = Vec<usize>> + 'a {
        let total = self.num_points();
        let nd = self.ndim();
        (0..total).map(move |mut f| {
            let mut out = vec![0; nd];
            for a in (0..nd).rev() {
                let l = f % self.len[a];
                f /= self.len[a];
                out[a] = (self.start[a] + l) % grid.dims[a];
            }
            out
        })
    }

    /// Intersection, decomposed into disjoint boxes (≤ 2 components per
    /// wrapped axis).
    pub fn intersect(&self, grid: &BaseGrid, other: &BoxRegion) -> Vec<BoxRegion> {
        let nd = self.ndim();
        let mut per_axis: Vec<Vec<(usize, usize)>> = Vec::with_capacity(nd);
        for a in 0..nd {
            let pieces = arc_intersect(
                grid.dims[a],
                grid.wraps(a),
                (self.start[a], self.len[a]),
                (other.start[a], other.len[a]),
            );
            if pieces.is_empty() {
                return vec![];
            }
            per_axis.push(pieces);
        }
        let mut out = vec![BoxRegion::new(vec![0; nd], vec![0; nd])];
        for (a, pieces) in per_axis.iter().enumerate() {
            let mut next = Vec::with_capacity(out.len() * pieces.len());
            for b in &out {
                for &(s, l) in pieces {
                    let mut r = b.clone();
                    r.start[a] = s;
                    r.len[a] = l;
                    next.push(r);
                }
            }
            out = next;
        }
        out
    }

    /// The region grown by `margin` cells per side, clamped at non-periodic
    /// grid edges and capped at a full wrap on periodic axes.
    pub fn expand(&self, grid: &BaseGrid, margin: usize) -> BoxRegion {
        let mut start = self.start.clone();
        let mut len = self.len.clone();
        for a in 0..self.ndim() {
            let n = grid.dims[a];
            if grid.wraps(a) {
                if self.len[a] + 2 * margin >= n {
                    start[a] = 0;
                    len[a] = n;
                } else {
                    start[a] = (self.start[a] + n - margin) % n;
                    len[a] = self.len[a] + 2 * margin;
                }
            } else {
                let lo = self.start[a].saturating_sub(margin);
                let hi = (self.start[a] + self.len[a] + margin).min(n);
                start[a] = lo;
                len[a] = hi - lo;
            }
        }
        BoxRegion { start, len }
    }

    /// The region shrunk by `margin` cells per side (periodic full wraps are
    /// left whole). Errors when nothing would remain.
    pub fn shrink(&self, grid: &BaseGrid, margin: usize) -> Result<BoxRegion> {
        let mut start = self.start.clone();
        let mut len = self.len.clone();
        for a in 0..self.ndim() {
            if self.wraps_axis(grid, a) {
                continue;
            }
            if self.len[a] <= 2 * margin {
                return Err(Error::MarginExhausted {
                    reason: format!(
                        "cannot shrink axis {a}: length {} ≤ 2·margin {}",
                        self.len[a], margin
                    ),
                });
            }
            start[a] = (self.start[a] + margin) % grid.dims[a];
            len[a] = self.len[a] - 2 * margin;
        }
        Ok(BoxRegion { start, len })
    }
}

/// One chart of a cover: the core cells it owns and the padded support its
/// fields live on.
#[derive(Clone, Debug)]
pub struct Chart {
    pub core: BoxRegion,
    pub support: BoxRegion,
}

/// A cover of the base grid by box charts whose cores partition the cells.
#[derive(Debug)]
pub struct Cover {
    pub grid: Arc<BaseGrid>,
    pub margin: usize,
    /// Per-axis core runs (start, len); cores are their products.
    axis_runs: Vec<Vec<(usize, usize)>>,
    /// Per-axis cell → run lookup.
    run_of_cell: Vec<Vec<usize>>,
    pub charts: Vec<Chart>,
    overlap_cache: OnceLock<BTreeMap<(usize, usize), Vec<BoxRegion>>>,
}

impl Cover {
    /// Builds a cover whose cores are the products of the given per-axis
    /// runs. The runs on each axis must tile [0, dims) contiguously in
    /// order.
    pub fn from_axis_runs(
        grid: Arc<BaseGrid>,
        axis_runs: Vec<Vec<(usize, usize)>>,
        margin: usize,
    ) -> Result<Cover> {
        if margin < 2 {
            return Err(Error::InvalidGrid { reason: "cover margin must be ≥ 2".into() });
        }
        if axis_runs.len() != grid.ndim() {
            return Err(Error::InvalidGrid {
                reason: format!(
                    "cover has {} axes of runs on a {}-dim grid",
                    axis_runs.len(),
                    grid.ndim()
                ),
            });
        }
        let mut run_of_cell = Vec::with_capacity(grid.ndim());
        for (a, runs) in axis_runs.iter().enumerate() {
            let mut lookup = vec![usize::MAX; grid.dims[a]];
            let mut cursor = 0usize;
            for (r, &(s, l)) in runs.iter().enumerate() {
                if s != cursor || l == 0 {
                    return Err(Error::InvalidGrid {
                        reason: format!("axis {a} runs do not tile the axis contiguously"),
                    });
                }
                for c in s..s + l {
                    lookup[c] = r;
                }
                cursor += l;
            }
            if cursor != grid.dims[a] {
                return Err(Error::InvalidGrid {
                    reason: format!("axis {a} runs cover {cursor} of {} cells", grid.dims[a]),
                });
            }
            run_of_cell.push(lookup);
        }

        let nd = grid.ndim();
        let block_dims: Vec<usize> = axis_runs.iter().map(|r| r.len()).collect();
        let total: usize = block_dims.iter().product();
        let mut charts = Vec::with_capacity(total);
        for mut f in 0..total {
            let mut idx = vec![0usize; nd];
            for a in (0..nd).rev() {
                idx[a] = f % block_dims[a];
                f /= block_dims[a];
            }
            let mut start = vec![0; nd];
            let mut len = vec![0; nd];
            for a in 0..nd {
                let (s, l) = axis_runs[a][idx[a]];
                start[a] = s;
                len[a] = l;
            }
            let core = BoxRegion::new(start, len);
            let support = core.expand(&grid, margin);
            for a in 0..nd {
                let edged = !support.wraps_axis(&grid, a);
                if edged && support.len[a] < 3 {
                    return Err(Error::InvalidGrid {
                        reason: format!(
                            "chart support too thin on axis {a}: {} cells (stencils need 3)",
                            support.len[a]
                        ),
                    });
                }
            }
            charts.push(Chart { core, support });
        }

        Ok(Cover {
            grid,
            margin,
            axis_runs,
            run_of_cell,
            charts,
            overlap_cache: OnceLock::new(),
        })
    }

    fn equal_runs(n: usize, blocks: usize) -> Vec<(usize, usize)> {
        let mut runs = Vec::with_capacity(blocks);
        let mut cursor = 0;
        for b in 0..blocks {
            let end = (n * (b + 1)) / blocks;
            runs.push((cursor, end - cursor));
            cursor = end;
        }
        runs
    }

    fn standard_margin(margin: usize) -> Result<()> {
        if margin < 4 {
            return Err(Error::InvalidGrid {
                reason: format!("standard covers need margin ≥ 4, got {margin}"),
            });
        }
        Ok(())
    }

    /// Cover of a torus by an equal block grid (`blocks` per axis).
    pub fn torus_blocks(grid: Arc<BaseGrid>, blocks: usize, margin: usize) -> Result<Cover> {
        Self::standard_margin(margin)?;
        if blocks == 0 {
            return Err(Error::InvalidGrid { reason: "need at least one block per axis".into() });
        }
        let runs: Vec<Vec<(usize, usize)>> = grid
            .dims
            .iter()
            .map(|&n| Self::equal_runs(n, blocks))
            .collect();
        Cover::from_axis_runs(grid, runs, margin)
    }

    /// Cover of a torus by horizontal bands along the last axis.
    pub fn torus_bands(grid: Arc<BaseGrid>, bands: usize, margin: usize) -> Result<Cover> {
        Self::standard_margin(margin)?;
        if bands < 2 {
            return Err(Error::InvalidGrid { reason: "band cover needs ≥ 2 bands".into() });
        }
        let nd = grid.ndim();
        let mut runs: Vec<Vec<(usize, usize)>> = grid.dims[..nd - 1]
            .iter()
            .map(|&n| vec![(0usize, n)])
            .collect();
        runs.push(Self::equal_runs(grid.dims[nd - 1], bands));
        Cover::from_axis_runs(grid, runs, margin)
    }

    /// Single chart covering the whole grid.
    pub fn single(grid: Arc<BaseGrid>, margin: usize) -> Result<Cover> {
        Self::standard_margin(margin)?;
        let runs = grid.dims.iter().map(|&n| vec![(0usize, n)]).collect();
        Cover::from_axis_runs(grid, runs, margin)
    }

    /// The standard 2-chart sphere cover: northern and southern θ-bands with
    /// full φ extent, overlapping in an equatorial belt of width 2·margin.
    pub fn sphere_caps(grid: Arc<BaseGrid>, margin: usize) -> Result<Cover> {
        Self::standard_margin(margin)?;
        if grid.kind != GridKind::Sphere2 {
            return Err(Error::InvalidGrid { reason: "sphere_caps needs a sphere grid".into() });
        }
        let n = grid.dims[0];
        let runs = vec![vec![(0, n / 2), (n / 2, n - n / 2)], vec![(0, grid.dims[1])]];
        Cover::from_axis_runs(grid, runs, margin)
    }

    pub fn num_charts(&self) -> usize {
        self.charts.len()
    }

    /// Number of core runs along one axis.
    pub fn axis_run_count(&self, axis: usize) -> usize {
        self.axis_runs[axis].len()
    }

    /// Index of the chart whose core owns a point.
    pub fn owner(&self, coords: &[usize]) -> usize {
        let mut flat = 0usize;
        for a in 0..coords.len() {
            flat = flat * self.axis_runs[a].len() + self.run_of_cell[a][coords[a]];
        }
        flat
    }

    /// Support∩support regions for every unordered chart pair (computed once,
    /// then cached).
    pub fn overlaps(&self) -> &BTreeMap<(usize, usize), Vec<BoxRegion>> {
        self.overlap_cache.get_or_init(|| {
            let nd = self.grid.ndim();
            let block_dims: Vec<usize> = self.axis_runs.iter().map(|r| r.len()).collect();
            // Per-axis ordered block pairs with intersecting support runs.
            let mut axis_pairs: Vec<Vec<(usize, usize, Vec<(usize, usize)>)>> =
                Vec::with_capacity(nd);
            for a in 0..nd {
                let n = self.grid.dims[a];
                let wrap = self.grid.wraps(a);
                // Expand each 1-d run exactly as chart supports do.
                let sup_runs: Vec<(usize, usize)> = self.axis_runs[a]
                    .iter()
                    .map(|&(s, l)| {
                        if wrap {
                            if l + 2 * self.margin >= n {
                                (0, n)
                            } else {
                                ((s + n - self.margin) % n, l + 2 * self.margin)
                            }
                        } else {
                            let lo = s.saturating_sub(self.margin);
                            let hi = (s + l + self.margin).min(n);
                            (lo, hi - lo)
                        }
                    })
                    .collect();
                let mut pairs = Vec::new();
                for (u, &ru) in sup_runs.iter().enumerate() {
                    for (v, &rv) in sup_runs.iter().enumerate() {
                        let pieces = arc_intersect(n, wrap, ru, rv);
                        if !pieces.is_empty() {
                            pairs.push((u, v, pieces));
                        }
                    }
                }
                axis_pairs.push(pairs);
            }

            let chart_flat = |idx: &[usize]| -> usize {
                let mut f = 0;
                for a in 0..nd {
                    f = f * block_dims[a] + idx[a];
                }
                f
            };

            let mut map: BTreeMap<(usize, usize), Vec<BoxRegion>> = BTreeMap::new();
            // Cartesian product of per-axis pair lists.
            let mut stack_idx = vec![0usize; nd];
            'outer: loop {
                let mut u_idx = vec![0usize; nd];
                let mut v_idx = vec![0usize; nd];
                let mut per_axis_pieces: Vec<&Vec<(usize, usize)>> = Vec::with_capacity(nd);
                for a in 0..nd {
                    let (u, v, ref pieces) = axis_pairs[a][stack_idx[a]];
                    u_idx[a] = u;
                    v_idx[a] = v;
                    per_axis_pieces.push(pieces);
                }
                let fu = chart_flat(&u_idx);
                let fv = chart_flat(&v_idx);
                if fu < fv {
                    let mut regions = vec![BoxRegion::new(vec![0; nd], vec![0; nd])];
                    for (a, pieces) in per_axis_pieces.iter().enumerate() {
                        let mut next = Vec::with_capacity(regions.len() * pieces.len());
                        for b in &regions {
                            for &(s, l) in pieces.iter() {
                                let mut r = b.clone();
                                r.start[a] = s;
                                r.len[a] = l;
                                next.push(r);
                            }
                        }
                        regions = next;
                    }
                    map.insert((fu, fv), regions);
                }
                for a in (0..nd).rev() {
                    stack_idx[a] += 1;
                    if stack_idx[a] < axis_pairs[a].len() {
                        continue 'outer;
                    }
                    stack_idx[a] = 0;
                    if a == 0 {
                        break 'outer;
                    }
                }
            }
            map
        })
    }

    /// Support∩support∩support of three charts.
    pub fn triple_overlap(&self, i: usize, j: usize, k: usize) -> Vec<BoxRegion> {
        let si = &self.charts[i].support;
        let sj = &self.charts[j].support;
        let sk = &self.charts[k].support;
        let mut out = Vec::new();
        for r in si.intersect(&self.grid, sj) {
            for r2 in r.intersect(&self.grid, sk) {
                out.push(r2);
            }
        }
        out
    }

    /// Refines by halving every run of length ≥ 2 on every axis. Returns the
    /// finer cover and, per new chart, the index of its parent chart (whose
    /// core contains the new core, hence whose support contains the new
    /// support for the shared margin).
    pub fn refine(&self) -> Result<(Cover, Vec<usize>)> {
        let mut new_runs: Vec<Vec<(usize, usize)>> = Vec::with_capacity(self.axis_runs.len());
        let mut run_parent: Vec<Vec<usize>> = Vec::with_capacity(self.axis_runs.len());
        let mut any_split = false;
        for runs in &self.axis_runs {
            let mut nr = Vec::with_capacity(runs.len() * 2);
            let mut rp = Vec::with_capacity(runs.len() * 2);
            for (i, &(s, l)) in runs.iter().enumerate() {
                if l >= 2 {
                    let half = l / 2;
                    nr.push((s, half));
                    nr.push((s + half, l - half));
                    rp.push(i);
                    rp.push(i);
                    any_split = true;
                } else {
                    nr.push((s, l));
                    rp.push(i);
                }
            }
            new_runs.push(nr);
            run_parent.push(rp);
        }
        if !any_split {
            return Err(Error::MarginExhausted {
                reason: "cover cannot be refined further: all cores are single cells".into(),
            });
        }
        let fine = Cover::from_axis_runs(self.grid.clone(), new_runs, self.margin)?;
        let nd = self.grid.ndim();
        let old_dims: Vec<usize> = self.axis_runs.iter().map(|r| r.len()).collect();
        let new_dims: Vec<usize> = fine.axis_runs.iter().map(|r| r.len()).collect();
        let total: usize = new_dims.iter().product();
        let mut parent = Vec::with_capacity(total);
        for mut f in 0..total {
            let mut idx = vec![0usize; nd];
            for a in (0..nd).rev() {
                idx[a] = f % new_dims[a];
                f /= new_dims[a];
            }
            let mut pf = 0usize;
            for a in 0..nd {
                pf = pf * old_dims[a] + run_parent[a][idx[a]];
            }
            parent.push(pf);
        }
        Ok((fine, parent))
    }

    /// The same cores with supports narrowed by `cells`; the remaining
    /// margin must stay ≥ 2 so stencils and overlaps survive.
    pub fn shrink(&self, cells: usize) -> Result<Cover> {
        if self.margin < cells + 2 {
            return Err(Error::MarginExhausted {
                reason: format!(
                    "shrinking by {cells} would leave margin {} below 2",
                    self.margin.saturating_sub(cells)
                ),
            });
        }
        Cover::from_axis_runs(self.grid.clone(), self.axis_runs.clone(), self.margin - cells)
    }
}
