//! Smooth partitions of unity subordinate to a cover.
//!
//! Each chart weight is a product of per-axis profiles. A profile ramps
//! from 0 to 1 across a window *centered on the core-run boundary* with
//! half-width margin − ½ cells, built from a smoothstep S with the
//! symmetry S(t) + S(1−t) = 1. Two charts sharing a boundary therefore
//! see complementary ramp values, so on covers whose core runs are at
//! least as long as the ramp the per-axis profiles sum to exactly 1 and
//! the product over axes makes the global sum exactly 1 before
//! normalization. The half-cell shortfall against the support margin puts
//! the window ends exactly on the outermost support cell centers: each
//! weight vanishes identically (to the bit) on the support's edge layer.
//! That layer is where derivative stencils switch to their one-sided
//! variants, so chartwise derived quantities mixed through the partition
//! never sample a chart where its stencils degrade — this is what makes
//! partition-weighted energies independent of the ramp choice to rounding
//! rather than to stencil accuracy.
//!
//! No ramp is placed at a non-wrapped grid edge (sphere poles) or on an
//! axis a chart covers completely. Deeply refined covers have cores
//! shorter than the ramp; the windows then overlap, the raw sum dips below
//! 1, and the final normalization pass restores Σψ = 1 while a positive
//! floor check guards against actual gaps in the cover.

use crate::error::{Error, Result};
use crate::field::{Domain, ScalarField};
use crate::grid::Cover;

/// Ramp shape for the per-axis profiles; both satisfy S(t) + S(1−t) = 1,
/// so either choice yields an exact partition on standard covers. The
/// quintic is the default (C² at the window ends); the cubic variant
/// exists so invariance of downstream quantities under the choice of
/// partition can be exercised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RampProfile {
    Quintic,
    Cubic,
}

impl RampProfile {
    fn eval(self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self {
            RampProfile::Quintic => t * t * t * (t * (6.0 * t - 15.0) + 10.0),
            RampProfile::Cubic => t * t * (3.0 - 2.0 * t),
        }
    }
}

/// Normalized chart weights plus the gradient-based smallness constant.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    /// One weight per chart, sampled on the chart support, summing to 1.
    pub weights: Vec<ScalarField>,
    /// max over charts of ‖dψ_l‖_∞ · meas(∪_j overlap(l,j))^{1/n}.
    pub c_part: f64,
    /// Range of the raw (pre-normalization) global sum.
    pub raw_sum_min: f64,
    pub raw_sum_max: f64,
}

fn axis_profile(
    ramp: RampProfile,
    n: usize,
    wrapped: bool,
    runs_on_axis: usize,
    core_start: usize,
    core_len: usize,
    margin: usize,
    cell: usize,
) -> f64 {
    if runs_on_axis == 1 {
        return 1.0;
    }
    let (s, l, m) = (core_start as f64, core_len as f64, margin as f64);
    let nf = n as f64;
    // Offset of the cell center from the core start, unwrapped so that the
    // lower ramp window sits at negative offsets.
    let xi = if wrapped {
        let d = ((cell + n - core_start) % n) as f64 + 0.5;
        if d > l + (nf - l) / 2.0 { d - nf } else { d }
    } else {
        cell as f64 - s + 0.5
    };
    let e = core_start + core_len;
    // Half-widths sit half a cell inside the support margin so the ramp
    // hits exact 0 and 1 on the outermost support cell centers.
    let half = |raw: f64| raw - 0.5;
    let rise = if !wrapped && core_start == 0 {
        1.0
    } else {
        let below = half(if wrapped { m } else { m.min(s) });
        let above = half(if wrapped { m } else { m.min(nf - s) });
        ramp.eval((xi + below) / (below + above))
    };
    let fall = if !wrapped && e == n {
        1.0
    } else {
        let below = half(if wrapped { m } else { m.min(e as f64) });
        let above = half(if wrapped { m } else { m.min(nf - e as f64) });
        ramp.eval((l + above - xi) / (below + above))
    };
    rise * fall
}

/// Builds the normalized partition of unity subordinate to a cover.
pub fn build_partition_of_unity(cover: &Cover) -> Result<PartitionOfUnity> {
    build_partition_of_unity_with(cover, RampProfile::Quintic)
}

/// Same construction with an explicit ramp shape.
pub fn build_partition_of_unity_with(
    cover: &Cover,
    ramp: RampProfile,
) -> Result<PartitionOfUnity> {
    let grid = &cover.grid;
    let nd = grid.ndim();
    let runs_per_axis: Vec<usize> = (0..nd).map(|a| cover.axis_run_count(a)).collect();

    let mut weights: Vec<ScalarField> = Vec::with_capacity(cover.num_charts());
    let mut global_sum = vec![0.0f64; grid.num_points()];
    for chart in &cover.charts {
        let dom = Domain::new(grid.clone(), chart.support.clone())?;
        let core = chart.core.clone();
        let field = ScalarField::from_fn(dom, |gc| {
            let mut w = 1.0;
            for a in 0..nd {
                w *= axis_profile(
                    ramp,
                    grid.dims[a],
                    grid.wraps(a),
                    runs_per_axis[a],
                    core.start[a],
                    core.len[a],
                    cover.margin,
                    gc[a],
                );
            }
            w
        });
        let mut lc = vec![0usize; nd];
        let mut gc = vec![0usize; nd];
        for p in 0..field.domain.num_points() {
            field.domain.local_coords(p, &mut lc);
            field.domain.global_coords(&lc, &mut gc);
            global_sum[grid.flat(&gc)] += field.data[p];
        }
        weights.push(field);
    }

    let mut raw_min = f64::INFINITY;
    let mut raw_max = f64::NEG_INFINITY;
    for (idx, &s) in global_sum.iter().enumerate() {
        raw_min = raw_min.min(s);
        raw_max = raw_max.max(s);
        if s < 1e-8 {
            return Err(Error::CoverGap { index: grid.coords(idx), weight: s });
        }
    }

    for field in weights.iter_mut() {
        let mut lc = vec![0usize; nd];
        let mut gc = vec![0usize; nd];
        for p in 0..field.domain.num_points() {
            field.domain.local_coords(p, &mut lc);
            field.domain.global_coords(&lc, &mut gc);
            field.data[p] /= global_sum[grid.flat(&gc)];
        }
    }

    // Smallness constant: sharpest weight gradient times the n-th root of
    // the measure of everything that chart shares with its neighbors.
    let overlaps = cover.overlaps();
    let mut c_part = 0.0f64;
    for (l, field) in weights.iter().enumerate() {
        let grad = field.gradient_sup_norm();
        let support = &cover.charts[l].support;
        let mut marked = vec![false; support.num_points()];
        for ((i, j), regions) in overlaps.iter() {
            if *i != l && *j != l {
                continue;
            }
            for r in regions {
                for gc in r.iter_global(grid) {
                    if let Some(lc) = support.local_of(grid, &gc) {
                        marked[field.domain.local_flat(&lc)] = true;
                    }
                }
            }
        }
        let mut measure = 0.0;
        let mut lc = vec![0usize; nd];
        for (p, &hit) in marked.iter().enumerate() {
            if hit {
                field.domain.local_coords(p, &mut lc);
                measure += field.domain.cell_weight_local(&lc);
            }
        }
        c_part = c_part.max(grad * measure.powf(1.0 / nd as f64));
    }

    Ok(PartitionOfUnity { weights, c_part, raw_sum_min: raw_min, raw_sum_max: raw_max })
}
