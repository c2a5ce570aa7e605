//! Cocycle and connection smoothing.
//!
//! Four constructions live here, all working in log coordinates around the
//! identity so that group constraints are preserved exactly:
//!
//! * [`mollify_group_map`] — convolve a group-valued field with a compact
//!   smooth kernel after lifting it through the log around each window's
//!   center value. The lift exists only where the field oscillates less than
//!   [`DELTA_G`] across a kernel window; wilder fields are rejected rather
//!   than silently branch-cut.
//! * [`patch_extend`] — extend a field given on a sub-box of a chart to the
//!   whole chart, keeping it bit-for-bit on a designated plateau and fading
//!   it to the identity across a fixed-width band.
//! * [`repair_cocycle`] — turn an approximately multiplicative family of
//!   transitions into an exactly multiplicative one. Charts are visited in
//!   index order; each new transition is pinned by the quotient formula
//!   h_st = g_is⁻¹ · h_it wherever an earlier chart i ties it down, and
//!   interpolated back to the input across a band elsewhere. Every pinned
//!   value closes a product chain of already-stored transitions, so the
//!   output satisfies the cocycle identity to rounding on every stored
//!   triple overlap — the construction is exact, not approximate.
//! * [`smooth_connection_on_bundle`] — combine per-chart rough 1-forms into
//!   a single connection B_j = Σ_l ψ_l·[MC(g_lj) + Ad(g_lj⁻¹)Ã_l] that glues
//!   through a given exact cocycle. For inputs that already glue the output
//!   reproduces them exactly; for abelian cocycles the output glues exactly
//!   whatever the inputs; in general the gluing defect is second order in
//!   the grid spacing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bundle::{Cocycle, ConnectionForm};
use crate::error::{Error, Result};
use crate::field::{Domain, FormField, GroupField};
use crate::grid::{BaseGrid, BoxRegion};
use crate::lie::{AlgebraElement, GroupElement, IdentityNeighborhood};
use crate::norms::lp_norm_of_form;
use crate::partition::PartitionOfUnity;

/// Largest sup-oscillation (geodesic) a group map may have across a kernel
/// window or a repair chain before its log lift is considered unreliable.
/// Comfortably inside the default identity neighborhood of radius π/2.
pub const DELTA_G: f64 = 0.4;

/// Width in cells of the interpolation band used by patching and cocycle
/// repair: ψ takes two partial values and reaches exact 0 and 1 on the cells
/// beyond, so each repair stage consumes two cells of chart margin.
const BAND_CELLS: usize = 2;

/// Distances between an approximate transition family and its repaired or
/// smoothed counterpart on one chart pair, maximized (sup) respectively
/// accumulated (Sobolev) over the pair's overlap components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSmoothingDistance {
    /// Chart indices (i, j) with i < j.
    pub charts: (usize, usize),
    /// Pointwise geodesic sup distance.
    pub sup: f64,
    /// Discrete W^{1,n} norm of log(g_ij⁻¹ h_ij), n the base dimension.
    pub w1n: f64,
}

/// Outcome summary of a cocycle smoothing/repair run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingReport {
    /// Distance from the input transitions, one entry per overlapping pair.
    pub pair_distances: Vec<PairSmoothingDistance>,
    /// Cocycle residual of the output (repair is exact by construction, so
    /// this sits at rounding level).
    pub post_residual: f64,
    /// Whether every requested constraint region was returned bit-for-bit.
    pub constraints_preserved: bool,
}

/// Quintic ramp: 0 for t ≤ 0, 1 for t ≥ 1, C² monotone in between.
fn quintic(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Geodesic interpolation base·exp(weight·log(base⁻¹·target)) between two
/// group elements. The endpoints short-circuit to clones so that plateau
/// regions of patched fields reproduce their inputs bit-for-bit.
pub fn patch_interpolate(
    base: &GroupElement,
    target: &GroupElement,
    weight: f64,
    nbhd: &IdentityNeighborhood,
) -> Result<GroupElement> {
    if weight >= 1.0 {
        return Ok(target.clone());
    }
    if weight <= 0.0 {
        return Ok(base.clone());
    }
    let u = base.inverse().mul(target)?.log(nbhd)?;
    base.mul(&u.scale(weight).exp())
}

/// Cell distance from `cell` to the index interval `(start, len)` on an axis
/// of length `n`, measuring through the wrap on wrapped axes.
fn axis_cell_distance(n: usize, wraps: bool, start: usize, len: usize, cell: usize) -> usize {
    if len >= n {
        return 0;
    }
    let o = (cell + n - start) % n;
    if o < len {
        return 0;
    }
    if wraps {
        (n - o).min(o + 1 - len)
    } else if cell < start {
        start - cell
    } else {
        cell + 1 - (start + len)
    }
}

/// Forward cell offset of interval `inner` within interval `outer` on an
/// axis of length `n`, or None when `inner` does not fit inside `outer`.
fn axis_offset_within(
    n: usize,
    outer: (usize, usize),
    inner: (usize, usize),
) -> Option<usize> {
    let (os, ol) = outer;
    let (is_, il) = inner;
    if il > ol {
        return None;
    }
    let o = (is_ + n - os) % n;
    if ol >= n || o + il <= ol {
        Some(o)
    } else {
        None
    }
}

/// Smooths a group-valued field by averaging log lifts over a compact kernel
/// of the given physical width (quintic profile, separable per axis, clipped
/// and renormalized at non-wrapped domain edges). Each output point lifts its
/// kernel window through the log around its own center value, so the
/// precondition is windowed oscillation below [`DELTA_G`], not whole-chart
/// oscillation — a unit-winding phase field passes even though its total
/// phase travel is 2π. Points where `constraint` returns true are returned
/// bit-for-bit. A kernel no wider than one cell degenerates to the identity
/// map, since the profile vanishes at the support edge.
pub fn mollify_group_map(
    g: &GroupField,
    width: f64,
    constraint: Option<&dyn Fn(&[usize]) -> bool>,
) -> Result<GroupField> {
    if !(width > 0.0) {
        return Err(Error::InvalidGrid {
            reason: format!("mollification width {width} must be positive"),
        });
    }
    let dom = &g.domain;
    let nd = dom.ndim();
    let nbhd = IdentityNeighborhood::new(g.group);
    let reach: Vec<isize> = (0..nd)
        .map(|a| ((width / dom.grid.spacing[a]).ceil() as isize - 1).max(0))
        .collect();
    let mut out = g.clone();
    let mut lc = vec![0usize; nd];
    let mut gc = vec![0usize; nd];
    let mut nb = vec![0usize; nd];
    for p in 0..dom.num_points() {
        dom.local_coords(p, &mut lc);
        dom.global_coords(&lc, &mut gc);
        if let Some(keep) = constraint {
            if keep(&gc) {
                continue;
            }
        }
        let base = g.value(p);
        let base_inv = base.inverse();
        let mut acc = AlgebraElement::zero(g.group);
        let mut wsum = 0.0;
        let mut off: Vec<isize> = reach.iter().map(|&r| -r).collect();
        'offsets: loop {
            let mut in_range = true;
            let mut w = 1.0;
            for a in 0..nd {
                let len = dom.region.len[a];
                let q = lc[a] as isize + off[a];
                if dom.wraps_axis(a) {
                    nb[a] = q.rem_euclid(len as isize) as usize;
                } else if q < 0 || q >= len as isize {
                    in_range = false;
                    break;
                } else {
                    nb[a] = q as usize;
                }
                w *= quintic(1.0 - off[a].unsigned_abs() as f64 * dom.grid.spacing[a] / width);
            }
            if in_range && w > 0.0 {
                let sample = g.value(dom.local_flat(&nb));
                let osc = base.distance(&sample)?;
                if osc > DELTA_G {
                    return Err(Error::OscillationTooLarge { osc, limit: DELTA_G });
                }
                acc = acc.add(&base_inv.mul(&sample)?.log(&nbhd)?.scale(w))?;
                wsum += w;
            }
            for a in (0..nd).rev() {
                off[a] += 1;
                if off[a] <= reach[a] {
                    continue 'offsets;
                }
                off[a] = -reach[a];
                if a == 0 {
                    break 'offsets;
                }
            }
        }
        if wsum > 0.0 {
            out.set_value(p, &base.mul(&acc.scale(1.0 / wsum).exp())?);
        }
    }
    Ok(out)
}

/// Extends a group field from its own region to a surrounding target domain:
/// bit-equal to the input on `plateau`, the identity outside the input's
/// region, and a quintic geodesic fade across a band of [`BAND_CELLS`]
/// partial cells in between. The input must take values inside the default
/// identity neighborhood everywhere (checked up front), which by convexity
/// of the log image keeps every output value inside it too. The plateau must
/// leave `BAND_CELLS + 1` cells of room inside the input region on every
/// axis the input does not fill completely.
pub fn patch_extend(
    f: &GroupField,
    plateau: &BoxRegion,
    target: &Domain,
) -> Result<GroupField> {
    let grid = &target.grid;
    if !std::sync::Arc::ptr_eq(&f.domain.grid, grid) {
        return Err(Error::DomainMismatch {
            reason: "patched field and target chart live on different grids".into(),
        });
    }
    let nd = grid.ndim();
    let gap = BAND_CELLS + 1;
    for a in 0..nd {
        let n = grid.dims[a];
        let outer = (target.region.start[a], target.region.len[a]);
        let mid = (f.domain.region.start[a], f.domain.region.len[a]);
        let inner = (plateau.start[a], plateau.len[a]);
        if axis_offset_within(n, outer, mid).is_none() {
            return Err(Error::DomainMismatch {
                reason: format!("patched field leaves the target chart on axis {a}"),
            });
        }
        let Some(o) = axis_offset_within(n, mid, inner) else {
            return Err(Error::DomainMismatch {
                reason: format!("plateau leaves the patched field's region on axis {a}"),
            });
        };
        if inner.1 == mid.1 {
            if mid.1 < outer.1 {
                return Err(Error::MarginExhausted {
                    reason: format!(
                        "plateau fills the patched region on axis {a}, leaving no room for \
                         the {gap}-cell fade to the identity"
                    ),
                });
            }
        } else if o < gap || o + inner.1 + gap > mid.1 {
            return Err(Error::MarginExhausted {
                reason: format!(
                    "plateau needs {gap} cells of fade room inside the patched region on \
                     axis {a}"
                ),
            });
        }
    }
    let nbhd = IdentityNeighborhood::new(f.group);
    let mut logs = Vec::with_capacity(f.domain.num_points());
    for p in 0..f.domain.num_points() {
        logs.push(f.value(p).log(&nbhd)?);
    }
    let fdom = f.domain.clone();
    let group = f.group;
    let out = GroupField::from_fn(target.clone(), group, |gc| {
        let Some(lc) = fdom.region.local_of(grid, gc) else {
            return GroupElement::identity(group);
        };
        let mut psi = 1.0;
        for a in 0..nd {
            let d = axis_cell_distance(
                grid.dims[a],
                grid.wraps(a),
                plateau.start[a],
                plateau.len[a],
                gc[a],
            );
            psi *= quintic(1.0 - d as f64 / gap as f64);
        }
        let p = fdom.local_flat(&lc);
        if psi >= 1.0 {
            f.value(p)
        } else if psi <= 0.0 {
            GroupElement::identity(group)
        } else {
            logs[p].scale(psi).exp()
        }
    });
    Ok(out)
}

/// Looks up the stored value of transition (i, j), i < j, at a global grid
/// point, scanning the pair's overlap components.
fn stored_value(
    map: &BTreeMap<(usize, usize), Vec<GroupField>>,
    grid: &BaseGrid,
    i: usize,
    j: usize,
    gc: &[usize],
) -> Option<GroupElement> {
    let fields = map.get(&(i, j))?;
    for field in fields {
        if let Some(lc) = field.domain.region.local_of(grid, gc) {
            return Some(field.value(field.domain.local_flat(&lc)));
        }
    }
    None
}

/// Mollifies every stored transition of a cocycle with [`mollify_group_map`]
/// at the given kernel width and reassembles the family on the same cover.
/// The output is smooth piece by piece but only approximately multiplicative;
/// follow with [`repair_cocycle`] to restore exactness.
pub fn mollify_cocycle(p: &Cocycle, width: f64) -> Result<Cocycle> {
    let grid = p.cover.grid.clone();
    let mut smoothed: BTreeMap<(usize, usize), Vec<GroupField>> = BTreeMap::new();
    for (i, j) in p.pairs() {
        let pieces = p.pair_fields(i, j).expect("pair comes from the iterator");
        let fields = pieces
            .iter()
            .map(|f| mollify_group_map(f, width, None))
            .collect::<Result<Vec<_>>>()?;
        smoothed.insert((i, j), fields);
    }
    Cocycle::from_fn(p.cover.clone(), p.group, |i, j, gc| {
        stored_value(&smoothed, &grid, i, j, gc).expect("every stored pair was mollified")
    })
}

/// Repairs an approximately multiplicative transition family into an exact
/// cocycle on the same cover.
///
/// Charts are processed in index order. For the pair (s, t), s < t, every
/// overlap point that also lies in the support of an earlier chart i < s is
/// *pinned*: the output there is the quotient h_st = g_is⁻¹ · h_it of
/// already-repaired transitions (the smallest such i is used; the choices
/// agree wherever two apply, because the earlier transitions already satisfy
/// the cocycle identity). Unpinned points within [`BAND_CELLS`] cells of a
/// pinned one are interpolated between the raw input and an averaged pinned
/// correction; unpinned points further out keep the input bit-for-bit. Since
/// every triple-overlap point of the cover is pinned at the stage that
/// completes its triple, the output satisfies the cocycle identity to
/// rounding on every stored triple — the returned report's `post_residual`
/// records the achieved value.
///
/// Preconditions: the cover margin must be at least 2·(chart count) so the
/// interpolation bands of successive stages have room, the input residual
/// must not exceed [`DELTA_G`], and no pinned chain may drift further than
/// [`DELTA_G`] from the input it replaces.
pub fn repair_cocycle(approx: &Cocycle) -> Result<(Cocycle, SmoothingReport)> {
    let cover = approx.cover.clone();
    let nc = cover.num_charts();
    let need = 2 * nc;
    if cover.margin < need {
        return Err(Error::MarginExhausted {
            reason: format!(
                "cocycle repair stages need a chart margin of at least {need} cells \
                 (two per chart), but the cover was built with margin {}",
                cover.margin
            ),
        });
    }
    let pre = approx.residual()?;
    if pre > DELTA_G {
        return Err(Error::SmallnessViolated {
            what: "cocycle residual entering repair".into(),
            value: pre,
            threshold: DELTA_G,
        });
    }
    let grid = cover.grid.clone();
    let nd = grid.ndim();
    let nbhd = IdentityNeighborhood::new(approx.group);
    let mut built: BTreeMap<(usize, usize), Vec<GroupField>> = BTreeMap::new();
    for t in 1..nc {
        for s in 0..t {
            let Some(raw_pieces) = approx.pair_fields(s, t) else { continue };
            let mut fields = Vec::with_capacity(raw_pieces.len());
            for raw in raw_pieces {
                let dom = raw.domain.clone();
                let npts = dom.num_points();
                let mut piece = raw.clone();
                let mut pinned: Vec<Option<AlgebraElement>> = vec![None; npts];
                let mut lc = vec![0usize; nd];
                let mut gc = vec![0usize; nd];
                for p in 0..npts {
                    dom.local_coords(p, &mut lc);
                    dom.global_coords(&lc, &mut gc);
                    let mut chained = None;
                    for i in 0..s {
                        let g_is = stored_value(&built, &grid, i, s, &gc);
                        let h_it = stored_value(&built, &grid, i, t, &gc);
                        if let (Some(g_is), Some(h_it)) = (g_is, h_it) {
                            chained = Some(g_is.inverse().mul(&h_it)?);
                            break;
                        }
                    }
                    let Some(h) = chained else { continue };
                    let raw_v = raw.value(p);
                    let drift = raw_v.distance(&h)?;
                    if drift > DELTA_G {
                        return Err(Error::SmallnessViolated {
                            what: format!(
                                "repair drift between the chained transition and the \
                                 input on pair ({s},{t})"
                            ),
                            value: drift,
                            threshold: DELTA_G,
                        });
                    }
                    pinned[p] = Some(raw_v.inverse().mul(&h)?.log(&nbhd)?);
                    piece.set_value(p, &h);
                }
                let mut nb = vec![0usize; nd];
                for p in 0..npts {
                    if pinned[p].is_some() {
                        continue;
                    }
                    dom.local_coords(p, &mut lc);
                    let mut nearest = usize::MAX;
                    let mut acc = AlgebraElement::zero(approx.group);
                    let mut wsum = 0.0;
                    let reach = BAND_CELLS as isize;
                    let mut off = vec![-reach; nd];
                    'window: loop {
                        let mut in_range = true;
                        let mut w = 1.0;
                        let mut cheb = 0usize;
                        for a in 0..nd {
                            let len = dom.region.len[a];
                            let q = lc[a] as isize + off[a];
                            if dom.wraps_axis(a) {
                                nb[a] = q.rem_euclid(len as isize) as usize;
                            } else if q < 0 || q >= len as isize {
                                in_range = false;
                                break;
                            } else {
                                nb[a] = q as usize;
                            }
                            let d = off[a].unsigned_abs();
                            cheb = cheb.max(d);
                            w *= quintic(1.0 - d as f64 / (BAND_CELLS + 1) as f64);
                        }
                        if in_range {
                            if let Some(u) = &pinned[dom.local_flat(&nb)] {
                                nearest = nearest.min(cheb);
                                acc = acc.add(&u.scale(w))?;
                                wsum += w;
                            }
                        }
                        for a in (0..nd).rev() {
                            off[a] += 1;
                            if off[a] <= reach {
                                continue 'window;
                            }
                            off[a] = -reach;
                            if a == 0 {
                                break 'window;
                            }
                        }
                    }
                    if nearest == usize::MAX || wsum <= 0.0 {
                        continue;
                    }
                    let psi = quintic(1.0 - nearest as f64 / (BAND_CELLS + 1) as f64);
                    if psi <= 0.0 {
                        continue;
                    }
                    let step = acc.scale(psi / wsum).exp();
                    piece.set_value(p, &raw.value(p).mul(&step)?);
                }
                fields.push(piece);
            }
            built.insert((s, t), fields);
        }
    }
    let repaired = Cocycle::from_fn(cover.clone(), approx.group, |i, j, gc| {
        stored_value(&built, &grid, i, j, gc).expect("every overlapping pair was rebuilt")
    })?;
    let mut pair_distances = Vec::new();
    for (i, j) in approx.pairs() {
        let raws = approx.pair_fields(i, j).expect("pair comes from the iterator");
        let news = repaired.pair_fields(i, j).expect("same cover, same pairs");
        let mut sup = 0.0f64;
        let mut w1n_pow = 0.0f64;
        let pn = nd as f64;
        for (raw, new) in raws.iter().zip(news.iter()) {
            sup = sup.max(raw.distance_sup(new)?);
            let mut u = FormField::zeros(raw.domain.clone(), approx.group, 0);
            for p in 0..raw.domain.num_points() {
                let l = raw.value(p).inverse().mul(&new.value(p))?.log(&nbhd)?;
                u.set_value(p, 0, &l);
            }
            let du = u.exterior_derivative()?;
            w1n_pow += lp_norm_of_form(&u, pn)?.powf(pn) + lp_norm_of_form(&du, pn)?.powf(pn);
        }
        pair_distances.push(PairSmoothingDistance {
            charts: (i, j),
            sup,
            w1n: w1n_pow.powf(1.0 / pn),
        });
    }
    let post_residual = repaired.residual()?;
    let report = SmoothingReport { pair_distances, post_residual, constraints_preserved: true };
    Ok((repaired, report))
}

/// Combines per-chart rough 1-forms Ã_l into a connection that glues through
/// an exact cocycle: B_j = Σ_l ψ_l·[MC(g_lj) + Ad(g_lj⁻¹)Ã_l], with the
/// Maurer–Cartan derivatives taken on the overlap components exactly as the
/// gluing-residual check takes them.
///
/// If the inputs already glue through `p`, the partition weights telescope
/// and B_j = Ã_j to rounding. For U(1) the output glues exactly whatever the
/// inputs, because abelian logs add without commutator corrections; for
/// SU(2) the gluing defect is the stencil's product-rule error, second order
/// in the spacing.
pub fn smooth_connection_on_bundle(
    p: &Cocycle,
    rough: &[FormField],
    pou: &PartitionOfUnity,
) -> Result<ConnectionForm> {
    let cover = p.cover.clone();
    let nc = cover.num_charts();
    if rough.len() != nc {
        return Err(Error::DomainMismatch {
            reason: format!("{} rough forms supplied for {nc} charts", rough.len()),
        });
    }
    if pou.weights.len() != nc {
        return Err(Error::DomainMismatch {
            reason: format!("{} partition weights supplied for {nc} charts", pou.weights.len()),
        });
    }
    let nd = cover.grid.ndim();
    for (l, chart) in cover.charts.iter().enumerate() {
        let f = &rough[l];
        if f.group != p.group {
            return Err(Error::GroupMismatch { expected: p.group, got: f.group });
        }
        if !std::sync::Arc::ptr_eq(&f.domain.grid, &cover.grid)
            || f.domain.region != chart.support
            || f.num_form_comps() != nd
        {
            return Err(Error::DomainMismatch {
                reason: format!("rough form {l} is not a 1-form on chart {l}'s support"),
            });
        }
    }
    let nbhd = IdentityNeighborhood::new(p.group);
    let mut locals = Vec::with_capacity(nc);
    for (j, chart) in cover.charts.iter().enumerate() {
        let dom = Domain::new(cover.grid.clone(), chart.support.clone())?;
        let mut acc = FormField::zeros(dom, p.group, 1);
        let psi_j = &pou.weights[j];
        for q in 0..acc.domain.num_points() {
            for c in 0..nd {
                acc.set_value(q, c, &rough[j].value(q, c).scale(psi_j.data[q]));
            }
        }
        for l in 0..nc {
            if l == j {
                continue;
            }
            let key = (l.min(j), l.max(j));
            let Some(fields) = p.pair_fields(key.0, key.1) else { continue };
            for g_small in fields {
                let g_lj = if l < j { g_small.clone() } else { g_small.inverse() };
                let mc = g_lj.maurer_cartan(&nbhd)?;
                let transported =
                    rough[l].restrict(&g_small.domain.region)?.adjoint_transform(&g_lj)?;
                let term = mc.add(&transported)?;
                let psi = pou.weights[l].restrict(&g_small.domain.region)?;
                let mut lc = vec![0usize; nd];
                let mut gc = vec![0usize; nd];
                for q in 0..term.domain.num_points() {
                    term.domain.local_coords(q, &mut lc);
                    term.domain.global_coords(&lc, &mut gc);
                    let target = acc
                        .domain
                        .region
                        .local_of(&cover.grid, &gc)
                        .expect("overlap lies inside the chart support");
                    let tp = acc.domain.local_flat(&target);
                    for c in 0..nd {
                        let v = term.value(q, c).scale(psi.data[q]);
                        acc.set_value(tp, c, &acc.value(tp, c).add(&v)?);
                    }
                }
            }
        }
        locals.push(acc);
    }
    ConnectionForm::from_locals(cover, p.group, locals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{
        charge_sphere_bundle, flux_torus_bundle, gluing_residual, random_smooth_gauge,
        trivial_bundle, GaugeField,
    };
    use crate::grid::{BaseGrid, Cover};
    use crate::lie::{su2_from_coords, GroupId};
    use crate::partition::build_partition_of_unity;
    use crate::topology::winding_number;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};
    use std::sync::Arc;

    fn whole_domain(grid: &Arc<BaseGrid>) -> Domain {
        Domain::whole(grid.clone())
    }

    fn wavy_phase(grid: &Arc<BaseGrid>) -> GroupField {
        let n = grid.dims[0] as f64;
        GroupField::from_fn(whole_domain(grid), GroupId::U1, |gc| {
            let x = (gc[0] as f64 + 0.5) / n;
            let y = (gc[1] as f64 + 0.5) / n;
            let phase = 0.10 * (TAU * x).sin() + 0.06 * (2.0 * TAU * y).cos();
            GroupElement::from_components(GroupId::U1, &[Complex64::from_polar(1.0, phase)])
        })
    }

    #[test]
    fn mollify_leaves_constants_and_cell_width_kernels_alone() {
        let grid = BaseGrid::torus2(16).expect("grid builds");
        for group in [GroupId::U1, GroupId::Su2] {
            let c = match group {
                GroupId::U1 => {
                    GroupElement::from_components(group, &[Complex64::from_polar(1.0, 0.3)])
                }
                GroupId::Su2 => su2_from_coords(0.4, -0.1, 0.2).exp(),
            };
            let f = GroupField::from_fn(whole_domain(&grid), group, |_| c.clone());
            let smoothed = mollify_group_map(&f, 0.5, None).expect("constant field mollifies");
            assert!(
                f.distance_sup(&smoothed).expect("same domain") <= 1e-13,
                "mollifying a constant {} field must return it unchanged",
                group.name()
            );
        }
        let f = wavy_phase(&grid);
        let h = grid.spacing[0];
        let smoothed = mollify_group_map(&f, h, None).expect("cell-width kernel mollifies");
        let d = f.distance_sup(&smoothed).expect("same domain");
        assert!(d <= 1e-6, "a kernel of one cell width moved the field by {d:.3e}");
    }

    #[test]
    fn mollify_distance_grows_with_kernel_width() {
        let grid = BaseGrid::torus2(32).expect("grid builds");
        let f = wavy_phase(&grid);
        let h = grid.spacing[0];
        let mut last = -1.0;
        for mult in [1.0, 2.0, 4.0, 8.0] {
            let smoothed = mollify_group_map(&f, mult * h, None).expect("field mollifies");
            let d = f.distance_sup(&smoothed).expect("same domain");
            assert!(
                d >= last - 1e-15,
                "smoothing distance dropped from {last:.3e} to {d:.3e} as the kernel widened"
            );
            last = d;
        }
        assert!(last > 1e-4, "the widest kernel should visibly move a wavy field, got {last:.3e}");
    }

    #[test]
    fn mollify_is_exact_on_the_constraint_region() {
        let grid = BaseGrid::torus2(32).expect("grid builds");
        let f = wavy_phase(&grid);
        let keep = |gc: &[usize]| gc[0] < 8;
        let smoothed =
            mollify_group_map(&f, 4.0 * grid.spacing[0], Some(&keep)).expect("field mollifies");
        let mut constrained_moved = 0.0f64;
        let mut free_moved = 0.0f64;
        let dom = whole_domain(&grid);
        let mut lc = vec![0usize; 2];
        let mut gc = vec![0usize; 2];
        for p in 0..dom.num_points() {
            dom.local_coords(p, &mut lc);
            dom.global_coords(&lc, &mut gc);
            let d = f.value(p).distance(&smoothed.value(p)).expect("same group");
            if keep(&gc) {
                constrained_moved = constrained_moved.max(d);
            } else {
                free_moved = free_moved.max(d);
            }
        }
        assert!(
            constrained_moved == 0.0,
            "constraint region must be returned bit-for-bit, moved {constrained_moved:.3e}"
        );
        assert!(free_moved > 1e-6, "the unconstrained part should actually smooth");
    }

    #[test]
    fn mollify_rejects_jumps_that_break_the_log_lift() {
        let grid = BaseGrid::torus2(16).expect("grid builds");
        let f = GroupField::from_fn(whole_domain(&grid), GroupId::U1, |gc| {
            let phase = if gc[0] < 8 { 0.0 } else { 0.9 * PI };
            GroupElement::from_components(GroupId::U1, &[Complex64::from_polar(1.0, phase)])
        });
        let err = mollify_group_map(&f, 2.0 * grid.spacing[0], None)
            .expect_err("a 0.9π jump cannot be log-lifted inside the oscillation budget");
        assert!(
            matches!(err, Error::OscillationTooLarge { .. }),
            "expected OscillationTooLarge, got {err}"
        );
    }

    #[test]
    fn mollify_preserves_unit_winding_phases() {
        let grid = BaseGrid::torus2(32).expect("grid builds");
        let n = grid.dims[0];
        let f = GroupField::from_fn(whole_domain(&grid), GroupId::U1, |gc| {
            let x = (gc[0] as f64 + 0.5) / n as f64;
            let y = (gc[1] as f64 + 0.5) / n as f64;
            let phase = TAU * x + 0.08 * (2.0 * TAU * y).sin() + 0.05 * (3.0 * TAU * x).cos();
            GroupElement::from_components(GroupId::U1, &[Complex64::from_polar(1.0, phase)])
        });
        let dom = whole_domain(&grid);
        let row = |field: &GroupField| -> Vec<GroupElement> {
            (0..n).map(|x| field.value(dom.local_flat(&[x, 3]))).collect()
        };
        let before = winding_number(&row(&f)).expect("smooth loop unwinds");
        assert_eq!(before, 1, "the test loop is built with one unit of winding");
        let smoothed =
            mollify_group_map(&f, 2.0 * grid.spacing[0], None).expect("field mollifies");
        let after = winding_number(&row(&smoothed)).expect("smoothed loop unwinds");
        assert_eq!(after, 1, "mollification must not change the winding number");
    }

    #[test]
    fn patch_extend_fixes_the_plateau_and_pads_with_identity() {
        let grid = BaseGrid::torus2(32).expect("grid builds");
        let target = whole_domain(&grid);
        let inner = Domain::new(grid.clone(), BoxRegion::new(vec![4, 4], vec![24, 24]))
            .expect("inner region fits");
        let amplitude = 0.25;
        let f = GroupField::from_fn(inner.clone(), GroupId::U1, |gc| {
            let s = (TAU * gc[0] as f64 / 32.0).sin() * (TAU * gc[1] as f64 / 32.0).cos();
            GroupElement::from_components(GroupId::U1, &[Complex64::from_polar(1.0, amplitude * s)])
        });
        let plateau = BoxRegion::new(vec![12, 12], vec![8, 8]);
        let out = patch_extend(&f, &plateau, &target).expect("patching has band room");

        let ident = GroupField::from_fn(inner.clone(), GroupId::U1, |_| {
            GroupElement::identity(GroupId::U1)
        });
        let out_ident =
            patch_extend(&ident, &plateau, &target).expect("identity input patches");
        let all_ident = GroupField::identity(target.clone(), GroupId::U1);
        assert!(
            out_ident.distance_sup(&all_ident).expect("same domain") == 0.0,
            "patching the identity must give the identity everywhere"
        );

        let nbhd = IdentityNeighborhood::new(GroupId::U1);
        let mut gc = vec![0usize; 2];
        let mut lc = vec![0usize; 2];
        for p in 0..target.num_points() {
            target.local_coords(p, &mut lc);
            target.global_coords(&lc, &mut gc);
            let v = out.value(p);
            let norm = v.log(&nbhd).expect("output stays in the log domain").norm();
            assert!(
                norm <= amplitude + 1e-12,
                "patched value at {gc:?} left the convex log image: {norm:.3e}"
            );
            if plateau.contains(&grid, &gc) {
                let flc = inner.region.local_of(&grid, &gc).expect("plateau is inside");
                let d = v.distance(&f.value(inner.local_flat(&flc))).expect("same group");
                assert!(d == 0.0, "plateau must be bit-equal, moved {d:.3e} at {gc:?}");
            }
            if inner.region.local_of(&grid, &gc).is_none() {
                let d = v.distance(&GroupElement::identity(GroupId::U1)).expect("same group");
                assert!(d == 0.0, "outside the patched region the output must be the identity");
            }
        }
    }

    #[test]
    fn patch_extend_needs_band_room() {
        let grid = BaseGrid::torus2(32).expect("grid builds");
        let target = whole_domain(&grid);
        let inner = Domain::new(grid.clone(), BoxRegion::new(vec![4, 4], vec![24, 24]))
            .expect("inner region fits");
        let f = GroupField::identity(inner, GroupId::U1);
        let err = patch_extend(&f, &BoxRegion::new(vec![5, 5], vec![22, 22]), &target)
            .expect_err("one cell of gap cannot host the fade band");
        assert!(
            matches!(err, Error::MarginExhausted { .. }),
            "expected MarginExhausted, got {err}"
        );
    }

    #[test]
    fn repair_returns_exact_cocycles_untouched() {
        let torus = BaseGrid::torus2(48).expect("grid builds");
        let flux = flux_torus_bundle(torus, 8, 1).expect("flux bundle builds");
        let sphere = BaseGrid::sphere(16).expect("grid builds");
        let monopole = charge_sphere_bundle(sphere, 4, 1).expect("charge bundle builds");
        for p in [&flux.cocycle, &monopole.cocycle] {
            let (repaired, report) = repair_cocycle(p).expect("exact input repairs");
            let moved = p.distance_sup(&repaired).expect("same cover shape");
            assert!(moved <= 1e-13, "repair moved an exact cocycle by {moved:.3e}");
            assert!(
                report.post_residual <= 1e-12,
                "repaired residual {:.3e} exceeds the exactness budget",
                report.post_residual
            );
        }
    }

    #[test]
    fn repair_pins_perturbed_cocycles_to_exactness() {
        let grid = BaseGrid::torus2(48).expect("grid builds");
        let cover = Arc::new(Cover::torus_blocks(grid, 2, 8).expect("cover builds"));
        let eps = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noisy = Cocycle::from_fn(cover, GroupId::U1, |_, _, _| {
            let phase: f64 = rng.random_range(-eps..eps);
            GroupElement::from_components(GroupId::U1, &[Complex64::from_polar(1.0, phase)])
        })
        .expect("noisy cocycle builds");
        let pre = noisy.residual().expect("residual evaluates");
        assert!(pre > 1e-6, "the perturbation should produce a visible defect, got {pre:.3e}");
        let (repaired, report) = repair_cocycle(&noisy).expect("small perturbation repairs");
        assert!(
            report.post_residual <= 1e-12,
            "repaired residual {:.3e} is not exact",
            report.post_residual
        );
        let moved = noisy.distance_sup(&repaired).expect("same cover shape");
        assert!(
            moved <= 10.0 * eps,
            "repair drifted {moved:.3e} from the input, above the 10·ε budget {:.0e}",
            10.0 * eps
        );
        assert!(report.constraints_preserved, "repair reports constraint preservation");
        for pd in &report.pair_distances {
            assert!(
                pd.sup <= 10.0 * eps && pd.w1n.is_finite(),
                "pair {:?} reports sup {:.3e}, w1n {:.3e}",
                pd.charts,
                pd.sup,
                pd.w1n
            );
        }
    }

    #[test]
    fn repair_handles_small_nonabelian_defects() {
        let grid = BaseGrid::torus2(48).expect("grid builds");
        let cover = Arc::new(Cover::torus_blocks(grid, 2, 8).expect("cover builds"));
        let eps = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let noisy = Cocycle::from_fn(cover, GroupId::Su2, |_, _, _| {
            let mut draw = || rng.random_range(-eps..eps);
            su2_from_coords(draw(), draw(), draw()).exp()
        })
        .expect("noisy cocycle builds");
        let (repaired, report) = repair_cocycle(&noisy).expect("small perturbation repairs");
        assert!(
            report.post_residual <= 1e-12,
            "repaired SU(2) residual {:.3e} is not exact",
            report.post_residual
        );
        let moved = noisy.distance_sup(&repaired).expect("same cover shape");
        assert!(moved <= 10.0 * eps, "SU(2) repair drifted {moved:.3e} from the input");
    }

    #[test]
    fn repair_rejects_covers_without_stage_margin() {
        let grid = BaseGrid::torus2(32).expect("grid builds");
        let cover = Arc::new(Cover::torus_blocks(grid, 2, 4).expect("cover builds"));
        let p = trivial_bundle(cover, GroupId::U1).expect("trivial bundle builds").cocycle;
        let err = repair_cocycle(&p)
            .expect_err("four charts need margin 8, the cover only has 4");
        assert!(
            matches!(err, Error::MarginExhausted { .. }),
            "expected MarginExhausted, got {err}"
        );
    }

    #[test]
    fn mollified_charge_cocycles_keep_their_winding_through_repair() {
        let grid = BaseGrid::sphere(32).expect("grid builds");
        let bundle = charge_sphere_bundle(grid.clone(), 4, 1).expect("charge bundle builds");
        let cover = bundle.cocycle.cover.clone();
        let eps = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy = Cocycle::from_fn(cover.clone(), GroupId::U1, |i, j, gc| {
            let phase: f64 = rng.random_range(-eps..eps);
            let jitter =
                GroupElement::from_components(GroupId::U1, &[Complex64::from_polar(1.0, phase)]);
            bundle.cocycle.value_at(i, j, gc).expect("overlap point").mul(&jitter).expect("u1")
        })
        .expect("noisy cocycle builds");

        let smooth_in = mollify_cocycle(&noisy, 2.0 * grid.spacing[0])
            .expect("noisy transitions mollify");

        let (repaired, report) = repair_cocycle(&smooth_in).expect("mollified cocycle repairs");
        assert!(report.post_residual <= 1e-12, "two-chart repair must stay exact");
        let moved = smooth_in.distance_sup(&repaired).expect("same cover shape");
        assert!(moved <= 1e-2, "repair drifted {moved:.3e} from the mollified input");

        let piece = &repaired.pair_fields(0, 1).expect("the caps overlap")[0];
        let rows = piece.domain.region.len[0];
        let cols = piece.domain.region.len[1];
        let loop_vals: Vec<GroupElement> =
            (0..cols).map(|x| piece.value(piece.domain.local_flat(&[rows / 2, x]))).collect();
        let w = winding_number(&loop_vals).expect("equatorial loop unwinds");
        assert_eq!(w, 1, "mollify → repair must preserve the unit winding of e^{{iφ}}");
    }

    #[test]
    fn smooth_connection_reproduces_forms_that_already_glue() {
        let torus = BaseGrid::torus2(32).expect("grid builds");
        let flux = flux_torus_bundle(torus, 4, 1).expect("flux bundle builds");
        let sphere = BaseGrid::sphere(16).expect("grid builds");
        let monopole = charge_sphere_bundle(sphere, 4, 1).expect("charge bundle builds");
        for b in [&flux, &monopole] {
            let pou = build_partition_of_unity(&b.cocycle.cover).expect("partition builds");
            let rough: Vec<FormField> = b.connection.locals().to_vec();
            let smoothed = smooth_connection_on_bundle(&b.cocycle, &rough, &pou)
                .expect("smoothing accepts the bundle's own forms");
            for j in 0..b.cocycle.cover.num_charts() {
                let gap = smoothed
                    .local(j)
                    .sub(b.connection.local(j))
                    .expect("same chart domain")
                    .pointwise_norm()
                    .into_iter()
                    .fold(0.0, f64::max);
                assert!(
                    gap <= 1e-12,
                    "already-glued input must telescope back to itself, chart {j} moved {gap:.3e}"
                );
            }
        }
    }

    #[test]
    fn smooth_connection_glues_exactly_for_abelian_inputs() {
        let grid = BaseGrid::sphere(16).expect("grid builds");
        let bundle = charge_sphere_bundle(grid, 4, 1).expect("charge bundle builds");
        let cover = bundle.cocycle.cover.clone();
        let pou = build_partition_of_unity(&cover).expect("partition builds");
        let rough: Vec<FormField> = cover
            .charts
            .iter()
            .enumerate()
            .map(|(l, chart)| {
                let dom = Domain::new(cover.grid.clone(), chart.support.clone())
                    .expect("chart support is a valid domain");
                FormField::from_fn(dom, GroupId::U1, 1, |gc, c| {
                    let theta = (gc[0] as f64 + 0.5) * PI / 16.0;
                    let phi = (gc[1] as f64 + 0.5) * PI / 16.0;
                    let s = match (l, c) {
                        (0, 0) => 0.4 * theta.sin() * phi.cos(),
                        (0, 1) => 0.3 * (2.0 * phi).sin(),
                        (1, 0) => -0.2 * theta.cos(),
                        _ => 0.5 * theta.sin() * (2.0 * phi).cos(),
                    };
                    AlgebraElement::from_components(GroupId::U1, &[Complex64::new(0.0, s)])
                })
            })
            .collect();
        let smoothed = smooth_connection_on_bundle(&bundle.cocycle, &rough, &pou)
            .expect("smoothing accepts rough abelian forms");
        let defect = gluing_residual(&bundle.cocycle, &smoothed).expect("residual evaluates");
        assert!(
            defect <= 1e-11,
            "abelian logs add exactly, yet the glued defect is {defect:.3e}"
        );
    }

    #[test]
    fn smooth_connection_commutes_with_constant_gauge_rotation() {
        let grid = BaseGrid::sphere(16).expect("grid builds");
        let cover = Arc::new(Cover::sphere_caps(grid, 4).expect("cover builds"));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random_smooth_gauge(cover.clone(), GroupId::Su2, 0.3, &mut rng)
            .expect("gauge builds");
        let p = trivial_bundle(cover.clone(), GroupId::Su2)
            .expect("trivial bundle builds")
            .cocycle
            .apply_gauge(&rho)
            .expect("gauged cocycle stays exact");
        let pou = build_partition_of_unity(&cover).expect("partition builds");
        let rough: Vec<FormField> = cover
            .charts
            .iter()
            .enumerate()
            .map(|(l, chart)| {
                let dom = Domain::new(cover.grid.clone(), chart.support.clone())
                    .expect("chart support is a valid domain");
                FormField::from_fn(dom, GroupId::Su2, 1, |gc, c| {
                    let theta = (gc[0] as f64 + 0.5) * PI / 16.0;
                    let phi = (gc[1] as f64 + 0.5) * PI / 16.0;
                    let a = 0.3 * theta.sin() * ((c + 1) as f64 * phi).cos();
                    let b = 0.2 * theta.cos() * (l as f64 + 1.0);
                    su2_from_coords(a, b, 0.1 * (theta + phi).sin())
                })
            })
            .collect();
        let base = smooth_connection_on_bundle(&p, &rough, &pou).expect("smoothing runs");

        let c = su2_from_coords(0.4, -0.2, 0.7).exp();
        let c_gauge = GaugeField::from_fn(cover.clone(), GroupId::Su2, |_, _| c.clone())
            .expect("constant gauge builds");
        let p_rot = p.apply_gauge(&c_gauge).expect("constant rotation stays exact");
        let rough_rot: Vec<FormField> = rough
            .iter()
            .map(|f| {
                let cf = GroupField::from_fn(f.domain.clone(), GroupId::Su2, |_| c.clone());
                f.adjoint_transform(&cf).expect("constant conjugation")
            })
            .collect();
        let rotated = smooth_connection_on_bundle(&p_rot, &rough_rot, &pou)
            .expect("smoothing runs on the rotated data");
        for j in 0..cover.num_charts() {
            let cf = GroupField::from_fn(base.local(j).domain.clone(), GroupId::Su2, |_| c.clone());
            let expected = base.local(j).adjoint_transform(&cf).expect("constant conjugation");
            let gap = rotated
                .local(j)
                .sub(&expected)
                .expect("same chart domain")
                .pointwise_norm()
                .into_iter()
                .fold(0.0, f64::max);
            assert!(
                gap <= 1e-12,
                "constant rotation must commute with smoothing, chart {j} differs by {gap:.3e}"
            );
        }
    }

    #[test]
    fn smooth_connection_gluing_defect_converges_at_second_order() {
        let mut defects = Vec::new();
        for &n in &[16usize, 32, 64] {
            let grid = BaseGrid::torus2(n).expect("grid builds");
            let cover = Arc::new(Cover::torus_blocks(grid.clone(), 2, 4).expect("cover builds"));
            let chart_gauge = move |chart: usize, gc: &[usize]| {
                let x = TAU * (gc[0] as f64 + 0.5) / n as f64;
                let y = TAU * (gc[1] as f64 + 0.5) / n as f64;
                let t = chart as f64;
                su2_from_coords(
                    0.30 * (x + 0.7 * t).sin() * y.cos(),
                    0.25 * (y - 0.4 * t).cos() + 0.1 * t,
                    0.20 * (x + y).sin() * (1.0 + 0.3 * t),
                )
                .exp()
            };
            let p = Cocycle::from_fn(cover.clone(), GroupId::Su2, |i, j, gc| {
                chart_gauge(i, gc).inverse().mul(&chart_gauge(j, gc)).expect("su2 product")
            })
            .expect("analytic cocycle builds");
            assert!(
                p.residual().expect("residual evaluates") <= 1e-12,
                "the pointwise quotient construction is exact"
            );
            let pou = build_partition_of_unity(&cover).expect("partition builds");
            let rough: Vec<FormField> = cover
                .charts
                .iter()
                .enumerate()
                .map(|(l, chart)| {
                    let dom = Domain::new(cover.grid.clone(), chart.support.clone())
                        .expect("chart support is a valid domain");
                    FormField::from_fn(dom, GroupId::Su2, 1, |gc, c| {
                        let x = TAU * (gc[0] as f64 + 0.5) / n as f64;
                        let y = TAU * (gc[1] as f64 + 0.5) / n as f64;
                        su2_from_coords(
                            0.4 * x.sin() * ((c + l + 1) as f64 * y).cos(),
                            0.3 * (x * (l as f64 + 1.5)).cos(),
                            0.2 * x.sin() * (y + c as f64).sin(),
                        )
                    })
                })
                .collect();
            let smoothed =
                smooth_connection_on_bundle(&p, &rough, &pou).expect("smoothing runs");
            defects.push(gluing_residual(&p, &smoothed).expect("residual evaluates"));
        }
        assert!(
            defects[0] > 1e-8,
            "the coarse defect should be visible, got {:.3e}; with fewer than three \
             overlapping charts it would cancel exactly",
            defects[0]
        );
        let order = (defects[1] / defects[2]).ln() / 2f64.ln();
        assert!(
            order >= 1.8,
            "gluing defect should shrink at second order, measured {order:.2} \
             from defects {defects:?}"
        );
    }
}
