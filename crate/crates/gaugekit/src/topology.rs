//! Topological classification of discrete bundles: exact lattice Chern
//! numbers, winding counts of circle maps, flatness verdicts, and the
//! Coulomb-gauge classification pipeline with its stabilization probe.
//!
//! The Chern extractor works on lattice holonomies rather than quadrature
//! of the curvature 2-form. Links transport between the owner frames of
//! neighbouring cells, every link appears exactly twice with opposite
//! orientation across the summed plaquette (and cap) faces, so the product
//! of all face holonomies is a positive real number and the accumulated
//! argument is an exact integer multiple of 2π up to rounding — no
//! quadrature bias can move the integer. A Riemann sum of the curvature is
//! kept as an independent cross-check.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundle::{
    charge_sphere_bundle, flux_torus_bundle, per_chart_curvature_lp, refine_bundle, ym_energy,
    Bundle, Cocycle, ConnectionForm,
};
use crate::coulomb::{abelian_coulomb, glue_coulomb, nonabelian_coulomb, CoulombResult};
use crate::elliptic::SmallnessProfile;
use crate::error::{Error, Result};
use crate::field::FormField;
use crate::grid::{BaseGrid, GridKind};
use crate::lie::{AlgebraElement, GroupElement, GroupId};
use crate::norms::equiintegrability_profile;
use crate::partition::build_partition_of_unity;

/// How far a dimensionless integral may sit from the nearest integer
/// before classification refuses to round it.
pub const INTEGRALITY_TOL: f64 = 1e-6;

/// Cap on cover refinements inside the classification pipeline.
const MAX_COVER_REFINES: usize = 4;

/// Convergence target of the per-chart abelian Coulomb solves.
const ABELIAN_CHART_TOL: f64 = 1e-8;

/// Convergence target of the per-chart nonabelian Coulomb descents.
const NONABELIAN_CHART_TOL: f64 = 1e-5;

/// Iteration budget of the per-chart nonabelian Coulomb descents.
const NONABELIAN_MAX_ITER: usize = 400;

/// Where a topology class came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassProvenance {
    /// Extracted from the glued Coulomb cocycle of the pipeline.
    CoulombPipeline,
    /// Extracted directly from the presented cocycle and connection.
    Direct,
}

/// The invariant payload of a topology class, by base and group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassKind {
    /// First Chern number of a circle bundle over a closed surface.
    ChernU1(i64),
    /// Circle bundle over the 4-torus: one flux integer per coordinate
    /// 2-cycle, in lexicographic axis-pair order, plus a flag recording
    /// whether the classifying cocycle is locally near-constant.
    TorusFluxes {
        fluxes: Vec<i64>,
        locally_constant: bool,
    },
    /// SU(2) bundle: only the flatness of the classifying cocycle is
    /// extracted, since every SU(2) bundle over these low-dimensional
    /// bases is topologically trivial and flatness is the computable
    /// content.
    FlatFlag(bool),
}

/// A computed topology class. Equality compares the group and the
/// invariant; the provenance is bookkeeping and does not participate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TopologyClass {
    /// Structure group of the classified bundle.
    pub group: GroupId,
    /// The invariant itself.
    pub kind: ClassKind,
    /// How the class was obtained.
    pub provenance: ClassProvenance,
}

impl PartialEq for TopologyClass {
    fn eq(&self, other: &Self) -> bool {
        self.group == other.group && self.kind == other.kind
    }
}

impl Eq for TopologyClass {}

/// Outcome of the flatness decision.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FlatnessVerdict {
    /// Whether the pair was certified topologically flat.
    pub is_topologically_flat: bool,
    /// The Yang–Mills energy that was compared against the margin.
    pub ym_value: f64,
    /// The calibrated energy margin δ used for the decision.
    pub delta_used: f64,
}

/// One row of a stabilization experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilizationStep {
    /// Yang–Mills energy of the term.
    pub ym_value: f64,
    /// Equiintegrability profile of the curvature density over chart
    /// cores: pairs of (volume budget, largest curvature mass inside any
    /// region of that volume).
    pub equiintegrability: Vec<(f64, f64)>,
    /// The extracted class, when the pipeline succeeded.
    pub class: Option<TopologyClass>,
    /// The pipeline failure, when it did not.
    pub pipeline_error: Option<String>,
    /// Sup distance between this term's Coulomb cocycle and the previous
    /// term's, when both exist on the same refined cover.
    pub cocycle_shift: Option<f64>,
}

/// Outcome of running the classification pipeline along a sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilizationReport {
    /// Per-term rows, in sequence order.
    pub steps: Vec<StabilizationStep>,
    /// Whether the class exists and stops changing through the final term.
    pub stabilized: bool,
    /// First index from which the class exists and never changes again.
    pub stable_from: Option<usize>,
}

/// Winding number of a cyclic sequence of U(1) samples, by exact phase
/// unwrapping. Successive samples must stay within phase distance π/2 of
/// each other so the branch of every increment is unambiguous; the count
/// includes the closing step from the last sample back to the first.
pub fn winding_number(samples: &[GroupElement]) -> Result<i64> {
    if samples.len() < 2 {
        return Err(Error::DomainMismatch {
            reason: format!("winding needs at least 2 cyclic samples, got {}", samples.len()),
        });
    }
    let mut total = 0.0;
    for (idx, sample) in samples.iter().enumerate() {
        let next = &samples[(idx + 1) % samples.len()];
        let (here, there) = match (sample, next) {
            (GroupElement::U1(a), GroupElement::U1(b)) => (*a, *b),
            _ => {
                return Err(Error::GroupMismatch { expected: GroupId::U1, got: GroupId::Su2 });
            }
        };
        let jump = (there * here.conj()).arg();
        if jump.abs() > FRAC_PI_2 {
            return Err(Error::UnresolvableJump { index: idx, jump });
        }
        total += jump;
    }
    Ok((total / TAU).round() as i64)
}

/// U(1) algebra component of a chart-local 1-form at a global cell,
/// addressed through the chart's own support window.
fn u1_component(field: &FormField, gc: &[usize], axis: usize) -> Result<Complex64> {
    let grid = &field.domain.grid;
    let lc = field.domain.region.local_of(grid, gc).ok_or_else(|| Error::DomainMismatch {
        reason: format!("lattice link endpoint {gc:?} escapes its owner chart"),
    })?;
    let p = field.domain.local_flat(&lc);
    match field.value(p, axis) {
        AlgebraElement::U1(z) => Ok(z),
        AlgebraElement::Su2(_) => {
            Err(Error::GroupMismatch { expected: GroupId::U1, got: GroupId::Su2 })
        }
    }
}

/// Lattice link from a cell to its +axis neighbour: trapezoidal transport
/// of the owner chart's potential, composed with the frame jump into the
/// neighbour's owner chart evaluated at the arrival cell.
fn u1_link(p: &Cocycle, a: &ConnectionForm, from: &[usize], axis: usize) -> Result<Complex64> {
    let grid = &p.cover.grid;
    let mut to = from.to_vec();
    to[axis] = (to[axis] + 1) % grid.dims[axis];
    let ci = p.cover.owner(from);
    let cj = p.cover.owner(&to);
    let here = u1_component(a.local(ci), from, axis)?;
    let there = u1_component(a.local(ci), &to, axis)?;
    let transport = (0.5 * grid.spacing[axis] * (here + there)).exp();
    if ci == cj {
        return Ok(transport);
    }
    let jump = match p.value_at(cj, ci, &to)? {
        GroupElement::U1(z) => z,
        GroupElement::Su2(_) => {
            return Err(Error::GroupMismatch { expected: GroupId::U1, got: GroupId::Su2 });
        }
    };
    Ok(transport * jump)
}

/// Holonomy argument of one oriented plaquette face spanned by two axes.
fn plaquette_arg(
    p: &Cocycle,
    a: &ConnectionForm,
    site: &[usize],
    ax0: usize,
    ax1: usize,
) -> Result<f64> {
    let dims = &p.cover.grid.dims;
    let mut s10 = site.to_vec();
    s10[ax0] = (s10[ax0] + 1) % dims[ax0];
    let mut s01 = site.to_vec();
    s01[ax1] = (s01[ax1] + 1) % dims[ax1];
    let w = u1_link(p, a, site, ax0)?
        * u1_link(p, a, &s10, ax1)?
        * u1_link(p, a, &s01, ax0)?.conj()
        * u1_link(p, a, site, ax1)?.conj();
    Ok(w.arg())
}

/// Rounds an accumulated holonomy argument to a Chern integer, reporting
/// the pre-rounding deviation and refusing when it exceeds the tolerance.
fn quantize(total_arg: f64, tol: f64) -> Result<(i64, f64)> {
    let value = total_arg / TAU;
    let nearest = value.round();
    let deviation = (value - nearest).abs();
    if deviation > tol {
        return Err(Error::NonIntegral { value, deviation, tol });
    }
    Ok((nearest as i64, deviation))
}

/// Accumulated plaquette argument over one full 2-cycle slice of a torus:
/// both axes must wrap, the remaining coordinates are frozen at `base`.
fn torus_slice_arg(
    p: &Cocycle,
    a: &ConnectionForm,
    axes: (usize, usize),
    base: &[usize],
) -> Result<f64> {
    let grid = &p.cover.grid;
    for axis in [axes.0, axes.1] {
        if !grid.wraps(axis) {
            return Err(Error::DomainMismatch {
                reason: format!("lattice flux slice axis {axis} does not wrap"),
            });
        }
    }
    let mut total = 0.0;
    let mut site = base.to_vec();
    for i in 0..grid.dims[axes.0] {
        site[axes.0] = i;
        for j in 0..grid.dims[axes.1] {
            site[axes.1] = j;
            let arg = plaquette_arg(p, a, &site, axes.0, axes.1)?;
            if arg.abs() >= FRAC_PI_2 {
                return Err(Error::UnresolvableJump {
                    index: i * grid.dims[axes.1] + j,
                    jump: arg,
                });
            }
            total += arg;
        }
    }
    Ok(total)
}

/// Accumulated face argument over the sphere: all interior plaquettes plus
/// the two polar cap faces that close the surface. The cap holonomies are
/// full circles of azimuthal links; the southern one enters with reversed
/// orientation.
fn sphere_total_arg(p: &Cocycle, a: &ConnectionForm) -> Result<f64> {
    let grid = &p.cover.grid;
    let (n_theta, n_phi) = (grid.dims[0], grid.dims[1]);
    let mut total = 0.0;
    for i in 0..n_theta - 1 {
        for j in 0..n_phi {
            let arg = plaquette_arg(p, a, &[i, j], 0, 1)?;
            if arg.abs() >= FRAC_PI_2 {
                return Err(Error::UnresolvableJump { index: i * n_phi + j, jump: arg });
            }
            total += arg;
        }
    }
    let mut cap_north = Complex64::new(1.0, 0.0);
    let mut cap_south = Complex64::new(1.0, 0.0);
    for j in 0..n_phi {
        cap_north *= u1_link(p, a, &[0, j], 1)?;
        cap_south *= u1_link(p, a, &[n_theta - 1, j], 1)?;
    }
    for (name, arg) in [("north", cap_north.arg()), ("south", -cap_south.arg())] {
        if arg.abs() >= FRAC_PI_2 {
            return Err(Error::DomainMismatch {
                reason: format!(
                    "{name} polar cap holonomy argument {arg:.3} is too large to resolve; \
                     refine the grid"
                ),
            });
        }
        total += arg;
    }
    Ok(total)
}

fn check_pair(p: &Cocycle, a: &ConnectionForm) -> Result<()> {
    if !Arc::ptr_eq(&p.cover, &a.cover) {
        return Err(Error::CoverMismatch {
            reason: "cocycle and connection live on different covers".into(),
        });
    }
    if p.group != a.group {
        return Err(Error::GroupMismatch { expected: p.group, got: a.group });
    }
    Ok(())
}

/// First Chern number of a U(1) pair over a closed 2-dimensional base,
/// with the pre-rounding deviation of the underlying lattice integral.
/// The integer is assembled from plaquette holonomies, so it is exactly
/// quantized whenever every face argument resolves; a deviation beyond
/// the integrality tolerance therefore signals broken gluing data rather
/// than quadrature error.
pub fn chern_number_u1(p: &Cocycle, a: &ConnectionForm) -> Result<(i64, f64)> {
    check_pair(p, a)?;
    if p.group != GroupId::U1 {
        return Err(Error::GroupMismatch { expected: GroupId::U1, got: p.group });
    }
    let total = match p.cover.grid.kind {
        GridKind::Torus2 => torus_slice_arg(p, a, (0, 1), &[0, 0])?,
        GridKind::Sphere2 => sphere_total_arg(p, a)?,
        GridKind::Torus4 => {
            return Err(Error::InvalidGrid {
                reason: "a 4-torus pair carries one flux per coordinate 2-cycle; \
                         use torus4_flux_classes"
                    .into(),
            });
        }
    };
    quantize(total, INTEGRALITY_TOL)
}

/// Flux integers of a U(1) pair over the 4-torus, one per coordinate
/// 2-cycle in lexicographic axis-pair order, with the largest pre-rounding
/// deviation seen. Every slice passes through the mid-coordinates of the
/// two frozen axes; any other slice of the same 2-cycle carries the same
/// integer.
pub fn torus4_flux_classes(p: &Cocycle, a: &ConnectionForm) -> Result<(Vec<i64>, f64)> {
    check_pair(p, a)?;
    if p.group != GroupId::U1 {
        return Err(Error::GroupMismatch { expected: GroupId::U1, got: p.group });
    }
    let grid = &p.cover.grid;
    if grid.kind != GridKind::Torus4 {
        return Err(Error::InvalidGrid { reason: "per-2-cycle fluxes need a 4-torus grid".into() });
    }
    let mut fluxes = Vec::with_capacity(6);
    let mut worst = 0.0f64;
    for ax0 in 0..4 {
        for ax1 in ax0 + 1..4 {
            let mut base: Vec<usize> = grid.dims.iter().map(|d| d / 2).collect();
            base[ax0] = 0;
            base[ax1] = 0;
            let (flux, deviation) =
                quantize(torus_slice_arg(p, a, (ax0, ax1), &base)?, INTEGRALITY_TOL)?;
            fluxes.push(flux);
            worst = worst.max(deviation);
        }
    }
    Ok((fluxes, worst))
}

/// Riemann-sum flux of a U(1) curvature through a partition of unity over
/// a 2-dimensional base, normalized by −2π so a charge-k pair integrates
/// to ≈ k. This is the quadrature cross-check for the exact lattice
/// extractors: it carries the quadrature bias of the underlying stencils,
/// so only the lattice integers are rounded.
pub fn curvature_flux_integral(a: &ConnectionForm) -> Result<f64> {
    if a.group != GroupId::U1 {
        return Err(Error::GroupMismatch { expected: GroupId::U1, got: a.group });
    }
    let grid = &a.cover.grid;
    if grid.ndim() != 2 {
        return Err(Error::InvalidGrid {
            reason: "the flux cross-check integrates a 2-form over a 2-dimensional base".into(),
        });
    }
    let curvature = a.curvature()?;
    let pou = build_partition_of_unity(&a.cover)?;
    let area: f64 = grid.spacing.iter().product();
    let mut total = Complex64::new(0.0, 0.0);
    for (local, psi) in curvature.locals.iter().zip(&pou.weights) {
        for point in 0..local.domain.num_points() {
            let value = match local.value(point, 0) {
                AlgebraElement::U1(z) => z,
                AlgebraElement::Su2(_) => {
                    return Err(Error::GroupMismatch {
                        expected: GroupId::U1,
                        got: GroupId::Su2,
                    });
                }
            };
            total += psi.data[point] * area * value;
        }
    }
    Ok(-(total / TAU).im)
}

/// Sup of the discrete logarithmic derivative of a cocycle: the largest
/// group distance between neighbouring transition values, divided by the
/// grid spacing of the axis. Small values certify a locally near-constant
/// cocycle.
pub fn cocycle_derivative_sup(h: &Cocycle) -> Result<f64> {
    let grid = &h.cover.grid;
    let mut worst = 0.0f64;
    for (i, j) in h.pairs() {
        for piece in h.pair_fields(i, j).into_iter().flatten() {
            let dom = &piece.domain;
            let nd = dom.ndim();
            let mut lc = vec![0usize; nd];
            for point in 0..dom.num_points() {
                dom.local_coords(point, &mut lc);
                for axis in 0..nd {
                    let mut next = lc.clone();
                    if lc[axis] + 1 < dom.region.len[axis] {
                        next[axis] += 1;
                    } else if dom.wraps_axis(axis) {
                        next[axis] = 0;
                    } else {
                        continue;
                    }
                    let q = dom.local_flat(&next);
                    let dist = piece.value(point).distance(&piece.value(q))?;
                    worst = worst.max(dist / grid.spacing[axis]);
                }
            }
        }
    }
    Ok(worst)
}

/// Whether a cocycle's discrete derivative certifies local near-constancy
/// at the scale of the grid: sup ‖dh‖ ≤ 10·h.
fn is_locally_constant(h: &Cocycle) -> Result<bool> {
    let spacing = h.cover.grid.spacing.iter().cloned().fold(0.0f64, f64::max);
    Ok(cocycle_derivative_sup(h)? <= 10.0 * spacing)
}

/// Largest per-chart core curvature norm in the critical integrability.
fn worst_core_curvature(a: &ConnectionForm) -> Result<f64> {
    let n = a.cover.grid.ndim() as f64;
    let half = (n / 2.0).max(1.0);
    let sizes = per_chart_curvature_lp(&a.curvature()?, half)?;
    Ok(sizes.into_iter().fold(0.0f64, f64::max))
}

/// Runs the classification pipeline on a presented pair: refine the cover
/// until the curvature over every chart core is inside the smallness
/// regime, fix the Coulomb gauge chart by chart, glue, and read the
/// topology class off the glued Coulomb cocycle. Returns the Coulomb
/// cocycle, the glued connection, and the class. Failure to reach
/// smallness within the refinement budget surfaces as margin exhaustion —
/// the concentration signal.
pub fn coulomb_bundle(
    p: &Cocycle,
    a: &ConnectionForm,
    profile: &SmallnessProfile,
) -> Result<(Cocycle, ConnectionForm, TopologyClass)> {
    check_pair(p, a)?;
    let eps = profile.eps_coulomb.min(profile.eps_elliptic / (4.0 * profile.c_coulomb));
    let mut bundle = Bundle { cocycle: p.clone(), connection: a.clone() };
    let mut depth = 0;
    loop {
        let worst = worst_core_curvature(&bundle.connection)?;
        if worst <= eps {
            break;
        }
        if depth == MAX_COVER_REFINES {
            return Err(Error::MarginExhausted {
                reason: format!(
                    "per-chart core curvature {worst:.3e} still exceeds the smallness \
                     threshold {eps:.3e} after {MAX_COVER_REFINES} cover refinements; \
                     the curvature is concentrating below the resolvable scale"
                ),
            });
        }
        let (fine, parent) = bundle.cocycle.cover.refine()?;
        bundle = refine_bundle(&bundle, Arc::new(fine), &parent)?;
        depth += 1;
    }
    let results: Vec<CoulombResult> = bundle
        .connection
        .locals()
        .iter()
        .map(|local| match p.group {
            GroupId::U1 => abelian_coulomb(local, ABELIAN_CHART_TOL),
            GroupId::Su2 => {
                nonabelian_coulomb(local, 1.0, NONABELIAN_CHART_TOL, NONABELIAN_MAX_ITER)
            }
        })
        .collect::<Result<_>>()?;
    let (h, glued) = glue_coulomb(&bundle.cocycle, &bundle.connection, &results, eps)?;
    let class = extract_class(&h, &glued)?;
    Ok((h, glued, class))
}

/// Reads the topology class off a classified pair.
fn class_kind(p: &Cocycle, a: &ConnectionForm) -> Result<ClassKind> {
    Ok(match (p.group, p.cover.grid.kind) {
        (GroupId::U1, GridKind::Torus2) | (GroupId::U1, GridKind::Sphere2) => {
            ClassKind::ChernU1(chern_number_u1(p, a)?.0)
        }
        (GroupId::U1, GridKind::Torus4) => {
            let (fluxes, _) = torus4_flux_classes(p, a)?;
            ClassKind::TorusFluxes { fluxes, locally_constant: is_locally_constant(p)? }
        }
        (GroupId::Su2, _) => ClassKind::FlatFlag(is_locally_constant(p)?),
    })
}

fn extract_class(h: &Cocycle, glued: &ConnectionForm) -> Result<TopologyClass> {
    Ok(TopologyClass {
        group: h.group,
        kind: class_kind(h, glued)?,
        provenance: ClassProvenance::CoulombPipeline,
    })
}

/// Direct classification of a presented pair, without the Coulomb
/// pipeline: the same extractors applied to the raw cocycle.
pub fn direct_class(p: &Cocycle, a: &ConnectionForm) -> Result<TopologyClass> {
    check_pair(p, a)?;
    Ok(TopologyClass {
        group: p.group,
        kind: class_kind(p, a)?,
        provenance: ClassProvenance::Direct,
    })
}

/// Energy margin below which a pair is a flatness candidate: half the
/// Yang–Mills energy of the least energetic nontrivial reference bundle
/// on the same grid, in the critical integrability.
pub fn calibrate_flatness_delta(grid: &Arc<BaseGrid>) -> Result<f64> {
    let margin = (grid.dims[0] / 8).max(4);
    let reference = match grid.kind {
        GridKind::Sphere2 => charge_sphere_bundle(grid.clone(), margin, 1)?,
        GridKind::Torus2 => flux_torus_bundle(grid.clone(), margin, 1)?,
        GridKind::Torus4 => {
            return Err(Error::InvalidGrid {
                reason: "no nontrivial reference bundle is built in on the 4-torus, \
                         so no flatness margin can be calibrated there"
                    .into(),
            });
        }
    };
    let n = grid.ndim() as f64;
    Ok(ym_energy(&reference.connection, (n / 2.0).max(1.0))? / 2.0)
}

/// Decides topological flatness of a pair: compares the Yang–Mills energy
/// against the calibrated margin, and for sub-margin pairs certifies the
/// verdict by running the pipeline and checking that the glued Coulomb
/// cocycle is locally near-constant. A sub-margin pair whose Coulomb
/// cocycle still oscillates is reported as a smallness violation rather
/// than silently classified.
pub fn flatness_detect(
    p: &Cocycle,
    a: &ConnectionForm,
    profile: &SmallnessProfile,
) -> Result<FlatnessVerdict> {
    check_pair(p, a)?;
    let n = p.cover.grid.ndim() as f64;
    let ym_value = ym_energy(a, (n / 2.0).max(1.0))?;
    let delta_used = calibrate_flatness_delta(&p.cover.grid)?;
    if ym_value > delta_used {
        return Ok(FlatnessVerdict { is_topologically_flat: false, ym_value, delta_used });
    }
    let (h, _, _) = coulomb_bundle(p, a, profile)?;
    let spacing = h.cover.grid.spacing.iter().cloned().fold(0.0f64, f64::max);
    let sup = cocycle_derivative_sup(&h)?;
    let limit = 10.0 * spacing;
    if sup > limit {
        return Err(Error::SmallnessViolated {
            what: "Coulomb cocycle derivative of a sub-margin pair".into(),
            value: sup,
            threshold: limit,
        });
    }
    Ok(FlatnessVerdict { is_topologically_flat: true, ym_value, delta_used })
}

/// Equiintegrability profile of the curvature density of one pair over
/// chart cores, at volume budgets given as fractions of the total volume.
fn curvature_equiintegrability(a: &ConnectionForm, fractions: &[f64]) -> Result<Vec<(f64, f64)>> {
    let cover = &a.cover;
    let grid = &cover.grid;
    let n = grid.ndim() as f64;
    let half = (n / 2.0).max(1.0);
    let curvature = a.curvature()?;
    let mut values = Vec::new();
    let mut weights = Vec::new();
    let mut total_volume = 0.0;
    for (chart, local) in cover.charts.iter().zip(curvature.locals.iter()) {
        let dom = &local.domain;
        let norms = local.pointwise_norm();
        for gc in chart.core.iter_global(grid) {
            let lc = dom.region.local_of(grid, &gc).ok_or_else(|| Error::DomainMismatch {
                reason: "chart core escapes its own support".into(),
            })?;
            let point = dom.local_flat(&lc);
            let weight = dom.cell_weight_local(&lc);
            values.push(norms[point].powf(half));
            weights.push(weight);
            total_volume += weight;
        }
    }
    let deltas: Vec<f64> = fractions.iter().map(|f| f * total_volume).collect();
    let masses = equiintegrability_profile(&values, &weights, &deltas)?;
    Ok(deltas.into_iter().zip(masses).collect())
}

/// Runs the classification pipeline along a sequence of pairs and reports
/// per-term energies, equiintegrability profiles, classes (or pipeline
/// failures), and the drift between successive Coulomb cocycles. The
/// sequence stabilizes when the class exists and stops changing through
/// the final term; concentration shows up as margin exhaustion in the
/// failing rows.
pub fn stabilization_experiment(
    seq: &[Bundle],
    fractions: &[f64],
    profile: &SmallnessProfile,
) -> Result<StabilizationReport> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = seq[0].cocycle.cover.grid.ndim() as f64;
    let half = (n / 2.0).max(1.0);
    let mut steps = Vec::with_capacity(seq.len());
    let mut previous: Option<Cocycle> = None;
    for bundle in seq {
        let ym_value = ym_energy(&bundle.connection, half)?;
        let equiintegrability = curvature_equiintegrability(&bundle.connection, fractions)?;
        match coulomb_bundle(&bundle.cocycle, &bundle.connection, profile) {
            Ok((h, _, class)) => {
                let cocycle_shift = previous.as_ref().and_then(|prev| h.distance_sup(prev).ok());
                previous = Some(h);
                steps.push(StabilizationStep {
                    ym_value,
                    equiintegrability,
                    class: Some(class),
                    pipeline_error: None,
                    cocycle_shift,
                });
            }
            Err(err) => {
                previous = None;
                steps.push(StabilizationStep {
                    ym_value,
                    equiintegrability,
                    class: None,
                    pipeline_error: Some(err.to_string()),
                    cocycle_shift: None,
                });
            }
        }
    }
    let stable_from = match steps.last().and_then(|step| step.class.as_ref()) {
        None => None,
        Some(target) => {
            let mut from = steps.len() - 1;
            while from > 0 && steps[from - 1].class.as_ref() == Some(target) {
                from -= 1;
            }
            Some(from)
        }
    };
    Ok(StabilizationReport { steps, stabilized: stable_from.is_some(), stable_from })
}

/// Quintic ramp: 0 below the window, 1 above it, C² across it.
fn quintic_ramp(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// A spread-out sequence on the charge-k sphere bundle: the reference
/// connection perturbed by one global smooth 1-form with geometrically
/// shrinking amplitude. Every term presents the same bundle, curvature
/// stays uniformly spread, and the classes stabilize immediately.
pub fn non_concentrating_family(
    grid: &Arc<BaseGrid>,
    margin: usize,
    k: i64,
    terms: usize,
) -> Result<Vec<Bundle>> {
    if grid.kind != GridKind::Sphere2 {
        return Err(Error::InvalidGrid {
            reason: "the spread-out reference family lives on the sphere".into(),
        });
    }
    if terms == 0 {
        return Err(Error::EmptySequence);
    }
    let base = charge_sphere_bundle(grid.clone(), margin, k)?;
    let cover = base.cocycle.cover.clone();
    let (dt, dp) = (grid.spacing[0], grid.spacing[1]);
    let mut family = Vec::with_capacity(terms);
    for term in 0..terms {
        let amplitude = 0.03 / (1 << term) as f64;
        let mut locals = Vec::with_capacity(cover.num_charts());
        for local in base.connection.locals() {
            let perturbation =
                FormField::from_fn(local.domain.clone(), GroupId::U1, 1, |gc, comp| {
                    let theta = (gc[0] as f64 + 0.5) * dt;
                    let phi = (gc[1] as f64 + 0.5) * dp;
                    let shape = theta.sin().powi(2);
                    let value = match comp {
                        0 => amplitude * shape * (2.0 * phi).sin(),
                        _ => amplitude * shape * phi.cos(),
                    };
                    AlgebraElement::U1(Complex64::new(0.0, value))
                });
            locals.push(local.add(&perturbation)?);
        }
        family.push(Bundle {
            cocycle: base.cocycle.clone(),
            connection: ConnectionForm::from_locals(cover.clone(), GroupId::U1, locals)?,
        });
    }
    Ok(family)
}

/// A concentrating sequence on the charge-1 sphere bundle: the full unit
/// of flux is squeezed into a shrinking geodesic annulus around an
/// off-axis centre in the northern chart, while the gluing data stays
/// exactly that of the reference bundle. The azimuthal angle form about
/// the centre carries the flux; a latitude ramp morphs it into a constant
/// azimuthal form before the southern support begins, so the pair glues
/// through the reference cocycle to rounding. Classification must
/// eventually exhaust its refinement budget on these terms: no cover
/// localizes a fixed amount of curvature mass concentrated near a point.
pub fn concentrating_family(
    grid: &Arc<BaseGrid>,
    margin: usize,
    terms: usize,
) -> Result<Vec<Bundle>> {
    if grid.kind != GridKind::Sphere2 {
        return Err(Error::InvalidGrid {
            reason: "the concentrating family lives on the sphere".into(),
        });
    }
    if terms == 0 {
        return Err(Error::EmptySequence);
    }
    let base = charge_sphere_bundle(grid.clone(), margin, 1)?;
    let cover = base.cocycle.cover.clone();
    let (dt, dp) = (grid.spacing[0], grid.spacing[1]);
    let support_bottom = (cover.charts[1].support.start[0] as f64) * dt;
    let theta_center = 0.18 * PI;
    let radius_zero = 0.10 * PI;
    let morph_lo = theta_center + radius_zero + dt;
    let morph_hi = support_bottom - dt;
    if morph_hi <= morph_lo + dt {
        return Err(Error::InvalidGrid {
            reason: format!(
                "no room for the concentration morph below the overlap: the ramp would \
                 span [{morph_lo:.3}, {morph_hi:.3}]; enlarge the grid or shrink the margin"
            ),
        });
    }
    let center_phi = PI;
    let zeta_center = Complex64::from_polar((theta_center / 2.0).tan(), center_phi);
    let mut family = Vec::with_capacity(terms);
    for term in 0..terms {
        let radius = (radius_zero / (1 << term) as f64).max(2.5 * dt);
        let north = FormField::from_fn(
            base.connection.local(0).domain.clone(),
            GroupId::U1,
            1,
            |gc, comp| {
                let theta = (gc[0] as f64 + 0.5) * dt;
                let phi = (gc[1] as f64 + 0.5) * dp;
                let s = quintic_ramp((theta - morph_lo) / (morph_hi - morph_lo));
                let mut value = if comp == 1 { Complex64::new(0.0, -s) } else { Complex64::ZERO };
                if s < 1.0 {
                    let zeta = Complex64::from_polar((theta / 2.0).tan(), phi);
                    let offset = zeta - zeta_center;
                    let geodesic = (theta.cos() * theta_center.cos()
                        + theta.sin() * theta_center.sin() * (phi - center_phi).cos())
                    .clamp(-1.0, 1.0)
                    .acos();
                    let rho = quintic_ramp((geodesic - 0.5 * radius) / (0.5 * radius));
                    let dzeta = if comp == 0 {
                        Complex64::from_polar(0.5 / (theta / 2.0).cos().powi(2), phi)
                    } else {
                        Complex64::new(0.0, 1.0) * zeta
                    };
                    let dchi = (dzeta / offset).im;
                    value += Complex64::new(0.0, -(1.0 - s) * rho * dchi / TAU);
                }
                AlgebraElement::U1(value)
            },
        );
        let south = FormField::zeros(base.connection.local(1).domain.clone(), GroupId::U1, 1);
        family.push(Bundle {
            cocycle: base.cocycle.clone(),
            connection: ConnectionForm::from_locals(
                cover.clone(),
                GroupId::U1,
                vec![north, south],
            )?,
        });
    }
    Ok(family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{gluing_residual, random_smooth_gauge, trivial_bundle};
    use crate::grid::Cover;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_profile(eps_coulomb: f64) -> SmallnessProfile {
        SmallnessProfile { eps_elliptic: 4.0 * eps_coulomb, eps_coulomb, c_coulomb: 1.0 }
    }

    fn gauged(bundle: &Bundle, rho: &crate::bundle::GaugeField) -> Bundle {
        Bundle {
            cocycle: bundle.cocycle.apply_gauge(rho).expect("gauged cocycle"),
            connection: bundle.connection.apply_gauge(rho).expect("gauged connection"),
        }
    }

    #[test]
    fn winding_counts_exact_integers_and_rejects_wild_jumps() {
        let constant: Vec<GroupElement> =
            (0..16).map(|_| GroupElement::U1(Complex64::new(0.6, 0.8))).collect();
        assert_eq!(
            winding_number(&constant).expect("constant loop winds"),
            0,
            "a constant loop must have winding zero"
        );
        for k in -3i64..=3 {
            let samples: Vec<GroupElement> = (0..64)
                .map(|j| {
                    GroupElement::U1(Complex64::from_polar(1.0, k as f64 * TAU * j as f64 / 64.0))
                })
                .collect();
            assert_eq!(
                winding_number(&samples).expect("smooth loop winds"),
                k,
                "a loop of phase e^(ik·phi) must wind exactly {k} times"
            );
        }
        let two: Vec<GroupElement> = (0..64)
            .map(|j| GroupElement::U1(Complex64::from_polar(1.0, 2.0 * TAU * j as f64 / 64.0)))
            .collect();
        let minus: Vec<GroupElement> = (0..64)
            .map(|j| GroupElement::U1(Complex64::from_polar(1.0, -TAU * j as f64 / 64.0)))
            .collect();
        let product: Vec<GroupElement> = two
            .iter()
            .zip(&minus)
            .map(|(a, b)| match (a, b) {
                (GroupElement::U1(x), GroupElement::U1(y)) => GroupElement::U1(x * y),
                _ => unreachable!(),
            })
            .collect();
        let w2 = winding_number(&two).expect("winding of the double loop");
        let wm = winding_number(&minus).expect("winding of the inverse loop");
        assert_eq!(
            winding_number(&product).expect("winding of the product"),
            w2 + wm,
            "winding must be additive under pointwise products"
        );
        let inverse: Vec<GroupElement> = two
            .iter()
            .map(|g| match g {
                GroupElement::U1(z) => GroupElement::U1(z.conj()),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(
            winding_number(&inverse).expect("winding of the conjugate"),
            -w2,
            "winding must negate under pointwise inversion"
        );
        let wild: Vec<GroupElement> = (0..8)
            .map(|j| GroupElement::U1(Complex64::from_polar(1.0, 2.0 * j as f64)))
            .collect();
        assert!(
            matches!(winding_number(&wild), Err(Error::UnresolvableJump { .. })),
            "phase jumps beyond a quarter turn must be refused, not silently unwrapped"
        );
    }

    #[test]
    fn trivial_pairs_have_zero_chern_number() {
        let torus = trivial_bundle(
            Arc::new(
                Cover::torus_blocks(BaseGrid::torus2(24).expect("grid"), 2, 4).expect("cover"),
            ),
            GroupId::U1,
        )
        .expect("trivial torus bundle");
        let sphere = trivial_bundle(
            Arc::new(Cover::sphere_caps(BaseGrid::sphere(16).expect("grid"), 4).expect("cover")),
            GroupId::U1,
        )
        .expect("trivial sphere bundle");
        for bundle in [torus, sphere] {
            let (chern, deviation) =
                chern_number_u1(&bundle.cocycle, &bundle.connection).expect("chern of trivial");
            assert_eq!(chern, 0, "a trivial pair must have Chern number zero");
            assert!(
                deviation <= 1e-12,
                "trivial holonomies must be exactly closed, deviation {deviation:.3e}"
            );
        }
    }

    #[test]
    fn flux_torus_bundles_recover_their_charge() {
        let grid = BaseGrid::torus2(32).expect("grid");
        for k in -2i64..=2 {
            let bundle = flux_torus_bundle(grid.clone(), 4, k).expect("flux bundle");
            let (chern, deviation) =
                chern_number_u1(&bundle.cocycle, &bundle.connection).expect("lattice chern");
            assert_eq!(chern, k, "flux-{k} torus bundle must classify as {k}");
            assert!(
                deviation <= 1e-9,
                "lattice deviation must be at rounding scale, got {deviation:.3e} at k = {k}"
            );
            let riemann =
                curvature_flux_integral(&bundle.connection).expect("quadrature cross-check");
            assert!(
                (riemann - k as f64).abs() <= 1e-9,
                "linear flux potentials make the Riemann flux exact, got {riemann} for k = {k}"
            );
        }
    }

    #[test]
    fn charge_sphere_bundles_recover_their_charge() {
        let grid = BaseGrid::sphere(32).expect("grid");
        for k in -2i64..=2 {
            let bundle = charge_sphere_bundle(grid.clone(), 4, k).expect("charge bundle");
            let (chern, deviation) =
                chern_number_u1(&bundle.cocycle, &bundle.connection).expect("lattice chern");
            assert_eq!(chern, k, "charge-{k} sphere bundle must classify as {k}");
            assert!(
                deviation <= 1e-9,
                "lattice deviation must be at rounding scale, got {deviation:.3e} at k = {k}"
            );
            let pieces = bundle.cocycle.pair_fields(0, 1).expect("equatorial overlap");
            let piece = &pieces[0];
            let rows = piece.domain.region.len[0];
            let cols = piece.domain.region.len[1];
            let samples: Vec<GroupElement> = (0..cols)
                .map(|j| piece.value(piece.domain.local_flat(&[rows / 2, j])))
                .collect();
            assert_eq!(
                winding_number(&samples).expect("equatorial winding"),
                k,
                "the equatorial transition winding is the independent reading of the charge"
            );
        }
    }

    #[test]
    fn chern_number_is_stable_under_grid_halving_and_cover_refinement() {
        for n in [16usize, 32] {
            let grid = BaseGrid::sphere(n).expect("grid");
            let bundle = charge_sphere_bundle(grid, 4, 2).expect("charge bundle");
            let (chern, _) =
                chern_number_u1(&bundle.cocycle, &bundle.connection).expect("lattice chern");
            assert_eq!(chern, 2, "the charge must be grid-independent, failed at n = {n}");
        }
        let grid = BaseGrid::torus2(32).expect("grid");
        let bundle = flux_torus_bundle(grid, 4, -2).expect("flux bundle");
        let (fine, parent) = bundle.cocycle.cover.refine().expect("refinable cover");
        let refined = refine_bundle(&bundle, Arc::new(fine), &parent).expect("refined bundle");
        assert!(
            gluing_residual(&refined.cocycle, &refined.connection).expect("refined gluing")
                <= 1e-12,
            "refinement must preserve exact gluing"
        );
        let (chern, _) =
            chern_number_u1(&refined.cocycle, &refined.connection).expect("refined chern");
        assert_eq!(chern, -2, "the charge must survive cover refinement on the same grid");
    }

    #[test]
    fn chern_number_is_gauge_invariant() {
        let grid = BaseGrid::sphere(16).expect("grid");
        let bundle = charge_sphere_bundle(grid, 4, 1).expect("charge bundle");
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..5 {
            let rho = random_smooth_gauge(bundle.cocycle.cover.clone(), GroupId::U1, 0.3, &mut rng)
                .expect("random gauge");
            let moved = gauged(&bundle, &rho);
            let (chern, deviation) =
                chern_number_u1(&moved.cocycle, &moved.connection).expect("gauged chern");
            assert_eq!(chern, 1, "gauge transformations must not move the class, trial {trial}");
            assert!(
                deviation <= 1e-9,
                "gauge transformations must not blur the lattice integral, got {deviation:.3e}"
            );
        }
    }

    #[test]
    fn hand_built_four_torus_pair_reports_one_flux_per_two_cycle() {
        let grid = BaseGrid::torus4(16).expect("grid");
        let n = grid.dims[0];
        let runs =
            vec![vec![(0usize, 8usize), (8, 8)], vec![(0, 16)], vec![(0, 16)], vec![(0, 16)]];
        let cover = Arc::new(Cover::from_axis_runs(grid.clone(), runs, 3).expect("cover"));
        let k = 1i64;
        let kf = k as f64;
        let starts: Vec<usize> = cover.charts.iter().map(|c| c.support.start[0]).collect();
        let lift =
            |chart: usize, gx: usize| (starts[chart] + (gx + n - starts[chart]) % n) as f64;
        let cocycle = Cocycle::from_fn(cover.clone(), GroupId::U1, |i, j, gc| {
            let delta = (lift(j, gc[0]) - lift(i, gc[0])) / n as f64;
            let y = (gc[1] as f64 + 0.5) / n as f64;
            GroupElement::U1(Complex64::from_polar(1.0, -TAU * kf * delta * y))
        })
        .expect("cocycle");
        let connection = ConnectionForm::from_fn(cover, GroupId::U1, |chart, gc, comp| {
            if comp != 1 {
                return AlgebraElement::U1(Complex64::ZERO);
            }
            let x = (lift(chart, gc[0]) + 0.5) / n as f64;
            AlgebraElement::U1(Complex64::new(0.0, -TAU * kf * x))
        })
        .expect("connection");
        assert!(
            cocycle.residual().expect("residual") <= 1e-12,
            "the hand-built 4-torus cocycle must satisfy the cocycle identity exactly"
        );
        assert!(
            gluing_residual(&cocycle, &connection).expect("gluing") <= 1e-12,
            "the hand-built 4-torus pair must glue exactly"
        );
        let (fluxes, worst) = torus4_flux_classes(&cocycle, &connection).expect("fluxes");
        assert_eq!(
            fluxes,
            vec![k, 0, 0, 0, 0, 0],
            "only the (0,1) coordinate 2-cycle carries flux"
        );
        assert!(worst <= 1e-9, "slice deviations must sit at rounding scale, got {worst:.3e}");
        let class = direct_class(&cocycle, &connection).expect("direct class");
        assert_eq!(
            class.kind,
            ClassKind::TorusFluxes { fluxes: vec![k, 0, 0, 0, 0, 0], locally_constant: false },
            "the direct 4-torus class must carry the slice fluxes"
        );
    }

    #[test]
    fn pipeline_classifies_trivial_and_charged_bundles() {
        let grid = BaseGrid::sphere(16).expect("grid");
        let cover = Arc::new(Cover::sphere_caps(grid.clone(), 4).expect("cover"));
        let trivial = trivial_bundle(cover, GroupId::U1).expect("trivial bundle");
        let profile = test_profile(1.0);
        let (_, _, class) =
            coulomb_bundle(&trivial.cocycle, &trivial.connection, &profile).expect("pipeline");
        assert_eq!(class.kind, ClassKind::ChernU1(0), "a trivial pair must classify as zero");
        assert_eq!(class.provenance, ClassProvenance::CoulombPipeline);

        let charged = charge_sphere_bundle(grid, 4, 1).expect("charge bundle");
        let (h, glued, class) =
            coulomb_bundle(&charged.cocycle, &charged.connection, &profile).expect("pipeline");
        assert_eq!(class.kind, ClassKind::ChernU1(1), "the charge-1 bundle must classify as one");
        assert!(
            h.residual().expect("residual") <= 1e-10,
            "the glued Coulomb cocycle must still satisfy the cocycle identity"
        );
        assert!(
            gluing_residual(&h, &glued).expect("gluing") <= 0.5,
            "the glued pair must stay compatible at stencil-restriction scale: the \
             chart-support derivative of the Coulomb potential and the overlap-piece \
             derivative inside the gluing defect differ by O(h) at piece edges"
        );
    }

    #[test]
    fn pipeline_assigns_one_class_to_different_connections_on_the_same_bundle() {
        let grid = BaseGrid::sphere(16).expect("grid");
        let bundle = charge_sphere_bundle(grid.clone(), 4, 1).expect("charge bundle");
        let cover = bundle.cocycle.cover.clone();
        let (dt, dp) = (grid.spacing[0], grid.spacing[1]);
        let mut locals = Vec::new();
        for local in bundle.connection.locals() {
            let bump = FormField::from_fn(local.domain.clone(), GroupId::U1, 1, |gc, comp| {
                let theta = (gc[0] as f64 + 0.5) * dt;
                let phi = (gc[1] as f64 + 0.5) * dp;
                let shape = theta.sin().powi(2);
                let value = match comp {
                    0 => 0.05 * shape * phi.sin(),
                    _ => 0.05 * shape * (3.0 * phi).cos(),
                };
                AlgebraElement::U1(Complex64::new(0.0, value))
            });
            locals.push(local.add(&bump).expect("perturbed local"));
        }
        let other = ConnectionForm::from_locals(cover, GroupId::U1, locals).expect("connection");
        assert!(
            gluing_residual(&bundle.cocycle, &other).expect("gluing") <= 1e-12,
            "adding one global form to all locals must preserve compatibility exactly"
        );
        let profile = test_profile(1.0);
        let (_, _, first) =
            coulomb_bundle(&bundle.cocycle, &bundle.connection, &profile).expect("pipeline");
        let (_, _, second) =
            coulomb_bundle(&bundle.cocycle, &other, &profile).expect("pipeline on perturbed");
        assert_eq!(first, second, "two connections on the same bundle must classify identically");
        assert_eq!(first.kind, ClassKind::ChernU1(1), "and the class is the bundle's charge");
    }

    #[test]
    fn pipeline_certifies_flat_su2_cocycles() {
        let grid = BaseGrid::torus2(16).expect("grid");
        let cover = Arc::new(Cover::torus_blocks(grid, 2, 4).expect("cover"));
        let trivial = trivial_bundle(cover.clone(), GroupId::Su2).expect("trivial bundle");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_smooth_gauge(cover, GroupId::Su2, 0.15, &mut rng).expect("random gauge");
        let moved = gauged(&trivial, &rho);
        let profile = test_profile(1.0);
        let (h, _, class) =
            coulomb_bundle(&moved.cocycle, &moved.connection, &profile).expect("pipeline");
        assert_eq!(
            class.kind,
            ClassKind::FlatFlag(true),
            "a gauged trivial SU(2) pair must come back flat, cocycle derivative {:?}",
            cocycle_derivative_sup(&h)
        );
    }

    #[test]
    fn flatness_verdicts_separate_flat_from_charged() {
        let grid = BaseGrid::sphere(48).expect("grid");
        let cover = Arc::new(Cover::sphere_caps(grid.clone(), 6).expect("cover"));
        let profile = test_profile(1.0);
        let trivial = trivial_bundle(cover, GroupId::U1).expect("trivial bundle");
        let verdict = flatness_detect(&trivial.cocycle, &trivial.connection, &profile)
            .expect("flat verdict");
        assert!(verdict.is_topologically_flat, "the trivial pair must be certified flat");
        assert!(
            verdict.ym_value <= 1e-10,
            "the trivial pair has no energy, got {:.3e}",
            verdict.ym_value
        );
        assert!(verdict.delta_used > 0.0, "the margin must be calibrated positive");

        let charged = charge_sphere_bundle(grid, 6, 1).expect("charge bundle");
        let verdict = flatness_detect(&charged.cocycle, &charged.connection, &profile)
            .expect("charged verdict");
        assert!(!verdict.is_topologically_flat, "the charge-1 bundle must not be certified flat");
        assert!(
            verdict.ym_value >= 2.0 * verdict.delta_used * (1.0 - 1e-9),
            "the margin is half the reference energy, so the reference sits at twice the margin"
        );
    }

    #[test]
    fn spread_out_family_stabilizes_with_bounded_concentration() {
        let grid = BaseGrid::sphere(32).expect("grid");
        let family = non_concentrating_family(&grid, 4, 1, 5).expect("family");
        for bundle in &family {
            assert!(
                gluing_residual(&bundle.cocycle, &bundle.connection).expect("gluing") <= 1e-12,
                "every term of the spread-out family must glue exactly"
            );
        }
        let profile = test_profile(0.6);
        let report = stabilization_experiment(&family, &[0.01, 0.1, 0.5], &profile)
            .expect("stabilization report");
        assert!(report.stabilized, "the spread-out family must stabilize");
        assert_eq!(report.stable_from, Some(0), "every term already carries the limiting class");
        for (index, step) in report.steps.iter().enumerate() {
            let class = step.class.as_ref().unwrap_or_else(|| {
                panic!("term {index} must classify, got pipeline error {:?}", step.pipeline_error)
            });
            assert_eq!(class.kind, ClassKind::ChernU1(1), "the class is the charge at every term");
            let (_, smallest_mass) = step.equiintegrability[0];
            assert!(
                smallest_mass <= 0.35 * step.ym_value.max(1.0),
                "no small region may hold a macroscopic share of curvature mass, \
                 term {index} puts {smallest_mass:.3} in 1% of the volume"
            );
        }
        for step in &report.steps[1..] {
            let shift = step.cocycle_shift.expect("successive Coulomb cocycles comparable");
            assert!(
                shift <= 0.75,
                "successive Coulomb cocycles of a converging family stay close, got {shift:.3}"
            );
        }
    }

    #[test]
    fn concentrating_family_trips_the_bubbling_flag() {
        let grid = BaseGrid::sphere(32).expect("grid");
        let family = concentrating_family(&grid, 4, 4).expect("family");
        for (term, bundle) in family.iter().enumerate() {
            assert!(
                gluing_residual(&bundle.cocycle, &bundle.connection).expect("gluing") <= 1e-10,
                "term {term} of the concentrating family must glue through the reference cocycle"
            );
            let (chern, _) =
                chern_number_u1(&bundle.cocycle, &bundle.connection).expect("lattice chern");
            assert_eq!(chern, 1, "every term still presents the charge-1 bundle");
        }
        let profile = test_profile(0.1);
        let report = stabilization_experiment(&family, &[0.01, 0.1, 0.5], &profile)
            .expect("stabilization report");
        let last = report.steps.last().expect("nonempty report");
        let message = last.pipeline_error.as_deref().unwrap_or_else(|| {
            panic!("the most concentrated term must fail the pipeline, got {:?}", last.class)
        });
        assert!(
            message.contains("refinement") || message.contains("margin"),
            "the failure must be margin exhaustion, got: {message}"
        );
        assert!(!report.stabilized, "a concentrating family must not be reported as stabilized");
    }

    #[test]
    fn direct_and_pipeline_classes_agree_on_the_reference_bundles() {
        let grid = BaseGrid::torus2(24).expect("grid");
        let bundle = flux_torus_bundle(grid, 4, -1).expect("flux bundle");
        let direct = direct_class(&bundle.cocycle, &bundle.connection).expect("direct class");
        assert_eq!(direct.kind, ClassKind::ChernU1(-1));
        assert_eq!(direct.provenance, ClassProvenance::Direct);
        let profile = test_profile(2.0);
        let (_, _, piped) =
            coulomb_bundle(&bundle.cocycle, &bundle.connection, &profile).expect("pipeline");
        assert_eq!(
            direct, piped,
            "equality of classes ignores provenance and compares the invariant"
        );
        assert_ne!(direct.provenance, piped.provenance, "but the provenances differ");
    }
}
