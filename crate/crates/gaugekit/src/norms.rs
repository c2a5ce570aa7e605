//! Weighted Lᵖ norms, Lorentz quasinorms and equiintegrability profiles.
//!
//! Everything here operates on a sampled density: a slice of pointwise
//! values |f|(p) together with the cell measures w(p). Lattice fields are
//! *step functions* in disguise, so the Lorentz quasinorm
//!
//! ```text
//!   ‖f‖_{(s,θ)} = ( ∫₀^∞ t^{θ−1} λ_f(t)^{θ/s} dt )^{1/θ},
//!   λ_f(t) = measure{ |f| > t },
//! ```
//!
//! has a closed form: sorting the values descending with cumulative
//! measures V_i, the integral telescopes into
//! Σ_i V_i^{θ/s} (v_i^θ − v_{i+1}^θ)/θ — evaluated exactly rather than by
//! quadrature. Two consequences are pinned by the tests: an indicator of a
//! set E has quasinorm (1/θ)^{1/θ}|E|^{1/s}, and (s,θ) = (p,p) reproduces
//! (1/p)^{1/p}·‖f‖_{Lᵖ} identically (Abel summation).

use crate::error::{Error, Result};
use crate::field::FormField;

fn check_weights(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.len() != weights.len() {
        return Err(Error::DomainMismatch {
            reason: format!("{} values against {} weights", values.len(), weights.len()),
        });
    }
    Ok(())
}

/// Weighted Lᵖ norm of sampled values, p ∈ [1, ∞] (`f64::INFINITY` gives
/// the essential sup, which for samples is the max).
pub fn lp_norm(values: &[f64], weights: &[f64], p: f64) -> Result<f64> {
    check_weights(values, weights)?;
    if p.is_nan() || p < 1.0 {
        return Err(Error::BadExponent { what: format!("Lᵖ exponent p = {p} outside [1, ∞]") });
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let mut sum = 0.0;
    for (v, w) in values.iter().zip(weights) {
        sum += w * v.abs().powf(p);
    }
    Ok(sum.powf(1.0 / p))
}

/// Descending |values| with their weights, zeros dropped.
fn descending_layers(values: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut layers: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(v, _)| v.abs() > 0.0)
        .map(|(v, w)| (v.abs(), *w))
        .collect();
    layers.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite values"));
    layers
}

/// Lorentz quasinorm ‖f‖_{(s,θ)} with s ∈ (1, ∞), θ ∈ [1, ∞), evaluated
/// exactly on the step distribution of the samples.
pub fn lorentz_quasinorm(values: &[f64], weights: &[f64], s: f64, theta: f64) -> Result<f64> {
    check_weights(values, weights)?;
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::BadExponent { what: format!("Lorentz exponent s = {s} outside (1, ∞)") });
    }
    if !(theta >= 1.0) || !theta.is_finite() {
        return Err(Error::BadExponent {
            what: format!("Lorentz exponent θ = {theta} outside [1, ∞)"),
        });
    }
    let layers = descending_layers(values, weights);
    if layers.is_empty() {
        return Ok(0.0);
    }
    let mut cumulative = 0.0;
    let mut integral = 0.0;
    for (i, &(v, w)) in layers.iter().enumerate() {
        cumulative += w;
        let next = if i + 1 < layers.len() { layers[i + 1].0 } else { 0.0 };
        integral += cumulative.powf(theta / s) * (v.powf(theta) - next.powf(theta)) / theta;
    }
    Ok(integral.powf(1.0 / theta))
}

/// Largest mass ∫_E |f| over measurable sets of measure ≤ δ, for each
/// requested δ: greedy fill by descending value with an exact fractional
/// final cell. The profile is nondecreasing and saturates at ‖f‖_{L¹}.
pub fn equiintegrability_profile(
    values: &[f64],
    weights: &[f64],
    deltas: &[f64],
) -> Result<Vec<f64>> {
    check_weights(values, weights)?;
    if values.is_empty() {
        return Err(Error::EmptySequence);
    }
    let layers = descending_layers(values, weights);
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        if delta < 0.0 {
            return Err(Error::BadExponent { what: format!("profile argument δ = {delta} < 0") });
        }
        let mut room = delta;
        let mut mass = 0.0;
        for &(v, w) in &layers {
            if room <= 0.0 {
                break;
            }
            let take = w.min(room);
            mass += take * v;
            room -= take;
        }
        out.push(mass);
    }
    Ok(out)
}

/// Weighted Lᵖ norm of a form field's pointwise metric norm.
pub fn lp_norm_of_form(f: &FormField, p: f64) -> Result<f64> {
    let values = f.pointwise_norm();
    let weights = cell_weights(f);
    lp_norm(&values, &weights, p)
}

/// Lorentz quasinorm of a form field's pointwise metric norm.
pub fn lorentz_of_form(f: &FormField, s: f64, theta: f64) -> Result<f64> {
    let values = f.pointwise_norm();
    let weights = cell_weights(f);
    lorentz_quasinorm(&values, &weights, s, theta)
}

fn cell_weights(f: &FormField) -> Vec<f64> {
    let nd = f.domain.ndim();
    let mut lc = vec![0usize; nd];
    (0..f.domain.num_points())
        .map(|p| {
            f.domain.local_coords(p, &mut lc);
            f.domain.cell_weight_local(&lc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rnd_stream(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed | 1;
        move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    #[test]
    fn lp_matches_direct_sums() {
        let values = [3.0, -1.0, 0.5, 2.0];
        let weights = [0.25; 4];
        let l1 = lp_norm(&values, &weights, 1.0).unwrap();
        assert!((l1 - 0.25 * 6.5).abs() < 1e-15);
        let l2 = lp_norm(&values, &weights, 2.0).unwrap();
        assert!((l2 - (0.25f64 * (9.0 + 1.0 + 0.25 + 4.0)).sqrt()).abs() < 1e-15);
        let li = lp_norm(&values, &weights, f64::INFINITY).unwrap();
        assert_eq!(li, 3.0);
    }

    #[test]
    fn lorentz_indicator_closed_form() {
        // f = 1_E with |E| assembled from uneven cells.
        let values = [1.0, 1.0, 1.0, 0.0, 0.0];
        let weights = [0.1, 0.25, 0.05, 0.3, 0.3];
        let measure: f64 = 0.4;
        for (s, theta) in [(2.0, 1.0), (2.0, 2.0), (1.5, 3.0), (4.0, 1.0)] {
            let got = lorentz_quasinorm(&values, &weights, s, theta).unwrap();
            let want = (1.0 / theta).powf(1.0 / theta) * measure.powf(1.0 / s);
            assert!(
                (got - want).abs() < 1e-14,
                "indicator quasinorm ({s},{theta}): {got} vs {want}"
            );
        }
    }

    #[test]
    fn lorentz_pp_is_scaled_lp() {
        let mut rnd = rnd_stream(0xC0FFEE);
        for _ in 0..100 {
            let m = 1 + (rnd() * 40.0) as usize;
            let values: Vec<f64> = (0..m).map(|_| rnd() * 3.0 - 1.0).collect();
            let weights: Vec<f64> = (0..m).map(|_| 0.01 + rnd()).collect();
            for p in [1.5, 2.0, 3.5] {
                let got = lorentz_quasinorm(&values, &weights, p, p).unwrap();
                let want = (1.0f64 / p).powf(1.0 / p) * lp_norm(&values, &weights, p).unwrap();
                let scale = want.abs().max(1e-30);
                assert!(
                    ((got - want) / scale).abs() < 1e-12,
                    "(p,p) Lorentz must equal (1/p)^(1/p)·Lᵖ: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn lorentz_is_homogeneous_and_rearrangement_invariant() {
        let mut rnd = rnd_stream(0xBEEF);
        let values: Vec<f64> = (0..25).map(|_| rnd()).collect();
        let weights: Vec<f64> = (0..25).map(|_| 0.02 + rnd() * 0.1).collect();
        let base = lorentz_quasinorm(&values, &weights, 1.7, 2.3).unwrap();
        let scaled: Vec<f64> = values.iter().map(|v| -2.5 * v).collect();
        let got = lorentz_quasinorm(&scaled, &weights, 1.7, 2.3).unwrap();
        assert!((got - 2.5 * base).abs() < 1e-12 * base.max(1.0));
        let mut perm: Vec<usize> = (0..25).collect();
        perm.reverse();
        let pv: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
        let pw: Vec<f64> = perm.iter().map(|&i| weights[i]).collect();
        let rearranged = lorentz_quasinorm(&pv, &pw, 1.7, 2.3).unwrap();
        assert!((rearranged - base).abs() < 1e-12 * base.max(1.0));
    }

    #[test]
    fn bad_exponents_are_rejected() {
        let v = [1.0];
        let w = [1.0];
        assert!(matches!(lp_norm(&v, &w, 0.5), Err(Error::BadExponent { .. })));
        assert!(matches!(lorentz_quasinorm(&v, &w, 1.0, 2.0), Err(Error::BadExponent { .. })));
        assert!(matches!(
            lorentz_quasinorm(&v, &w, 2.0, 0.99),
            Err(Error::BadExponent { .. })
        ));
        assert!(matches!(
            lorentz_quasinorm(&v, &w, f64::INFINITY, 2.0),
            Err(Error::BadExponent { .. })
        ));
    }

    #[test]
    fn profile_of_constant_e_is_linear() {
        let values = [1.0; 8];
        let weights = [0.125; 8];
        let deltas = [0.0, 0.1, 0.4, 0.77, 1.0, 5.0];
        let got = equiintegrability_profile(&values, &weights, &deltas).unwrap();
        for (d, g) in deltas.iter().zip(&got) {
            let want = d.min(1.0);
            assert!((g - want).abs() < 1e-14, "profile({d}) = {g}, want {want}");
        }
    }

    #[test]
    fn profile_saturates_at_l1_and_tracks_concentration() {
        let values = [10.0, 1.0, 1.0, 1.0];
        let weights = [0.01, 0.33, 0.33, 0.33];
        let l1 = lp_norm(&values, &weights, 1.0).unwrap();
        let got = equiintegrability_profile(&values, &weights, &[0.005, 0.01, 0.02, 2.0]).unwrap();
        assert!((got[0] - 0.05).abs() < 1e-14, "half the spike cell");
        assert!((got[1] - 0.1).abs() < 1e-14, "exactly the spike cell");
        assert!((got[2] - 0.11).abs() < 1e-14, "spike plus background");
        assert!((got[3] - l1).abs() < 1e-14, "profile must saturate at the L¹ mass");
        for pair in got.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-15, "profile must be nondecreasing");
        }
        assert!(matches!(
            equiintegrability_profile(&[], &[], &[0.1]),
            Err(Error::EmptySequence)
        ));
    }
}
