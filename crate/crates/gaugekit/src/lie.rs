//! Pointwise Lie-group kernel for U(1) and SU(2).
//!
//! Group elements are stored in their defining representations: a unit
//! complex number for U(1) and a 2×2 special-unitary complex matrix for
//! SU(2). Algebra elements are purely imaginary scalars resp. traceless
//! anti-Hermitian matrices. The bi-invariant metric is normalized so that
//!
//! ```text
//!   ‖iθ‖ = |θ|            (u(1))
//!   ‖ξ‖  = ‖ξ‖_F / √2     (su(2))
//! ```
//!
//! which gives both groups injectivity radius π: exp is a diffeomorphism on
//! {‖ξ‖ < π} and hits the cut locus (g = −1 resp. g = −I) exactly at π.
//!
//! exp has closed forms — e^{iθ} for U(1) and, for ξ ∈ su(2) with ω = ‖ξ‖,
//!
//! ```text
//!   exp(ξ) = cos(ω)·I + (sin(ω)/ω)·ξ        (ξ² = −ω²·I)
//! ```
//!
//! log inverts this via ω = atan2(‖(g−g†)/2‖, Re tr(g)/2) and errors at the
//! cut locus. Both are exercised against an independent power-series oracle
//! in the tests.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Which structure group a value belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub enum GroupId {
    U1,
    Su2,
}

impl GroupId {
    /// Number of complex components used to store one element.
    pub fn components(self) -> usize {
        match self {
            GroupId::U1 => 1,
            GroupId::Su2 => 4,
        }
    }

    /// Injectivity radius of exp under the normalized bi-invariant metric.
    pub fn injectivity_radius(self) -> f64 {
        PI
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupId::U1 => "U1",
            GroupId::Su2 => "SU2",
        }
    }
}

/// 2×2 complex matrix, row-major.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Mat2 {
    pub e: [Complex64; 4],
}

impl Mat2 {
    pub const fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Mat2 { e: [a, b, c, d] }
    }

    pub fn zero() -> Self {
        Mat2 { e: [Complex64::ZERO; 4] }
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        Mat2::new(one, Complex64::ZERO, Complex64::ZERO, one)
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let [a, b, c, d] = self.e;
        let [e, f, g, h] = o.e;
        Mat2::new(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        Mat2 {
            e: [
                self.e[0] + o.e[0],
                self.e[1] + o.e[1],
                self.e[2] + o.e[2],
                self.e[3] + o.e[3],
            ],
        }
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        Mat2 {
            e: [
                self.e[0] - o.e[0],
                self.e[1] - o.e[1],
                self.e[2] - o.e[2],
                self.e[3] - o.e[3],
            ],
        }
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2 {
            e: [self.e[0] * s, self.e[1] * s, self.e[2] * s, self.e[3] * s],
        }
    }

    pub fn scale_c(&self, s: Complex64) -> Mat2 {
        Mat2 {
            e: [self.e[0] * s, self.e[1] * s, self.e[2] * s, self.e[3] * s],
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Mat2 {
        Mat2::new(
            self.e[0].conj(),
            self.e[2].conj(),
            self.e[1].conj(),
            self.e[3].conj(),
        )
    }

    pub fn trace(&self) -> Complex64 {
        self.e[0] + self.e[3]
    }

    pub fn det(&self) -> Complex64 {
        self.e[0] * self.e[3] - self.e[1] * self.e[2]
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d.norm() < 1e-300 {
            return None;
        }
        let inv = d.inv();
        Some(Mat2::new(
            self.e[3] * inv,
            -self.e[1] * inv,
            -self.e[2] * inv,
            self.e[0] * inv,
        ))
    }

    pub fn frobenius(&self) -> f64 {
        self.e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value, via the closed-form eigenvalues of m†m.
    pub fn spectral_norm(&self) -> f64 {
        let h = self.adjoint().mul(self);
        // h is Hermitian PSD: eigenvalues (t ± sqrt(t² − 4Δ))/2.
        let t = h.trace().re;
        let d = h.det().re;
        let disc = (t * t - 4.0 * d).max(0.0).sqrt();
        (0.5 * (t + disc)).max(0.0).sqrt()
    }
}

/// A group element of U(1) or SU(2).
#[derive(Clone, Copy, Debug)]
pub enum GroupElement {
    U1(Complex64),
    Su2(Mat2),
}

/// An algebra element: iθ for u(1), a traceless anti-Hermitian matrix for su(2).
#[derive(Clone, Copy, Debug)]
pub enum AlgebraElement {
    U1(Complex64),
    Su2(Mat2),
}

fn mismatch(expected: GroupId, got: GroupId) -> Error {
    Error::GroupMismatch { expected, got }
}

impl GroupElement {
    pub fn identity(group: GroupId) -> Self {
        match group {
            GroupId::U1 => GroupElement::U1(Complex64::new(1.0, 0.0)),
            GroupId::Su2 => GroupElement::Su2(Mat2::identity()),
        }
    }

    pub fn group_id(&self) -> GroupId {
        match self {
            GroupElement::U1(_) => GroupId::U1,
            GroupElement::Su2(_) => GroupId::Su2,
        }
    }

    pub fn mul(&self, rhs: &GroupElement) -> Result<GroupElement> {
        match (self, rhs) {
            (GroupElement::U1(a), GroupElement::U1(b)) => Ok(GroupElement::U1(a * b)),
            (GroupElement::Su2(a), GroupElement::Su2(b)) => Ok(GroupElement::Su2(a.mul(b))),
            _ => Err(mismatch(self.group_id(), rhs.group_id())),
        }
    }

    /// Group inverse. Unitarity makes this the conjugate (transpose).
    pub fn inverse(&self) -> GroupElement {
        match self {
            GroupElement::U1(a) => GroupElement::U1(a.conj()),
            GroupElement::Su2(m) => GroupElement::Su2(m.adjoint()),
        }
    }

    /// Geodesic distance for the normalized bi-invariant metric; total on the
    /// whole group (saturates at π across the cut locus).
    pub fn distance(&self, other: &GroupElement) -> Result<f64> {
        match (self, other) {
            (GroupElement::U1(a), GroupElement::U1(b)) => {
                let r = a.conj() * b;
                Ok(r.im.atan2(r.re).abs())
            }
            (GroupElement::Su2(a), GroupElement::Su2(b)) => {
                let r = a.adjoint().mul(b);
                let c = 0.5 * r.trace().re;
                let ah = r.sub(&r.adjoint()).scale(0.5);
                let s = ah.frobenius() / std::f64::consts::SQRT_2;
                Ok(s.atan2(c))
            }
            _ => Err(mismatch(self.group_id(), other.group_id())),
        }
    }

    /// Distance to the identity.
    pub fn angle(&self) -> f64 {
        self.distance(&GroupElement::identity(self.group_id()))
            .expect("same group")
    }

    /// Logarithm into the algebra; errors outside the given neighborhood and
    /// at the cut locus, where no distinguished preimage exists.
    pub fn log(&self, nbhd: &IdentityNeighborhood) -> Result<AlgebraElement> {
        if nbhd.group != self.group_id() {
            return Err(mismatch(nbhd.group, self.group_id()));
        }
        match self {
            GroupElement::U1(a) => {
                let theta = a.im.atan2(a.re);
                if theta.abs() > nbhd.radius {
                    return Err(Error::OutsideInjectivityDomain {
                        angle: theta.abs(),
                        radius: nbhd.radius,
                    });
                }
                Ok(AlgebraElement::U1(Complex64::new(0.0, theta)))
            }
            GroupElement::Su2(m) => {
                let c = (0.5 * m.trace().re).clamp(-1.0, 1.0);
                let ah = m.sub(&m.adjoint()).scale(0.5);
                let s = ah.frobenius() / std::f64::consts::SQRT_2;
                let omega = s.atan2(c);
                if omega > nbhd.radius {
                    return Err(Error::OutsideInjectivityDomain {
                        angle: omega,
                        radius: nbhd.radius,
                    });
                }
                if s < 1e-12 {
                    if c < 0.0 {
                        // g ≈ −I: the cut locus.
                        return Err(Error::OutsideInjectivityDomain {
                            angle: PI,
                            radius: nbhd.radius,
                        });
                    }
                    // ah already equals ξ up to O(ω³); the factor ω/sin(ω)
                    // is 1 + ω²/6 + …
                    return Ok(AlgebraElement::Su2(ah.scale(1.0 + omega * omega / 6.0)));
                }
                Ok(AlgebraElement::Su2(ah.scale(omega / s)))
            }
        }
    }

    /// Conjugation h ↦ g⁻¹ h g.
    pub fn conjugate_by(&self, g: &GroupElement) -> Result<GroupElement> {
        g.inverse().mul(self)?.mul(g)
    }

    /// Raw complex components (1 for U(1), 4 row-major for SU(2)).
    pub fn components(&self) -> Vec<Complex64> {
        match self {
            GroupElement::U1(a) => vec![*a],
            GroupElement::Su2(m) => m.e.to_vec(),
        }
    }

    pub fn from_components(group: GroupId, c: &[Complex64]) -> GroupElement {
        match group {
            GroupId::U1 => GroupElement::U1(c[0]),
            GroupId::Su2 => GroupElement::Su2(Mat2 {
                e: [c[0], c[1], c[2], c[3]],
            }),
        }
    }

    /// Nearest group element to a raw matrix (normalization for U(1), the
    /// special-unitary polar factor for SU(2), computed by Newton iteration
    /// X ← (X + X⁻†)/2 followed by a determinant phase correction).
    /// Errors when the input is further than 0.5 from the group in operator
    /// norm.
    pub fn project(group: GroupId, c: &[Complex64]) -> Result<GroupElement> {
        match group {
            GroupId::U1 => {
                let z = c[0];
                let r = z.norm();
                if (r - 1.0).abs() > 0.5 || r == 0.0 {
                    return Err(Error::TooFarFromGroup { dist: (r - 1.0).abs() });
                }
                Ok(GroupElement::U1(z / r))
            }
            GroupId::Su2 => {
                let m = Mat2 { e: [c[0], c[1], c[2], c[3]] };
                if m.det().norm() < 1e-8 {
                    return Err(Error::TooFarFromGroup { dist: f64::INFINITY });
                }
                let mut x = m;
                for _ in 0..32 {
                    let inv_adj = match x.adjoint().inverse() {
                        Some(v) => v,
                        None => return Err(Error::TooFarFromGroup { dist: f64::INFINITY }),
                    };
                    let next = x.add(&inv_adj).scale(0.5);
                    let delta = next.sub(&x).frobenius();
                    x = next;
                    if delta < 1e-15 {
                        break;
                    }
                }
                // x is now unitary; rotate det(x) = e^{iδ} back to 1 along the
                // shorter phase arc.
                let d = x.det();
                let half = Complex64::from_polar(1.0, -0.5 * d.im.atan2(d.re));
                let u = x.scale_c(half);
                let dist = m.sub(&u).spectral_norm();
                if dist > 0.5 {
                    return Err(Error::TooFarFromGroup { dist });
                }
                Ok(GroupElement::Su2(u))
            }
        }
    }
}

impl AlgebraElement {
    pub fn zero(group: GroupId) -> Self {
        match group {
            GroupId::U1 => AlgebraElement::U1(Complex64::ZERO),
            GroupId::Su2 => AlgebraElement::Su2(Mat2::zero()),
        }
    }

    pub fn group_id(&self) -> GroupId {
        match self {
            AlgebraElement::U1(_) => GroupId::U1,
            AlgebraElement::Su2(_) => GroupId::Su2,
        }
    }

    pub fn add(&self, o: &AlgebraElement) -> Result<AlgebraElement> {
        match (self, o) {
            (AlgebraElement::U1(a), AlgebraElement::U1(b)) => Ok(AlgebraElement::U1(a + b)),
            (AlgebraElement::Su2(a), AlgebraElement::Su2(b)) => Ok(AlgebraElement::Su2(a.add(b))),
            _ => Err(mismatch(self.group_id(), o.group_id())),
        }
    }

    pub fn sub(&self, o: &AlgebraElement) -> Result<AlgebraElement> {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> AlgebraElement {
        match self {
            AlgebraElement::U1(a) => AlgebraElement::U1(a * s),
            AlgebraElement::Su2(m) => AlgebraElement::Su2(m.scale(s)),
        }
    }

    /// Lie bracket [ξ, η]. Identically zero for u(1).
    pub fn bracket(&self, o: &AlgebraElement) -> Result<AlgebraElement> {
        match (self, o) {
            (AlgebraElement::U1(_), AlgebraElement::U1(_)) => {
                Ok(AlgebraElement::U1(Complex64::ZERO))
            }
            (AlgebraElement::Su2(a), AlgebraElement::Su2(b)) => {
                Ok(AlgebraElement::Su2(a.mul(b).sub(&b.mul(a))))
            }
            _ => Err(mismatch(self.group_id(), o.group_id())),
        }
    }

    /// Norm for the normalized bi-invariant metric (|θ| resp. Frobenius/√2).
    pub fn norm(&self) -> f64 {
        match self {
            AlgebraElement::U1(a) => a.norm(),
            AlgebraElement::Su2(m) => m.frobenius() / std::f64::consts::SQRT_2,
        }
    }

    /// Ad-invariant inner product compatible with [`AlgebraElement::norm`].
    pub fn inner(&self, o: &AlgebraElement) -> Result<f64> {
        match (self, o) {
            (AlgebraElement::U1(a), AlgebraElement::U1(b)) => Ok(a.re * b.re + a.im * b.im),
            (AlgebraElement::Su2(a), AlgebraElement::Su2(b)) => {
                let mut s = 0.0;
                for k in 0..4 {
                    s += a.e[k].re * b.e[k].re + a.e[k].im * b.e[k].im;
                }
                Ok(0.5 * s)
            }
            _ => Err(mismatch(self.group_id(), o.group_id())),
        }
    }

    /// Adjoint action Ad_g ξ = g ξ g⁻¹.
    pub fn adjoint(&self, g: &GroupElement) -> Result<AlgebraElement> {
        match (self, g) {
            (AlgebraElement::U1(a), GroupElement::U1(_)) => Ok(AlgebraElement::U1(*a)),
            (AlgebraElement::Su2(x), GroupElement::Su2(u)) => {
                Ok(AlgebraElement::Su2(u.mul(x).mul(&u.adjoint())))
            }
            _ => Err(mismatch(self.group_id(), g.group_id())),
        }
    }

    /// Exponential map onto the group (closed form, see module docs).
    pub fn exp(&self) -> GroupElement {
        match self {
            AlgebraElement::U1(a) => {
                // a = iθ up to numerical dust in the real part; only the
                // rotation angle survives so the result stays exactly unit.
                GroupElement::U1(Complex64::from_polar(1.0, a.im))
            }
            AlgebraElement::Su2(x) => {
                let omega = x.frobenius() / std::f64::consts::SQRT_2;
                let (c, sinc) = if omega < 1e-8 {
                    (1.0 - omega * omega / 2.0, 1.0 - omega * omega / 6.0)
                } else {
                    (omega.cos(), omega.sin() / omega)
                };
                GroupElement::Su2(Mat2::identity().scale(c).add(&x.scale(sinc)))
            }
        }
    }

    pub fn components(&self) -> Vec<Complex64> {
        match self {
            AlgebraElement::U1(a) => vec![*a],
            AlgebraElement::Su2(m) => m.e.to_vec(),
        }
    }

    pub fn from_components(group: GroupId, c: &[Complex64]) -> AlgebraElement {
        match group {
            GroupId::U1 => AlgebraElement::U1(c[0]),
            GroupId::Su2 => AlgebraElement::Su2(Mat2 {
                e: [c[0], c[1], c[2], c[3]],
            }),
        }
    }

    /// Orthogonal projection of a raw matrix onto the algebra (drops the
    /// Hermitian part, and the trace for su(2); keeps only the imaginary
    /// part for u(1)).
    pub fn project(group: GroupId, c: &[Complex64]) -> AlgebraElement {
        match group {
            GroupId::U1 => AlgebraElement::U1(Complex64::new(0.0, c[0].im)),
            GroupId::Su2 => {
                let m = Mat2 { e: [c[0], c[1], c[2], c[3]] };
                let ah = m.sub(&m.adjoint()).scale(0.5);
                let t = ah.trace() * 0.5;
                AlgebraElement::Su2(Mat2::new(
                    ah.e[0] - t,
                    ah.e[1],
                    ah.e[2],
                    ah.e[3] - t,
                ))
            }
        }
    }
}

/// A geodesic ball around the identity on which log is single-valued.
#[derive(Clone, Copy, Debug)]
pub struct IdentityNeighborhood {
    pub group: GroupId,
    pub radius: f64,
}

impl IdentityNeighborhood {
    /// Default working neighborhood of radius π/2: products of two members
    /// stay inside the injectivity domain.
    pub fn new(group: GroupId) -> Self {
        IdentityNeighborhood { group, radius: PI / 2.0 }
    }

    pub fn with_radius(group: GroupId, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius <= PI) {
            return Err(Error::InvalidRadius { radius });
        }
        Ok(IdentityNeighborhood { group, radius })
    }

    pub fn contains(&self, g: &GroupElement) -> Result<bool> {
        if g.group_id() != self.group {
            return Err(mismatch(self.group, g.group_id()));
        }
        Ok(g.angle() <= self.radius)
    }
}

/// su(2) basis x_a = −(i/2)σ_a with [x_a, x_b] = ε_abc x_c and ‖x_a‖ = 1/2.
pub fn su2_basis() -> [AlgebraElement; 3] {
    let i = Complex64::new(0.0, 1.0);
    let h = Complex64::new(0.5, 0.0);
    [
        // −(i/2)σ₁
        AlgebraElement::Su2(Mat2::new(Complex64::ZERO, -i * h, -i * h, Complex64::ZERO)),
        // −(i/2)σ₂
        AlgebraElement::Su2(Mat2::new(Complex64::ZERO, -h, h, Complex64::ZERO)),
        // −(i/2)σ₃
        AlgebraElement::Su2(Mat2::new(-i * h, Complex64::ZERO, Complex64::ZERO, i * h)),
    ]
}

/// Builds an su(2) element a·x₁ + b·x₂ + c·x₃ from real coordinates.
pub fn su2_from_coords(a: f64, b: f64, c: f64) -> AlgebraElement {
    let [x1, x2, x3] = su2_basis();
    x1.scale(a)
        .add(&x2.scale(b))
        .unwrap()
        .add(&x3.scale(c))
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    const NB: f64 = PI / 2.0;

    fn full_nbhd(group: GroupId) -> IdentityNeighborhood {
        IdentityNeighborhood::with_radius(group, PI).unwrap()
    }

    /// Power-series exponential, independent of the closed forms above.
    fn exp_series(x: &AlgebraElement) -> Vec<Complex64> {
        match x {
            AlgebraElement::U1(a) => {
                let mut sum = Complex64::new(1.0, 0.0);
                let mut term = Complex64::new(1.0, 0.0);
                for k in 1..40 {
                    term *= a / (k as f64);
                    sum += term;
                }
                vec![sum]
            }
            AlgebraElement::Su2(m) => {
                let mut sum = Mat2::identity();
                let mut term = Mat2::identity();
                for k in 1..40 {
                    term = term.mul(m).scale(1.0 / k as f64);
                    sum = sum.add(&term);
                }
                sum.e.to_vec()
            }
        }
    }

    /// Unitary polar factor via the eigendecomposition of m†m — an SVD-based
    /// oracle fully independent of the Newton iteration in `project`.
    fn polar_su2_oracle(m: &Mat2) -> Mat2 {
        let h = m.adjoint().mul(m);
        // Hermitian 2×2: eigenvalues l1, l2 and an orthonormal eigenbasis.
        let t = h.trace().re;
        let d = h.det().re;
        let disc = (t * t - 4.0 * d).max(0.0).sqrt();
        let (l1, l2) = (0.5 * (t + disc), 0.5 * (t - disc));
        let b = h.e[1];
        let (v1, v2);
        if b.norm() > 1e-14 {
            // (b, λ − a) solves ([[a,b],[b̄,d]] − λ)v = 0.
            v1 = (b, Complex64::new(l1, 0.0) - h.e[0]);
            v2 = (b, Complex64::new(l2, 0.0) - h.e[0]);
        } else if h.e[0].re >= h.e[3].re {
            v1 = (Complex64::new(1.0, 0.0), Complex64::ZERO);
            v2 = (Complex64::ZERO, Complex64::new(1.0, 0.0));
        } else {
            v1 = (Complex64::ZERO, Complex64::new(1.0, 0.0));
            v2 = (Complex64::new(1.0, 0.0), Complex64::ZERO);
        }
        let n1 = (v1.0.norm_sqr() + v1.1.norm_sqr()).sqrt();
        let n2 = (v2.0.norm_sqr() + v2.1.norm_sqr()).sqrt();
        let e1 = (v1.0 / n1, v1.1 / n1);
        let e2 = (v2.0 / n2, v2.1 / n2);
        // (m†m)^{-1/2} = Σ λ_k^{-1/2} e_k e_k†
        let (s1, s2) = (1.0 / l1.sqrt(), 1.0 / l2.sqrt());
        let mut inv_sqrt = Mat2::zero();
        for (s, e) in [(s1, e1), (s2, e2)] {
            inv_sqrt = inv_sqrt.add(&Mat2::new(
                e.0 * e.0.conj() * s,
                e.0 * e.1.conj() * s,
                e.1 * e.0.conj() * s,
                e.1 * e.1.conj() * s,
            ));
        }
        let u = m.mul(&inv_sqrt);
        let det = u.det();
        u.scale_c(Complex64::from_polar(1.0, -0.5 * det.im.atan2(det.re)))
    }

    fn max_comp_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn exp_matches_power_series_u1() {
        for theta in [0.0, 1e-9, 0.3, -1.2, 2.9, -2.9] {
            let x = AlgebraElement::U1(Complex64::new(0.0, theta));
            let got = x.exp().components();
            let want = exp_series(&x);
            assert!(
                max_comp_dist(&got, &want) < 1e-13,
                "closed-form exp deviates from 40-term series at theta={theta}"
            );
        }
    }

    #[test]
    fn exp_matches_power_series_su2() {
        let samples = [
            (0.0, 0.0, 0.0),
            (1e-7, 0.0, 0.0),
            (0.4, -0.2, 0.9),
            (-1.5, 0.3, 0.1),
            (2.0, 2.0, 0.5),
        ];
        for (a, b, c) in samples {
            let x = su2_from_coords(a, b, c);
            let got = x.exp().components();
            let want = exp_series(&x);
            assert!(
                max_comp_dist(&got, &want) < 1e-12,
                "closed-form exp deviates from series at ({a},{b},{c})"
            );
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for group in [GroupId::U1, GroupId::Su2] {
            let g = AlgebraElement::zero(group).exp();
            let d = g.distance(&GroupElement::identity(group)).unwrap();
            assert!(d < 1e-15, "exp(0) missed the identity for {group:?}");
        }
    }

    #[test]
    fn log_exp_roundtrip_inside_injectivity_ball() {
        let nb = full_nbhd(GroupId::Su2);
        for (a, b, c) in [(0.5, 0.0, 0.0), (0.9, -1.1, 0.4), (1.6, 1.6, 1.6), (0.0, 0.0, 2.8)] {
            let x = su2_from_coords(a, b, c);
            if x.norm() > 0.9 * PI {
                continue;
            }
            let back = x.exp().log(&nb).unwrap();
            let diff = back.sub(&x).unwrap().norm();
            assert!(diff < 1e-10, "log(exp ξ) ≠ ξ: error {diff} at ‖ξ‖={}", x.norm());
        }
        let nb1 = full_nbhd(GroupId::U1);
        for theta in [-2.8, -0.5, 0.0, 1.3, 2.82] {
            let x = AlgebraElement::U1(Complex64::new(0.0, theta));
            let back = x.exp().log(&nb1).unwrap();
            assert!(back.sub(&x).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn log_errors_at_cut_locus() {
        let minus_one = GroupElement::U1(Complex64::new(-1.0, 0.0));
        // arg(−1) = π exceeds the default π/2 ball.
        let err = minus_one.log(&IdentityNeighborhood::new(GroupId::U1));
        assert!(matches!(err, Err(Error::OutsideInjectivityDomain { .. })));

        let minus_id = GroupElement::Su2(Mat2::identity().scale(-1.0));
        let err = minus_id.log(&full_nbhd(GroupId::Su2));
        assert!(
            matches!(err, Err(Error::OutsideInjectivityDomain { .. })),
            "log(−I) must fail even with the full radius: no distinguished direction exists"
        );
    }

    #[test]
    fn log_respects_neighborhood_radius() {
        let g = AlgebraElement::U1(Complex64::new(0.0, 2.0)).exp();
        let small = IdentityNeighborhood::with_radius(GroupId::U1, NB).unwrap();
        assert!(matches!(g.log(&small), Err(Error::OutsideInjectivityDomain { .. })));
        assert!(g.log(&full_nbhd(GroupId::U1)).is_ok());
    }

    #[test]
    fn projection_matches_svd_oracle_and_is_idempotent() {
        let mut rng_state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..50 {
            let g = su2_from_coords(next() * 3.0, next() * 3.0, next() * 3.0).exp();
            let mut comps = g.components();
            for z in comps.iter_mut() {
                *z += Complex64::new(next() * 0.15, next() * 0.15);
            }
            let m = Mat2 { e: [comps[0], comps[1], comps[2], comps[3]] };
            let projected = match GroupElement::project(GroupId::Su2, &comps).unwrap() {
                GroupElement::Su2(u) => u,
                _ => unreachable!(),
            };
            let oracle = polar_su2_oracle(&m);
            assert!(
                projected.sub(&oracle).frobenius() < 1e-9,
                "Newton polar disagrees with SVD oracle by {}",
                projected.sub(&oracle).frobenius()
            );
            assert!((projected.det() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            let again = match GroupElement::project(GroupId::Su2, &projected.e).unwrap() {
                GroupElement::Su2(u) => u,
                _ => unreachable!(),
            };
            assert!(
                again.sub(&projected).frobenius() < 1e-12,
                "projection is not idempotent"
            );
        }
    }

    #[test]
    fn projection_rejects_far_matrices() {
        let far = [Complex64::new(3.0, 0.0)];
        assert!(matches!(
            GroupElement::project(GroupId::U1, &far),
            Err(Error::TooFarFromGroup { .. })
        ));
        let degenerate = [Complex64::ZERO; 4];
        assert!(GroupElement::project(GroupId::Su2, &degenerate).is_err());
    }

    #[test]
    fn bracket_structure_constants() {
        let [x1, x2, x3] = su2_basis();
        let pairs = [(x1, x2, x3), (x2, x3, x1), (x3, x1, x2)];
        for (a, b, c) in pairs {
            let br = a.bracket(&b).unwrap();
            assert!(
                br.sub(&c).unwrap().norm() < 1e-15,
                "[x_a, x_b] ≠ x_c for the cyclic basis"
            );
        }
        assert!((x1.norm() - 0.5).abs() < 1e-15, "basis normalization drifted");
    }

    #[test]
    fn bracket_antisymmetry_and_jacobi() {
        let xs = [
            su2_from_coords(0.3, -0.7, 0.2),
            su2_from_coords(-1.1, 0.4, 0.9),
            su2_from_coords(0.05, 1.3, -0.6),
        ];
        let [a, b, c] = xs;
        let anti = a.bracket(&b).unwrap().add(&b.bracket(&a).unwrap()).unwrap();
        assert!(anti.norm() < 1e-14, "bracket antisymmetry violated");
        let j = a
            .bracket(&b.bracket(&c).unwrap())
            .unwrap()
            .add(&b.bracket(&c.bracket(&a).unwrap()).unwrap())
            .unwrap()
            .add(&c.bracket(&a.bracket(&b).unwrap()).unwrap())
            .unwrap();
        assert!(j.norm() < 1e-13, "Jacobi identity violated: {}", j.norm());
    }

    #[test]
    fn bracket_norm_bound() {
        let a = su2_from_coords(0.4, -0.9, 0.35);
        let b = su2_from_coords(-0.2, 0.8, 1.4);
        let br = a.bracket(&b).unwrap();
        assert!(
            br.norm() <= 2.0 * a.norm() * b.norm() * (1.0 + 1e-12),
            "‖[ξ,η]‖ must stay ≤ 2‖ξ‖‖η‖"
        );
    }

    #[test]
    fn adjoint_preserves_norm_and_bracket() {
        let g = su2_from_coords(0.9, 0.2, -1.3).exp();
        let a = su2_from_coords(0.4, -0.9, 0.35);
        let b = su2_from_coords(-0.2, 0.8, 1.4);
        let ga = a.adjoint(&g).unwrap();
        let gb = b.adjoint(&g).unwrap();
        assert!(
            (ga.norm() - a.norm()).abs() < 1e-12,
            "Ad_g must be an isometry of the algebra"
        );
        let lhs = ga.bracket(&gb).unwrap();
        let rhs = a.bracket(&b).unwrap().adjoint(&g).unwrap();
        assert!(lhs.sub(&rhs).unwrap().norm() < 1e-12, "Ad_g must respect the bracket");
        assert!(
            (ga.inner(&gb).unwrap() - a.inner(&b).unwrap()).abs() < 1e-12,
            "inner product must be Ad-invariant"
        );
    }

    #[test]
    fn distance_is_bi_invariant() {
        let g = su2_from_coords(0.3, 1.1, -0.4).exp();
        let h = su2_from_coords(-0.8, 0.15, 0.9).exp();
        let k = su2_from_coords(1.2, -0.5, 0.05).exp();
        let d0 = g.distance(&h).unwrap();
        let dl = k.mul(&g).unwrap().distance(&k.mul(&h).unwrap()).unwrap();
        let dr = g.mul(&k).unwrap().distance(&h.mul(&k).unwrap()).unwrap();
        assert!((d0 - dl).abs() < 1e-12 && (d0 - dr).abs() < 1e-12);
    }

    #[test]
    fn algebra_projection_lands_in_algebra() {
        let raw = [
            Complex64::new(0.3, 0.7),
            Complex64::new(-1.0, 0.2),
            Complex64::new(0.5, 0.9),
            Complex64::new(0.1, -0.4),
        ];
        let p = AlgebraElement::project(GroupId::Su2, &raw);
        if let AlgebraElement::Su2(m) = p {
            assert!(m.trace().norm() < 1e-15, "projection must be traceless");
            assert!(
                m.add(&m.adjoint()).frobenius() < 1e-15,
                "projection must be anti-Hermitian"
            );
        } else {
            panic!("wrong variant");
        }
    }

    #[test]
    fn group_mismatch_is_reported() {
        let a = GroupElement::identity(GroupId::U1);
        let b = GroupElement::identity(GroupId::Su2);
        assert!(matches!(a.mul(&b), Err(Error::GroupMismatch { .. })));
    }
}
