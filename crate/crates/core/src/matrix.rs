//! Dense 2×2 complex matrices and qubit kets.
//!
//! Every qubit block in the composite state is a 2×2 matrix in the undriven
//! basis `{|0⟩, |1⟩}`, so a fixed-size value type is all the linear algebra
//! the simulator needs.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// 2×2 complex matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2<T> {
    pub m: [[Complex<T>; 2]; 2],
}

impl<T: Real> Default for Mat2<T> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Real> Mat2<T> {
    #[inline]
    pub fn new(m00: Complex<T>, m01: Complex<T>, m10: Complex<T>, m11: Complex<T>) -> Self {
        Self {
            m: [[m00, m01], [m10, m11]],
        }
    }

    #[inline]
    pub fn zero() -> Self {
        let z = Complex::zero();
        Self::new(z, z, z, z)
    }

    #[inline]
    pub fn identity() -> Self {
        Self::diag(T::one(), T::one())
    }

    #[inline]
    pub fn diag(d0: T, d1: T) -> Self {
        let z = Complex::zero();
        Self::new(Complex::new(d0, T::zero()), z, z, Complex::new(d1, T::zero()))
    }

    /// Lowering operator `a = |0⟩⟨1|`.
    pub fn lowering() -> Self {
        let z = Complex::zero();
        Self::new(z, Complex::one(), z, z)
    }

    /// Raising operator `a† = |1⟩⟨0|`.
    pub fn raising() -> Self {
        let z = Complex::zero();
        Self::new(z, z, Complex::one(), z)
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(psi: &Ket2<T>) -> Self {
        let [a, b] = psi.c;
        Self::new(a * a.conj(), a * b.conj(), b * a.conj(), b * b.conj())
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.m[row][col]
    }

    #[inline]
    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    #[inline]
    pub fn trace(&self) -> Complex<T> {
        self.m[0][0] + self.m[1][1]
    }

    #[inline]
    pub fn det(&self) -> Complex<T> {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    #[inline]
    pub fn scale(&self, s: T) -> Self {
        let m = &self.m;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    #[inline]
    pub fn scale_c(&self, s: Complex<T>) -> Self {
        let m = &self.m;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    /// `self += s * other`
    #[inline]
    pub fn add_scaled(&mut self, s: T, other: &Self) {
        for r in 0..2 {
            for c in 0..2 {
                self.m[r][c] = self.m[r][c] + other.m[r][c] * s;
            }
        }
    }

    #[inline]
    pub fn apply(&self, psi: &Ket2<T>) -> Ket2<T> {
        let m = &self.m;
        Ket2 {
            c: [
                m[0][0] * psi.c[0] + m[0][1] * psi.c[1],
                m[1][0] * psi.c[0] + m[1][1] * psi.c[1],
            ],
        }
    }

    /// `(A + A†) / 2`
    #[inline]
    pub fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale(T::lit(0.5))
    }

    /// Largest entry modulus of `A − A†`.
    pub fn hermiticity_residual(&self) -> T {
        let d = *self - self.adjoint();
        d.m.iter()
            .flatten()
            .map(|z| z.norm())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.m
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.m
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Eigenvalues of the hermitian part, ascending, in closed form.
    pub fn hermitian_eigenvalues(&self) -> [T; 2] {
        let h = self.hermitian_part();
        let a = h.m[0][0].re;
        let d = h.m[1][1].re;
        let b = h.m[0][1];
        let half_sum = (a + d) * T::lit(0.5);
        let half_diff = (a - d) * T::lit(0.5);
        let r = half_diff.hypot(b.norm());
        [half_sum - r, half_sum + r]
    }

    /// Matrix exponential in closed form (Cayley–Hamilton):
    /// `exp(M) = e^{μ} [cosh(s) I + sinh(s)/s (M − μ I)]`, `μ = tr M / 2`,
    /// `s² = ((m00 − m11)/2)² + m01 m10`.
    pub fn exp(&self) -> Self {
        let two = T::lit(2.0);
        let mu = self.trace() / two;
        let shifted = *self - Self::identity().scale_c(mu);
        let half_diff = (self.m[0][0] - self.m[1][1]) / two;
        let s2 = half_diff * half_diff + self.m[0][1] * self.m[1][0];
        let s = s2.sqrt();
        let cosh = s.cosh();
        // sinh(s)/s with a series fallback near zero.
        let sinhc = if s.norm() < T::lit(1e-4) {
            Complex::<T>::one() + s2 / T::lit(6.0) + s2 * s2 / T::lit(120.0)
        } else {
            s.sinh() / s
        };
        let e = mu.exp();
        (Self::identity().scale_c(cosh) + shifted.scale_c(sinhc)).scale_c(e)
    }
}

impl<T: Real> Add for Mat2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let (a, b) = (&self.m, &o.m);
        Self::new(
            a[0][0] + b[0][0],
            a[0][1] + b[0][1],
            a[1][0] + b[1][0],
            a[1][1] + b[1][1],
        )
    }
}

impl<T: Real> Sub for Mat2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let (a, b) = (&self.m, &o.m);
        Self::new(
            a[0][0] - b[0][0],
            a[0][1] - b[0][1],
            a[1][0] - b[1][0],
            a[1][1] - b[1][1],
        )
    }
}

impl<T: Real> Neg for Mat2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Real> AddAssign for Mat2<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> SubAssign for Mat2<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Mul for Mat2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let (a, b) = (&self.m, &o.m);
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

/// Qubit state vector in the `{|0⟩, |1⟩}` basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ket2<T> {
    pub c: [Complex<T>; 2],
}

impl<T: Real> Ket2<T> {
    pub fn new(c0: Complex<T>, c1: Complex<T>) -> Self {
        Self { c: [c0, c1] }
    }

    /// Basis state `|i⟩`, `i ∈ {0, 1}`.
    pub fn basis(i: usize) -> Self {
        let mut c = [Complex::zero(); 2];
        c[i] = Complex::one();
        Self { c }
    }

    #[inline]
    pub fn norm_sqr(&self) -> T {
        self.c[0].norm_sqr() + self.c[1].norm_sqr()
    }

    /// Population of `|i⟩`.
    #[inline]
    pub fn population(&self, i: usize) -> T {
        self.c[i].norm_sqr()
    }

    /// Returns the normalized ket, or `None` when the norm vanishes.
    pub fn normalized(&self) -> Option<Self> {
        let n2 = self.norm_sqr();
        if !(n2 > T::zero()) || !n2.is_finite() {
            return None;
        }
        let inv = T::one() / n2.sqrt();
        Some(Self {
            c: [self.c[0] * inv, self.c[1] * inv],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type C = Complex<f64>;

    #[test]
    fn ladder_products_are_projectors() {
        let a = Mat2::<f64>::lowering();
        let ad = Mat2::<f64>::raising();
        assert_eq!(a * ad, Mat2::diag(1.0, 0.0));
        assert_eq!(ad * a, Mat2::diag(0.0, 1.0));
        assert_eq!(a.adjoint(), ad);
    }

    #[test]
    fn exp_of_diagonal_and_nilpotent() {
        let d = Mat2::diag(0.3, -1.2).exp();
        assert!((d.m[0][0].re - 0.3f64.exp()).abs() < 1e-15);
        assert!((d.m[1][1].re - (-1.2f64).exp()).abs() < 1e-15);
        // exp of a nilpotent matrix is I + N
        let n = Mat2::<f64>::lowering().scale(2.5).exp();
        assert!((n.m[0][1].re - 2.5).abs() < 1e-15);
        assert!((n.m[0][0].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exp_matches_taylor_series() {
        let m = Mat2::new(
            C::new(0.1, -0.4),
            C::new(0.2, 0.05),
            C::new(-0.3, 0.1),
            C::new(-0.2, 0.7),
        );
        let mut term = Mat2::identity();
        let mut sum = Mat2::identity();
        for k in 1..40 {
            term = (term * m).scale(1.0 / k as f64);
            sum += term;
        }
        assert!((m.exp() - sum).max_abs() < 1e-14);
    }

    #[test]
    fn hermitian_eigenvalues_closed_form() {
        let h = Mat2::new(C::new(1.0, 0.0), C::new(0.0, 1.0), C::new(0.0, -1.0), C::new(1.0, 0.0));
        let [lo, hi] = h.hermitian_eigenvalues();
        assert!((lo - 0.0).abs() < 1e-15 && (hi - 2.0).abs() < 1e-15);
    }

    #[test]
    fn normalizing_zero_ket_fails() {
        let z = Ket2::<f64>::new(C::new(0.0, 0.0), C::new(0.0, 0.0));
        assert!(z.normalized().is_none());
    }
}
