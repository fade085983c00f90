use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Mat2;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveKind<T> {
    /// `λ(t) = λ0 sin(ω_d t)`.
    Sinusoidal,
    /// Co-rotating half of a resonant sinusoid: `λ(t) = i (λ0/2) e^{-i ω0 t}`,
    /// i.e. a constant `i λ0/2` in the interaction picture of `H0`.
    RwaResonant,
    /// `λ(t) = λ0` on `[0, τ]`.
    Constant,
    /// Piecewise-linear interpolation between `(time, λ)` samples.
    Tabulated {
        times: Vec<T>,
        values: Vec<Complex<T>>,
    },
}

/// Classical drive `V_D(t) = λ(t) a† + λ*(t) a` acting on the qubit over `[0, τ]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveProtocol<T> {
    pub kind: DriveKind<T>,
    pub amplitude: T,
    pub frequency: T,
    pub total_time: T,
}

impl<T: Real> DriveProtocol<T> {
    pub fn sinusoidal(amplitude: T, frequency: T, total_time: T) -> Self {
        Self {
            kind: DriveKind::Sinusoidal,
            amplitude,
            frequency,
            total_time,
        }
    }

    pub fn rwa_resonant(amplitude: T, total_time: T) -> Self {
        Self {
            kind: DriveKind::RwaResonant,
            amplitude,
            frequency: T::one(),
            total_time,
        }
    }

    pub fn constant(amplitude: T, total_time: T) -> Self {
        Self {
            kind: DriveKind::Constant,
            amplitude,
            frequency: T::zero(),
            total_time,
        }
    }

    pub fn undriven(total_time: T) -> Self {
        Self::constant(T::zero(), total_time)
    }

    /// Tabulated drive; `τ` is the last sample time.
    pub fn tabulated(times: Vec<T>, values: Vec<Complex<T>>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::InvalidDrive(
                "tabulated drive needs at least two (time, value) samples".into(),
            ));
        }
        if times[0] < T::zero() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidDrive(
                "sample times must be non-negative and strictly increasing".into(),
            ));
        }
        let total_time = *times.last().unwrap();
        let amplitude = values.iter().map(|v| v.norm()).fold(T::zero(), T::max);
        Ok(Self {
            kind: DriveKind::Tabulated { times, values },
            amplitude,
            frequency: T::zero(),
            total_time,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.amplitude.is_finite()
            && self.frequency.is_finite()
            && self.total_time.is_finite();
        if !finite {
            return Err(Error::InvalidDrive("non-finite parameter".into()));
        }
        if self.total_time < T::zero() {
            return Err(Error::InvalidDrive("total time must be non-negative".into()));
        }
        Ok(())
    }

    /// Returns the same drive with a different duration.
    pub fn with_total_time(&self, total_time: T) -> Self {
        Self {
            total_time,
            ..self.clone()
        }
    }

    #[inline]
    fn active(&self, t: T) -> bool {
        t >= T::zero() && t <= self.total_time
    }

    /// `λ(t)`; zero outside `[0, τ]`.
    pub fn lambda(&self, t: T) -> Complex<T> {
        if !self.active(t) {
            return Complex::zero();
        }
        match &self.kind {
            DriveKind::Sinusoidal => Complex::new(self.amplitude * (self.frequency * t).sin(), T::zero()),
            DriveKind::RwaResonant => {
                let half = self.amplitude * T::lit(0.5);
                // i (λ0/2) e^{-it}
                Complex::new(half * t.sin(), half * t.cos())
            }
            DriveKind::Constant => Complex::new(self.amplitude, T::zero()),
            DriveKind::Tabulated { times, values } => {
                let Some(i) = segment(times, t) else {
                    return Complex::zero();
                };
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] * (T::one() - w) + values[i + 1] * w
            }
        }
    }

    /// `λ'(t)`; zero outside `[0, τ]`. Tabulated drives use the slope of the
    /// enclosing segment.
    pub fn lambda_dot(&self, t: T) -> Complex<T> {
        if !self.active(t) {
            return Complex::zero();
        }
        match &self.kind {
            DriveKind::Sinusoidal => Complex::new(
                self.amplitude * self.frequency * (self.frequency * t).cos(),
                T::zero(),
            ),
            DriveKind::RwaResonant => {
                let half = self.amplitude * T::lit(0.5);
                // d/dt [i (λ0/2) e^{-it}] = (λ0/2) e^{-it}
                Complex::new(half * t.cos(), -half * t.sin())
            }
            DriveKind::Constant => Complex::zero(),
            DriveKind::Tabulated { times, values } => match segment(times, t) {
                Some(i) => (values[i + 1] - values[i]) / (times[i + 1] - times[i]),
                None => Complex::zero(),
            },
        }
    }
}

fn segment<T: Real>(times: &[T], t: T) -> Option<usize> {
    if t < times[0] || t > times[times.len() - 1] {
        return None;
    }
    let idx = times.partition_point(|&s| s <= t);
    Some(idx.saturating_sub(1).min(times.len() - 2))
}

/// `H_q(t) = ω0 a†a + λ(t) a† + λ*(t) a` in the `{|0⟩, |1⟩}` basis.
pub fn qubit_hamiltonian<T: Real>(drive: &DriveProtocol<T>, t: T) -> Mat2<T> {
    let l = drive.lambda(t);
    Mat2::new(Complex::zero(), l.conj(), l, Complex::new(T::one(), T::zero()))
}

/// Power operator `P(t) = ∂_t H_q(t) = λ'(t) a† + λ'*(t) a`.
pub fn power_operator<T: Real>(drive: &DriveProtocol<T>, t: T) -> Mat2<T> {
    let l = drive.lambda_dot(t);
    Mat2::new(Complex::zero(), l.conj(), l, Complex::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn undriven_hamiltonian_is_diagonal() {
        let d = DriveProtocol::<f64>::undriven(10.0);
        assert_eq!(qubit_hamiltonian(&d, 3.0), Mat2::diag(0.0, 1.0));
    }

    #[test]
    fn sinusoid_vanishes_at_zero() {
        let d = DriveProtocol::sinusoidal(0.05, 1.0, 100.0);
        assert_eq!(qubit_hamiltonian(&d, 0.0), Mat2::diag(0.0, 1.0));
    }

    #[test]
    fn sinusoid_quarter_period() {
        let d = DriveProtocol::sinusoidal(0.05, 1.0, 100.0);
        let h = qubit_hamiltonian(&d, FRAC_PI_2);
        assert!((h.m[0][1].re - 0.05).abs() < 1e-15);
        assert!((h.m[1][0].re - 0.05).abs() < 1e-15);
        assert_eq!(h.m[0][1].im, 0.0);
    }

    #[test]
    fn rwa_is_constant_imaginary_in_rotating_frame() {
        let d = DriveProtocol::rwa_resonant(0.05, 100.0);
        for &t in &[0.0, 0.3, 7.1, 55.0] {
            let rotated = d.lambda(t) * Complex::new(0.0f64, t).exp();
            assert!(rotated.re.abs() < 1e-15);
            assert!((rotated.im - 0.025).abs() < 1e-15);
        }
    }

    #[test]
    fn drive_is_zero_outside_window() {
        let d = DriveProtocol::constant(0.2, 5.0);
        assert_eq!(d.lambda(-0.1), Complex::zero());
        assert_eq!(d.lambda(5.1), Complex::zero());
        assert_eq!(d.lambda(5.0).re, 0.2);
    }

    #[test]
    fn tabulated_interpolates_linearly() {
        let d: DriveProtocol<f64> = DriveProtocol::tabulated(
            vec![0.0, 1.0, 3.0],
            vec![Complex::new(0.0, 0.0), Complex::new(1.0, 0.0), Complex::new(0.0, 2.0)],
        )
        .unwrap();
        assert!((d.lambda(0.5).re - 0.5).abs() < 1e-15);
        let mid = d.lambda(2.0);
        assert!((mid.re - 0.5).abs() < 1e-15 && (mid.im - 1.0).abs() < 1e-15);
        assert_eq!(d.lambda(3.5), Complex::zero());
        assert!((d.lambda_dot(0.2).re - 1.0).abs() < 1e-15);
        assert!((d.lambda_dot(2.5).im - 1.0).abs() < 1e-15);
        assert_eq!(d.total_time, 3.0);
    }

    #[test]
    fn tabulated_rejects_unsorted_times() {
        let r = DriveProtocol::tabulated(vec![0.0, 2.0, 1.0], vec![Complex::zero(); 3]);
        assert!(r.is_err());
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let drives = [
            DriveProtocol::sinusoidal(0.05, 0.9, 100.0),
            DriveProtocol::rwa_resonant(0.05, 100.0),
        ];
        let h = 1e-6;
        for d in &drives {
            for &t in &[1.0, 13.7, 42.0] {
                let fd = (d.lambda(t + h) - d.lambda(t - h)) / (2.0 * h);
                assert!((fd - d.lambda_dot(t)).norm() < 1e-9);
            }
        }
    }
}
