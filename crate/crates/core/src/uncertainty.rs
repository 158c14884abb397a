//! Numerical check of the uncertainty relation for 2x2 observables.
//!
//! For Hermitian `A`, `B` and a normalized state, the product of variances is
//! bounded below by a quarter of the squared magnitude of the commutator
//! expectation. [`uncertainty_product`] evaluates both sides so callers (and
//! the test suite) can confirm the bound numerically.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance for Hermiticity and normalization validation.
pub const VALIDATION_TOL: f64 = 1e-12;

/// Numerical slack allowed when comparing the two sides of the bound.
pub const INEQUALITY_SLACK: f64 = 1e-9;

/// Dense 2x2 complex matrix, row major. Internal workhorse.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Mat2 {
    e: [[Complex64; 2]; 2],
}

impl Mat2 {
    fn mul(&self, rhs: &Mat2) -> Mat2 {
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.e[i][0] * rhs.e[0][j] + self.e[i][1] * rhs.e[1][j];
            }
        }
        Mat2 { e: out }
    }

    fn sub(&self, rhs: &Mat2) -> Mat2 {
        let mut out = self.e;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell -= rhs.e[i][j];
            }
        }
        Mat2 { e: out }
    }

    fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.e[0][0] * v[0] + self.e[0][1] * v[1],
            self.e[1][0] * v[0] + self.e[1][1] * v[1],
        ]
    }

    fn is_hermitian(&self, tol: f64) -> bool {
        (self.e[0][0] - self.e[0][0].conj()).norm() <= tol
            && (self.e[1][1] - self.e[1][1].conj()).norm() <= tol
            && (self.e[0][1] - self.e[1][0].conj()).norm() <= tol
    }
}

/// A 2x2 Hermitian observable, validated on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observable(Mat2);

impl Observable {
    /// Build from row-major entries; fails unless Hermitian within
    /// [`VALIDATION_TOL`].
    pub fn new(entries: [[Complex64; 2]; 2]) -> Result<Observable> {
        let m = Mat2 { e: entries };
        if !m.is_hermitian(VALIDATION_TOL) {
            return Err(Error::InvalidInput("observable must be Hermitian".into()));
        }
        Ok(Observable(m))
    }

    pub fn pauli_x() -> Observable {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        Observable(Mat2 { e: [[o, l], [l, o]] })
    }

    pub fn pauli_y() -> Observable {
        let o = Complex64::new(0.0, 0.0);
        Observable(Mat2 {
            e: [[o, Complex64::new(0.0, -1.0)], [Complex64::new(0.0, 1.0), o]],
        })
    }

    pub fn pauli_z() -> Observable {
        let o = Complex64::new(0.0, 0.0);
        Observable(Mat2 {
            e: [[Complex64::new(1.0, 0.0), o], [o, Complex64::new(-1.0, 0.0)]],
        })
    }

    /// Expectation value in `psi`; real because the operator is Hermitian.
    pub fn expectation(&self, psi: &PureState) -> f64 {
        expectation_complex(&self.0, psi).re
    }

    /// Variance in `psi`, clamped at zero against rounding.
    pub fn variance(&self, psi: &PureState) -> f64 {
        let mean = self.expectation(psi);
        let mean_sq = expectation_complex(&self.0.mul(&self.0), psi).re;
        (mean_sq - mean * mean).max(0.0)
    }
}

/// A normalized single-qubit state, validated on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState([Complex64; 2]);

impl PureState {
    /// Build from amplitudes; fails unless the squared norm is 1 within
    /// [`VALIDATION_TOL`].
    pub fn new(a0: Complex64, a1: Complex64) -> Result<PureState> {
        let norm_sq = a0.norm_sqr() + a1.norm_sqr();
        if (norm_sq - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::InvalidInput(format!(
                "state must be normalized, squared norm {norm_sq}"
            )));
        }
        Ok(PureState([a0, a1]))
    }

    /// Normalize arbitrary amplitudes; fails on the near-zero vector.
    pub fn normalized(a0: Complex64, a1: Complex64) -> Result<PureState> {
        let norm = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
        if norm < 1e-9 {
            return Err(Error::InvalidInput("cannot normalize the zero vector".into()));
        }
        Ok(PureState([a0 / norm, a1 / norm]))
    }

    pub fn basis_zero() -> PureState {
        PureState([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)])
    }

    pub fn basis_one() -> PureState {
        PureState([Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
    }

    pub fn amplitudes(&self) -> [Complex64; 2] {
        self.0
    }
}

fn expectation_complex(m: &Mat2, psi: &PureState) -> Complex64 {
    let v = m.apply(psi.0);
    psi.0[0].conj() * v[0] + psi.0[1].conj() * v[1]
}

/// Both sides of the uncertainty bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyProduct {
    /// Product of the two variances.
    pub lhs: f64,
    /// Quarter of the squared magnitude of the commutator expectation.
    pub rhs: f64,
}

impl UncertaintyProduct {
    /// Whether the bound holds within [`INEQUALITY_SLACK`].
    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs - INEQUALITY_SLACK
    }
}

/// Evaluate `Var(A) * Var(B)` against `|<[A,B]>|^2 / 4` in state `psi`.
///
/// Inputs are validated by construction ([`Observable::new`],
/// [`PureState::new`]), so this computation cannot fail.
pub fn uncertainty_product(a: &Observable, b: &Observable, psi: &PureState) -> UncertaintyProduct {
    let lhs = a.variance(psi) * b.variance(psi);
    let commutator = a.0.mul(&b.0).sub(&b.0.mul(&a.0));
    let rhs = expectation_complex(&commutator, psi).norm_sqr() / 4.0;
    UncertaintyProduct { lhs, rhs }
}
