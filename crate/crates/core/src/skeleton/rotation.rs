//! Axis-angle rotations.
//!
//! Rodrigues' formula is written once over a small [`Real`] trait so the same
//! code evaluates plain values and forward-mode derivatives ([`Dual`]).

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};

/// Below this squared angle the Taylor series of the Rodrigues coefficients is used.
const SMALL_ANGLE_SQ: f64 = 1e-6;

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// First-order dual number `re + eps·ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual::new(
            self.re / o.re,
            (self.eps * o.re - self.re * o.eps) / (o.re * o.re),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

impl Real for Dual {
    fn from_f64(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.eps * self.re.sin())
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.eps / (2.0 * s))
    }
}

/// Rotation matrix of an axis-angle vector, generic over the scalar type.
pub fn rodrigues_generic<T: Real>(w: [T; 3]) -> [[T; 3]; 3] {
    let one = T::from_f64(1.0);
    let zero = T::from_f64(0.0);
    let theta_sq = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let (a, b) = if theta_sq.value() < SMALL_ANGLE_SQ {
        let t2 = theta_sq;
        let t4 = t2 * t2;
        (
            one - t2 / T::from_f64(6.0) + t4 / T::from_f64(120.0),
            T::from_f64(0.5) - t2 / T::from_f64(24.0) + t4 / T::from_f64(720.0),
        )
    } else {
        let theta = theta_sq.sqrt();
        (theta.sin() / theta, (one - theta.cos()) / theta_sq)
    };
    let k = [
        [zero, -w[2], w[1]],
        [w[2], zero, -w[0]],
        [-w[1], w[0], zero],
    ];
    let mut r = [[zero; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut k2 = zero;
            for m in 0..3 {
                k2 = k2 + k[i][m] * k[m][j];
            }
            let id = if i == j { one } else { zero };
            r[i][j] = id + a * k[i][j] + b * k2;
        }
    }
    r
}

pub fn rodrigues(w: &Vector3<f64>) -> Matrix3<f64> {
    let r = rodrigues_generic([w.x, w.y, w.z]);
    Matrix3::from_fn(|i, j| r[i][j])
}

/// Partial derivatives `∂R/∂w_k` for `k = 0, 1, 2`.
pub fn rodrigues_derivatives(w: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    std::array::from_fn(|k| {
        let arg: [Dual; 3] =
            std::array::from_fn(|i| Dual::new(w[i], if i == k { 1.0 } else { 0.0 }));
        let r = rodrigues_generic(arg);
        Matrix3::from_fn(|i, j| r[i][j].eps)
    })
}

/// Inverse of [`rodrigues`]; returns the axis-angle vector with angle in `[0, π]`.
pub fn log_map(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let v = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if theta < 1e-8 {
        return v * 0.5;
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // axis from the symmetric part
        let b = (r + Matrix3::identity()) * 0.5;
        let mut best = 0;
        for i in 1..3 {
            if b[(i, i)] > b[(best, best)] {
                best = i;
            }
        }
        let mut axis = b.column(best).into_owned();
        axis /= axis.norm();
        return axis * theta;
    }
    v * (theta / (2.0 * theta.sin()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_about_z() {
        let r = rodrigues(&Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let v = r * Vector3::new(1.0, 0.0, 0.0);
        assert!((v - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn orthonormal_with_unit_determinant() {
        for w in [
            [0.3, -1.2, 2.0],
            [1e-5, 0.0, 2e-5],
            [0.0, 0.0, 0.0],
            [3.0, 0.1, -0.2],
        ] {
            let r = rodrigues(&Vector3::from(w));
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        for w in [[0.4, -0.7, 0.2], [1e-4, 2e-4, -1e-4], [0.0, 0.0, 0.0]] {
            let w = Vector3::from(w);
            let d = rodrigues_derivatives(&w);
            for k in 0..3 {
                let h = 1e-6;
                let mut wp = w;
                let mut wm = w;
                wp[k] += h;
                wm[k] -= h;
                let fd = (rodrigues(&wp) - rodrigues(&wm)) / (2.0 * h);
                assert!((fd - d[k]).norm() < 1e-7, "k={k} w={w:?}");
            }
        }
    }

    #[test]
    fn log_map_inverts_rodrigues() {
        for w in [
            [0.4, -0.7, 0.2],
            [1e-9, 0.0, 0.0],
            [0.0, 3.0, 0.0],
            [-2.0, 1.0, 0.5],
        ] {
            let w = Vector3::from(w);
            let back = log_map(&rodrigues(&w));
            assert!((back - w).norm() < 1e-6, "{w:?} -> {back:?}");
        }
    }
}
