//! Scalar abstraction shared by the dynamics, cost and solver modules.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the numerical core is generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(theta: T) -> T {
    let pi = T::pi();
    let two_pi = T::two_pi();
    if theta > -pi && theta <= pi {
        return theta;
    }
    let mut w = theta - two_pi * ((theta + pi) / two_pi).floor();
    // floor() leaves w in [-pi, pi); fold the lower endpoint onto +pi.
    if w <= -pi {
        w += two_pi;
    }
    if w > pi {
        w -= two_pi;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_covers_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5 + 4.0 * PI) - 0.5).abs() < 1e-12);
        assert!((wrap_angle(-0.5 - 2.0 * PI) + 0.5).abs() < 1e-12);
        assert!((wrap_angle(1.0f32) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn lit_round_trips() {
        assert_eq!(<f64 as Real>::lit(0.25), 0.25);
        assert_eq!(<f32 as Real>::lit(0.25).as_f64(), 0.25);
    }
}
