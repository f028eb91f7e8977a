//! Unit-disk chord geometry: directions, boundary points, travel times, and
//! incoming/outgoing classification of boundary-direction pairs.

use crate::{Error, Result};
use std::f64::consts::{PI, TAU};

/// Tolerance on the normal component below which a boundary-direction pair
/// counts as tangent, and on radius checks at the rim.
pub const TANGENT_TOL: f64 = 1e-12;

/// A unit direction with cached components, so that reversal is an exact
/// negation rather than a trigonometric round trip.
#[derive(Clone, Copy, Debug)]
pub struct Direction {
    phi: f64,
    cos: f64,
    sin: f64,
}

impl Direction {
    /// Direction at angle `phi` (radians), reduced to `[0, 2*pi)`.
    pub fn new(phi: f64) -> Self {
        let phi = phi.rem_euclid(TAU);
        Self {
            phi,
            cos: phi.cos(),
            sin: phi.sin(),
        }
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Unit vector `theta = (cos phi, sin phi)`.
    pub fn theta(&self) -> (f64, f64) {
        (self.cos, self.sin)
    }

    /// Left-hand normal `theta_perp = (-sin phi, cos phi)`.
    pub fn perp(&self) -> (f64, f64) {
        (-self.sin, self.cos)
    }

    /// Reversed direction; components are negated bit-exactly so that a chord
    /// traversed both ways has identical endpoints.
    pub fn opposite(&self) -> Self {
        Self {
            phi: (self.phi + PI).rem_euclid(TAU),
            cos: -self.cos,
            sin: -self.sin,
        }
    }
}

/// Point of the unit circle at arc parameter `beta`; the position doubles as
/// the outward unit normal.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub beta: f64,
    pub pos: (f64, f64),
}

/// Boundary point at parameter `beta`.
pub fn boundary_point(beta: f64) -> BoundaryPoint {
    BoundaryPoint {
        beta,
        pos: (beta.cos(), beta.sin()),
    }
}

/// How a boundary-direction pair meets the disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RayClass {
    /// `eta . theta < 0`: the ray enters the disk.
    Incoming,
    /// `eta . theta > 0`: the ray leaves the disk.
    Outgoing,
    /// `|eta . theta|` below [`TANGENT_TOL`].
    Tangent,
}

/// Classify the pair `(zeta, theta)` by the sign of the normal component.
pub fn classify(zeta: &BoundaryPoint, d: &Direction) -> RayClass {
    let (tx, ty) = d.theta();
    let dot = zeta.pos.0 * tx + zeta.pos.1 * ty;
    if dot.abs() < TANGENT_TOL {
        RayClass::Tangent
    } else if dot > 0.0 {
        RayClass::Outgoing
    } else {
        RayClass::Incoming
    }
}

/// Travel times `(tau_minus, tau_plus)` from `x` to the circle along `-theta`
/// and `+theta`.  Both are nonnegative; `x + tau_plus * theta` and
/// `x - tau_minus * theta` lie on the unit circle.
///
/// Errors with [`Error::OutsideDisk`] when `|x| > 1` beyond [`TANGENT_TOL`].
pub fn travel_times(x: (f64, f64), d: &Direction) -> Result<(f64, f64)> {
    let (tx, ty) = d.theta();
    let p = x.0 * tx + x.1 * ty;
    let q = x.0 * x.0 + x.1 * x.1 - 1.0;
    if q > TANGENT_TOL {
        return Err(Error::OutsideDisk(x.0, x.1));
    }
    // Roots of |x + t theta|^2 = 1 are t = -p +/- sqrt(p^2 - q).
    let disc = (p * p - q).max(0.0);
    let s = disc.sqrt();
    Ok(((s + p).max(0.0), (s - p).max(0.0)))
}

/// An oriented chord of the disk through `x` in direction `d`.
#[derive(Clone, Copy, Debug)]
pub struct Chord {
    pub x: (f64, f64),
    pub d: Direction,
    pub tau_minus: f64,
    pub tau_plus: f64,
}

impl Chord {
    pub fn through(x: (f64, f64), d: Direction) -> Result<Self> {
        let (tau_minus, tau_plus) = travel_times(x, &d)?;
        Ok(Self {
            x,
            d,
            tau_minus,
            tau_plus,
        })
    }

    /// Exit point `x + tau_plus * theta`.
    pub fn endpoint_plus(&self) -> (f64, f64) {
        let (tx, ty) = self.d.theta();
        (self.x.0 + self.tau_plus * tx, self.x.1 + self.tau_plus * ty)
    }

    /// Entry point `x - tau_minus * theta`.
    pub fn endpoint_minus(&self) -> (f64, f64) {
        let (tx, ty) = self.d.theta();
        (
            self.x.0 - self.tau_minus * tx,
            self.x.1 - self.tau_minus * ty,
        )
    }

    /// Chord length `tau_minus + tau_plus`.
    pub fn length(&self) -> f64 {
        self.tau_minus + self.tau_plus
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn center_travel_times_are_unit() {
        for k in 0..8 {
            let d = Direction::new(0.3 + k as f64);
            let (tm, tp) = travel_times((0.0, 0.0), &d).unwrap();
            assert_abs_diff_eq!(tm, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(tp, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn axis_travel_times() {
        let d = Direction::new(0.0);
        let (tm, tp) = travel_times((0.5, 0.0), &d).unwrap();
        assert_abs_diff_eq!(tm, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tp, 0.5, epsilon = 1e-15);

        let (tm, tp) = travel_times((0.0, 0.6), &d).unwrap();
        assert_abs_diff_eq!(tm, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(tp, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn outside_point_is_rejected() {
        let d = Direction::new(1.0);
        assert!(travel_times((1.1, 0.0), &d).is_err());
        // On-circle points are accepted.
        assert!(travel_times((1.0, 0.0), &d).is_ok());
    }

    #[test]
    fn classification_signs() {
        let zeta = boundary_point(0.0); // (1, 0)
        assert_eq!(classify(&zeta, &Direction::new(0.0)), RayClass::Outgoing);
        assert_eq!(classify(&zeta, &Direction::new(PI)), RayClass::Incoming);
        assert_eq!(
            classify(&zeta, &Direction::new(PI / 2.0)),
            RayClass::Tangent
        );
    }

    #[test]
    fn perp_is_left_normal() {
        let d = Direction::new(0.7);
        let (tx, ty) = d.theta();
        let (px, py) = d.perp();
        assert_abs_diff_eq!(tx * px + ty * py, 0.0, epsilon = 1e-16);
        // Rotating theta by +90 degrees gives perp.
        assert_abs_diff_eq!(px, -ty, epsilon = 1e-16);
        assert_abs_diff_eq!(py, tx, epsilon = 1e-16);
    }

    proptest! {
        #[test]
        fn chord_endpoints_lie_on_circle(r in 0.0f64..0.999, ang in 0.0f64..TAU, phi in -10.0f64..10.0) {
            let x = (r * ang.cos(), r * ang.sin());
            let c = Chord::through(x, Direction::new(phi)).unwrap();
            let (ex, ey) = c.endpoint_plus();
            prop_assert!((ex * ex + ey * ey - 1.0).abs() < 1e-12);
            let (ex, ey) = c.endpoint_minus();
            prop_assert!((ex * ex + ey * ey - 1.0).abs() < 1e-12);
        }

        #[test]
        fn reversal_swaps_travel_times_exactly(r in 0.0f64..0.999, ang in 0.0f64..TAU, phi in -10.0f64..10.0) {
            let x = (r * ang.cos(), r * ang.sin());
            let d = Direction::new(phi);
            let (tm, tp) = travel_times(x, &d).unwrap();
            let (rm, rp) = travel_times(x, &d.opposite()).unwrap();
            // Bit-exact swap: the quadratic sees the same p up to sign.
            prop_assert_eq!(tm, rp);
            prop_assert_eq!(tp, rm);
        }
    }
}
