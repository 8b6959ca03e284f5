//! Boundary-layer velocity profile and pointwise friction velocity.
//!
//! The profile is linear up to `z0+` and logarithmic beyond,
//!
//! ```text
//! L(z) = z                          for 0 <= z <= z0+
//! L(z) = ln(z / z0+) / kappa + z0+  for z > z0+
//! ```
//!
//! The log branch is continued past `zmax+` so that `F(beta) = beta L(alpha beta)`,
//! `alpha = x3 / nu`, is a bijection of `[0, inf)`. The friction velocity is
//! `u* = F^{-1}(|v|)` with `x3` the distance to the physical wall.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallLaw {
    kappa: f64,
    z0_plus: f64,
    zmax_plus: f64,
}

impl Default for WallLaw {
    fn default() -> Self {
        Self {
            kappa: 0.41,
            z0_plus: 20.0,
            zmax_plus: 100.0,
        }
    }
}

impl WallLaw {
    pub fn new(kappa: f64, z0_plus: f64, zmax_plus: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid("kappa", format!("must be > 0, got {kappa}")));
        }
        if !(z0_plus > 0.0 && z0_plus.is_finite()) {
            return Err(invalid("z0_plus", format!("must be > 0, got {z0_plus}")));
        }
        if !(zmax_plus > z0_plus && zmax_plus.is_finite()) {
            return Err(invalid("zmax_plus", format!("must exceed z0_plus = {z0_plus}, got {zmax_plus}")));
        }
        Ok(Self {
            kappa,
            z0_plus,
            zmax_plus,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn z0_plus(&self) -> f64 {
        self.z0_plus
    }

    /// Nominal outer edge of the log layer. Informational: the profile is not cut there.
    pub fn zmax_plus(&self) -> f64 {
        self.zmax_plus
    }

    /// Profile `L(z+)`.
    pub fn eval(&self, z_plus: f64) -> Result<f64> {
        if !(z_plus >= 0.0) {
            return Err(invalid("z_plus", format!("must be >= 0, got {z_plus}")));
        }
        Ok(self.profile(z_plus))
    }

    fn profile(&self, z: f64) -> f64 {
        if z <= self.z0_plus {
            z
        } else {
            (z / self.z0_plus).ln() / self.kappa + self.z0_plus
        }
    }

    fn profile_slope(&self, z: f64) -> f64 {
        if z <= self.z0_plus {
            1.0
        } else {
            1.0 / (self.kappa * z)
        }
    }

    /// `F(beta) = beta L(alpha beta)`.
    pub fn forward(&self, beta: f64, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0) {
            return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
        }
        if !(beta >= 0.0) {
            return Err(invalid("beta", format!("must be >= 0, got {beta}")));
        }
        Ok(self.f(beta, alpha))
    }

    fn f(&self, beta: f64, alpha: f64) -> f64 {
        beta * self.profile(alpha * beta)
    }

    fn df(&self, beta: f64, alpha: f64) -> f64 {
        let z = alpha * beta;
        self.profile(z) + z * self.profile_slope(z)
    }

    /// Solves `F(beta) = speed` by Newton's method safeguarded with bisection.
    ///
    /// Iterates until the Newton step falls below `tol * beta` and the
    /// residual below `tol * (1 + speed)`.
    pub fn invert(&self, speed: f64, alpha: f64, tol: f64, max_iterations: usize) -> Result<f64> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
        }
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(invalid("speed", format!("must be finite and >= 0, got {speed}")));
        }
        if speed == 0.0 {
            return Ok(0.0);
        }
        let fail = |iterations| Error::InversionFailed {
            speed,
            alpha,
            iterations,
        };

        let mut lo = 0.0;
        let mut hi = speed.max(1.0) * (1.0 / alpha).max(1.0);
        let mut grow = 0;
        while self.f(hi, alpha) < speed {
            lo = hi;
            hi *= 2.0;
            grow += 1;
            if grow > 2000 {
                return Err(fail(grow));
            }
        }

        // Start from the linear- or log-branch estimate, whichever is consistent.
        let linear = (speed / alpha).sqrt();
        let mut beta = if alpha * linear <= self.z0_plus { linear } else { 0.5 * (lo + hi) };
        if !(beta > lo && beta < hi) {
            beta = 0.5 * (lo + hi);
        }
        let res_tol = tol * (1.0 + speed);
        for _ in 0..max_iterations {
            let r = self.f(beta, alpha) - speed;
            if r == 0.0 {
                return Ok(beta);
            }
            if r > 0.0 {
                hi = beta;
            } else {
                lo = beta;
            }
            let mut next = beta - r / self.df(beta, alpha);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - beta).abs();
            beta = next;
            if (step <= tol * beta && r.abs() <= res_tol) || hi - lo <= f64::EPSILON * hi {
                return Ok(beta);
            }
        }
        Err(fail(max_iterations))
    }
}

/// Friction velocity as a function of speed and wall distance.
pub trait FrictionLaw: Send + Sync {
    fn friction_velocity(&self, speed: f64, wall_distance: f64) -> Result<f64>;
}

/// `u*(v, x) = F^{-1}(|v|)` with `alpha = wall_distance / nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionVelocityEvaluator {
    pub wall_law: WallLaw,
    pub nu: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl FrictionVelocityEvaluator {
    pub fn new(wall_law: WallLaw, nu: f64) -> Result<Self> {
        let ev = Self {
            wall_law,
            nu,
            tolerance: 1e-12,
            max_iterations: 100,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        self.tolerance = tolerance;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(invalid("nu", format!("must be > 0, got {}", self.nu)));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", format!("must be > 0, got {}", self.tolerance)));
        }
        Ok(())
    }

    /// Boundary-layer length scale `lambda = nu / u*`.
    pub fn length_scale(&self, speed: f64, wall_distance: f64) -> Result<f64> {
        Ok(self.nu / self.friction_velocity(speed, wall_distance)?)
    }
}

impl FrictionLaw for FrictionVelocityEvaluator {
    fn friction_velocity(&self, speed: f64, wall_distance: f64) -> Result<f64> {
        if !(wall_distance > 0.0) {
            return Err(invalid("wall_distance", format!("must be > 0, got {wall_distance}")));
        }
        self.wall_law
            .invert(speed, wall_distance / self.nu, self.tolerance, self.max_iterations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain bisection on the monotone map, independent of the Newton path.
    fn bisect(law: &WallLaw, speed: f64, alpha: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while law.f(hi, alpha) < speed {
            hi *= 2.0;
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if law.f(mid, alpha) < speed {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi.max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn profile_values() {
        let law = WallLaw::default();
        assert_eq!(law.eval(0.0).unwrap(), 0.0);
        assert_eq!(law.eval(20.0).unwrap(), 20.0);
        let expected = 5f64.ln() / 0.41 + 20.0;
        assert!((law.eval(100.0).unwrap() - expected).abs() < 1e-13);
        assert!((law.eval(100.0).unwrap() - 23.92546).abs() < 1e-5);
        assert!(law.eval(-1.0).is_err());
    }

    #[test]
    fn profile_is_continuous_and_increasing() {
        let law = WallLaw::default();
        let z0 = law.z0_plus();
        let right = (z0 * (1.0 + f64::EPSILON) / z0).ln() / law.kappa() + z0;
        assert!((right - z0).abs() < 1e-12);
        let mut prev = -1.0;
        for i in 0..10_000 {
            let z = i as f64 * 0.05;
            let l = law.eval(z).unwrap();
            assert!(l > prev, "not increasing at {z}");
            prev = l;
        }
    }

    #[test]
    fn forward_values() {
        let law = WallLaw::default();
        assert_eq!(law.forward(0.0, 3.0).unwrap(), 0.0);
        assert!((law.forward(10.0, 1.0).unwrap() - 100.0).abs() < 1e-12);
        let expected = 10.0 * (5f64.ln() / 0.41 + 20.0);
        assert!((law.forward(10.0, 10.0).unwrap() - expected).abs() < 1e-11);
        assert!((law.forward(10.0, 10.0).unwrap() - 239.2546).abs() < 1e-4);
        assert!(law.forward(1.0, 0.0).is_err());
    }

    #[test]
    fn inverse_values() {
        let law = WallLaw::default();
        assert_eq!(law.invert(0.0, 2.0, 1e-12, 100).unwrap(), 0.0);
        assert!((law.invert(100.0, 1.0, 1e-12, 100).unwrap() - 10.0).abs() < 1e-12);
        assert!(law.invert(1.0, -1.0, 1e-12, 100).is_err());
        assert!(law.invert(-1.0, 1.0, 1e-12, 100).is_err());
    }

    #[test]
    fn matches_bisection_oracle() {
        let law = WallLaw::default();
        for &(s, a) in &[(1e-6, 1e-3), (0.3, 10.0), (5.0, 0.2), (1e4, 1e3), (123.0, 0.5)] {
            let newton = law.invert(s, a, 1e-12, 100).unwrap();
            let oracle = bisect(&law, s, a);
            assert!((newton - oracle).abs() <= 1e-12 * oracle.max(1.0), "{s} {a}: {newton} vs {oracle}");
        }
    }

    #[test]
    fn friction_velocity_growth_is_sublinear() {
        let ev = FrictionVelocityEvaluator::new(WallLaw::default(), 1e-3).unwrap();
        assert_eq!(ev.friction_velocity(0.0, 0.01).unwrap(), 0.0);
        let u3 = ev.friction_velocity(1e3, 0.01).unwrap();
        let u6 = ev.friction_velocity(1e6, 0.01).unwrap();
        assert!(u6 / 1e6 < u3 / 1e3);
        let law = WallLaw::default();
        assert!((u3 - bisect(&law, 1e3, 10.0)).abs() < 1e-10 * u3);
        assert!((u6 - bisect(&law, 1e6, 10.0)).abs() < 1e-10 * u6);
        assert!(ev.friction_velocity(1.0, 0.0).is_err());
        let lambda = ev.length_scale(2.0, 0.05).unwrap();
        assert!(lambda.is_finite() && lambda > 0.0);
    }

    #[test]
    fn growth_constant_bounded_across_wall_layer() {
        let nu = 1e-3;
        let ev = FrictionVelocityEvaluator::new(WallLaw::default(), nu).unwrap();
        let mut worst: f64 = 0.0;
        for i in 1..=20 {
            let x3 = 0.01 + 0.1 * i as f64 / 20.0;
            let c = (0..60)
                .map(|k| 10f64.powf(-3.0 + 0.15 * k as f64))
                .map(|s| ev.friction_velocity(s, x3).unwrap() / (1.0 + s))
                .fold(0.0, f64::max);
            worst = worst.max(c);
        }
        assert!(worst.is_finite() && worst < 10.0, "C = {worst}");
    }

    proptest! {
        #[test]
        fn round_trip(beta in 1e-6f64..1e3, log_alpha in -3.0f64..3.0) {
            let law = WallLaw::default();
            let alpha = 10f64.powf(log_alpha);
            let s = law.forward(beta, alpha).unwrap();
            let back = law.invert(s, alpha, 1e-12, 100).unwrap();
            prop_assert!((back - beta).abs() <= 1e-10 * beta.max(1.0));
            let again = law.forward(back, alpha).unwrap();
            prop_assert!((again - s).abs() <= 1e-10 * s.max(1e-300));
        }

        #[test]
        fn monotone_in_speed(s1 in 1e-3f64..1e3, ds in 1e-6f64..10.0, x3 in 0.01f64..0.5) {
            let ev = FrictionVelocityEvaluator::new(WallLaw::default(), 1e-3).unwrap();
            prop_assert!(ev.friction_velocity(s1 + ds, x3).unwrap() > ev.friction_velocity(s1, x3).unwrap());
        }
    }
}
