//! Population profiles in the co-moving frame.

/// A profile `s -> Theta(s)` with its derivative, defined on the whole line.
pub trait Profile: Send + Sync {
    fn theta(&self, s: f64) -> f64;
    fn theta_prime(&self, s: f64) -> f64;

    /// Window on which the profile carries non-trivial structure.
    fn window(&self) -> (f64, f64) {
        (-50.0, 50.0)
    }
}

/// `Theta(s) = theta0 + slope * s` on the whole line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineProfile {
    pub theta0: f64,
    pub slope: f64,
}

impl Profile for AffineProfile {
    fn theta(&self, s: f64) -> f64 {
        self.theta0 + self.slope * s
    }

    fn theta_prime(&self, _: f64) -> f64 {
        self.slope
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantProfile(pub f64);

impl Profile for ConstantProfile {
    fn theta(&self, _: f64) -> f64 {
        self.0
    }

    fn theta_prime(&self, _: f64) -> f64 {
        0.0
    }
}

impl<P: Profile + ?Sized> Profile for &P {
    fn theta(&self, s: f64) -> f64 {
        (**self).theta(s)
    }

    fn theta_prime(&self, s: f64) -> f64 {
        (**self).theta_prime(s)
    }

    fn window(&self) -> (f64, f64) {
        (**self).window()
    }
}
