//! Disutility functions: monotone maps from distance to user cost.

use std::fmt;
use std::sync::Arc;

/// Cost-of-distance function h with h(0) = 0, increasing on [0, inf).
///
/// `Identity` admits exact closed-form integration against piecewise
/// exponential densities; the other variants go through adaptive quadrature.
#[derive(Clone)]
pub enum DisutilityFn {
    Identity,
    Sqrt,
    Square,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl DisutilityFn {
    pub fn eval(&self, d: f64) -> f64 {
        debug_assert!(d >= 0.0);
        match self {
            DisutilityFn::Identity => d,
            DisutilityFn::Sqrt => d.sqrt(),
            DisutilityFn::Square => d * d,
            DisutilityFn::Custom(f) => f(d),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, DisutilityFn::Identity)
    }

    /// Sampled validity check: h(0) = 0 and strictly increasing on the grid
    /// (0, 100] with step 0.01. The log-growth condition is not enforced.
    pub fn validate(&self) -> bool {
        if self.eval(0.0) != 0.0 {
            return false;
        }
        let mut prev = 0.0;
        for i in 1..=10_000 {
            let x = i as f64 * 0.01;
            let y = self.eval(x);
            if !(y > prev) || !y.is_finite() {
                return false;
            }
            prev = y;
        }
        true
    }
}

impl fmt::Debug for DisutilityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DisutilityFn::Identity => write!(f, "Identity"),
            DisutilityFn::Sqrt => write!(f, "Sqrt"),
            DisutilityFn::Square => write!(f, "Square"),
            DisutilityFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        assert!(DisutilityFn::Identity.validate());
        assert!(DisutilityFn::Sqrt.validate());
        assert!(DisutilityFn::Square.validate());
    }

    #[test]
    fn constant_custom_fails_validation() {
        let c = DisutilityFn::Custom(Arc::new(|_| 0.0));
        assert!(!c.validate());
    }

    #[test]
    fn shifted_custom_fails_h0() {
        let c = DisutilityFn::Custom(Arc::new(|d| d + 1.0));
        assert!(!c.validate());
    }
}
