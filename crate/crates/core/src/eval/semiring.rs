use std::fmt;
use std::str::FromStr;

use crate::scalar::Scalar;

/// A commutative semiring over a floating point carrier.
///
/// `add` and `mul` must be associative; segment reductions fold them left to
/// right starting from the first element, so `zero` and `one` are only used
/// for constant outputs.
pub trait Semiring<T: Scalar>: Sync {
    fn zero(&self) -> T;
    fn one(&self) -> T;
    fn add(&self, a: T, b: T) -> T;
    fn mul(&self, a: T, b: T) -> T;
}

/// `(+, x)` over the reals.
#[derive(Debug, Clone, Copy, Default)]
pub struct RealSemiring;

/// `(logaddexp, +)` over `[-inf, +inf)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogSemiring;

/// `(or, and)` over `{0, 1}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BooleanSemiring;

/// `(max, x)` over the non-negative reals.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxProductSemiring;

impl<T: Scalar> Semiring<T> for RealSemiring {
    fn zero(&self) -> T {
        T::zero()
    }
    fn one(&self) -> T {
        T::one()
    }
    fn add(&self, a: T, b: T) -> T {
        a + b
    }
    fn mul(&self, a: T, b: T) -> T {
        a * b
    }
}

/// `ln(e^a + e^b)` without overflow; `-inf` is the additive identity.
pub fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == T::neg_infinity() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

impl<T: Scalar> Semiring<T> for LogSemiring {
    fn zero(&self) -> T {
        T::neg_infinity()
    }
    fn one(&self) -> T {
        T::zero()
    }
    fn add(&self, a: T, b: T) -> T {
        log_add_exp(a, b)
    }
    fn mul(&self, a: T, b: T) -> T {
        a + b
    }
}

impl<T: Scalar> Semiring<T> for BooleanSemiring {
    fn zero(&self) -> T {
        T::zero()
    }
    fn one(&self) -> T {
        T::one()
    }
    fn add(&self, a: T, b: T) -> T {
        if a != T::zero() || b != T::zero() {
            T::one()
        } else {
            T::zero()
        }
    }
    fn mul(&self, a: T, b: T) -> T {
        if a != T::zero() && b != T::zero() {
            T::one()
        } else {
            T::zero()
        }
    }
}

impl<T: Scalar> Semiring<T> for MaxProductSemiring {
    fn zero(&self) -> T {
        T::zero()
    }
    fn one(&self) -> T {
        T::one()
    }
    fn add(&self, a: T, b: T) -> T {
        a.max(b)
    }
    fn mul(&self, a: T, b: T) -> T {
        a * b
    }
}

/// Runtime choice among the built-in semirings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinSemiring {
    Real,
    Log,
    Boolean,
    MaxProduct,
}

impl BuiltinSemiring {
    pub const ALL: [BuiltinSemiring; 4] =
        [BuiltinSemiring::Real, BuiltinSemiring::Log, BuiltinSemiring::Boolean, BuiltinSemiring::MaxProduct];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinSemiring::Real => "real",
            BuiltinSemiring::Log => "log",
            BuiltinSemiring::Boolean => "bool",
            BuiltinSemiring::MaxProduct => "maxprod",
        }
    }
}

impl<T: Scalar> Semiring<T> for BuiltinSemiring {
    fn zero(&self) -> T {
        match self {
            BuiltinSemiring::Real => Semiring::<T>::zero(&RealSemiring),
            BuiltinSemiring::Log => Semiring::<T>::zero(&LogSemiring),
            BuiltinSemiring::Boolean => Semiring::<T>::zero(&BooleanSemiring),
            BuiltinSemiring::MaxProduct => Semiring::<T>::zero(&MaxProductSemiring),
        }
    }
    fn one(&self) -> T {
        match self {
            BuiltinSemiring::Real => Semiring::<T>::one(&RealSemiring),
            BuiltinSemiring::Log => Semiring::<T>::one(&LogSemiring),
            BuiltinSemiring::Boolean => Semiring::<T>::one(&BooleanSemiring),
            BuiltinSemiring::MaxProduct => Semiring::<T>::one(&MaxProductSemiring),
        }
    }
    fn add(&self, a: T, b: T) -> T {
        match self {
            BuiltinSemiring::Real => RealSemiring.add(a, b),
            BuiltinSemiring::Log => LogSemiring.add(a, b),
            BuiltinSemiring::Boolean => BooleanSemiring.add(a, b),
            BuiltinSemiring::MaxProduct => MaxProductSemiring.add(a, b),
        }
    }
    fn mul(&self, a: T, b: T) -> T {
        match self {
            BuiltinSemiring::Real => RealSemiring.mul(a, b),
            BuiltinSemiring::Log => LogSemiring.mul(a, b),
            BuiltinSemiring::Boolean => BooleanSemiring.mul(a, b),
            BuiltinSemiring::MaxProduct => MaxProductSemiring.mul(a, b),
        }
    }
}

impl fmt::Display for BuiltinSemiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinSemiring {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "real" | "prob" => Ok(BuiltinSemiring::Real),
            "log" => Ok(BuiltinSemiring::Log),
            "bool" | "boolean" => Ok(BuiltinSemiring::Boolean),
            "maxprod" | "max-product" | "maxproduct" => Ok(BuiltinSemiring::MaxProduct),
            other => Err(format!("unknown semiring `{other}` (expected real, log, bool or maxprod)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_cases() {
        let x: f64 = log_add_exp(0.25f64.ln(), 0.5f64.ln());
        assert!((x.exp() - 0.75).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, -3.0), -3.0);
        assert!((log_add_exp(1000.0f64, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn identities() {
        for s in BuiltinSemiring::ALL {
            for x in [0.0f64, 0.3, 1.0] {
                let x = if s == BuiltinSemiring::Boolean { x.ceil() } else { x };
                assert_eq!(s.add(s.zero(), x), x, "{s}");
                assert_eq!(s.mul(s.one(), x), x, "{s}");
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for s in BuiltinSemiring::ALL {
            assert_eq!(s.name().parse::<BuiltinSemiring>().unwrap(), s);
        }
        assert!("tropical".parse::<BuiltinSemiring>().is_err());
    }
}
