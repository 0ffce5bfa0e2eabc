//! Scalar abstraction shared by the geometric stages.

use std::fmt::{Debug, Display};
use std::num::ParseFloatError;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};

/// Floating point scalar usable by the geometry, grid and synthesis code.
///
/// Implemented for `f32` and `f64`. Selection works on integer
/// coefficients and never sees this type.
pub trait Real:
    Float
    + FromPrimitive
    + FromStr<Err = ParseFloatError>
    + Display
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for finite input.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }

    /// Tolerance used when validating unit quaternions read from text.
    fn unit_tolerance() -> Self {
        let sixteen_eps = Self::epsilon() * Self::lit(16.0);
        sixteen_eps.max(Self::lit(1e-6))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Formats a value with nine significant digits, `%.9g` style.
pub fn format_sig9<T: Real>(value: T) -> String {
    let x = value.as_f64();
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        trim_fraction(&fixed).to_string()
    } else {
        format!("{}e{}", trim_fraction(mantissa), exp)
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
