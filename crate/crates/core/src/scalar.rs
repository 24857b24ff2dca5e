//! Exact ordered scalars used for utilities and prior weights.
//!
//! Every comparison made by the solution notions is a weak inequality, so
//! ties are meaningful and must be decided exactly. The [`Scalar`] bound asks
//! for a total order (`Ord`), which rules out `f32`/`f64` at compile time.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Num, Signed};

/// An exact, totally ordered field element.
pub trait Scalar: Clone + Ord + Num + Debug + Display + Send + Sync + 'static {
    /// Parses `"p"`, `"-p"`, `"+p"` or `"p/q"` with `q > 0`.
    fn parse_exact(text: &str) -> Option<Self>;

    /// Builds `numerator / denominator`; panics on a zero denominator.
    fn from_ratio(numerator: i64, denominator: i64) -> Self;

    /// Renders as `"p/q"` (or `"p"` when integral), the inverse of [`Scalar::parse_exact`].
    fn render(&self) -> String {
        self.to_string()
    }
}

impl<T> Scalar for Ratio<T>
where
    T: Clone + Integer + Signed + FromStr + Display + Debug + From<i64> + Send + Sync + 'static,
{
    fn parse_exact(text: &str) -> Option<Self> {
        let text = text.trim();
        let (num, den) = match text.split_once('/') {
            Some((n, d)) => (n.trim(), Some(d.trim())),
            None => (text, None),
        };
        let num = parse_signed::<T>(num)?;
        let den = match den {
            Some(d) => {
                if d.is_empty() || !d.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                let d: T = d.parse().ok()?;
                if d.is_zero() {
                    return None;
                }
                d
            }
            None => T::one(),
        };
        Some(Ratio::new(num, den))
    }

    fn from_ratio(numerator: i64, denominator: i64) -> Self {
        Ratio::new(T::from(numerator), T::from(denominator))
    }
}

fn parse_signed<T: FromStr + Signed>(text: &str) -> Option<T> {
    let (negative, digits) = match text.as_bytes().first()? {
        b'-' => (true, &text[1..]),
        b'+' => (false, &text[1..]),
        _ => (false, text),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let value: T = digits.parse().ok()?;
    Some(if negative { -value } else { value })
}
