//! Answer equivalence for math-style final answers.
//!
//! Numeric answers (integers, decimals, `a/b`, `\frac{a}{b}`, percentages)
//! are compared as exact rationals. Everything else falls back to a
//! normalized string comparison: no algebraic simplification is attempted,
//! so equivalent but differently written expressions compare unequal.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MathValue {
    /// Reduced fraction with a positive denominator.
    Rational(BigRational),
    /// `significand / 10^scale`, as written.
    Decimal { significand: BigInt, scale: u32 },
    /// Non-numeric answer, normalized.
    Symbolic(String),
}

impl MathValue {
    /// Exact rational value of a numeric answer.
    pub fn to_rational(&self) -> Option<BigRational> {
        match self {
            MathValue::Rational(r) => Some(r.clone()),
            MathValue::Decimal { significand, scale } => Some(BigRational::new(
                significand.clone(),
                BigInt::from(10u32).pow(*scale),
            )),
            MathValue::Symbolic(_) => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, MathValue::Symbolic(_))
    }
}

impl fmt::Display for MathValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MathValue::Rational(r) => write!(f, "{r}"),
            MathValue::Decimal { .. } => write!(f, "{}", self.to_rational().expect("numeric")),
            MathValue::Symbolic(s) => f.write_str(s),
        }
    }
}

/// Index of the brace closing the one at `open`, if any.
fn matching_close(s: &str, open: usize, (lb, rb): (u8, u8)) -> Option<usize> {
    let mut depth = 0usize;
    for (i, b) in s.bytes().enumerate().skip(open) {
        if b == lb {
            depth += 1;
        } else if b == rb {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}

/// Strips one `$$…$$`, `$…$` or `\boxed{…}` wrapper, if the whole string is
/// wrapped.
fn strip_wrapper(s: &str) -> Option<&str> {
    if let Some(inner) = s.strip_prefix("$$").and_then(|r| r.strip_suffix("$$")) {
        return Some(inner);
    }
    if s.len() >= 2 {
        if let Some(inner) = s.strip_prefix('$').and_then(|r| r.strip_suffix('$')) {
            return Some(inner);
        }
    }
    let trimmed = s.strip_prefix("\\boxed")?.trim_start();
    if !trimmed.starts_with('{') {
        return None;
    }
    let open = s.len() - trimmed.len();
    let close = matching_close(s, open, (b'{', b'}'))?;
    (close == s.len() - 1).then(|| &s[open + 1..close])
}

fn strip_wrappers(mut s: &str) -> &str {
    s = s.trim();
    while let Some(inner) = strip_wrapper(s) {
        s = inner.trim();
    }
    s
}

fn strip_parens(s: &str) -> Option<&str> {
    if !s.starts_with('(') {
        return None;
    }
    let close = matching_close(s, 0, (b'(', b')'))?;
    (close == s.len() - 1).then(|| s[1..close].trim())
}

fn split_sign(s: &str) -> (bool, &str) {
    match s.as_bytes().first() {
        Some(b'-') => (true, s[1..].trim_start()),
        Some(b'+') => (false, s[1..].trim_start()),
        _ => (false, s),
    }
}

fn all_digits(s: &str) -> bool {
    s.bytes().all(|b| b.is_ascii_digit())
}

/// `[+-]digits`, `[+-]digits.digits*` or `[+-].digits`.
fn parse_plain(s: &str) -> Option<MathValue> {
    let (negative, body) = split_sign(s);
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    if !all_digits(int_part) {
        return None;
    }
    let value = match frac_part {
        None if int_part.is_empty() => return None,
        None => MathValue::Rational(BigRational::from_integer(int_part.parse().ok()?)),
        Some(f) if !all_digits(f) || (f.is_empty() && int_part.is_empty()) => return None,
        Some(f) => {
            let digits = format!("{int_part}{f}");
            MathValue::Decimal {
                significand: digits.parse().ok()?,
                scale: u32::try_from(f.len()).ok()?,
            }
        }
    };
    Some(if negative { negate(value) } else { value })
}

fn negate(v: MathValue) -> MathValue {
    match v {
        MathValue::Rational(r) => MathValue::Rational(-r),
        MathValue::Decimal { significand, scale } => MathValue::Decimal {
            significand: -significand,
            scale,
        },
        s => s,
    }
}

/// Numerator or denominator of a fraction, optionally in parentheses.
fn operand(s: &str) -> Option<BigRational> {
    let s = s.trim();
    parse_plain(strip_parens(s).unwrap_or(s))?.to_rational()
}

fn ratio(num: &str, den: &str) -> Option<Result<MathValue>> {
    let n = operand(num)?;
    let d = operand(den)?;
    if d.is_zero() {
        return Some(Err(Error::DivisionByZero));
    }
    Some(Ok(MathValue::Rational(n / d)))
}

/// `\frac{a}{b}`, `\dfrac{a}{b}` or `\tfrac{a}{b}`.
fn parse_latex_frac(s: &str) -> Option<Result<MathValue>> {
    let (negative, body) = split_sign(s);
    let rest = ["\\frac", "\\dfrac", "\\tfrac"]
        .iter()
        .find_map(|p| body.strip_prefix(p))?
        .trim_start();
    if !rest.starts_with('{') {
        return None;
    }
    let num_close = matching_close(rest, 0, (b'{', b'}'))?;
    let after = rest[num_close + 1..].trim_start();
    if !after.starts_with('{') {
        return None;
    }
    let den_close = matching_close(after, 0, (b'{', b'}'))?;
    if den_close != after.len() - 1 {
        return None;
    }
    let value = ratio(&rest[1..num_close], &after[1..den_close])?;
    Some(value.map(|v| if negative { negate(v) } else { v }))
}

fn parse_numeric(s: &str) -> Option<Result<MathValue>> {
    if let Some(body) = s.strip_suffix("\\%").or_else(|| s.strip_suffix('%')) {
        let v = parse_plain(body.trim_end())?.to_rational()?;
        return Some(Ok(MathValue::Rational(v / BigRational::from_integer(100.into()))));
    }
    if let Some(v) = parse_plain(s) {
        return Some(Ok(v));
    }
    if let Some((num, den)) = s.split_once('/') {
        return ratio(num, den);
    }
    parse_latex_frac(s)
}

fn normalize_symbolic(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses a final answer into a [`MathValue`].
///
/// Fails only when a fraction has a zero denominator.
pub fn parse_answer(text: &str) -> Result<MathValue> {
    let unwrapped = strip_wrappers(text);
    let candidates = std::iter::once(unwrapped).chain(strip_parens(unwrapped));
    for candidate in candidates {
        if let Some(value) = parse_numeric(candidate) {
            return value;
        }
    }
    Ok(MathValue::Symbolic(normalize_symbolic(unwrapped)))
}

/// True when both answers denote the same number, or are textually the same
/// after normalization. Parse failures compare unequal.
pub fn answers_equivalent(predicted: &str, truth: &str) -> bool {
    let (Ok(a), Ok(b)) = (parse_answer(predicted), parse_answer(truth)) else {
        return false;
    };
    match (a.to_rational(), b.to_rational()) {
        (Some(x), Some(y)) => x == y,
        (None, None) => a == b,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn latex_fraction() {
        assert_eq!(
            parse_answer("\\frac{3}{4}").unwrap(),
            MathValue::Rational(rat(3, 4))
        );
        assert_eq!(
            parse_answer("\\dfrac{6}{8}").unwrap(),
            MathValue::Rational(rat(3, 4))
        );
        assert_eq!(
            parse_answer("-\\frac{1}{2}").unwrap(),
            MathValue::Rational(rat(-1, 2))
        );
        assert_eq!(
            parse_answer("\\frac { 1 } { -2 }").unwrap(),
            MathValue::Rational(rat(-1, 2))
        );
    }

    #[test]
    fn decimal_converts_exactly() {
        let v = parse_answer("  0.75 ").unwrap();
        assert_eq!(
            v,
            MathValue::Decimal {
                significand: 75.into(),
                scale: 2
            }
        );
        assert_eq!(v.to_rational(), Some(rat(3, 4)));
        assert_eq!(parse_answer("-.5").unwrap().to_rational(), Some(rat(-1, 2)));
        assert_eq!(parse_answer("2.").unwrap().to_rational(), Some(rat(2, 1)));
    }

    #[test]
    fn wrappers() {
        assert_eq!(
            parse_answer("\\boxed{-4}").unwrap(),
            MathValue::Rational(rat(-4, 1))
        );
        assert_eq!(
            parse_answer("$\\boxed{ 7 }$").unwrap(),
            MathValue::Rational(rat(7, 1))
        );
        assert_eq!(parse_answer("(3)").unwrap(), MathValue::Rational(rat(3, 1)));
        assert_eq!(parse_answer("$$1/3$$").unwrap(), MathValue::Rational(rat(1, 3)));
        // only one layer of parentheses
        assert!(!parse_answer("((3))").unwrap().is_numeric());
    }

    #[test]
    fn percent() {
        assert_eq!(parse_answer("50%").unwrap(), MathValue::Rational(rat(1, 2)));
        assert_eq!(parse_answer("12.5\\%").unwrap(), MathValue::Rational(rat(1, 8)));
    }

    #[test]
    fn symbolic_fallback() {
        assert_eq!(parse_answer("x+1").unwrap(), MathValue::Symbolic("x+1".into()));
        assert_eq!(
            parse_answer(" $\\boxed{x  +\t1}$ ").unwrap(),
            MathValue::Symbolic("x + 1".into())
        );
        assert_eq!(
            parse_answer("(1, 2]").unwrap(),
            MathValue::Symbolic("(1, 2]".into())
        );
        assert_eq!(parse_answer("1e3").unwrap(), MathValue::Symbolic("1e3".into()));
    }

    #[test]
    fn zero_denominator() {
        assert!(matches!(parse_answer("1/0"), Err(Error::DivisionByZero)));
        assert!(matches!(
            parse_answer("\\frac{2}{0.0}"),
            Err(Error::DivisionByZero)
        ));
        assert!(!answers_equivalent("1/0", "1/0"));
    }

    #[test]
    fn equivalence_examples() {
        assert!(answers_equivalent("1/2", "0.5"));
        assert!(answers_equivalent("\\frac{2}{4}", "1/2"));
        assert!(!answers_equivalent("3", "4"));
        assert!(answers_equivalent("x+1", " x+1 "));
        assert!(!answers_equivalent("x+1", "1+x"));
        assert!(!answers_equivalent("1", "x"));
    }
}
