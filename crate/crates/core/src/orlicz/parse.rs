//! Recursive-descent parser for the Orlicz expression grammar.
//!
//! ```text
//! expr  := term ("+" term)*
//! term  := [coef "*"] basis
//! basis := "x^" even-integer | "|x|^" positive-real
//!        | "cosh(x)-1" | "exp(|x|^" positive-real ")-1"
//! coef  := positive real
//! ```
//!
//! Whitespace is insignificant anywhere. Error offsets refer to bytes of the
//! original input string.

use super::{Atom, OrliczError, Term};

struct Cursor<'a> {
    src: &'a str,
    /// Non-whitespace bytes paired with their offset in `src`.
    bytes: Vec<(usize, u8)>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        let bytes = src
            .bytes()
            .enumerate()
            .filter(|(_, b)| !b.is_ascii_whitespace())
            .collect();
        Self { src, bytes, pos: 0 }
    }

    fn offset(&self) -> usize {
        self.bytes
            .get(self.pos)
            .map(|&(o, _)| o)
            .unwrap_or(self.src.len())
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).map(|&(_, b)| b)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn error(&self, message: impl Into<String>) -> OrliczError {
        OrliczError::Syntax {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        let lit = lit.as_bytes();
        if self.bytes.len() < self.pos + lit.len() {
            return false;
        }
        let matches = self.bytes[self.pos..self.pos + lit.len()]
            .iter()
            .zip(lit)
            .all(|(&(_, b), &l)| b == l);
        if matches {
            self.pos += lit.len();
        }
        matches
    }

    fn expect(&mut self, lit: &str) -> Result<(), OrliczError> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{lit}`")))
        }
    }

    /// Unsigned decimal literal with optional fraction and exponent.
    fn number(&mut self) -> Result<(usize, f64), OrliczError> {
        let start = self.pos;
        let start_offset = self.offset();
        let mut text = String::new();
        let mut seen_digit = false;
        while let Some(b) = self.peek() {
            if b.is_ascii_digit() {
                seen_digit = true;
            } else if b != b'.' {
                break;
            }
            text.push(b as char);
            self.pos += 1;
        }
        if !seen_digit {
            self.pos = start;
            return Err(self.error("expected a number"));
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            let mut exp = String::from("e");
            self.pos += 1;
            if let Some(sign @ (b'+' | b'-')) = self.peek() {
                exp.push(sign as char);
                self.pos += 1;
            }
            let mut exp_digits = false;
            while let Some(b) = self.peek().filter(u8::is_ascii_digit) {
                exp.push(b as char);
                exp_digits = true;
                self.pos += 1;
            }
            if exp_digits {
                text.push_str(&exp);
            } else {
                self.pos = save;
            }
        }
        text.parse::<f64>()
            .map(|v| (start_offset, v))
            .map_err(|_| OrliczError::Syntax {
                offset: start_offset,
                message: format!("malformed number `{text}`"),
            })
    }

    fn positive_exponent(&mut self) -> Result<(usize, f64), OrliczError> {
        let (offset, p) = self.number()?;
        if !(p > 0.0) || !p.is_finite() {
            return Err(OrliczError::Syntax {
                offset,
                message: "exponent must be a positive real".into(),
            });
        }
        Ok((offset, p))
    }
}

pub(super) fn parse_terms(expr: &str) -> Result<Vec<Term>, OrliczError> {
    let mut cur = Cursor::new(expr);
    if cur.at_end() {
        return Err(cur.error("empty expression"));
    }
    let mut terms = vec![term(&mut cur)?];
    while !cur.at_end() {
        cur.expect("+")?;
        terms.push(term(&mut cur)?);
    }
    Ok(terms)
}

fn term(cur: &mut Cursor<'_>) -> Result<Term, OrliczError> {
    let coef = match cur.peek() {
        Some(b) if b.is_ascii_digit() || b == b'.' => {
            let (_, c) = cur.number()?;
            cur.expect("*")?;
            c
        }
        _ => 1.0,
    };
    let atom = basis(cur)?;
    Ok(Term { coef, atom })
}

fn basis(cur: &mut Cursor<'_>) -> Result<Atom, OrliczError> {
    if cur.eat("x^") {
        let (offset, k) = cur.number()?;
        if k.fract() != 0.0 || k < 2.0 || !(k as u64).is_multiple_of(2) || k > 1.0e6 {
            return Err(OrliczError::Syntax {
                offset,
                message: "exponent of `x^` must be a positive even integer".into(),
            });
        }
        Ok(Atom::EvenPower(k as u32))
    } else if cur.eat("|x|^") {
        let (_, p) = cur.positive_exponent()?;
        Ok(Atom::AbsPower(p))
    } else if cur.eat("cosh(x)-1") {
        Ok(Atom::CoshMinusOne)
    } else if cur.eat("exp(|x|^") {
        let (_, p) = cur.positive_exponent()?;
        cur.expect(")-1")?;
        Ok(Atom::ExpPowerMinusOne(p))
    } else {
        Err(cur.error("expected `x^`, `|x|^`, `cosh(x)-1` or `exp(|x|^`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_is_ignored() {
        let a = parse_terms("2 * x ^ 4 +   | x | ^ 1.5").unwrap();
        let b = parse_terms("2*x^4+|x|^1.5").unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].coef, 2.0);
        assert_eq!(a[1].atom, Atom::AbsPower(1.5));
    }

    #[test]
    fn scientific_coefficients() {
        let t = parse_terms("1e-3*cosh(x)-1 + 2.5E2*exp(|x|^2)-1").unwrap();
        assert_eq!(t[0].coef, 1.0e-3);
        assert_eq!(t[0].atom, Atom::CoshMinusOne);
        assert_eq!(t[1].coef, 250.0);
        assert_eq!(t[1].atom, Atom::ExpPowerMinusOne(2.0));
    }

    #[test]
    fn error_offsets_point_into_original_string() {
        match parse_terms("x^2 + y^2") {
            Err(OrliczError::Syntax { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
        match parse_terms("x^3") {
            Err(OrliczError::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_terms("x^2 +") {
            Err(OrliczError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_terms("   "), Err(OrliczError::Syntax { .. })));
        assert!(matches!(parse_terms("2 x^2"), Err(OrliczError::Syntax { .. })));
        assert!(matches!(parse_terms("exp(|x|^2)"), Err(OrliczError::Syntax { .. })));
        assert!(matches!(parse_terms("|x|^0"), Err(OrliczError::Syntax { .. })));
    }
}
