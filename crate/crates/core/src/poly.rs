//! Univariate polynomials and rational functions with exact rational
//! coefficients, plus real root isolation through companion matrices.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::field::{Field, Rational, RealField};
use crate::linalg::PivotScore;

/// Polynomial with ascending coefficients; never carries trailing zeros.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Poly {
    coeffs: Vec<Rational>,
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !Field::is_zero(*c))
            .map(|(k, c)| match k {
                0 => format!("{c}"),
                1 => format!("({c})t"),
                _ => format!("({c})t^{k}"),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

impl Poly {
    pub fn new(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().is_some_and(Field::is_zero) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn constant(c: Rational) -> Self {
        Poly::new(vec![c])
    }

    /// The polynomial `t`.
    pub fn variable() -> Self {
        Poly::new(vec![Rational::zero(), Rational::one()])
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading(&self) -> Rational {
        self.coeffs.last().cloned().unwrap_or_else(Rational::zero)
    }

    pub fn eval(&self, t: &Rational) -> Rational {
        self.coeffs
            .iter()
            .rev()
            .fold(Rational::zero(), |acc, c| acc * t.clone() + c.clone())
    }

    pub fn eval_f64(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * t + c.to_f64())
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c.clone() * Rational::from_i64(k as i64))
                .collect(),
        )
    }

    pub fn scale(&self, s: &Rational) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c.clone() * s.clone()).collect())
    }

    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(&(Rational::one() / self.leading()))
    }

    /// Euclidean division; panics on a zero divisor.
    pub fn div_rem(&self, divisor: &Poly) -> (Poly, Poly) {
        assert!(!divisor.is_zero(), "polynomial division by zero");
        let mut rem = self.coeffs.clone();
        let dlen = divisor.coeffs.len();
        if rem.len() < dlen {
            return (Poly::default(), self.clone());
        }
        let lead = divisor.leading();
        let mut quot = vec![Rational::zero(); rem.len() - dlen + 1];
        for k in (0..quot.len()).rev() {
            let c = rem[k + dlen - 1].clone() / lead.clone();
            if Field::is_zero(&c) {
                continue;
            }
            for (j, d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] = rem[k + j].clone() - c.clone() * d.clone();
            }
            quot[k] = c;
        }
        rem.truncate(dlen - 1);
        (Poly::new(quot), Poly::new(rem))
    }

    /// Monic greatest common divisor; `gcd(0, 0) = 0`.
    pub fn gcd(&self, other: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.div_rem(&b).1;
            a = b;
            b = r;
        }
        a.monic()
    }

    /// The product of the distinct irreducible factors.
    pub fn square_free(&self) -> Poly {
        if self.degree() < 1 {
            return self.monic();
        }
        let g = self.gcd(&self.derivative());
        self.div_rem(&g).0.monic()
    }

    /// Real roots of the square-free part: companion-matrix eigenvalues,
    /// polished by Newton steps and deduplicated.
    pub fn real_roots(&self) -> Vec<f64> {
        let p = self.square_free();
        match p.degree() {
            0 => return Vec::new(),
            1 => {
                let root = -p.coeffs[0].clone() / p.coeffs[1].clone();
                return vec![root.to_f64()];
            }
            _ => {}
        }
        let n = p.degree();
        let c: Vec<f64> = p.coeffs.iter().map(RealField::to_f64).collect();
        let companion = DMatrix::from_fn(n, n, |r, col| {
            if col == n - 1 {
                -c[r]
            } else if r == col + 1 {
                1.0
            } else {
                0.0
            }
        });
        let dp = p.derivative();
        let mut roots: Vec<f64> = companion
            .complex_eigenvalues()
            .iter()
            .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()))
            .map(|z| {
                let mut t = z.re;
                for _ in 0..8 {
                    let d = dp.eval_f64(t);
                    if d == 0.0 {
                        break;
                    }
                    let step = p.eval_f64(t) / d;
                    t -= step;
                    if step.abs() <= 1e-16 * (1.0 + t.abs()) {
                        break;
                    }
                }
                t
            })
            .collect();
        roots.sort_by(|a, b| a.total_cmp(b));
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
        roots
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, rhs: Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new(
            (0..n)
                .map(|k| {
                    let a = self.coeffs.get(k).cloned().unwrap_or_else(Rational::zero);
                    let b = rhs.coeffs.get(k).cloned().unwrap_or_else(Rational::zero);
                    a + b
                })
                .collect(),
        )
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly::new(self.coeffs.into_iter().map(|c| -c).collect())
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        self + (-rhs)
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::default();
        }
        let mut out = vec![Rational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if Field::is_zero(a) {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Poly::new(out)
    }
}

/// Reduced quotient of polynomials with a monic denominator.
#[derive(Clone, PartialEq, Eq)]
pub struct RatFun {
    num: Poly,
    den: Poly,
}

impl fmt::Debug for RatFun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.degree() == 0 {
            write!(f, "{:?}", self.num)
        } else {
            write!(f, "({:?}) / ({:?})", self.num, self.den)
        }
    }
}

impl RatFun {
    pub fn new(num: Poly, den: Poly) -> Self {
        assert!(!den.is_zero(), "rational function with zero denominator");
        if num.is_zero() {
            return RatFun {
                num,
                den: Poly::constant(Rational::one()),
            };
        }
        let g = num.gcd(&den);
        let (num, _) = num.div_rem(&g);
        let (den, _) = den.div_rem(&g);
        let lead = den.leading();
        let inv = Rational::one() / lead;
        RatFun {
            num: num.scale(&inv),
            den: den.scale(&inv),
        }
    }

    pub fn from_poly(p: Poly) -> Self {
        RatFun {
            num: p,
            den: Poly::constant(Rational::one()),
        }
    }

    pub fn constant(c: Rational) -> Self {
        RatFun::from_poly(Poly::constant(c))
    }

    pub fn numer(&self) -> &Poly {
        &self.num
    }

    pub fn denom(&self) -> &Poly {
        &self.den
    }

    pub fn degree(&self) -> usize {
        self.num.degree().max(self.den.degree())
    }

    pub fn is_constant(&self) -> bool {
        self.num.degree() == 0 && self.den.degree() == 0
    }

    /// `None` at a pole.
    pub fn eval_f64(&self, t: f64) -> Option<f64> {
        let d = self.den.eval_f64(t);
        (d != 0.0).then(|| self.num.eval_f64(t) / d)
    }

    pub fn eval(&self, t: &Rational) -> Option<Rational> {
        let d = self.den.eval(t);
        (!Field::is_zero(&d)).then(|| self.num.eval(t) / d)
    }

    pub fn derivative(&self) -> RatFun {
        let num = self.num.derivative() * self.den.clone() - self.num.clone() * self.den.derivative();
        RatFun::new(num, self.den.clone() * self.den.clone())
    }
}

impl Add for RatFun {
    type Output = RatFun;
    fn add(self, rhs: RatFun) -> RatFun {
        if self.den == rhs.den {
            return RatFun::new(self.num + rhs.num, self.den);
        }
        RatFun::new(
            self.num * rhs.den.clone() + rhs.num * self.den.clone(),
            self.den * rhs.den,
        )
    }
}

impl Sub for RatFun {
    type Output = RatFun;
    fn sub(self, rhs: RatFun) -> RatFun {
        self + (-rhs)
    }
}

impl Neg for RatFun {
    type Output = RatFun;
    fn neg(self) -> RatFun {
        RatFun {
            num: -self.num,
            den: self.den,
        }
    }
}

impl Mul for RatFun {
    type Output = RatFun;
    fn mul(self, rhs: RatFun) -> RatFun {
        if self.num.is_zero() || rhs.num.is_zero() {
            return RatFun::constant(Rational::zero());
        }
        RatFun::new(self.num * rhs.num, self.den * rhs.den)
    }
}

impl Div for RatFun {
    type Output = RatFun;
    fn div(self, rhs: RatFun) -> RatFun {
        assert!(!rhs.num.is_zero(), "rational function division by zero");
        RatFun::new(self.num * rhs.den, self.den * rhs.num)
    }
}

impl Field for RatFun {
    const EXACT: bool = true;

    fn zero() -> Self {
        RatFun::constant(Rational::zero())
    }
    fn one() -> Self {
        RatFun::constant(Rational::one())
    }
    fn from_i64(v: i64) -> Self {
        RatFun::constant(Rational::from_i64(v))
    }
    fn is_zero(&self) -> bool {
        self.num.is_zero()
    }
}



impl PivotScore for RatFun {
    fn score(&self) -> f64 {
        if self.num.is_zero() {
            0.0
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ratio;

    fn p(c: &[i64]) -> Poly {
        Poly::new(c.iter().map(|&v| ratio(v, 1)).collect())
    }

    #[test]
    fn division_and_gcd() {
        // (t-1)(t-2) and (t-1)(t+3)
        let a = p(&[2, -3, 1]);
        let b = p(&[-3, 2, 1]);
        assert_eq!(a.gcd(&b), p(&[-1, 1]));
        let (q, r) = (a.clone() * b.clone()).div_rem(&a);
        assert_eq!(q, b);
        assert!(r.is_zero());
    }

    #[test]
    fn roots_of_cubic() {
        // (t+1)^2 (t-2) (t^2+1)
        let f = p(&[1, 1]) * p(&[1, 1]) * p(&[-2, 1]) * p(&[1, 0, 1]);
        let roots = f.real_roots();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] + 1.0).abs() < 1e-12);
        assert!((roots[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ratfun_arithmetic_reduces() {
        let t = RatFun::from_poly(Poly::variable());
        let one = RatFun::one();
        let x = (t.clone() * t.clone() - one.clone()) / (t.clone() - one.clone());
        assert_eq!(x, t.clone() + one.clone());
        let y = one.clone() / t.clone() + one.clone() / (t.clone() + one.clone());
        assert_eq!(y.eval(&ratio(1, 1)), Some(ratio(3, 2)));
        assert!(y.eval(&ratio(0, 1)).is_none());
        assert_eq!((t.clone() * t.clone()).derivative(), t.clone() + t);
    }
}
