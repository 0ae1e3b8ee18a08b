//! Truncated Taylor series arithmetic, used to read off exact derivatives of
//! the catalog `h` functions at their roots.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type the catalog formulas are written against, so the same formula
/// evaluates plain values and Taylor expansions.
pub(crate) trait Real:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn lift(&self, c: f64) -> Self;
    fn sin(&self) -> Self;
    fn powi(&self, n: u32) -> Self;
    fn powf(&self, p: f64) -> Self;
}

impl Real for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn powi(&self, n: u32) -> Self {
        f64::powi(*self, n as i32)
    }
    fn powf(&self, p: f64) -> Self {
        f64::powf(*self, p)
    }
}

/// Coefficients `c_0 .. c_K` of `sum c_k t^k`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Series(pub Vec<f64>);

impl Series {
    /// The expansion of `y + t`.
    pub fn variable(y: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = y;
        if order > 0 {
            c[1] = 1.0;
        }
        Series(c)
    }

    fn constant(c: f64, order: usize) -> Self {
        let mut v = vec![0.0; order + 1];
        v[0] = c;
        Series(v)
    }

    fn order(&self) -> usize {
        self.0.len() - 1
    }

    fn exp(&self) -> Self {
        let a = &self.0;
        let k = self.order();
        let mut e = vec![0.0; k + 1];
        e[0] = a[0].exp();
        for n in 1..=k {
            let s: f64 = (1..=n).map(|j| j as f64 * a[j] * e[n - j]).sum();
            e[n] = s / n as f64;
        }
        Series(e)
    }

    fn ln(&self) -> Self {
        let a = &self.0;
        let k = self.order();
        let mut l = vec![0.0; k + 1];
        l[0] = a[0].ln();
        for n in 1..=k {
            let s: f64 = (1..n).map(|j| j as f64 * l[j] * a[n - j]).sum();
            l[n] = (a[n] - s / n as f64) / a[0];
        }
        Series(l)
    }

    fn sin_cos(&self) -> (Self, Self) {
        let a = &self.0;
        let k = self.order();
        let mut s = vec![0.0; k + 1];
        let mut c = vec![0.0; k + 1];
        s[0] = a[0].sin();
        c[0] = a[0].cos();
        for n in 1..=k {
            let mut ss = 0.0;
            let mut cc = 0.0;
            for j in 1..=n {
                ss += j as f64 * a[j] * c[n - j];
                cc += j as f64 * a[j] * s[n - j];
            }
            s[n] = ss / n as f64;
            c[n] = -cc / n as f64;
        }
        (Series(s), Series(c))
    }
}

impl Add for Series {
    type Output = Series;
    fn add(self, rhs: Series) -> Series {
        Series(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for Series {
    type Output = Series;
    fn sub(self, rhs: Series) -> Series {
        Series(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for Series {
    type Output = Series;
    fn neg(self) -> Series {
        Series(self.0.iter().map(|a| -a).collect())
    }
}

impl Mul for Series {
    type Output = Series;
    fn mul(self, rhs: Series) -> Series {
        let k = self.order();
        let c = (0..=k).map(|n| (0..=n).map(|i| self.0[i] * rhs.0[n - i]).sum()).collect();
        Series(c)
    }
}

impl Div for Series {
    type Output = Series;
    fn div(self, rhs: Series) -> Series {
        let k = self.order();
        let b = &rhs.0;
        let mut c = vec![0.0; k + 1];
        for n in 0..=k {
            let s: f64 = (1..=n).map(|i| b[i] * c[n - i]).sum();
            c[n] = (self.0[n] - s) / b[0];
        }
        Series(c)
    }
}

impl Real for Series {
    fn lift(&self, c: f64) -> Self {
        Series::constant(c, self.order())
    }
    fn sin(&self) -> Self {
        self.sin_cos().0
    }
    fn powi(&self, n: u32) -> Self {
        let mut acc = self.lift(1.0);
        for _ in 0..n {
            acc = acc * self.clone();
        }
        acc
    }
    fn powf(&self, p: f64) -> Self {
        let l = self.ln();
        Series(l.0.iter().map(|c| c * p).collect()).exp()
    }
}
