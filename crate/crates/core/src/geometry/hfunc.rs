//! The catalog of coefficient functions `h(x1)` for the second vector field
//! `X2 = h(x1) d/dx2`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::series::{Real, Series};

/// Natural cubic spline through sampled `(x, h)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TableH {
    source: String,
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl TableH {
    pub fn new(source: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n {
            return Err(Error::invalid("table needs at least three (x, h) samples"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("table abscissae must be strictly increasing"));
        }
        if ys.iter().chain(&xs).any(|v| !v.is_finite()) {
            return Err(Error::invalid("table contains non-finite values"));
        }
        // Tridiagonal system for the natural spline second derivatives.
        let mut m = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            diag[i] = 2.0 * (h0 + h1);
            upper[i] = h1;
            rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        }
        // Thomas elimination on rows 1..n-1 (m_0 = m_{n-1} = 0).
        for i in 2..n - 1 {
            let lower = xs[i] - xs[i - 1];
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            let next = if i + 1 < n - 1 { upper[i] * m[i + 1] } else { 0.0 };
            m[i] = (rhs[i] - next) / diag[i];
        }
        Ok(Self { source: source.into(), xs, ys, m })
    }

    /// Reads a two-column `x,h` CSV file (an optional non-numeric header line is skipped).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (a, b) = (parts.next(), parts.next());
            match (a.and_then(|s| s.parse::<f64>().ok()), b.and_then(|s| s.parse::<f64>().ok())) {
                (Some(x), Some(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if lineno == 0 => continue,
                _ => return Err(Error::invalid(format!("bad table row {}: {line}", lineno + 1))),
            }
        }
        Self::new(path.display().to_string(), xs, ys)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// Value and the first three derivatives at `x` (clamped to the table range).
    pub fn jet(&self, x: f64) -> [f64; 4] {
        let (lo, hi) = self.range();
        let x = x.clamp(lo, hi);
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        let (y0, y1, m0, m1) = (self.ys[i], self.ys[i + 1], self.m[i], self.m[i + 1]);
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let d2 = a * m0 + b * m1;
        let d3 = (m1 - m0) / h;
        [v, d1, d2, d3]
    }
}

/// User-supplied `h` (test fixtures and programmatic use).
#[derive(Clone)]
pub struct CustomH {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomH {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomH({})", self.name)
    }
}

#[derive(Debug, Clone)]
pub enum HFunction {
    Sin,
    /// `x / sqrt(x^2 + 1)`
    Sigmoid,
    /// `x^a / (x^b + c)^(a/b)`
    RatPow { a: u32, b: u32, c: f64 },
    Linear,
    Const(f64),
    Table(TableH),
    Custom(CustomH),
}

fn parse_args(s: &str, name: &str) -> Option<String> {
    let inner = s.strip_prefix(name)?.trim();
    let inner = inner.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.trim().to_string())
}

impl HFunction {
    /// Parses a catalog name: `sin`, `sigmoid`, `linear`, `const(c)`,
    /// `ratpow(a,b,C)` or `table(path)`.
    pub fn parse(spec: &str) -> Result<Self> {
        let s = spec.trim();
        match s {
            "sin" => return Ok(HFunction::Sin),
            "sigmoid" => return Ok(HFunction::Sigmoid),
            "linear" => return Ok(HFunction::Linear),
            _ => {}
        }
        if let Some(arg) = parse_args(s, "const") {
            let c = arg.parse::<f64>().map_err(|_| Error::invalid(format!("bad constant in {s}")))?;
            return Ok(HFunction::Const(c));
        }
        if let Some(arg) = parse_args(s, "ratpow") {
            let parts: Vec<&str> = arg.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::invalid(format!("ratpow needs (a,b,C), got {s}")));
            }
            let a = parts[0].parse::<u32>().map_err(|_| Error::invalid("ratpow a must be a positive integer"))?;
            let b = parts[1].parse::<u32>().map_err(|_| Error::invalid("ratpow b must be a positive integer"))?;
            let c = parts[2].parse::<f64>().map_err(|_| Error::invalid("ratpow C must be a number"))?;
            if a == 0 || b == 0 || !(c > 0.0) {
                return Err(Error::invalid("ratpow requires a, b >= 1 and C > 0"));
            }
            return Ok(HFunction::RatPow { a, b, c });
        }
        if let Some(arg) = parse_args(s, "table") {
            return Ok(HFunction::Table(TableH::from_csv(Path::new(&arg))?));
        }
        Err(Error::invalid(format!("unknown h function '{s}'")))
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        HFunction::Custom(CustomH { name: name.into(), f: Arc::new(f) })
    }

    pub fn name(&self) -> String {
        match self {
            HFunction::Sin => "sin".into(),
            HFunction::Sigmoid => "sigmoid".into(),
            HFunction::RatPow { a, b, c } => format!("ratpow({a},{b},{c})"),
            HFunction::Linear => "linear".into(),
            HFunction::Const(c) => format!("const({c})"),
            HFunction::Table(t) => format!("table({})", t.source),
            HFunction::Custom(c) => c.name.clone(),
        }
    }

    fn formula<T: Real>(&self, x: &T) -> Option<T> {
        Some(match self {
            HFunction::Sin => x.sin(),
            HFunction::Sigmoid => x.clone() / (x.clone() * x.clone() + x.lift(1.0)).powf(0.5),
            HFunction::RatPow { a, b, c } => {
                x.powi(*a) / (x.powi(*b) + x.lift(*c)).powf(*a as f64 / *b as f64)
            }
            HFunction::Linear => x.clone(),
            HFunction::Const(c) => x.lift(*c),
            HFunction::Table(_) | HFunction::Custom(_) => return None,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            HFunction::Table(t) => t.jet(x)[0],
            HFunction::Custom(c) => (c.f)(x),
            _ => self.formula(&x).unwrap(),
        }
    }

    /// Taylor coefficients `h^(k)(y) / k!` for `k = 0..=order`, when the
    /// derivatives are available in closed form.
    pub fn taylor(&self, y: f64, order: usize) -> Option<Vec<f64>> {
        match self {
            HFunction::Table(t) => {
                let j = t.jet(y);
                let fact = [1.0, 1.0, 2.0, 6.0];
                Some((0..=order).map(|k| if k < 4 { j[k] / fact[k] } else { 0.0 }).collect())
            }
            HFunction::Custom(_) => None,
            _ => self.formula(&Series::variable(y, order)).map(|s| s.0),
        }
    }

    /// `sup |h|` over the whole real line, when it is finite and known.
    pub fn sup_on_line(&self) -> Option<f64> {
        match self {
            HFunction::Sin | HFunction::Sigmoid => Some(1.0),
            HFunction::RatPow { b, .. } if b % 2 == 0 => Some(1.0),
            HFunction::Const(c) => Some(c.abs()),
            _ => None,
        }
    }

    /// Roots inside `[lo, hi]` known in closed form.
    pub(crate) fn analytic_roots(&self, lo: f64, hi: f64) -> Option<Vec<f64>> {
        match self {
            HFunction::Sin => {
                let k0 = (lo / std::f64::consts::PI).ceil() as i64;
                let k1 = (hi / std::f64::consts::PI).floor() as i64;
                Some((k0..=k1).map(|k| k as f64 * std::f64::consts::PI).collect())
            }
            HFunction::Sigmoid | HFunction::Linear | HFunction::RatPow { .. } => {
                Some(if lo <= 0.0 && hi >= 0.0 { vec![0.0] } else { vec![] })
            }
            HFunction::Const(c) if *c != 0.0 => Some(vec![]),
            _ => None,
        }
    }
}
