use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::HFunction;

/// Highest derivative order inspected when looking for the degeneracy order.
pub const KAPPA_MAX: usize = 8;

/// The pair `X1 = d/dx1`, `X2 = h(x1) d/dx2` restricted to `x1 in [-L, L]`.
#[derive(Debug, Clone)]
pub struct VectorFieldFamily {
    h: HFunction,
    scale: f64,
    half_width: f64,
    zero_set: Vec<f64>,
    kappa: Vec<u32>,
    h_sup: f64,
}

/// Per-root summary used in validation reports.
#[derive(Debug, Clone, Serialize)]
pub struct RootInfo {
    pub root: f64,
    pub kappa: u32,
    pub kappa_from_derivatives: bool,
}

impl VectorFieldFamily {
    pub fn new(h: HFunction, half_width: f64) -> Result<Self> {
        Self::with_scale(h, 1.0, half_width)
    }

    pub fn with_scale(h: HFunction, scale: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) || !scale.is_finite() || scale == 0.0 {
            return Err(Error::invalid("vector field needs a positive domain and nonzero scale"));
        }
        let samples = 20_001;
        let xs: Vec<f64> = (0..samples)
            .map(|k| -half_width + 2.0 * half_width * k as f64 / (samples - 1) as f64)
            .collect();
        let hs: Vec<f64> = xs.iter().map(|&x| scale * h.eval(x)).collect();
        if hs.iter().any(|v| !v.is_finite()) {
            return Err(Error::AssumptionViolated {
                name: "H1".into(),
                detail: format!("h = {} is not finite on [-{half_width}, {half_width}]", h.name()),
            });
        }
        let sampled_sup = hs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let h_sup = match h.sup_on_line() {
            Some(s) => (s * scale.abs()).max(sampled_sup),
            None => sampled_sup,
        };
        if h_sup == 0.0 {
            return Err(Error::AssumptionViolated {
                name: "H2".into(),
                detail: "h vanishes identically, zeros are not isolated".into(),
            });
        }
        let zero_set = match h.analytic_roots(-half_width, half_width) {
            Some(r) => r,
            None => scan_roots(&|x| scale * h.eval(x), &xs, &hs, h_sup)?,
        };
        let mut vf = Self { h, scale, half_width, zero_set, kappa: Vec::new(), h_sup };
        let mut kappa = Vec::with_capacity(vf.zero_set.len());
        for &root in &vf.zero_set {
            let k = match vf.kappa_from_taylor(root) {
                Some(k) => k,
                None => estimate_kappa(&|x| vf.h(x), root, default_probe_radius(&vf.zero_set, root))?,
            };
            kappa.push(k);
        }
        vf.kappa = kappa;
        Ok(vf)
    }

    /// Same family with `h` replaced by `c * h`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::with_scale(self.h.clone(), self.scale * c, self.half_width)
    }

    #[inline]
    pub fn h(&self, x1: f64) -> f64 {
        self.scale * self.h.eval(x1)
    }

    pub fn function(&self) -> &HFunction {
        &self.h
    }

    pub fn name(&self) -> String {
        if self.scale == 1.0 {
            self.h.name()
        } else {
            format!("{}*{}", self.scale, self.h.name())
        }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn zero_set(&self) -> &[f64] {
        &self.zero_set
    }

    pub fn kappa(&self) -> &[u32] {
        &self.kappa
    }

    pub fn h_sup(&self) -> f64 {
        self.h_sup
    }

    /// Whether `sup |h|` is finite on the whole line, not just on the truncated domain.
    pub fn bounded_on_line(&self) -> bool {
        self.h.sup_on_line().is_some()
    }

    pub fn has_derivatives(&self) -> bool {
        self.h.taylor(0.0, 1).is_some()
    }

    pub fn roots(&self) -> Vec<RootInfo> {
        self.zero_set
            .iter()
            .zip(&self.kappa)
            .map(|(&root, &kappa)| RootInfo { root, kappa, kappa_from_derivatives: self.has_derivatives() })
            .collect()
    }

    /// Taylor coefficients of the scaled `h` at `y`.
    pub fn taylor(&self, y: f64, order: usize) -> Option<Vec<f64>> {
        self.h.taylor(y, order).map(|c| c.into_iter().map(|v| v * self.scale).collect())
    }

    fn kappa_from_taylor(&self, root: f64) -> Option<u32> {
        let coeffs = self.taylor(root, KAPPA_MAX)?;
        let mag = coeffs.iter().skip(1).fold(0.0_f64, |m, c| m.max(c.abs()));
        if mag == 0.0 {
            return None;
        }
        coeffs
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, c)| c.abs() > 1e-9 * mag.max(1e-300))
            .map(|(k, _)| k as u32)
    }
}

fn default_probe_radius(roots: &[f64], root: f64) -> f64 {
    let gap = roots
        .iter()
        .filter(|&&r| r != root)
        .map(|r| (r - root).abs())
        .fold(f64::INFINITY, f64::min);
    (gap / 4.0).min(1.0 / 16.0)
}

/// Sign changes and near-zero local minima of `|h|` on a sample, refined by
/// bisection / golden-section search.
fn scan_roots(h: &dyn Fn(f64) -> f64, xs: &[f64], hs: &[f64], h_sup: f64) -> Result<Vec<f64>> {
    let tiny = 1e-12 * h_sup;
    let mut run = 0usize;
    for v in hs {
        run = if v.abs() <= tiny { run + 1 } else { 0 };
        if run >= 3 {
            return Err(Error::AssumptionViolated {
                name: "H2".into(),
                detail: "h vanishes on an interval, zeros are not isolated".into(),
            });
        }
    }
    let mut roots = Vec::new();
    for k in 0..xs.len() {
        if hs[k] == 0.0 {
            roots.push(xs[k]);
            continue;
        }
        if k + 1 < xs.len() && hs[k + 1] != 0.0 && hs[k].signum() != hs[k + 1].signum() {
            let (mut a, mut b) = (xs[k], xs[k + 1]);
            let fa = hs[k];
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = h(m);
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
            continue;
        }
        if k > 0 && k + 1 < xs.len() {
            let (l, c, r) = (hs[k - 1].abs(), hs[k].abs(), hs[k + 1].abs());
            if c <= l && c < r && c < 1e-3 * h_sup && hs[k - 1].signum() == hs[k + 1].signum() {
                let (mut a, mut b) = (xs[k - 1], xs[k + 1]);
                let g = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..200 {
                    let p = b - g * (b - a);
                    let q = a + g * (b - a);
                    if h(p).abs() < h(q).abs() {
                        b = q;
                    } else {
                        a = p;
                    }
                }
                let x = 0.5 * (a + b);
                if h(x).abs() <= 1e-10 * h_sup {
                    roots.push(x);
                }
            }
        }
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    Ok(roots)
}

/// Slopes of `log |h|` against `log |x - root|` between consecutive dyadic
/// probe radii `probe_radius * 2^-k`, `k = 0..=8`, averaging both sides.
pub fn dyadic_slopes(h: &dyn Fn(f64) -> f64, root: f64, probe_radius: f64) -> Result<Vec<f64>> {
    let levels = 9;
    let mut logs = Vec::with_capacity(levels);
    for k in 0..levels {
        let r = probe_radius * 0.5_f64.powi(k as i32);
        let (a, b) = (h(root + r).abs(), h(root - r).abs());
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::NonIsolatedRoot { root, radius: probe_radius });
        }
        logs.push((r.ln(), 0.5 * (a.ln() + b.ln())));
    }
    Ok(logs.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect())
}

fn estimate_kappa(h: &dyn Fn(f64) -> f64, root: f64, probe_radius: f64) -> Result<u32> {
    let slopes = dyadic_slopes(h, root, probe_radius)?;
    let target = slopes.last().copied().unwrap_or(0.0).round();
    if target < 1.0 || slopes.iter().any(|s| (s - target).abs() > 0.25) {
        return Err(Error::SlopeUnstable { root, slopes });
    }
    Ok(target as u32)
}

/// Hörmander index `kappa + 1` at a root of `h`, with `kappa` read from the
/// log-log growth of `|h|` on dyadic probes around the root.
pub fn hormander_index(vf: &VectorFieldFamily, root: f64, probe_radius: f64) -> Result<u32> {
    if !vf.zero_set.iter().any(|r| (r - root).abs() < 1e-9) {
        return Err(Error::invalid(format!("{root} is not a zero of h")));
    }
    if !(probe_radius > 0.0) {
        return Err(Error::invalid("probe radius must be positive"));
    }
    if vf.zero_set.iter().any(|r| (r - root).abs() >= 1e-9 && (r - root).abs() <= probe_radius) {
        return Err(Error::NonIsolatedRoot { root, radius: probe_radius });
    }
    let kappa = estimate_kappa(&|x| vf.h(x), root, probe_radius)?;
    Ok(kappa + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_has_simple_roots_with_index_two() {
        let vf = VectorFieldFamily::new(HFunction::Sin, 4.0).unwrap();
        assert_eq!(vf.zero_set().len(), 3);
        assert_eq!(vf.kappa(), &[1, 1, 1]);
        assert_eq!(hormander_index(&vf, 0.0, 1.0 / 16.0).unwrap(), 2);
    }

    #[test]
    fn linear_grushin_index() {
        let vf = VectorFieldFamily::new(HFunction::Linear, 1.0).unwrap();
        assert_eq!(hormander_index(&vf, 0.0, 1.0 / 16.0).unwrap(), 2);
        assert!(!vf.bounded_on_line());
    }

    #[test]
    fn cubic_fixture_by_slope_oracle() {
        // Oracle: log2(h(r)/h(r/2)) = log2(8 (1 + r^2/4) / (1 + r^2)) for r = 2^-4..2^-12,
        // every value lies in (2.99, 3.0], so the rounded slope is 3.
        for k in 4..12 {
            let r = 0.5_f64.powi(k);
            let s = (8.0 * (1.0 + r * r / 4.0) / (1.0 + r * r)).log2();
            assert!(s > 2.99 && s <= 3.0);
        }
        let h = HFunction::custom("x^3/(x^2+1)", |x| x * x * x / (x * x + 1.0));
        let vf = VectorFieldFamily::new(h, 1.0).unwrap();
        assert_eq!(vf.zero_set(), &[0.0]);
        assert_eq!(vf.kappa(), &[3]);
        assert_eq!(hormander_index(&vf, 0.0, 1.0 / 16.0).unwrap(), 4);
    }

    #[test]
    fn index_matches_derivative_kappa() {
        for name in ["sin", "sigmoid", "linear", "ratpow(2,2,1)", "ratpow(3,2,2)"] {
            let vf = VectorFieldFamily::new(HFunction::parse(name).unwrap(), 3.0).unwrap();
            for (&root, &k) in vf.zero_set().iter().zip(vf.kappa()) {
                assert_eq!(hormander_index(&vf, root, 1.0 / 16.0).unwrap(), k + 1, "{name}");
            }
        }
    }

    #[test]
    fn index_is_scale_invariant() {
        let vf = VectorFieldFamily::new(HFunction::parse("ratpow(2,2,1)").unwrap(), 2.0).unwrap();
        for c in [0.1, 10.0] {
            let s = vf.scaled(c).unwrap();
            assert_eq!(hormander_index(&s, 0.0, 1.0 / 16.0).unwrap(), 3);
        }
    }

    #[test]
    fn nearby_root_is_reported() {
        let h = HFunction::custom("x(x-0.01)", |x| x * (x - 0.01));
        let vf = VectorFieldFamily::new(h, 1.0).unwrap();
        assert_eq!(vf.zero_set().len(), 2);
        assert!(matches!(
            hormander_index(&vf, 0.0, 1.0 / 16.0),
            Err(Error::NonIsolatedRoot { .. })
        ));
    }

    #[test]
    fn non_integer_growth_is_unstable() {
        let h = HFunction::custom("|x|^1.5 sign", |x: f64| x.signum() * x.abs().powf(1.5));
        assert!(matches!(VectorFieldFamily::new(h, 1.0), Err(Error::SlopeUnstable { .. })));
    }

    #[test]
    fn even_order_root_found_by_scan() {
        let h = HFunction::custom("(x-0.3)^2", |x| (x - 0.3) * (x - 0.3));
        let vf = VectorFieldFamily::new(h, 1.0).unwrap();
        assert_eq!(vf.zero_set().len(), 1);
        assert!((vf.zero_set()[0] - 0.3).abs() < 1e-6);
        assert_eq!(vf.kappa(), &[2]);
    }

    #[test]
    fn constant_has_no_roots_and_zero_is_rejected() {
        let vf = VectorFieldFamily::new(HFunction::Const(1.0), 2.0).unwrap();
        assert!(vf.zero_set().is_empty());
        assert!(VectorFieldFamily::new(HFunction::Const(0.0), 2.0).is_err());
    }
}
