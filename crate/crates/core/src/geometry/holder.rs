use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretize::TimeField;
use crate::error::{Error, Result};
use crate::geometry::CcMetric;

const SOURCES: usize = 8;
const SEED: u64 = 0x5eed_4017;

/// Sampled lower bound for the parabolic Hölder seminorm
/// `sup |u(t,x) - u(s,y)| / d_P((t,x),(s,y))^alpha`.
///
/// Pairs always contain one of a fixed set of seeded source cells, whose
/// distance maps are computed exactly on the graph. The pair sequence is
/// drawn from a fixed stream, so raising `sample_pairs` only appends pairs
/// and the estimate never decreases.
pub fn holder_seminorm(field: &TimeField, metric: &CcMetric, alpha: f64, sample_pairs: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !field.grid.same_space(metric.grid()) {
        return Err(Error::GridMismatch);
    }
    if !field.is_finite() {
        return Err(Error::invalid("field has non-finite values"));
    }
    let g = field.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let sources: Vec<usize> = (0..SOURCES).map(|_| rng.random_range(0..g.cells())).collect();
    let maps: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        sources.par_iter().map(|&s| metric.distances_from(s)).collect()
    };
    let mut best = 0.0_f64;
    let mut any = false;
    for k in 0..sample_pairs {
        let which = k % SOURCES;
        let target = rng.random_range(0..g.cells());
        let t = rng.random_range(0..=g.nt);
        let s = rng.random_range(0..=g.nt);
        let dc = maps[which][target];
        let dp2 = dc * dc + (g.time(t) - g.time(s)).abs();
        if dp2 == 0.0 || !dp2.is_finite() {
            continue;
        }
        any = true;
        let du = (field.slices[t][sources[which]] - field.slices[s][target]).abs();
        best = best.max(du / dp2.powf(0.5 * alpha));
    }
    if !any {
        return Err(Error::DegeneratePair);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{Grid, ScalarField};
    use crate::geometry::{HFunction, VectorFieldFamily};

    fn setup(h: HFunction, n: usize) -> (Grid, CcMetric) {
        let vf = VectorFieldFamily::new(h, 1.0).unwrap();
        let g = Grid::new(1.0, n, n, 0.5, 4).unwrap();
        (g, CcMetric::new(&vf, g))
    }

    #[test]
    fn constant_field_has_zero_seminorm() {
        let (g, m) = setup(HFunction::Sin, 16);
        let f = TimeField::constant_in_time(&ScalarField::constant(g, 3.0));
        assert_eq!(holder_seminorm(&f, &m, 0.5, 1000).unwrap(), 0.0);
    }

    #[test]
    fn distance_function_is_one_lipschitz() {
        let (g, m) = setup(HFunction::Linear, 24);
        let d = m.distances_from(g.idx(3, 5));
        let f = TimeField::constant_in_time(&ScalarField::new(g, d).unwrap());
        let q = holder_seminorm(&f, &m, 1.0, 2000).unwrap();
        assert!(q <= 1.0 + 1e-12, "{q}");
    }

    #[test]
    fn vertical_coordinate_stays_lipschitz_under_refinement() {
        // Every x2-step of the graph costs at least dx2 / sup|h|, so
        // |x2 - y2| <= sup|h| d_C and the seminorm of x2 is bounded by
        // sup|h| = 1 on every grid, degenerate line included.
        for n in [16, 32, 64] {
            let (g, m) = setup(HFunction::Linear, n);
            let f = TimeField::from_fn(g, |_, _, x2| x2);
            let q = holder_seminorm(&f, &m, 1.0, 4000).unwrap();
            assert!(q <= 1.0 + 1e-12 && q > 0.3, "n = {n}: {q}");
        }
    }

    #[test]
    fn monotone_in_sample_count() {
        let (g, m) = setup(HFunction::Sin, 16);
        let f = TimeField::from_fn(g, |t, x1, x2| (3.0 * x1).sin() * x2 + t);
        let mut last = 0.0;
        for n in [1000, 2000, 4000] {
            let q = holder_seminorm(&f, &m, 0.5, n).unwrap();
            assert!(q >= last);
            last = q;
        }
    }
}
