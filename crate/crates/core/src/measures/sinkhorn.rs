//! Log-domain Sinkhorn iterations with geometric annealing of the
//! regularization.

use super::simplex::Site;

const INNER_MAX: usize = 200;
const MARGINAL_TOL: f64 = 1e-7;

fn cost(a: &[Site], b: &[Site]) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for p in a {
        for q in b {
            c.push((p.x - q.x).hypot(p.y - q.y));
        }
    }
    c
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Transport cost `<P, C>` of the entropic plan at the final regularization
/// of the schedule `eps_start -> eps_end` (halving each stage).
pub fn entropic_plan_cost(a: &[Site], b: &[Site], eps_start: f64, eps_end: f64) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (s, d) = (a.len(), b.len());
    let c = cost(a, b);
    let la: Vec<f64> = a.iter().map(|p| p.mass.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|p| p.mass.ln()).collect();
    let mut f = vec![0.0; s];
    let mut g = vec![0.0; d];
    let mut eps = eps_start;
    loop {
        for _ in 0..INNER_MAX {
            for i in 0..s {
                let row = &c[i * d..(i + 1) * d];
                f[i] = -eps * log_sum_exp((0..d).map(|j| lb[j] + (g[j] - row[j]) / eps));
            }
            let mut err = 0.0;
            for j in 0..d {
                let lse = log_sum_exp((0..s).map(|i| la[i] + (f[i] - c[i * d + j]) / eps));
                // Column marginal before the update measures the violation.
                err += (b[j].mass * (lse + (g[j]) / eps).exp() - b[j].mass).abs();
                g[j] = -eps * lse;
            }
            if err < MARGINAL_TOL {
                break;
            }
        }
        if eps <= eps_end {
            break;
        }
        eps = (0.5 * eps).max(eps_end);
    }
    let mut total = 0.0;
    for i in 0..s {
        for j in 0..d {
            let cij = c[i * d + j];
            total += (la[i] + lb[j] + (f[i] + g[j] - cij) / eps).exp() * cij;
        }
    }
    total
}
