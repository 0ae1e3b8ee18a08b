//! Primal network simplex for the Euclidean transportation problem between
//! point masses, with candidate-arc column generation.
//!
//! The basis is a spanning tree rooted at an artificial node that is linked
//! to every source and sink by an artificial arc of cost `M > max cost / 2`.
//! Candidate arcs start as the `k` nearest neighbours of every node; when the
//! simplex is optimal on the candidates, all source/sink pairs are priced
//! against the current potentials and violated ones are added, so the final
//! answer is certified optimal over the full bipartite graph.

const NONE: usize = usize::MAX;
const INITIAL_NEIGHBOURS: usize = 24;
const MAX_PIVOTS_PER_NODE: usize = 5_000;
const ADD_PER_NODE: usize = 24;

#[derive(Debug, Clone, Copy)]
pub struct Site {
    pub x: f64,
    pub y: f64,
    pub mass: f64,
}

struct Network<'a> {
    sources: &'a [Site],
    sinks: &'a [Site],
    /// Node ids: sources `0..s`, sinks `s..s+d`, root `s+d`.
    root: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    /// Artificial arcs that left the basis are never priced again.
    dead: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    pi: Vec<f64>,
    next_arc: usize,
    tol: f64,
}

fn dist(a: &Site, b: &Site) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

impl<'a> Network<'a> {
    fn new(sources: &'a [Site], sinks: &'a [Site]) -> Self {
        let (s, d) = (sources.len(), sinks.len());
        let n = s + d + 1;
        let root = s + d;
        let mut max_c = 0.0_f64;
        for a in sources {
            for b in sinks {
                max_c = max_c.max(dist(a, b));
            }
        }
        let big_m = 2.0 * max_c + 1.0;
        let mut net = Network {
            sources,
            sinks,
            root,
            src: Vec::new(),
            dst: Vec::new(),
            cost: Vec::new(),
            flow: Vec::new(),
            in_tree: Vec::new(),
            dead: Vec::new(),
            parent: vec![root; n],
            pred: vec![NONE; n],
            depth: vec![1; n],
            children: vec![Vec::new(); n],
            pi: vec![0.0; n],
            next_arc: 0,
            tol: 1e-12 * big_m,
        };
        net.parent[root] = NONE;
        net.depth[root] = 0;
        for (i, p) in sources.iter().enumerate() {
            let a = net.push_arc(i, root, big_m);
            net.flow[a] = p.mass;
            net.in_tree[a] = true;
            net.pred[i] = a;
            net.pi[i] = -big_m;
            net.children[root].push(i);
        }
        for (j, p) in sinks.iter().enumerate() {
            let node = s + j;
            let a = net.push_arc(root, node, big_m);
            net.flow[a] = p.mass;
            net.in_tree[a] = true;
            net.pred[node] = a;
            net.pi[node] = big_m;
            net.children[root].push(node);
        }
        // The root absorbs any round-off sized imbalance between both sides.
        net
    }

    fn push_arc(&mut self, u: usize, v: usize, c: f64) -> usize {
        self.src.push(u);
        self.dst.push(v);
        self.cost.push(c);
        self.flow.push(0.0);
        self.in_tree.push(false);
        self.dead.push(false);
        self.src.len() - 1
    }

    fn site(&self, node: usize) -> &Site {
        let s = self.sources.len();
        if node < s {
            &self.sources[node]
        } else {
            &self.sinks[node - s]
        }
    }

    fn add_real_arc(&mut self, i: usize, j: usize) {
        let (u, v) = (i, self.sources.len() + j);
        let c = dist(self.site(u), self.site(v));
        self.push_arc(u, v, c);
    }

    #[inline]
    fn reduced(&self, a: usize) -> f64 {
        self.cost[a] + self.pi[self.src[a]] - self.pi[self.dst[a]]
    }

    /// Block pricing: the most negative reduced cost in the first block that
    /// contains a violation, scanning cyclically from the last position.
    fn find_entering(&mut self) -> Option<usize> {
        let m = self.src.len();
        let block = ((m as f64).sqrt() as usize).max(16);
        let mut best = NONE;
        let mut best_rc = -self.tol;
        let mut scanned = 0;
        let mut cnt = 0;
        let mut a = self.next_arc % m;
        while scanned < m {
            if !self.in_tree[a] && !self.dead[a] {
                let rc = self.reduced(a);
                if rc < best_rc {
                    best_rc = rc;
                    best = a;
                }
            }
            scanned += 1;
            cnt += 1;
            a += 1;
            if a == m {
                a = 0;
            }
            if cnt == block {
                if best != NONE {
                    self.next_arc = a;
                    return Some(best);
                }
                cnt = 0;
            }
        }
        if best != NONE {
            self.next_arc = a;
            Some(best)
        } else {
            None
        }
    }

    fn pivot(&mut self, e: usize) {
        let (u, v) = (self.src[e], self.dst[e]);
        // Paths from u and v up to their common ancestor.
        let (mut a, mut b) = (u, v);
        let mut u_path = Vec::new();
        let mut v_path = Vec::new();
        while a != b {
            if self.depth[a] >= self.depth[b] {
                u_path.push(a);
                a = self.parent[a];
            } else {
                v_path.push(b);
                b = self.parent[b];
            }
        }
        // Traversal in flow direction: join -> u (down), e, v -> join (up).
        // On the u side an upward-pointing tree arc runs against the flow; on
        // the v side a downward-pointing one does.
        let mut delta = f64::INFINITY;
        let mut leave_node = NONE;
        for &x in u_path.iter().rev() {
            let arc = self.pred[x];
            if self.src[arc] == x && self.flow[arc] <= delta {
                delta = self.flow[arc];
                leave_node = x;
            }
        }
        for &x in &v_path {
            let arc = self.pred[x];
            if self.src[arc] != x && self.flow[arc] <= delta {
                delta = self.flow[arc];
                leave_node = x;
            }
        }
        debug_assert!(leave_node != NONE, "negative cycle without blocking arc");
        for &x in &u_path {
            let arc = self.pred[x];
            if self.src[arc] == x {
                self.flow[arc] -= delta;
            } else {
                self.flow[arc] += delta;
            }
        }
        for &x in &v_path {
            let arc = self.pred[x];
            if self.src[arc] == x {
                self.flow[arc] += delta;
            } else {
                self.flow[arc] -= delta;
            }
        }
        self.flow[e] = delta;
        let leaving = self.pred[leave_node];
        self.flow[leaving] = 0.0;
        self.in_tree[leaving] = false;
        if self.src[leaving] == self.root || self.dst[leaving] == self.root {
            self.dead[leaving] = true;
        }
        self.in_tree[e] = true;

        // Reattach the subtree hanging below `leave_node` through `e`.
        let on_u_side = u_path.contains(&leave_node);
        let (w, other) = if on_u_side { (u, v) } else { (v, u) };
        let rc = self.reduced(e);
        let shift = if on_u_side { -rc } else { rc };
        let q = leave_node;
        let old_parent = self.parent[q];
        remove_child(&mut self.children[old_parent], q);
        let mut path = vec![w];
        while *path.last().unwrap() != q {
            let x = *path.last().unwrap();
            path.push(self.parent[x]);
        }
        let old_pred: Vec<usize> = path.iter().map(|&x| self.pred[x]).collect();
        for i in 0..path.len() - 1 {
            let (x, y) = (path[i], path[i + 1]);
            remove_child(&mut self.children[y], x);
            self.parent[y] = x;
            self.pred[y] = old_pred[i];
            self.children[x].push(y);
        }
        self.parent[w] = other;
        self.pred[w] = e;
        self.children[other].push(w);
        let mut stack = vec![w];
        while let Some(x) = stack.pop() {
            self.depth[x] = self.depth[self.parent[x]] + 1;
            self.pi[x] += shift;
            stack.extend_from_slice(&self.children[x]);
        }
    }

    fn run(&mut self, max_pivots: usize) -> Result<(), usize> {
        let mut pivots = 0;
        while let Some(e) = self.find_entering() {
            self.pivot(e);
            pivots += 1;
            if pivots > max_pivots {
                return Err(pivots);
            }
        }
        Ok(())
    }

    /// Prices every source/sink pair against the current potentials and adds
    /// up to [`ADD_PER_NODE`] most violated arcs per source and per sink.
    /// Only pairs with `pi_sink > pi_source` can violate (costs are
    /// nonnegative), which prunes most of the scan near optimality.
    /// Returns the number of arcs added.
    fn price_all_pairs(&mut self) -> usize {
        let s = self.sources.len();
        let d = self.sinks.len();
        let mut sinks_by_pi: Vec<usize> = (0..d).collect();
        sinks_by_pi.sort_by(|&a, &b| self.pi[s + b].total_cmp(&self.pi[s + a]));
        let mut sources_by_pi: Vec<usize> = (0..s).collect();
        sources_by_pi.sort_by(|&a, &b| self.pi[a].total_cmp(&self.pi[b]));
        let mut found = std::collections::HashSet::new();
        let keep = |cands: &mut Vec<(f64, usize, usize)>, found: &mut std::collections::HashSet<(usize, usize)>| {
            if cands.len() > ADD_PER_NODE {
                cands.select_nth_unstable_by(ADD_PER_NODE - 1, |a, b| a.0.total_cmp(&b.0));
                cands.truncate(ADD_PER_NODE);
            }
            for &(_, i, j) in cands.iter() {
                found.insert((i, j));
            }
            cands.clear();
        };
        let mut cands = Vec::new();
        for i in 0..s {
            for &j in &sinks_by_pi {
                let gap = self.pi[s + j] - self.pi[i];
                if gap <= self.tol {
                    break;
                }
                let rc = dist(&self.sources[i], &self.sinks[j]) - gap;
                if rc < -self.tol {
                    cands.push((rc, i, j));
                }
            }
            keep(&mut cands, &mut found);
        }
        for j in 0..d {
            for &i in &sources_by_pi {
                let gap = self.pi[s + j] - self.pi[i];
                if gap <= self.tol {
                    break;
                }
                let rc = dist(&self.sources[i], &self.sinks[j]) - gap;
                if rc < -self.tol {
                    cands.push((rc, i, j));
                }
            }
            keep(&mut cands, &mut found);
        }
        let mut added: Vec<(usize, usize)> = found.into_iter().collect();
        added.sort_unstable();
        for &(i, j) in &added {
            self.add_real_arc(i, j);
        }
        added.len()
    }

    fn real_cost(&self) -> f64 {
        (0..self.src.len())
            .filter(|&a| self.src[a] != self.root && self.dst[a] != self.root)
            .map(|a| self.flow[a] * self.cost[a])
            .sum()
    }
}

fn remove_child(list: &mut Vec<usize>, x: usize) {
    if let Some(p) = list.iter().position(|&c| c == x) {
        list.swap_remove(p);
    }
}

/// Indices of the `k` nearest points of `to` for each point of `from`.
fn nearest(from: &[Site], to: &[Site], k: usize) -> Vec<Vec<usize>> {
    let k = k.min(to.len());
    from.iter()
        .map(|p| {
            let mut d: Vec<(f64, usize)> = to.iter().enumerate().map(|(j, q)| (dist(p, q), j)).collect();
            if k < d.len() {
                d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
                d.truncate(k);
            }
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Minimum Euclidean transport cost between two families of point masses with
/// equal total mass (up to round-off).
///
/// Returns `Err(pivots)` only if the pivot budget is exhausted, which signals
/// a numerical breakdown rather than a hard instance.
pub fn transport_cost(sources: &[Site], sinks: &[Site]) -> Result<f64, usize> {
    if sources.is_empty() || sinks.is_empty() {
        return Ok(0.0);
    }
    let mut net = Network::new(sources, sinks);
    let mut seen = std::collections::HashSet::new();
    for (i, nb) in nearest(sources, sinks, INITIAL_NEIGHBOURS).into_iter().enumerate() {
        for j in nb {
            if seen.insert((i, j)) {
                net.add_real_arc(i, j);
            }
        }
    }
    for (j, nb) in nearest(sinks, sources, INITIAL_NEIGHBOURS).into_iter().enumerate() {
        for i in nb {
            if seen.insert((i, j)) {
                net.add_real_arc(i, j);
            }
        }
    }
    let budget = MAX_PIVOTS_PER_NODE * (sources.len() + sinks.len());
    loop {
        net.run(budget)?;
        if net.price_all_pairs() == 0 {
            break;
        }
    }
    Ok(net.real_cost())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(x: f64, y: f64, mass: f64) -> Site {
        Site { x, y, mass }
    }

    #[test]
    fn single_pair() {
        let c = transport_cost(&[site(0.0, 0.0, 1.0)], &[site(3.0, 4.0, 1.0)]).unwrap();
        assert!((c - 5.0).abs() < 1e-14);
    }

    #[test]
    fn crossing_assignment_is_uncrossed() {
        let a = [site(0.0, 0.0, 0.5), site(0.0, 1.0, 0.5)];
        let b = [site(1.0, 1.0, 0.5), site(1.0, 0.0, 0.5)];
        let c = transport_cost(&a, &b).unwrap();
        assert!((c - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_brute_force_permutations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 5;
            let a: Vec<Site> = (0..n).map(|_| site(rng.random(), rng.random(), 1.0 / n as f64)).collect();
            let b: Vec<Site> = (0..n).map(|_| site(rng.random(), rng.random(), 1.0 / n as f64)).collect();
            // Uniform weights: an optimal plan is a permutation.
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = f64::INFINITY;
            permute(&mut perm, 0, &mut |p| {
                let c: f64 = (0..n).map(|i| dist(&a[i], &b[p[i]])).sum::<f64>() / n as f64;
                best = best.min(c);
            });
            let c = transport_cost(&a, &b).unwrap();
            assert!((c - best).abs() < 1e-12, "{c} vs {best}");
        }
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }
}
