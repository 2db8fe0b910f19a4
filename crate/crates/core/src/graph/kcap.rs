use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::rng::{stream, Stream};
use super::GeometricGraph;
use crate::error::{Error, Result};

/// Sorted, duplicate-free set of active vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    members: Vec<usize>,
    n: usize,
}

impl ActiveSet {
    pub fn new(mut members: Vec<usize>, n: usize) -> Result<Self> {
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("active", "duplicate vertex"));
        }
        if members.last().is_some_and(|&v| v >= n) {
            return Err(Error::config("active", format!("vertex out of range for n = {n}")));
        }
        Ok(ActiveSet { members, n })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }

    pub fn indicator(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &v in &self.members {
            mask[v] = true;
        }
        mask
    }
}

/// Uniformly random `k`-subset of `0..n` from the initial-set stream.
pub fn random_active_set(n: usize, k: usize, seed: u64) -> Result<ActiveSet> {
    if k > n {
        return Err(Error::config("k", format!("{k} exceeds n = {n}")));
    }
    let mut rng = stream(seed, Stream::InitialSet, 0);
    ActiveSet::new(index::sample(&mut rng, n, k).into_vec(), n)
}

/// Number of active neighbors of every vertex.
pub fn in_degrees(graph: &GeometricGraph, active: &ActiveSet) -> Vec<usize> {
    let mask = active.indicator();
    (0..graph.n())
        .into_par_iter()
        .map(|v| graph.neighbors(v).into_iter().filter(|&u| mask[u]).count())
        .collect()
}

/// `f_G(x) = |N(x) ∩ A| / (n - 1)`.
pub fn empirical_input(graph: &GeometricGraph, active: &ActiveSet, x: usize) -> f64 {
    let count = graph
        .neighbors(x)
        .into_iter()
        .filter(|&u| active.contains(u))
        .count();
    count as f64 / (graph.n() - 1) as f64
}

/// The `k` vertices of highest in-degree; ties broken by independent random keys.
pub fn k_cap_step<R: Rng>(
    graph: &GeometricGraph,
    active: &ActiveSet,
    k: usize,
    rng: &mut R,
) -> Result<ActiveSet> {
    let n = graph.n();
    if k > n {
        return Err(Error::config("k", format!("{k} exceeds n = {n}")));
    }
    let degrees = in_degrees(graph, active);
    let mut ranked: Vec<(usize, u64, usize)> =
        (0..n).map(|v| (degrees[v], rng.random::<u64>(), v)).collect();
    ranked.sort_unstable_by_key(|&(deg, key, _)| std::cmp::Reverse((deg, key)));
    ActiveSet::new(ranked[..k].iter().map(|r| r.2).collect(), n)
}

/// Vertices whose empirical input reaches `threshold`.
pub fn threshold_step(graph: &GeometricGraph, active: &ActiveSet, threshold: f64) -> ActiveSet {
    let scale = (graph.n() - 1) as f64;
    let members = in_degrees(graph, active)
        .into_iter()
        .enumerate()
        .filter(|(_, d)| *d as f64 / scale >= threshold)
        .map(|(v, _)| v)
        .collect();
    ActiveSet {
        members,
        n: graph.n(),
    }
}

/// `A_0, A_1, ..., A_steps` under k-cap with tie-breaking drawn from `seed`.
pub fn k_cap_trajectory(
    graph: &GeometricGraph,
    initial: ActiveSet,
    k: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<ActiveSet>> {
    let mut out = vec![initial];
    for t in 0..steps {
        let mut rng = stream(seed, Stream::TieBreak, t as u64);
        let next = k_cap_step(graph, out.last().unwrap(), k, &mut rng)?;
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sample_graph, BoxDomain};
    use crate::kernel::Kernel;
    use rand::seq::SliceRandom;

    fn graph(n: usize, seed: u64) -> GeometricGraph {
        sample_graph(n, &BoxDomain::unit(2).unwrap(), &Kernel::gaussian(0.15).unwrap(), seed).unwrap()
    }

    #[test]
    fn k_cap_keeps_exactly_k_top_degree_vertices() {
        let g = graph(400, 3);
        let a = random_active_set(400, 40, 1).unwrap();
        let next = k_cap_step(&g, &a, 40, &mut stream(0, Stream::TieBreak, 0)).unwrap();
        assert_eq!(next.len(), 40);
        let deg = in_degrees(&g, &a);
        let weakest_in = next.members().iter().map(|&v| deg[v]).min().unwrap();
        let strongest_out = (0..400).filter(|v| !next.contains(*v)).map(|v| deg[v]).max().unwrap();
        assert!(weakest_in >= strongest_out);
    }

    #[test]
    fn in_degrees_match_brute_force() {
        let g = graph(150, 8);
        let a = random_active_set(150, 30, 2).unwrap();
        let deg = in_degrees(&g, &a);
        for v in 0..150 {
            let brute = (0..150).filter(|&u| a.contains(u) && g.has_edge(u, v)).count();
            assert_eq!(deg[v], brute);
            assert_eq!(empirical_input(&g, &a, v), brute as f64 / 149.0);
        }
    }

    #[test]
    fn exchangeable_under_vertex_permutation() {
        let g = graph(200, 5);
        let mut perm: Vec<usize> = (0..200).collect();
        perm.shuffle(&mut stream(77, Stream::Replicate, 0));
        let h = g.relabeled(&perm);
        let a = random_active_set(200, 25, 4).unwrap();
        let pa = ActiveSet::new(a.members().iter().map(|&v| perm[v]).collect(), 200).unwrap();
        let dg = in_degrees(&g, &a);
        let dh = in_degrees(&h, &pa);
        for v in 0..200 {
            assert_eq!(dg[v], dh[perm[v]]);
        }
        // With no ties at the cut, the k-cap image is a relabeling too.
        let mut sorted = dg.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let k = (1..200).find(|&k| sorted[k - 1] > sorted[k]).unwrap();
        let next_g = k_cap_step(&g, &a, k, &mut stream(1, Stream::TieBreak, 0)).unwrap();
        let next_h = k_cap_step(&h, &pa, k, &mut stream(2, Stream::TieBreak, 0)).unwrap();
        let mapped = ActiveSet::new(next_g.members().iter().map(|&v| perm[v]).collect(), 200).unwrap();
        assert_eq!(mapped, next_h);
    }

    #[test]
    fn threshold_selection_and_trajectory() {
        let g = graph(200, 6);
        let a = random_active_set(200, 50, 3).unwrap();
        assert_eq!(threshold_step(&g, &a, 0.0).len(), 200);
        assert!(threshold_step(&g, &a, 1.1).is_empty());
        let traj = k_cap_trajectory(&g, a.clone(), 50, 5, 9).unwrap();
        assert_eq!(traj.len(), 6);
        assert_eq!(traj, k_cap_trajectory(&g, a, 50, 5, 9).unwrap());
        assert!(traj.iter().all(|s| s.len() == 50));
    }

    #[test]
    fn tied_degrees_give_a_uniform_subset() {
        // Empty graph: every in-degree is 0, so each vertex is kept with
        // probability k/n = 1/3 per trial.
        let narrow = Kernel::gaussian(1e-4).unwrap();
        let g = sample_graph(6, &BoxDomain::unit(1).unwrap(), &narrow, 0).unwrap();
        assert_eq!(g.edge_count(), 0);
        let a = ActiveSet::new(vec![0, 1], 6).unwrap();
        let trials = 10_000;
        let mut hits = [0usize; 6];
        let mut rng = stream(5, Stream::TieBreak, 0);
        for _ in 0..trials {
            for &v in k_cap_step(&g, &a, 2, &mut rng).unwrap().members() {
                hits[v] += 1;
            }
        }
        let p = 2.0 / 6.0;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - trials as f64 * p).abs() <= 3.0 * sd, "{hits:?}");
        }
    }

    #[test]
    fn distinct_degrees_give_the_exact_top_k() {
        let g = graph(300, 12);
        let a = random_active_set(300, 60, 5).unwrap();
        let deg = in_degrees(&g, &a);
        let mut order: Vec<usize> = (0..300).collect();
        order.sort_by(|&u, &v| deg[v].cmp(&deg[u]));
        let k = (1..300).find(|&k| deg[order[k - 1]] > deg[order[k]] && k >= 10).unwrap();
        let expected = ActiveSet::new(order[..k].to_vec(), 300).unwrap();
        for s in 0..5 {
            let got = k_cap_step(&g, &a, k, &mut stream(s, Stream::TieBreak, 0)).unwrap();
            assert_eq!(got, expected);
        }
        let all = k_cap_step(&g, &a, 300, &mut stream(0, Stream::TieBreak, 0)).unwrap();
        assert_eq!(all.members(), (0..300).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn empirical_input_examples() {
        let g = graph(8, 21);
        assert_eq!(empirical_input(&g, &ActiveSet::new(vec![], 8).unwrap(), 3), 0.0);
        let ones = Kernel::table(vec![(0.0, 1.0), (2.0, 1.0)]).unwrap();
        let complete = sample_graph(8, &BoxDomain::unit(2).unwrap(), &ones, 0).unwrap();
        let others = ActiveSet::new((1..8).collect(), 8).unwrap();
        assert_eq!(empirical_input(&complete, &others, 0), 1.0);
        // Enumerate the adjacency matrix by hand.
        let a = ActiveSet::new(vec![0, 2, 5, 7], 8).unwrap();
        for x in 0..8 {
            let count = [0, 2, 5, 7].iter().filter(|&&u| g.has_edge(x, u)).count();
            assert_eq!(empirical_input(&g, &a, x), count as f64 / 7.0);
        }
    }

    #[test]
    fn active_set_validation() {
        assert!(ActiveSet::new(vec![1, 1], 5).is_err());
        assert!(ActiveSet::new(vec![5], 5).is_err());
        assert!(random_active_set(5, 6, 0).is_err());
    }
}
