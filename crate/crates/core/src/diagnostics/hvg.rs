//! Horizontal visibility graphs and the tests built on them.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{replicate_rng, require_finite, surrogate_p_value, surrogate_stats, TestResult};
use crate::error::{QrseError, Result};

/// Directed horizontal visibility graph; edges point forward in time.
///
/// Nodes `i < j` are linked iff every value strictly between them is below
/// both `x[i]` and `x[j]`. Equal heights block visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct HvgGraph {
    /// Ascending future neighbours of each node.
    forward: Vec<Vec<usize>>,
    /// Ascending past neighbours of each node.
    backward: Vec<Vec<usize>>,
}

pub fn hvg_build(series: &[f64]) -> HvgGraph {
    let n = series.len();
    let mut forward = vec![Vec::new(); n];
    let mut backward = vec![Vec::new(); n];
    let mut stack: Vec<usize> = Vec::new();
    for j in 0..n {
        while let Some(&top) = stack.last() {
            forward[top].push(j);
            backward[j].push(top);
            if series[top] < series[j] {
                stack.pop();
            } else {
                if series[top] == series[j] {
                    stack.pop();
                }
                break;
            }
        }
        stack.push(j);
    }
    for b in &mut backward {
        b.reverse();
    }
    HvgGraph { forward, backward }
}

impl HvgGraph {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.forward.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        i != j && self.forward[i].binary_search(&j).is_ok()
    }

    pub fn future_neighbors(&self, i: usize) -> &[usize] {
        &self.forward[i]
    }

    pub fn past_neighbors(&self, i: usize) -> &[usize] {
        &self.backward[i]
    }

    /// Links to the future.
    pub fn out_degree(&self) -> Vec<usize> {
        self.forward.iter().map(Vec::len).collect()
    }

    /// Links to the past.
    pub fn in_degree(&self) -> Vec<usize> {
        self.backward.iter().map(Vec::len).collect()
    }

    pub fn degree(&self) -> Vec<usize> {
        self.forward
            .iter()
            .zip(&self.backward)
            .map(|(f, b)| f.len() + b.len())
            .collect()
    }

    fn clustering_of(&self, neighbors: &[usize]) -> Option<f64> {
        let k = neighbors.len();
        if k < 2 {
            return None;
        }
        let mut links = 0usize;
        for (a, &u) in neighbors.iter().enumerate() {
            for &v in &neighbors[a + 1..] {
                if self.has_edge(u, v) {
                    links += 1;
                }
            }
        }
        Some(2.0 * links as f64 / (k * (k - 1)) as f64)
    }

    /// Undirected local clustering; `None` for nodes of degree below 2.
    pub fn clustering(&self) -> Vec<Option<f64>> {
        (0..self.len())
            .map(|i| {
                let mut nb: Vec<usize> = self.backward[i].iter().chain(&self.forward[i]).copied().collect();
                nb.sort_unstable();
                self.clustering_of(&nb)
            })
            .collect()
    }

    /// Clustering among each node's past neighbours.
    pub fn retarded_clustering(&self) -> Vec<Option<f64>> {
        self.backward.iter().map(|nb| self.clustering_of(nb)).collect()
    }

    /// Clustering among each node's future neighbours.
    pub fn advanced_clustering(&self) -> Vec<Option<f64>> {
        self.forward.iter().map(|nb| self.clustering_of(nb)).collect()
    }
}

const MIN_LEN: usize = 500;

fn require_len(series: &[f64], what: &str) -> Result<()> {
    require_finite(series)?;
    if series.len() < MIN_LEN {
        return Err(QrseError::InsufficientData(format!(
            "{what} needs at least {MIN_LEN} points, got {}",
            series.len()
        )));
    }
    Ok(())
}

/// Degree law of the HVG of an i.i.d. continuous series, k >= 2.
pub fn iid_degree_probability(k: usize) -> f64 {
    if k < 2 {
        0.0
    } else {
        (2.0f64 / 3.0).powi(k as i32 - 2) / 3.0
    }
}

/// Chi-square discrepancy of interior-node degrees from the i.i.d. law.
/// Degrees from `top` upward share one bin, with `top` the largest degree
/// whose tail still expects at least five nodes.
fn degree_discrepancy(degrees: &[usize]) -> f64 {
    let interior = &degrees[1..degrees.len() - 1];
    let total = interior.len() as f64;
    let mut top = 3;
    while total * (2.0f64 / 3.0).powi(top as i32 - 1) >= 5.0 {
        top += 1;
    }
    let mut observed = vec![0usize; top - 1];
    for &k in interior {
        observed[k.clamp(2, top) - 2] += 1;
    }
    observed
        .iter()
        .enumerate()
        .map(|(b, &o)| {
            let k = b + 2;
            let p = if k == top {
                (2.0f64 / 3.0).powi(top as i32 - 2)
            } else {
                iid_degree_probability(k)
            };
            let e = total * p;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

/// Chi-square distance of the HVG degree distribution from the i.i.d. law,
/// calibrated by random-shuffle surrogates.
pub fn hvg_degree_test(series: &[f64], surrogates: usize, seed: u64) -> Result<TestResult> {
    require_len(series, "HVG degree test")?;
    if surrogates == 0 {
        return Err(QrseError::Parameter("surrogates must be positive".into()));
    }
    let stat = degree_discrepancy(&hvg_build(series).degree());
    let null = surrogate_stats(surrogates, seed, |rng| {
        let mut s = series.to_vec();
        s.shuffle(rng);
        degree_discrepancy(&hvg_build(&s).degree())
    });
    Ok(TestResult::new("hvg_degree", stat, surrogate_p_value(stat, &null), series.len())
        .with("surrogates", surrogates)
        .with("seed", seed)
        .with("null", "shuffle"))
}

/// Two-sample Kolmogorov–Smirnov distance. Values compare as `(value, key)`
/// pairs, so distinct keys break ties between equal values.
fn ks_distance(a: &mut [(f64, f64)], b: &mut [(f64, f64)]) -> f64 {
    let cmp = |x: &(f64, f64), y: &(f64, f64)| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1));
    a.sort_by(cmp);
    b.sort_by(cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = if cmp(&a[i], &b[j]).is_le() { a[i] } else { b[j] };
        while i < a.len() && cmp(&a[i], &v).is_le() {
            i += 1;
        }
        while j < b.len() && cmp(&b[j], &v).is_le() {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Kolmogorov survival function Q(lambda) = P(K > lambda).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=8).map(|j| (-((2 * j - 1) as f64).powi(2) * c).exp()).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=8)
            .map(|j| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic two-sample KS p-value with the usual small-sample correction.
fn ks_p_value(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let root = ne.sqrt();
    kolmogorov_q((root + 0.12 + 0.11 / root) * d)
}

/// Compares retarded and advanced local clustering on the directed HVG.
///
/// The statistic is their two-sample KS distance. Clustering takes few
/// distinct values, and the asymptotic Kolmogorov law applied to that
/// distance is far too conservative, so the p-value uses the distance
/// recomputed with ties broken by independent uniform keys drawn from `seed`.
pub fn clustering_irreversibility_test(series: &[f64], seed: u64) -> Result<TestResult> {
    require_len(series, "HVG clustering test")?;
    let g = hvg_build(series);
    let retarded: Vec<f64> = g.retarded_clustering().into_iter().flatten().collect();
    let advanced: Vec<f64> = g.advanced_clustering().into_iter().flatten().collect();
    if retarded.is_empty() || advanced.is_empty() {
        return Err(QrseError::InsufficientData("no node has two past or two future neighbours".into()));
    }
    let mut rng = replicate_rng(seed, 0);
    let mut split = |a: &[f64], b: &[f64]| -> (f64, f64) {
        let plain = |v: &[f64]| v.iter().map(|x| (*x, 0.0)).collect::<Vec<_>>();
        let d = ks_distance(&mut plain(a), &mut plain(b));
        let mut keyed = |v: &[f64]| v.iter().map(|x| (*x, rng.random::<f64>())).collect::<Vec<_>>();
        let (mut ka, mut kb) = (keyed(a), keyed(b));
        let d_tied = ks_distance(&mut ka, &mut kb);
        (d, ks_p_value(d_tied, a.len(), b.len()))
    };
    let (d, p) = split(&retarded, &advanced);
    let k_in: Vec<f64> = g.in_degree().into_iter().map(|k| k as f64).collect();
    let k_out: Vec<f64> = g.out_degree().into_iter().map(|k| k as f64).collect();
    let (d_deg, p_deg) = split(&k_in, &k_out);

    Ok(TestResult::new("hvg_clustering", d, p, series.len())
        .with("seed", seed)
        .with("ties", "random")
        .with("n_retarded", retarded.len())
        .with("n_advanced", advanced.len())
        .with("degree_ks", d_deg)
        .with("degree_p_value", p_deg)
        .with("null", "asymptotic_ks"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(x: &[f64]) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                if (i + 1..j).all(|k| x[k] < x[i] && x[k] < x[j]) {
                    e.push((i, j));
                }
            }
        }
        e
    }

    fn edges(g: &HvgGraph) -> Vec<(usize, usize)> {
        (0..g.len())
            .flat_map(|i| g.future_neighbors(i).iter().map(move |&j| (i, j)))
            .collect()
    }

    #[test]
    fn increasing_series_is_a_path() {
        let g = hvg_build(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(g.degree(), vec![1, 2, 2, 2, 1]);
    }

    #[test]
    fn two_peaks_see_each_other() {
        let g = hvg_build(&[1.0, 3.0, 1.0, 3.0, 1.0]);
        assert_eq!(g.degree(), vec![1, 3, 2, 3, 1]);
        assert!(g.has_edge(1, 3));
    }

    #[test]
    fn equal_heights_block() {
        let x = [3.0, 1.0, 3.0, 1.0, 3.0];
        assert_eq!(edges(&hvg_build(&x)), brute_force(&x));
        assert!(!hvg_build(&x).has_edge(0, 4));
    }

    #[test]
    fn stack_matches_brute_force() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 7919 + 13) % 31) as f64).collect();
        assert_eq!(edges(&hvg_build(&x)), brute_force(&x));
    }

    #[test]
    fn past_neighbours_cluster_as_staircase() {
        let x: Vec<f64> = (0..300).map(|i| ((i * 104729 + 7) % 997) as f64).collect();
        let g = hvg_build(&x);
        for (i, c) in g.retarded_clustering().iter().enumerate() {
            if let Some(c) = c {
                assert!((c - 2.0 / g.past_neighbors(i).len() as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ks_helpers() {
        let k = |v: &[f64]| v.iter().map(|x| (*x, 0.0)).collect::<Vec<_>>();
        assert_eq!(ks_distance(&mut k(&[1.0, 2.0, 3.0]), &mut k(&[1.0, 2.0, 3.0])), 0.0);
        assert_eq!(ks_distance(&mut k(&[1.0, 2.0, 3.0]), &mut k(&[10.0, 11.0])), 1.0);
        assert!((ks_distance(&mut k(&[1.0, 2.0]), &mut k(&[2.0, 3.0])) - 0.5).abs() < 1e-12);
        // Reference values of the Kolmogorov distribution.
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.0) - 0.2700).abs() < 1e-3);
        assert!((kolmogorov_q(0.5) - 0.9639).abs() < 1e-3);
    }
}
