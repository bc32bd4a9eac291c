//! Reference implementations used to check the library. Deliberately naive and
//! independent of the code paths they verify.
#![allow(dead_code)]

use tagalign_core::{BinaryDescriptor, Point3};

/// Hamming distance by testing each of the 256 bits.
pub fn hamming_bit_loop(a: &BinaryDescriptor, b: &BinaryDescriptor) -> u32 {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let mut n = 0;
    for bit in 0..256 {
        let x = (a[bit / 8] >> (bit % 8)) & 1;
        let y = (b[bit / 8] >> (bit % 8)) & 1;
        if x != y {
            n += 1;
        }
    }
    n
}

/// Accepted match of the reference matcher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMatch {
    pub query_index: usize,
    pub target_index: usize,
    pub point_index: usize,
    pub best_dist: f64,
    pub second_dist: f64,
}

/// Ratio-test matcher: sorts every distance per query (stable by target
/// index), then applies the acceptance rule and per-point deduplication.
pub fn full_sort_matcher(
    distances: &[Vec<f64>],
    owners: &[usize],
    ratio_max: f64,
    abs_max: f64,
) -> Vec<OracleMatch> {
    let mut accepted: Vec<OracleMatch> = Vec::new();
    for (q, row) in distances.iter().enumerate() {
        let mut order: Vec<(f64, usize)> = row.iter().copied().zip(0..).collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let (best, best_idx) = order[0];
        let second = order.get(1).map_or(f64::INFINITY, |x| x.0);
        let ok = if second == 0.0 {
            false
        } else {
            let ratio = if second.is_infinite() { 0.0 } else { best / second };
            ratio < ratio_max && best < abs_max
        };
        if !ok {
            continue;
        }
        let m = OracleMatch {
            query_index: q,
            target_index: best_idx,
            point_index: owners[best_idx],
            best_dist: best,
            second_dist: second,
        };
        match accepted.iter_mut().find(|a| a.point_index == m.point_index) {
            Some(prev) if m.best_dist < prev.best_dist => *prev = m,
            Some(_) => {}
            None => accepted.push(m),
        }
    }
    accepted.sort_by_key(|m| m.query_index);
    accepted
}

/// Single-linkage partition by union-find over all O(n²) pairs, in the
/// canonical form (sorted members, clusters ordered by first member).
pub fn union_find_clusters(points: &[Point3], epsilon: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if points[i].distance(&points[j]) <= epsilon {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|c| c[0]);
    out
}

/// Canonical set-of-sets form of any partition.
pub fn canonical(mut clusters: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort();
    clusters
}
