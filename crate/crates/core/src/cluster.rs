//! Union-find cluster labeling shared by the lattice, hypercube and particle models.

use std::collections::BTreeMap;

use crate::lattice::Lattice3D;

/// Disjoint-set forest with path compression and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Returns `true` when `a` and `b` were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        true
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

/// Anything whose elements have a symmetric neighbor relation.
pub trait Adjacency {
    fn element_count(&self) -> usize;
    fn for_each_neighbor<F: FnMut(usize)>(&self, element: usize, f: F);
}

impl<S> Adjacency for Lattice3D<S> {
    fn element_count(&self) -> usize {
        self.len()
    }

    fn for_each_neighbor<F: FnMut(usize)>(&self, element: usize, f: F) {
        Lattice3D::for_each_neighbor(self, element, f)
    }
}

/// The n-dimensional hypercube: elements are n-bit integers, adjacent when
/// they differ in exactly one bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hypercube {
    pub bits: u32,
}

impl Adjacency for Hypercube {
    fn element_count(&self) -> usize {
        1usize << self.bits
    }

    fn for_each_neighbor<F: FnMut(usize)>(&self, element: usize, mut f: F) {
        for b in 0..self.bits {
            f(element ^ (1 << b));
        }
    }
}

/// A labeling of (a subset of) elements into disjoint clusters.
///
/// `labels[i]` is `None` for elements excluded from the partition. Cluster ids
/// are canonical: the smallest element index in the cluster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterPartition {
    labels: Vec<Option<usize>>,
    sizes: BTreeMap<usize, usize>,
    n_elements: usize,
}

impl ClusterPartition {
    /// Builds a partition from arbitrary per-element group keys, relabeling
    /// each group by its smallest member.
    pub fn from_groups<K: Ord + Copy>(groups: &[Option<K>]) -> Self {
        let mut first: BTreeMap<K, usize> = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            if let Some(k) = g {
                first.entry(*k).or_insert(i);
            }
        }
        let labels: Vec<Option<usize>> = groups.iter().map(|g| g.map(|k| first[&k])).collect();
        Self::from_canonical(labels)
    }

    fn from_canonical(labels: Vec<Option<usize>>) -> Self {
        let mut sizes = BTreeMap::new();
        let mut n_elements = 0;
        for l in labels.iter().flatten() {
            *sizes.entry(*l).or_insert(0) += 1;
            n_elements += 1;
        }
        Self {
            labels,
            sizes,
            n_elements,
        }
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, element: usize) -> Option<usize> {
        self.labels[element]
    }

    /// Cluster id → element count.
    pub fn cluster_sizes(&self) -> &BTreeMap<usize, usize> {
        &self.sizes
    }

    /// Number of elements covered by the partition.
    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn size_of(&self, cluster: usize) -> Option<usize> {
        self.sizes.get(&cluster).copied()
    }

    /// Largest cluster as `(id, size)`; ties go to the smaller id.
    pub fn largest(&self) -> Option<(usize, usize)> {
        self.sizes
            .iter()
            .fold(None, |best: Option<(usize, usize)>, (&id, &s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((id, s)),
            })
    }

    /// Cluster sizes sorted descending.
    pub fn sizes_descending(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.sizes.values().copied().collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }

    /// size → number of clusters of that size.
    pub fn size_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for &s in self.sizes.values() {
            *h.entry(s).or_insert(0) += 1;
        }
        h
    }

    /// Members of `cluster` in ascending order.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| (*l == Some(cluster)).then_some(i))
            .collect()
    }
}

/// Labels clusters of all elements: two elements share a label iff a path of
/// adjacent, `connected` pairs joins them.
pub fn label_clusters<A, C>(adjacency: &A, connected: C) -> ClusterPartition
where
    A: Adjacency,
    C: Fn(usize, usize) -> bool,
{
    label_clusters_where(adjacency, |_| true, connected)
}

/// Like [`label_clusters`], restricted to elements where `include` holds.
/// Excluded elements get no label and never join a cluster.
pub fn label_clusters_where<A, I, C>(adjacency: &A, include: I, connected: C) -> ClusterPartition
where
    A: Adjacency,
    I: Fn(usize) -> bool,
    C: Fn(usize, usize) -> bool,
{
    let n = adjacency.element_count();
    let mut uf = UnionFind::new(n);
    let included: Vec<bool> = (0..n).map(&include).collect();
    for i in 0..n {
        if !included[i] {
            continue;
        }
        adjacency.for_each_neighbor(i, |j| {
            if j > i && included[j] && connected(i, j) {
                uf.union(i, j);
            }
        });
    }
    // canonical label = smallest member; scanning in index order meets it first
    let mut root_label = vec![usize::MAX; n];
    let mut labels = vec![None; n];
    for i in 0..n {
        if !included[i] {
            continue;
        }
        let r = uf.find(i);
        if root_label[r] == usize::MAX {
            root_label[r] = i;
        }
        labels[i] = Some(root_label[r]);
    }
    ClusterPartition::from_canonical(labels)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, Dims};
    use crate::rng::RngStream;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn cube(l: usize, b: Boundary) -> Lattice3D<()> {
        Lattice3D::filled(Dims::cube(l).unwrap(), b, ())
    }

    fn check_invariants(p: &ClusterPartition) {
        assert_eq!(p.cluster_sizes().values().sum::<usize>(), p.n_elements());
        let seen: HashSet<usize> = p.labels().iter().flatten().copied().collect();
        let keys: HashSet<usize> = p.cluster_sizes().keys().copied().collect();
        assert_eq!(seen, keys);
    }

    #[test]
    fn fully_connected_is_one_cluster() {
        let p = label_clusters(&cube(2, Boundary::Open), |_, _| true);
        assert_eq!(p.n_clusters(), 1);
        assert_eq!(p.size_of(0), Some(8));
        check_invariants(&p);
    }

    #[test]
    fn no_edges_gives_singletons() {
        let lat = cube(3, Boundary::Periodic);
        let p = label_clusters(&lat, |_, _| false);
        assert_eq!(p.n_clusters(), 27);
        assert!(p.cluster_sizes().iter().all(|(id, &s)| s == 1 && p.label(*id) == Some(*id)));
    }

    #[test]
    fn union_find_sizes() {
        let mut uf = UnionFind::new(5);
        assert!(uf.union(0, 1));
        assert!(uf.union(3, 4));
        assert!(!uf.union(1, 0));
        assert!(uf.union(1, 4));
        assert_eq!(uf.set_size(3), 4);
        assert_eq!(uf.set_size(2), 1);
    }

    #[test]
    fn hypercube_fully_connected() {
        let h = Hypercube { bits: 5 };
        let p = label_clusters(&h, |_, _| true);
        assert_eq!(p.n_clusters(), 1);
        assert_eq!(p.n_elements(), 32);
    }

    #[test]
    fn masked_partition_excludes_elements() {
        let h = Hypercube { bits: 3 };
        // {0,1} adjacent, {6} isolated from them, 7 adjacent to 6
        let members = [0usize, 1, 6, 7];
        let p = label_clusters_where(&h, |i| members.contains(&i), |_, _| true);
        assert_eq!(p.n_elements(), 4);
        assert_eq!(p.label(2), None);
        assert_eq!(p.sizes_descending(), vec![2, 2]);
        check_invariants(&p);
    }

    #[test]
    fn random_bonds_match_flood_fill_8cubed() {
        let lat = cube(8, Boundary::Open);
        let mut rng = RngStream::new(11, 0);
        let n = lat.len();
        let open: HashSet<(usize, usize)> = {
            let mut s = HashSet::new();
            lat.for_each_bond(|a, b| {
                if rng.bernoulli(0.3) {
                    s.insert((a.min(b), a.max(b)));
                }
            });
            s
        };
        let conn = |a: usize, b: usize| open.contains(&(a.min(b), a.max(b)));
        let p = label_clusters(&lat, conn);
        let oracle = oracle::flood_fill(&lat, |_| true, conn);
        assert_eq!(p.labels(), &oracle[..]);
        assert_eq!(p.n_elements(), n);
        check_invariants(&p);
    }

    #[test]
    fn union_find_matches_flood_fill_on_1000_configurations() {
        for trial in 0..1000u64 {
            let mut rng = RngStream::new(2024, trial);
            let l = 2 + rng.below(15);
            let b = if rng.bernoulli(0.5) { Boundary::Open } else { Boundary::Periodic };
            let lat = cube(l, b);
            let p_bond = rng.uniform();
            // bond state hashed from the (unordered) pair so the predicate is symmetric
            let salt = rng.next_u64_raw();
            let conn = move |a: usize, c: usize| {
                let (lo, hi) = (a.min(c) as u64, a.max(c) as u64);
                let h = splitmix(salt ^ lo.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ hi);
                (h as f64 / u64::MAX as f64) < p_bond
            };
            let uf = label_clusters(&lat, conn);
            let ff = oracle::flood_fill(&lat, |_| true, conn);
            assert_eq!(uf.labels(), &ff[..], "trial {trial} L={l}");
        }
    }

    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    trait RawU64 {
        fn next_u64_raw(&mut self) -> u64;
    }

    impl RawU64 for RngStream {
        fn next_u64_raw(&mut self) -> u64 {
            rand::RngCore::next_u64(self)
        }
    }

    proptest! {
        #[test]
        fn labeling_is_idempotent(seed in any::<u64>(), l in 2usize..7, p in 0.0f64..1.0) {
            let lat = cube(l, Boundary::Periodic);
            let mut rng = RngStream::new(seed, 0);
            let mut open = HashSet::new();
            lat.for_each_bond(|a, b| if rng.bernoulli(p) { open.insert((a.min(b), a.max(b))); });
            let first = label_clusters(&lat, |a, b| open.contains(&(a.min(b), a.max(b))));
            let again = label_clusters(&lat, |a, b| first.label(a) == first.label(b));
            prop_assert_eq!(&first, &again);
            check_invariants(&first);
        }

        #[test]
        fn from_groups_canonicalizes(groups in proptest::collection::vec(proptest::option::of(0u8..5), 0..40)) {
            let p = ClusterPartition::from_groups(&groups);
            check_invariants(&p);
            for (i, l) in p.labels().iter().enumerate() {
                if let Some(l) = l {
                    prop_assert!(*l <= i);
                    prop_assert_eq!(groups[*l], groups[i]);
                }
            }
        }
    }
}
