//! Balanced spatial KD-tree over receiver codewords embedded in 2M real
//! dimensions, with exact nearest-neighbor search.
//!
//! Construction is a recursive median split cycling the dimensions
//! 0, 1, ..., 2M-1, 0, ...; search descends to a leaf, then backtracks,
//! pruning a far subtree whenever the query's distance to the splitting
//! hyperplane already exceeds the best distance found.

use crate::linalg::C64;

/// A receiver codeword embedded as interleaved (re, im) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPoint2M {
    coords: Vec<f64>,
    codeword_index: usize,
}

impl RealPoint2M {
    pub fn new(coords: Vec<f64>, codeword_index: usize) -> Self {
        assert!(!coords.is_empty() && coords.len() % 2 == 0);
        Self {
            coords,
            codeword_index,
        }
    }

    /// Embeds a complex M-vector as 2M interleaved reals.
    pub fn from_complex(v: &[C64], codeword_index: usize) -> Self {
        Self::new(embed_complex(v), codeword_index)
    }

    /// Exact inverse of [`from_complex`].
    ///
    /// [`from_complex`]: RealPoint2M::from_complex
    pub fn to_complex(&self) -> Vec<C64> {
        self.coords
            .chunks_exact(2)
            .map(|c| C64::new(c[0], c[1]))
            .collect()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn codeword_index(&self) -> usize {
        self.codeword_index
    }
}

/// Interleaved (re, im) embedding of a complex vector.
pub fn embed_complex(v: &[C64]) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Squared Euclidean distance over the embedded coordinates. Accumulation
/// order matches [`crate::linalg::dist_sq`] on the complex originals, so the
/// two detection paths compare bit-identical metrics.
#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    split_dim: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Balanced KD-tree codebook over K embedded receiver codewords.
#[derive(Debug, Clone)]
pub struct KdCodebook {
    nodes: Vec<Node>,
    points: Vec<RealPoint2M>,
    root: usize,
    depth: usize,
    duplicate_points: bool,
}

/// Builds the tree. Median of an even-sized set is the left-of-center
/// element (0-based index ceil(|W|/2) - 1); sort ties break on codeword
/// index, so construction is deterministic.
///
/// Duplicate points only set a warning flag: the tree stays valid and a
/// search returns either duplicate.
pub fn build_kdtree(points: Vec<RealPoint2M>) -> KdCodebook {
    assert!(!points.is_empty(), "KD-tree needs at least one point");
    let dims = points[0].coords.len();
    assert!(points.iter().all(|p| p.coords.len() == dims));

    // Lexicographic duplicate scan.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        for (x, y) in points[a].coords.iter().zip(&points[b].coords) {
            let c = x.total_cmp(y);
            if c != std::cmp::Ordering::Equal {
                return c;
            }
        }
        std::cmp::Ordering::Equal
    });
    let duplicate_points = order
        .windows(2)
        .any(|w| points[w[0]].coords == points[w[1]].coords);

    let mut builder = Builder {
        points: &points,
        nodes: Vec::with_capacity(points.len()),
        dims,
        depth: 0,
    };
    let mut indices: Vec<usize> = (0..points.len()).collect();
    let root = builder.build(&mut indices, 0, 1).expect("non-empty");
    let (nodes, depth) = (builder.nodes, builder.depth);
    KdCodebook {
        nodes,
        points,
        root,
        depth,
        duplicate_points,
    }
}

struct Builder<'a> {
    points: &'a [RealPoint2M],
    nodes: Vec<Node>,
    dims: usize,
    depth: usize,
}

impl Builder<'_> {
    fn build(&mut self, set: &mut [usize], split_dim: usize, level: usize) -> Option<usize> {
        if set.is_empty() {
            return None;
        }
        self.depth = self.depth.max(level);
        if set.len() == 1 {
            self.nodes.push(Node {
                point: set[0],
                split_dim,
                left: None,
                right: None,
            });
            return Some(self.nodes.len() - 1);
        }
        set.sort_by(|&a, &b| {
            self.points[a].coords[split_dim]
                .total_cmp(&self.points[b].coords[split_dim])
                .then(a.cmp(&b))
        });
        let median = (set.len() - 1) / 2;
        let point = set[median];
        let slot = self.nodes.len();
        self.nodes.push(Node {
            point,
            split_dim,
            left: None,
            right: None,
        });
        let next_dim = (split_dim + 1) % self.dims;
        let (front, back) = set.split_at_mut(median);
        let left = self.build(front, next_dim, level + 1);
        let right = self.build(&mut back[1..], next_dim, level + 1);
        self.nodes[slot].left = left;
        self.nodes[slot].right = right;
        Some(slot)
    }
}

struct Best {
    dist_sq: f64,
    codeword_index: usize,
}

impl KdCodebook {
    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Number of levels (a lone root is depth 1).
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn duplicate_points(&self) -> bool {
        self.duplicate_points
    }

    pub fn points(&self) -> &[RealPoint2M] {
        &self.points
    }

    /// Exact nearest neighbor: returns the codeword index and the Euclidean
    /// distance. Distance ties break toward the smaller codeword index.
    pub fn nns(&self, query: &[f64]) -> (usize, f64) {
        let (idx, d2, _) = self.nns_counted(query);
        (idx, d2.sqrt())
    }

    /// Number of nodes visited while answering `query` (instrumentation).
    pub fn visited_count(&self, query: &[f64]) -> usize {
        self.nns_counted(query).2
    }

    /// Nearest neighbor with the squared distance and the visit count.
    pub fn nns_counted(&self, query: &[f64]) -> (usize, f64, usize) {
        assert_eq!(query.len(), self.points[0].coords.len());
        let mut best = Best {
            dist_sq: f64::INFINITY,
            codeword_index: usize::MAX,
        };
        let mut visits = 0usize;
        self.search(self.root, query, &mut best, &mut visits);
        (best.codeword_index, best.dist_sq, visits)
    }

    fn search(&self, node_idx: usize, query: &[f64], best: &mut Best, visits: &mut usize) {
        let node = &self.nodes[node_idx];
        let point = &self.points[node.point];
        *visits += 1;
        let d2 = dist_sq(query, &point.coords);
        if d2 < best.dist_sq
            || (d2 == best.dist_sq && point.codeword_index < best.codeword_index)
        {
            best.dist_sq = d2;
            best.codeword_index = point.codeword_index;
        }
        let r = node.split_dim;
        let gap = query[r] - point.coords[r];
        let (near, far) = if gap < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.search(n, query, best, visits);
        }
        // Hyperplane prune: skip the far side only when it provably cannot
        // hold a closer point; on exact ties we still descend so the
        // smaller-index rule is honored.
        if let Some(f) = far {
            if gap * gap <= best.dist_sq {
                self.search(f, query, best, visits);
            }
        }
    }

    /// Preorder dump, one `depth,split_dim,codeword_index,coord0,...` line
    /// per node, for golden-file tests.
    pub fn dump_preorder_csv(&self) -> String {
        let mut out = String::new();
        self.dump_node(self.root, 1, &mut out);
        out
    }

    fn dump_node(&self, node_idx: usize, depth: usize, out: &mut String) {
        let node = &self.nodes[node_idx];
        let point = &self.points[node.point];
        out.push_str(&format!(
            "{depth},{},{}",
            node.split_dim, point.codeword_index
        ));
        for c in &point.coords {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        if let Some(l) = node.left {
            self.dump_node(l, depth + 1, out);
        }
        if let Some(r) = node.right {
            self.dump_node(r, depth + 1, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_points(k: usize, dims_half: usize, rng: &mut impl Rng) -> Vec<RealPoint2M> {
        (0..k)
            .map(|i| {
                RealPoint2M::new(
                    (0..2 * dims_half).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    i,
                )
            })
            .collect()
    }

    /// Brute-force oracle with the same tie rule (smaller index wins).
    fn brute_force(points: &[RealPoint2M], query: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for p in points {
            let d2 = dist_sq(query, p.coords());
            if d2 < best.1 || (d2 == best.1 && p.codeword_index() < best.0) {
                best = (p.codeword_index(), d2);
            }
        }
        best
    }

    #[test]
    fn complex_embedding_round_trips_exactly() {
        let v = vec![C64::new(0.1, -2.5), C64::new(f64::MIN_POSITIVE, 3.0)];
        let p = RealPoint2M::from_complex(&v, 7);
        assert_eq!(p.to_complex(), v);
        assert_eq!(p.coords(), &[0.1, -2.5, f64::MIN_POSITIVE, 3.0]);
    }

    #[test]
    fn single_point_tree_is_a_lone_root() {
        let tree = build_kdtree(vec![RealPoint2M::new(vec![1.0, 2.0], 0)]);
        assert_eq!(tree.size(), 1);
        assert_eq!(tree.depth(), 1);
        let (idx, dist) = tree.nns(&[0.0, 0.0]);
        assert_eq!(idx, 0);
        assert!((dist - 5.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn eight_point_tree_structure() {
        let mut rng = stream_rng(30, 0);
        let points = random_points(8, 1, &mut rng);
        let tree = build_kdtree(points);
        assert_eq!(tree.size(), 8);
        // 8 nodes force floor(log2 8) + 1 = 4 levels; splits cycle x then y.
        assert_eq!(tree.depth(), 4);
        let dump = tree.dump_preorder_csv();
        let rows: Vec<Vec<String>> = dump
            .lines()
            .map(|l| l.split(',').map(str::to_owned).collect())
            .collect();
        assert_eq!(rows.len(), 8);
        for row in &rows {
            let depth: usize = row[0].parse().unwrap();
            let split: usize = row[1].parse().unwrap();
            assert_eq!(split, (depth - 1) % 2, "level {depth} split {split}");
        }
        // Every codeword index appears exactly once.
        let mut seen: Vec<usize> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..8).collect::<Vec<_>>());
        // Left-of-center median: root keeps 3 points on the left, 4 right,
        // so in preorder the second depth-2 node sits at index 1 + 3.
        let depth2_positions: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r[0] == "2")
            .map(|(i, _)| i)
            .collect();
        assert_eq!(depth2_positions, vec![1, 4]);
    }

    #[test]
    fn balance_bound_holds_across_sizes() {
        let mut rng = stream_rng(31, 0);
        for k in [1usize, 2, 3, 5, 7, 8, 16, 33, 64, 100, 1024] {
            let tree = build_kdtree(random_points(k, 2, &mut rng));
            let bound = ((k + 1) as f64).log2().ceil() as usize;
            assert!(
                tree.depth() <= bound,
                "K={k}: depth {} > {bound}",
                tree.depth()
            );
            assert_eq!(tree.size(), k);
        }
    }

    #[test]
    fn ties_in_split_coordinate_keep_all_points() {
        // All x equal, distinct y: the x splits must still partition
        // deterministically by codeword index.
        let points: Vec<RealPoint2M> = (0..7)
            .map(|i| RealPoint2M::new(vec![1.5, i as f64], i))
            .collect();
        let tree = build_kdtree(points.clone());
        assert_eq!(tree.size(), 7);
        let mut seen: Vec<usize> = tree
            .dump_preorder_csv()
            .lines()
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
        // Construction-time order at the root (split on x, all equal) is by
        // codeword index: left subtree gets {0,1,2}, node 3, right {4,5,6}.
        verify_split_invariant(&tree, tree.root);
        for q in 0..7 {
            let (idx, _) = tree.nns(&[1.5, q as f64 + 0.1]);
            assert_eq!(idx, q);
        }
    }

    /// Checks the stored-order invariant at every split recursively.
    fn verify_split_invariant(tree: &KdCodebook, node_idx: usize) {
        let node = &tree.nodes[node_idx];
        let r = node.split_dim;
        let key = |p: &RealPoint2M| (p.coords()[r], p.codeword_index());
        let node_key = key(&tree.points[node.point]);
        let mut stack = Vec::new();
        if let Some(l) = node.left {
            stack.push((l, true));
        }
        if let Some(rc) = node.right {
            stack.push((rc, false));
        }
        while let Some((i, is_left)) = stack.pop() {
            let child = &tree.nodes[i];
            let child_key = key(&tree.points[child.point]);
            if is_left {
                assert!(child_key < node_key, "left child out of order");
            } else {
                assert!(child_key > node_key, "right child out of order");
            }
            if let Some(l) = child.left {
                stack.push((l, is_left));
            }
            if let Some(rc) = child.right {
                stack.push((rc, is_left));
            }
        }
        if let Some(l) = node.left {
            verify_split_invariant(tree, l);
        }
        if let Some(rc) = node.right {
            verify_split_invariant(tree, rc);
        }
    }

    #[test]
    fn stored_point_query_returns_itself() {
        let mut rng = stream_rng(32, 0);
        let points = random_points(64, 2, &mut rng);
        let tree = build_kdtree(points.clone());
        for p in &points {
            let (idx, dist) = tree.nns(p.coords());
            assert_eq!(idx, p.codeword_index());
            assert_eq!(dist, 0.0);
        }
    }

    #[test]
    fn nns_matches_brute_force_across_configs() {
        let mut rng = stream_rng(33, 0);
        for &k in &[2usize, 4, 8, 64, 1024] {
            for &m in &[1usize, 2, 3] {
                let points = random_points(k, m, &mut rng);
                let tree = build_kdtree(points.clone());
                for _ in 0..1000 {
                    let q: Vec<f64> =
                        (0..2 * m).map(|_| rng.random_range(-1.2..1.2)).collect();
                    let (bi, bd2) = brute_force(&points, &q);
                    let (ti, td2, _) = tree.nns_counted(&q);
                    assert_eq!(ti, bi, "K={k} M={m}");
                    assert_eq!(td2, bd2, "K={k} M={m}");
                }
            }
        }
    }

    #[test]
    fn duplicates_are_flagged_and_searchable() {
        let mut points = vec![
            RealPoint2M::new(vec![0.0, 0.0], 0),
            RealPoint2M::new(vec![0.0, 0.0], 1),
            RealPoint2M::new(vec![1.0, 1.0], 2),
        ];
        let tree = build_kdtree(points.clone());
        assert!(tree.duplicate_points());
        let (idx, dist) = tree.nns(&[0.01, 0.0]);
        assert!(idx == 0 || idx == 1);
        assert!(dist < 0.1);
        points.pop();
        assert!(build_kdtree(points).duplicate_points());
    }

    #[test]
    fn visits_stay_near_the_descent_path_for_close_queries() {
        let mut rng = stream_rng(34, 0);
        // Well-separated random points; query a hair away from one of them.
        let mut points: Vec<RealPoint2M> = Vec::new();
        while points.len() < 16 {
            let cand: Vec<f64> = (0..2).map(|_| rng.random_range(-10.0..10.0)).collect();
            if points
                .iter()
                .all(|p| dist_sq(p.coords(), &cand) > 2.0 * 2.0)
            {
                points.push(RealPoint2M::new(cand, points.len()));
            }
        }
        let tree = build_kdtree(points.clone());
        for p in &points {
            let mut q = p.coords().to_vec();
            q[0] += rng.random_range(-1e-6..1e-6);
            q[1] += rng.random_range(-1e-6..1e-6);
            let visits = tree.visited_count(&q);
            assert!(
                visits <= tree.depth() + 4,
                "visits {visits} for a near-exact query"
            );
        }
    }

    #[test]
    fn mean_visits_beat_four_log2_k() {
        let mut rng = stream_rng(35, 0);
        let k = 256;
        let points = random_points(k, 1, &mut rng);
        let tree = build_kdtree(points);
        let queries = 10_000;
        let total: usize = (0..queries)
            .map(|_| {
                let q: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                tree.visited_count(&q)
            })
            .sum();
        let mean = total as f64 / queries as f64;
        let bound = 4.0 * (k as f64).log2();
        assert!(mean <= bound, "mean visits {mean} > {bound}");
    }

    proptest! {
        #[test]
        fn prop_nns_equals_brute_force(
            seed in 0u64..500,
            k in 2usize..48,
            m in 1usize..4,
        ) {
            let mut rng = stream_rng(seed, 99);
            let points = random_points(k, m, &mut rng);
            let tree = build_kdtree(points.clone());
            for _ in 0..20 {
                let q: Vec<f64> = (0..2 * m).map(|_| rng.random_range(-1.5..1.5)).collect();
                let (bi, bd2) = brute_force(&points, &q);
                let (ti, td2, _) = tree.nns_counted(&q);
                prop_assert_eq!(ti, bi);
                prop_assert_eq!(td2, bd2);
            }
        }

        #[test]
        fn prop_embedding_round_trip(re0 in -10.0f64..10.0, im0 in -10.0f64..10.0,
                                     re1 in -10.0f64..10.0, im1 in -10.0f64..10.0) {
            let v = vec![C64::new(re0, im0), C64::new(re1, im1)];
            let p = RealPoint2M::from_complex(&v, 0);
            prop_assert_eq!(p.to_complex(), v);
        }
    }
}
