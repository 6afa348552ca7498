//! Bounding-volume hierarchy over mesh triangles.

use glam::DVec3;

use super::distance::closest_point_on_triangle;
use super::TriangleMesh;

const LEAF_SIZE: usize = 4;
/// Relative slack on box lower bounds so rounding never prunes a tie.
const PRUNE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: DVec3,
    hi: DVec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: DVec3::splat(f64::INFINITY),
            hi: DVec3::splat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: DVec3) {
        self.lo = self.lo.min(p);
        self.hi = self.hi.max(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.lo = self.lo.min(o.lo);
        self.hi = self.hi.max(o.hi);
    }

    fn distance(&self, p: DVec3) -> f64 {
        (p - p.clamp(self.lo, self.hi)).length()
    }

    /// Parametric entry/exit of the line `o + t d` (t unrestricted).
    fn slab(&self, o: DVec3, inv_d: DVec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if inv_d[a].is_infinite() {
                if o[a] < self.lo[a] || o[a] > self.hi[a] {
                    return None;
                }
                continue;
            }
            let ta = (self.lo[a] - o[a]) * inv_d[a];
            let tb = (self.hi[a] - o[a]) * inv_d[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        bounds: Aabb,
        start: usize,
        end: usize,
    },
    Inner {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Result of a nearest-triangle query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub distance: f64,
    pub face: usize,
    pub point: DVec3,
}

/// Accelerated nearest-face and ray queries. Answers are identical to an
/// exhaustive scan, with ties broken by the lowest face index.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    triangles: Vec<[DVec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let triangles: Vec<[DVec3; 3]> = mesh.triangles().collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let centroids: Vec<DVec3> = triangles
            .iter()
            .map(|t| (t[0] + t[1] + t[2]) / 3.0)
            .collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            let n = order.len();
            build_node(&triangles, &centroids, &mut order, 0, n, &mut nodes);
        }
        SpatialIndex {
            triangles,
            order,
            nodes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle(&self, face: usize) -> [DVec3; 3] {
        self.triangles[face]
    }

    /// Closest face to `p`, or `None` for an empty mesh.
    pub fn nearest(&self, p: DVec3) -> Option<Nearest> {
        self.nearest_within(p, f64::INFINITY)
    }

    /// Closest face no farther than `max_distance`.
    pub fn nearest_within(&self, p: DVec3, max_distance: f64) -> Option<Nearest> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<Nearest> = None;
        let mut bound = max_distance;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().distance(p) > bound * (1.0 + PRUNE_SLACK) {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &face in &self.order[start..end] {
                        let [a, b, c] = self.triangles[face];
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d = (p - q).length();
                        if d > max_distance {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some(b) => d < b.distance || (d == b.distance && face < b.face),
                        };
                        if better {
                            best = Some(Nearest {
                                distance: d,
                                face,
                                point: q,
                            });
                            bound = d;
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().distance(p);
                    let dr = self.nodes[right].bounds().distance(p);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }

    pub fn distance(&self, p: DVec3) -> Option<f64> {
        self.nearest(p).map(|n| n.distance)
    }

    /// Exhaustive reference scan with the same tie-breaking rule.
    pub fn nearest_exhaustive(&self, p: DVec3) -> Option<Nearest> {
        let mut best: Option<Nearest> = None;
        for (face, &[a, b, c]) in self.triangles.iter().enumerate() {
            let q = closest_point_on_triangle(p, a, b, c);
            let d = (p - q).length();
            if best.map_or(true, |b| d < b.distance) {
                best = Some(Nearest {
                    distance: d,
                    face,
                    point: q,
                });
            }
        }
        best
    }

    /// Parameters `t` at which the line `origin + t * dir` crosses a triangle.
    /// Unsorted.
    pub fn line_hits(&self, origin: DVec3, dir: DVec3) -> Vec<f64> {
        let mut hits = Vec::new();
        if self.nodes.is_empty() {
            return hits;
        }
        let inv = DVec3::ONE / dir;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().slab(origin, inv).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &face in &self.order[start..end] {
                        if let Some(t) = line_triangle(origin, dir, self.triangles[face]) {
                            hits.push(t);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        hits
    }
}

/// Möller–Trumbore intersection of an infinite line with a triangle.
fn line_triangle(o: DVec3, d: DVec3, [a, b, c]: [DVec3; 3]) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pv = d.cross(e2);
    let det = e1.dot(pv);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = o - a;
    let u = tv.dot(pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qv = tv.cross(e1);
    let v = d.dot(qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(qv) * inv)
}

fn build_node(
    tris: &[[DVec3; 3]],
    centroids: &[DVec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &f in &order[start..end] {
        for v in tris[f] {
            bounds.grow(v);
        }
        cbounds.grow(centroids[f]);
    }
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return id;
    }
    let ext = cbounds.hi - cbounds.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].sort_by(|&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build_node(tris, centroids, order, start, mid, nodes);
    let right = build_node(tris, centroids, order, mid, end, nodes);
    let mut merged = *nodes[left].bounds();
    merged.merge(nodes[right].bounds());
    nodes[id] = Node::Inner {
        bounds: merged,
        left,
        right,
    };
    id
}
