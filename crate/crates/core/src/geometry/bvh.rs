//! Bounding-volume hierarchy over triangles for exact distance and ray queries.

use super::{closest_point_on_triangle, ray_triangle, Aabb, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TriangleBvh {
    triangles: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Result of a closest-point query.
#[derive(Clone, Copy, Debug)]
pub struct Closest {
    pub triangle: usize,
    pub point: Vec3,
    pub distance_squared: f64,
}

impl TriangleBvh {
    pub fn new(triangles: Vec<[Vec3; 3]>) -> Self {
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let centroids: Vec<Vec3> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            build(&triangles, &centroids, &mut order, 0, triangles.len(), &mut nodes);
        }
        Self { triangles, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> &[Vec3; 3] {
        &self.triangles[i]
    }

    /// Exact closest point on any triangle; `None` for an empty hierarchy.
    pub fn closest(&self, p: &Vec3) -> Option<Closest> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = Closest {
            triangle: usize::MAX,
            point: *p,
            distance_squared: f64::INFINITY,
        };
        let mut stack = vec![(0usize, self.nodes[0].bounds().distance_squared(p))];
        while let Some((idx, lower)) = stack.pop() {
            if lower >= best.distance_squared {
                continue;
            }
            match &self.nodes[idx] {
                Node::Leaf { start, count, .. } => {
                    for &tri in &self.order[*start..*start + *count] {
                        let [a, b, c] = &self.triangles[tri];
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d = (p - q).norm_squared();
                        if d < best.distance_squared || (d == best.distance_squared && tri < best.triangle) {
                            best = Closest {
                                triangle: tri,
                                point: q,
                                distance_squared: d,
                            };
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().distance_squared(p);
                    let dr = self.nodes[*right].bounds().distance_squared(p);
                    // push the farther child first so the nearer one is popped next
                    if dl <= dr {
                        stack.push((*right, dr));
                        stack.push((*left, dl));
                    } else {
                        stack.push((*left, dl));
                        stack.push((*right, dr));
                    }
                }
            }
        }
        Some(best)
    }

    pub fn distance(&self, p: &Vec3) -> Option<f64> {
        self.closest(p).map(|c| c.distance_squared.sqrt())
    }

    /// Number of distinct surface crossings along the ray beyond `t_min`.
    ///
    /// Hits closer than `1e-9` in ray parameter are merged so a ray through a
    /// shared edge counts once.
    pub fn count_crossings(&self, origin: &Vec3, dir: &Vec3, t_min: f64) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut hits = Vec::new();
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if !node.bounds().hit_by_ray(origin, &inv) {
                continue;
            }
            match node {
                Node::Leaf { start, count, .. } => {
                    for &tri in &self.order[*start..*start + *count] {
                        let [a, b, c] = &self.triangles[tri];
                        if let Some(t) = ray_triangle(origin, dir, a, b, c) {
                            if t > t_min {
                                hits.push(t);
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        hits.sort_by(f64::total_cmp);
        hits.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        hits.len()
    }
}

fn build(
    triangles: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    for &i in &order[start..end] {
        for v in &triangles[i] {
            bounds.grow(v);
        }
    }
    let count = end - start;
    let me = nodes.len();
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, count });
        return me;
    }
    let cb = Aabb::from_points(order[start..end].iter().map(|&i| &centroids[i]));
    let axis = cb.extent().imax();
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
        centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { bounds, start, count });
    let left = build(triangles, centroids, order, start, mid, nodes);
    let right = build(triangles, centroids, order, mid, end, nodes);
    nodes[me] = Node::Inner { bounds, left, right };
    me
}
