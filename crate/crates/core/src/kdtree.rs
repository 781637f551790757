use crate::geom::Vec3;

/// Static 3-d tree over a point set for exact nearest-neighbor queries.
///
/// The tree is implicit: each index range stores its splitting point at the
/// range midpoint, split on the axis of largest extent.
pub(crate) struct KdTree<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl<'a> KdTree<'a> {
    pub(crate) fn new(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build(points, &mut order, &mut axes);
        Self { points, order, axes }
    }

    /// Squared distance to the nearest point, or `None` for an empty tree.
    pub(crate) fn nearest_squared(&self, q: &Vec3) -> Option<f64> {
        self.nearest(q).map(|(_, d)| d)
    }

    /// Index and squared distance of the nearest point.
    pub(crate) fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.order.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.order.len(), &mut best);
        Some(best)
    }

    fn search(&self, q: &Vec3, lo: usize, hi: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.points[self.order[mid]];
        let d = (p - q).norm_squared();
        if d < best.1 {
            *best = (self.order[mid], d);
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        if diff * diff < best.1 {
            self.search(q, far.0, far.1, best);
        }
    }
}

fn build(points: &[Vec3], order: &mut [usize], axes: &mut [u8]) {
    if order.len() <= 1 {
        return;
    }
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let axis = (hi - lo).imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    axes[mid] = axis as u8;
    let (left, right) = order.split_at_mut(mid);
    let (left_axes, right_axes) = axes.split_at_mut(mid);
    build(points, left, left_axes);
    build(points, &mut right[1..], &mut right_axes[1..]);
}
