//! Convex-hull triangulation of speaker directions and VBAP gain solving.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::sh::{dot3, norm3};

const PLANE_EPS: f64 = 1e-10;

/// A triangulated set of directions for three-dimensional panning.
#[derive(Debug, Clone)]
pub struct Triangulation {
    points: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    inverses: Vec<Option<Matrix3<f64>>>,
    encloses_origin: bool,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[derive(Debug, Clone)]
struct Face {
    v: [usize; 3],
    normal: [f64; 3],
    offset: f64,
    alive: bool,
}

impl Face {
    fn new(v: [usize; 3], pts: &[[f64; 3]], interior: [f64; 3]) -> Self {
        let (a, b, c) = (pts[v[0]], pts[v[1]], pts[v[2]]);
        let mut n = cross(sub(b, a), sub(c, a));
        let len = norm3(n);
        n = [n[0] / len, n[1] / len, n[2] / len];
        let mut face = Face {
            v,
            normal: n,
            offset: dot3(n, a),
            alive: true,
        };
        if face.distance(interior) > 0.0 {
            face.v = [v[0], v[2], v[1]];
            face.normal = [-n[0], -n[1], -n[2]];
            face.offset = -face.offset;
        }
        face
    }

    fn distance(&self, p: [f64; 3]) -> f64 {
        dot3(self.normal, p) - self.offset
    }
}

/// Builds the convex hull of points on the unit sphere.
///
/// Points are inserted in index order; a point lying in the plane of an
/// existing face replaces that face, so co-circular groups are triangulated
/// deterministically by insertion order. Returns `None` when the points do
/// not span three dimensions.
pub fn convex_hull(points: &[[f64; 3]]) -> Option<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 4 {
        return None;
    }
    let p0 = 0;
    let p1 = (1..n).max_by(|&a, &b| {
        norm3(sub(points[a], points[p0]))
            .total_cmp(&norm3(sub(points[b], points[p0])))
            .then(b.cmp(&a))
    })?;
    let line = sub(points[p1], points[p0]);
    let p2 = (0..n).filter(|&i| i != p0 && i != p1).max_by(|&a, &b| {
        norm3(cross(line, sub(points[a], points[p0])))
            .total_cmp(&norm3(cross(line, sub(points[b], points[p0]))))
            .then(b.cmp(&a))
    })?;
    let mut nrm = cross(line, sub(points[p2], points[p0]));
    let nl = norm3(nrm);
    if nl < 1e-9 {
        return None;
    }
    nrm = [nrm[0] / nl, nrm[1] / nl, nrm[2] / nl];
    let p3 = (0..n).filter(|&i| i != p0 && i != p1 && i != p2).max_by(|&a, &b| {
        dot3(nrm, sub(points[a], points[p0]))
            .abs()
            .total_cmp(&dot3(nrm, sub(points[b], points[p0])).abs())
            .then(b.cmp(&a))
    })?;
    if dot3(nrm, sub(points[p3], points[p0])).abs() < 1e-9 {
        return None;
    }
    let seed = [p0, p1, p2, p3];
    let mut interior = [0.0; 3];
    for &i in &seed {
        for k in 0..3 {
            interior[k] += points[i][k] / 4.0;
        }
    }
    let mut faces = vec![
        Face::new([p0, p1, p2], points, interior),
        Face::new([p0, p1, p3], points, interior),
        Face::new([p0, p2, p3], points, interior),
        Face::new([p1, p2, p3], points, interior),
    ];
    for p in 0..n {
        if seed.contains(&p) {
            continue;
        }
        let visible: Vec<usize> = (0..faces.len())
            .filter(|&f| faces[f].alive && faces[f].distance(points[p]) > -PLANE_EPS)
            .collect();
        if visible.is_empty() {
            log::warn!("hull: point {p} is inside the hull and was skipped");
            continue;
        }
        let mut edges = Vec::new();
        for &f in &visible {
            let v = faces[f].v;
            edges.push((v[0], v[1]));
            edges.push((v[1], v[2]));
            edges.push((v[2], v[0]));
        }
        let horizon: Vec<(usize, usize)> = edges
            .iter()
            .copied()
            .filter(|&(a, b)| !edges.contains(&(b, a)))
            .collect();
        for &f in &visible {
            faces[f].alive = false;
        }
        for (a, b) in horizon {
            faces.push(Face::new([a, b, p], points, interior));
        }
    }
    Some(faces.into_iter().filter(|f| f.alive).map(|f| f.v).collect())
}

impl Triangulation {
    /// Triangulates the given directions; `None` if they are coplanar or
    /// fewer than four.
    pub fn new(points: Vec<[f64; 3]>) -> Option<Self> {
        let faces = convex_hull(&points)?;
        let mut inverses = Vec::with_capacity(faces.len());
        let mut encloses_origin = true;
        for f in &faces {
            let (a, b, c) = (points[f[0]], points[f[1]], points[f[2]]);
            let l = Matrix3::new(a[0], b[0], c[0], a[1], b[1], c[1], a[2], b[2], c[2]);
            let nrm = cross(sub(b, a), sub(c, a));
            let height = dot3(nrm, a) / norm3(nrm);
            if height < 1e-9 {
                encloses_origin = false;
            }
            if height.abs() < 1e-9 {
                // face plane passes through the origin
                inverses.push(None);
            } else {
                inverses.push(l.try_inverse());
            }
        }
        Some(Self {
            points,
            faces,
            inverses,
            encloses_origin,
        })
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Whether every direction falls inside some triangle's cone.
    pub fn encloses_origin(&self) -> bool {
        self.encloses_origin
    }

    /// Unit-power VBAP gains for direction `v`, one per point.
    ///
    /// Picks the triangle whose smallest gain is largest; negative gains
    /// (possible only when the hull does not enclose the origin) are
    /// clamped to zero.
    pub fn gains(&self, v: [f64; 3]) -> Vec<f64> {
        let target = Vector3::new(v[0], v[1], v[2]);
        let mut best: Option<(usize, Vector3<f64>, f64)> = None;
        for (i, inv) in self.inverses.iter().enumerate() {
            let Some(inv) = inv else { continue };
            let g = inv * target;
            let m = g.min();
            if best.as_ref().is_none_or(|(_, _, bm)| m > *bm + 1e-12) {
                best = Some((i, g, m));
            }
        }
        let (face, g, _) = best.expect("triangulation has faces");
        let mut out = vec![0.0; self.points.len()];
        for k in 0..3 {
            out[self.faces[face][k]] = g[k].max(0.0);
        }
        if out.iter().all(|&x| x == 0.0) {
            // outside every cone: snap to the nearest point
            let nearest = (0..self.points.len())
                .max_by(|&a, &b| dot3(self.points[a], v).total_cmp(&dot3(self.points[b], v)).then(b.cmp(&a)))
                .expect("triangulation has points");
            out[nearest] = 1.0;
        }
        normalize_power(&mut out);
        out
    }
}

fn normalize_power(g: &mut [f64]) {
    let p = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if p > 0.0 {
        for x in g.iter_mut() {
            *x /= p;
        }
    }
}

/// Pairwise panning over speakers projected onto a plane, for arrays whose
/// hull is degenerate.
#[derive(Debug, Clone)]
pub struct RingPanner {
    basis: [[f64; 3]; 2],
    order: Vec<usize>,
    angles: Vec<f64>,
    n_points: usize,
}

impl RingPanner {
    /// Pans within the plane spanned by `basis` (two orthonormal vectors).
    pub fn new(points: &[[f64; 3]], basis: [[f64; 3]; 2]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let angle = |p: [f64; 3]| dot3(p, basis[1]).atan2(dot3(p, basis[0]));
        order.sort_by(|&a, &b| angle(points[a]).total_cmp(&angle(points[b])).then(a.cmp(&b)));
        let angles = order.iter().map(|&i| angle(points[i])).collect();
        Self {
            basis,
            order,
            angles,
            n_points: points.len(),
        }
    }

    /// Horizontal-plane panner.
    pub fn horizontal(points: &[[f64; 3]]) -> Self {
        Self::new(points, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    }

    pub fn gains(&self, v: [f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_points];
        let x = dot3(v, self.basis[0]);
        let y = dot3(v, self.basis[1]);
        let n = self.order.len();
        if x.hypot(y) < 1e-12 || n == 1 {
            // on the plane normal: spread equally
            for &i in &self.order {
                out[i] = 1.0;
            }
            normalize_power(&mut out);
            return out;
        }
        let t = Vector2::new(x, y);
        let mut best: Option<(usize, Vector2<f64>, f64)> = None;
        for k in 0..n {
            let (a, b) = (self.angles[k], self.angles[(k + 1) % n]);
            let l = Matrix2::new(a.cos(), b.cos(), a.sin(), b.sin());
            if let Some(inv) = l.try_inverse() {
                let g = inv * t;
                let m = g.min();
                if best.as_ref().is_none_or(|(_, _, bm)| m > *bm + 1e-12) {
                    best = Some((k, g, m));
                }
            }
        }
        match best {
            Some((k, g, _)) => {
                out[self.order[k]] += g[0].max(0.0);
                out[self.order[(k + 1) % n]] += g[1].max(0.0);
            }
            None => {
                // two antipodal speakers: pick the nearer one
                let nearest = (0..n)
                    .max_by(|&a, &b| {
                        let da = self.angles[a].cos() * x + self.angles[a].sin() * y;
                        let db = self.angles[b].cos() * x + self.angles[b].sin() * y;
                        da.total_cmp(&db)
                    })
                    .unwrap();
                out[self.order[nearest]] = 1.0;
            }
        }
        normalize_power(&mut out);
        out
    }
}
