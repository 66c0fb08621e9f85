//! Polyhedral upper sets, ordering cones, and conversions between their
//! halfspace and generator descriptions.

pub(crate) mod dd;
pub(crate) mod linalg;
pub(crate) mod json;

use crate::error::{Error, Result};
use dd::cone_generators;
use linalg::{dot, norm2, norm_inf, rank, scale};

pub use json::{format_number, parse_polyhedron, polyhedron_to_json};

const GEN_TOL: f64 = 1e-9;

/// A halfspace `normal^T y >= offset` with unit-length normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    /// Normalises `normal` to unit length.
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let n = norm2(&normal);
        if n == 0.0 || !n.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidParameters("degenerate halfspace".into()));
        }
        Ok(Halfspace {
            normal: scale(&normal, 1.0 / n),
            offset: offset / n,
        })
    }

    pub fn slack(&self, y: &[f64]) -> f64 {
        dot(&self.normal, y) - self.offset
    }
}

pub(crate) fn max_normalize(v: &[f64]) -> Vec<f64> {
    let n = norm_inf(v);
    scale(v, 1.0 / n)
}

/// A closed convex polyhedral cone `C` with nonempty interior, stored by
/// its generators (lines as opposite pairs) and the generators of its dual
/// cone `C+ = {w : w^T c >= 0 for all c in C}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCone {
    generators: Vec<Vec<f64>>,
    dual_generators: Vec<Vec<f64>>,
}

impl OrderingCone {
    /// The nonnegative orthant of `R^q`.
    pub fn orthant(q: usize) -> Self {
        let e: Vec<Vec<f64>> = (0..q)
            .map(|i| {
                let mut v = vec![0.0; q];
                v[i] = 1.0;
                v
            })
            .collect();
        OrderingCone {
            generators: e.clone(),
            dual_generators: e,
        }
    }

    /// Cone generated by `gens`; redundant generators are dropped.
    pub fn from_generators(gens: &[Vec<f64>]) -> Result<Self> {
        let q = dim_of(gens)?;
        let dual = cone_generators(gens, q, None)?;
        if !dual.lines.is_empty() {
            return Err(Error::InvalidParameters(
                "ordering cone has empty interior".into(),
            ));
        }
        if dual.rays.is_empty() {
            return Err(Error::InvalidParameters(
                "ordering cone is the whole space".into(),
            ));
        }
        Self::from_dual_generators(&dual.rays)
    }

    /// Cone `{y : w^T y >= 0 for all w in duals}`.
    pub fn from_dual_generators(duals: &[Vec<f64>]) -> Result<Self> {
        let q = dim_of(duals)?;
        let primal = cone_generators(duals, q, None)?;
        let mut generators: Vec<Vec<f64>> = primal.rays.iter().map(|r| max_normalize(r)).collect();
        for l in &primal.lines {
            let l = max_normalize(l);
            generators.push(scale(&l, -1.0));
            generators.push(l);
        }
        let rows = generators.clone();
        let dual = cone_generators(&rows, q, None)?;
        if !dual.lines.is_empty() {
            return Err(Error::InvalidParameters(
                "ordering cone has empty interior".into(),
            ));
        }
        if dual.rays.is_empty() {
            return Err(Error::InvalidParameters(
                "ordering cone is the whole space".into(),
            ));
        }
        Ok(OrderingCone {
            generators,
            dual_generators: dual.rays,
        })
    }

    pub fn dim(&self) -> usize {
        self.dual_generators[0].len()
    }

    /// Generators, each with unit max-norm; lines appear as opposite pairs.
    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    /// Generators of the dual cone, each with unit Euclidean norm.
    pub fn dual_generators(&self) -> &[Vec<f64>] {
        &self.dual_generators
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.dual_generators.iter().all(|w| dot(w, y) >= -tol)
    }

    /// Sum of the generators scaled to unit max-norm; an interior point.
    pub fn interior_direction(&self) -> Vec<f64> {
        let q = self.dim();
        let mut s = vec![0.0; q];
        for g in &self.generators {
            for i in 0..q {
                s[i] += g[i];
            }
        }
        if self.dual_generators.iter().all(|w| dot(w, &s) > 1e-12) {
            return max_normalize(&s);
        }
        let mut s = vec![0.0; q];
        for w in &self.dual_generators {
            for i in 0..q {
                s[i] += w[i];
            }
        }
        max_normalize(&s)
    }

    /// True when both cones contain each other's generators.
    pub fn same_as(&self, other: &OrderingCone, tol: f64) -> bool {
        self.dim() == other.dim()
            && other.generators.iter().all(|g| self.contains(g, tol))
            && self.generators.iter().all(|g| other.contains(g, tol))
    }

    pub fn lineality(&self) -> Vec<Vec<f64>> {
        let mut lines = Vec::new();
        for g in &self.generators {
            if self.dual_generators.iter().all(|w| dot(w, g).abs() <= 1e-10) {
                lines.push(g.clone());
            }
        }
        lines
    }
}

fn dim_of(v: &[Vec<f64>]) -> Result<usize> {
    let q = v
        .first()
        .map(|g| g.len())
        .ok_or_else(|| Error::InvalidParameters("empty generator list".into()))?;
    if q == 0 || v.iter().any(|g| g.len() != q) {
        return Err(Error::DimensionMismatch("generator lengths differ".into()));
    }
    if v.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameters("non-finite generator".into()));
    }
    Ok(q)
}

/// A polyhedral upper set `P = P + C` in `R^q` with both descriptions.
///
/// `halfspaces` is irredundant, `vertices` are the extreme points (for sets
/// with lines: of the section orthogonal to the lines), and `directions`
/// are the extreme recession directions with lines as opposite pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    halfspaces: Vec<Halfspace>,
    vertices: Vec<Vec<f64>>,
    directions: Vec<Vec<f64>>,
    cone: OrderingCone,
}

impl Polyhedron {
    pub fn dim(&self) -> usize {
        self.cone.dim()
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn cone(&self) -> &OrderingCone {
        &self.cone
    }

    /// `{y : y >= p}` with respect to `cone`.
    pub fn shifted_cone(p: &[f64], cone: &OrderingCone) -> Result<Self> {
        Polyhedron::from_generators(&[p.to_vec()], &[], cone)
    }

    /// Builds the set from halfspaces by vertex enumeration.
    pub fn from_halfspaces(halfspaces: Vec<Halfspace>, cone: &OrderingCone) -> Result<Self> {
        vertex_enum(halfspaces, cone)
    }

    /// `conv(vertices) + cone(directions) + cone`.
    pub fn from_generators(
        vertices: &[Vec<f64>],
        directions: &[Vec<f64>],
        cone: &OrderingCone,
    ) -> Result<Self> {
        let q = cone.dim();
        if vertices.is_empty() {
            return Err(Error::InvalidParameters("no points given".into()));
        }
        if vertices.iter().chain(directions).any(|v| v.len() != q) {
            return Err(Error::DimensionMismatch("generator length".into()));
        }
        // Valid inequalities (a, beta) form the cone
        // { a^T v - beta >= 0, a^T d >= 0 }.
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for v in vertices {
            let mut r = v.clone();
            r.push(-1.0);
            rows.push(r);
        }
        for d in directions.iter().chain(cone.generators()) {
            let mut r = d.clone();
            r.push(0.0);
            rows.push(r);
        }
        let gens = cone_generators(&rows, q + 1, None)?;
        if !gens.lines.is_empty() {
            return Err(Error::MalformedUpperSet("set is not full-dimensional".into()));
        }
        let mut hs = Vec::new();
        for r in &gens.rays {
            let a = &r[..q];
            let n = norm2(a);
            if n <= 1e-12 {
                continue;
            }
            hs.push(Halfspace::new(a.to_vec(), r[q])?);
        }
        vertex_enum(hs, cone)
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.slack(y) >= -tol)
    }

    /// Largest violation of any halfspace at `y` (zero when inside).
    pub fn violation(&self, y: &[f64]) -> f64 {
        self.halfspaces
            .iter()
            .fold(0.0f64, |m, h| m.max(-h.slack(y)))
    }

    pub fn recedes_along(&self, d: &[f64], tol: f64) -> bool {
        self.halfspaces.iter().all(|h| dot(&h.normal, d) >= -tol)
    }

    /// `min w^T y` over the set, `None` if unbounded below.
    pub fn support(&self, w: &[f64]) -> Option<f64> {
        if self
            .directions
            .iter()
            .any(|d| dot(w, d) < -1e-12 * norm2(w).max(1.0))
        {
            return None;
        }
        self.vertices
            .iter()
            .map(|v| dot(w, v))
            .min_by(|a, b| a.total_cmp(b))
    }

    /// The set translated by `s`.
    pub fn translate(&self, s: &[f64]) -> Polyhedron {
        Polyhedron {
            halfspaces: self
                .halfspaces
                .iter()
                .map(|h| Halfspace {
                    normal: h.normal.clone(),
                    offset: h.offset + dot(&h.normal, s),
                })
                .collect(),
            vertices: self
                .vertices
                .iter()
                .map(|v| v.iter().zip(s).map(|(a, b)| a + b).collect())
                .collect(),
            directions: self.directions.clone(),
            cone: self.cone.clone(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        halfspaces: Vec<Halfspace>,
        vertices: Vec<Vec<f64>>,
        directions: Vec<Vec<f64>>,
        cone: OrderingCone,
    ) -> Polyhedron {
        Polyhedron {
            halfspaces,
            vertices,
            directions,
            cone,
        }
    }
}

/// Vertex enumeration of `{y : a_i^T y >= b_i}` for an upper set with
/// respect to `cone`. Redundant halfspaces are removed.
pub fn vertex_enum(halfspaces: Vec<Halfspace>, cone: &OrderingCone) -> Result<Polyhedron> {
    let q = cone.dim();
    if halfspaces.iter().any(|h| h.normal.len() != q) {
        return Err(Error::DimensionMismatch("halfspace normal length".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(halfspaces.len() + 1);
    let mut t = vec![0.0; q + 1];
    t[q] = 1.0;
    rows.push(t);
    for h in &halfspaces {
        let mut r = h.normal.clone();
        r.push(-h.offset);
        rows.push(r);
    }
    let gens = cone_generators(&rows, q + 1, Some(q))?;
    let mut vertices = Vec::new();
    let mut directions = Vec::new();
    for r in &gens.rays {
        if r[q] == 1.0 {
            vertices.push(r[..q].to_vec());
        } else {
            directions.push(max_normalize(&r[..q]));
        }
    }
    if vertices.is_empty() {
        return Err(Error::Infeasible("empty polyhedron".into()));
    }
    for l in &gens.lines {
        let l = max_normalize(&l[..q]);
        if !(cone.contains(&l, GEN_TOL) && cone.contains(&scale(&l, -1.0), GEN_TOL)) {
            return Err(Error::MalformedUpperSet(
                "set contains a line outside the ordering cone".into(),
            ));
        }
        directions.push(scale(&l, -1.0));
        directions.push(l);
    }
    for d in &directions {
        if !cone.contains(d, 1e-7) {
            return Err(Error::MalformedUpperSet(
                "set is unbounded along a direction outside the ordering cone".into(),
            ));
        }
    }
    for g in cone.generators() {
        if halfspaces.iter().any(|h| dot(&h.normal, g) < -1e-7) {
            return Err(Error::MalformedUpperSet(
                "set does not recede along the ordering cone".into(),
            ));
        }
    }
    let kept = irredundant(halfspaces, &vertices, &directions, q);
    vertices.sort_by(|a, b| lex_cmp(a, b));
    Ok(Polyhedron {
        halfspaces: kept,
        vertices,
        directions,
        cone: cone.clone(),
    })
}

/// Keeps the facet-defining, pairwise distinct halfspaces of a set with
/// the given generators.
pub(crate) fn irredundant(
    halfspaces: Vec<Halfspace>,
    vertices: &[Vec<f64>],
    directions: &[Vec<f64>],
    q: usize,
) -> Vec<Halfspace> {
    let mut homog: Vec<Vec<f64>> = Vec::new();
    for v in vertices {
        let mut r = v.clone();
        r.push(1.0);
        homog.push(r);
    }
    for d in directions {
        let mut r = d.clone();
        r.push(0.0);
        homog.push(r);
    }
    let mut kept: Vec<Halfspace> = Vec::new();
    for h in halfspaces {
        let tight: Vec<Vec<f64>> = homog
            .iter()
            .filter(|g| {
                let s = dot(&h.normal, &g[..q]) - h.offset * g[q];
                let mag = 1.0 + norm_inf(&g[..q]) + h.offset.abs() * g[q];
                s.abs() <= 1e-9 * mag
            })
            .cloned()
            .collect();
        if rank(&tight, q + 1) < q {
            continue;
        }
        let dup = kept.iter().any(|k| {
            linalg::sub(&k.normal, &h.normal).iter().all(|x| x.abs() < 1e-9)
                && (k.offset - h.offset).abs() < 1e-9 * (1.0 + h.offset.abs())
        });
        if !dup {
            kept.push(h);
        }
    }
    kept
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// `P + Q`.
pub fn minkowski_sum(p: &Polyhedron, q: &Polyhedron) -> Result<Polyhedron> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch("minkowski sum operands".into()));
    }
    let cone = if p.cone.same_as(&q.cone, 1e-12) {
        p.cone.clone()
    } else {
        let mut g = p.cone.generators().to_vec();
        g.extend_from_slice(q.cone.generators());
        OrderingCone::from_generators(&g)?
    };
    let mut verts = Vec::with_capacity(p.vertices.len() * q.vertices.len());
    for a in &p.vertices {
        for b in &q.vertices {
            verts.push(linalg::add(a, b));
        }
    }
    let mut dirs = p.directions.clone();
    dirs.extend_from_slice(&q.directions);
    Polyhedron::from_generators(&verts, &dirs, &cone)
}

/// `x in P` up to `tol`.
pub fn contains(p: &Polyhedron, x: &[f64], tol: f64) -> bool {
    p.contains(x, tol)
}

/// `Q subset of P` up to `tol`: every vertex of `Q` lies in `P` and every
/// direction of `Q` is a recession direction of `P`.
pub fn includes(p: &Polyhedron, q: &Polyhedron, tol: f64) -> bool {
    includes_shifted(p, q, None, tol)
}

/// `Q + s subset of P` up to `tol`.
pub fn includes_shifted(p: &Polyhedron, q: &Polyhedron, s: Option<&[f64]>, tol: f64) -> bool {
    let vert_ok = q.vertices.iter().all(|v| match s {
        Some(s) => p.contains(&linalg::add(v, s), tol),
        None => p.contains(v, tol),
    });
    vert_ok && q.directions.iter().all(|d| p.recedes_along(d, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{self, Constraint, LinearProgram, Relation};

    fn hs(a: &[f64], b: f64) -> Halfspace {
        Halfspace::new(a.to_vec(), b).unwrap()
    }

    #[test]
    fn triangle_corner_vertex_enum() {
        let c = OrderingCone::orthant(2);
        let p = vertex_enum(
            vec![hs(&[1.0, 0.0], 0.0), hs(&[0.0, 1.0], 0.0), hs(&[1.0, 1.0], 1.0)],
            &c,
        )
        .unwrap();
        assert_eq!(p.vertices().len(), 2);
        assert!((p.vertices()[0][0]).abs() < 1e-12 && (p.vertices()[0][1] - 1.0).abs() < 1e-12);
        assert!((p.vertices()[1][0] - 1.0).abs() < 1e-12 && p.vertices()[1][1].abs() < 1e-12);
        assert_eq!(p.directions().len(), 2);
        assert_eq!(p.halfspaces().len(), 3);
    }

    #[test]
    fn redundant_halfspace_dropped() {
        let c = OrderingCone::orthant(2);
        let p = vertex_enum(
            vec![
                hs(&[1.0, 0.0], 0.0),
                hs(&[0.0, 1.0], 0.0),
                hs(&[1.0, 1.0], -1.0),
            ],
            &c,
        )
        .unwrap();
        assert_eq!(p.halfspaces().len(), 2);
        assert_eq!(p.vertices().len(), 1);
    }

    #[test]
    fn contains_example() {
        let c = OrderingCone::orthant(2);
        let p = Polyhedron::shifted_cone(&[0.0, 0.0], &c).unwrap();
        assert!(p.contains(&[0.0, 1e-10], 1e-9));
        assert!(!p.contains(&[-1e-6, 0.0], 1e-9));
    }

    #[test]
    fn includes_examples() {
        let c = OrderingCone::orthant(2);
        let p = Polyhedron::shifted_cone(&[0.0, 0.0], &c).unwrap();
        let q = Polyhedron::shifted_cone(&[1.0, 1.0], &c).unwrap();
        assert!(includes(&p, &q, 1e-9));
        assert!(!includes(&q, &p, 1e-9));
    }

    fn lp_redundant(points: &[Vec<f64>], k: usize, dirs: &[Vec<f64>]) -> bool {
        // Is points[k] in conv(others) + cone(dirs)?
        let others: Vec<&Vec<f64>> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, p)| p)
            .collect();
        let n = others.len() + dirs.len();
        let mut lp = LinearProgram::new(n).nonnegative();
        let q = points[k].len();
        for i in 0..q {
            let mut row: Vec<f64> = others.iter().map(|p| p[i]).collect();
            row.extend(dirs.iter().map(|d| d[i]));
            lp.add(Constraint::dense(&row, Relation::Le, points[k][i]));
        }
        let mut row = vec![1.0; others.len()];
        row.extend(vec![0.0; dirs.len()]);
        lp.add(Constraint::dense(&row, Relation::Eq, 1.0));
        lp::solve(&lp).is_optimal()
    }

    #[test]
    fn minkowski_sum_matches_pairwise_oracle() {
        let c = OrderingCone::orthant(2);
        let p = Polyhedron::from_generators(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[], &c).unwrap();
        let q = Polyhedron::from_generators(&[vec![0.0, 2.0], vec![2.0, 0.0]], &[], &c).unwrap();
        let s = minkowski_sum(&p, &q).unwrap();
        let mut sums = Vec::new();
        for a in p.vertices() {
            for b in q.vertices() {
                sums.push(linalg::add(a, b));
            }
        }
        let dirs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let oracle: Vec<Vec<f64>> = (0..sums.len())
            .filter(|&k| !lp_redundant(&sums, k, &dirs))
            .map(|k| sums[k].clone())
            .collect();
        assert_eq!(s.vertices().len(), oracle.len());
        for v in &oracle {
            assert!(s.vertices().iter().any(|w| linalg::sub(v, w).iter().all(|x| x.abs() < 1e-9)));
        }
        assert_eq!(oracle.len(), 2);

        // Segment plus orthant: the corner at the origin is the only vertex.
        let seg = Polyhedron::from_generators(&[vec![0.0, 0.0], vec![2.0, 0.0]], &[], &c).unwrap();
        let orth = Polyhedron::shifted_cone(&[0.0, 0.0], &c).unwrap();
        let s = minkowski_sum(&seg, &orth).unwrap();
        assert_eq!(s.vertices().len(), 1);
        assert!(norm_inf(&s.vertices()[0]) < 1e-12);
    }

    #[test]
    fn halfspace_upper_set_with_line_cone() {
        let cone =
            OrderingCone::from_generators(&[vec![100.0, -1.0], vec![-100.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]])
                .unwrap();
        assert_eq!(cone.dual_generators().len(), 1);
        let p = Polyhedron::shifted_cone(&[5.0, 0.0], &cone).unwrap();
        assert_eq!(p.halfspaces().len(), 1);
        assert!(p.contains(&[-95.0, 1.0], 1e-9));
        assert!(!p.contains(&[-95.1, 1.0], 1e-9));
        let q = Polyhedron::shifted_cone(&[6.0, 0.0], &cone).unwrap();
        assert!(includes(&p, &q, 1e-9));
        assert!(!includes(&q, &p, 1e-9));
    }

    #[test]
    fn malformed_set_rejected() {
        let c = OrderingCone::orthant(2);
        let r = vertex_enum(vec![hs(&[1.0, 1.0], 1.0)], &c);
        assert!(matches!(r, Err(Error::MalformedUpperSet(_))));
    }

    #[test]
    fn solvency_cone_duals() {
        let cone = OrderingCone::from_generators(&[
            vec![130.0, -1.0],
            vec![-70.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(cone.generators().len(), 2);
        assert_eq!(cone.dual_generators().len(), 2);
        for w in cone.dual_generators() {
            assert!(dot(w, &[130.0, -1.0]) >= -1e-12);
            assert!(dot(w, &[-70.0, 1.0]) >= -1e-12);
        }
        let m = cone.interior_direction();
        assert!(cone.dual_generators().iter().all(|w| dot(w, &m) > 0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn points(q: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
            proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, q), 1..8)
        }

        proptest! {
            #[test]
            fn generators_round_trip(pts in (2usize..4).prop_flat_map(points)) {
                let c = OrderingCone::orthant(pts[0].len());
                let p = Polyhedron::from_generators(&pts, &[], &c).unwrap();
                for x in &pts {
                    prop_assert!(p.contains(x, 1e-9));
                }
                for v in p.vertices() {
                    prop_assert!(pts.iter().any(|x| linalg::norm_inf(&linalg::sub(x, v)) < 1e-9));
                }
                let h = vertex_enum(p.halfspaces().to_vec(), &c).unwrap();
                prop_assert!(includes(&p, &h, 1e-9) && includes(&h, &p, 1e-9));
            }

            #[test]
            fn minkowski_contains_sums(a in points(2), b in points(2)) {
                let c = OrderingCone::orthant(2);
                let p = Polyhedron::from_generators(&a, &[], &c).unwrap();
                let q = Polyhedron::from_generators(&b, &[], &c).unwrap();
                let s = minkowski_sum(&p, &q).unwrap();
                for x in &a {
                    for y in &b {
                        prop_assert!(s.contains(&linalg::add(x, y), 1e-9));
                    }
                }
                for v in s.vertices() {
                    let split = p.vertices().iter().any(|x| q.contains(&linalg::sub(v, x), 1e-9));
                    prop_assert!(split);
                }
            }
        }
    }
}
