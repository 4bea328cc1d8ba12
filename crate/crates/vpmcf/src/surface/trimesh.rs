//! Icosphere backend: n = 2 surfaces with no symmetry assumption.
//!
//! The parameter domain is a subdivided icosahedron on the unit sphere; the
//! radius field lives on its vertices. Curvature comes from a per-vertex
//! least-squares quadratic fit of the embedding over the two-ring in
//! Minkowski coordinates, expressed in tangent coordinates of the parameter
//! sphere. The fit operator depends only on the grid, so it is factored once
//! at construction; each evaluation is a small matrix-vector product per
//! node. Scalar gradients reuse the same operator; the Laplacian uses
//! intrinsic cotangent weights built from hyperbolic edge lengths.

use super::{BackendAux, CurvatureField, RadialSurface, SurfaceError};
use crate::hypgeom::sinh_power_integral;
use nalgebra::DMatrix;
use std::collections::HashMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minkowski dot in R^4, signature (-, +, +, +).
#[inline]
fn mdot4(u: [f64; 4], v: [f64; 4]) -> f64 {
    -u[0] * v[0] + u[1] * v[1] + u[2] * v[2] + u[3] * v[3]
}

#[derive(Debug, Clone)]
struct FitOp {
    /// Ring vertices; entry 0 is the vertex itself.
    ring: Vec<u32>,
    /// Row-major 6 x m operator mapping ring samples to
    /// (value, d1, d2, d11, d12, d22), derivative scaling already applied.
    op: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TriMeshGrid {
    pub level: usize,
    /// Unit direction per vertex.
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    /// Unique undirected edges, lexicographically ordered pairs.
    pub edges: Vec<(u32, u32)>,
    /// Incident edge list per vertex: (edge index, other endpoint).
    vertex_edges: Vec<Vec<(u32, u32)>>,
    fit: Vec<FitOp>,
    /// Vertices within graph distance <= 3, for diameter shortest paths.
    far: Vec<Vec<u32>>,
    /// Lumped solid angle per vertex on the parameter sphere (sums to 4 pi).
    solid_angle: Vec<f64>,
}

/// Metric-dependent caches the curvature field carries for the Laplacian,
/// gradient and advection helpers.
#[derive(Debug, Clone)]
pub struct TriAux {
    /// Inverse metric per vertex: [inv11, inv12, inv22].
    ginv: Vec<[f64; 3]>,
    /// <G_i, T1>: pairing of the fit tangent basis with the radial unit
    /// tangent, for the tangential part of radial motion.
    tan_radial: Vec<[f64; 2]>,
    /// Cotangent weight per edge (aligned with `TriMeshGrid::edges`).
    cot_w: Vec<f64>,
    /// Lumped metric area per vertex.
    lumped_area: Vec<f64>,
    grid: std::sync::Arc<TriMeshGridRef>,
}

/// Cheap handle so the aux can walk the mesh without cloning it.
#[derive(Debug)]
pub(crate) struct TriMeshGridRef {
    vertex_edges: Vec<Vec<(u32, u32)>>,
}

impl TriAux {
    pub(crate) fn cot_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for v in 0..f.len() {
            let mut acc = 0.0;
            for &(e, w) in &self.grid.vertex_edges[v] {
                acc += self.cot_w[e as usize] * (f[w as usize] - f[v]);
            }
            out[v] = acc / self.lumped_area[v];
        }
        out
    }
}

impl TriMeshGrid {
    pub fn new(level: usize) -> Result<Self, SurfaceError> {
        if level < 2 {
            return Err(SurfaceError::InsufficientResolution(format!(
                "icosphere level must be >= 2, got {level}"
            )));
        }
        if level > 7 {
            return Err(SurfaceError::InsufficientResolution(format!(
                "icosphere level {level} is beyond desk scale"
            )));
        }
        let (vertices, faces) = icosphere(level);
        validate_closed_manifold(&vertices, &faces)?;

        // Undirected edge table and incidence lists.
        let mut edge_index: HashMap<(u32, u32), u32> = HashMap::new();
        let mut edges = Vec::new();
        for f in &faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (a.min(b), a.max(b));
                edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    (edges.len() - 1) as u32
                });
            }
        }
        let mut vertex_edges = vec![Vec::new(); vertices.len()];
        for (i, &(a, b)) in edges.iter().enumerate() {
            vertex_edges[a as usize].push((i as u32, b));
            vertex_edges[b as usize].push((i as u32, a));
        }
        for list in &mut vertex_edges {
            list.sort_by_key(|&(_, w)| w);
        }

        let neighbors: Vec<Vec<u32>> = vertex_edges
            .iter()
            .map(|list| list.iter().map(|&(_, w)| w).collect())
            .collect();
        let fit = build_fit_ops(&vertices, &neighbors)?;
        let far = rings_within(&neighbors, 3);
        let solid_angle = lumped_solid_angles(&vertices, &faces);

        Ok(TriMeshGrid {
            level,
            vertices,
            faces,
            edges,
            vertex_edges,
            fit,
            far,
            solid_angle,
        })
    }

    pub fn node_count(&self) -> usize {
        self.vertices.len()
    }

    pub(crate) fn curvature(&self, s: &RadialSurface) -> Result<CurvatureField, SurfaceError> {
        if self.level < 3 {
            return Err(SurfaceError::InsufficientResolution(
                "curvature on the triangle mesh needs subdivision level >= 3".into(),
            ));
        }
        let nv = self.node_count();
        let a_sign = crate::faults::a_sign();

        // Embedded positions.
        let mut pos = vec![[0.0; 4]; nv];
        for v in 0..nv {
            let (sh, ch) = (s.rho[v].sinh(), s.rho[v].cosh());
            let th = self.vertices[v];
            pos[v] = [ch, sh * th[0], sh * th[1], sh * th[2]];
        }

        struct NodeOut {
            metric: [f64; 3],
            second_form: [f64; 3],
            lambda: [f64; 2],
            mean: f64,
            graph_factor: f64,
            normal: [f64; 4],
            ginv: [f64; 3],
            tan_radial: [f64; 2],
        }

        let eval = |v: usize| -> Result<NodeOut, SurfaceError> {
            let fitop = &self.fit[v];
            let m = fitop.ring.len();
            // Fit all four Minkowski components at once.
            let mut coef = [[0.0f64; 4]; 6]; // [row][component]
            for (j, &w) in fitop.ring.iter().enumerate() {
                let p = pos[w as usize];
                for row in 0..6 {
                    let c = fitop.op[row * m + j];
                    for d in 0..4 {
                        coef[row][d] += c * p[d];
                    }
                }
            }
            let g1 = coef[1];
            let g2 = coef[2];
            let q11 = coef[3];
            let q12 = coef[4];
            let q22 = coef[5];
            let g11 = mdot4(g1, g1);
            let g12 = mdot4(g1, g2);
            let g22 = mdot4(g2, g2);
            let det = g11 * g22 - g12 * g12;
            if !(det > 0.0) || !(g11 > 0.0) {
                return Err(SurfaceError::DegenerateMetric { node: v });
            }

            // Normal: Minkowski-orthogonal complement of {X, G1, G2} by
            // cofactor expansion, then index raising (time sign flip).
            let x = pos[v];
            let c = cross4(x, g1, g2);
            let mut nu = [-c[0], c[1], c[2], c[3]];
            let nn = mdot4(nu, nu);
            if !(nn > 0.0) {
                return Err(SurfaceError::DegenerateMetric { node: v });
            }
            let inv = 1.0 / nn.sqrt();
            for c in &mut nu {
                *c *= inv;
            }
            let (sh, ch) = (s.rho[v].sinh(), s.rho[v].cosh());
            let th = self.vertices[v];
            let e_rho = [sh, ch * th[0], ch * th[1], ch * th[2]];
            let mut radial = mdot4(nu, e_rho);
            if radial < 0.0 {
                for c in &mut nu {
                    *c = -*c;
                }
                radial = -radial;
            }
            if !(radial > 0.0) {
                return Err(SurfaceError::DegenerateMetric { node: v });
            }

            let a11 = -mdot4(q11, nu) * a_sign;
            let a12 = -mdot4(q12, nu) * a_sign;
            let a22 = -mdot4(q22, nu) * a_sign;

            // Shape operator g^{-1} a: trace and determinant give the
            // principal curvatures.
            let tr = (g22 * a11 - 2.0 * g12 * a12 + g11 * a22) / det;
            let dt = (a11 * a22 - a12 * a12) / det;
            let disc = (tr * tr - 4.0 * dt).max(0.0).sqrt();
            let l1 = 0.5 * (tr + disc);
            let l2 = 0.5 * (tr - disc);

            Ok(NodeOut {
                metric: [g11, g12, g22],
                second_form: [a11, a12, a22],
                lambda: [l1, l2],
                mean: tr,
                graph_factor: 1.0 / radial,
                normal: nu,
                ginv: [g22 / det, -g12 / det, g11 / det],
                tan_radial: [mdot4(g1, e_rho), mdot4(g2, e_rho)],
            })
        };

        #[cfg(feature = "parallel")]
        let nodes: Result<Vec<NodeOut>, SurfaceError> = (0..nv).into_par_iter().map(eval).collect();
        #[cfg(not(feature = "parallel"))]
        let nodes: Result<Vec<NodeOut>, SurfaceError> = (0..nv).map(eval).collect();
        let nodes = nodes?;

        // Intrinsic edge lengths, lumped areas and cotangent weights.
        let edge_len: Vec<f64> = self
            .edges
            .iter()
            .map(|&(a, b)| hyp_dist4(pos[a as usize], pos[b as usize]))
            .collect();
        let mut lumped_area = vec![0.0; nv];
        let mut cot_w = vec![0.0; self.edges.len()];
        let mut face_edges = [0u32; 3];
        let edge_of = {
            let mut map: HashMap<(u32, u32), u32> = HashMap::with_capacity(self.edges.len());
            for (i, &e) in self.edges.iter().enumerate() {
                map.insert(e, i as u32);
            }
            map
        };
        for f in &self.faces {
            for (slot, (a, b)) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])].into_iter().enumerate()
            {
                face_edges[slot] = edge_of[&(a.min(b), a.max(b))];
            }
            // Sides opposite to corners 0, 1, 2.
            let s0 = edge_len[face_edges[1] as usize];
            let s1 = edge_len[face_edges[2] as usize];
            let s2 = edge_len[face_edges[0] as usize];
            let area = heron(s0, s1, s2);
            if !(area > 0.0) {
                return Err(SurfaceError::DegenerateMetric { node: f[0] as usize });
            }
            for &v in f {
                lumped_area[v as usize] += area / 3.0;
            }
            // cot of the corner angle opposite each edge.
            let cots = [
                cot_from_sides(s0, s1, s2, area), // corner 0, opposite edge (1,2)
                cot_from_sides(s1, s2, s0, area), // corner 1
                cot_from_sides(s2, s0, s1, area), // corner 2
            ];
            cot_w[face_edges[1] as usize] += 0.5 * cots[0];
            cot_w[face_edges[2] as usize] += 0.5 * cots[1];
            cot_w[face_edges[0] as usize] += 0.5 * cots[2];
        }

        let aux_grid = std::sync::Arc::new(TriMeshGridRef {
            vertex_edges: self.vertex_edges.clone(),
        });
        let aux = TriAux {
            ginv: nodes.iter().map(|n| n.ginv).collect(),
            tan_radial: nodes.iter().map(|n| n.tan_radial).collect(),
            cot_w,
            lumped_area: lumped_area.clone(),
            grid: aux_grid,
        };

        let mean: Vec<f64> = nodes.iter().map(|n| n.mean).collect();
        let mut field = CurvatureField {
            n: 2,
            metric: nodes.iter().map(|n| n.metric).collect(),
            second_form: nodes.iter().map(|n| n.second_form).collect(),
            lambda: nodes.iter().map(|n| n.lambda).collect(),
            a2: nodes
                .iter()
                .map(|n| n.lambda[0] * n.lambda[0] + n.lambda[1] * n.lambda[1])
                .collect(),
            aring2: nodes
                .iter()
                .map(|n| 0.5 * (n.lambda[0] - n.lambda[1]).powi(2))
                .collect(),
            mean,
            grad_h2: vec![0.0; nv],
            lap_h: vec![0.0; nv],
            graph_factor: nodes.iter().map(|n| n.graph_factor).collect(),
            node_area: lumped_area,
            normal_c: nodes.iter().map(|n| n.normal).collect(),
            aux: BackendAux::TriMesh(aux),
        };

        // Scalar derivatives of H reuse the fit operator.
        for v in 0..nv {
            let (d1, d2) = self.fit_gradient(v, &field.mean);
            let gi = match &field.aux {
                BackendAux::TriMesh(aux) => aux.ginv[v],
                _ => unreachable!(),
            };
            field.grad_h2[v] = gi[0] * d1 * d1 + 2.0 * gi[1] * d1 * d2 + gi[2] * d2 * d2;
        }
        field.lap_h = match &field.aux {
            BackendAux::TriMesh(aux) => aux.cot_laplacian(&field.mean),
            _ => unreachable!(),
        };
        Ok(field)
    }

    fn fit_gradient(&self, v: usize, f: &[f64]) -> (f64, f64) {
        let fitop = &self.fit[v];
        let m = fitop.ring.len();
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (j, &w) in fitop.ring.iter().enumerate() {
            d1 += fitop.op[m + j] * f[w as usize];
            d2 += fitop.op[2 * m + j] * f[w as usize];
        }
        (d1, d2)
    }

    pub(crate) fn tangential_advection(
        &self,
        aux: &TriAux,
        c: &CurvatureField,
        f: &[f64],
        rho_dot: &[f64],
    ) -> Vec<f64> {
        let _ = c;
        (0..self.node_count())
            .map(|v| {
                let (d1, d2) = self.fit_gradient(v, f);
                let gi = aux.ginv[v];
                let tr = aux.tan_radial[v];
                // grad f = g^{ij} d_j f G_i; pair with the radial tangent.
                let up1 = gi[0] * d1 + gi[1] * d2;
                let up2 = gi[1] * d1 + gi[2] * d2;
                rho_dot[v] * (up1 * tr[0] + up2 * tr[1])
            })
            .collect()
    }

    pub(crate) fn enclosed_volume(&self, rho: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (v, &r) in rho.iter().enumerate() {
            acc += self.solid_angle[v] * sinh_power_integral(2, r);
        }
        acc
    }

    pub(crate) fn min_edge_length(&self, s: &RadialSurface) -> Result<f64, SurfaceError> {
        let mut pos = vec![[0.0; 4]; self.node_count()];
        for v in 0..self.node_count() {
            let (sh, ch) = (s.rho[v].sinh(), s.rho[v].cosh());
            let th = self.vertices[v];
            pos[v] = [ch, sh * th[0], sh * th[1], sh * th[2]];
        }
        let mut min = f64::INFINITY;
        for &(a, b) in &self.edges {
            let d = hyp_dist4(pos[a as usize], pos[b as usize]);
            if !(d > 0.0) {
                return Err(SurfaceError::DegenerateMetric { node: a as usize });
            }
            min = min.min(d);
        }
        Ok(min)
    }

    /// Shortest paths from the twelve base icosahedron vertices over the
    /// 3-ring shortcut graph; the shortcut edges keep the directional
    /// quantization error of graph distances within ~1.5%.
    pub(crate) fn diameter_estimate(&self, s: &RadialSurface) -> Result<f64, SurfaceError> {
        let nv = self.node_count();
        let mut pos = vec![[0.0; 4]; nv];
        for v in 0..nv {
            let (sh, ch) = (s.rho[v].sinh(), s.rho[v].cosh());
            let th = self.vertices[v];
            pos[v] = [ch, sh * th[0], sh * th[1], sh * th[2]];
        }
        let neighbors = |u: usize| -> Vec<(usize, f64)> {
            self.far[u]
                .iter()
                .map(|&w| (w as usize, hyp_dist4(pos[u], pos[w as usize])))
                .collect()
        };
        let mut diameter = 0.0f64;
        for src in 0..12 {
            let dist = super::axisym::dijkstra(nv, src, &neighbors)?;
            for d in dist {
                diameter = diameter.max(d);
            }
        }
        Ok(diameter)
    }
}

fn hyp_dist4(a: [f64; 4], b: [f64; 4]) -> f64 {
    (-mdot4(a, b)).max(1.0).acosh()
}

fn heron(a: f64, b: f64, c: f64) -> f64 {
    let s = 0.5 * (a + b + c);
    (s * (s - a) * (s - b) * (s - c)).max(0.0).sqrt()
}

/// cot of the angle between sides `b` and `c` (opposite side `a`), from the
/// Euclidean layout of the intrinsic side lengths.
fn cot_from_sides(a: f64, b: f64, c: f64, area: f64) -> f64 {
    (b * b + c * c - a * a) / (4.0 * area)
}

/// Euclidean generalized cross product in R^4: the covector orthogonal to
/// the three arguments, by cofactor expansion.
fn cross4(a: [f64; 4], b: [f64; 4], c: [f64; 4]) -> [f64; 4] {
    let det3 = |m: [[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let minor = |skip: usize| -> f64 {
        let cols: Vec<usize> = (0..4).filter(|&j| j != skip).collect();
        det3([
            [a[cols[0]], a[cols[1]], a[cols[2]]],
            [b[cols[0]], b[cols[1]], b[cols[2]]],
            [c[cols[0]], c[cols[1]], c[cols[2]]],
        ])
    };
    [minor(0), -minor(1), minor(2), -minor(3)]
}

fn icosphere(level: usize) -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let norm = (1.0 + phi * phi).sqrt();
    let a = 1.0 / norm;
    let b = phi / norm;
    let mut vertices: Vec<[f64; 3]> = vec![
        [-a, b, 0.0],
        [a, b, 0.0],
        [-a, -b, 0.0],
        [a, -b, 0.0],
        [0.0, -a, b],
        [0.0, a, b],
        [0.0, -a, -b],
        [0.0, a, -b],
        [b, 0.0, -a],
        [b, 0.0, a],
        [-b, 0.0, -a],
        [-b, 0.0, a],
    ];
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0u32; 3];
            for (slot, (i, j)) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])].into_iter().enumerate()
            {
                let key = (i.min(j), i.max(j));
                mid[slot] = *midpoint.entry(key).or_insert_with(|| {
                    let p = vertices[i as usize];
                    let q = vertices[j as usize];
                    let mut m = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
                    let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                    for c in &mut m {
                        *c /= norm;
                    }
                    vertices.push(m);
                    (vertices.len() - 1) as u32
                });
            }
            new_faces.push([f[0], mid[0], mid[2]]);
            new_faces.push([f[1], mid[1], mid[0]]);
            new_faces.push([f[2], mid[2], mid[1]]);
            new_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = new_faces;
    }
    (vertices, faces)
}

fn validate_closed_manifold(
    vertices: &[[f64; 3]],
    faces: &[[u32; 3]],
) -> Result<(), SurfaceError> {
    for (i, v) in vertices.iter().enumerate() {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(SurfaceError::Snapshot(format!(
                "icosphere vertex {i} is off the unit sphere by {}",
                (norm - 1.0).abs()
            )));
        }
    }
    // Each directed edge must appear exactly once (closed and consistently
    // oriented), and V - E + F must equal 2.
    let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            *directed.entry((a, b)).or_insert(0) += 1;
        }
    }
    let mut undirected = 0usize;
    for (&(a, b), &count) in &directed {
        if count != 1 || directed.get(&(b, a)) != Some(&1) {
            return Err(SurfaceError::Snapshot(
                "icosphere is not a consistently oriented closed manifold".into(),
            ));
        }
        if a < b {
            undirected += 1;
        }
    }
    let chi = vertices.len() as i64 - undirected as i64 + faces.len() as i64;
    if chi != 2 {
        return Err(SurfaceError::Snapshot(format!(
            "Euler characteristic {chi} != 2"
        )));
    }
    Ok(())
}

fn rings_within(neighbors: &[Vec<u32>], depth: usize) -> Vec<Vec<u32>> {
    let nv = neighbors.len();
    let mut out = Vec::with_capacity(nv);
    let mut mark = vec![u32::MAX; nv];
    for v in 0..nv {
        let mut ring = vec![v as u32];
        mark[v] = v as u32;
        let mut frontier = vec![v as u32];
        for _ in 0..depth {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in &neighbors[u as usize] {
                    if mark[w as usize] != v as u32 {
                        mark[w as usize] = v as u32;
                        ring.push(w);
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        ring.sort_unstable();
        // Drop the vertex itself from the shortcut list.
        ring.retain(|&w| w != v as u32);
        out.push(ring);
    }
    out
}

fn build_fit_ops(
    vertices: &[[f64; 3]],
    neighbors: &[Vec<u32>],
) -> Result<Vec<FitOp>, SurfaceError> {
    let two_ring = rings_within(neighbors, 2);
    let mut ops = Vec::with_capacity(vertices.len());
    for v in 0..vertices.len() {
        let mut ring = vec![v as u32];
        ring.extend_from_slice(&two_ring[v]);
        let m = ring.len();
        if m < 10 {
            return Err(SurfaceError::InsufficientResolution(format!(
                "vertex {v} has only {m} fit samples"
            )));
        }
        let th = vertices[v];
        let (t1, t2) = tangent_basis(th);
        // Log-map coordinates on the parameter sphere.
        let mut coords = Vec::with_capacity(m);
        for &w in &ring {
            if w as usize == v {
                coords.push([0.0, 0.0]);
                continue;
            }
            let q = vertices[w as usize];
            let cosang = (th[0] * q[0] + th[1] * q[1] + th[2] * q[2]).clamp(-1.0, 1.0);
            let ang = cosang.acos();
            let d = [
                q[0] - cosang * th[0],
                q[1] - cosang * th[1],
                q[2] - cosang * th[2],
            ];
            let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let u1 = ang * (d[0] * t1[0] + d[1] * t1[1] + d[2] * t1[2]) / dn;
            let u2 = ang * (d[0] * t2[0] + d[1] * t2[1] + d[2] * t2[2]) / dn;
            coords.push([u1, u2]);
        }
        let scale = coords
            .iter()
            .map(|u| (u[0] * u[0] + u[1] * u[1]).sqrt())
            .sum::<f64>()
            / (m - 1) as f64;
        // Quadratic fit augmented with cubic terms in scaled coordinates;
        // the cubic block soaks up the third-order variation that would
        // otherwise contaminate the recovered Hessian on the slightly
        // irregular icosphere stencils.
        let mut a = DMatrix::zeros(m, 10);
        for (row, u) in coords.iter().enumerate() {
            let (x, y) = (u[0] / scale, u[1] / scale);
            a[(row, 0)] = 1.0;
            a[(row, 1)] = x;
            a[(row, 2)] = y;
            a[(row, 3)] = 0.5 * x * x;
            a[(row, 4)] = x * y;
            a[(row, 5)] = 0.5 * y * y;
            a[(row, 6)] = x * x * x / 6.0;
            a[(row, 7)] = 0.5 * x * x * y;
            a[(row, 8)] = 0.5 * x * y * y;
            a[(row, 9)] = y * y * y / 6.0;
        }
        let p = a
            .svd(true, true)
            .pseudo_inverse(1e-12)
            .map_err(|e| SurfaceError::Snapshot(format!("fit pseudo-inverse: {e}")))?;
        // Undo the coordinate scaling so rows emit true derivatives.
        let mut op = vec![0.0; 6 * m];
        for j in 0..m {
            op[j] = p[(0, j)];
            op[m + j] = p[(1, j)] / scale;
            op[2 * m + j] = p[(2, j)] / scale;
            op[3 * m + j] = p[(3, j)] / (scale * scale);
            op[4 * m + j] = p[(4, j)] / (scale * scale);
            op[5 * m + j] = p[(5, j)] / (scale * scale);
        }
        ops.push(FitOp { ring, op });
    }
    Ok(ops)
}

fn tangent_basis(th: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    // Axis least aligned with the direction, then Gram-Schmidt.
    let abs = [th[0].abs(), th[1].abs(), th[2].abs()];
    let k = if abs[0] <= abs[1] && abs[0] <= abs[2] {
        0
    } else if abs[1] <= abs[2] {
        1
    } else {
        2
    };
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let d = e[0] * th[0] + e[1] * th[1] + e[2] * th[2];
    let mut t1 = [e[0] - d * th[0], e[1] - d * th[1], e[2] - d * th[2]];
    let n = (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
    for c in &mut t1 {
        *c /= n;
    }
    let t2 = [
        th[1] * t1[2] - th[2] * t1[1],
        th[2] * t1[0] - th[0] * t1[2],
        th[0] * t1[1] - th[1] * t1[0],
    ];
    (t1, t2)
}

fn lumped_solid_angles(vertices: &[[f64; 3]], faces: &[[u32; 3]]) -> Vec<f64> {
    let mut out = vec![0.0; vertices.len()];
    for f in faces {
        let a = vertices[f[0] as usize];
        let b = vertices[f[1] as usize];
        let c = vertices[f[2] as usize];
        let excess = spherical_angle(a, b, c) + spherical_angle(b, c, a) + spherical_angle(c, a, b)
            - std::f64::consts::PI;
        for &v in f {
            out[v as usize] += excess / 3.0;
        }
    }
    out
}

/// Spherical angle at `a` of the geodesic triangle (a, b, c) on the unit
/// sphere.
fn spherical_angle(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let proj = |p: [f64; 3]| -> [f64; 3] {
        let d = a[0] * p[0] + a[1] * p[1] + a[2] * p[2];
        [p[0] - d * a[0], p[1] - d * a[1], p[2] - d * a[2]]
    };
    let u = proj(b);
    let v = proj(c);
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    cn.atan2(dot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypgeom::sphere_oracle;
    use crate::surface::{curvature_field, diameter_estimate, enclosed_volume, ParamGrid};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    pub(crate) fn sphere_surface(r: f64, level: usize) -> RadialSurface {
        let grid = TriMeshGrid::new(level).unwrap();
        let nv = grid.node_count();
        RadialSurface::new(Arc::new(ParamGrid::TriMesh(grid)), vec![r; nv]).unwrap()
    }

    #[test]
    fn icosphere_counts_and_topology() {
        for level in 2..=4 {
            let g = TriMeshGrid::new(level).unwrap();
            assert_eq!(g.node_count(), 10 * 4usize.pow(level as u32) + 2);
            assert_eq!(g.faces.len(), 20 * 4usize.pow(level as u32));
            // V - E + F = 2 is validated at construction; spot check here.
            assert_eq!(
                g.node_count() as i64 - g.edges.len() as i64 + g.faces.len() as i64,
                2
            );
        }
    }

    #[test]
    fn solid_angles_sum_to_full_sphere() {
        let g = TriMeshGrid::new(3).unwrap();
        let total: f64 = g.solid_angle.iter().sum();
        assert_relative_eq!(total, 4.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn sphere_curvature_matches_oracle_at_l5() {
        let s = sphere_surface(1.0, 5);
        let c = curvature_field(&s).unwrap();
        let oracle = sphere_oracle(1.0, 2).unwrap();
        let mut worst_h = 0.0f64;
        for v in 0..s.node_count() {
            worst_h = worst_h.max((c.mean[v] - oracle.mean_curvature).abs());
            assert!(c.aring2[v] >= -1e-12);
            assert!((c.graph_factor[v] - 1.0).abs() < 1e-3);
        }
        assert!(
            worst_h / oracle.mean_curvature <= 1e-3,
            "max relative H error {}",
            worst_h / oracle.mean_curvature
        );
        assert_relative_eq!(c.area(), oracle.area, max_relative = 1e-3);
        assert_relative_eq!(
            enclosed_volume(&s).unwrap(),
            oracle.enclosed_volume,
            max_relative = 1e-3
        );
    }

    #[test]
    fn sphere_area_error_decreases_at_design_order() {
        let oracle = sphere_oracle(1.0, 2).unwrap();
        let mut errs = Vec::new();
        for level in [3usize, 4, 5] {
            let s = sphere_surface(1.0, level);
            let c = curvature_field(&s).unwrap();
            errs.push((c.area() - oracle.area).abs() / oracle.area);
        }
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!((s1 - 2.0).abs() < 0.3, "slope {s1}");
        assert!((s2 - 2.0).abs() < 0.3, "slope {s2}");
    }

    #[test]
    fn normal_is_unit_and_orthogonal() {
        let grid = TriMeshGrid::new(3).unwrap();
        let nv = grid.node_count();
        // A mildly aspherical surface: zonal wobble about the x axis.
        let rho: Vec<f64> = grid
            .vertices
            .iter()
            .map(|t| 1.0 + 0.05 * crate::special::legendre_p(2, t[0]))
            .collect();
        let s = RadialSurface::new(Arc::new(ParamGrid::TriMesh(grid)), rho).unwrap();
        let c = curvature_field(&s).unwrap();
        for v in (0..nv).step_by(97) {
            let tangent = c.normal(&s, v).unwrap();
            let base = tangent.base.vec().clone();
            let nu = tangent.vec;
            assert_relative_eq!(
                crate::hypgeom::minkowski_dot(&nu, &nu).unwrap(),
                1.0,
                epsilon = 1e-8
            );
            assert_relative_eq!(
                crate::hypgeom::minkowski_dot(&nu, &base).unwrap(),
                0.0,
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn edge_chords_shorter_than_mesh_scale() {
        let s = sphere_surface(1.0, 4);
        let g = match &*s.grid {
            ParamGrid::TriMesh(g) => g,
            _ => unreachable!(),
        };
        let pts = crate::surface::embed(&s).unwrap();
        let mut max_edge = 0.0f64;
        for &(a, b) in &g.edges {
            let d = crate::hypgeom::hyp_dist(&pts[a as usize], &pts[b as usize]).unwrap();
            max_edge = max_edge.max(d);
        }
        // Unit-sphere edge arcs are ~1.107 rad / 2^level (midpoint
        // subdivision leaves some spread), stretched by sinh(1).
        assert!(max_edge < 2.0 * 1.0f64.sinh() * 1.1071 / 16.0);
        assert!(max_edge > 0.0);
    }

    #[test]
    fn sphere_diameter_within_two_percent_at_l5() {
        let s = sphere_surface(1.0, 5);
        let d = diameter_estimate(&s).unwrap();
        let exact = PI * 1.0f64.sinh();
        assert!(
            (d - exact).abs() / exact < 0.02,
            "estimate {d} vs exact {exact}"
        );
    }
}
