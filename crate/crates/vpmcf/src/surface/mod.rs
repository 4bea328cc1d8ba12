//! Discrete star-shaped hypersurfaces in H^{n+1} as radial graphs over S^n,
//! with the full curvature and quadrature pipeline.
//!
//! Two independent discretizations back the same operations so they can
//! cross-validate each other:
//!
//! * [`axisym`]: rotationally symmetric surfaces for any n >= 2, encoded by
//!   a radius profile over the polar angle on a uniform grid, differentiated
//!   with high-order stencils. The accurate workhorse; also the only backend
//!   exposing `|grad A|^2`.
//! * [`trimesh`]: n = 2 surfaces over an icosphere with no symmetry
//!   assumption, using per-vertex local fits of the embedding in Minkowski
//!   coordinates.
//!
//! All quadratures are plain weighted sums with fixed, precomputed weights;
//! reductions run in node order, so every derived quantity is reproducible
//! bit for bit.

pub mod axisym;
pub mod trimesh;

use crate::hypgeom::{GeomError, HPoint, LorentzVec, TangentVec};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

pub use axisym::AxisymGrid;
pub use trimesh::TriMeshGrid;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("resolution too coarse: {0}")]
    InsufficientResolution(String),
    #[error("surface is not star-shaped: rho[{node}] = {rho}")]
    NonStarShaped { node: usize, rho: f64 },
    #[error("degenerate induced metric at node {node} (mesh collapse)")]
    DegenerateMetric { node: usize },
    #[error("rho has {got} entries but the grid has {expected} nodes")]
    WrongFieldLength { got: usize, expected: usize },
    #[error("node graph is disconnected (invalid grid)")]
    DisconnectedGraph,
    #[error("operation requires the {0} backend")]
    BackendMismatch(&'static str),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Parameter-domain discretization of S^n.
#[derive(Debug, Clone)]
pub enum ParamGrid {
    Axisymmetric(AxisymGrid),
    TriMesh(TriMeshGrid),
}

impl ParamGrid {
    pub fn node_count(&self) -> usize {
        match self {
            ParamGrid::Axisymmetric(g) => g.node_count(),
            ParamGrid::TriMesh(g) => g.node_count(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ParamGrid::Axisymmetric(g) => g.n,
            ParamGrid::TriMesh(_) => 2,
        }
    }
}

/// A star-shaped closed hypersurface: hyperbolic radial distance from the
/// basepoint, sampled on the parameter grid.
#[derive(Debug, Clone)]
pub struct RadialSurface {
    pub grid: Arc<ParamGrid>,
    pub rho: Vec<f64>,
    /// Hypersurface dimension n (the ambient space is H^{n+1}).
    pub n: usize,
}

impl RadialSurface {
    pub fn new(grid: Arc<ParamGrid>, rho: Vec<f64>) -> Result<Self, SurfaceError> {
        if rho.len() != grid.node_count() {
            return Err(SurfaceError::WrongFieldLength {
                got: rho.len(),
                expected: grid.node_count(),
            });
        }
        for (node, &r) in rho.iter().enumerate() {
            if !(r > 0.0) || !r.is_finite() {
                return Err(SurfaceError::NonStarShaped { node, rho: r });
            }
        }
        let n = grid.dim();
        Ok(RadialSurface { grid, rho, n })
    }

    pub fn node_count(&self) -> usize {
        self.rho.len()
    }

    /// Same grid, new radius field.
    pub fn with_rho(&self, rho: Vec<f64>) -> Result<Self, SurfaceError> {
        RadialSurface::new(self.grid.clone(), rho)
    }
}

/// Per-node first and second fundamental forms with everything contracted
/// out of them. Component layout of `metric`/`second_form` is
/// `[meridian, cross, angular]` for the axisymmetric backend (cross = 0;
/// angular entries are per unit angular direction and vanish at the poles)
/// and `[g11, g12, g22]` in fit coordinates for the triangle mesh.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    pub n: usize,
    pub metric: Vec<[f64; 3]>,
    pub second_form: Vec<[f64; 3]>,
    /// Principal curvatures: (meridian, angular) on the axisymmetric
    /// backend, (max, min) on the triangle mesh.
    pub lambda: Vec<[f64; 2]>,
    /// Mean curvature H (sum of principal curvatures).
    pub mean: Vec<f64>,
    /// |A|^2.
    pub a2: Vec<f64>,
    /// |Aring|^2, the squared norm of the traceless second fundamental form,
    /// assembled from principal-curvature differences so it is exactly
    /// nonnegative.
    pub aring2: Vec<f64>,
    /// |grad H|^2.
    pub grad_h2: Vec<f64>,
    /// Laplace-Beltrami of H.
    pub lap_h: Vec<f64>,
    /// Graph factor v = 1/<nu, e_rho> >= 1, ratio of radial to normal speed.
    pub graph_factor: Vec<f64>,
    /// Quadrature weight per node folding the area element: sums to the
    /// surface area, and `sum(node_area * f)` integrates a field f over the
    /// surface.
    pub node_area: Vec<f64>,
    /// Outward unit normal, compacted: `(t, x, y, 0)` in the reduced
    /// meridian coordinates for the axisymmetric backend, the full Minkowski
    /// 4-vector for the triangle mesh.
    pub(crate) normal_c: Vec<[f64; 4]>,
    pub(crate) aux: BackendAux,
}

#[derive(Debug, Clone)]
pub(crate) enum BackendAux {
    Axisym(axisym::AxisymAux),
    TriMesh(trimesh::TriAux),
}

impl CurvatureField {
    pub fn node_count(&self) -> usize {
        self.mean.len()
    }

    pub fn max_aring(&self) -> f64 {
        self.aring2.iter().fold(0.0f64, |m, &x| m.max(x)).sqrt()
    }

    pub fn max_a2(&self) -> f64 {
        self.a2.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
    }

    pub fn min_mean(&self) -> f64 {
        self.mean.iter().fold(f64::INFINITY, |m, &x| m.min(x))
    }

    pub fn max_mean(&self) -> f64 {
        self.mean.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
    }

    pub fn min_lambda(&self) -> f64 {
        self.lambda
            .iter()
            .fold(f64::INFINITY, |m, l| m.min(l[0]).min(l[1]))
    }

    /// Total surface area (sum of the per-node quadrature weights).
    pub fn area(&self) -> f64 {
        self.node_area.iter().sum()
    }

    /// Integral of a per-node field against the area element.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.node_area.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    /// The outward unit normal at a node as a full ambient tangent vector.
    pub fn normal(&self, s: &RadialSurface, node: usize) -> Result<TangentVec, SurfaceError> {
        let base = embed_node(s, node)?;
        let dim = base.dim();
        let mut v = vec![0.0; dim];
        match &*s.grid {
            ParamGrid::Axisymmetric(_) => {
                // Reduced (t, x, y) lives in the representative meridian
                // plane spanned by the first three ambient coordinates.
                v[0] = self.normal_c[node][0];
                v[1] = self.normal_c[node][1];
                v[2] = self.normal_c[node][2];
            }
            ParamGrid::TriMesh(_) => {
                v.copy_from_slice(&self.normal_c[node]);
            }
        }
        Ok(TangentVec::new(base, LorentzVec(v))?)
    }

    /// Laplace-Beltrami of a scalar field in the induced metric.
    pub fn laplacian(&self, s: &RadialSurface, f: &[f64]) -> Result<Vec<f64>, SurfaceError> {
        match (&*s.grid, &self.aux) {
            (ParamGrid::Axisymmetric(g), BackendAux::Axisym(aux)) => Ok(g.laplacian(f, aux)),
            (ParamGrid::TriMesh(_), BackendAux::TriMesh(aux)) => Ok(aux.cot_laplacian(f)),
            _ => Err(SurfaceError::BackendMismatch("matching")),
        }
    }

    /// Directional derivative of a scalar field along the tangential part of
    /// the radial direction, scaled by `rho_dot`: the advection rate a field
    /// picks up because the radial-graph parameterization drifts
    /// tangentially relative to the normal flow.
    pub fn tangential_advection(
        &self,
        s: &RadialSurface,
        f: &[f64],
        rho_dot: &[f64],
    ) -> Result<Vec<f64>, SurfaceError> {
        match (&*s.grid, &self.aux) {
            (ParamGrid::Axisymmetric(g), BackendAux::Axisym(aux)) => {
                let fp = g.deriv_even(f);
                Ok((0..f.len())
                    .map(|k| rho_dot[k] * aux.rho_d1[k] * fp[k] / self.metric[k][0])
                    .collect())
            }
            (ParamGrid::TriMesh(g), BackendAux::TriMesh(aux)) => {
                Ok(g.tangential_advection(aux, self, f, rho_dot))
            }
            _ => Err(SurfaceError::BackendMismatch("matching")),
        }
    }
}

/// Embeds every node onto the hyperboloid sheet.
pub fn embed(s: &RadialSurface) -> Result<Vec<HPoint>, SurfaceError> {
    (0..s.node_count()).map(|k| embed_node(s, k)).collect()
}

pub fn embed_node(s: &RadialSurface, node: usize) -> Result<HPoint, SurfaceError> {
    let rho = s.rho[node];
    if !(rho > 0.0) {
        return Err(SurfaceError::NonStarShaped { node, rho });
    }
    let dim = s.n + 2;
    let mut v = vec![0.0; dim];
    v[0] = rho.cosh();
    let sh = rho.sinh();
    match &*s.grid {
        ParamGrid::Axisymmetric(g) => {
            // Representative meridian at the first angular direction.
            v[1] = sh * g.nodes[node].cos();
            v[2] = sh * g.nodes[node].sin();
        }
        ParamGrid::TriMesh(g) => {
            let th = &g.vertices[node];
            v[1] = sh * th[0];
            v[2] = sh * th[1];
            v[3] = sh * th[2];
        }
    }
    Ok(HPoint::new_unchecked(LorentzVec(v)))
}

/// Full per-node curvature pipeline: embedding derivatives by the grid's
/// differentiation scheme, fundamental forms as Minkowski dot products, and
/// contractions.
pub fn curvature_field(s: &RadialSurface) -> Result<CurvatureField, SurfaceError> {
    match &*s.grid {
        ParamGrid::Axisymmetric(g) => g.curvature(s),
        ParamGrid::TriMesh(g) => g.curvature(s),
    }
}

/// Principal curvatures at a node with multiplicities, eigenvalues of the
/// shape operator `g^{-1} a`.
pub fn principal_curvatures(c: &CurvatureField, node: usize) -> Vec<f64> {
    let [l1, l2] = c.lambda[node];
    let mut out = Vec::with_capacity(c.n);
    out.push(l1);
    for _ in 1..c.n {
        out.push(l2);
    }
    out
}

/// Surface area by the grid quadrature.
pub fn area(s: &RadialSurface) -> Result<f64, SurfaceError> {
    Ok(curvature_field(s)?.area())
}

/// Enclosed (n+1)-volume: the inner radial integral of `sinh^n` in closed
/// form, the outer integral by grid quadrature. Needs no curvature data.
pub fn enclosed_volume(s: &RadialSurface) -> Result<f64, SurfaceError> {
    for (node, &r) in s.rho.iter().enumerate() {
        if !(r > 0.0) {
            return Err(SurfaceError::NonStarShaped { node, rho: r });
        }
    }
    match &*s.grid {
        ParamGrid::Axisymmetric(g) => Ok(g.enclosed_volume(&s.rho)),
        ParamGrid::TriMesh(g) => Ok(g.enclosed_volume(&s.rho)),
    }
}

/// Area-weighted average of the mean curvature, the nonlocal term of the
/// flow. Fixed summation order.
pub fn mean_of_h(c: &CurvatureField) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (w, h) in c.node_area.iter().zip(&c.mean) {
        num += w * h;
        den += w;
    }
    num / den
}

/// Intrinsic diameter, estimated by shortest paths from a deterministic
/// landmark set on the node graph with hyperbolic edge weights. Accurate to
/// O(mesh spacing); monitored downstream only as a ratio.
pub fn diameter_estimate(s: &RadialSurface) -> Result<f64, SurfaceError> {
    match &*s.grid {
        ParamGrid::Axisymmetric(g) => g.diameter_estimate(s),
        ParamGrid::TriMesh(g) => g.diameter_estimate(s),
    }
}

/// Gradient norms of the curvature: the max of `|grad H|` everywhere, and
/// on the axisymmetric backend also the integral of the full `|grad A|^2`.
pub struct GradNorms {
    pub max_grad_h: f64,
    pub int_grad_a2: Option<f64>,
    /// Pointwise `|grad A|^2` (axisymmetric only).
    pub grad_a2: Option<Vec<f64>>,
}

pub fn grad_norms(s: &RadialSurface, c: &CurvatureField) -> Result<GradNorms, SurfaceError> {
    let max_grad_h = c.grad_h2.iter().fold(0.0f64, |m, &x| m.max(x)).sqrt();
    match (&*s.grid, &c.aux) {
        (ParamGrid::Axisymmetric(g), BackendAux::Axisym(_)) => {
            let ga2 = g.grad_a2(c);
            Ok(GradNorms {
                max_grad_h,
                int_grad_a2: Some(c.integrate(&ga2)),
                grad_a2: Some(ga2),
            })
        }
        _ => Ok(GradNorms {
            max_grad_h,
            int_grad_a2: None,
            grad_a2: None,
        }),
    }
}

/// Minimum node spacing in the induced metric, the length scale of the
/// parabolic stability limit.
pub fn min_spacing(s: &RadialSurface, c: &CurvatureField) -> Result<f64, SurfaceError> {
    match &*s.grid {
        ParamGrid::Axisymmetric(g) => {
            let mut min = f64::INFINITY;
            for k in 0..s.node_count() {
                let sp = c.metric[k][0].sqrt() * g.h;
                if !(sp > 0.0) {
                    return Err(SurfaceError::DegenerateMetric { node: k });
                }
                min = min.min(sp);
            }
            Ok(min)
        }
        ParamGrid::TriMesh(g) => g.min_edge_length(s),
    }
}

// ---------------------------------------------------------------------------
// Surface snapshot files
// ---------------------------------------------------------------------------

/// On-disk form of a surface: backend, dimension, grid parameters and the
/// radius field. JSON float serialization is shortest-round-trip, so a
/// snapshot reloads to the bit-identical surface.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum Snapshot {
    Axisym {
        n: usize,
        k: usize,
        stencil_order: usize,
        rho: Vec<f64>,
    },
    Trimesh {
        n: usize,
        level: usize,
        rho: Vec<f64>,
    },
}

pub fn to_snapshot(s: &RadialSurface) -> Snapshot {
    match &*s.grid {
        ParamGrid::Axisymmetric(g) => Snapshot::Axisym {
            n: g.n,
            k: g.node_count(),
            stencil_order: g.stencil_order,
            rho: s.rho.clone(),
        },
        ParamGrid::TriMesh(g) => Snapshot::Trimesh {
            n: 2,
            level: g.level,
            rho: s.rho.clone(),
        },
    }
}

pub fn from_snapshot(snap: &Snapshot) -> Result<RadialSurface, SurfaceError> {
    match snap {
        Snapshot::Axisym {
            n,
            k,
            stencil_order,
            rho,
        } => {
            let grid = AxisymGrid::new(*n, *k, *stencil_order)?;
            RadialSurface::new(Arc::new(ParamGrid::Axisymmetric(grid)), rho.clone())
        }
        Snapshot::Trimesh { n, level, rho } => {
            if *n != 2 {
                return Err(SurfaceError::BackendMismatch("trimesh requires n = 2"));
            }
            let grid = TriMeshGrid::new(*level)?;
            RadialSurface::new(Arc::new(ParamGrid::TriMesh(grid)), rho.clone())
        }
    }
}

pub fn snapshot_to_json(s: &RadialSurface) -> String {
    serde_json::to_string_pretty(&to_snapshot(s)).expect("snapshot serialization")
}

pub fn snapshot_from_json(text: &str) -> Result<RadialSurface, SurfaceError> {
    let snap: Snapshot =
        serde_json::from_str(text).map_err(|e| SurfaceError::Snapshot(e.to_string()))?;
    from_snapshot(&snap)
}
