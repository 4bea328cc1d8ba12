//! Axisymmetric backend: radius profiles over the polar angle.
//!
//! A rotationally symmetric surface embeds as
//! `X(phi) = (cosh rho, sinh rho cos phi, sinh rho sin phi * omega)` with
//! `omega` running over S^{n-1}. Every meridian-plane vector then lives in
//! the 3-dimensional reduced Minkowski space `(t, x, y)` with product
//! `-t t' + x x' + y y'`, and the angular directions contribute through the
//! revolution radius `y = sinh rho sin phi` alone. The pipeline
//! differentiates the three embedding components in phi with central
//! stencils (ghost nodes by even/odd reflection at the poles) and assembles
//! the fundamental forms from reduced dot products.
//!
//! Quadrature over [0, pi] is the trapezoid rule with Euler-Maclaurin
//! endpoint corrections folded into a fixed weight vector (design order 6).
//! Because the same weights serve the area, the enclosed volume and the
//! mean-curvature average, the semi-discrete flow inherits exact discrete
//! volume conservation from the identity `v sinh^n rho = J sinh^{n-1} rho`
//! between the graph-projected and metric area elements.

use super::{BackendAux, CurvatureField, RadialSurface, SurfaceError};
use crate::hypgeom::sinh_power_integral;
use crate::special::{fd_weights, unit_sphere_area};
use std::collections::BinaryHeap;

/// Reduced Minkowski dot in the meridian plane.
#[inline]
fn mdot3(u: [f64; 3], v: [f64; 3]) -> f64 {
    -u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

/// Parity of a profile's smooth extension across a pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone)]
pub struct AxisymGrid {
    /// Hypersurface dimension n >= 2.
    pub n: usize,
    /// Uniform polar-angle nodes, `phi_0 = 0`, `phi_{K-1} = pi`.
    pub nodes: Vec<f64>,
    /// Central-difference stencil order (2, 4 or 6).
    pub stencil_order: usize,
    pub(crate) h: f64,
    d1: Vec<f64>,
    d2: Vec<f64>,
    /// Euler-Maclaurin-corrected trapezoid weights for `int_0^pi F dphi`.
    quad_w: Vec<f64>,
    omega_nm1: f64,
}

/// Geometry caches a curvature field keeps for the gradient, Laplacian and
/// advection helpers.
#[derive(Debug, Clone)]
pub struct AxisymAux {
    pub(crate) rho_d1: Vec<f64>,
    /// d/dphi of g_meridian.
    gmer_d1: Vec<f64>,
    gmer: Vec<f64>,
    coth_rho: Vec<f64>,
    cot_phi: Vec<f64>,
    n: usize,
}

impl AxisymGrid {
    pub fn new(n: usize, k: usize, stencil_order: usize) -> Result<Self, SurfaceError> {
        if n < 2 {
            return Err(SurfaceError::InsufficientResolution(format!(
                "surface dimension n must be >= 2, got {n}"
            )));
        }
        if !matches!(stencil_order, 2 | 4 | 6) {
            return Err(SurfaceError::InsufficientResolution(format!(
                "unsupported stencil order {stencil_order} (use 2, 4 or 6)"
            )));
        }
        if k < 2 * stencil_order + 1 || k < 9 {
            return Err(SurfaceError::InsufficientResolution(format!(
                "axisymmetric grid needs more nodes than {k}"
            )));
        }
        let h = std::f64::consts::PI / (k - 1) as f64;
        let nodes: Vec<f64> = (0..k)
            .map(|i| std::f64::consts::PI * i as f64 / (k - 1) as f64)
            .collect();
        let half = stencil_order / 2;
        let offsets: Vec<f64> = (-(half as isize)..=half as isize)
            .map(|j| j as f64)
            .collect();
        let d1 = fd_weights(0.0, &offsets, 1);
        let d2 = fd_weights(0.0, &offsets, 2);

        // Trapezoid weights with Euler-Maclaurin endpoint corrections:
        //   int ~ T - h^2/12 (F'(b) - F'(a)) + h^4/720 (F'''(b) - F'''(a)),
        // the one-sided derivative stencils folded in as fixed weights.
        let mut quad_w = vec![h; k];
        quad_w[0] = h / 2.0;
        quad_w[k - 1] = h / 2.0;
        let c1 = fd_weights(0.0, &[0.0, 1.0, 2.0, 3.0, 4.0], 1);
        let c3 = fd_weights(0.0, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 3);
        for (j, w) in c1.iter().enumerate() {
            quad_w[j] += h * w / 12.0;
            quad_w[k - 1 - j] += h * w / 12.0;
        }
        for (j, w) in c3.iter().enumerate() {
            quad_w[j] -= h * w / 720.0;
            quad_w[k - 1 - j] -= h * w / 720.0;
        }

        Ok(AxisymGrid {
            n,
            nodes,
            stencil_order,
            h,
            d1,
            d2,
            quad_w,
            omega_nm1: unit_sphere_area(n - 1),
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Sample index and sign after reflecting across the poles with the
    /// field's parity.
    #[inline]
    fn reflect(&self, idx: isize, parity: (Parity, Parity)) -> (usize, f64) {
        let last = (self.node_count() - 1) as isize;
        if idx < 0 {
            let s = if parity.0 == Parity::Odd { -1.0 } else { 1.0 };
            ((-idx) as usize, s)
        } else if idx > last {
            let s = if parity.1 == Parity::Odd { -1.0 } else { 1.0 };
            ((2 * last - idx) as usize, s)
        } else {
            (idx as usize, 1.0)
        }
    }

    fn apply_stencil(&self, f: &[f64], w: &[f64], scale: f64, parity: (Parity, Parity)) -> Vec<f64> {
        let k = self.node_count();
        let half = (w.len() / 2) as isize;
        let mut out = vec![0.0; k];
        for i in 0..k {
            let mut acc = 0.0;
            for (j, &wj) in w.iter().enumerate() {
                let off = j as isize - half;
                let (idx, sign) = self.reflect(i as isize + off, parity);
                acc += wj * sign * f[idx];
            }
            out[i] = acc * scale;
        }
        out
    }

    /// First derivative in phi of a field with the given pole parities.
    pub fn deriv(&self, f: &[f64], parity: (Parity, Parity)) -> Vec<f64> {
        self.apply_stencil(f, &self.d1, 1.0 / self.h, parity)
    }

    /// First derivative of a field that extends evenly across both poles
    /// (every smooth axisymmetric scalar does).
    pub fn deriv_even(&self, f: &[f64]) -> Vec<f64> {
        self.deriv(f, (Parity::Even, Parity::Even))
    }

    /// Second derivative in phi.
    pub fn deriv2(&self, f: &[f64], parity: (Parity, Parity)) -> Vec<f64> {
        self.apply_stencil(f, &self.d2, 1.0 / (self.h * self.h), parity)
    }

    /// `int_0^pi F dphi` for sampled F.
    pub fn integrate_phi(&self, f: &[f64]) -> f64 {
        self.quad_w.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    pub(crate) fn curvature(&self, s: &RadialSurface) -> Result<CurvatureField, SurfaceError> {
        let k = self.node_count();
        if k < 33 {
            return Err(SurfaceError::InsufficientResolution(format!(
                "curvature on the axisymmetric backend needs >= 33 nodes, got {k}"
            )));
        }
        let rho = &s.rho;
        let n = self.n;
        let nf = n as f64;
        let a_sign = crate::faults::a_sign();

        // Differentiate the radius profile with the grid stencils and chain
        // through the polar embedding exactly. A constant profile then has
        // exactly vanishing derivatives, so discrete spheres sit at the
        // discrete equilibrium to rounding rather than to stencil accuracy.
        let ee = (Parity::Even, Parity::Even);
        let rho_d1 = self.deriv(rho, ee);
        let rho_d2 = self.deriv2(rho, ee);

        let mut metric = vec![[0.0; 3]; k];
        let mut second_form = vec![[0.0; 3]; k];
        let mut lambda = vec![[0.0; 2]; k];
        let mut mean = vec![0.0; k];
        let mut a2 = vec![0.0; k];
        let mut aring2 = vec![0.0; k];
        let mut graph_factor = vec![0.0; k];
        let mut node_area = vec![0.0; k];
        let mut normal_c = vec![[0.0; 4]; k];

        for i in 0..k {
            let (sin_p, cos_p) = self.nodes[i].sin_cos();
            let (sh, ch) = (rho[i].sinh(), rho[i].cosh());
            let (rp, rpp) = (rho_d1[i], rho_d2[i]);
            let x = [ch, sh * cos_p, sh * sin_p];
            let xp = [
                rp * sh,
                rp * ch * cos_p - sh * sin_p,
                rp * ch * sin_p + sh * cos_p,
            ];
            let xpp = [
                rpp * sh + rp * rp * ch,
                rpp * ch * cos_p + rp * rp * sh * cos_p - 2.0 * rp * ch * sin_p - sh * cos_p,
                rpp * ch * sin_p + rp * rp * sh * sin_p + 2.0 * rp * ch * cos_p - sh * sin_p,
            ];
            let g_mer = mdot3(xp, xp);
            if !(g_mer > 0.0) {
                return Err(SurfaceError::DegenerateMetric { node: i });
            }
            let r_rev = sh * sin_p;
            let g_ang = r_rev * r_rev;

            // Outward normal: Lorentz-orthogonal complement of {X, X_phi}
            // in the reduced space, oriented along the radial unit tangent.
            let cross = [
                x[1] * xp[2] - x[2] * xp[1],
                x[2] * xp[0] - x[0] * xp[2],
                x[0] * xp[1] - x[1] * xp[0],
            ];
            let mut nu = [-cross[0], cross[1], cross[2]];
            let nn = mdot3(nu, nu);
            if !(nn > 0.0) {
                return Err(SurfaceError::DegenerateMetric { node: i });
            }
            let inv = 1.0 / nn.sqrt();
            for c in &mut nu {
                *c *= inv;
            }
            let e_rho = [sh, ch * cos_p, ch * sin_p];
            let mut radial = mdot3(nu, e_rho);
            if radial < 0.0 {
                for c in &mut nu {
                    *c = -*c;
                }
                radial = -radial;
            }
            if !(radial > 0.0) {
                return Err(SurfaceError::DegenerateMetric { node: i });
            }

            let a_mer = -mdot3(xpp, nu) * a_sign;
            let l_mer = a_mer / g_mer;
            // Unit-speed angular circles have flat-coordinate acceleration
            // (0, 0, -y); their normal projection gives the angular
            // curvature. The poles are the removable 0/0 limit where the
            // angular curvature equals the meridian one.
            let (l_ang, a_ang) = if i == 0 || i == k - 1 {
                (l_mer, 0.0)
            } else {
                let a_ang = r_rev * nu[2] * a_sign;
                (a_ang / g_ang, a_ang)
            };

            metric[i] = [g_mer, 0.0, g_ang];
            second_form[i] = [a_mer, 0.0, a_ang];
            lambda[i] = [l_mer, l_ang];
            mean[i] = l_mer + (nf - 1.0) * l_ang;
            a2[i] = l_mer * l_mer + (nf - 1.0) * l_ang * l_ang;
            let d = l_mer - l_ang;
            aring2[i] = (nf - 1.0) / nf * d * d;
            graph_factor[i] = 1.0 / radial;
            normal_c[i] = [nu[0], nu[1], nu[2], 0.0];
            // Area element J (sinh rho sin phi)^{n-1} against the phi weights.
            node_area[i] =
                self.omega_nm1 * self.quad_w[i] * g_mer.sqrt() * r_rev.powi(n as i32 - 1);
        }

        let gmer: Vec<f64> = metric.iter().map(|m| m[0]).collect();
        let gmer_d1 = self.deriv(&gmer, ee);
        let aux = AxisymAux {
            rho_d1,
            gmer_d1,
            gmer,
            coth_rho: rho.iter().map(|r| 1.0 / r.tanh()).collect(),
            cot_phi: self
                .nodes
                .iter()
                .map(|p| {
                    let s = p.sin();
                    if s == 0.0 {
                        0.0
                    } else {
                        p.cos() / s
                    }
                })
                .collect(),
            n,
        };

        let mut field = CurvatureField {
            n,
            metric,
            second_form,
            lambda,
            mean,
            a2,
            aring2,
            grad_h2: vec![0.0; k],
            lap_h: vec![0.0; k],
            graph_factor,
            node_area,
            normal_c,
            aux: BackendAux::Axisym(aux),
        };
        let hp = self.deriv_even(&field.mean);
        for i in 0..k {
            field.grad_h2[i] = hp[i] * hp[i] / field.metric[i][0];
        }
        field.lap_h = match &field.aux {
            BackendAux::Axisym(aux) => self.laplacian(&field.mean, aux),
            _ => unreachable!(),
        };
        Ok(field)
    }

    /// Laplace-Beltrami of an even scalar field:
    /// `[f'' + f'((n-1)(rho' coth rho + cot phi) - g'/2g)] / g` away from the
    /// poles, `n f'' / g` at them.
    pub(crate) fn laplacian(&self, f: &[f64], aux: &AxisymAux) -> Vec<f64> {
        let k = self.node_count();
        let ee = (Parity::Even, Parity::Even);
        let f1 = self.deriv(f, ee);
        let f2 = self.deriv2(f, ee);
        let nf = aux.n as f64;
        let mut out = vec![0.0; k];
        for i in 0..k {
            let g = aux.gmer[i];
            if i == 0 || i == k - 1 {
                out[i] = nf * f2[i] / g;
            } else {
                let drift = (nf - 1.0) * (aux.rho_d1[i] * aux.coth_rho[i] + aux.cot_phi[i])
                    - aux.gmer_d1[i] / (2.0 * g);
                out[i] = (f2[i] + f1[i] * drift) / g;
            }
        }
        out
    }

    /// Pointwise `|grad A|^2` from the rotationally symmetric structure of
    /// the covariant derivative: with `e1` the unit meridian direction,
    /// Codazzi symmetry leaves `(e1 lambda_mer)^2 + 3(n-1)(e1 lambda_ang)^2`.
    pub(crate) fn grad_a2(&self, c: &CurvatureField) -> Vec<f64> {
        let l_mer: Vec<f64> = c.lambda.iter().map(|l| l[0]).collect();
        let l_ang: Vec<f64> = c.lambda.iter().map(|l| l[1]).collect();
        let dm = self.deriv_even(&l_mer);
        let da = self.deriv_even(&l_ang);
        let nf = c.n as f64;
        (0..c.node_count())
            .map(|i| (dm[i] * dm[i] + 3.0 * (nf - 1.0) * da[i] * da[i]) / c.metric[i][0])
            .collect()
    }

    pub(crate) fn enclosed_volume(&self, rho: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..rho.len() {
            let inner = sinh_power_integral(n, rho[i]);
            acc += self.quad_w[i] * inner * self.nodes[i].sin().powi(n as i32 - 1);
        }
        self.omega_nm1 * acc
    }

    /// Shortest-path diameter estimate on the 2-dimensional revolution
    /// slice, which is totally geodesic in the surface: nodes `(phi_k,
    /// alpha_m)`, edges to neighbors within a few grid steps weighted by
    /// ambient hyperbolic distance, Dijkstra from a fixed landmark column.
    pub(crate) fn diameter_estimate(&self, s: &RadialSurface) -> Result<f64, SurfaceError> {
        let k = self.node_count();
        let m = 96usize;
        // Embed the slice in a Minkowski R^4 subspace.
        let mut pts = vec![[0.0; 4]; k * m];
        for i in 0..k {
            let (sh, ch) = (s.rho[i].sinh(), s.rho[i].cosh());
            let (sp, cp) = (self.nodes[i].sin(), self.nodes[i].cos());
            for j in 0..m {
                let alpha = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                pts[i * m + j] = [ch, sh * cp, sh * sp * alpha.cos(), sh * sp * alpha.sin()];
            }
        }
        let dist4 = |a: [f64; 4], b: [f64; 4]| -> f64 {
            let c = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
            c.max(1.0).acosh()
        };
        // Direction offsets (coprime, dedup by sign convention).
        let mut offsets = Vec::new();
        for dk in 0isize..=3 {
            for dm in -3isize..=3 {
                if (dk == 0 && dm <= 0) || (dk, dm) == (0, 0) {
                    continue;
                }
                let g = gcd(dk.unsigned_abs(), dm.unsigned_abs());
                if g <= 1 {
                    offsets.push((dk, dm));
                }
            }
        }
        let neighbors = |node: usize| -> Vec<(usize, f64)> {
            let (i, j) = (node / m, node % m);
            let mut out = Vec::with_capacity(2 * offsets.len());
            for &(dk, dm) in &offsets {
                for sgn in [1isize, -1] {
                    let ni = i as isize + sgn * dk;
                    let nj = ((j as isize + sgn * dm).rem_euclid(m as isize)) as usize;
                    if ni < 0 || ni >= k as isize {
                        continue;
                    }
                    let other = ni as usize * m + nj;
                    out.push((other, dist4(pts[node], pts[other])));
                }
            }
            out
        };

        let sources: Vec<usize> = (0..9)
            .map(|q| ((q * (k - 1)) / 8) * m) // landmark column alpha = 0
            .collect();
        let mut diameter = 0.0f64;
        for &src in &sources {
            let dist = dijkstra(k * m, src, &neighbors)?;
            for d in dist {
                diameter = diameter.max(d);
            }
        }
        Ok(diameter)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Plain binary-heap Dijkstra; deterministic because ties resolve by node
/// index through the heap ordering of (cost, node).
pub(crate) fn dijkstra(
    count: usize,
    src: usize,
    neighbors: &dyn Fn(usize) -> Vec<(usize, f64)>,
) -> Result<Vec<f64>, SurfaceError> {
    let mut dist = vec![f64::INFINITY; count];
    dist[src] = 0.0;
    let mut heap: BinaryHeap<(std::cmp::Reverse<ordered::OrdF64>, usize)> = BinaryHeap::new();
    heap.push((std::cmp::Reverse(ordered::OrdF64(0.0)), src));
    while let Some((std::cmp::Reverse(ordered::OrdF64(d)), u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for (v, w) in neighbors(u) {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push((std::cmp::Reverse(ordered::OrdF64(nd)), v));
            }
        }
    }
    if dist.iter().any(|d| !d.is_finite()) {
        return Err(SurfaceError::DisconnectedGraph);
    }
    Ok(dist)
}

mod ordered {
    /// Total order for finite non-negative path costs.
    #[derive(PartialEq, PartialOrd)]
    pub struct OrdF64(pub f64);
    impl Eq for OrdF64 {}
    #[allow(clippy::derive_ord_xor_partial_ord)]
    impl Ord for OrdF64 {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.partial_cmp(other).expect("finite costs")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypgeom::sphere_oracle;
    use crate::special::legendre_p012;
    use crate::surface::{
        curvature_field, diameter_estimate, embed, enclosed_volume, mean_of_h, ParamGrid,
    };
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    pub(crate) fn sphere_surface(r: f64, n: usize, k: usize) -> RadialSurface {
        let grid = AxisymGrid::new(n, k, 4).unwrap();
        RadialSurface::new(Arc::new(ParamGrid::Axisymmetric(grid)), vec![r; k]).unwrap()
    }

    pub(crate) fn legendre_surface(r0: f64, eps: f64, l: usize, n: usize, k: usize) -> RadialSurface {
        let grid = AxisymGrid::new(n, k, 4).unwrap();
        let rho: Vec<f64> = grid
            .nodes
            .iter()
            .map(|phi| r0 + eps * crate::special::legendre_p(l, phi.cos()))
            .collect();
        RadialSurface::new(Arc::new(ParamGrid::Axisymmetric(grid)), rho).unwrap()
    }

    #[test]
    fn quadrature_is_order_six_and_exact_on_quintics() {
        let g = AxisymGrid::new(2, 65, 4).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|p| p.powi(5)).collect();
        assert_relative_eq!(g.integrate_phi(&f), PI.powi(6) / 6.0, max_relative = 1e-13);
        // sin integrates to 2 with error ~ h^6.
        let mut errs = Vec::new();
        for k in [17usize, 33, 65] {
            let g = AxisymGrid::new(2, k, 4).unwrap();
            let f: Vec<f64> = g.nodes.iter().map(|p| p.sin()).collect();
            errs.push((g.integrate_phi(&f) - 2.0).abs());
        }
        let slope1 = (errs[0] / errs[1]).log2();
        let slope2 = (errs[1] / errs[2]).log2();
        assert!(slope1 > 5.5 && slope2 > 5.5, "slopes {slope1} {slope2}");
    }

    #[test]
    fn derivatives_match_analytic_profiles() {
        let g = AxisymGrid::new(2, 129, 4).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|p| (2.0 * p).cos()).collect();
        let d1 = g.deriv_even(&f);
        let d2 = g.deriv2(&f, (Parity::Even, Parity::Even));
        for (i, p) in g.nodes.iter().enumerate() {
            assert_relative_eq!(d1[i], -2.0 * (2.0 * p).sin(), epsilon = 1e-6);
            assert_relative_eq!(d2[i], -4.0 * (2.0 * p).cos(), epsilon = 1e-4);
        }
        // Odd-parity reflection: y = sin(phi) type fields.
        let f: Vec<f64> = g.nodes.iter().map(|p| p.sin()).collect();
        let d1 = g.deriv(&f, (Parity::Odd, Parity::Odd));
        for (i, p) in g.nodes.iter().enumerate() {
            assert_relative_eq!(d1[i], p.cos(), epsilon = 1e-7);
        }
    }

    #[test]
    fn sphere_curvature_matches_oracle() {
        for (r, n) in [(0.5, 2), (1.0, 2), (2.0, 2), (0.5, 3), (1.0, 3), (2.0, 3)] {
            let s = sphere_surface(r, n, 129);
            let c = curvature_field(&s).unwrap();
            let oracle = sphere_oracle(r, n).unwrap();
            for i in 0..s.node_count() {
                assert_relative_eq!(c.mean[i], oracle.mean_curvature, max_relative = 1e-9);
                assert_relative_eq!(c.lambda[i][0], oracle.principal_curvature, max_relative = 1e-9);
                assert_relative_eq!(c.lambda[i][1], oracle.principal_curvature, max_relative = 1e-9);
                assert!(c.aring2[i].sqrt() <= 1e-10);
                assert_relative_eq!(c.graph_factor[i], 1.0, epsilon = 1e-10);
            }
            assert_relative_eq!(c.area(), oracle.area, max_relative = 1e-9);
            assert_relative_eq!(
                enclosed_volume(&s).unwrap(),
                oracle.enclosed_volume,
                max_relative = 1e-9
            );
            assert_relative_eq!(mean_of_h(&c), oracle.mean_curvature, max_relative = 1e-9);
            assert!(c.grad_h2.iter().all(|&x| x.sqrt() <= 1e-8));
            assert!(c.lap_h.iter().all(|&x| x.abs() <= 1e-7));
        }
    }

    #[test]
    fn specific_sphere_reference_values() {
        // Closed forms at full precision, rounded decimals at theirs.
        let s = sphere_surface(1.0, 2, 129);
        let c = curvature_field(&s).unwrap();
        assert_relative_eq!(c.mean[64], 2.0 / 1.0f64.tanh(), max_relative = 1e-12);
        assert_relative_eq!(c.mean[64], 2.626068, max_relative = 1e-5);
        assert_relative_eq!(c.area(), 4.0 * PI * 1.0f64.sinh().powi(2), max_relative = 1e-10);
        assert_relative_eq!(c.area(), 17.3554, max_relative = 1e-4);
        assert_relative_eq!(
            enclosed_volume(&s).unwrap(),
            PI * (2.0f64.sinh() - 2.0),
            max_relative = 1e-10
        );
        assert_relative_eq!(enclosed_volume(&s).unwrap(), 5.111, max_relative = 1e-3);
        let s = sphere_surface(2.0, 3, 129);
        let c = curvature_field(&s).unwrap();
        assert_relative_eq!(c.mean[10], 3.0 / 2.0f64.tanh(), max_relative = 1e-12);
        assert_relative_eq!(c.mean[10], 3.1119, max_relative = 1e-4);
    }

    /// Independent analytic oracle: for rho = r0 + eps P_l(cos phi) the
    /// derivatives are available in closed form and the principal curvatures
    /// reduce to
    ///   lambda_mer = [cosh (2 rho'^2 + sinh^2) - rho'' sinh] / J^3,
    ///   lambda_ang = [cosh - rho' cot(phi) / sinh] / J,  J^2 = rho'^2 + sinh^2.
    fn analytic_lambdas(r0: f64, eps: f64, l: usize, phi: f64) -> (f64, f64) {
        let x = phi.cos();
        let (p, dp, d2p) = legendre_p012(l, x);
        let rho = r0 + eps * p;
        let rho_p = -phi.sin() * eps * dp;
        let rho_pp = -phi.cos() * eps * dp + phi.sin().powi(2) * eps * d2p;
        let (sh, ch) = (rho.sinh(), rho.cosh());
        let j2 = rho_p * rho_p + sh * sh;
        let j = j2.sqrt();
        let l_mer = (ch * (2.0 * rho_p * rho_p + sh * sh) - rho_pp * sh) / (j2 * j);
        let l_ang = if phi == 0.0 || phi == PI {
            l_mer
        } else {
            (ch - rho_p * (phi.cos() / phi.sin()) / sh) / j
        };
        (l_mer, l_ang)
    }

    #[test]
    fn perturbed_curvature_matches_analytic_oracle() {
        let (r0, eps, l, n) = (1.0, 0.05, 3, 2);
        let s = legendre_surface(r0, eps, l, n, 513);
        let c = curvature_field(&s).unwrap();
        let grid = match &*s.grid {
            ParamGrid::Axisymmetric(g) => g,
            _ => unreachable!(),
        };
        for (i, &phi) in grid.nodes.iter().enumerate() {
            let (lm, la) = analytic_lambdas(r0, eps, l, phi);
            assert_relative_eq!(c.lambda[i][0], lm, max_relative = 1e-8);
            assert_relative_eq!(c.lambda[i][1], la, max_relative = 1e-8);
        }
    }

    #[test]
    fn curvature_converges_at_stencil_order() {
        // Fourth-order stencils: the max principal-curvature error against
        // the analytic oracle drops ~ h^4 under refinement.
        let (r0, eps, l, n) = (1.0, 0.05, 4, 2);
        let mut errs = Vec::new();
        for k in [33usize, 65, 129] {
            let s = legendre_surface(r0, eps, l, n, k);
            let c = curvature_field(&s).unwrap();
            let grid = match &*s.grid {
                ParamGrid::Axisymmetric(g) => g,
                _ => unreachable!(),
            };
            let mut err = 0.0f64;
            for (i, &phi) in grid.nodes.iter().enumerate() {
                let (lm, la) = analytic_lambdas(r0, eps, l, phi);
                err = err.max((c.lambda[i][0] - lm).abs()).max((c.lambda[i][1] - la).abs());
            }
            errs.push(err);
        }
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!(s1 > 3.7 && s2 > 3.7, "measured orders {s1} {s2}");
        // Design-order check: slopes within 0.3 of nominal order 4 (the
        // second level is the cleaner asymptotic measurement).
        assert!((s2 - 4.0).abs() < 0.3, "slope {s2}");
    }

    #[test]
    fn area_and_volume_converge_at_design_order() {
        // Quadrature design order 6 on the sphere family.
        let mut area_errs = Vec::new();
        let mut vol_errs = Vec::new();
        let oracle = sphere_oracle(1.0, 2).unwrap();
        for k in [17usize, 33, 65] {
            let s = sphere_surface(1.0, 2, k);
            let g = match &*s.grid {
                ParamGrid::Axisymmetric(g) => g,
                _ => unreachable!(),
            };
            // Use the raw quadrature directly so the check isolates the
            // integration rule (curvature needs k >= 33).
            let f: Vec<f64> = g
                .nodes
                .iter()
                .map(|p| 1.0f64.sinh() * (1.0f64.sinh() * p.sin()))
                .collect();
            let area = 2.0 * PI * g.integrate_phi(&f);
            area_errs.push((area - oracle.area).abs() / oracle.area);
            let vol = g.enclosed_volume(&s.rho);
            vol_errs.push((vol - oracle.enclosed_volume).abs() / oracle.enclosed_volume);
        }
        for errs in [&area_errs, &vol_errs] {
            let s1 = (errs[0] / errs[1]).log2();
            let s2 = (errs[1] / errs[2]).log2();
            assert!((s1 - 6.0).abs() < 0.6 || s1 > 6.0, "slope {s1}");
            assert!((s2 - 6.0).abs() < 0.3 || s2 > 6.0, "slope {s2}");
        }
    }

    #[test]
    fn embedding_stays_on_the_sheet() {
        let s = legendre_surface(1.0, 0.1, 2, 3, 65);
        for p in embed(&s).unwrap() {
            let sq = crate::hypgeom::minkowski_dot(p.vec(), p.vec()).unwrap();
            assert_relative_eq!(sq, -1.0, epsilon = 1e-12);
            assert!(p.vec().0[0] >= 1.0);
        }
    }

    #[test]
    fn sphere_diameter_close_to_great_circle_length() {
        for r in [0.5, 1.0] {
            let s = sphere_surface(r, 2, 129);
            let d = diameter_estimate(&s).unwrap();
            let exact = PI * r.sinh();
            assert!(
                (d - exact).abs() / exact < 0.02,
                "r={r}: estimate {d} vs {exact}"
            );
        }
    }

    #[test]
    fn diameter_refinement_improves_on_spheres() {
        let exact = PI * 1.0f64.sinh();
        let mut errs = Vec::new();
        for k in [33usize, 65, 129] {
            let s = sphere_surface(1.0, 2, k);
            errs.push((diameter_estimate(&s).unwrap() - exact).abs());
        }
        assert!(errs[2] <= errs[1] + 1e-12 && errs[1] <= errs[0] + 1e-12, "{errs:?}");
    }

    #[test]
    fn grad_inequalities_hold_on_perturbed_surfaces() {
        let s = legendre_surface(1.0, 0.05, 3, 2, 129);
        let c = curvature_field(&s).unwrap();
        let gn = crate::surface::grad_norms(&s, &c).unwrap();
        let ga2 = gn.grad_a2.unwrap();
        let nf = s.n as f64;
        for i in 0..s.node_count() {
            assert!(
                ga2[i] >= 3.0 / (nf + 2.0) * c.grad_h2[i] - 1e-8,
                "node {i}: |grad A|^2 = {}, |grad H|^2 = {}",
                ga2[i],
                c.grad_h2[i]
            );
            // The traceless version, |grad Aring|^2 = |grad A|^2 - |grad H|^2 / n.
            let gra = ga2[i] - c.grad_h2[i] / nf;
            assert!(gra >= (nf - 1.0) / (2.0 * nf + 1.0) * ga2[i] - 1e-8);
        }
        assert!(gn.int_grad_a2.unwrap() >= 0.0);
    }

    #[test]
    fn max_grad_h_scales_linearly_in_eps() {
        let mut vals = Vec::new();
        for eps in [0.005, 0.01, 0.02] {
            let s = legendre_surface(1.0, eps, 2, 2, 129);
            let c = curvature_field(&s).unwrap();
            vals.push(crate::surface::grad_norms(&s, &c).unwrap().max_grad_h);
        }
        let r1 = vals[1] / vals[0];
        let r2 = vals[2] / vals[1];
        assert!((r1 - 2.0).abs() < 0.05, "ratio {r1}");
        assert!((r2 - 2.0).abs() < 0.05, "ratio {r2}");
    }

    #[test]
    fn principal_curvature_identities() {
        let s = legendre_surface(1.0, 0.08, 3, 3, 129);
        let c = curvature_field(&s).unwrap();
        let nf = s.n as f64;
        for i in 0..s.node_count() {
            let lambdas = crate::surface::principal_curvatures(&c, i);
            let sum: f64 = lambdas.iter().sum();
            assert_relative_eq!(sum, c.mean[i], epsilon = 1e-9);
            let mut pairs = 0.0;
            for a in 0..lambdas.len() {
                for b in (a + 1)..lambdas.len() {
                    pairs += (lambdas[a] - lambdas[b]).powi(2);
                }
            }
            assert_relative_eq!(pairs / nf, c.aring2[i], epsilon = 1e-9);
            assert_relative_eq!(c.aring2[i], c.a2[i] - c.mean[i] * c.mean[i] / nf, epsilon = 1e-10);
            assert!(c.aring2[i] >= -1e-12);
        }
    }

    #[test]
    fn volume_of_perturbed_sphere_is_second_order_in_eps() {
        // The l = 2 mode changes volume only at O(eps^2): log-log slope ~ 2.
        let v0 = enclosed_volume(&sphere_surface(1.0, 2, 129)).unwrap();
        let mut diffs = Vec::new();
        let epsilons = [0.005, 0.01, 0.02, 0.04];
        for &eps in &epsilons {
            let s = legendre_surface(1.0, eps, 2, 2, 129);
            diffs.push((enclosed_volume(&s).unwrap() - v0).abs());
        }
        for w in 0..diffs.len() - 1 {
            let slope = (diffs[w + 1] / diffs[w]).log2();
            assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
        }
        // Monotone in r for round spheres.
        let v1 = enclosed_volume(&sphere_surface(1.1, 2, 129)).unwrap();
        assert!(v1 > v0);
    }
}
