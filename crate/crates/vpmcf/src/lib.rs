//! Volume-preserving mean curvature flow (VPMCF) of closed hypersurfaces in
//! hyperbolic space, at desk scale.
//!
//! A closed hypersurface `M` in H^{n+1} evolves by `dF/dt = (h - H) nu`,
//! where `H` is the mean curvature (sum of principal curvatures), `nu` the
//! outward unit normal, and `h` the area average of `H` over the evolving
//! surface. The enclosed volume is an exact invariant of the continuum flow,
//! the surface area is non-increasing, and near a geodesic sphere the
//! traceless second fundamental form decays exponentially until the surface
//! converges to an umbilical sphere enclosing the same volume.
//!
//! The crate discretizes star-shaped surfaces as radial graphs over S^n
//! ([`surface`]), integrates the nonlocal flow with stability-limited
//! explicit stepping and optional discrete volume renormalization ([`flow`]),
//! and turns the conservation laws, evolution equations and convexity
//! statements above into measurable residuals and monitors ([`diagnostics`]).
//! [`scenarios`] generates initial data; [`chart`] renders SVG time-series
//! plots for the batch runner and the browser demo.

pub mod chart;
pub mod diagnostics;
pub mod faults;
pub mod flow;
pub mod hypgeom;
pub mod scenarios;
pub mod special;
pub mod surface;
