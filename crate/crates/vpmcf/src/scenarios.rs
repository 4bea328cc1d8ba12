//! Initial-condition generators and initial-data validators.
//!
//! Initial surfaces are radial perturbations of a geodesic sphere: exact
//! spheres, zonal Legendre modes `rho = r0 + sum eps_l P_l(cos phi)`, or a
//! seeded band-limited random superposition of such modes. Degrees below 2
//! are excluded by default: the l = 0 mode changes the enclosed volume and
//! l = 1 is a translation at linear order, so neither probes shape
//! stability. Reports of the initial data quantify how far a surface sits
//! from the stability hypotheses (smallness of `int |Aring|^2`, h-mean
//! convexity margin, curvature bounds).

use crate::diagnostics::{self, DecayFit, DecayQuantity};
use crate::flow::{self, FlowConfig, FlowError, Outcome};
use crate::special::legendre_p;
use crate::surface::{
    self, AxisymGrid, ParamGrid, RadialSurface, SurfaceError, TriMeshGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid initial condition: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Grid parameters of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Axisym {
        k: usize,
        #[serde(default = "default_stencil_order")]
        stencil_order: usize,
    },
    Trimesh { level: usize },
}

fn default_stencil_order() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Sphere,
    /// `rho = r0 + sum eps_l P_l(cos phi)` over the listed `(l, eps_l)`.
    LegendreModes,
    /// Seeded coefficients on degrees `2..=lmax`, scaled so the amplitudes
    /// sum to `total_amplitude` in absolute value.
    RandomBandlimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditionSpec {
    pub kind: InitialKind,
    pub r0: f64,
    #[serde(default = "default_dim")]
    pub n: usize,
    /// Legendre modes as `(degree, amplitude)` pairs.
    #[serde(default)]
    pub modes: Vec<(usize, f64)>,
    #[serde(default)]
    pub lmax: usize,
    #[serde(default)]
    pub total_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    /// Admit l < 2 modes for exploratory runs.
    #[serde(default)]
    pub allow_low_modes: bool,
}

fn default_dim() -> usize {
    2
}

impl InitialConditionSpec {
    pub fn sphere(r0: f64, n: usize, grid: GridSpec) -> Self {
        InitialConditionSpec {
            kind: InitialKind::Sphere,
            r0,
            n,
            modes: Vec::new(),
            lmax: 0,
            total_amplitude: 0.0,
            seed: 0,
            grid,
            allow_low_modes: false,
        }
    }

    pub fn legendre(r0: f64, n: usize, modes: Vec<(usize, f64)>, grid: GridSpec) -> Self {
        InitialConditionSpec {
            kind: InitialKind::LegendreModes,
            modes,
            ..InitialConditionSpec::sphere(r0, n, grid)
        }
    }

    /// Named stress preset: a deliberately large l = 2 + l = 4 perturbation
    /// probing possible loss of h-mean convexity. No outcome is asserted
    /// for it anywhere; it exists for exploration.
    pub fn stress_large(r0: f64, grid: GridSpec) -> Self {
        InitialConditionSpec::legendre(r0, 2, vec![(2, 0.25), (4, 0.12)], grid)
    }

    fn resolved_modes(&self) -> Result<Vec<(usize, f64)>, ScenarioError> {
        match self.kind {
            InitialKind::Sphere => Ok(Vec::new()),
            InitialKind::LegendreModes => {
                if self.modes.is_empty() {
                    return Err(ScenarioError::InvalidSpec(
                        "legendre_modes needs at least one (degree, amplitude) pair".into(),
                    ));
                }
                Ok(self.modes.clone())
            }
            InitialKind::RandomBandlimited => {
                if self.lmax < 2 {
                    return Err(ScenarioError::InvalidSpec(format!(
                        "random_bandlimited needs lmax >= 2, got {}",
                        self.lmax
                    )));
                }
                if !(self.total_amplitude > 0.0) {
                    return Err(ScenarioError::InvalidSpec(
                        "random_bandlimited needs a positive total_amplitude".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let raw: Vec<f64> = (2..=self.lmax)
                    .map(|_| 2.0 * rng.random::<f64>() - 1.0)
                    .collect();
                let norm: f64 = raw.iter().map(|c| c.abs()).sum();
                Ok(raw
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (i + 2, c / norm * self.total_amplitude))
                    .collect())
            }
        }
    }

    fn validate(&self, modes: &[(usize, f64)]) -> Result<(), ScenarioError> {
        if !(self.r0 > 0.0) {
            return Err(ScenarioError::InvalidSpec(format!(
                "r0 must be positive, got {}",
                self.r0
            )));
        }
        if self.n < 2 {
            return Err(ScenarioError::InvalidSpec(format!(
                "surface dimension n must be >= 2, got {}",
                self.n
            )));
        }
        if matches!(self.grid, GridSpec::Trimesh { .. }) && self.n != 2 {
            return Err(ScenarioError::InvalidSpec(
                "the triangle-mesh backend supports n = 2 only".into(),
            ));
        }
        if !self.allow_low_modes {
            for &(l, _) in modes {
                if l < 2 {
                    return Err(ScenarioError::InvalidSpec(format!(
                        "mode degree {l} < 2 changes volume or translates; \
                         set allow_low_modes for exploratory runs"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Build the initial surface. Deterministic given the spec (including the
/// seed); fails if the superposition loses positivity anywhere.
pub fn make_initial(spec: &InitialConditionSpec) -> Result<RadialSurface, ScenarioError> {
    let modes = spec.resolved_modes()?;
    spec.validate(&modes)?;
    let profile = |x: f64| -> f64 {
        // x = cos(polar angle) relative to the zonal axis.
        let mut rho = spec.r0;
        for &(l, eps) in &modes {
            rho += eps * legendre_p(l, x);
        }
        rho
    };
    let (grid, rho) = match spec.grid {
        GridSpec::Axisym { k, stencil_order } => {
            let grid = AxisymGrid::new(spec.n, k, stencil_order)?;
            let rho: Vec<f64> = grid.nodes.iter().map(|phi| profile(phi.cos())).collect();
            (ParamGrid::Axisymmetric(grid), rho)
        }
        GridSpec::Trimesh { level } => {
            let grid = TriMeshGrid::new(level)?;
            // Zonal axis is the first coordinate, matching the axisymmetric
            // backend's polar axis.
            let rho: Vec<f64> = grid.vertices.iter().map(|th| profile(th[0])).collect();
            (ParamGrid::TriMesh(grid), rho)
        }
    };
    for (node, &r) in rho.iter().enumerate() {
        if !(r > 0.0) {
            return Err(ScenarioError::InvalidSpec(format!(
                "superposed modes drive rho[{node}] to {r} <= 0"
            )));
        }
    }
    Ok(RadialSurface::new(Arc::new(grid), rho)?)
}

/// How far the initial data sits from the stability hypotheses.
#[derive(Debug, Clone, Serialize)]
pub struct InitialReport {
    /// int |Aring|^2 dmu, the smallness quantity.
    pub int_aring2: f64,
    /// min(H - n), the h-mean-convexity margin c0.
    pub min_h_minus_n: f64,
    pub area: f64,
    pub max_a2: f64,
    pub h_mean_convex: bool,
    pub h_convex: bool,
}

pub fn initial_report(s: &RadialSurface) -> Result<InitialReport, ScenarioError> {
    let c = surface::curvature_field(s)?;
    let nf = s.n as f64;
    let min_h = c.min_mean();
    let min_lambda = c.min_lambda();
    Ok(InitialReport {
        int_aring2: c.integrate(&c.aring2),
        min_h_minus_n: min_h - nf,
        area: c.area(),
        max_a2: c.max_a2(),
        h_mean_convex: min_h > nf,
        h_convex: min_lambda > 1.0,
    })
}

/// One row of an amplitude sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub int_aring2_initial: f64,
    pub outcome: Outcome,
    pub decay: Option<DecayFit>,
    pub convexity_preserved: bool,
}

/// Rescale the spec's perturbation so the absolute amplitudes sum to
/// `epsilon` (for a single Legendre mode this sets its amplitude).
pub fn with_amplitude(
    template: &InitialConditionSpec,
    epsilon: f64,
) -> Result<InitialConditionSpec, ScenarioError> {
    let mut spec = template.clone();
    match spec.kind {
        InitialKind::Sphere => {
            return Err(ScenarioError::InvalidSpec(
                "amplitude sweeps need a perturbed initial kind".into(),
            ))
        }
        InitialKind::LegendreModes => {
            let total: f64 = spec.modes.iter().map(|(_, e)| e.abs()).sum();
            if !(total > 0.0) {
                return Err(ScenarioError::InvalidSpec(
                    "template modes have zero total amplitude".into(),
                ));
            }
            for (_, e) in &mut spec.modes {
                *e *= epsilon / total;
            }
        }
        InitialKind::RandomBandlimited => spec.total_amplitude = epsilon,
    }
    Ok(spec)
}

/// Run the flow once per amplitude and tabulate the outcomes; members run
/// independently and the table preserves the input order. A member whose
/// flow aborts records its outcome rather than failing the sweep.
pub fn epsilon_sweep(
    template: &InitialConditionSpec,
    epsilons: &[f64],
    cfg: &FlowConfig,
) -> Result<Vec<SweepRow>, ScenarioError> {
    let member = |&eps: &f64| -> Result<SweepRow, ScenarioError> {
        let spec = with_amplitude(template, eps)?;
        let initial = make_initial(&spec)?;
        let report = initial_report(&initial)?;
        let c0 = report.min_h_minus_n;
        let result = flow::run(initial, cfg)?;
        let initial_aring = result.records[0].max_aring;
        let decay = diagnostics::value_window(
            &result.records,
            DecayQuantity::MaxAring,
            10.0 * cfg.conv_tol_aring,
            initial_aring / 2.0,
        )
        .and_then(|w| diagnostics::decay_fit(&result.records, DecayQuantity::MaxAring, w).ok());
        let convexity = diagnostics::convexity_monitor(&result.records, c0);
        Ok(SweepRow {
            epsilon: eps,
            int_aring2_initial: report.int_aring2,
            outcome: result.outcome,
            decay,
            convexity_preserved: convexity.preserved,
        })
    };
    #[cfg(feature = "parallel")]
    let rows: Result<Vec<SweepRow>, ScenarioError> = epsilons.par_iter().map(member).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<SweepRow>, ScenarioError> = epsilons.iter().map(member).collect();
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn axisym(k: usize) -> GridSpec {
        GridSpec::Axisym {
            k,
            stencil_order: 4,
        }
    }

    #[test]
    fn sphere_initial_data_is_umbilical() {
        let spec = InitialConditionSpec::sphere(1.0, 2, axisym(129));
        let s = make_initial(&spec).unwrap();
        let report = initial_report(&s).unwrap();
        assert!(report.int_aring2 <= 1e-10);
        assert_relative_eq!(
            report.min_h_minus_n,
            2.0 / 1.0f64.tanh() - 2.0,
            max_relative = 1e-9
        );
        assert_relative_eq!(report.min_h_minus_n, 0.626068, max_relative = 1e-5);
        assert!(report.h_mean_convex && report.h_convex);
    }

    #[test]
    fn tiny_spheres_remain_h_convex() {
        let spec = InitialConditionSpec::sphere(0.1, 2, axisym(65));
        let report = initial_report(&make_initial(&spec).unwrap()).unwrap();
        // coth(0.1) ~ 10.03 > 1.
        assert!(report.h_convex);
        assert!(report.min_h_minus_n > 2.0 * (1.0 / 0.1f64.tanh()) - 2.0 - 1e-3);
    }

    #[test]
    fn legendre_amplitude_scaling_is_quadratic_in_the_functional() {
        let mut vals = Vec::new();
        for eps in [0.005, 0.01, 0.02] {
            let spec = InitialConditionSpec::legendre(1.0, 2, vec![(2, eps)], axisym(129));
            let report = initial_report(&make_initial(&spec).unwrap()).unwrap();
            assert!(report.int_aring2 > 0.0);
            vals.push(report.int_aring2);
        }
        assert!(((vals[1] / vals[0]).log2() - 2.0).abs() < 0.05);
        assert!(((vals[2] / vals[1]).log2() - 2.0).abs() < 0.05);
    }

    #[test]
    fn seeded_generators_reproduce_bitwise() {
        let spec = InitialConditionSpec {
            kind: InitialKind::RandomBandlimited,
            lmax: 8,
            total_amplitude: 0.05,
            seed: 42,
            ..InitialConditionSpec::sphere(1.0, 2, axisym(65))
        };
        let a = make_initial(&spec).unwrap();
        let b = make_initial(&spec).unwrap();
        assert!(a
            .rho
            .iter()
            .zip(&b.rho)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let other_seed = InitialConditionSpec { seed: 43, ..spec };
        let c = make_initial(&other_seed).unwrap();
        assert!(a.rho.iter().zip(&c.rho).any(|(x, y)| x != y));
    }

    #[test]
    fn low_modes_rejected_without_override() {
        let spec = InitialConditionSpec::legendre(1.0, 2, vec![(1, 0.01)], axisym(65));
        assert!(matches!(
            make_initial(&spec),
            Err(ScenarioError::InvalidSpec(_))
        ));
        let spec = InitialConditionSpec {
            allow_low_modes: true,
            ..spec
        };
        make_initial(&spec).unwrap();
    }

    #[test]
    fn positivity_guard_fires_for_huge_amplitudes() {
        let spec = InitialConditionSpec::legendre(0.3, 2, vec![(2, 0.9)], axisym(65));
        assert!(matches!(
            make_initial(&spec),
            Err(ScenarioError::InvalidSpec(_))
        ));
    }

    #[test]
    fn h_mean_convex_but_not_h_convex_exists() {
        // Increase a single mode amplitude until the h-convexity flag
        // flips, then bisect onto the threshold: the weaker h-mean
        // convexity must survive there.
        let build = |eps: f64| {
            let spec = InitialConditionSpec::legendre(1.0, 2, vec![(3, eps)], axisym(129));
            initial_report(&make_initial(&spec).unwrap()).unwrap()
        };
        let mut lo = 0.01;
        let mut hi = lo;
        while build(hi).h_convex {
            hi *= 1.5;
            assert!(hi < 1.0, "no h-convexity loss found in the bracket");
        }
        for _ in 0..25 {
            let mid = 0.5 * (lo + hi);
            if build(mid).h_convex {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let report = build(hi);
        assert!(!report.h_convex);
        assert!(
            report.h_mean_convex,
            "expected h-mean convexity to outlive h-convexity (margin {})",
            report.min_h_minus_n
        );
    }

    #[test]
    fn cross_backend_zonal_curvature_agreement() {
        // The trimesh sampling of a zonal mode must reproduce the
        // axisymmetric backend's curvature profile within the cross-backend
        // tolerance at L = 5 / K = 129.
        let eps = 0.01;
        let tri_spec = InitialConditionSpec::legendre(
            1.0,
            2,
            vec![(2, eps)],
            GridSpec::Trimesh { level: 5 },
        );
        let axi_spec = InitialConditionSpec::legendre(1.0, 2, vec![(2, eps)], axisym(129));
        let tri = make_initial(&tri_spec).unwrap();
        let axi = make_initial(&axi_spec).unwrap();
        let ct = surface::curvature_field(&tri).unwrap();
        let ca = surface::curvature_field(&axi).unwrap();
        let grid = match &*axi.grid {
            ParamGrid::Axisymmetric(g) => g,
            _ => unreachable!(),
        };
        let tri_grid = match &*tri.grid {
            ParamGrid::TriMesh(g) => g,
            _ => unreachable!(),
        };
        // Interpolate the axisymmetric H profile at each vertex's polar
        // angle (the profile is smooth; linear interpolation at K = 129 is
        // far below the comparison tolerance).
        let h_at = |phi: f64| -> f64 {
            let x = phi / grid.h;
            let i = (x.floor() as usize).min(grid.node_count() - 2);
            let w = x - i as f64;
            ca.mean[i] * (1.0 - w) + ca.mean[i + 1] * w
        };
        let h_scale = ca.mean.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let mut worst = 0.0f64;
        for (v, th) in tri_grid.vertices.iter().enumerate() {
            let phi = th[0].clamp(-1.0, 1.0).acos();
            worst = worst.max((ct.mean[v] - h_at(phi)).abs() / h_scale);
        }
        assert!(worst <= 1e-3, "cross-backend H mismatch {worst}");
        // Graph factor agreement too.
        let v_at = |phi: f64| -> f64 {
            let x = phi / grid.h;
            let i = (x.floor() as usize).min(grid.node_count() - 2);
            let w = x - i as f64;
            ca.graph_factor[i] * (1.0 - w) + ca.graph_factor[i + 1] * w
        };
        let mut worst_v = 0.0f64;
        for (v, th) in tri_grid.vertices.iter().enumerate() {
            let phi = th[0].clamp(-1.0, 1.0).acos();
            worst_v = worst_v.max((ct.graph_factor[v] - v_at(phi)).abs());
        }
        assert!(worst_v <= 1e-3, "cross-backend v mismatch {worst_v}");
    }

    #[test]
    fn sweep_runs_members_in_order() {
        let cfg = FlowConfig {
            t_max: 0.05,
            conv_tol_aring: 1e-9,
            record_every: 5,
            ..FlowConfig::default()
        };
        let template = InitialConditionSpec::legendre(1.0, 2, vec![(2, 1.0)], axisym(65));
        let rows = epsilon_sweep(&template, &[0.002, 0.005, 0.01], &cfg).unwrap();
        assert_eq!(rows.len(), 3);
        for (row, eps) in rows.iter().zip([0.002, 0.005, 0.01]) {
            assert_eq!(row.epsilon, eps);
            assert_eq!(row.outcome, Outcome::TMaxReached);
            assert!(row.convexity_preserved);
        }
        // Quadratic growth of the initial functional across members.
        assert!(rows[1].int_aring2_initial > rows[0].int_aring2_initial);
        assert!(rows[2].int_aring2_initial > rows[1].int_aring2_initial);
        // epsilon = 0 degenerates to the sphere, which converges at t = 0.
        let sphere_rows = epsilon_sweep(&template, &[0.0], &cfg).unwrap();
        assert_eq!(sphere_rows[0].outcome, Outcome::Converged);
    }
}
