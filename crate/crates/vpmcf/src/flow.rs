//! Time integration of the volume-preserving mean curvature flow on a
//! radial surface.
//!
//! The normal law `dF/dt = (h - H) nu` moves a radial graph at
//! `drho/dt = (h - H) v` with `v` the graph factor; the nonlocal average
//! `h` is re-evaluated at every integrator stage. Explicit stepping under a
//! parabolic CFL limit is enough at desk scale. The continuum flow
//! conserves the enclosed volume exactly; the discrete flow conserves the
//! discrete volume up to time-integration error, and an optional
//! renormalization projects it back after every step through a uniform
//! normal offset.

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::hypgeom::{self, GeomError, HPoint, LorentzVec};
use crate::surface::{self, CurvatureField, RadialSurface, SurfaceError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    ExplicitEuler,
    Rk4,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub integrator: Integrator,
    pub cfl_coefficient: f64,
    pub t_max: f64,
    pub renormalize_volume: bool,
    /// Convergence threshold on max |Aring|.
    pub conv_tol_aring: f64,
    /// Abort threshold on max |A|^2.
    pub blowup_cap_a2: f64,
    pub min_rho: f64,
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            integrator: Integrator::Rk4,
            cfl_coefficient: 0.2,
            t_max: 1.0,
            renormalize_volume: true,
            conv_tol_aring: 1e-7,
            blowup_cap_a2: 1e4,
            min_rho: 1e-3,
            record_every: 20,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let positives = [
            ("cfl_coefficient", self.cfl_coefficient),
            ("t_max", self.t_max),
            ("conv_tol_aring", self.conv_tol_aring),
            ("blowup_cap_a2", self.blowup_cap_a2),
            ("min_rho", self.min_rho),
        ];
        for (name, value) in positives {
            if !(value > 0.0) || !value.is_finite() {
                return Err(FlowError::Config(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.record_every == 0 {
            return Err(FlowError::Config("record_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Diag(#[from] crate::diagnostics::DiagError),
    #[error("invalid flow configuration: {0}")]
    Config(String),
    #[error("curvature blowup at t = {t}: max |A|^2 = {max_a2}")]
    Blowup { t: f64, max_a2: f64 },
    #[error("mesh degeneration at t = {t}: {cause}")]
    MeshDegenerate { t: f64, cause: String },
    #[error("volume renormalization did not converge in {0} iterations")]
    RenormNonConvergence(usize),
    #[error("sphere fit did not converge in {0} iterations")]
    FitNonConvergence(usize),
}

/// One instant of the flow: the surface with its consistent curvature data,
/// the nonlocal average, and the conserved volume target recorded at t = 0.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub surface: RadialSurface,
    pub curvature: CurvatureField,
    /// Area average of the mean curvature at this instant.
    pub h: f64,
    pub step_index: u64,
    /// Enclosed volume at t = 0, the conservation target.
    pub v0: f64,
}

impl FlowState {
    pub fn initial(surface: RadialSurface) -> Result<Self, FlowError> {
        let v0 = surface::enclosed_volume(&surface)?;
        FlowState::rebuild(surface, 0.0, 0, v0, f64::INFINITY)
    }

    /// Recompute curvature and the nonlocal term for a new radius field,
    /// guarding against curvature blowup.
    fn rebuild(
        surface: RadialSurface,
        t: f64,
        step_index: u64,
        v0: f64,
        blowup_cap_a2: f64,
    ) -> Result<Self, FlowError> {
        let curvature = surface::curvature_field(&surface).map_err(|e| match e {
            SurfaceError::DegenerateMetric { node } => FlowError::MeshDegenerate {
                t,
                cause: format!("degenerate induced metric at node {node}"),
            },
            SurfaceError::NonStarShaped { node, rho } => FlowError::MeshDegenerate {
                t,
                cause: format!("lost star-shapedness at node {node} (rho = {rho})"),
            },
            other => FlowError::Surface(other),
        })?;
        let max_a2 = curvature.max_a2();
        if !(max_a2 <= blowup_cap_a2) {
            return Err(FlowError::Blowup { t, max_a2 });
        }
        let h = surface::mean_of_h(&curvature);
        Ok(FlowState {
            t,
            surface,
            curvature,
            h,
            step_index,
            v0,
        })
    }

    pub fn enclosed_volume(&self) -> Result<f64, FlowError> {
        Ok(surface::enclosed_volume(&self.surface)?)
    }
}

/// Radial rate `drho/dt = (h - H) v` per node; zero on geodesic spheres,
/// negative where `H` exceeds its average.
pub fn velocity(state: &FlowState) -> Vec<f64> {
    state
        .curvature
        .mean
        .iter()
        .zip(&state.curvature.graph_factor)
        .map(|(hh, v)| (state.h - hh) * v)
        .collect()
}

/// Parabolic step limit `cfl * (min induced spacing)^2`, capped by the time
/// remaining to `t_max`.
pub fn cfl_dt(state: &FlowState, cfg: &FlowConfig) -> Result<f64, FlowError> {
    let spacing = surface::min_spacing(&state.surface, &state.curvature)?;
    let dt = cfg.cfl_coefficient * spacing * spacing;
    Ok(dt.min(cfg.t_max - state.t))
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub dt_used: f64,
    /// Relative enclosed-volume drift accumulated by the raw step, before
    /// any renormalization.
    pub volume_drift_before_renorm: f64,
    /// Uniform normal offset applied by the renormalization (0 when off).
    pub renorm_offset: f64,
    /// max |h - H| of the state the step departed from.
    pub max_speed: f64,
}

fn axpy(rho: &[f64], dt: f64, k: &[f64]) -> Vec<f64> {
    rho.iter().zip(k).map(|(r, v)| r + dt * v).collect()
}

fn guard_min_rho(rho: &[f64], min_rho: f64, t: f64) -> Result<(), FlowError> {
    for (node, &r) in rho.iter().enumerate() {
        if !(r >= min_rho) {
            return Err(FlowError::MeshDegenerate {
                t,
                cause: format!("rho[{node}] = {r} fell below min_rho = {min_rho}"),
            });
        }
    }
    Ok(())
}

/// Advance one step with the configured integrator. The nonlocal term is
/// re-evaluated inside every stage; freezing it would degrade the order and
/// measurably break volume conservation.
pub fn step(state: &FlowState, cfg: &FlowConfig) -> Result<(FlowState, StepReport), FlowError> {
    let dt = cfl_dt(state, cfg)?;
    if !(dt > 0.0) {
        return Err(FlowError::Config(format!("nonpositive step dt = {dt}")));
    }
    let rho0 = &state.surface.rho;
    let t1 = state.t + dt;
    let cap = cfg.blowup_cap_a2;
    let k1 = velocity(state);
    let max_speed = state
        .curvature
        .mean
        .iter()
        .fold(0.0f64, |m, &hh| m.max((state.h - hh).abs()));

    let rho1 = match cfg.integrator {
        Integrator::ExplicitEuler => axpy(rho0, dt, &k1),
        Integrator::Rk4 => {
            let half = 0.5 * dt;
            let mid1 = stage(state, &axpy(rho0, half, &k1), state.t + half, cap)?;
            let k2 = velocity(&mid1);
            let mid2 = stage(state, &axpy(rho0, half, &k2), state.t + half, cap)?;
            let k3 = velocity(&mid2);
            let end = stage(state, &axpy(rho0, dt, &k3), t1, cap)?;
            let k4 = velocity(&end);
            let mut rho = Vec::with_capacity(rho0.len());
            for i in 0..rho0.len() {
                rho.push(rho0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
            }
            rho
        }
    };
    guard_min_rho(&rho1, cfg.min_rho, t1)?;
    let surface1 = state.surface.with_rho(rho1)?;
    let mut next = FlowState::rebuild(surface1, t1, state.step_index + 1, state.v0, cap)?;

    let v_raw = next.enclosed_volume()?;
    let drift = (v_raw - state.v0) / state.v0;
    let mut offset = 0.0;
    if cfg.renormalize_volume {
        let (renormed, delta) = renormalize_volume(&next)?;
        next = renormed;
        offset = delta;
        guard_min_rho(&next.surface.rho, cfg.min_rho, t1)?;
    }
    Ok((
        next,
        StepReport {
            dt_used: dt,
            volume_drift_before_renorm: drift,
            renorm_offset: offset,
            max_speed,
        },
    ))
}

fn stage(base: &FlowState, rho: &[f64], t: f64, cap: f64) -> Result<FlowState, FlowError> {
    guard_min_rho(rho, f64::MIN_POSITIVE, t)?;
    let surface = base.surface.with_rho(rho.to_vec())?;
    FlowState::rebuild(surface, t, base.step_index, base.v0, cap)
}

/// Restore the enclosed volume to its t = 0 value with a uniform normal
/// offset `rho <- rho + delta v`, solved by Newton iteration; the exact
/// first variation `dV/ddelta = area` is the Jacobian. Returns the state
/// with recomputed curvature and the offset applied.
pub fn renormalize_volume(state: &FlowState) -> Result<(FlowState, f64), FlowError> {
    const REL_TOL: f64 = 1e-12;
    const MAX_ITERS: usize = 20;
    let v0 = state.v0;
    let mut v = state.enclosed_volume()?;
    if ((v - v0) / v0).abs() <= REL_TOL {
        return Ok((state.clone(), 0.0));
    }
    let area = state.curvature.area();
    let mut delta = 0.0;
    for _ in 0..MAX_ITERS {
        delta -= (v - v0) / area;
        let rho: Vec<f64> = state
            .surface
            .rho
            .iter()
            .zip(&state.curvature.graph_factor)
            .map(|(r, gf)| r + delta * gf)
            .collect();
        for (node, &r) in rho.iter().enumerate() {
            if !(r > 0.0) {
                return Err(FlowError::MeshDegenerate {
                    t: state.t,
                    cause: format!("renormalization drove rho[{node}] to {r}"),
                });
            }
        }
        let surface = state.surface.with_rho(rho)?;
        v = surface::enclosed_volume(&surface)?;
        if ((v - v0) / v0).abs() <= REL_TOL {
            let renormed =
                FlowState::rebuild(surface, state.t, state.step_index, state.v0, f64::INFINITY)?;
            return Ok((renormed, delta));
        }
    }
    Err(FlowError::RenormNonConvergence(MAX_ITERS))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// max |Aring| fell below the convergence tolerance.
    Converged,
    TMaxReached,
    Blowup { t: f64, max_a2: f64 },
    MeshDegenerate { t: f64, cause: String },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Converged | Outcome::TMaxReached)
    }
}

pub struct RunResult {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: FlowState,
    pub outcome: Outcome,
}

/// Drive the flow until convergence, `t_max`, or an abort. Diagnostics are
/// recorded at step 0, every `record_every` steps, and at the final state;
/// the run is deterministic given the initial surface and configuration.
pub fn run(initial: RadialSurface, cfg: &FlowConfig) -> Result<RunResult, FlowError> {
    cfg.validate()?;
    let mut state = FlowState::initial(initial)?;
    let mut records: Vec<DiagnosticsRecord> = vec![diagnostics::record(&state)?];
    let mut prev: Option<FlowState>;

    loop {
        if state.curvature.max_aring() < cfg.conv_tol_aring {
            return finish(records, state, Outcome::Converged);
        }
        if state.t >= cfg.t_max * (1.0 - 1e-14) {
            return finish(records, state, Outcome::TMaxReached);
        }
        let pre_step = if !cfg.renormalize_volume {
            Some(state.clone())
        } else {
            None
        };
        let (next, report) = match step(&state, cfg) {
            Ok(ok) => ok,
            Err(FlowError::Blowup { t, max_a2 }) => {
                return finish(records, state, Outcome::Blowup { t, max_a2 });
            }
            Err(FlowError::MeshDegenerate { t, cause }) => {
                return finish(records, state, Outcome::MeshDegenerate { t, cause });
            }
            Err(other) => return Err(other),
        };
        prev = pre_step;
        state = next;
        if state.step_index % cfg.record_every as u64 == 0 {
            let mut rec = diagnostics::record(&state)?;
            rec.dt_used = report.dt_used;
            rec.renorm_offset = report.renorm_offset;
            if let Some(p) = &prev {
                rec.resid_h = Some(diagnostics::evolution_residual_h(p, &state)?.max_norm);
            }
            records.push(rec);
        }
    }
}

fn finish(
    mut records: Vec<DiagnosticsRecord>,
    state: FlowState,
    outcome: Outcome,
) -> Result<RunResult, FlowError> {
    let last_recorded = records.last().map(|r| r.t);
    if last_recorded != Some(state.t) {
        records.push(diagnostics::record(&state)?);
    }
    Ok(RunResult {
        records,
        final_state: state,
        outcome,
    })
}

#[derive(Debug, Clone)]
pub struct SphereFit {
    pub center: HPoint,
    pub radius: f64,
    pub residual: f64,
}

/// Fit the umbilical sphere nearest to a surface: minimize the variance of
/// hyperbolic distances from a candidate center by gradient descent in the
/// tangent space with step halving. Returns the center, the mean distance
/// as radius, and the RMS distance deviation as residual.
pub fn fit_limit_sphere(s: &RadialSurface) -> Result<SphereFit, FlowError> {
    const MAX_ITERS: usize = 200;
    let pts = surface::embed(s)?;
    let dim = pts[0].dim();
    let nf = pts.len() as f64;

    // Normalized Minkowski mean is a good interior starting center.
    let mut mean = vec![0.0; dim];
    for p in &pts {
        for (m, c) in mean.iter_mut().zip(&p.vec().0) {
            *m += c / nf;
        }
    }
    let mv = LorentzVec(mean);
    let norm = (-mv.norm_sq()).max(f64::MIN_POSITIVE).sqrt();
    let mut center = HPoint::new_unchecked(mv.scaled(1.0 / norm));

    let stats = |c: &HPoint| -> Result<(f64, f64, LorentzVec), GeomError> {
        let mut dists = Vec::with_capacity(pts.len());
        let mut dbar = 0.0;
        for p in &pts {
            let d = hypgeom::hyp_dist(c, p)?;
            dbar += d / nf;
            dists.push(d);
        }
        let mut var = 0.0;
        let mut grad = LorentzVec::zeros(dim);
        for (p, &d) in pts.iter().zip(&dists) {
            let dev = d - dbar;
            var += dev * dev / nf;
            if d > 1e-14 {
                let u = hypgeom::log_map(c, p)?.scaled(1.0 / d);
                grad = grad.add(&u.scaled(-2.0 * dev / nf));
            }
        }
        Ok((dbar, var, grad))
    };

    let (mut dbar, mut var, mut grad) = stats(&center)?;
    let mut step_len = 0.25;
    for _ in 0..MAX_ITERS {
        let gnorm = grad.norm_sq().max(0.0).sqrt();
        if gnorm <= 1e-14 * (1.0 + dbar) || step_len <= 1e-15 {
            return Ok(SphereFit {
                center,
                radius: dbar,
                residual: var.max(0.0).sqrt(),
            });
        }
        // Backtracking line search along -grad.
        let mut improved = false;
        for _ in 0..40 {
            let trial = hypgeom::exp_map(&center, &grad.scaled(-step_len / gnorm))?;
            let (td, tv, tg) = stats(&trial)?;
            if tv < var {
                center = trial;
                dbar = td;
                var = tv;
                grad = tg;
                step_len *= 1.5;
                improved = true;
                break;
            }
            step_len *= 0.5;
        }
        if !improved {
            return Ok(SphereFit {
                center,
                radius: dbar,
                residual: var.max(0.0).sqrt(),
            });
        }
    }
    Err(FlowError::FitNonConvergence(MAX_ITERS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypgeom::{basepoint, hyp_dist, polar_to_hyperboloid, sphere_oracle};
    use crate::surface::{AxisymGrid, ParamGrid, TriMeshGrid};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn sphere(r: f64, n: usize, k: usize) -> RadialSurface {
        let grid = AxisymGrid::new(n, k, 4).unwrap();
        RadialSurface::new(Arc::new(ParamGrid::Axisymmetric(grid)), vec![r; k]).unwrap()
    }

    fn perturbed(r0: f64, eps: f64, l: usize, n: usize, k: usize) -> RadialSurface {
        let grid = AxisymGrid::new(n, k, 4).unwrap();
        let rho: Vec<f64> = grid
            .nodes
            .iter()
            .map(|phi| r0 + eps * crate::special::legendre_p(l, phi.cos()))
            .collect();
        RadialSurface::new(Arc::new(ParamGrid::Axisymmetric(grid)), rho).unwrap()
    }

    #[test]
    fn sphere_velocity_vanishes() {
        let state = FlowState::initial(sphere(1.0, 2, 129)).unwrap();
        let vel = velocity(&state);
        assert!(vel.iter().all(|v| v.abs() < 1e-12), "static state");
    }

    #[test]
    fn velocity_sign_shrinks_where_h_exceeds_average() {
        let state = FlowState::initial(perturbed(1.0, 0.02, 2, 2, 129)).unwrap();
        let vel = velocity(&state);
        for (i, &hh) in state.curvature.mean.iter().enumerate() {
            if hh > state.h {
                assert!(vel[i] < 0.0);
            } else if hh < state.h {
                assert!(vel[i] > 0.0);
            }
        }
    }

    #[test]
    fn velocity_scales_linearly_in_eps() {
        let mut maxima = Vec::new();
        for eps in [0.005, 0.01, 0.02] {
            let state = FlowState::initial(perturbed(1.0, eps, 2, 2, 129)).unwrap();
            let vel = velocity(&state);
            maxima.push(vel.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        assert!((maxima[1] / maxima[0] - 2.0).abs() < 0.05);
        assert!((maxima[2] / maxima[1] - 2.0).abs() < 0.05);
    }

    #[test]
    fn cfl_quarters_when_resolution_doubles() {
        let cfg = FlowConfig {
            t_max: 100.0,
            ..FlowConfig::default()
        };
        let coarse = FlowState::initial(sphere(1.0, 2, 65)).unwrap();
        let fine = FlowState::initial(sphere(1.0, 2, 129)).unwrap();
        let r = cfl_dt(&coarse, &cfg).unwrap() / cfl_dt(&fine, &cfg).unwrap();
        assert_relative_eq!(r, 4.0, max_relative = 0.05);
        // Remaining-time cap.
        let mut state = FlowState::initial(sphere(1.0, 2, 65)).unwrap();
        state.t = 100.0 - 1e-6;
        assert_relative_eq!(cfl_dt(&state, &cfg).unwrap(), 1e-6, max_relative = 1e-6);
        // Determinism.
        let again = FlowState::initial(sphere(1.0, 2, 129)).unwrap();
        assert_eq!(
            cfl_dt(&fine, &cfg).unwrap().to_bits(),
            cfl_dt(&again, &cfg).unwrap().to_bits()
        );
    }

    #[test]
    fn spheres_are_fixed_points_of_step() {
        for r in [0.3, 1.0, 3.0] {
            for integrator in [Integrator::ExplicitEuler, Integrator::Rk4] {
                let cfg = FlowConfig {
                    integrator,
                    t_max: 10.0,
                    ..FlowConfig::default()
                };
                let state = FlowState::initial(sphere(r, 2, 65)).unwrap();
                let (next, report) = step(&state, &cfg).unwrap();
                for (a, b) in next.surface.rho.iter().zip(&state.surface.rho) {
                    assert!((a - b).abs() <= 1e-12, "sphere moved by {}", (a - b).abs());
                }
                assert!(report.max_speed <= 1e-11);
                assert!(report.dt_used > 0.0);
            }
        }
    }

    #[test]
    fn one_euler_step_decreases_max_aring() {
        let cfg = FlowConfig {
            integrator: Integrator::ExplicitEuler,
            t_max: 10.0,
            renormalize_volume: true,
            ..FlowConfig::default()
        };
        let state = FlowState::initial(perturbed(1.0, 0.01, 2, 2, 129)).unwrap();
        let before = state.curvature.max_aring();
        let (next, _) = step(&state, &cfg).unwrap();
        assert!(next.curvature.max_aring() < before);
    }

    #[test]
    fn renormalization_recovers_inflated_sphere() {
        // Inflate a sphere by a uniform 1e-3 and demand the volume
        // projection restore the radius to high accuracy.
        let base = FlowState::initial(sphere(1.0, 2, 129)).unwrap();
        let inflated = base
            .surface
            .with_rho(base.surface.rho.iter().map(|r| r + 1e-3).collect())
            .unwrap();
        let state = FlowState {
            surface: inflated.clone(),
            curvature: surface::curvature_field(&inflated).unwrap(),
            h: 0.0,
            t: 0.0,
            step_index: 0,
            v0: base.v0,
        };
        let (renormed, delta) = renormalize_volume(&state).unwrap();
        assert!(delta < 0.0);
        for r in &renormed.surface.rho {
            assert_relative_eq!(*r, 1.0, epsilon = 1e-9);
        }
        assert_relative_eq!(
            renormed.enclosed_volume().unwrap(),
            base.v0,
            max_relative = 1e-12
        );
        // Already-renormalized state reports a zero offset.
        let (_, delta2) = renormalize_volume(&renormed).unwrap();
        assert_eq!(delta2, 0.0);
    }

    #[test]
    fn rk4_beats_euler_at_equal_time() {
        // Against a tiny-dt reference, RK4 at the CFL step should be far
        // more accurate than Euler at the same step.
        let initial = perturbed(1.0, 0.05, 2, 2, 65);
        let t_end = 0.02;
        let run_with = |integrator: Integrator, cfl: f64| -> Vec<f64> {
            let cfg = FlowConfig {
                integrator,
                cfl_coefficient: cfl,
                t_max: t_end,
                renormalize_volume: false,
                conv_tol_aring: 1e-30,
                ..FlowConfig::default()
            };
            let mut state = FlowState::initial(initial.clone()).unwrap();
            while state.t < t_end * (1.0 - 1e-12) {
                let (next, _) = step(&state, &cfg).unwrap();
                state = next;
            }
            state.surface.rho.clone()
        };
        let reference = run_with(Integrator::Rk4, 0.0125);
        let euler = run_with(Integrator::ExplicitEuler, 0.2);
        let rk4 = run_with(Integrator::Rk4, 0.2);
        let err = |rho: &[f64]| -> f64 {
            rho.iter()
                .zip(&reference)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let (e_euler, e_rk4) = (err(&euler), err(&rk4));
        assert!(
            e_rk4 < e_euler / 100.0,
            "euler err {e_euler}, rk4 err {e_rk4}"
        );
    }

    #[test]
    fn run_converges_instantly_on_spheres() {
        let cfg = FlowConfig::default();
        let result = run(sphere(1.0, 2, 65), &cfg).unwrap();
        assert_eq!(result.outcome, Outcome::Converged);
        assert_eq!(result.final_state.step_index, 0);
        assert_eq!(result.records.len(), 1);
    }

    #[test]
    fn run_reports_mesh_degeneration() {
        // An absurd min_rho makes the guard trip on the first step.
        let cfg = FlowConfig {
            min_rho: 2.0,
            conv_tol_aring: 1e-30,
            ..FlowConfig::default()
        };
        let result = run(perturbed(1.0, 0.01, 2, 2, 65), &cfg).unwrap();
        match result.outcome {
            Outcome::MeshDegenerate { ref cause, .. } => {
                assert!(cause.contains("min_rho"), "cause: {cause}")
            }
            ref other => panic!("expected MeshDegenerate, got {other:?}"),
        }
    }

    #[test]
    fn fit_limit_sphere_exact_sphere() {
        let fit = fit_limit_sphere(&sphere(1.0, 2, 65)).unwrap();
        assert!(hyp_dist(&fit.center, &basepoint(4)).unwrap() <= 1e-8);
        assert_relative_eq!(fit.radius, 1.0, epsilon = 1e-8);
        assert!(fit.residual <= 1e-8);
    }

    #[test]
    fn fit_limit_sphere_recovers_translated_center() {
        // A sphere of radius 1 centered at distance 0.3 from the basepoint,
        // built by solving cosh r = cosh rho cosh t - sinh rho sinh t cos(angle)
        // for rho over the icosphere directions.
        let grid = TriMeshGrid::new(4).unwrap();
        let (t, r) = (0.3f64, 1.0f64);
        let axis = [1.0, 0.0, 0.0];
        let rho: Vec<f64> = grid
            .vertices
            .iter()
            .map(|th| {
                let ca = th[0] * axis[0] + th[1] * axis[1] + th[2] * axis[2];
                let a = t.cosh();
                let b = t.sinh() * ca;
                // A cosh(rho) - B sinh(rho) = cosh(r)
                let scale = (a * a - b * b).sqrt();
                (b / a).atanh() + (r.cosh() / scale).acosh()
            })
            .collect();
        let s = RadialSurface::new(Arc::new(ParamGrid::TriMesh(grid)), rho).unwrap();
        let fit = fit_limit_sphere(&s).unwrap();
        let expected = polar_to_hyperboloid(t, &axis).unwrap();
        assert!(
            hyp_dist(&fit.center, &expected).unwrap() <= 1e-4,
            "center off by {}",
            hyp_dist(&fit.center, &expected).unwrap()
        );
        assert_relative_eq!(fit.radius, r, epsilon = 1e-4);
        assert!(fit.residual <= 1e-4);
    }

    #[test]
    fn fit_residual_scales_linearly_in_eps() {
        let mut residuals = Vec::new();
        for eps in [0.005, 0.01, 0.02] {
            let fit = fit_limit_sphere(&perturbed(1.0, eps, 2, 2, 65)).unwrap();
            residuals.push(fit.residual);
        }
        assert!((residuals[1] / residuals[0] - 2.0).abs() < 0.1);
        assert!((residuals[2] / residuals[1] - 2.0).abs() < 0.1);
    }

    #[test]
    fn sphere_oracle_volume_closes_the_loop() {
        // Discrete volume of the discrete sphere matches the closed form to
        // quadrature accuracy, so the fit radius can be converted to an
        // oracle volume downstream.
        let s = sphere(1.3, 2, 129);
        let state = FlowState::initial(s).unwrap();
        let oracle = sphere_oracle(1.3, 2).unwrap();
        assert_relative_eq!(state.v0, oracle.enclosed_volume, max_relative = 1e-9);
    }
}
