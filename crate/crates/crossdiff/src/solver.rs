//! Explicit finite-volume scheme.
//!
//! Cell-centered fields, fluxes on faces, forward Euler in time. Per step:
//! solve the potential from the current aggregate, assemble face
//! coefficients, update every species by flux differences. No-flux
//! boundaries hold exactly because the boundary fluxes are never computed,
//! so discrete mass is conserved to rounding.
//!
//! The face flux of species i through an interior face is
//!
//!   G_i = p_f (u_i,R - u_i,L)/dx + uhat_i (q_f (u0,R - u0,L)/dx + r_f gphi)
//!
//! with uhat_i either the centered mean or the donor cell against the local
//! drift velocity. With `q_consistent` the pair (p_f, q_f) is rescaled so
//! that the weighted flux sum telescopes to the exact secant slope of Q,
//! which makes the aggregated species update match `aggregate_step` to
//! rounding.

use crate::coefficients::CoefficientModel;
use crate::entropy::{entropy_functional, EntropySpec, SemimetricKind};
use crate::error::{Error, Result};
use crate::fields::{mass, Field, Grid1D, SpeciesState};
use crate::poisson::{compat_tol, solve_poisson, PoissonSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftFlux {
    Centered,
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceAverage {
    Arithmetic,
    Harmonic,
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    /// Fixed step size; `None` recomputes the CFL bound every step.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub drift_flux: DriftFlux,
    pub face_average: FaceAverage,
    pub q_consistent: bool,
    /// Values below this are clamped up; the clamped mass is accounted for.
    pub positivity_floor: f64,
    /// Snapshot every this many steps; 0 keeps only first and last.
    pub output_every: usize,
    /// Regularization for the per-step entropy diagnostic.
    pub diag_eps: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            dt: None,
            t_end: 0.0,
            cfl_safety: 0.45,
            drift_flux: DriftFlux::Centered,
            face_average: FaceAverage::Arithmetic,
            q_consistent: false,
            positivity_floor: 0.0,
            output_every: 0,
            diag_eps: 1e-8,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "dt must be positive, got {dt}"
                )));
            }
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.positivity_floor >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "positivity_floor must be nonnegative, got {}",
                self.positivity_floor
            )));
        }
        if !(self.diag_eps > 0.0 && self.diag_eps < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "diag_eps must lie in (0, 1), got {}",
                self.diag_eps
            )));
        }
        Ok(())
    }
}

/// Tolerance for aggregate range checks, relative to max(1, L).
fn range_tol(model: &CoefficientModel) -> f64 {
    1e-9 * model.sup().span().max(1.0)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FaceCoef {
    p: f64,
    q: f64,
    r: f64,
    u0_face: f64,
    gphi: f64,
    /// q du0 + r gphi, the velocity seen by the species face value
    drift_v: f64,
}

/// Coefficients on interior faces 1..cells; entry k belongs to face k+1.
pub(crate) fn face_coefficients(
    grid: &Grid1D,
    u0: &Field,
    model: &CoefficientModel,
    poisson: &PoissonSolution,
    config: &SchemeConfig,
) -> Result<Vec<FaceCoef>> {
    let cells = grid.cells();
    let dx = grid.dx();
    let sup = model.sup();
    let tol = range_tol(model);
    let upper = sup.finite().unwrap_or(f64::INFINITY);

    let mut out = Vec::with_capacity(cells - 1);
    for f in 1..cells {
        let ul = u0.values[f - 1];
        let ur = u0.values[f];
        for (v, face) in [(ul, f - 1), (ur, f)] {
            if !(v >= -tol && v <= upper + tol) {
                return Err(Error::StateOutOfRange {
                    face,
                    value: v,
                    sup: upper,
                });
            }
        }
        let mean = 0.5 * (ul + ur);
        let sc = sup.clamp(mean);

        let mut p = match config.face_average {
            FaceAverage::Arithmetic => model.eval_p(sc),
            FaceAverage::Harmonic => {
                let a = model.eval_p(sup.clamp(ul));
                let b = model.eval_p(sup.clamp(ur));
                if a + b > 1e-300 {
                    2.0 * a * b / (a + b)
                } else {
                    0.0
                }
            }
        };
        let mut q = model.eval_q(sc);
        let r = model.eval_r(sc);
        if !p.is_finite() || !q.is_finite() || !r.is_finite() {
            return Err(Error::ModelEval {
                what: "face coefficients",
                s: sc,
                value: if p.is_finite() { q } else { p },
            });
        }

        if config.q_consistent {
            // replace p + q u0_face by the secant slope of Q so that the
            // weighted species fluxes sum exactly to the scalar flux
            let c = if (ur - ul).abs() > 1e-14 * sup.span().max(1.0) {
                (model.eval_q_primitive(sup.clamp(ur))? - model.eval_q_primitive(sup.clamp(ul))?)
                    / (ur - ul)
            } else {
                model.eval_p(sc) + model.eval_q(sc) * sc
            };
            let denom = p + q * mean;
            if denom.abs() > 1e-300 {
                let scale = c / denom;
                p *= scale;
                q *= scale;
            } else {
                p = c;
                q = 0.0;
            }
        }

        let du0 = (ur - ul) / dx;
        let gphi = poisson.grad_phi[f];
        out.push(FaceCoef {
            p,
            q,
            r,
            u0_face: mean,
            gphi,
            drift_v: q * du0 + r * gphi,
        });
    }
    Ok(out)
}

fn cfl_from_faces(grid: &Grid1D, faces: &[FaceCoef], config: &SchemeConfig) -> f64 {
    let dx = grid.dx();
    let mut worst = 0.0f64;
    for fc in faces {
        let speed = fc.p + fc.q.abs() * fc.u0_face + 0.5 * dx * (fc.r * fc.gphi).abs();
        worst = worst.max(speed);
    }
    config.cfl_safety * dx * dx / (2.0 * worst + 1e-300)
}

/// Largest stable explicit step for the current state.
pub fn cfl_dt(
    grid: &Grid1D,
    state: &SpeciesState,
    model: &CoefficientModel,
    poisson: &PoissonSolution,
    config: &SchemeConfig,
) -> Result<f64> {
    let u0 = state.aggregate(model.weights())?;
    let faces = face_coefficients(grid, &u0, model, poisson, config)?;
    Ok(cfl_from_faces(grid, &faces, config))
}

fn face_value(ul: f64, ur: f64, v: f64, rule: DriftFlux) -> f64 {
    match rule {
        DriftFlux::Centered => 0.5 * (ul + ur),
        DriftFlux::Upwind => {
            // dt u = dx(v u): mass drifts toward smaller x for v > 0, so
            // the right cell is the donor
            if v > 0.0 {
                ur
            } else if v < 0.0 {
                ul
            } else {
                0.5 * (ul + ur)
            }
        }
    }
}

/// Per-species fluxes on all faces (0..=cells); boundary entries are zero.
pub fn species_flux(
    grid: &Grid1D,
    state: &SpeciesState,
    model: &CoefficientModel,
    poisson: &PoissonSolution,
    config: &SchemeConfig,
) -> Result<Vec<Vec<f64>>> {
    let u0 = state.aggregate(model.weights())?;
    let faces = face_coefficients(grid, &u0, model, poisson, config)?;
    Ok(flux_from_faces(grid, state, &faces, config))
}

fn flux_from_faces(
    grid: &Grid1D,
    state: &SpeciesState,
    faces: &[FaceCoef],
    config: &SchemeConfig,
) -> Vec<Vec<f64>> {
    let cells = grid.cells();
    let dx = grid.dx();
    let mut fluxes = vec![vec![0.0; cells + 1]; state.n()];
    for (i, u) in state.species.iter().enumerate() {
        for (k, fc) in faces.iter().enumerate() {
            let f = k + 1;
            let ul = u.values[f - 1];
            let ur = u.values[f];
            let uhat = face_value(ul, ur, fc.drift_v, config.drift_flux);
            fluxes[i][f] = fc.p * (ur - ul) / dx + uhat * fc.drift_v;
        }
    }
    fluxes
}

pub(crate) struct Prepared {
    pub u0: Field,
    pub poisson: PoissonSolution,
    pub faces: Vec<FaceCoef>,
    pub cfl: f64,
}

pub(crate) fn prepare(
    grid: &Grid1D,
    state: &SpeciesState,
    model: &CoefficientModel,
    background: &Field,
    config: &SchemeConfig,
) -> Result<Prepared> {
    let u0 = state.aggregate(model.weights())?;
    let rhs = Field {
        values: u0
            .values
            .iter()
            .zip(&background.values)
            .map(|(a, b)| a - b)
            .collect(),
    };
    let poisson = solve_poisson(grid, &rhs)?;
    let faces = face_coefficients(grid, &u0, model, &poisson, config)?;
    let cfl = cfl_from_faces(grid, &faces, config);
    Ok(Prepared {
        u0,
        poisson,
        faces,
        cfl,
    })
}

/// Applies one Euler update of size dt. Returns the new state and the mass
/// added by clamping values up to the positivity floor.
pub(crate) fn apply_prepared(
    grid: &Grid1D,
    state: &SpeciesState,
    prep: &Prepared,
    config: &SchemeConfig,
    dt: f64,
) -> Result<(SpeciesState, f64)> {
    let dx = grid.dx();
    let fluxes = flux_from_faces(grid, state, &prep.faces, config);
    let nu = dt / dx;
    let mut clamped = 0.0;
    let mut new_species = Vec::with_capacity(state.n());
    for (i, u) in state.species.iter().enumerate() {
        let g = &fluxes[i];
        let mut vals = Vec::with_capacity(u.len());
        for j in 0..u.len() {
            let mut v = u.values[j] + nu * (g[j + 1] - g[j]);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    species: i,
                    cell: j,
                });
            }
            if v < config.positivity_floor {
                clamped += (config.positivity_floor - v) * dx;
                v = config.positivity_floor;
            }
            vals.push(v);
        }
        new_species.push(Field { values: vals });
    }
    Ok((SpeciesState::new(new_species), clamped))
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: SpeciesState,
    /// Potential solved from the pre-step aggregate, as used for the fluxes.
    pub poisson: PoissonSolution,
    pub dt: f64,
    pub clamped_mass: f64,
}

/// One explicit step; dt is the configured one or the CFL bound.
pub fn step(
    grid: &Grid1D,
    state: &SpeciesState,
    model: &CoefficientModel,
    background: &Field,
    config: &SchemeConfig,
) -> Result<StepOutput> {
    config.validate()?;
    let prep = prepare(grid, state, model, background, config)?;
    let dt = config.dt.unwrap_or(prep.cfl);
    let (state, clamped_mass) = apply_prepared(grid, state, &prep, config, dt)?;
    Ok(StepOutput {
        state,
        poisson: prep.poisson,
        dt,
        clamped_mass,
    })
}

/// One explicit step of the scalar aggregate law
/// dt u0 = dx( dx Q(u0) + R(u0) dx phi ).
pub fn aggregate_step(
    grid: &Grid1D,
    u0: &Field,
    model: &CoefficientModel,
    background: &Field,
    config: &SchemeConfig,
) -> Result<Field> {
    config.validate()?;
    if u0.len() != grid.cells() {
        return Err(Error::DimensionMismatch(
            "aggregate does not match grid".into(),
        ));
    }
    let rhs = Field {
        values: u0
            .values
            .iter()
            .zip(&background.values)
            .map(|(a, b)| a - b)
            .collect(),
    };
    let poisson = solve_poisson(grid, &rhs)?;
    let faces = face_coefficients(grid, u0, model, &poisson, config)?;
    let dt = config.dt.unwrap_or_else(|| cfl_from_faces(grid, &faces, config));

    let cells = grid.cells();
    let dx = grid.dx();
    let sup = model.sup();
    let mut flux = vec![0.0; cells + 1];
    for (k, fc) in faces.iter().enumerate() {
        let f = k + 1;
        let ul = u0.values[f - 1];
        let ur = u0.values[f];
        let dq = model.eval_q_primitive(sup.clamp(ur))? - model.eval_q_primitive(sup.clamp(ul))?;
        let uhat = face_value(ul, ur, fc.drift_v, config.drift_flux);
        let r = model.eval_r(sup.clamp(fc.u0_face));
        flux[f] = dq / dx + r * uhat * fc.gphi;
    }

    let nu = dt / dx;
    let mut vals = Vec::with_capacity(cells);
    for j in 0..cells {
        let v = u0.values[j] + nu * (flux[j + 1] - flux[j]);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                species: 0,
                cell: j,
            });
        }
        vals.push(v);
    }
    Ok(Field { values: vals })
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub state: SpeciesState,
    pub poisson: PoissonSolution,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: f64,
    /// Step size used to reach this time; 0 for the initial record.
    pub dt: f64,
    pub masses: Vec<f64>,
    pub entropy: f64,
    pub max_abs_grad_phi: f64,
    /// Cumulative mass added by positivity clamping up to this time.
    pub clamped_mass: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub records: Vec<StepRecord>,
    pub steps: usize,
    pub total_clamped_mass: f64,
    /// Set when clamping exceeded 1e-6 of the initial total mass.
    pub tainted: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpeciesState {
        &self.snapshots.last().expect("trajectory has snapshots").state
    }

    pub fn bitwise_eq(&self, other: &Trajectory) -> bool {
        self.steps == other.steps
            && self.snapshots.len() == other.snapshots.len()
            && self.records.len() == other.records.len()
            && self
                .snapshots
                .iter()
                .zip(&other.snapshots)
                .all(|(a, b)| {
                    a.t.to_bits() == b.t.to_bits()
                        && a.state.bitwise_eq(&b.state)
                        && a.poisson.phi.bitwise_eq(&b.poisson.phi)
                })
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.t.to_bits() == b.t.to_bits()
                    && a.entropy.to_bits() == b.entropy.to_bits()
                    && a.masses.len() == b.masses.len()
                    && a.masses
                        .iter()
                        .zip(&b.masses)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

pub(crate) fn validate_initial(
    grid: &Grid1D,
    state: &SpeciesState,
    model: &CoefficientModel,
    background: &Field,
) -> Result<Field> {
    if state.n() != model.species_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} species in state, model has {}",
            state.n(),
            model.species_count()
        )));
    }
    if background.len() != grid.cells() {
        return Err(Error::DimensionMismatch(
            "background field does not match grid".into(),
        ));
    }
    for (i, u) in state.species.iter().enumerate() {
        if u.len() != grid.cells() {
            return Err(Error::DimensionMismatch(format!(
                "species {i} has {} cells, grid has {}",
                u.len(),
                grid.cells()
            )));
        }
        if let Some(j) = u.values.iter().position(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::NonFinite {
                species: i,
                cell: j,
            });
        }
    }
    let u0 = state.aggregate(model.weights())?;
    let tol = range_tol(model);
    let upper = model.sup().finite().unwrap_or(f64::INFINITY);
    if let Some(j) = u0
        .values
        .iter()
        .position(|v| !(*v >= -tol && *v <= upper + tol))
    {
        return Err(Error::StateOutOfRange {
            face: j,
            value: u0.values[j],
            sup: upper,
        });
    }

    let rhs = Field {
        values: u0
            .values
            .iter()
            .zip(&background.values)
            .map(|(a, b)| a - b)
            .collect(),
    };
    let defect = mass(grid, &rhs);
    let tol = compat_tol(grid.cells(), rhs.max_abs());
    if defect.abs() > tol {
        return Err(Error::IncompatibleSource {
            defect: defect.abs(),
            tol,
        });
    }
    Ok(u0)
}

const MAX_STEPS: usize = 20_000_000;

/// Runs the scheme from `initial` to `config.t_end`, recording per-step
/// diagnostics and snapshots every `output_every` steps (first and last
/// always included).
pub fn run(
    grid: &Grid1D,
    initial: &SpeciesState,
    model: &CoefficientModel,
    background: &Field,
    config: &SchemeConfig,
) -> Result<Trajectory> {
    config.validate()?;
    validate_initial(grid, initial, model, background)?;

    let diag_spec = EntropySpec {
        eps: config.diag_eps,
        kind: SemimetricKind::Gajewski,
    };
    let initial_mass: f64 = initial
        .species
        .iter()
        .map(|u| mass(grid, u))
        .sum();

    let mut state = initial.clone();
    let mut t = 0.0f64;
    let mut steps = 0usize;
    let mut total_clamped = 0.0f64;
    let mut last_dt = 0.0f64;
    let mut snapshots = Vec::new();
    let mut records = Vec::new();

    loop {
        let prep = prepare(grid, &state, model, background, config).map_err(|e| {
            Error::AtStep {
                step: steps,
                t,
                source: Box::new(e),
            }
        })?;

        records.push(StepRecord {
            t,
            dt: last_dt,
            masses: state.species.iter().map(|u| mass(grid, u)).collect(),
            entropy: entropy_functional(grid, &state, &diag_spec),
            max_abs_grad_phi: prep.poisson.grad_phi.iter().fold(0.0, |m, g| m.max(g.abs())),
            clamped_mass: total_clamped,
        });

        let remaining = config.t_end - t;
        let done = remaining <= 1e-14 * config.t_end.max(1.0);
        let at_cadence = config.output_every > 0 && steps % config.output_every == 0;
        if done || at_cadence || steps == 0 {
            snapshots.push(Snapshot {
                t,
                state: state.clone(),
                poisson: prep.poisson.clone(),
            });
        }
        if done {
            break;
        }
        if steps >= MAX_STEPS {
            return Err(Error::StepLimit(MAX_STEPS));
        }

        let dt = config.dt.unwrap_or(prep.cfl).min(remaining);
        let (next, clamped) =
            apply_prepared(grid, &state, &prep, config, dt).map_err(|e| Error::AtStep {
                step: steps,
                t,
                source: Box::new(e),
            })?;
        state = next;
        total_clamped += clamped;
        t += dt;
        last_dt = dt;
        steps += 1;
    }

    let tainted = total_clamped > 1e-6 * initial_mass.max(f64::MIN_POSITIVE);
    Ok(Trajectory {
        snapshots,
        records,
        steps,
        total_clamped_mass: total_clamped,
        tainted,
    })
}
