//! Entropy functionals and the semimetrics driving the uniqueness
//! diagnostics.
//!
//! Two semimetrics are available on species states u, v:
//!
//!   gajewski:      d(u,v)  = sum_i int h_e(u_i) + h_e(v_i) - 2 h_e((u_i+v_i)/2)
//!   relative_sym:  d0(u,v) = sum_i int (log(u_i+e) - log(v_i+e)) (u_i - v_i)
//!
//! with h_e(s) = (s+e)(log(s+e)-1)+1. Both are symmetric, nonnegative and
//! vanish only on equal states; both dominate the quadratic lower bound
//! 1/4 sum_i int (u_i-v_i)^2 / (max(u_i,v_i)+1).

use crate::error::{Error, Result};
use crate::fields::{Grid1D, SpeciesState};

/// h(s) = s (log s - 1) + 1, continuously extended by h(0) = 1.
pub fn entropy_h(s: f64) -> Result<f64> {
    if s < 0.0 || !s.is_finite() {
        return Err(Error::OutOfDomain {
            name: "s",
            value: s,
            sup: f64::INFINITY,
        });
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    Ok(s * (s.ln() - 1.0) + 1.0)
}

/// Regularized entropy h_eps(s) = (s+eps)(log(s+eps)-1)+1.
pub fn entropy_h_eps(s: f64, eps: f64) -> Result<f64> {
    if s < 0.0 || !s.is_finite() {
        return Err(Error::OutOfDomain {
            name: "s",
            value: s,
            sup: f64::INFINITY,
        });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    let t = s + eps;
    Ok(t * (t.ln() - 1.0) + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemimetricKind {
    Gajewski,
    RelativeSym,
}

#[derive(Debug, Clone, Copy)]
pub struct EntropySpec {
    pub eps: f64,
    pub kind: SemimetricKind,
}

impl Default for EntropySpec {
    fn default() -> Self {
        EntropySpec {
            eps: 1e-8,
            kind: SemimetricKind::Gajewski,
        }
    }
}

impl EntropySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DistanceReport {
    pub value: f64,
    pub per_species: Vec<f64>,
    /// 1/4 sum_i int (u_i - v_i)^2 / (max(u_i, v_i) + 1) dx
    pub lower_bound: f64,
}

pub fn semimetric(
    grid: &Grid1D,
    a_state: &SpeciesState,
    b_state: &SpeciesState,
    spec: &EntropySpec,
) -> Result<DistanceReport> {
    spec.validate()?;
    if a_state.n() != b_state.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} species",
            a_state.n(),
            b_state.n()
        )));
    }
    let eps = spec.eps;
    let dx = grid.dx();
    let mut per_species = Vec::with_capacity(a_state.n());
    let mut lower = 0.0;
    for (ua, ub) in a_state.species.iter().zip(&b_state.species) {
        if ua.len() != grid.cells() || ub.len() != grid.cells() {
            return Err(Error::DimensionMismatch(
                "state does not match grid".into(),
            ));
        }
        let mut acc = 0.0;
        let mut low = 0.0;
        for (&u, &v) in ua.values.iter().zip(&ub.values) {
            if u < 0.0 || v < 0.0 {
                return Err(Error::OutOfDomain {
                    name: "u_i",
                    value: u.min(v),
                    sup: f64::INFINITY,
                });
            }
            acc += match spec.kind {
                SemimetricKind::Gajewski => {
                    let he = |s: f64| {
                        let t = s + eps;
                        t * (t.ln() - 1.0) + 1.0
                    };
                    he(u) + he(v) - 2.0 * he(0.5 * (u + v))
                }
                SemimetricKind::RelativeSym => ((u + eps).ln() - (v + eps).ln()) * (u - v),
            };
            let d = u - v;
            low += d * d / (u.max(v) + 1.0);
        }
        per_species.push(acc * dx);
        lower += low;
    }
    Ok(DistanceReport {
        value: per_species.iter().sum(),
        per_species,
        lower_bound: 0.25 * lower * dx,
    })
}

/// Total regularized entropy sum_i int h_eps(u_i) dx.
pub fn entropy_functional(grid: &Grid1D, state: &SpeciesState, spec: &EntropySpec) -> f64 {
    let eps = spec.eps;
    let mut acc = 0.0;
    for u in &state.species {
        for &s in &u.values {
            let t = s + eps;
            acc += t * (t.ln() - 1.0) + 1.0;
        }
    }
    acc * grid.dx()
}

/// The pointwise dissipation identity behind the semimetric decay argument:
///
///   lhs = du^2/(u+e) + dv^2/(v+e) - (du+dv)^2/(u+v+2e)
///   rhs = (sqrt((v+e)/(u+e)) du - sqrt((u+e)/(v+e)) dv)^2 / (u+v+2e)
///
/// Both sides are equal and manifestly nonnegative on the right.
pub fn gajewski_identity_check(u: f64, v: f64, du: f64, dv: f64, eps: f64) -> (f64, f64) {
    debug_assert!(u >= 0.0 && v >= 0.0 && eps > 0.0);
    let a = u + eps;
    let b = v + eps;
    let s = u + v + 2.0 * eps;
    let lhs = du * du / a + dv * dv / b - (du + dv) * (du + dv) / s;
    let t = (b / a).sqrt() * du - (a / b).sqrt() * dv;
    let rhs = t * t / s;
    (lhs, rhs)
}

/// Unregularized Gajewski integrand h(u) + h(v) - 2 h((u+v)/2).
pub fn gajewski_integrand(u: f64, v: f64) -> f64 {
    let h = |s: f64| {
        if s == 0.0 {
            1.0
        } else {
            s * (s.ln() - 1.0) + 1.0
        }
    };
    h(u) + h(v) - 2.0 * h(0.5 * (u + v))
}

/// Unregularized symmetrized relative entropy integrand (log u - log v)(u - v).
pub fn relative_entropy_integrand(u: f64, v: f64) -> f64 {
    (u.ln() - v.ln()) * (u - v)
}

#[derive(Debug, Clone)]
pub struct FamilyCheckReport {
    /// max |u g_uu + v g_uv| over the sample box
    pub max_violation: f64,
    pub worst_point: (f64, f64),
    /// Sample points where the finite-difference estimate was not finite.
    pub bad_points: Vec<(f64, f64)>,
    pub samples: usize,
}

impl FamilyCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.bad_points.is_empty() && self.max_violation <= tol
    }
}

/// Checks the condition u g_uu + v g_uv = 0 that makes an integrand g
/// generate a semimetric whose decay argument closes. Derivatives are
/// fourth-order central differences with steps proportional to the
/// coordinate, sampled on a uniform grid of `samples`^2 points over
/// [lo, hi]^2.
pub fn semimetric_family_check(
    g: &dyn Fn(f64, f64) -> f64,
    lo: f64,
    hi: f64,
    samples: usize,
) -> Result<FamilyCheckReport> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument(format!(
            "sample box [{lo}, {hi}] must satisfy 0 < lo < hi"
        )));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }

    let mut max_violation = 0.0f64;
    let mut worst = (lo, lo);
    let mut bad = Vec::new();

    for iu in 0..samples {
        let u = lo + (hi - lo) * iu as f64 / (samples - 1) as f64;
        // step stays clear of the positivity boundary
        let hu = (1e-3 * u).min(0.25 * u);
        for iv in 0..samples {
            let v = lo + (hi - lo) * iv as f64 / (samples - 1) as f64;
            let hv = (1e-3 * v).min(0.25 * v);

            // fourth-order second derivative in u
            let g_uu = (-g(u + 2.0 * hu, v) + 16.0 * g(u + hu, v) - 30.0 * g(u, v)
                + 16.0 * g(u - hu, v)
                - g(u - 2.0 * hu, v))
                / (12.0 * hu * hu);

            // fourth-order mixed derivative: composed 4-point first
            // derivative stencils with weights (-1, 8, -8, 1)/12h
            let d1 = |w: f64, c: &dyn Fn(f64) -> f64, h: f64| {
                (-c(w + 2.0 * h) + 8.0 * c(w + h) - 8.0 * c(w - h) + c(w - 2.0 * h)) / (12.0 * h)
            };
            let g_uv = d1(v, &|vv| d1(u, &|uu| g(uu, vv), hu), hv);

            let viol = u * g_uu + v * g_uv;
            if !viol.is_finite() {
                bad.push((u, v));
                continue;
            }
            if viol.abs() > max_violation {
                max_violation = viol.abs();
                worst = (u, v);
            }
        }
    }

    Ok(FamilyCheckReport {
        max_violation,
        worst_point: worst,
        bad_points: bad,
        samples,
    })
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn identity_holds_and_lhs_nonneg(
            u in 0.0..10.0f64,
            v in 0.0..10.0f64,
            du in -5.0..5.0f64,
            dv in -5.0..5.0f64,
            eps in 1e-8..0.5f64,
        ) {
            let (lhs, rhs) = gajewski_identity_check(u, v, du, dv, eps);
            prop_assert!(lhs >= -1e-14);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
