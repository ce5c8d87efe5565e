//! Coefficient closures for systems of the form
//!
//!   dt u_i = div( p(u0) grad u_i + q(u0) u_i grad u0 + r(u0) u_i grad phi ),
//!
//! where u0 = sum_i a_i u_i. The aggregate then satisfies the scalar law
//! dt u0 = div( grad Q(u0) + R(u0) grad phi ) with Q' = p + q s and
//! R = r(s) s. Well-posedness of the diffusion block needs p >= 0 and
//! p + q s >= 0 on [0, L]; the drift is controlled when
//! (r + r' s)^2 / (p + q s) stays bounded there.

use crate::error::{Error, Result};
use crate::expr::ScalarFn;
use crate::linalg::SquareMatrix;

/// Upper bound L for the aggregate. Unbounded is only admissible for
/// drift-free models (r identically zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpperBound {
    Finite(f64),
    Unbounded,
}

impl UpperBound {
    pub fn finite(&self) -> Option<f64> {
        match self {
            UpperBound::Finite(l) => Some(*l),
            UpperBound::Unbounded => None,
        }
    }

    /// Interval length used when sampling s; 1.0 stands in for the
    /// unbounded case.
    pub fn span(&self) -> f64 {
        self.finite().unwrap_or(1.0)
    }

    pub fn clamp(&self, s: f64) -> f64 {
        match self {
            UpperBound::Finite(l) => s.clamp(0.0, *l),
            UpperBound::Unbounded => s.max(0.0),
        }
    }
}

/// Tolerance for the pointwise sign checks on p and p + q s.
pub const SIGN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CoefficientModel {
    n: usize,
    weights: Vec<f64>,
    p: ScalarFn,
    q: ScalarFn,
    r: ScalarFn,
    r_prime: ScalarFn,
    r_prime_is_fd: bool,
    sup: UpperBound,
    q_primitive: Option<ScalarFn>,
    r_is_zero: bool,
}

impl CoefficientModel {
    /// `r_prime = None` falls back to a symmetric finite difference with
    /// step 1e-6 * max(1, L); the report flags this.
    pub fn new(
        n: usize,
        weights: Vec<f64>,
        p: ScalarFn,
        q: ScalarFn,
        r: ScalarFn,
        r_prime: Option<ScalarFn>,
        sup: UpperBound,
    ) -> Result<CoefficientModel> {
        if n == 0 {
            return Err(Error::InvalidArgument("species count must be >= 1".into()));
        }
        if weights.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {n} species",
                weights.len()
            )));
        }
        if weights.iter().any(|a| !a.is_finite() || *a < 0.0) || weights.iter().all(|a| *a == 0.0)
        {
            return Err(Error::InvalidArgument(
                "weights must be nonnegative with at least one positive".into(),
            ));
        }
        if let UpperBound::Finite(l) = sup {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "upper bound must be positive, got {l}"
                )));
            }
        }
        let r_is_zero = r.is_const_zero();
        if sup == UpperBound::Unbounded && !r_is_zero {
            return Err(Error::InvalidArgument(
                "unbounded aggregate requires r identically zero".into(),
            ));
        }
        let (r_prime, r_prime_is_fd) = match r_prime {
            Some(rp) => (rp, false),
            None => {
                let h = 1e-6 * sup.span().max(1.0);
                let rr = r.clone();
                (
                    ScalarFn::closure(move |s| (rr.eval(s + h) - rr.eval(s - h)) / (2.0 * h)),
                    true,
                )
            }
        };
        Ok(CoefficientModel {
            n,
            weights,
            p,
            q,
            r,
            r_prime,
            r_prime_is_fd,
            sup,
            q_primitive: None,
            r_is_zero,
        })
    }

    /// Registers a closed form for Q so eval_q_primitive skips quadrature.
    pub fn with_q_primitive(mut self, q_primitive: ScalarFn) -> CoefficientModel {
        self.q_primitive = Some(q_primitive);
        self
    }

    pub fn species_count(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sup(&self) -> UpperBound {
        self.sup
    }

    pub fn r_is_zero(&self) -> bool {
        self.r_is_zero
    }

    pub fn r_prime_is_fd(&self) -> bool {
        self.r_prime_is_fd
    }

    pub fn eval_p(&self, s: f64) -> f64 {
        self.p.eval(s)
    }

    pub fn eval_q(&self, s: f64) -> f64 {
        self.q.eval(s)
    }

    pub fn eval_r(&self, s: f64) -> f64 {
        self.r.eval(s)
    }

    pub fn eval_r_prime(&self, s: f64) -> f64 {
        self.r_prime.eval(s)
    }

    fn check_domain(&self, name: &'static str, s: f64) -> Result<()> {
        let tol = 1e-12 * self.sup.span().max(1.0);
        let ok = s >= -tol
            && match self.sup {
                UpperBound::Finite(l) => s <= l + tol,
                UpperBound::Unbounded => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                name,
                value: s,
                sup: self.sup.finite().unwrap_or(f64::INFINITY),
            })
        }
    }

    /// Q(s) = integral_0^s (p + q tau) dtau, by closed form when registered,
    /// otherwise by adaptive Simpson quadrature to 1e-12 absolute.
    pub fn eval_q_primitive(&self, s: f64) -> Result<f64> {
        self.check_domain("s", s)?;
        let s = self.sup.clamp(s);
        if let Some(qp) = &self.q_primitive {
            return Ok(qp.eval(s));
        }
        let integrand = |t: f64| self.p.eval(t) + self.q.eval(t) * t;
        let v = adaptive_simpson(&integrand, 0.0, s, 1e-12, 50);
        if !v.is_finite() {
            return Err(Error::ModelEval {
                what: "Q",
                s,
                value: v,
            });
        }
        Ok(v)
    }

    /// R(s) = r(s) * s.
    pub fn eval_r_capital(&self, s: f64) -> Result<f64> {
        self.check_domain("s", s)?;
        let s = self.sup.clamp(s);
        Ok(self.r.eval(s) * s)
    }

    /// Species-coupling diffusion matrix A_ij = p(u0) delta_ij + a_j u_i q(u0).
    pub fn build_a_matrix(&self, u: &[f64]) -> Result<SquareMatrix> {
        if u.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} species values for {} species",
                u.len(),
                self.n
            )));
        }
        if let Some(&bad) = u.iter().find(|v| **v < 0.0 || !v.is_finite()) {
            return Err(Error::OutOfDomain {
                name: "u_i",
                value: bad,
                sup: f64::INFINITY,
            });
        }
        let u0: f64 = u.iter().zip(&self.weights).map(|(ui, a)| a * ui).sum();
        self.check_domain("u0", u0)?;
        let s = self.sup.clamp(u0);
        let p = self.p.eval(s);
        let q = self.q.eval(s);
        let mut m = SquareMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let mut v = self.weights[j] * u[i] * q;
                if i == j {
                    v += p;
                }
                m.set(i, j, v);
            }
        }
        Ok(m)
    }
}

/// Maxwell-Stefan reduction with equal cross coefficients: the inverted
/// mobility block has p(s) = D / (D^2 + D (D0 - D) s) and
/// q(s) = (D0 - D) / (D^2 + D (D0 - D) s), no drift, so p + q s = 1/D
/// identically and Q(s) = s / D. Aggregate bound L = 1 (mole fractions).
pub fn preset_maxwell_stefan(d0: f64, d: f64, n: usize) -> Result<CoefficientModel> {
    if !(d0 > 0.0) || !(d > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "maxwell_stefan needs positive diffusivities, got D0 = {d0}, D = {d}"
        )));
    }
    let denom = move |s: f64| d * d + d * (d0 - d) * s;
    let p = ScalarFn::closure(move |s| d / denom(s));
    let q = ScalarFn::closure(move |s| (d0 - d) / denom(s));
    let model = CoefficientModel::new(
        n,
        vec![1.0; n],
        p,
        q,
        ScalarFn::Const(0.0),
        Some(ScalarFn::Const(0.0)),
        UpperBound::Finite(1.0),
    )?;
    Ok(model.with_q_primitive(ScalarFn::closure(move |s| s / d)))
}

/// Population-pressure model p(s) = a0 + s, q = 1, r = 1; the caller fixes
/// the aggregate bound. Q(s) = a0 s + s^2, R(s) = s.
pub fn preset_skt(a0: f64, weights: &[f64], sup: f64) -> Result<CoefficientModel> {
    if !(a0 >= 0.0) || !a0.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "skt needs a0 >= 0, got {a0}"
        )));
    }
    if weights.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidArgument(
            "skt weights must all be positive".into(),
        ));
    }
    let model = CoefficientModel::new(
        weights.len(),
        weights.to_vec(),
        ScalarFn::closure(move |s| a0 + s),
        ScalarFn::Const(1.0),
        ScalarFn::Const(1.0),
        Some(ScalarFn::Const(0.0)),
        UpperBound::Finite(sup),
    )?;
    Ok(model.with_q_primitive(ScalarFn::closure(move |s| a0 * s + s * s)))
}

/// Volume-filling ion transport: p(s) = D (1 - s), q = D, r(s) = z (1 - s)
/// on L = 1, so p + q s = D and Q(s) = D s, R(s) = z s (1 - s).
pub fn preset_ion_transport(d: f64, z: f64, n: usize) -> Result<CoefficientModel> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ion_transport needs D > 0, got {d}"
        )));
    }
    if !z.is_finite() {
        return Err(Error::InvalidArgument("charge z must be finite".into()));
    }
    let model = CoefficientModel::new(
        n,
        vec![1.0; n],
        ScalarFn::closure(move |s| d * (1.0 - s)),
        ScalarFn::Const(d),
        ScalarFn::closure(move |s| z * (1.0 - s)),
        Some(ScalarFn::Const(-z)),
        UpperBound::Finite(1.0),
    )?;
    Ok(model.with_q_primitive(ScalarFn::closure(move |s| d * s)))
}

#[derive(Debug, Clone)]
pub struct StructuralReport {
    pub cond1_ok: bool,
    pub cond2_ok: bool,
    pub min_p: f64,
    pub argmin_p: f64,
    pub min_p_plus_qs: f64,
    pub argmin_p_plus_qs: f64,
    /// sup of (r + r' s)^2 / (p + q s); 0 for drift-free models,
    /// infinite when the ratio blows up on the grid.
    pub sup_ratio: f64,
    pub arg_sup_ratio: f64,
    pub samples: usize,
    /// Interval [0, span] that was sampled.
    pub span: f64,
    /// True when the model is unbounded and span = 1 was used as a stand-in.
    pub span_is_surrogate: bool,
    pub r_prime_is_fd: bool,
}

/// Samples the structural conditions on a uniform grid of `samples` points
/// over [0, L] including both endpoints.
pub fn check_conditions(model: &CoefficientModel, samples: usize) -> Result<StructuralReport> {
    if samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 sample points, got {samples}"
        )));
    }
    let span = model.sup.span();
    let span_is_surrogate = model.sup.finite().is_none();

    let mut min_p = f64::INFINITY;
    let mut argmin_p = 0.0;
    let mut min_pqs = f64::INFINITY;
    let mut argmin_pqs = 0.0;
    let mut sup_ratio = 0.0f64;
    let mut arg_sup = 0.0;

    for k in 0..samples {
        let s = span * k as f64 / (samples - 1) as f64;
        let p = model.eval_p(s);
        if !p.is_finite() {
            return Err(Error::ModelEval {
                what: "p",
                s,
                value: p,
            });
        }
        let q = model.eval_q(s);
        if !q.is_finite() {
            return Err(Error::ModelEval {
                what: "q",
                s,
                value: q,
            });
        }
        let pqs = p + q * s;
        if p < min_p {
            min_p = p;
            argmin_p = s;
        }
        if pqs < min_pqs {
            min_pqs = pqs;
            argmin_pqs = s;
        }
        if !model.r_is_zero {
            let r = model.eval_r(s);
            let rp = model.eval_r_prime(s);
            if !r.is_finite() || !rp.is_finite() {
                return Err(Error::ModelEval {
                    what: "r",
                    s,
                    value: if r.is_finite() { rp } else { r },
                });
            }
            let num = {
                let t = r + rp * s;
                t * t
            };
            let ratio = if num <= SIGN_TOL && pqs <= SIGN_TOL {
                0.0
            } else if pqs <= SIGN_TOL {
                f64::INFINITY
            } else {
                num / pqs
            };
            if ratio > sup_ratio {
                sup_ratio = ratio;
                arg_sup = s;
            }
        }
    }

    Ok(StructuralReport {
        cond1_ok: min_p >= -SIGN_TOL && min_pqs >= -SIGN_TOL,
        cond2_ok: sup_ratio.is_finite(),
        min_p,
        argmin_p,
        min_p_plus_qs: min_pqs,
        argmin_p_plus_qs: argmin_pqs,
        sup_ratio,
        arg_sup_ratio: arg_sup,
        samples,
        span,
        span_is_surrogate,
        r_prime_is_fd: model.r_prime_is_fd,
    })
}

fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, fa, m, fm, flm);
    let right = simpson(m, fm, b, fb, frm);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson_rec(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1)
        + adaptive_simpson_rec(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1)
}

/// Integral of f over [a, b] to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, fa, b, fb, fm);
    adaptive_simpson_rec(f, a, fa, b, fb, fm, whole, tol, depth)
}

/// Friction matrix of the Maxwell-Stefan mobility system. `d` is the full
/// (n+1) x (n+1) symmetric table of pair diffusivities with zero diagonal;
/// species n+1 is the solvent eliminated by the volume constraint.
#[derive(Debug, Clone)]
pub struct MsCoefficients {
    n: usize,
    d: SquareMatrix,
}

impl MsCoefficients {
    pub fn new(d: SquareMatrix) -> Result<MsCoefficients> {
        let m = d.n();
        if m < 2 {
            return Err(Error::InvalidArgument(
                "pair diffusivity table needs at least 2 species".into(),
            ));
        }
        for i in 0..m {
            if d.get(i, i) != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "pair diffusivity table must have zero diagonal, d[{i}][{i}] = {}",
                    d.get(i, i)
                )));
            }
            for j in 0..m {
                let v = d.get(i, j);
                if i != j && !(v > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "pair diffusivity d[{i}][{j}] = {v} must be positive"
                    )));
                }
                if (v - d.get(j, i)).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "pair diffusivity table must be symmetric, d[{i}][{j}] != d[{j}][{i}]"
                    )));
                }
            }
        }
        Ok(MsCoefficients { n: m - 1, d })
    }

    /// Equal cross-diffusivities D0 among solutes, D against the solvent.
    pub fn equal_coefficients(d0: f64, d: f64, n: usize) -> Result<MsCoefficients> {
        if !(d0 > 0.0) || !(d > 0.0) {
            return Err(Error::InvalidArgument(
                "equal-coefficient table needs positive D0 and D".into(),
            ));
        }
        let m = n + 1;
        let mut t = SquareMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let v = if i < n && j < n { d0 } else { d };
                t.set(i, j, v);
            }
        }
        MsCoefficients::new(t)
    }

    pub fn species_count(&self) -> usize {
        self.n
    }

    /// A0_ij = -(d_ij - d_{i,n+1}) u_i for i != j,
    /// A0_ii = sum_{k != i} (d_ik - d_{i,n+1}) u_k + d_{i,n+1}.
    pub fn build_a0(&self, u: &[f64]) -> Result<SquareMatrix> {
        let n = self.n;
        if u.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} mole fractions for {n} solutes",
                u.len()
            )));
        }
        if let Some(&bad) = u.iter().find(|v| **v < 0.0 || !v.is_finite()) {
            return Err(Error::OutOfDomain {
                name: "u_i",
                value: bad,
                sup: 1.0,
            });
        }
        let total: f64 = u.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::OutOfDomain {
                name: "sum u_i",
                value: total,
                sup: 1.0,
            });
        }
        let mut a0 = SquareMatrix::zeros(n);
        for i in 0..n {
            let di_solvent = self.d.get(i, n);
            let mut diag = di_solvent;
            for k in 0..n {
                if k == i {
                    continue;
                }
                let coef = self.d.get(i, k) - di_solvent;
                diag += coef * u[k];
                a0.set(i, k, -coef * u[i]);
            }
            a0.set(i, i, diag);
        }
        Ok(a0)
    }
}

#[derive(Debug, Clone)]
pub struct MsInversion {
    pub inverse: SquareMatrix,
    pub cond: f64,
    /// inf-norm of A0 * inverse - I.
    pub residual: f64,
}

pub fn ms_invert_a0(a0: &SquareMatrix) -> Result<MsInversion> {
    let (inverse, cond) = a0.invert()?;
    let residual = a0.mul(&inverse).max_abs_diff(&SquareMatrix::identity(a0.n()));
    if residual > 1e-10 {
        return Err(Error::IllConditioned { cond });
    }
    Ok(MsInversion {
        inverse,
        cond,
        residual,
    })
}

/// Closed-form inverse in the equal-coefficient case:
/// A_ij = (delta_ij D + (D0 - D) u_i) / (D^2 + D (D0 - D) sum_k u_k).
pub fn ms_closed_form_inverse(d0: f64, d: f64, u: &[f64]) -> SquareMatrix {
    let n = u.len();
    let total: f64 = u.iter().sum();
    let denom = d * d + d * (d0 - d) * total;
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut v = (d0 - d) * u[i];
            if i == j {
                v += d;
            }
            m.set(i, j, v / denom);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxwell_stefan_flattens_q_prime() {
        // p + q s collapses to 1/D for every admissible s
        let m = preset_maxwell_stefan(2.0, 1.0, 2).unwrap();
        for k in 0..=100 {
            let s = k as f64 / 100.0;
            let v = m.eval_p(s) + m.eval_q(s) * s;
            assert!((v - 1.0).abs() < 1e-14, "s = {s}, p + q s = {v}");
        }
        assert!((m.eval_q_primitive(0.5).unwrap() - 0.5).abs() < 1e-15);
        let rep = check_conditions(&m, 1000).unwrap();
        assert!(rep.cond1_ok && rep.cond2_ok);
        assert_eq!(rep.sup_ratio, 0.0);
        assert!((rep.min_p_plus_qs - 1.0).abs() < 1e-14);
    }

    #[test]
    fn skt_report() {
        let m = preset_skt(1.0, &[1.0, 1.0], 3.0).unwrap();
        let rep = check_conditions(&m, 1000).unwrap();
        assert!(rep.cond1_ok && rep.cond2_ok);
        assert!((rep.min_p - 1.0).abs() < 1e-15);
        assert_eq!(rep.argmin_p, 0.0);
        // (r + r' s)^2 / (p + q s) = 1 / (1 + 2 s), sup at s = 0
        assert!((rep.sup_ratio - 1.0).abs() < 1e-14);
        assert_eq!(rep.arg_sup_ratio, 0.0);
        assert!((m.eval_q_primitive(2.0).unwrap() - 6.0).abs() < 1e-14);
        assert!((m.eval_r_capital(2.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ion_transport_ratio_peaks_at_interval_ends() {
        // (r + r' s)^2 / (p + q s) = z^2 (1 - 2 s)^2 / D: maximum z^2 / D
        // attained at both s = 0 and s = 1.
        let m = preset_ion_transport(1.0, 2.0, 2).unwrap();
        let rep = check_conditions(&m, 1000).unwrap();
        assert!(rep.cond1_ok && rep.cond2_ok);
        assert!((rep.sup_ratio - 4.0).abs() < 1e-13, "{}", rep.sup_ratio);
        assert!(
            rep.arg_sup_ratio == 0.0 || rep.arg_sup_ratio == 1.0,
            "argmax = {}",
            rep.arg_sup_ratio
        );
        for k in 0..=100 {
            let s = k as f64 / 100.0;
            let v = m.eval_p(s) + m.eval_q(s) * s;
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_diffusion_without_drift_still_passes() {
        // p(s) = s is admissible: p(0) = 0 touches zero but never dips below
        let m = CoefficientModel::new(
            1,
            vec![1.0],
            ScalarFn::parse("s", "s").unwrap(),
            ScalarFn::Const(0.0),
            ScalarFn::Const(0.0),
            None,
            UpperBound::Finite(1.0),
        )
        .unwrap();
        let rep = check_conditions(&m, 1000).unwrap();
        assert!(rep.cond1_ok && rep.cond2_ok);
        assert_eq!(rep.min_p, 0.0);
    }

    #[test]
    fn negative_p_fails_cond1() {
        let m = CoefficientModel::new(
            1,
            vec![1.0],
            ScalarFn::Const(-1.0),
            ScalarFn::Const(0.0),
            ScalarFn::Const(0.0),
            None,
            UpperBound::Finite(1.0),
        )
        .unwrap();
        let rep = check_conditions(&m, 1000).unwrap();
        assert!(!rep.cond1_ok);
    }

    #[test]
    fn drift_over_degenerate_diffusion_fails_cond2() {
        // p = q = 0 where r != 0 blows the ratio up
        let m = CoefficientModel::new(
            1,
            vec![1.0],
            ScalarFn::Const(0.0),
            ScalarFn::Const(0.0),
            ScalarFn::Const(1.0),
            None,
            UpperBound::Finite(1.0),
        )
        .unwrap();
        let rep = check_conditions(&m, 100).unwrap();
        assert!(!rep.cond2_ok);
        assert!(rep.sup_ratio.is_infinite());
    }

    #[test]
    fn fd_r_prime_close_to_analytic() {
        let analytic = preset_ion_transport(1.0, 3.0, 2).unwrap();
        let fd = CoefficientModel::new(
            2,
            vec![1.0, 1.0],
            ScalarFn::closure(|s| 1.0 - s),
            ScalarFn::Const(1.0),
            ScalarFn::parse("3*(1-s)", "s").unwrap(),
            None,
            UpperBound::Finite(1.0),
        )
        .unwrap();
        assert!(fd.r_prime_is_fd());
        assert!(!analytic.r_prime_is_fd());
        for k in 0..=10 {
            let s = 0.05 + 0.9 * k as f64 / 10.0;
            assert!((fd.eval_r_prime(s) - analytic.eval_r_prime(s)).abs() < 1e-8);
        }
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        // strip the registered primitive to force quadrature
        let mut m = preset_skt(0.5, &[1.0, 1.0], 2.0).unwrap();
        m.q_primitive = None;
        for k in 0..=8 {
            let s = 2.0 * k as f64 / 8.0;
            let exact = 0.5 * s + s * s;
            assert!(
                (m.eval_q_primitive(s).unwrap() - exact).abs() < 1e-11,
                "s = {s}"
            );
        }
        assert_eq!(m.eval_q_primitive(0.0).unwrap(), 0.0);
        assert!(m.eval_q_primitive(-0.5).is_err());
        assert!(m.eval_q_primitive(2.5).is_err());
    }

    #[test]
    fn a_matrix_assembly() {
        let m = preset_skt(1.0, &[1.0, 2.0], 10.0).unwrap();
        let a = m.build_a_matrix(&[0.5, 0.25]).unwrap();
        // u0 = 1.0, p = 2, q = 1
        assert!((a.get(0, 0) - (2.0 + 1.0 * 0.5)).abs() < 1e-15);
        assert!((a.get(0, 1) - 2.0 * 0.5).abs() < 1e-15);
        assert!((a.get(1, 0) - 1.0 * 0.25).abs() < 1e-15);
        assert!((a.get(1, 1) - (2.0 + 2.0 * 0.25)).abs() < 1e-15);
        assert!(m.build_a_matrix(&[-0.1, 0.2]).is_err());
    }

    #[test]
    fn ms_a0_worked_example() {
        // n = 2, D0 = 2, D = 1, u = (0.2, 0.3)
        let ms = MsCoefficients::equal_coefficients(2.0, 1.0, 2).unwrap();
        let a0 = ms.build_a0(&[0.2, 0.3]).unwrap();
        assert!((a0.get(0, 0) - 1.3).abs() < 1e-15);
        assert!((a0.get(0, 1) + 0.2).abs() < 1e-15);
        assert!((a0.get(1, 0) + 0.3).abs() < 1e-15);
        assert!((a0.get(1, 1) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn ms_inverse_matches_closed_form() {
        let ms = MsCoefficients::equal_coefficients(2.0, 1.0, 2).unwrap();
        let u = [0.2, 0.3];
        let a0 = ms.build_a0(&u).unwrap();
        let inv = ms_invert_a0(&a0).unwrap();
        let closed = ms_closed_form_inverse(2.0, 1.0, &u);
        assert!(inv.inverse.max_abs_diff(&closed) < 1e-12);
        assert!(inv.residual <= 1e-10);
    }

    #[test]
    fn ms_rejects_bad_inputs() {
        let ms = MsCoefficients::equal_coefficients(2.0, 1.0, 2).unwrap();
        assert!(ms.build_a0(&[0.8, 0.4]).is_err()); // sum > 1
        assert!(ms.build_a0(&[-0.1, 0.3]).is_err());
        assert!(ms.build_a0(&[0.1]).is_err());
        let mut bad = SquareMatrix::zeros(3);
        bad.set(0, 1, 1.0);
        bad.set(1, 0, 2.0); // asymmetric
        bad.set(0, 2, 1.0);
        bad.set(2, 0, 1.0);
        bad.set(1, 2, 1.0);
        bad.set(2, 1, 1.0);
        assert!(MsCoefficients::new(bad).is_err());
    }

    #[test]
    fn unbounded_requires_drift_free() {
        assert!(CoefficientModel::new(
            1,
            vec![1.0],
            ScalarFn::Const(1.0),
            ScalarFn::Const(0.0),
            ScalarFn::Const(1.0),
            None,
            UpperBound::Unbounded,
        )
        .is_err());
        let m = CoefficientModel::new(
            1,
            vec![1.0],
            ScalarFn::Const(1.0),
            ScalarFn::Const(0.0),
            ScalarFn::Const(0.0),
            None,
            UpperBound::Unbounded,
        )
        .unwrap();
        let rep = check_conditions(&m, 100).unwrap();
        assert!(rep.span_is_surrogate);
        assert_eq!(rep.span, 1.0);
    }
}
