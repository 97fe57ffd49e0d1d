//! Independent checks of solver output: eigenvalue margins of a certificate,
//! nonlinear simulation, Lyapunov decrease along trajectories, and
//! finite-difference checks of the membership and augmented-state dynamics.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::conditions::{build, phi_matrix, xi_vector, Certificate, MethodKind};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{JacobianModel, MembershipSpec, TsModel};
use crate::par::{map_collect, Exec};
use crate::sdp::check_assignment;

/// Relative tolerance for counting a Lyapunov increase.
pub const DECREASE_TOL: f64 = 1e-9;
/// Final-state norm below which a trajectory counts as converged.
pub const CONVERGED_NORM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    /// `(label, λ_min)` for every constraint of the rebuilt problem.
    pub margins: Vec<(String, f64)>,
    pub threshold: f64,
    pub passed: bool,
}

impl MarginReport {
    pub fn worst(&self) -> f64 {
        self.margins.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min)
    }
}

/// Rebuilds the certificate's constraints at `lambda`, substitutes its blocks
/// and checks every margin against `eps_strict / 2`.
pub fn verify_certificate(
    cert: &Certificate,
    model: &TsModel,
    jac: Option<&JacobianModel>,
    lambda: f64,
    eps_strict: f64,
) -> Result<MarginReport> {
    let problem = build(&cert.method, model, jac, lambda)?;
    let x = cert.assignment(&problem)?;
    let values = check_assignment(&problem, &x)?;
    let threshold = eps_strict / 2.0;
    let margins: Vec<(String, f64)> = problem
        .constraints
        .iter()
        .zip(values)
        .map(|(c, v)| (c.label.clone(), v))
        .collect();
    let passed = margins.iter().all(|(_, v)| *v >= threshold);
    Ok(MarginReport {
        margins,
        threshold,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitFlag {
    LeftRegion,
    Converged,
    Horizon,
}

impl ExitFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitFlag::LeftRegion => "left-region",
            ExitFlag::Converged => "converged",
            ExitFlag::Horizon => "horizon",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<(f64, Vec<f64>)>,
    pub exit: ExitFlag,
}

impl Trajectory {
    pub fn last_state(&self) -> &[f64] {
        &self.samples.last().expect("trajectory has at least one sample").1
    }

    /// CSV with header `t,x1,...,xn[,V]`, every `stride`-th sample plus the last.
    pub fn to_csv(&self, v: Option<&[f64]>, stride: usize) -> String {
        let n = self.samples[0].1.len();
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        if v.is_some() {
            out.push_str(",V");
        }
        out.push('\n');
        let stride = stride.max(1);
        let last = self.samples.len() - 1;
        for (k, (t, x)) in self.samples.iter().enumerate() {
            if k % stride != 0 && k != last {
                continue;
            }
            let _ = write!(out, "{t:.16e}");
            for xi in x {
                let _ = write!(out, ",{xi:.16e}");
            }
            if let Some(v) = v {
                let _ = write!(out, ",{:.16e}", v[k]);
            }
            out.push('\n');
        }
        out
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Right-hand side `Σ α_i(x) A_i(λ) x` of the fuzzy system.
pub fn vector_field(model: &TsModel, spec: &MembershipSpec, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
    let a = model.system_matrix(&spec.eval(x)?, lambda)?;
    Ok((a * DVector::from_column_slice(x)).as_slice().to_vec())
}

/// Classical fixed-step RK4 from `x0` over `[0, t_end]`; stops early when
/// the state leaves the modelling region.
pub fn simulate(
    model: &TsModel,
    spec: &MembershipSpec,
    lambda: f64,
    x0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if spec.r() != model.r() || spec.n() != model.n() {
        return Err(Error::ModelInconsistency("memberships do not match the model".into()));
    }
    if x0.len() != model.n() {
        return Err(Error::Dimension(format!(
            "x0 has length {}, model has n = {}",
            x0.len(),
            model.n()
        )));
    }
    if !(dt.is_finite() && dt > 0.0 && t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bad time grid: t_end = {t_end}, dt = {dt}"
        )));
    }
    if !model.region().contains(x0) {
        return Err(Error::InvalidArgument("x0 lies outside the modelling region".into()));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let f = |x: &[f64]| vector_field(model, spec, lambda, x);
    let axpy = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };

    let mut samples = Vec::with_capacity(steps + 1);
    samples.push((0.0, x0.to_vec()));
    let mut x = x0.to_vec();
    for step in 1..=steps {
        let k1 = f(&x)?;
        let k2 = f(&axpy(&x, &k1, dt / 2.0))?;
        let k3 = f(&axpy(&x, &k2, dt / 2.0))?;
        let k4 = f(&axpy(&x, &k3, dt))?;
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t = step as f64 * dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state at t = {t}")));
        }
        samples.push((t, x.clone()));
        if !model.region().contains(&x) {
            return Ok(Trajectory {
                dt,
                samples,
                exit: ExitFlag::LeftRegion,
            });
        }
    }
    let exit = if norm(&x) <= CONVERGED_NORM {
        ExitFlag::Converged
    } else {
        ExitFlag::Horizon
    };
    Ok(Trajectory { dt, samples, exit })
}

/// Simulates several initial states; results keep the input order.
pub fn simulate_batch(
    model: &TsModel,
    spec: &MembershipSpec,
    lambda: f64,
    starts: &[Vec<f64>],
    t_end: f64,
    dt: f64,
    exec: Exec,
) -> Vec<Result<Trajectory>> {
    map_collect(exec, starts, |x0| simulate(model, spec, lambda, x0, t_end, dt))
}

/// Lyapunov function carried by a certificate, evaluated at `x`.
///
/// Quadratic: `xᵀPx`; fuzzy: `xᵀ(Σ α_i P_i)x`; augmented: `ξᵀPξ`.
pub fn lyapunov_value(cert: &Certificate, spec: &MembershipSpec, x: &[f64]) -> Result<f64> {
    let block = |name: &str| {
        cert.block(name)
            .ok_or_else(|| Error::ModelInconsistency(format!("certificate lacks block {name}")))
    };
    let quad = |p: &Mat, v: &[f64]| -> Result<f64> {
        if p.nrows() != v.len() {
            return Err(Error::Dimension(format!(
                "block is {}x{}, vector has length {}",
                p.nrows(),
                p.ncols(),
                v.len()
            )));
        }
        let v = DVector::from_column_slice(v);
        Ok((v.transpose() * p * &v)[(0, 0)])
    };
    match &cert.method {
        MethodKind::Quadratic => quad(block("P")?, x),
        MethodKind::Tanaka { .. } | MethodKind::Mozelli { .. } => {
            let alpha = spec.eval(x)?;
            let mut p = Mat::zeros(x.len(), x.len());
            for (i, a) in alpha.iter().enumerate() {
                p += block(&format!("P{}", i + 1))? * *a;
            }
            quad(&p, x)
        }
        MethodKind::Augmented | MethodKind::AugmentedSlack => quad(block("P")?, &xi_vector(x, &spec.eval(x)?)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecreaseReport {
    pub values: Vec<f64>,
    pub violations: usize,
    /// Largest single-step increase `V_{k+1} − V_k` (negative if V always decreases).
    pub worst_increase: f64,
}

/// Counts steps where V grows by more than `DECREASE_TOL · max V`.
pub fn check_lyapunov_decrease(cert: &Certificate, spec: &MembershipSpec, traj: &Trajectory) -> Result<DecreaseReport> {
    let values = traj
        .samples
        .iter()
        .map(|(_, x)| lyapunov_value(cert, spec, x))
        .collect::<Result<Vec<_>>>()?;
    let vmax = values.iter().copied().fold(0.0, f64::max);
    let tol = DECREASE_TOL * vmax;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for w in values.windows(2) {
        let inc = w[1] - w[0];
        worst = worst.max(inc);
        if inc > tol {
            violations += 1;
        }
    }
    Ok(DecreaseReport {
        values,
        violations,
        worst_increase: worst,
    })
}

/// Unit flow direction and flow norm at `x`, or `None` when the flow vanishes.
fn flow_direction(
    model: &TsModel,
    spec: &MembershipSpec,
    lambda: f64,
    x: &[f64],
) -> Result<Option<(Vec<f64>, Vec<f64>, f64)>> {
    let flow = vector_field(model, spec, lambda, x)?;
    let fnorm = norm(&flow);
    if fnorm == 0.0 {
        return Ok(None);
    }
    let dir = flow.iter().map(|v| v / fnorm).collect();
    Ok(Some((flow, dir, fnorm)))
}

fn shifted(x: &[f64], dir: &[f64], s: f64) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, d)| a + s * d).collect()
}

/// Compares the time derivative of α along the flow, estimated by a central
/// difference in the flow direction, with `J_fd(x)·A(α(x))x`. Returns `None`
/// when the flow vanishes at `x`.
pub fn check_mf_dynamics(
    spec: &MembershipSpec,
    model: &TsModel,
    lambda: f64,
    x: &[f64],
    h: f64,
) -> Result<Option<f64>> {
    let Some((flow, dir, fnorm)) = flow_direction(model, spec, lambda, x)? else {
        return Ok(None);
    };
    let ap = spec.eval(&shifted(x, &dir, h))?;
    let am = spec.eval(&shifted(x, &dir, -h))?;
    let predicted = spec.jacobian_fd(x, h)? * DVector::from_vec(flow);
    let residual = ap
        .iter()
        .zip(&am)
        .zip(predicted.iter())
        .map(|((p, m), q)| ((p - m) / (2.0 * h) * fnorm - q).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(Some(residual))
}

/// Compares dξ/dt along the flow (central difference) with `Φ(x)ξ(x)`, where
/// Φ uses `A(α(x))` and the finite-difference membership Jacobian.
pub fn check_xi_dynamics(
    model: &TsModel,
    spec: &MembershipSpec,
    lambda: f64,
    x: &[f64],
    h: f64,
) -> Result<Option<f64>> {
    let Some((_, dir, fnorm)) = flow_direction(model, spec, lambda, x)? else {
        return Ok(None);
    };
    let alpha = spec.eval(x)?;
    let a = model.system_matrix(&alpha, lambda)?;
    let phi = phi_matrix(&a, &spec.jacobian_fd(x, h)?, model.r())?;
    let xi = DVector::from_vec(xi_vector(x, &alpha));
    let predicted = phi * xi;
    let xi_at = |s: f64| -> Result<Vec<f64>> {
        let y = shifted(x, &dir, s);
        Ok(xi_vector(&y, &spec.eval(&y)?))
    };
    let (p, m) = (xi_at(h)?, xi_at(-h)?);
    let residual = p
        .iter()
        .zip(&m)
        .zip(predicted.iter())
        .map(|((p, m), q)| ((p - m) / (2.0 * h) * fnorm - q).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(Some(residual))
}

/// ‖Γ(α(x)) ξ(x)‖ with `Γ(α) = Σ_j α_j Γ_j`; zero in exact arithmetic.
pub fn gamma_identity_residual(model: &TsModel, spec: &MembershipSpec, lambda: f64, x: &[f64]) -> Result<f64> {
    let alpha = spec.eval(x)?;
    let mut g = Mat::zeros(model.n(), crate::conditions::augmented_dim(model.n(), model.r()));
    for (j, a) in alpha.iter().enumerate() {
        g += crate::conditions::build_gamma_vertex(model, j, lambda)? * *a;
    }
    Ok((g * DVector::from_vec(xi_vector(x, &alpha))).norm())
}
