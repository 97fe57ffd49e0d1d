//! Builders for the five stability conditions, each producing an
//! [`LmiProblem`] at a fixed λ, plus the certificate format that carries a
//! solved set of matrix blocks.
//!
//! | method            | unknowns                | vertex constraints                         |
//! |-------------------|-------------------------|--------------------------------------------|
//! | `quadratic`       | P                       | P, −sym(P Aᵢ)                              |
//! | `tanaka`          | P₁..P_r                 | Pᵢ, pair sums of Σφ_k P_k + sym(P_j Aᵢ)    |
//! | `mozelli`         | P₁..P_r, M              | Pᵢ, Pᵢ + M, pair sums with Σφ_k(P_k + M)   |
//! | `augmented`       | P (augmented)           | P, −sym(P Φᵢₖ)                             |
//! | `augmented-slack` | P, N₁..N_r              | P, pair sums of sym(P Φᵢₖ) + sym(Nᵢ Γⱼ)    |
//!
//! The augmented state is ξ = (x, α⊗x, x⊗x) of dimension n + rn + n².

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::linalg::{kron, mat_from_rows, mat_to_rows, Mat};
use crate::lmi::{relax_double, relax_single, sym_sandwich, AffineMatExpr, LmiProblem, MatrixVar, VarBlock, VarSpace};
use crate::model::{JacobianModel, TsModel};

#[derive(Debug, Clone, PartialEq)]
pub enum MethodKind {
    Quadratic,
    Tanaka { phi: Vec<f64> },
    Mozelli { phi: Vec<f64> },
    Augmented,
    AugmentedSlack,
}

impl MethodKind {
    pub const NAMES: [&'static str; 5] = ["quadratic", "tanaka", "mozelli", "augmented", "augmented-slack"];

    /// Parses a method name; `tanaka` and `mozelli` require `phi`.
    pub fn from_name(name: &str, phi: Option<Vec<f64>>) -> Result<Self> {
        let needs_phi = matches!(name, "tanaka" | "mozelli");
        if needs_phi {
            let phi = phi.ok_or_else(|| Error::InvalidArgument(format!("method '{name}' requires phi")))?;
            check_phi(&phi)?;
            return Ok(if name == "tanaka" {
                MethodKind::Tanaka { phi }
            } else {
                MethodKind::Mozelli { phi }
            });
        }
        if phi.is_some() {
            return Err(Error::InvalidArgument(format!("method '{name}' takes no phi")));
        }
        match name {
            "quadratic" => Ok(MethodKind::Quadratic),
            "augmented" => Ok(MethodKind::Augmented),
            "augmented-slack" => Ok(MethodKind::AugmentedSlack),
            other => Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected one of {})",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Quadratic => "quadratic",
            MethodKind::Tanaka { .. } => "tanaka",
            MethodKind::Mozelli { .. } => "mozelli",
            MethodKind::Augmented => "augmented",
            MethodKind::AugmentedSlack => "augmented-slack",
        }
    }

    pub fn phi(&self) -> Option<&[f64]> {
        match self {
            MethodKind::Tanaka { phi } | MethodKind::Mozelli { phi } => Some(phi),
            _ => None,
        }
    }

    pub fn needs_jacobian(&self) -> bool {
        matches!(self, MethodKind::Augmented | MethodKind::AugmentedSlack)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        if let Some(phi) = self.phi() {
            let parts: Vec<String> = phi.iter().map(|v| v.to_string()).collect();
            write!(f, " (phi = {})", parts.join(","))?;
        }
        Ok(())
    }
}

fn check_phi(phi: &[f64]) -> Result<()> {
    if phi.is_empty() {
        return Err(Error::InvalidArgument("phi is empty".into()));
    }
    if let Some(v) = phi.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidArgument(format!("phi entries must be positive, got {v}")));
    }
    Ok(())
}

fn check_phi_len(phi: &[f64], r: usize) -> Result<()> {
    check_phi(phi)?;
    if phi.len() != r {
        return Err(Error::InvalidArgument(format!(
            "phi has {} entries, model has r = {r}",
            phi.len()
        )));
    }
    Ok(())
}

/// Dimension of the augmented state for `n` states and `r` rules.
pub fn augmented_dim(n: usize, r: usize) -> usize {
    n + r * n + n * n
}

/// ξ = (x, α⊗x, x⊗x).
pub fn xi_vector(x: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut xi = Vec::with_capacity(augmented_dim(x.len(), alpha.len()));
    xi.extend_from_slice(x);
    for a in alpha {
        xi.extend(x.iter().map(|v| a * v));
    }
    for a in x {
        xi.extend(x.iter().map(|v| a * v));
    }
    xi
}

/// Φ for a fixed state matrix `a` and membership Jacobian `j` (r×n).
pub fn phi_matrix(a: &Mat, j: &Mat, r: usize) -> Result<Mat> {
    let n = a.nrows();
    if !a.is_square() || j.shape() != (r, n) {
        return Err(Error::Dimension(format!(
            "phi_matrix needs square A and an {r}x{n} Jacobian, got {:?} and {:?}",
            a.shape(),
            j.shape()
        )));
    }
    let d = augmented_dim(n, r);
    let (o1, o2) = (n, n + r * n);
    let id_n = Mat::identity(n, n);
    let mut phi = Mat::zeros(d, d);
    phi.view_mut((0, 0), (n, n)).copy_from(a);
    phi.view_mut((o1, o1), (r * n, r * n))
        .copy_from(&kron(&Mat::identity(r, r), a)?);
    phi.view_mut((o1, o2), (r * n, n * n))
        .copy_from(&kron(&(j * a), &id_n)?);
    let ksum = kron(&id_n, a)? + kron(a, &id_n)?;
    phi.view_mut((o2, o2), (n * n, n * n)).copy_from(&ksum);
    Ok(phi)
}

/// Γ for a state matrix `a_j` and the full vertex list: [a_j, −[A₁ … A_r], 0].
pub fn gamma_matrix(a_j: &Mat, vertices: &[Mat]) -> Result<Mat> {
    let n = a_j.nrows();
    let r = vertices.len();
    if vertices.iter().any(|v| v.shape() != (n, n)) || !a_j.is_square() {
        return Err(Error::Dimension("gamma_matrix: vertex shapes differ".into()));
    }
    let mut g = Mat::zeros(n, augmented_dim(n, r));
    g.view_mut((0, 0), (n, n)).copy_from(a_j);
    for (i, v) in vertices.iter().enumerate() {
        g.view_mut((0, n + i * n), (n, n)).copy_from(&(-v));
    }
    Ok(g)
}

fn check_index(what: &str, i: usize, len: usize) -> Result<()> {
    if i >= len {
        return Err(Error::InvalidArgument(format!(
            "{what} index {} out of range 1..={len}",
            i + 1
        )));
    }
    Ok(())
}

fn check_jacobian(model: &TsModel, jac: &JacobianModel) -> Result<()> {
    if jac.vertices().iter().any(|j| j.shape() != (model.r(), model.n())) {
        return Err(Error::ModelInconsistency(format!(
            "jacobian vertices must be {}x{}",
            model.r(),
            model.n()
        )));
    }
    Ok(())
}

/// Φᵢₖ at λ. Indices are zero-based.
pub fn build_phi_vertex(model: &TsModel, jac: &JacobianModel, i: usize, k: usize, lambda: f64) -> Result<Mat> {
    check_index("rule", i, model.r())?;
    check_index("jacobian vertex", k, jac.p())?;
    check_jacobian(model, jac)?;
    phi_matrix(&model.vertex(i, lambda), &jac.vertices()[k], model.r())
}

/// Γⱼ at λ. Index is zero-based.
pub fn build_gamma_vertex(model: &TsModel, j: usize, lambda: f64) -> Result<Mat> {
    check_index("rule", j, model.r())?;
    gamma_matrix(&model.vertex(j, lambda), &model.vertices(lambda))
}

pub fn build_quadratic(model: &TsModel, lambda: f64) -> Result<LmiProblem> {
    let n = model.n();
    let mut vars = VarSpace::new();
    let p = vars.add_sym("P", n);
    let mut prob = LmiProblem::new(vars);
    prob.push("P > 0", AffineMatExpr::var(&p))?;
    let id = Mat::identity(n, n);
    let family = model
        .vertices(lambda)
        .iter()
        .map(|a| sym_sandwich(&p, &id, a))
        .collect::<Result<Vec<_>>>()?;
    for (i, e) in relax_single(&family)?.into_iter().enumerate() {
        prob.push(format!("decrease i={}", i + 1), e)?;
    }
    Ok(prob)
}

pub fn build_tanaka(model: &TsModel, phi: &[f64], lambda: f64) -> Result<LmiProblem> {
    fuzzy_lyapunov(model, phi, lambda, false)
}

pub fn build_mozelli(model: &TsModel, phi: &[f64], lambda: f64) -> Result<LmiProblem> {
    fuzzy_lyapunov(model, phi, lambda, true)
}

fn fuzzy_lyapunov(model: &TsModel, phi: &[f64], lambda: f64, with_m: bool) -> Result<LmiProblem> {
    let (n, r) = (model.n(), model.r());
    check_phi_len(phi, r)?;
    let mut vars = VarSpace::new();
    let ps: Vec<_> = (0..r).map(|i| vars.add_sym(&format!("P{}", i + 1), n)).collect();
    let m = with_m.then(|| vars.add_sym("M", n));
    let mut prob = LmiProblem::new(vars);

    for (i, p) in ps.iter().enumerate() {
        prob.push(format!("P{} > 0", i + 1), AffineMatExpr::var(p))?;
    }
    if let Some(m) = &m {
        for (i, p) in ps.iter().enumerate() {
            prob.push(
                format!("P{} + M >= 0", i + 1),
                AffineMatExpr::var(p) + &AffineMatExpr::var(m),
            )?;
        }
    }

    let mut bound = AffineMatExpr::zero(n);
    for (p, f) in ps.iter().zip(phi) {
        bound = bound + &(AffineMatExpr::var(p) * *f);
        if let Some(m) = &m {
            bound = bound + &(AffineMatExpr::var(m) * *f);
        }
    }
    let id = Mat::identity(n, n);
    let a = model.vertices(lambda);
    let grid = (0..r)
        .map(|i| {
            (0..r)
                .map(|j| Ok(sym_sandwich(&ps[j], &id, &a[i])? + &bound))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    for ((i, j), e) in relax_double(&grid)? {
        prob.push(format!("decrease i={} j={}", i + 1, j + 1), e)?;
    }
    Ok(prob)
}

pub fn build_augmented(model: &TsModel, jac: &JacobianModel, lambda: f64) -> Result<LmiProblem> {
    check_jacobian(model, jac)?;
    let d = augmented_dim(model.n(), model.r());
    let mut vars = VarSpace::new();
    let p = vars.add_sym("P", d);
    let mut prob = LmiProblem::new(vars);
    prob.push("P > 0", AffineMatExpr::var(&p))?;
    let id = Mat::identity(d, d);
    for i in 0..model.r() {
        for k in 0..jac.p() {
            let phi = build_phi_vertex(model, jac, i, k, lambda)?;
            let e = relax_single(&[sym_sandwich(&p, &id, &phi)?])?.remove(0);
            prob.push(format!("decrease i={} k={}", i + 1, k + 1), e)?;
        }
    }
    Ok(prob)
}

pub fn build_augmented_slack(model: &TsModel, jac: &JacobianModel, lambda: f64) -> Result<LmiProblem> {
    augmented_slack(model, jac, lambda, true)
}

/// Same constraint layout as [`build_augmented_slack`]; with `slack = false`
/// the N blocks are left out, i.e. forced to zero.
pub(crate) fn augmented_slack(model: &TsModel, jac: &JacobianModel, lambda: f64, slack: bool) -> Result<LmiProblem> {
    check_jacobian(model, jac)?;
    let (n, r) = (model.n(), model.r());
    let d = augmented_dim(n, r);
    let mut vars = VarSpace::new();
    let p = vars.add_sym("P", d);
    let ns: Vec<_> = if slack {
        (0..r).map(|i| vars.add_rect(&format!("N{}", i + 1), d, n)).collect()
    } else {
        Vec::new()
    };
    let mut prob = LmiProblem::new(vars);
    prob.push("P > 0", AffineMatExpr::var(&p))?;

    let id = Mat::identity(d, d);
    let gammas = (0..r)
        .map(|j| build_gamma_vertex(model, j, lambda))
        .collect::<Result<Vec<_>>>()?;
    let mut slack_terms = vec![vec![AffineMatExpr::zero(d); r]; r];
    for (i, n_i) in ns.iter().enumerate() {
        for (j, g) in gammas.iter().enumerate() {
            slack_terms[i][j] = sym_sandwich(n_i, &id, g)?;
        }
    }
    for k in 0..jac.p() {
        let lyap = (0..r)
            .map(|i| sym_sandwich(&p, &id, &build_phi_vertex(model, jac, i, k, lambda)?))
            .collect::<Result<Vec<_>>>()?;
        let grid: Vec<Vec<AffineMatExpr>> = (0..r)
            .map(|i| (0..r).map(|j| lyap[i].clone() + &slack_terms[i][j]).collect())
            .collect();
        for ((i, j), e) in relax_double(&grid)? {
            prob.push(format!("decrease k={} i={} j={}", k + 1, i + 1, j + 1), e)?;
        }
    }
    Ok(prob)
}

/// Dispatches to the builder for `method`.
pub fn build(method: &MethodKind, model: &TsModel, jac: Option<&JacobianModel>, lambda: f64) -> Result<LmiProblem> {
    if !lambda.is_finite() {
        return Err(Error::NonFinite(format!("lambda = {lambda}")));
    }
    let need_jac =
        || jac.ok_or_else(|| Error::InvalidModel(format!("method '{}' needs jacobian_vertices", method.name())));
    match method {
        MethodKind::Quadratic => build_quadratic(model, lambda),
        MethodKind::Tanaka { phi } => build_tanaka(model, phi, lambda),
        MethodKind::Mozelli { phi } => build_mozelli(model, phi, lambda),
        MethodKind::Augmented => build_augmented(model, need_jac()?, lambda),
        MethodKind::AugmentedSlack => build_augmented_slack(model, need_jac()?, lambda),
    }
}

/// Solved matrix blocks of one method at one λ.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub method: MethodKind,
    pub lambda: f64,
    /// Smallest constraint eigenvalue at the stored blocks.
    pub margin: f64,
    pub blocks: BTreeMap<String, Mat>,
}

impl Certificate {
    /// Reads every variable block of `problem` out of the assignment `x`.
    pub fn from_assignment(
        method: MethodKind,
        lambda: f64,
        margin: f64,
        problem: &LmiProblem,
        x: &[f64],
    ) -> Result<Self> {
        if x.len() != problem.num_scalars() {
            return Err(Error::Dimension(format!(
                "assignment has {} entries, problem has {} unknowns",
                x.len(),
                problem.num_scalars()
            )));
        }
        let blocks = problem
            .vars
            .blocks()
            .iter()
            .map(|(name, b)| (name.clone(), b.value(x)))
            .collect();
        Ok(Self {
            method,
            lambda,
            margin,
            blocks,
        })
    }

    /// Scalar assignment for `problem` built from the stored blocks.
    /// Every block of the problem must be present with a matching shape;
    /// extra blocks are an error too.
    pub fn assignment(&self, problem: &LmiProblem) -> Result<Vec<f64>> {
        let mut x = vec![0.0; problem.num_scalars()];
        for (name, b) in problem.vars.blocks() {
            let m = self
                .blocks
                .get(name)
                .ok_or_else(|| Error::ModelInconsistency(format!("certificate lacks block {name}")))?;
            if let VarBlock::Sym(_) = b {
                let asym = (m - m.transpose()).amax();
                if asym > crate::linalg::SYMMETRY_TOL * m.amax().max(1.0) {
                    return Err(Error::NotSymmetric(asym));
                }
            }
            b.write(m, &mut x)
                .map_err(|e| Error::ModelInconsistency(format!("block {name}: {e}")))?;
        }
        if let Some(extra) = self.blocks.keys().find(|k| problem.vars.block(k).is_none()) {
            return Err(Error::ModelInconsistency(format!(
                "certificate block {extra} is not used by method {}",
                self.method.name()
            )));
        }
        Ok(x)
    }

    pub fn block(&self, name: &str) -> Option<&Mat> {
        self.blocks.get(name)
    }

    /// JSON with every number written as a 17-significant-digit decimal.
    pub fn to_json(&self) -> Result<String> {
        let out = CertificateOut {
            method: self.method.name(),
            lambda: raw(self.lambda)?,
            phi: self
                .method
                .phi()
                .map(|p| p.iter().map(|v| raw(*v)).collect())
                .transpose()?,
            margin: raw(self.margin)?,
            blocks: self
                .blocks
                .iter()
                .map(|(k, m)| {
                    let rows = mat_to_rows(m)
                        .into_iter()
                        .map(|row| row.into_iter().map(raw).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()?;
                    Ok((k.clone(), rows))
                })
                .collect::<Result<_>>()?,
        };
        Ok(serde_json::to_string_pretty(&out)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: CertificateIn = serde_json::from_str(text)?;
        let method = MethodKind::from_name(&c.method, c.phi)?;
        let blocks = c
            .blocks
            .into_iter()
            .map(|(k, rows)| Ok((k, mat_from_rows(&rows)?)))
            .collect::<Result<_>>()?;
        for v in [c.lambda, c.margin] {
            if !v.is_finite() {
                return Err(Error::NonFinite("certificate scalar".into()));
            }
        }
        Ok(Self {
            method,
            lambda: c.lambda,
            margin: c.margin,
            blocks,
        })
    }
}

fn raw(v: f64) -> Result<Box<RawValue>> {
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("cannot write {v} to JSON")));
    }
    Ok(RawValue::from_string(format!("{v:.16e}"))?)
}

#[derive(Serialize)]
struct CertificateOut {
    method: &'static str,
    lambda: Box<RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<Vec<Box<RawValue>>>,
    margin: Box<RawValue>,
    blocks: BTreeMap<String, Vec<Vec<Box<RawValue>>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateIn {
    method: String,
    lambda: f64,
    #[serde(default)]
    phi: Option<Vec<f64>>,
    margin: f64,
    blocks: BTreeMap<String, Vec<Vec<f64>>>,
}
