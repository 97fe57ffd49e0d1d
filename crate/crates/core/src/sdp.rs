//! Strict-feasibility decisions for LMI problems.
//!
//! The reference solver maximises the common margin `t` in
//!
//! ```text
//!     F_c(x) ⪰ t·I  for every constraint c,      |x_m| ≤ B
//! ```
//!
//! with a log-barrier path-following method. Variables are rescaled as
//! `x = B·u` and every constraint is divided by
//! `s = max(1, max‖C_c‖_F, B·max‖A_{c,m}‖_F)`, so the verdict compares the
//! normalised margin `t/s` against `ε_strict`. This makes verdicts invariant
//! under scaling of the constraint data.
//!
//! Whatever the optimiser reports, the returned margin is recomputed from the
//! final assignment with a symmetric eigensolver.
//!
//! The module also reads and writes a plain-text dump of a problem:
//!
//! ```text
//! lmi-problem v1
//! vars <m>
//! constraints <c>
//! <d> <C: d·d numbers> <A_1: d·d numbers> ... <A_m: d·d numbers>   (one line per constraint)
//! ```
//!
//! All matrices are row-major. Lines starting with `#` and blank lines are ignored.

use std::fmt::Write as _;

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{min_eig, Mat};
use crate::lmi::{AffineMatExpr, LmiProblem, VarSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Smallest normalised margin accepted as strict feasibility.
    pub eps_strict: f64,
    /// Box bound on every scalar unknown.
    pub bound: f64,
    /// Cap on Newton steps over the whole solve.
    pub max_iter: usize,
    /// Target bound on the normalised optimality gap.
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_strict: 1e-6,
            bound: 1e4,
            max_iter: 3000,
            tol: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.eps_strict) && ok(self.bound) && ok(self.tol)) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(format!("invalid solver configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    StrictlyFeasible,
    Infeasible,
    NumericalFailure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::StrictlyFeasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityOutcome {
    pub status: Status,
    /// Smallest constraint eigenvalue at the final point (unnormalised).
    pub t_star: f64,
    /// `t_star` divided by the problem scale; this is what the verdict uses.
    pub relative_margin: f64,
    /// Set when the relative margin falls in `[ε/2, ε)`.
    pub boundary: bool,
    /// Present only for strictly feasible outcomes.
    pub assignment: Option<Vec<f64>>,
    pub iterations: usize,
    /// Normalised optimality gap bound at termination.
    pub gap: f64,
}

/// Anything that can decide strict feasibility of an [`LmiProblem`].
pub trait FeasibilitySolver: Sync {
    fn solve(&self, problem: &LmiProblem) -> Result<FeasibilityOutcome>;
    fn eps_strict(&self) -> f64;
}

/// The built-in barrier solver.
#[derive(Debug, Clone, Default)]
pub struct BarrierSolver {
    pub config: SolverConfig,
}

impl BarrierSolver {
    pub fn new(config: SolverConfig) -> Self {
        Self { config }
    }
}

impl FeasibilitySolver for BarrierSolver {
    fn solve(&self, problem: &LmiProblem) -> Result<FeasibilityOutcome> {
        solve_feasibility(problem, &self.config)
    }

    fn eps_strict(&self) -> f64 {
        self.config.eps_strict
    }
}

/// Minimum eigenvalue of every constraint at `x`.
pub fn check_assignment(problem: &LmiProblem, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != problem.num_scalars() {
        return Err(Error::Dimension(format!(
            "assignment has {} entries, problem has {} unknowns",
            x.len(),
            problem.num_scalars()
        )));
    }
    problem.constraints.iter().map(|c| min_eig(&c.expr.value(x))).collect()
}

/// One constraint after normalisation; the margin variable is index `m`
/// with coefficient `−I`.
struct Block {
    dim: usize,
    constant: Mat,
    terms: Vec<(usize, Mat)>,
}

struct Barrier {
    blocks: Vec<Block>,
    m: usize,
}

struct Local {
    chol: Vec<Mat>,
}

impl Barrier {
    fn slack(&self, b: &Block, z: &[f64]) -> Mat {
        let mut s = b.constant.clone();
        for (k, a) in &b.terms {
            s += a * z[*k];
        }
        s
    }

    /// Cholesky factors of every slack, or `None` outside the domain.
    fn factor(&self, z: &[f64]) -> Option<Local> {
        if z[..self.m].iter().any(|u| !(u.abs() < 1.0)) || !z[self.m].is_finite() {
            return None;
        }
        let chol = self
            .blocks
            .iter()
            .map(|b| Cholesky::new(self.slack(b, z)).map(|c| c.unpack()))
            .collect::<Option<Vec<_>>>()?;
        Some(Local { chol })
    }

    fn value(&self, z: &[f64], kappa: f64, loc: &Local) -> f64 {
        let logdet: f64 = loc
            .chol
            .iter()
            .map(|l| 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
            .sum();
        let boxes: f64 = z[..self.m].iter().map(|u| (1.0 - u).ln() + (1.0 + u).ln()).sum();
        -kappa * z[self.m] - logdet - boxes
    }

    fn grad_hess(&self, z: &[f64], kappa: f64, loc: &Local) -> (nalgebra::DVector<f64>, Mat) {
        let nz = self.m + 1;
        let mut g = nalgebra::DVector::zeros(nz);
        let mut h = Mat::zeros(nz, nz);
        g[self.m] = -kappa;
        for (b, l) in self.blocks.iter().zip(&loc.chol) {
            let gs: Vec<(usize, Mat)> = b
                .terms
                .iter()
                .map(|(k, a)| {
                    let x = l.solve_lower_triangular(a).expect("nonsingular factor");
                    let gk = l.solve_lower_triangular(&x.transpose()).expect("nonsingular factor");
                    (*k, gk)
                })
                .collect();
            for (p, (k, gk)) in gs.iter().enumerate() {
                g[*k] -= gk.trace();
                for (l2, gl) in &gs[p..] {
                    let v = gk.dot(gl);
                    h[(*k, *l2)] += v;
                    if k != l2 {
                        h[(*l2, *k)] += v;
                    }
                }
            }
        }
        for a in 0..self.m {
            let u = z[a];
            g[a] += 1.0 / (1.0 - u) - 1.0 / (1.0 + u);
            h[(a, a)] += 1.0 / ((1.0 - u) * (1.0 - u)) + 1.0 / ((1.0 + u) * (1.0 + u));
        }
        (g, h)
    }

    fn barrier_parameter(&self) -> f64 {
        self.blocks.iter().map(|b| b.dim).sum::<usize>() as f64 + 2.0 * self.m as f64
    }
}

/// Newton decrement below which a point counts as centred.
const CENTRED: f64 = 1e-7;

fn newton_direction(g: &nalgebra::DVector<f64>, h: Mat) -> Option<nalgebra::DVector<f64>> {
    let n = h.nrows();
    if let Some(c) = Cholesky::new(h.clone()) {
        return Some(c.solve(&(-g)));
    }
    // Fall back to a lightly regularised factorisation.
    let scale = h.diagonal().amax().max(1e-300);
    let mut reg = 1e-14 * scale;
    for _ in 0..8 {
        let hr = &h + Mat::identity(n, n) * reg;
        if let Some(c) = Cholesky::new(hr) {
            return Some(c.solve(&(-g)));
        }
        reg *= 100.0;
    }
    None
}

fn normalise(problem: &LmiProblem, cfg: &SolverConfig) -> Result<(Barrier, f64)> {
    let m = problem.num_scalars();
    let mut scale = 1.0f64;
    for c in &problem.constraints {
        let e = &c.expr;
        if e.dim() == 0 {
            return Err(Error::Dimension(format!("constraint '{}' is empty", c.label)));
        }
        if e.terms()
            .values()
            .chain([e.constant_term()])
            .any(|a| a.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite(format!("constraint '{}'", c.label)));
        }
        scale = scale.max(e.constant_term().norm());
        for a in e.terms().values() {
            scale = scale.max(cfg.bound * a.norm());
        }
    }
    let blocks = problem
        .constraints
        .iter()
        .map(|c| {
            let d = c.expr.dim();
            let mut terms: Vec<(usize, Mat)> = c
                .expr
                .terms()
                .iter()
                .map(|(k, a)| (*k, a * (cfg.bound / scale)))
                .collect();
            terms.push((m, -Mat::identity(d, d)));
            Block {
                dim: d,
                constant: c.expr.constant_term() / scale,
                terms,
            }
        })
        .collect();
    Ok((Barrier { blocks, m }, scale))
}

/// Solves the max-margin problem and classifies the result.
pub fn solve_feasibility(problem: &LmiProblem, cfg: &SolverConfig) -> Result<FeasibilityOutcome> {
    cfg.validate()?;
    if problem.constraints.is_empty() {
        return Err(Error::InvalidArgument("problem has no constraints".into()));
    }
    let (bar, scale) = normalise(problem, cfg)?;
    let m = bar.m;
    let nu = bar.barrier_parameter();

    // Start at u = 0 with the margin one unit below the smallest eigenvalue.
    let mut z = vec![0.0; m + 1];
    let start = bar
        .blocks
        .iter()
        .map(|b| min_eig(&b.constant))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    z[m] = start - 1.0;

    let mut kappa = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;
    'outer: loop {
        // centring
        loop {
            if iterations >= cfg.max_iter {
                break 'outer;
            }
            iterations += 1;
            let loc = bar.factor(&z).expect("iterate stays strictly inside the domain");
            let (g, h) = bar.grad_hess(&z, kappa, &loc);
            let Some(dz) = newton_direction(&g, h) else {
                break 'outer;
            };
            let slope = g.dot(&dz);
            let decrement = -slope;
            if !(decrement.is_finite()) {
                break 'outer;
            }
            if decrement <= CENTRED {
                break;
            }
            let f0 = bar.value(&z, kappa, &loc);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..80 {
                let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, d)| a + step * d).collect();
                if let Some(tl) = bar.factor(&trial) {
                    if bar.value(&trial, kappa, &tl) <= f0 + 0.25 * step * slope {
                        accepted = Some(trial);
                        break;
                    }
                }
                step *= 0.5;
            }
            match accepted {
                // a step that no longer moves the iterate means the centre is
                // resolved to working precision
                Some(trial) if trial == z => break,
                Some(trial) => z = trial,
                None => {
                    // No progress possible at working precision; treat the
                    // current point as centred if the decrement is already small.
                    if decrement <= 1e-6 {
                        break;
                    }
                    break 'outer;
                }
            }
            if decrement <= CENTRED {
                break;
            }
        }
        gap = nu / kappa;
        if gap <= cfg.tol {
            converged = true;
            break;
        }
        kappa *= 10.0;
    }

    let x: Vec<f64> = z[..m].iter().map(|u| u * cfg.bound).collect();
    let margins = check_assignment(problem, &x)?;
    let t_star = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let relative_margin = t_star / scale;
    let eps = cfg.eps_strict;
    let upper_bound = z[m] + gap;

    let (status, boundary) = if relative_margin >= eps {
        (Status::StrictlyFeasible, false)
    } else if converged || upper_bound < eps / 2.0 {
        (Status::Infeasible, relative_margin >= eps / 2.0)
    } else {
        (Status::NumericalFailure, false)
    };
    Ok(FeasibilityOutcome {
        status,
        t_star,
        relative_margin,
        boundary,
        assignment: (status == Status::StrictlyFeasible).then_some(x),
        iterations,
        gap,
    })
}

/// Text dump of `problem` in the format described in the module docs.
pub fn write_dump(problem: &LmiProblem) -> String {
    let m = problem.num_scalars();
    let mut out = String::new();
    let _ = writeln!(out, "lmi-problem v1");
    let _ = writeln!(out, "vars {m}");
    let _ = writeln!(out, "constraints {}", problem.constraints.len());
    let zero_cache = |d: usize| Mat::zeros(d, d);
    for c in &problem.constraints {
        let d = c.expr.dim();
        let _ = writeln!(out, "# {}", c.label);
        let mut line = d.to_string();
        let zero = zero_cache(d);
        let mats =
            std::iter::once(c.expr.constant_term()).chain((0..m).map(|k| c.expr.terms().get(&k).unwrap_or(&zero)));
        for a in mats {
            for i in 0..d {
                for j in 0..d {
                    let _ = write!(line, " {:.16e}", a[(i, j)]);
                }
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Parses a dump back into a problem whose unknowns form one `m×1` block `x`.
pub fn read_dump(text: &str) -> Result<LmiProblem> {
    let bad = |msg: String| Error::InvalidArgument(format!("problem dump: {msg}"));
    let mut lines = text
        .lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut header = |key: &str| -> Result<Option<usize>> {
        let (no, l) = lines.next().ok_or_else(|| bad(format!("missing '{key}' line")))?;
        if key == "lmi-problem" {
            return if l == "lmi-problem v1" {
                Ok(None)
            } else {
                Err(bad(format!("line {}: unsupported header '{l}'", no + 1)))
            };
        }
        let rest = l
            .strip_prefix(key)
            .ok_or_else(|| bad(format!("line {}: expected '{key} <count>'", no + 1)))?;
        rest.trim()
            .parse()
            .map(Some)
            .map_err(|_| bad(format!("line {}: bad count '{}'", no + 1, rest.trim())))
    };
    header("lmi-problem")?;
    let m = header("vars")?.unwrap_or(0);
    let count = header("constraints")?.unwrap_or(0);
    let mut vars = VarSpace::new();
    if m > 0 {
        vars.add_rect("x", m, 1);
    }
    let mut prob = LmiProblem::new(vars);
    let mut seen = 0;
    for (no, l) in lines {
        let mut toks = l.split_ascii_whitespace();
        let d: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(format!("line {}: bad dimension", no + 1)))?;
        let nums = toks
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("line {}: {e}", no + 1)))?;
        if nums.len() != d * d * (m + 1) {
            return Err(bad(format!(
                "line {}: expected {} numbers after the dimension, found {}",
                no + 1,
                d * d * (m + 1),
                nums.len()
            )));
        }
        let mat = |k: usize| Mat::from_row_slice(d, d, &nums[k * d * d..(k + 1) * d * d]);
        let mut e = AffineMatExpr::constant(&mat(0))?;
        for k in 0..m {
            let a = mat(k + 1);
            if a.iter().any(|v| *v != 0.0) {
                e.add_term(k, &crate::linalg::sym_part(&a), 1.0);
            }
        }
        seen += 1;
        prob.push(format!("c{seen}"), e)?;
    }
    if seen != count {
        return Err(bad(format!("header announces {count} constraints, found {seen}")));
    }
    Ok(prob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{build_quadratic, build_tanaka};
    use crate::model::ModelBundle;
    use approx::assert_abs_diff_eq;

    fn scalar_problem(constant: f64, coeffs: &[(usize, f64)], m: usize, d: usize) -> LmiProblem {
        let mut vars = VarSpace::new();
        if m > 0 {
            vars.add_rect("x", m, 1);
        }
        let mut p = LmiProblem::new(vars);
        let id = Mat::identity(d, d);
        let mut e = AffineMatExpr::constant(&(&id * constant)).unwrap();
        for (k, c) in coeffs {
            e.add_term(*k, &id, *c);
        }
        p.push("c", e).unwrap();
        p
    }

    fn with_bound(b: f64) -> SolverConfig {
        SolverConfig {
            bound: b,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn single_scalar_reaches_the_box() {
        let p = scalar_problem(0.0, &[(0, 1.0)], 1, 2);
        let out = solve_feasibility(&p, &with_bound(10.0)).unwrap();
        assert_eq!(out.status, Status::StrictlyFeasible);
        assert_abs_diff_eq!(out.t_star, 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out.assignment.unwrap()[0], 10.0, epsilon = 1e-6);
    }

    #[test]
    fn opposite_pair_is_infeasible() {
        let mut p = scalar_problem(0.0, &[(0, 1.0)], 1, 2);
        let mut e = AffineMatExpr::zero(2);
        e.add_term(0, &Mat::identity(2, 2), -1.0);
        p.push("neg", e).unwrap();
        let out = solve_feasibility(&p, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, Status::Infeasible);
        assert!(out.assignment.is_none());
        assert!(out.relative_margin.abs() < 1e-8, "{out:?}");
    }

    #[test]
    fn constant_only_problems() {
        let p = scalar_problem(-1.0, &[], 0, 3);
        let out = solve_feasibility(&p, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, Status::Infeasible);
        assert_abs_diff_eq!(out.t_star, -1.0, epsilon = 1e-12);
        assert_eq!(check_assignment(&p, &[]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn boundary_band_is_flagged() {
        // x ⪰ t, x ≤ c: optimum t = c/2 relative to scale B
        let cfg = SolverConfig::default();
        let mut p = scalar_problem(0.0, &[(0, 1.0)], 1, 1);
        let c = 1.5 * cfg.eps_strict * cfg.bound;
        p.push("cap", scalar_problem(c, &[(0, -1.0)], 1, 1).constraints[0].expr.clone())
            .unwrap();
        let out = solve_feasibility(&p, &cfg).unwrap();
        assert_eq!(out.status, Status::Infeasible);
        assert!(out.boundary, "{out:?}");
    }

    #[test]
    fn quadratic_example_verdicts() {
        let b = ModelBundle::example1();
        let cfg = SolverConfig::default();
        let p3 = build_quadratic(&b.model, 3.0).unwrap();
        let out = solve_feasibility(&p3, &cfg).unwrap();
        assert_eq!(out.status, Status::StrictlyFeasible);
        let margins = check_assignment(&p3, out.assignment.as_ref().unwrap()).unwrap();
        assert!(margins.iter().all(|v| *v >= out.t_star - 1e-7));
        let p5 = build_quadratic(&b.model, 5.0).unwrap();
        assert_eq!(solve_feasibility(&p5, &cfg).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn verdict_is_scale_invariant() {
        let b = ModelBundle::example1();
        let cfg = SolverConfig::default();
        let mut p = build_tanaka(&b.model, &[0.1, 0.1], 40.0).unwrap();
        let base = solve_feasibility(&p, &cfg).unwrap();
        for c in &mut p.constraints {
            c.expr = c.expr.clone() * 10.0;
        }
        let scaled = solve_feasibility(&p, &cfg).unwrap();
        assert_eq!(base.status, Status::StrictlyFeasible);
        assert_eq!(scaled.status, base.status);
        assert_abs_diff_eq!(scaled.relative_margin, base.relative_margin, epsilon = 1e-9);
    }

    #[test]
    fn solves_are_deterministic() {
        let b = ModelBundle::example1();
        let p = build_quadratic(&b.model, 2.0).unwrap();
        let a = solve_feasibility(&p, &SolverConfig::default()).unwrap();
        let c = solve_feasibility(&p, &SolverConfig::default()).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn dump_round_trip() {
        let b = ModelBundle::example1();
        let p = build_quadratic(&b.model, 1.25).unwrap();
        let text = write_dump(&p);
        assert!(text.starts_with("lmi-problem v1\nvars 3\nconstraints 3\n"));
        let q = read_dump(&text).unwrap();
        assert_eq!(q.num_scalars(), 3);
        let x = [0.3, -0.7, 1.9];
        for (a, c) in p.constraints.iter().zip(&q.constraints) {
            assert_eq!(a.expr.value(&x), c.expr.value(&x));
        }
        assert!(read_dump("lmi-problem v2\n").is_err());
        assert!(read_dump("lmi-problem v1\nvars 1\nconstraints 1\n1 0.0\n").is_err());
        assert!(read_dump("lmi-problem v1\nvars 0\nconstraints 2\n1 1.0\n").is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let p = LmiProblem::new(VarSpace::new());
        assert!(solve_feasibility(&p, &SolverConfig::default()).is_err());
        let p = scalar_problem(1.0, &[], 0, 1);
        let cfg = SolverConfig {
            eps_strict: 0.0,
            ..SolverConfig::default()
        };
        assert!(solve_feasibility(&p, &cfg).is_err());
        assert!(check_assignment(&p, &[1.0]).is_err());
    }
}
