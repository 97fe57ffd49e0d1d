//! Symmetric-matrix-valued affine expressions in scalar decision variables and
//! the fuzzy-summation relaxations that turn simplex-parameterised matrix
//! inequalities into finitely many LMIs.
//!
//! Conventions:
//! * `sym(M) = M + Mᵀ` (no ½ factor).
//! * A constraint expression `F(x)` is always read as `F(x) ⪰ t·I`; the
//!   strictness margin `t` is chosen by the solver, never baked in here.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Symmetric matrix unknown; scalars are the upper triangle in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymVarBlock {
    dim: usize,
    first: usize,
}

/// General rectangular matrix unknown; scalars in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RectVarBlock {
    rows: usize,
    cols: usize,
    first: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarBlock {
    Sym(SymVarBlock),
    Rect(RectVarBlock),
}

/// Anything that maps a block of scalar unknowns onto a matrix.
pub trait MatrixVar {
    fn shape(&self) -> (usize, usize);
    fn scalar_count(&self) -> usize;
    /// For every scalar unknown: its global index and the matrix positions
    /// that carry a coefficient of one.
    fn basis(&self) -> Vec<(usize, Vec<(usize, usize)>)>;

    /// Matrix value of the block under assignment `x`.
    fn value(&self, x: &[f64]) -> Mat {
        let (r, c) = self.shape();
        let mut m = Mat::zeros(r, c);
        for (v, cells) in self.basis() {
            for (i, j) in cells {
                m[(i, j)] = x[v];
            }
        }
        m
    }

    /// Writes `m` into the assignment vector. Symmetric blocks read the upper triangle.
    fn write(&self, m: &Mat, x: &mut [f64]) -> Result<()> {
        if m.shape() != self.shape() {
            return Err(Error::Dimension(format!(
                "block is {:?}, matrix is {:?}",
                self.shape(),
                m.shape()
            )));
        }
        for (v, cells) in self.basis() {
            let (i, j) = cells[0];
            x[v] = m[(i, j)];
        }
        Ok(())
    }
}

impl SymVarBlock {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Global scalar index of entry `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // rows 0..i of the upper triangle hold dim + (dim-1) + ... + (dim-i+1) entries
        self.first + i * (2 * self.dim - i + 1) / 2 + (j - i)
    }
}

impl MatrixVar for SymVarBlock {
    fn shape(&self) -> (usize, usize) {
        (self.dim, self.dim)
    }

    fn scalar_count(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    fn basis(&self) -> Vec<(usize, Vec<(usize, usize)>)> {
        let mut out = Vec::with_capacity(self.scalar_count());
        for i in 0..self.dim {
            for j in i..self.dim {
                let cells = if i == j { vec![(i, i)] } else { vec![(i, j), (j, i)] };
                out.push((self.index(i, j), cells));
            }
        }
        out
    }
}

impl RectVarBlock {
    pub fn index(&self, i: usize, j: usize) -> usize {
        self.first + i * self.cols + j
    }
}

impl MatrixVar for RectVarBlock {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn scalar_count(&self) -> usize {
        self.rows * self.cols
    }

    fn basis(&self) -> Vec<(usize, Vec<(usize, usize)>)> {
        (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .map(|(i, j)| (self.index(i, j), vec![(i, j)]))
            .collect()
    }
}

impl MatrixVar for VarBlock {
    fn shape(&self) -> (usize, usize) {
        match self {
            VarBlock::Sym(b) => b.shape(),
            VarBlock::Rect(b) => b.shape(),
        }
    }

    fn scalar_count(&self) -> usize {
        match self {
            VarBlock::Sym(b) => b.scalar_count(),
            VarBlock::Rect(b) => b.scalar_count(),
        }
    }

    fn basis(&self) -> Vec<(usize, Vec<(usize, usize)>)> {
        match self {
            VarBlock::Sym(b) => b.basis(),
            VarBlock::Rect(b) => b.basis(),
        }
    }
}

/// Registry of scalar decision variables, allocated densely as `0..m`.
#[derive(Debug, Clone, Default)]
pub struct VarSpace {
    count: usize,
    blocks: Vec<(String, VarBlock)>,
}

impl VarSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_scalars(&self) -> usize {
        self.count
    }

    pub fn blocks(&self) -> &[(String, VarBlock)] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }

    fn check_name(&self, name: &str) {
        assert!(self.block(name).is_none(), "variable block '{name}' registered twice");
    }

    pub fn add_sym(&mut self, name: &str, dim: usize) -> SymVarBlock {
        self.check_name(name);
        let b = SymVarBlock { dim, first: self.count };
        self.count += b.scalar_count();
        self.blocks.push((name.to_owned(), VarBlock::Sym(b.clone())));
        b
    }

    pub fn add_rect(&mut self, name: &str, rows: usize, cols: usize) -> RectVarBlock {
        self.check_name(name);
        let b = RectVarBlock {
            rows,
            cols,
            first: self.count,
        };
        self.count += b.scalar_count();
        self.blocks.push((name.to_owned(), VarBlock::Rect(b.clone())));
        b
    }
}

/// `F(x) = F₀ + Σ_m x_m F_m` with symmetric `F₀, F_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatExpr {
    dim: usize,
    constant: Mat,
    terms: BTreeMap<usize, Mat>,
}

impl AffineMatExpr {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            constant: Mat::zeros(dim, dim),
            terms: BTreeMap::new(),
        }
    }

    /// Constant expression; `m` is symmetrised.
    pub fn constant(m: &Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("constant term must be square".into()));
        }
        crate::linalg::ensure_finite(m)?;
        Ok(Self {
            dim: m.nrows(),
            constant: crate::linalg::sym_part(m),
            terms: BTreeMap::new(),
        })
    }

    /// The matrix unknown itself, `F(x) = X`.
    pub fn var(block: &SymVarBlock) -> Self {
        let mut e = Self::zero(block.dim);
        for (v, cells) in block.basis() {
            let mut c = Mat::zeros(block.dim, block.dim);
            for (i, j) in cells {
                c[(i, j)] = 1.0;
            }
            e.terms.insert(v, c);
        }
        e
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant_term(&self) -> &Mat {
        &self.constant
    }

    pub fn terms(&self) -> &BTreeMap<usize, Mat> {
        &self.terms
    }

    pub fn max_var(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }

    /// Adds `s · coeff` to the coefficient of variable `v`.
    pub fn add_term(&mut self, v: usize, coeff: &Mat, s: f64) {
        debug_assert_eq!(coeff.shape(), (self.dim, self.dim));
        self.terms
            .entry(v)
            .and_modify(|c| *c += coeff * s)
            .or_insert_with(|| coeff * s);
    }

    fn add_scaled(&mut self, other: &AffineMatExpr, s: f64) {
        assert_eq!(self.dim, other.dim, "expression dimension mismatch");
        self.constant += &other.constant * s;
        for (v, c) in &other.terms {
            self.add_term(*v, c, s);
        }
    }

    /// Drops coefficient matrices that are exactly zero.
    pub fn prune(&mut self) {
        self.terms.retain(|_, c| c.iter().any(|v| *v != 0.0));
    }

    pub fn value(&self, x: &[f64]) -> Mat {
        let mut m = self.constant.clone();
        for (v, c) in &self.terms {
            m += c * x[*v];
        }
        m
    }
}

impl Add<&AffineMatExpr> for AffineMatExpr {
    type Output = AffineMatExpr;
    fn add(mut self, rhs: &AffineMatExpr) -> AffineMatExpr {
        self.add_scaled(rhs, 1.0);
        self
    }
}

impl Sub<&AffineMatExpr> for AffineMatExpr {
    type Output = AffineMatExpr;
    fn sub(mut self, rhs: &AffineMatExpr) -> AffineMatExpr {
        self.add_scaled(rhs, -1.0);
        self
    }
}

impl Neg for AffineMatExpr {
    type Output = AffineMatExpr;
    fn neg(self) -> AffineMatExpr {
        self * -1.0
    }
}

impl Mul<f64> for AffineMatExpr {
    type Output = AffineMatExpr;
    fn mul(mut self, s: f64) -> AffineMatExpr {
        self.constant *= s;
        for c in self.terms.values_mut() {
            *c *= s;
        }
        self
    }
}

/// `sym(L · X · R) = L X R + Rᵀ Xᵀ Lᵀ` for a matrix unknown `X`.
pub fn sym_sandwich<B: MatrixVar>(block: &B, left: &Mat, right: &Mat) -> Result<AffineMatExpr> {
    let (xr, xc) = block.shape();
    if left.ncols() != xr || right.nrows() != xc || left.nrows() != right.ncols() {
        return Err(Error::Dimension(format!(
            "cannot form ({}x{})·({xr}x{xc})·({}x{}) as a square product",
            left.nrows(),
            left.ncols(),
            right.nrows(),
            right.ncols()
        )));
    }
    let d = left.nrows();
    let mut e = AffineMatExpr::zero(d);
    for (v, cells) in block.basis() {
        let mut prod = Mat::zeros(d, d);
        for (i, j) in cells {
            prod.ger(1.0, &left.column(i), &right.row(j).transpose(), 1.0);
        }
        let coeff = &prod + prod.transpose();
        if coeff.iter().any(|c| *c != 0.0) {
            e.terms.insert(v, coeff);
        }
    }
    Ok(e)
}

/// One LMI: `expr(x) ⪰ t·I`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub label: String,
    pub expr: AffineMatExpr,
}

/// Collection of LMIs over a shared variable space.
#[derive(Debug, Clone, Default)]
pub struct LmiProblem {
    pub vars: VarSpace,
    pub constraints: Vec<Constraint>,
}

impl LmiProblem {
    pub fn new(vars: VarSpace) -> Self {
        Self {
            vars,
            constraints: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, mut expr: AffineMatExpr) -> Result<()> {
        if let Some(v) = expr.max_var() {
            if v >= self.vars.num_scalars() {
                return Err(Error::Dimension(format!(
                    "constraint references variable {v} of {}",
                    self.vars.num_scalars()
                )));
            }
        }
        expr.prune();
        self.constraints.push(Constraint {
            label: label.into(),
            expr,
        });
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.num_scalars()
    }

    /// Sum of constraint dimensions.
    pub fn total_rows(&self) -> usize {
        self.constraints.iter().map(|c| c.expr.dim()).sum()
    }
}

/// Single-summation relaxation: `Σ α_i Υ_i ≺ 0` on the simplex is implied by
/// `Υ_i ≺ 0` for every `i`. Returns the expressions `−Υ_i` (to be kept `⪰ t·I`).
pub fn relax_single(family: &[AffineMatExpr]) -> Result<Vec<AffineMatExpr>> {
    let dim = family
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty fuzzy summation".into()))?
        .dim();
    if family.iter().any(|e| e.dim() != dim) {
        return Err(Error::Dimension("summands differ in dimension".into()));
    }
    Ok(family.iter().cloned().map(Neg::neg).collect())
}

/// Double-summation relaxation: `Σ_i Σ_j α_i α_j Υ_ij ≺ 0` on the simplex is
/// implied by `Υ_ij + Υ_ji ≺ 0` for all `i ≥ j`. Returns `((i, j), −(Υ_ij + Υ_ji))`
/// ordered `(0,0), (1,0), (1,1), (2,0), …`.
pub fn relax_double(grid: &[Vec<AffineMatExpr>]) -> Result<Vec<((usize, usize), AffineMatExpr)>> {
    let r = grid.len();
    if r == 0 {
        return Err(Error::InvalidArgument("empty fuzzy summation".into()));
    }
    if let Some(i) = grid.iter().position(|row| row.len() != r) {
        return Err(Error::InvalidArgument(format!(
            "row {i} of the {r}x{r} summation grid has {} cells",
            grid[i].len()
        )));
    }
    let dim = grid[0][0].dim();
    if grid.iter().flatten().any(|e| e.dim() != dim) {
        return Err(Error::Dimension("summands differ in dimension".into()));
    }
    let mut out = Vec::with_capacity(r * (r + 1) / 2);
    for i in 0..r {
        for j in 0..=i {
            let pair = grid[i][j].clone() + &grid[j][i];
            out.push(((i, j), -pair));
        }
    }
    Ok(out)
}
