//! Small semidefinite-programming layer.
//!
//! A [`ConicProgram`] holds named decision variables (scalars or symmetric
//! matrices), an affine objective, and a list of affine constraints of the form
//! `expr ⪰ 0`, `expr ⪯ 0` (linear matrix inequalities) or `expr ≥ 0`, `expr ≤ 0`
//! (scalars). Expressions are compiled eagerly into one coefficient matrix per
//! scalar coordinate of each variable, so every block is symmetric by
//! construction and the whole program can be dumped to text and read back
//! bit-for-bit (see [`dump`]).
//!
//! Solving goes through the [`SdpBackend`] trait; [`InteriorPoint`] is the
//! bundled primal-dual path-following solver.

pub mod dump;
mod ipm;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::matops::{Matrix, SymMatrix};

pub use ipm::{InteriorPoint, SearchDirection};

/// Default feasibility / optimality tolerance, relative to the problem data norm.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default margin used to encode strict inequalities.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarShape {
    Scalar,
    Symmetric(usize),
}

impl VarShape {
    /// Number of scalar coordinates: 1 for a scalar, `d(d+1)/2` for a `d x d` symmetric matrix.
    pub fn n_coords(self) -> usize {
        match self {
            VarShape::Scalar => 1,
            VarShape::Symmetric(d) => d * (d + 1) / 2,
        }
    }

    /// Coordinate index of entry `(i, j)` of a symmetric variable (upper triangle, column by column).
    fn coord(self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        j * (j + 1) / 2 + i
    }

    /// Inverse of [`VarShape::coord`].
    fn entry(self, coord: usize) -> (usize, usize) {
        let mut j = 0;
        while (j + 1) * (j + 2) / 2 <= coord {
            j += 1;
        }
        (coord - j * (j + 1) / 2, j)
    }
}

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    index: usize,
    shape: VarShape,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }

    pub fn shape(self) -> VarShape {
        self.shape
    }

    fn dim(self) -> usize {
        match self.shape {
            VarShape::Scalar => 1,
            VarShape::Symmetric(d) => d,
        }
    }

    /// Basis matrix of one coordinate: `E_ii`, or `E_ij + E_ji` off the diagonal.
    fn basis(self, coord: usize) -> Matrix {
        let d = self.dim();
        let mut b = Matrix::zeros(d, d);
        match self.shape {
            VarShape::Scalar => b[(0, 0)] = 1.0,
            VarShape::Symmetric(_) => {
                let (i, j) = self.shape.entry(coord);
                b[(i, j)] = 1.0;
                b[(j, i)] = 1.0;
            }
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub shape: VarShape,
}

type CoordKey = (usize, usize);

/// Affine symmetric-matrix expression `constant + Σ_k y_k F_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    dim: usize,
    constant: Matrix,
    coeffs: BTreeMap<CoordKey, Matrix>,
}

impl MatExpr {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            constant: Matrix::zeros(dim, dim),
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(c: &SymMatrix) -> Self {
        let mut e = Self::zeros(c.dim());
        e.constant = c.as_matrix().clone();
        e
    }

    /// The symmetric matrix variable itself.
    pub fn var(v: Var) -> Self {
        let d = v.dim();
        let mut e = Self::zeros(d);
        e.add_lxr(v, &Matrix::identity(d, d), &Matrix::identity(d, d), 1.0);
        e
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant_part(&self) -> &Matrix {
        &self.constant
    }

    pub fn add_constant(&mut self, c: &SymMatrix) -> &mut Self {
        assert_eq!(c.dim(), self.dim, "constant has the wrong dimension");
        self.constant += c.as_matrix();
        self
    }

    /// Adds `coef * sym(L X R)` where `sym(M) = (M + M^T) / 2`.
    ///
    /// `L X L^T` is `add_lxr(v, L, L^T, 1)`; an off-diagonal block `M` together with
    /// its mirror is `add_lxr(v, E_i M_l, M_r E_j^T, 2)`.
    pub fn add_lxr(&mut self, v: Var, l: &Matrix, r: &Matrix, coef: f64) -> &mut Self {
        assert!(
            matches!(v.shape, VarShape::Symmetric(_)),
            "add_lxr needs a matrix variable"
        );
        let d = v.dim();
        assert_eq!(l.shape(), (self.dim, d), "left factor has the wrong shape");
        assert_eq!(r.shape(), (d, self.dim), "right factor has the wrong shape");
        for k in 0..v.shape.n_coords() {
            let m = l * v.basis(k) * r;
            let term = (&m + m.transpose()) * (0.5 * coef);
            self.accumulate((v.index, k), term);
        }
        self
    }

    /// Adds `coef * t * F` for a scalar variable `t` and symmetric `F`.
    pub fn add_scalar(&mut self, v: Var, f: &SymMatrix, coef: f64) -> &mut Self {
        assert_eq!(v.shape, VarShape::Scalar, "add_scalar needs a scalar variable");
        assert_eq!(f.dim(), self.dim, "coefficient has the wrong dimension");
        self.accumulate((v.index, 0), f.as_matrix() * coef);
        self
    }

    pub fn add_expr(&mut self, other: &MatExpr, coef: f64) -> &mut Self {
        assert_eq!(other.dim, self.dim, "expressions differ in dimension");
        self.constant += &other.constant * coef;
        for (k, m) in &other.coeffs {
            self.accumulate(*k, m * coef);
        }
        self
    }

    pub fn scaled(&self, coef: f64) -> MatExpr {
        let mut e = MatExpr::zeros(self.dim);
        e.add_expr(self, coef);
        e
    }

    /// Places `self` into the diagonal block starting at `offset` of a `dim x dim` expression.
    pub fn embed(&self, dim: usize, offset: usize) -> MatExpr {
        assert!(offset + self.dim <= dim, "block does not fit");
        let place = |m: &Matrix| {
            let mut out = Matrix::zeros(dim, dim);
            out.view_mut((offset, offset), (self.dim, self.dim))
                .copy_from(m);
            out
        };
        MatExpr {
            dim,
            constant: place(&self.constant),
            coeffs: self.coeffs.iter().map(|(k, m)| (*k, place(m))).collect(),
        }
    }

    fn accumulate(&mut self, key: CoordKey, term: Matrix) {
        match self.coeffs.get_mut(&key) {
            Some(m) => *m += term,
            None => {
                self.coeffs.insert(key, term);
            }
        }
    }

    /// Evaluates the expression at the given variable values.
    pub fn eval(&self, values: &Values) -> Matrix {
        let mut out = self.constant.clone();
        for ((var, coord), m) in &self.coeffs {
            out += m * values.coords[*var][*coord];
        }
        out
    }

    pub(crate) fn terms(&self) -> impl Iterator<Item = (&CoordKey, &Matrix)> {
        self.coeffs.iter()
    }

    pub(crate) fn from_parts(
        dim: usize,
        constant: Matrix,
        coeffs: BTreeMap<CoordKey, Matrix>,
    ) -> Self {
        Self {
            dim,
            constant,
            coeffs,
        }
    }
}

/// Affine scalar expression `constant + Σ_k a_k y_k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalarExpr {
    constant: f64,
    coeffs: BTreeMap<CoordKey, f64>,
}

impl ScalarExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    /// Adds `coef * tr(M X)` for a symmetric variable `X` and symmetric `M`.
    pub fn add_trace(&mut self, v: Var, m: &Matrix, coef: f64) -> &mut Self {
        let d = v.dim();
        assert!(
            matches!(v.shape, VarShape::Symmetric(_)),
            "add_trace needs a matrix variable"
        );
        assert_eq!(m.shape(), (d, d), "trace weight has the wrong shape");
        for k in 0..v.shape.n_coords() {
            let a = (m.component_mul(&v.basis(k))).sum() * coef;
            if a != 0.0 {
                *self.coeffs.entry((v.index, k)).or_insert(0.0) += a;
            }
        }
        self
    }

    /// Adds `coef * t` for a scalar variable `t`.
    pub fn add_scalar(&mut self, v: Var, coef: f64) -> &mut Self {
        assert_eq!(v.shape, VarShape::Scalar, "add_scalar needs a scalar variable");
        *self.coeffs.entry((v.index, 0)).or_insert(0.0) += coef;
        self
    }

    pub fn eval(&self, values: &Values) -> f64 {
        self.constant
            + self
                .coeffs
                .iter()
                .map(|((var, coord), a)| a * values.coords[*var][*coord])
                .sum::<f64>()
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub(crate) fn terms(&self) -> impl Iterator<Item = (&CoordKey, &f64)> {
        self.coeffs.iter()
    }

    pub(crate) fn from_parts(constant: f64, coeffs: BTreeMap<CoordKey, f64>) -> Self {
        Self { constant, coeffs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatSense {
    /// `expr ⪰ 0`
    Psd,
    /// `expr ⪯ 0`
    Nsd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarSense {
    /// `expr ≥ 0`
    Geq,
    /// `expr ≤ 0`
    Leq,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Matrix {
        label: String,
        expr: MatExpr,
        sense: MatSense,
    },
    Scalar {
        label: String,
        expr: ScalarExpr,
        sense: ScalarSense,
    },
}

impl Constraint {
    pub fn psd(label: &str, expr: MatExpr) -> Self {
        Constraint::Matrix {
            label: label.into(),
            expr,
            sense: MatSense::Psd,
        }
    }

    pub fn nsd(label: &str, expr: MatExpr) -> Self {
        Constraint::Matrix {
            label: label.into(),
            expr,
            sense: MatSense::Nsd,
        }
    }

    pub fn geq(label: &str, expr: ScalarExpr) -> Self {
        Constraint::Scalar {
            label: label.into(),
            expr,
            sense: ScalarSense::Geq,
        }
    }

    pub fn leq(label: &str, expr: ScalarExpr) -> Self {
        Constraint::Scalar {
            label: label.into(),
            expr,
            sense: ScalarSense::Leq,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Constraint::Matrix { label, .. } | Constraint::Scalar { label, .. } => label,
        }
    }

    /// The constraint as a block `G ⪰ 0` (scalars become 1x1 blocks).
    pub(crate) fn as_psd_block(&self) -> MatExpr {
        match self {
            Constraint::Matrix { expr, sense, .. } => match sense {
                MatSense::Psd => expr.clone(),
                MatSense::Nsd => expr.scaled(-1.0),
            },
            Constraint::Scalar { expr, sense, .. } => {
                let sign = match sense {
                    ScalarSense::Geq => 1.0,
                    ScalarSense::Leq => -1.0,
                };
                let coeffs = expr
                    .coeffs
                    .iter()
                    .map(|(k, a)| (*k, Matrix::from_element(1, 1, sign * a)))
                    .collect();
                MatExpr::from_parts(1, Matrix::from_element(1, 1, sign * expr.constant), coeffs)
            }
        }
    }

    /// Smallest eigenvalue of the block in `G ⪰ 0` form; negative means violated.
    pub fn slack(&self, values: &Values) -> f64 {
        let g = self.as_psd_block().eval(values);
        SymMatrix::symmetrize(g).min_eigenvalue()
    }
}

/// Encodes a strict matrix inequality with margin `epsilon`:
/// `expr ≻ 0` becomes `expr - εI ⪰ 0` and `expr ≺ 0` becomes `expr + εI ⪯ 0`.
pub fn strictify(
    label: &str,
    expr: MatExpr,
    sense: MatSense,
    epsilon: f64,
) -> Result<Constraint, SdpError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(SdpError::NonPositiveMargin(epsilon));
    }
    let shift = SymMatrix::identity(expr.dim()).scale(epsilon);
    let mut e = expr;
    match sense {
        MatSense::Psd => e.add_constant(&shift.scale(-1.0)),
        MatSense::Nsd => e.add_constant(&shift),
    };
    Ok(Constraint::Matrix {
        label: label.into(),
        expr: e,
        sense,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    vars: Vec<VarDecl>,
    sense: Objective,
    objective: ScalarExpr,
    constraints: Vec<Constraint>,
}

impl Default for ConicProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            sense: Objective::Minimize,
            objective: ScalarExpr::zero(),
            constraints: Vec::new(),
        }
    }

    pub fn sym_var(&mut self, name: &str, dim: usize) -> Var {
        assert!(dim > 0, "matrix variables need a positive dimension");
        self.declare(name, VarShape::Symmetric(dim))
    }

    pub fn scalar_var(&mut self, name: &str) -> Var {
        self.declare(name, VarShape::Scalar)
    }

    fn declare(&mut self, name: &str, shape: VarShape) -> Var {
        self.vars.push(VarDecl {
            name: name.into(),
            shape,
        });
        Var {
            index: self.vars.len() - 1,
            shape,
        }
    }

    pub fn minimize(&mut self, objective: ScalarExpr) {
        self.sense = Objective::Minimize;
        self.objective = objective;
    }

    pub fn maximize(&mut self, objective: ScalarExpr) {
        self.sense = Objective::Maximize;
        self.objective = objective;
    }

    pub fn add(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn vars(&self) -> &[VarDecl] {
        &self.vars
    }

    pub fn var(&self, index: usize) -> Option<Var> {
        self.vars.get(index).map(|d| Var {
            index,
            shape: d.shape,
        })
    }

    pub fn sense(&self) -> Objective {
        self.sense
    }

    pub fn objective(&self) -> &ScalarExpr {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn n_coords(&self) -> usize {
        self.vars.iter().map(|v| v.shape.n_coords()).sum()
    }

    /// Checks that every referenced coordinate belongs to a declared variable and
    /// that every coefficient block is square, symmetric and finite.
    pub fn validate(&self) -> Result<(), SdpError> {
        let check_key = |(var, coord): &CoordKey, what: &str| -> Result<(), SdpError> {
            let decl = self.vars.get(*var).ok_or_else(|| {
                SdpError::Malformed(format!("{what} references undeclared variable #{var}"))
            })?;
            if *coord >= decl.shape.n_coords() {
                return Err(SdpError::Malformed(format!(
                    "{what} references coordinate {coord} of `{}` which has {}",
                    decl.name,
                    decl.shape.n_coords()
                )));
            }
            Ok(())
        };
        for (k, a) in self.objective.terms() {
            check_key(k, "objective")?;
            if !a.is_finite() {
                return Err(SdpError::Malformed("non-finite objective coefficient".into()));
            }
        }
        for c in &self.constraints {
            let block = c.as_psd_block();
            let what = format!("constraint `{}`", c.label());
            let mats = std::iter::once(block.constant_part())
                .chain(block.terms().map(|(_, m)| m));
            for m in mats {
                if m.shape() != (block.dim(), block.dim()) {
                    return Err(SdpError::Malformed(format!("{what} has a misshapen block")));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(SdpError::Malformed(format!("{what} has non-finite data")));
                }
                let asym = crate::matops::max_abs(&(m - m.transpose()));
                if asym > 1e-12 * crate::matops::max_abs(m).max(1.0) {
                    return Err(SdpError::Malformed(format!("{what} is not symmetric")));
                }
            }
            for (k, _) in block.terms() {
                check_key(k, &what)?;
            }
        }
        Ok(())
    }
}

/// Variable values, one coordinate vector per declared variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Values {
    coords: Vec<Vec<f64>>,
    shapes: Vec<VarShape>,
}

impl Values {
    pub(crate) fn from_flat(program: &ConicProgram, flat: &[f64]) -> Self {
        let mut coords = Vec::with_capacity(program.vars.len());
        let mut offset = 0;
        for decl in &program.vars {
            let n = decl.shape.n_coords();
            coords.push(flat[offset..offset + n].to_vec());
            offset += n;
        }
        Self {
            coords,
            shapes: program.vars.iter().map(|d| d.shape).collect(),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        assert_eq!(v.shape, VarShape::Scalar);
        self.coords[v.index][0]
    }

    pub fn matrix(&self, v: Var) -> SymMatrix {
        let d = v.dim();
        let shape = self.shapes[v.index];
        let m = Matrix::from_fn(d, d, |i, j| self.coords[v.index][shape.coord(i, j)]);
        SymMatrix::symmetrize(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Populated iff `status == Optimal`.
    pub objective_value: Option<f64>,
    /// Largest constraint violation at the returned point (0 when every block is PSD).
    pub primal_residual: f64,
    /// Relative duality gap at termination.
    pub gap: f64,
    pub solve_time: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub report: SolveReport,
    pub values: Values,
}

impl Solution {
    pub fn objective(&self) -> f64 {
        self.report
            .objective_value
            .expect("optimal solutions always carry an objective value")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("strictness margin must be positive and finite, got {0}")]
    NonPositiveMargin(f64),
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("program is infeasible (certificate found after {} iterations)", .0.iterations)]
    Infeasible(SolveReport),
    #[error("iteration cap reached after {} iterations (gap {:e})", .0.iterations, .0.gap)]
    IterationLimit(SolveReport),
    #[error("numerical failure: {reason}")]
    NumericalFailure { reason: String, report: SolveReport },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl SdpError {
    pub fn report(&self) -> Option<&SolveReport> {
        match self {
            SdpError::Infeasible(r) | SdpError::IterationLimit(r) => Some(r),
            SdpError::NumericalFailure { report, .. } => Some(report),
            _ => None,
        }
    }
}

/// A solver that accepts a [`ConicProgram`].
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, program: &ConicProgram) -> Result<Solution, SdpError>;
}

/// Solves with the default interior-point backend at tolerance `tol`.
pub fn solve(program: &ConicProgram, tol: f64) -> Result<Solution, SdpError> {
    InteriorPoint::with_tol(tol).solve(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn coordinate_layout_round_trips() {
        let s = VarShape::Symmetric(4);
        for c in 0..s.n_coords() {
            let (i, j) = s.entry(c);
            assert!(i <= j);
            assert_eq!(s.coord(i, j), c);
            assert_eq!(s.coord(j, i), c);
        }
    }

    #[test]
    fn box_problem() {
        // max tr X  s.t. X ⪯ I, X ⪰ 0
        let mut p = ConicProgram::new();
        let x = p.sym_var("X", 2);
        let mut obj = ScalarExpr::zero();
        obj.add_trace(x, &Matrix::identity(2, 2), 1.0);
        p.maximize(obj);
        p.add(Constraint::psd("X>=0", MatExpr::var(x)));
        let mut upper = MatExpr::var(x);
        upper.add_constant(&SymMatrix::identity(2).scale(-1.0));
        p.add(Constraint::nsd("X<=I", upper));

        let sol = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(sol.report.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.objective(), 2.0, epsilon = 1e-7);
        assert_relative_eq!(*sol.values.matrix(x), Matrix::identity(2, 2), epsilon = 1e-6);
    }

    #[test]
    fn objective_saturates_trace_constraint() {
        // min g  s.t. g ≥ tr(C P C^T) with P fixed
        let p_fixed = SymMatrix::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let c = Matrix::from_row_slice(1, 2, &[1.0, -3.0]);
        let target = (&c * p_fixed.as_matrix() * c.transpose())[(0, 0)];

        let mut p = ConicProgram::new();
        let g = p.scalar_var("gamma");
        let mut obj = ScalarExpr::zero();
        obj.add_scalar(g, 1.0);
        p.minimize(obj);
        let mut e = ScalarExpr::constant(-target);
        e.add_scalar(g, 1.0);
        p.add(Constraint::geq("trace bound", e));

        let sol = solve(&p, DEFAULT_TOL).unwrap();
        assert_relative_eq!(sol.objective(), target, max_relative = 1e-7);
        assert_relative_eq!(sol.values.scalar(g), target, max_relative = 1e-7);
    }

    #[test]
    fn strictify_shifts_by_margin() {
        let mut p = ConicProgram::new();
        let x = p.sym_var("P", 2);
        let c = strictify("P>0", MatExpr::var(x), MatSense::Psd, 1e-6).unwrap();
        let Constraint::Matrix { expr, sense, .. } = &c else {
            panic!("expected a matrix constraint")
        };
        assert_eq!(*sense, MatSense::Psd);
        assert_relative_eq!(*expr.constant_part(), Matrix::identity(2, 2) * -1e-6);

        let c = strictify("Psi<0", MatExpr::var(x), MatSense::Nsd, 1e-6).unwrap();
        let Constraint::Matrix { expr, .. } = &c else {
            panic!("expected a matrix constraint")
        };
        assert_relative_eq!(*expr.constant_part(), Matrix::identity(2, 2) * 1e-6);

        assert_eq!(
            strictify("bad", MatExpr::var(x), MatSense::Psd, 0.0),
            Err(SdpError::NonPositiveMargin(0.0))
        );
        assert!(strictify("bad", MatExpr::var(x), MatSense::Psd, -1.0).is_err());
    }

    #[test]
    fn lxr_builds_symmetric_blocks() {
        let mut p = ConicProgram::new();
        let x = p.sym_var("X", 2);
        let mut e = MatExpr::zeros(4);
        let l = Matrix::from_row_slice(4, 2, &[1.0, 2.0, 0.0, 1.0, 0.0, 0.0, 3.0, 0.0]);
        let r = Matrix::from_row_slice(2, 4, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        e.add_lxr(x, &l, &r, 2.0);
        let vals = Values::from_flat(&p, &[1.0, 0.3, 2.0]);
        let xm = vals.matrix(x);
        let expected = &l * xm.as_matrix() * &r + (&l * xm.as_matrix() * &r).transpose();
        assert_relative_eq!(e.eval(&vals), expected, epsilon = 1e-14);
        p.add(Constraint::psd("e", e));
        p.validate().unwrap();
    }

    #[test]
    fn validate_catches_undeclared_variable() {
        let mut other = ConicProgram::new();
        let _ = other.sym_var("A", 2);
        let foreign = other.sym_var("B", 3);
        let mut p = ConicProgram::new();
        let _ = p.sym_var("A", 2);
        p.add(Constraint::psd("bad", MatExpr::var(foreign)));
        assert!(matches!(p.validate(), Err(SdpError::Malformed(_))));
    }

    #[test]
    fn infeasible_program_is_reported() {
        // X ⪰ I and X ⪯ -I cannot both hold
        let mut p = ConicProgram::new();
        let x = p.sym_var("X", 2);
        let mut obj = ScalarExpr::zero();
        obj.add_trace(x, &Matrix::identity(2, 2), 1.0);
        p.minimize(obj);
        p.add(strictify("X>I", MatExpr::var(x), MatSense::Psd, 1.0).unwrap());
        p.add(strictify("X<-I", MatExpr::var(x), MatSense::Nsd, 1.0).unwrap());
        let err = solve(&p, DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, SdpError::Infeasible(_)), "{err:?}");
        assert_eq!(err.report().unwrap().status, SolveStatus::Infeasible);
        assert!(err.report().unwrap().objective_value.is_none());
    }
}
