//! Basis-mode registry, quadrature linear forms and Gaussian statistics.
//!
//! Every optical mode in a circuit is written as a real linear form over the
//! quadratures of a fixed set of basis modes (the input, vacua and EPR halves).
//! Quadratures are ordered `X_1, Y_1, ..., X_N, Y_N`, the vacuum variance is 1
//! and `[X, Y] = 2i`, so `a = (X + iY)/2`. A term `c * b^dagger` contributes
//! `+c` to the X row and `-c` to the Y row of the mode's coefficient matrix.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance for algebraic identities (commutators, physicality).
pub const ALGEBRA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId(String);

impl ModeId {
    pub fn new(id: impl Into<String>) -> Self {
        ModeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ModeId {
    fn from(s: &str) -> Self {
        ModeId(s.to_owned())
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which half of a two-mode squeezed pair a mode is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EprIndex {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModeKind {
    CoherentInput { mean_x: f64, mean_y: f64 },
    Vacuum,
    EprHalf { pair_id: String, index: EprIndex, r: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisMode {
    pub id: ModeId,
    pub kind: ModeKind,
    pub label: String,
}

impl BasisMode {
    pub fn vacuum(id: &str) -> Self {
        BasisMode {
            id: id.into(),
            kind: ModeKind::Vacuum,
            label: id.to_owned(),
        }
    }

    pub fn coherent(id: &str, mean_x: f64, mean_y: f64) -> Self {
        BasisMode {
            id: id.into(),
            kind: ModeKind::CoherentInput { mean_x, mean_y },
            label: id.to_owned(),
        }
    }

    pub fn epr_half(id: &str, pair_id: &str, index: EprIndex, r: f64) -> Self {
        BasisMode {
            id: id.into(),
            kind: ModeKind::EprHalf {
                pair_id: pair_id.to_owned(),
                index,
                r,
            },
            label: id.to_owned(),
        }
    }
}

/// An ordered, immutable set of basis modes.
#[derive(Debug)]
pub struct Registry {
    modes: Vec<BasisMode>,
    index: HashMap<ModeId, usize>,
}

impl Registry {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Number of quadratures, `2N`.
    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn modes(&self) -> &[BasisMode] {
        &self.modes
    }

    pub fn index_of(&self, id: &ModeId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownMode(id.to_string()))
    }

    pub fn mode(&self, id: &ModeId) -> Result<&BasisMode> {
        Ok(&self.modes[self.index_of(id)?])
    }

    /// The first coherent input mode, if the registry has one.
    pub fn input_mode(&self) -> Option<&BasisMode> {
        self.modes
            .iter()
            .find(|m| matches!(m.kind, ModeKind::CoherentInput { .. }))
    }
}

/// Build a registry and the block-diagonal Gaussian state of its basis modes.
pub fn make_registry(descriptors: Vec<BasisMode>) -> Result<(Arc<Registry>, BasisState)> {
    let mut index = HashMap::with_capacity(descriptors.len());
    for (k, m) in descriptors.iter().enumerate() {
        if index.insert(m.id.clone(), k).is_some() {
            return Err(Error::DuplicateMode(m.id.to_string()));
        }
    }

    // pair_id -> (first half position, second half position, r)
    let mut pairs: HashMap<&str, (Option<usize>, Option<usize>, f64)> = HashMap::new();
    for (k, m) in descriptors.iter().enumerate() {
        if let ModeKind::EprHalf { pair_id, index, r } = &m.kind {
            if !(r.is_finite() && *r >= 0.0) {
                return Err(Error::NegativeSqueezing(*r));
            }
            let entry = pairs.entry(pair_id.as_str()).or_insert((None, None, *r));
            if entry.2 != *r {
                return Err(Error::UnmatchedEpr(pair_id.clone()));
            }
            let slot = match index {
                EprIndex::First => &mut entry.0,
                EprIndex::Second => &mut entry.1,
            };
            if slot.replace(k).is_some() {
                return Err(Error::UnmatchedEpr(pair_id.clone()));
            }
        }
    }

    let n = descriptors.len();
    let mut mean = DVector::zeros(2 * n);
    let mut cov = DMatrix::identity(2 * n, 2 * n);
    for (k, m) in descriptors.iter().enumerate() {
        if let ModeKind::CoherentInput { mean_x, mean_y } = m.kind {
            mean[2 * k] = mean_x;
            mean[2 * k + 1] = mean_y;
        }
    }
    for (pair_id, (first, second, r)) in &pairs {
        let (Some(a), Some(b)) = (first, second) else {
            return Err(Error::UnmatchedEpr((*pair_id).to_owned()));
        };
        let block = make_epr_covariance(*r)?;
        let slots = [2 * a, 2 * a + 1, 2 * b, 2 * b + 1];
        for (i, &si) in slots.iter().enumerate() {
            for (j, &sj) in slots.iter().enumerate() {
                cov[(si, sj)] = block[(i, j)];
            }
        }
    }

    let registry = Arc::new(Registry {
        modes: descriptors,
        index,
    });
    let state = BasisState {
        registry: Arc::clone(&registry),
        mean,
        cov,
    };
    Ok((registry, state))
}

/// Covariance of a two-mode squeezed vacuum with squeezing factor `r`, in the
/// order `(X_1, Y_1, X_2, Y_2)`.
///
/// `Var(X_1 - X_2) = Var(Y_1 + Y_2) = 2 e^{-2r}`.
pub fn make_epr_covariance(r: f64) -> Result<Matrix4<f64>> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::NegativeSqueezing(r));
    }
    let c = (2.0 * r).cosh();
    let s = (2.0 * r).sinh();
    #[rustfmt::skip]
    let m = Matrix4::new(
        c, 0.0, s, 0.0,
        0.0, c, 0.0, -s,
        s, 0.0, c, 0.0,
        0.0, -s, 0.0, c,
    );
    Ok(m)
}

/// Mean vector and covariance matrix over the registry's quadratures.
#[derive(Debug, Clone)]
pub struct BasisState {
    registry: Arc<Registry>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl BasisState {
    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn mean_vector(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        symplectic_eigenvalues(&self.cov)
    }

    /// The same statistics over a registry extended by `extra` modes, which
    /// get their standard blocks.
    pub fn extended(&self, extra: Vec<BasisMode>) -> Result<BasisState> {
        let mut modes = self.registry.modes.clone();
        modes.extend(extra);
        let (_, mut state) = make_registry(modes)?;
        let d = self.registry.dim();
        state.cov.view_mut((0, 0), (d, d)).copy_from(&self.cov);
        state.mean.rows_mut(0, d).copy_from(&self.mean);
        Ok(state)
    }

    /// Symmetric, and every symplectic eigenvalue at least `1 - tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        let sym = (&self.cov - self.cov.transpose()).amax() <= tol;
        sym && self.symplectic_eigenvalues().iter().all(|&nu| nu >= 1.0 - tol)
    }
}

/// The block-diagonal symplectic form with 2x2 blocks `[[0, 1], [-1, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymplecticForm {
    pub modes: usize,
}

impl SymplecticForm {
    pub fn new(modes: usize) -> Self {
        SymplecticForm { modes }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let d = 2 * self.modes;
        let mut omega = DMatrix::zeros(d, d);
        for k in 0..self.modes {
            omega[(2 * k, 2 * k + 1)] = 1.0;
            omega[(2 * k + 1, 2 * k)] = -1.0;
        }
        omega
    }
}

fn single_mode_omega() -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -1.0, 0.0)
}

/// Symplectic eigenvalues of a positive definite covariance matrix, sorted
/// ascending, one per mode.
pub fn symplectic_eigenvalues(cov: &DMatrix<f64>) -> Vec<f64> {
    let n = cov.nrows() / 2;
    let sqrt_cov = psd_sqrt(cov);
    let omega = SymplecticForm::new(n).matrix();
    // sqrt(V) Omega sqrt(V) is antisymmetric with eigenvalues +-i nu.
    let a = &sqrt_cov * omega * &sqrt_cov;
    let gram = a.transpose() * &a;
    let mut eig: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    eig.into_iter().step_by(2).collect()
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    X,
    Y,
}

impl Quadrature {
    fn row(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::Y => 1,
        }
    }
}

/// An output mode as a linear form over basis quadratures plus a constant
/// displacement: `(X, Y)^T = coeffs * q + disp`.
#[derive(Debug, Clone)]
pub struct ModeExpr {
    registry: Arc<Registry>,
    coeffs: DMatrix<f64>,
    disp: [f64; 2],
}

impl ModeExpr {
    /// The basis mode `id` itself.
    pub fn identity(registry: &Arc<Registry>, id: &ModeId) -> Result<Self> {
        let k = registry.index_of(id)?;
        let mut coeffs = DMatrix::zeros(2, registry.dim());
        coeffs[(0, 2 * k)] = 1.0;
        coeffs[(1, 2 * k + 1)] = 1.0;
        Ok(ModeExpr {
            registry: Arc::clone(registry),
            coeffs,
            disp: [0.0, 0.0],
        })
    }

    pub fn from_parts(registry: &Arc<Registry>, coeffs: DMatrix<f64>, disp: [f64; 2]) -> Result<Self> {
        if coeffs.nrows() != 2 || coeffs.ncols() != registry.dim() {
            return Err(Error::Unphysical(format!(
                "coefficient matrix is {}x{}, expected 2x{}",
                coeffs.nrows(),
                coeffs.ncols(),
                registry.dim()
            )));
        }
        Ok(ModeExpr {
            registry: Arc::clone(registry),
            coeffs,
            disp,
        })
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    /// Re-express over `target`, which must contain every mode this
    /// expression has weight on.
    pub fn embed(&self, target: &Arc<Registry>) -> Result<ModeExpr> {
        let mut coeffs = DMatrix::zeros(2, target.dim());
        for (k, m) in self.registry.modes.iter().enumerate() {
            if !self.touches(k) {
                continue;
            }
            let j = target.index_of(&m.id)?;
            for row in 0..2 {
                coeffs[(row, 2 * j)] = self.coeffs[(row, 2 * k)];
                coeffs[(row, 2 * j + 1)] = self.coeffs[(row, 2 * k + 1)];
            }
        }
        Ok(ModeExpr {
            registry: Arc::clone(target),
            coeffs,
            disp: self.disp,
        })
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn displacement(&self) -> [f64; 2] {
        self.disp
    }

    pub fn same_registry(&self, other: &ModeExpr) -> bool {
        Arc::ptr_eq(&self.registry, &other.registry)
    }

    pub fn scaled(&self, c: f64) -> ModeExpr {
        ModeExpr {
            registry: Arc::clone(&self.registry),
            coeffs: &self.coeffs * c,
            disp: [self.disp[0] * c, self.disp[1] * c],
        }
    }

    /// The creation-operator counterpart: Y row and Y displacement negated.
    pub fn dagger(&self) -> ModeExpr {
        let mut out = self.clone();
        out.coeffs.row_mut(1).neg_mut();
        out.disp[1] = -out.disp[1];
        out
    }

    /// `ca * a + cb * b`.
    pub fn combine(ca: f64, a: &ModeExpr, cb: f64, b: &ModeExpr) -> Result<ModeExpr> {
        if !a.same_registry(b) {
            return Err(Error::RegistryMismatch);
        }
        Ok(ModeExpr {
            registry: Arc::clone(&a.registry),
            coeffs: &a.coeffs * ca + &b.coeffs * cb,
            disp: [ca * a.disp[0] + cb * b.disp[0], ca * a.disp[1] + cb * b.disp[1]],
        })
    }

    pub fn displaced(&self, dx: f64, dy: f64) -> ModeExpr {
        let mut out = self.clone();
        out.disp[0] += dx;
        out.disp[1] += dy;
        out
    }

    /// 2x2 block of coefficients on basis mode `id`: rows (X, Y) of this
    /// mode, columns (X, Y) of the basis mode.
    pub fn block_on(&self, id: &ModeId) -> Result<Matrix2<f64>> {
        let k = self.registry.index_of(id)?;
        Ok(Matrix2::new(
            self.coeffs[(0, 2 * k)],
            self.coeffs[(0, 2 * k + 1)],
            self.coeffs[(1, 2 * k)],
            self.coeffs[(1, 2 * k + 1)],
        ))
    }

    /// Real ladder-operator coefficients `(alpha, beta)` of the term
    /// `alpha * b + beta * b^dagger` for basis mode `id`. Quadrature-mixing
    /// (off-diagonal) entries are ignored; see [`ModeExpr::block_on`].
    pub fn ladder_coefficients(&self, id: &ModeId) -> Result<(f64, f64)> {
        let b = self.block_on(id)?;
        Ok(((b[(0, 0)] + b[(1, 1)]) / 2.0, (b[(0, 0)] - b[(1, 1)]) / 2.0))
    }

    /// Whether the expression has any weight on basis mode `index`.
    pub fn touches(&self, index: usize) -> bool {
        (0..2).any(|row| self.coeffs[(row, 2 * index)] != 0.0 || self.coeffs[(row, 2 * index + 1)] != 0.0)
    }

    /// `coeffs_a * Omega * coeffs_b^T`; equals `[[0,1],[-1,0]]` for a physical
    /// mode paired with itself and zero for commuting modes.
    pub fn commutator_form(&self, other: &ModeExpr) -> Result<Matrix2<f64>> {
        if !self.same_registry(other) {
            return Err(Error::RegistryMismatch);
        }
        let omega = SymplecticForm::new(self.registry.len()).matrix();
        let m = &self.coeffs * omega * other.coeffs.transpose();
        Ok(Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        self.commutator_form(self)
            .map(|m| (m - single_mode_omega()).amax() <= tol)
            .unwrap_or(false)
    }
}

fn check_state(expr: &ModeExpr, state: &BasisState) -> Result<()> {
    if Arc::ptr_eq(&expr.registry, &state.registry) {
        Ok(())
    } else {
        Err(Error::RegistryMismatch)
    }
}

pub fn variance(expr: &ModeExpr, state: &BasisState, quad: Quadrature) -> Result<f64> {
    check_state(expr, state)?;
    let row = expr.coeffs.row(quad.row());
    Ok((row * &state.cov * row.transpose())[(0, 0)])
}

/// Full 2x2 covariance of `(X, Y)` of the mode.
pub fn covariance(expr: &ModeExpr, state: &BasisState) -> Result<Matrix2<f64>> {
    check_state(expr, state)?;
    let m = &expr.coeffs * &state.cov * expr.coeffs.transpose();
    Ok(Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
}

pub fn mean(expr: &ModeExpr, state: &BasisState) -> Result<(f64, f64)> {
    check_state(expr, state)?;
    let m = &expr.coeffs * &state.mean;
    Ok((m[0] + expr.disp[0], m[1] + expr.disp[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommutatorViolation {
    /// `[X, Y] != 2i` for expression `index`.
    SelfForm {
        index: usize,
        deviation: f64,
    },
    /// Expressions `a` and `b` do not commute.
    Cross {
        a: usize,
        b: usize,
        deviation: f64,
    },
    Registry {
        a: usize,
        b: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommutatorReport {
    pub checked: usize,
    pub violations: Vec<CommutatorViolation>,
}

impl CommutatorReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every expression is a physical mode and every distinct pair commutes.
/// Pass only modes that coexist at the output of one network.
pub fn check_commutators(exprs: &[&ModeExpr]) -> CommutatorReport {
    let mut report = CommutatorReport::default();
    for (i, a) in exprs.iter().enumerate() {
        for (j, b) in exprs.iter().enumerate().skip(i) {
            report.checked += 1;
            let form = match a.commutator_form(b) {
                Ok(f) => f,
                Err(_) => {
                    report.violations.push(CommutatorViolation::Registry { a: i, b: j });
                    continue;
                }
            };
            if i == j {
                let deviation = (form - single_mode_omega()).amax();
                if !(deviation <= ALGEBRA_TOL) {
                    report
                        .violations
                        .push(CommutatorViolation::SelfForm { index: i, deviation });
                }
            } else {
                let deviation = form.amax();
                if !(deviation <= ALGEBRA_TOL) {
                    report
                        .violations
                        .push(CommutatorViolation::Cross { a: i, b: j, deviation });
                }
            }
        }
    }
    report
}
