//! Discrete-time linear plants, references and quadratic costs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, ensure_finite, ensure_len, ensure_positive_definite, ensure_shape};

/// `x(t+1) = A x(t) + B u(t)`, `y(t) = C x(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 || c.nrows() == 0 {
            return Err(Error::InvalidParameter {
                name: "model",
                reason: "n, m and p must all be at least 1".into(),
            });
        }
        ensure_shape(&a, n, n, "A")?;
        ensure_shape(&b, n, b.ncols(), "B")?;
        ensure_shape(&c, c.nrows(), n, "C")?;
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        ensure_finite(&c, "C")?;
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// One step of the dynamics.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len(x, self.n(), "state")?;
        ensure_len(u, self.m(), "input")?;
        Ok(&self.a * x + &self.b * u)
    }

    pub fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len(x, self.n(), "state")?;
        Ok(&self.c * x)
    }

    /// `[B, AB, ..., A^{n-1} B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = DMatrix::zeros(n, n * m);
        let mut blk = self.b.clone();
        for k in 0..n {
            out.view_mut((0, k * m), (n, m)).copy_from(&blk);
            blk = &self.a * blk;
        }
        out
    }

    pub fn is_controllable(&self) -> bool {
        linalg::rank(&self.controllability_matrix()) == self.n()
    }

    /// `[C; CA; ...; CA^{n-1}]`.
    pub fn observability_matrix(&self) -> DMatrix<f64> {
        let (n, p) = (self.n(), self.p());
        let mut out = DMatrix::zeros(n * p, n);
        let mut blk = self.c.clone();
        for k in 0..n {
            out.view_mut((k * p, 0), (p, n)).copy_from(&blk);
            blk *= &self.a;
        }
        out
    }

    pub fn is_observable(&self) -> bool {
        linalg::rank(&self.observability_matrix()) == self.n()
    }

    /// Order-independent fingerprint of the matrices (sha256 of dims and
    /// little-endian f64 bits).
    pub fn fingerprint(&self) -> String {
        crate::fixtures::hash_matrices(&[&self.a, &self.b, &self.c])
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

impl TryFrom<ModelRepr> for StateSpaceModel {
    type Error = Error;
    fn try_from(r: ModelRepr) -> Result<Self> {
        StateSpaceModel::new(
            linalg::from_rows(&r.a)?,
            linalg::from_rows(&r.b)?,
            linalg::from_rows(&r.c)?,
        )
    }
}

impl From<StateSpaceModel> for ModelRepr {
    fn from(m: StateSpaceModel) -> Self {
        ModelRepr {
            a: linalg::to_rows(&m.a),
            b: linalg::to_rows(&m.b),
            c: linalg::to_rows(&m.c),
        }
    }
}

/// Reference dynamics `r(t+1) = F r(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGenerator {
    f: DMatrix<f64>,
    r0: DVector<f64>,
}

impl ReferenceGenerator {
    pub fn new(f: DMatrix<f64>, r0: DVector<f64>) -> Result<Self> {
        let p = r0.len();
        if p == 0 {
            return Err(dim_err("reference", "p >= 1", 0));
        }
        ensure_shape(&f, p, p, "F")?;
        ensure_finite(&f, "F")?;
        linalg::ensure_finite_vec(&r0, "r0")?;
        Ok(Self { f, r0 })
    }

    /// A constant set-point (`F = I`).
    pub fn constant(r0: DVector<f64>) -> Result<Self> {
        let p = r0.len();
        Self::new(DMatrix::identity(p, p), r0)
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }
    pub fn r0(&self) -> &DVector<f64> {
        &self.r0
    }
    pub fn p(&self) -> usize {
        self.r0.len()
    }

    pub fn step(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len(r, self.p(), "reference")?;
        Ok(&self.f * r)
    }

    /// `r(0), ..., r(len-1)`.
    pub fn trajectory(&self, len: usize) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(len);
        let mut r = self.r0.clone();
        for _ in 0..len {
            let next = &self.f * &r;
            out.push(r);
            r = next;
        }
        out
    }
}

/// Output-error weight `Q`, input weight `R` and discount `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    gamma: f64,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, gamma: f64) -> Result<Self> {
        ensure_positive_definite(&q, "Q")?;
        ensure_positive_definite(&r, "R")?;
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must lie in (0, 1], got {gamma}"),
            });
        }
        Ok(Self { q, r, gamma })
    }

    pub fn identity(p: usize, m: usize, gamma: f64) -> Result<Self> {
        Self::new(DMatrix::identity(p, p), DMatrix::identity(m, m), gamma)
    }

    pub fn from_diagonals(q: &[f64], r: &[f64], gamma: f64) -> Result<Self> {
        Self::new(linalg::diag(q), linalg::diag(r), gamma)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn p(&self) -> usize {
        self.q.nrows()
    }
    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    /// `(y - r)^T Q (y - r) + u^T R u`.
    pub fn stage_cost(&self, y: &DVector<f64>, r: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        ensure_len(y, self.p(), "output")?;
        ensure_len(r, self.p(), "reference")?;
        ensure_len(u, self.m(), "input")?;
        let e = y - r;
        Ok(e.dot(&(&self.q * &e)) + u.dot(&(&self.r * u)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn step_and_output() {
        let m = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let x = dvector![1.0, 2.0];
        assert_eq!(m.step(&x, &dvector![7.0]).unwrap(), x);
        assert_eq!(m.output(&x).unwrap(), x);
        assert!(m.step(&dvector![1.0], &dvector![0.0]).is_err());
    }

    #[test]
    fn paper_first_row_product() {
        let m = fixtures::paper_model();
        let x = DVector::from_element(6, 20.0);
        let next = m.step(&x, &DVector::zeros(7)).unwrap();
        assert!((next[0] - (0.992 * 20.0 + 0.0018 * 20.0)).abs() < 1e-12);
        assert!((next[0] - 19.876).abs() < 1e-12);
    }

    #[test]
    fn model_rejects_bad_shapes() {
        let bad = StateSpaceModel::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2));
        assert!(bad.is_err());
        let nan = StateSpaceModel::new(dmatrix![f64::NAN], dmatrix![1.0], dmatrix![1.0]);
        assert!(matches!(nan, Err(Error::NonFinite("A"))));
    }

    #[test]
    fn reference_step_examples() {
        let r = fixtures::paper_reference();
        let g = ReferenceGenerator::constant(r.clone()).unwrap();
        assert_eq!(g.step(&r).unwrap(), r);
        let zero = ReferenceGenerator::new(DMatrix::zeros(5, 5), r.clone()).unwrap();
        assert_eq!(zero.step(&r).unwrap(), DVector::zeros(5));
        let dbl = ReferenceGenerator::new(dmatrix![2.0], dvector![3.0]).unwrap();
        assert_eq!(dbl.step(&dvector![3.0]).unwrap(), dvector![6.0]);
        assert_eq!(dbl.trajectory(3), vec![dvector![3.0], dvector![6.0], dvector![12.0]]);
    }

    #[test]
    fn stage_cost_examples() {
        let w = CostWeights::identity(1, 1, 1.0).unwrap();
        assert_eq!(w.stage_cost(&dvector![5.0], &dvector![5.0], &dvector![0.0]).unwrap(), 0.0);
        assert_eq!(w.stage_cost(&dvector![2.0], &dvector![0.0], &dvector![3.0]).unwrap(), 13.0);
        let w = CostWeights::new(dmatrix![2.0], dmatrix![0.5], 1.0).unwrap();
        assert_eq!(w.stage_cost(&dvector![1.0], &dvector![0.0], &dvector![2.0]).unwrap(), 4.0);
    }

    #[test]
    fn weights_validation() {
        assert!(CostWeights::from_diagonals(&[1.0], &[0.0], 0.9).is_err());
        assert!(CostWeights::from_diagonals(&[1.0], &[1.0], 0.0).is_err());
        assert!(CostWeights::from_diagonals(&[1.0], &[1.0], 1.5).is_err());
        assert!(CostWeights::from_diagonals(&[1.0], &[1.0], 1.0).is_ok());
    }

    #[test]
    fn controllability_and_observability() {
        let m = StateSpaceModel::new(DMatrix::zeros(3, 3), DMatrix::identity(3, 3), DMatrix::identity(3, 3)).unwrap();
        assert_eq!(linalg::rank(&m.controllability_matrix()), 3);
        assert!(m.is_controllable());
        assert!(m.is_observable());
        let m = StateSpaceModel::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2)).unwrap();
        assert_eq!(linalg::rank(&m.controllability_matrix()), 0);
        assert!(!m.is_controllable());
        assert!(!m.is_observable());
        let paper = fixtures::paper_model();
        assert!(paper.is_controllable());
        assert!(paper.is_observable());
    }

    #[test]
    fn model_json_round_trip() {
        let m = fixtures::paper_model();
        let s = serde_json::to_string(&m).unwrap();
        let back: StateSpaceModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
