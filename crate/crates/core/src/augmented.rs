//! State-plus-reference augmentation `X = [x; r]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Result};
use crate::linalg::{block_diag, ensure_len};
use crate::statespace::{CostWeights, ReferenceGenerator, StateSpaceModel};

/// `X(t+1) = T X(t) + B1 u(t)` with stage weight `X^T Q1 X`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    t: DMatrix<f64>,
    b1: DMatrix<f64>,
    q1: DMatrix<f64>,
    n: usize,
    p: usize,
}

impl AugmentedSystem {
    /// Assembles the system from raw blocks; the first `n` coordinates are
    /// the plant state and the rest the reference.
    pub fn from_parts(t: DMatrix<f64>, b1: DMatrix<f64>, q1: DMatrix<f64>, n: usize) -> Result<Self> {
        let dim = t.nrows();
        crate::linalg::ensure_shape(&t, dim, dim, "T")?;
        crate::linalg::ensure_shape(&b1, dim, b1.ncols(), "B1")?;
        crate::linalg::ensure_shape(&q1, dim, dim, "Q1")?;
        if n > dim {
            return Err(dim_err("augmented split", format!("n <= {dim}"), n));
        }
        Ok(Self { t, b1, q1, n, p: dim - n })
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }
    pub fn b1(&self) -> &DMatrix<f64> {
        &self.b1
    }
    pub fn q1(&self) -> &DMatrix<f64> {
        &self.q1
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn m(&self) -> usize {
        self.b1.ncols()
    }
    /// `n + p`.
    pub fn dim(&self) -> usize {
        self.n + self.p
    }

    /// Stacks `[x; r]`.
    pub fn state(&self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len(x, self.n, "state")?;
        ensure_len(r, self.p, "reference")?;
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(0, self.n).copy_from(x);
        out.rows_mut(self.n, self.p).copy_from(r);
        Ok(out)
    }
}

/// Builds `T = diag(A, F)`, `B1 = [B; 0]` and
/// `Q1 = [[C^T Q C, -C^T Q], [-Q C, Q]]`.
pub fn augment(model: &StateSpaceModel, gen: &ReferenceGenerator, w: &CostWeights) -> Result<AugmentedSystem> {
    let (n, m, p) = (model.n(), model.m(), model.p());
    if gen.p() != p {
        return Err(dim_err("reference dimension", p, gen.p()));
    }
    if w.p() != p || w.m() != m {
        return Err(dim_err("weights", format!("Q {p}x{p}, R {m}x{m}"), format!("Q {0}x{0}, R {1}x{1}", w.p(), w.m())));
    }
    let t = block_diag(model.a(), gen.f());
    let mut b1 = DMatrix::zeros(n + p, m);
    b1.view_mut((0, 0), (n, m)).copy_from(model.b());

    let c = model.c();
    let q = w.q();
    let qc = q * c;
    let mut q1 = DMatrix::zeros(n + p, n + p);
    q1.view_mut((0, 0), (n, n)).copy_from(&(c.transpose() * &qc));
    q1.view_mut((0, n), (n, p)).copy_from(&(-(c.transpose() * q)));
    q1.view_mut((n, 0), (p, n)).copy_from(&(-&qc));
    q1.view_mut((n, n), (p, p)).copy_from(q);
    crate::linalg::symmetrize(&mut q1);
    Ok(AugmentedSystem { t, b1, q1, n, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_blocks() {
        let model = StateSpaceModel::new(dmatrix![0.7], dmatrix![2.0], dmatrix![1.0]).unwrap();
        let gen = ReferenceGenerator::new(dmatrix![0.3], DVector::from_element(1, 1.0)).unwrap();
        let w = CostWeights::identity(1, 1, 1.0).unwrap();
        let aug = augment(&model, &gen, &w).unwrap();
        assert_eq!(aug.t(), &dmatrix![0.7, 0.0; 0.0, 0.3]);
        assert_eq!(aug.b1(), &dmatrix![2.0; 0.0]);
        assert_eq!(aug.q1(), &dmatrix![1.0, -1.0; -1.0, 1.0]);
    }

    #[test]
    fn identity_output_gives_difference_weight() {
        let model = StateSpaceModel::new(DMatrix::identity(2, 2), DMatrix::identity(2, 1), DMatrix::identity(2, 2)).unwrap();
        let gen = ReferenceGenerator::constant(DVector::zeros(2)).unwrap();
        let w = CostWeights::identity(2, 1, 1.0).unwrap();
        let aug = augment(&model, &gen, &w).unwrap();
        let i = DMatrix::<f64>::identity(2, 2);
        let expect = DMatrix::from_fn(4, 4, |r, c| {
            let s = if (r < 2) == (c < 2) { 1.0 } else { -1.0 };
            s * i[(r % 2, c % 2)]
        });
        assert_eq!(aug.q1(), &expect);
    }

    #[test]
    fn paper_blocks_read_back() {
        let model = fixtures::paper_model();
        let gen = fixtures::paper_reference_generator();
        let w = fixtures::observer_bo_weights(0.99);
        let aug = augment(&model, &gen, &w).unwrap();
        assert_eq!(aug.t().view((0, 0), (6, 6)), model.a().view((0, 0), (6, 6)));
        assert_eq!(aug.t().view((6, 6), (5, 5)), gen.f().view((0, 0), (5, 5)));
        assert!(aug.t().view((0, 6), (6, 5)).iter().all(|&v| v == 0.0));
        assert!(aug.b1().view((6, 0), (5, 7)).iter().all(|&v| v == 0.0));
        let c = model.c();
        let q = w.q();
        assert!((aug.q1().view((0, 0), (6, 6)) - c.transpose() * q * c).amax() <= 1e-14);
        assert!((aug.q1().view((0, 6), (6, 5)) + c.transpose() * q).amax() <= 1e-14);
        assert!((aug.q1().view((6, 0), (5, 6)) + q * c).amax() <= 1e-14);
        assert_eq!(aug.q1().view((6, 6), (5, 5)), q.view((0, 0), (5, 5)));
        assert_eq!(aug.q1(), &aug.q1().transpose());
    }

    #[test]
    fn q1_form_equals_output_error_cost() {
        let model = fixtures::paper_model();
        let gen = fixtures::paper_reference_generator();
        let w = fixtures::data_driven_bo_weights(0.99);
        let aug = augment(&model, &gen, &w).unwrap();
        let x = DVector::from_fn(6, |i, _| 20.0 + 3.0 * i as f64);
        let r = fixtures::paper_reference();
        let big = aug.state(&x, &r).unwrap();
        let lhs = big.dot(&(aug.q1() * &big));
        let e = model.c() * &x - &r;
        let rhs = e.dot(&(w.q() * &e));
        assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
    }
}
