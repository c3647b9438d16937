//! P1 finite elements on an interval.
//!
//! Displacement, log-temperature and the phase fractions are continuous
//! piecewise-linear nodal fields; the pressure is constant per element.

use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};
use sprs_ldl::LdlNumeric;

use crate::constitutive::MaterialParams;
use crate::error::{Error, Result};

/// End of the interval carrying the essential condition `u = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundarySide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
    gamma0: Vec<usize>,
    gamma1: Vec<usize>,
}

impl Mesh1D {
    pub fn new(nodes: Vec<f64>, gamma0: Vec<usize>, gamma1: Vec<usize>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Config(format!(
                "mesh needs at least 2 elements, got {}",
                nodes.len().saturating_sub(1)
            )));
        }
        if nodes.iter().any(|x| !x.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("mesh nodes must be finite and strictly increasing".into()));
        }
        let last = nodes.len() - 1;
        let on_boundary = |i: &usize| *i == 0 || *i == last;
        if gamma0.is_empty() || gamma1.is_empty() {
            return Err(Error::Config(
                "both the Dirichlet part and the traction part of the boundary must be nonempty".into(),
            ));
        }
        if !gamma0.iter().all(on_boundary) || !gamma1.iter().all(on_boundary) {
            return Err(Error::Config("boundary node sets may only contain end nodes".into()));
        }
        if gamma0.iter().any(|i| gamma1.contains(i)) {
            return Err(Error::Config("Dirichlet and traction boundary parts overlap".into()));
        }
        Ok(Self { nodes, gamma0, gamma1 })
    }

    /// Uniform subdivision of `[0, length]`.
    pub fn uniform(length: f64, n_elements: usize, gamma0_side: BoundarySide) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("mesh length must be positive, got {length}")));
        }
        if n_elements < 2 {
            return Err(Error::Config(format!(
                "mesh needs at least 2 elements, got {n_elements}"
            )));
        }
        let nodes = (0..=n_elements)
            .map(|i| length * i as f64 / n_elements as f64)
            .collect();
        let (g0, g1) = match gamma0_side {
            BoundarySide::Left => (0, n_elements),
            BoundarySide::Right => (n_elements, 0),
        };
        Self::new(nodes, vec![g0], vec![g1])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn gamma0(&self) -> &[usize] {
        &self.gamma0
    }

    pub fn gamma1(&self) -> &[usize] {
        &self.gamma1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn length(&self) -> f64 {
        self.nodes[self.nodes.len() - 1] - self.nodes[0]
    }

    /// `(left node, right node, element length)` for every element.
    pub fn elements(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.nodes
            .windows(2)
            .enumerate()
            .map(|(e, w)| (e, e + 1, w[1] - w[0]))
    }

    pub fn element_lengths(&self) -> Vec<f64> {
        self.elements().map(|(_, _, h)| h).collect()
    }

    /// Both end nodes, each once.
    pub fn boundary_nodes(&self) -> [usize; 2] {
        [0, self.n_nodes() - 1]
    }

    /// Diagonal of the lumped (nodal quadrature) mass matrix.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_nodes()];
        for (i, j, h) in self.elements() {
            m[i] += 0.5 * h;
            m[j] += 0.5 * h;
        }
        m
    }

    /// Element-constant derivative of a nodal field.
    pub fn gradient(&self, field: &[f64]) -> Vec<f64> {
        self.elements()
            .map(|(i, j, h)| (field[j] - field[i]) / h)
            .collect()
    }

    /// Element mean of a nodal field (exact L2 projection of P1 onto constants).
    pub fn element_average(&self, field: &[f64]) -> Vec<f64> {
        self.elements()
            .map(|(i, j, _)| 0.5 * (field[i] + field[j]))
            .collect()
    }

    pub fn nearest_node(&self, x: f64) -> usize {
        (0..self.n_nodes())
            .min_by(|&a, &b| (self.nodes[a] - x).abs().total_cmp(&(self.nodes[b] - x).abs()))
            .expect("mesh has nodes")
    }
}

pub fn build_mesh(length: f64, n_elements: usize, gamma0_side: BoundarySide) -> Result<Mesh1D> {
    Mesh1D::uniform(length, n_elements, gamma0_side)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// `a(u, v) = ∫ K u' v'`.
    Elastic,
    /// `∫ u' v'`, pure Neumann.
    Laplace,
    /// `<H p, v> = ∫ p v'`, nodes × elements.
    Divergence,
    /// Consistent P1 mass.
    Mass,
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub kind: OperatorKind,
    pub matrix: CsMat<f64>,
}

impl DiscreteOperator {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        matvec(&self.matrix, x)
    }

    /// `xᵀ M y` for square operators.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.apply(y))
    }
}

pub fn assemble(kind: OperatorKind, mesh: &Mesh1D, m: &MaterialParams) -> DiscreteOperator {
    let n = mesh.n_nodes();
    let matrix = match kind {
        OperatorKind::Elastic | OperatorKind::Laplace => {
            let coef = if kind == OperatorKind::Elastic { m.stiffness } else { 1.0 };
            let mut t = TriMat::new((n, n));
            for (i, j, h) in mesh.elements() {
                let k = coef / h;
                t.add_triplet(i, i, k);
                t.add_triplet(j, j, k);
                t.add_triplet(i, j, -k);
                t.add_triplet(j, i, -k);
            }
            t.to_csr()
        }
        OperatorKind::Mass => {
            let mut t = TriMat::new((n, n));
            for (i, j, h) in mesh.elements() {
                t.add_triplet(i, i, h / 3.0);
                t.add_triplet(j, j, h / 3.0);
                t.add_triplet(i, j, h / 6.0);
                t.add_triplet(j, i, h / 6.0);
            }
            t.to_csr()
        }
        OperatorKind::Divergence => {
            let mut t = TriMat::new((n, mesh.n_elements()));
            for (e, (i, j, _)) in mesh.elements().enumerate() {
                t.add_triplet(i, e, -1.0);
                t.add_triplet(j, e, 1.0);
            }
            t.to_csr()
        }
    };
    DiscreteOperator { kind, matrix }
}

/// Boundary functional `v ↦ Σ data_i v(x_i)`, the 1D form of a surface integral.
pub fn neumann_load(mesh: &Mesh1D, boundary_data: &[(usize, f64)]) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_nodes()];
    for &(node, value) in boundary_data {
        load[node] += value;
    }
    load
}

/// Interior source `v ↦ ∫ f v` with nodal quadrature.
pub fn source_load(mesh: &Mesh1D, nodal_source: &[f64]) -> Vec<f64> {
    mesh.lumped_mass()
        .iter()
        .zip(nodal_source)
        .map(|(m, f)| m * f)
        .collect()
}

pub fn matvec(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    for (row, vec) in a.outer_iterator().enumerate() {
        let mut acc = 0.0;
        for (col, &v) in vec.iter() {
            acc += v * x[col];
        }
        y[row] = acc;
    }
    y
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sparse SPD system with homogeneous essential conditions on `constrained`,
/// factorized once and solved to relative residual `1e-10`.
pub struct SpdSystem {
    matrix: CsMat<f64>,
    constrained: Vec<usize>,
    factor: LdlNumeric<f64, usize>,
}

impl std::fmt::Debug for SpdSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdSystem")
            .field("size", &self.matrix.rows())
            .field("constrained", &self.constrained)
            .finish()
    }
}

pub const LINEAR_SOLVE_TOL: f64 = 1e-10;

impl SpdSystem {
    pub fn new(matrix: &CsMat<f64>, constrained: &[usize]) -> Result<Self> {
        let n = matrix.rows();
        if matrix.cols() != n {
            return Err(Error::LinearSolve("matrix is not square".into()));
        }
        let mut t = TriMat::new((n, n));
        for (row, vec) in matrix.outer_iterator().enumerate() {
            for (col, &v) in vec.iter() {
                if !constrained.contains(&row) && !constrained.contains(&col) {
                    t.add_triplet(row, col, v);
                }
            }
        }
        for &c in constrained {
            t.add_triplet(c, c, 1.0);
        }
        let reduced: CsMat<f64> = t.to_csc();
        let factor = LdlNumeric::new(reduced.view())
            .map_err(|e| Error::LinearSolve(format!("LDL factorization failed: {e}")))?;
        if factor.d().iter().any(|d| !(*d > 0.0)) {
            return Err(Error::LinearSolve(
                "matrix is not positive definite on the free degrees of freedom".into(),
            ));
        }
        Ok(Self {
            matrix: reduced.to_csr(),
            constrained: constrained.to_vec(),
            factor,
        })
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut b = rhs.to_vec();
        for &c in &self.constrained {
            b[c] = 0.0;
        }
        let bn = norm2(&b);
        if bn == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x: Vec<f64> = self.factor.solve(&b);
        for sweep in 0..3 {
            let ax = matvec(&self.matrix, &x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let rel = norm2(&r) / bn;
            if rel <= LINEAR_SOLVE_TOL {
                return Ok(x);
            }
            if !rel.is_finite() || sweep == 2 {
                return Err(Error::LinearSolve(format!(
                    "relative residual {rel:.3e} above {LINEAR_SOLVE_TOL:.0e}"
                )));
            }
            let dx: Vec<f64> = self.factor.solve(&r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        unreachable!()
    }
}

/// Smallest eigenvalue of a symmetric operator restricted to the unconstrained
/// degrees of freedom.
pub fn smallest_constrained_eigenvalue(op: &DiscreteOperator, constrained: &[usize]) -> f64 {
    let n = op.matrix.rows();
    let free: Vec<usize> = (0..n).filter(|i| !constrained.contains(i)).collect();
    let dense = op.matrix.to_dense();
    let reduced = nalgebra::DMatrix::from_fn(free.len(), free.len(), |r, c| dense[[free[r], free[c]]]);
    let eig = nalgebra::SymmetricEigen::new(reduced);
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mesh_examples() {
        let m = build_mesh(1.0, 4, BoundarySide::Left).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(m.gamma0(), &[0]);
        assert_eq!(m.gamma1(), &[4]);
        let m = build_mesh(2.0, 2, BoundarySide::Right).unwrap();
        assert_eq!(m.element_lengths(), vec![1.0, 1.0]);
        assert_eq!(m.gamma0(), &[2]);
        assert!(matches!(build_mesh(1.0, 1, BoundarySide::Left), Err(Error::Config(_))));
    }

    #[test]
    fn mesh_invariants_enforced() {
        assert!(Mesh1D::new(vec![0.0, 0.5, 0.4], vec![0], vec![2]).is_err());
        assert!(Mesh1D::new(vec![0.0, 0.5, 1.0], vec![], vec![2]).is_err());
        assert!(Mesh1D::new(vec![0.0, 0.5, 1.0], vec![0], vec![0]).is_err());
        assert!(Mesh1D::new(vec![0.0, 0.5, 1.0], vec![1], vec![2]).is_err());
    }

    #[test]
    fn laplace_kills_constants() {
        let mesh = build_mesh(1.3, 7, BoundarySide::Left).unwrap();
        let b = assemble(OperatorKind::Laplace, &mesh, &MaterialParams::default());
        for v in b.apply(&vec![1.0; mesh.n_nodes()]) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn mass_row_sums_give_length() {
        let mesh = Mesh1D::new(vec![0.0, 0.1, 0.5, 0.6, 2.0], vec![0], vec![4]).unwrap();
        let m = assemble(OperatorKind::Mass, &mesh, &MaterialParams::default());
        let total: f64 = m.apply(&vec![1.0; 5]).iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        assert!((mesh.lumped_mass().iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!(smallest_constrained_eigenvalue(&m, &[]) > 0.0);
    }

    #[test]
    fn bar_under_end_load() {
        let mesh = Mesh1D::new(vec![0.0, 0.5, 1.0], vec![0], vec![2]).unwrap();
        let a = assemble(OperatorKind::Elastic, &mesh, &MaterialParams::default());
        let sys = SpdSystem::new(&a.matrix, mesh.gamma0()).unwrap();
        let u = sys.solve(&neumann_load(&mesh, &[(2, 1.0)])).unwrap();
        let exact = [0.0, 0.5, 1.0];
        for (a, b) in u.iter().zip(exact) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn elastic_is_coercive_once_clamped() {
        let mesh = build_mesh(1.0, 16, BoundarySide::Left).unwrap();
        let a = assemble(OperatorKind::Elastic, &mesh, &MaterialParams::default());
        assert!(smallest_constrained_eigenvalue(&a, mesh.gamma0()) > 0.0);
        assert!(smallest_constrained_eigenvalue(&a, &[]).abs() < 1e-10);
        assert!(SpdSystem::new(&a.matrix, &[]).is_err());
    }

    #[test]
    fn discrete_divergence_theorem() {
        let mesh = Mesh1D::new(vec![0.0, 0.2, 0.7, 1.1, 1.5], vec![0], vec![4]).unwrap();
        let h = assemble(OperatorKind::Divergence, &mesh, &MaterialParams::default());
        let u = [0.3, -1.0, 2.5, 0.1, 0.9];
        let load = h.apply(&vec![1.0; mesh.n_elements()]);
        assert!((dot(&load, &u) - (u[4] - u[0])).abs() < 1e-12);
    }

    #[test]
    fn load_examples() {
        let mesh = build_mesh(1.0, 4, BoundarySide::Left).unwrap();
        assert!(neumann_load(&mesh, &[]).iter().all(|v| *v == 0.0));
        assert!(source_load(&mesh, &[0.0; 5]).iter().all(|v| *v == 0.0));
        let r: f64 = source_load(&mesh, &[1.0; 5]).iter().sum();
        assert!((r - 1.0).abs() < 1e-15);
        let g = neumann_load(&mesh, &[(4, 0.7)]);
        assert_eq!(g, vec![0.0, 0.0, 0.0, 0.0, 0.7]);
    }

    /// -u'' = pi² sin(pi x), u(0) = 0, u'(1) = -pi.
    fn poisson_error(n: usize) -> f64 {
        use std::f64::consts::PI;
        let mesh = build_mesh(1.0, n, BoundarySide::Left).unwrap();
        let a = assemble(OperatorKind::Laplace, &mesh, &MaterialParams::default());
        let f: Vec<f64> = mesh.nodes().iter().map(|x| PI * PI * (PI * x).sin()).collect();
        let mut rhs = source_load(&mesh, &f);
        rhs[n] += -PI;
        let u = SpdSystem::new(&a.matrix, mesh.gamma0()).unwrap().solve(&rhs).unwrap();
        l2_error(&mesh, &u, |x| (PI * x).sin())
    }

    fn l2_error(mesh: &Mesh1D, u: &[f64], exact: impl Fn(f64) -> f64) -> f64 {
        // 3-point Gauss per element
        let gp = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
        let x = mesh.nodes();
        let mut s = 0.0;
        for (i, j, h) in mesh.elements() {
            for (xi, wq) in gp {
                let t = 0.5 * (xi + 1.0);
                let uh = u[i] * (1.0 - t) + u[j] * t;
                let xx = x[i] + t * h;
                s += 0.5 * h * wq * (uh - exact(xx)).powi(2);
            }
        }
        s.sqrt()
    }

    #[test]
    fn poisson_converges_at_second_order() {
        let hs = [8, 16, 32, 64, 128];
        let errs: Vec<f64> = hs.iter().map(|&n| poisson_error(n)).collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "order {order} from {errs:?}");
        }
    }
}
