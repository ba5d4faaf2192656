//! Graph Laplacians and the reduced estimator model of the source-seeking
//! network.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric 0/1 adjacency of the complete graph.
pub fn complete_graph(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
}

pub fn cycle_graph(n: usize) -> DMatrix<f64> {
    let mut a = path_graph(n);
    if n > 2 {
        a[(0, n - 1)] = 1.0;
        a[(n - 1, 0)] = 1.0;
    }
    a
}

pub fn path_graph(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
}

/// Complete graph for up to six agents, cycle beyond.
pub fn default_topology(n: usize) -> DMatrix<f64> {
    if n <= 6 {
        complete_graph(n)
    } else {
        cycle_graph(n)
    }
}

pub fn laplacian(adjacency: &DMatrix<f64>) -> DMatrix<f64> {
    let n = adjacency.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            (0..n).filter(|&k| k != i).map(|k| adjacency[(i, k)]).sum()
        } else {
            -adjacency[(i, j)]
        }
    })
}

pub fn is_connected(adjacency: &DMatrix<f64>) -> bool {
    let n = adjacency.nrows();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && adjacency[(i, j)] != 0.0 {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Columns `2..N` of the Householder reflection sending `e_1` to `1/√N`.
pub fn ones_complement(n: usize) -> DMatrix<f64> {
    let u = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut v = -u;
    v[0] += 1.0;
    let vv = v.dot(&v);
    let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vv);
    h.columns(1, n - 1).into_owned()
}

pub fn kron_identity(m: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    m.kronecker(&DMatrix::identity(dim, dim))
}

/// Solves `PA + AᵀP = −I` through the vectorized system
/// `(I ⊗ Aᵀ + Aᵀ ⊗ I)·vec(P) = −vec(I)`.
pub fn solve_lyapunov(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let k = id.kronecker(&at) + at.kronecker(&id);
    let rhs = -DVector::from_column_slice(id.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSolve("Lyapunov operator is singular; A is not Hurwitz".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Frobenius norm of `PA + AᵀP + I`.
pub fn lyapunov_residual(p: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    (p * a + a.transpose() * p + DMatrix::<f64>::identity(n, n)).norm()
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetworkMatrices {
    pub l: DMatrix<f64>,
    pub u1: DMatrix<f64>,
    pub l_bar: DMatrix<f64>,
    /// `L̄ ⊗ I_n`
    pub l_bar_kron: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

impl ReducedNetworkMatrices {
    pub fn lyapunov_residual(&self) -> f64 {
        lyapunov_residual(&self.p, &self.a)
    }

    pub fn spectral_abscissa(&self) -> f64 {
        spectral_abscissa(&self.a)
    }
}

/// Builds `L`, `U_1`, `L̄ = L·U_1`, the estimator matrix
/// `A = [[−I, −L̄⊗I_n], [μ(L̄⊗I_n)ᵀ, 0]]`, `B = [−I; 0]` and the Lyapunov
/// matrix `P`.
pub fn build_reduced_network(adjacency: &DMatrix<f64>, dim: usize, mu: f64) -> Result<ReducedNetworkMatrices> {
    let agents = adjacency.nrows();
    if agents < 2 || adjacency.ncols() != agents {
        return Err(Error::Precondition(format!(
            "adjacency must be square with at least two agents, got {}x{}",
            adjacency.nrows(),
            adjacency.ncols()
        )));
    }
    if !is_connected(adjacency) {
        return Err(Error::Precondition("graph is not connected".into()));
    }
    let l = laplacian(adjacency);
    let u1 = ones_complement(agents);
    let l_bar = &l * &u1;
    let l_bar_kron = kron_identity(&l_bar, dim);
    let (top, bottom) = (agents * dim, (agents - 1) * dim);
    let size = top + bottom;
    let mut a = DMatrix::zeros(size, size);
    a.view_mut((0, 0), (top, top)).fill_diagonal(-1.0);
    a.view_mut((0, top), (top, bottom)).copy_from(&(-&l_bar_kron));
    a.view_mut((top, 0), (bottom, top)).copy_from(&(l_bar_kron.transpose() * mu));
    let mut b = DMatrix::zeros(size, top);
    b.view_mut((0, 0), (top, top)).fill_diagonal(-1.0);
    let abscissa = spectral_abscissa(&a);
    if !(abscissa < 0.0) {
        return Err(Error::SingularSolve(format!(
            "estimator matrix is not Hurwitz (spectral abscissa {abscissa:e})"
        )));
    }
    let p = solve_lyapunov(&a)?;
    Ok(ReducedNetworkMatrices {
        l,
        u1,
        l_bar,
        l_bar_kron,
        a,
        b,
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_path() {
        let m = build_reduced_network(&path_graph(2), 1, 1.0).unwrap();
        assert_eq!(m.l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(m.l_bar.shape(), (2, 1));
        // L̄ = L·u with u the unit vector orthogonal to 1, an eigenvector for eigenvalue 2.
        assert!((m.l_bar.norm() - 2.0).abs() < 1e-14);
        assert_eq!(m.a.shape(), (3, 3));
        assert!(m.spectral_abscissa() < 0.0);
    }

    #[test]
    fn complete_graph_spectrum() {
        let l = laplacian(&complete_graph(4));
        let mut eig: Vec<f64> = l.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        for (e, want) in eig.iter().zip([0.0, 4.0, 4.0, 4.0]) {
            assert!((e - want).abs() < 1e-12);
        }
    }

    #[test]
    fn complement_is_orthonormal() {
        for n in 2..8 {
            let u1 = ones_complement(n);
            let gram = u1.transpose() * &u1;
            assert!((gram - DMatrix::<f64>::identity(n - 1, n - 1)).norm() < 1e-14);
            let ones = DVector::from_element(n, 1.0);
            assert!((u1.transpose() * ones).norm() < 1e-14);
        }
    }

    #[test]
    fn lyapunov_solution_for_square_scenario() {
        let m = build_reduced_network(&complete_graph(4), 2, 2.0).unwrap();
        assert!(m.lyapunov_residual() <= 1e-8);
        assert!(m.p.symmetric_eigenvalues().iter().all(|&e| e > 0.0));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let mut a = complete_graph(4);
        for j in 0..4 {
            a[(3, j)] = 0.0;
            a[(j, 3)] = 0.0;
        }
        assert!(!is_connected(&a));
        assert!(build_reduced_network(&a, 2, 1.0).is_err());
    }

    #[test]
    fn nonpositive_mu_is_not_hurwitz() {
        let err = build_reduced_network(&complete_graph(3), 1, -1.0).unwrap_err();
        assert!(matches!(err, Error::SingularSolve(_)));
    }

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, -2.0);
        let p = solve_lyapunov(&a).unwrap();
        assert!((p[(0, 0)] - 0.25).abs() < 1e-15);
    }
}
