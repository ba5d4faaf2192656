//! Formation-based source seeking: `N` single-integrator agents
//! `ṗ_i = v_i^e + v_i^f` with
//!
//! ```text
//! v_i^f = −(1/N)·Σ_j a_ij (p_i − p_j − d_ij)
//! v_i^e = −c₀·σ(M⁻¹ δ_i),            M = Σ_j d_j0 d_j0ᵀ
//! δ̇_i  = −(δ_i − N d_i0 h(p_i)) − Σ_j a_ij (q_i − q_j)
//! q̇_i  = μ Σ_j a_ij (δ_i − δ_j)
//! ```

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::lemma::{convexity_constants, random_pairs, Objective};
use super::network::{build_reduced_network, complete_graph, is_connected, spectral_abscissa, ReducedNetworkMatrices};
use crate::error::{Error, Result};
use crate::system::{Dims, PerturbedSystem, Trajectory};

/// Radial saturation `v·min(1, 1/|v|)`.
pub fn saturation(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
    v.iter().map(|a| a * scale).collect()
}

#[derive(Debug, Clone)]
pub struct SourceSeekingScenario {
    pub agents: usize,
    pub dim: usize,
    /// `d_ij`, indexed `[i][j]`.
    pub offsets: Vec<Vec<Vec<f64>>>,
    pub adjacency: DMatrix<f64>,
    pub mu: f64,
    pub c0: f64,
    pub objective: Objective,
    pub p_star: Vec<f64>,
    pub p_epsilon: f64,
}

impl SourceSeekingScenario {
    /// Offsets `d_ij = d_i0 − d_j0` from formation positions `d_i0`.
    pub fn from_formation(
        formation: &[Vec<f64>],
        adjacency: DMatrix<f64>,
        mu: f64,
        c0: f64,
        objective: Objective,
        p_star: Vec<f64>,
        p_epsilon: f64,
    ) -> Result<Self> {
        let agents = formation.len();
        let dim = formation.first().map_or(0, Vec::len);
        if formation.iter().any(|d| d.len() != dim) {
            return Err(Error::InvalidConfig("formation offsets must share one dimension".into()));
        }
        let offsets = (0..agents)
            .map(|i| {
                (0..agents)
                    .map(|j| formation[i].iter().zip(&formation[j]).map(|(a, b)| a - b).collect())
                    .collect()
            })
            .collect();
        Ok(SourceSeekingScenario {
            agents,
            dim,
            offsets,
            adjacency,
            mu,
            c0,
            objective,
            p_star,
            p_epsilon,
        })
    }

    /// Four agents on the corners `(±0.5, ±0.5)`, complete graph,
    /// `h(p) = |p − (3, −2)|²`, `c₀ = 0.05`, `μ = 2`, `p_ε = 0.2`.
    pub fn square_default() -> Self {
        let corners = vec![vec![0.5, 0.5], vec![-0.5, 0.5], vec![-0.5, -0.5], vec![0.5, -0.5]];
        let p_star = vec![3.0, -2.0];
        SourceSeekingScenario::from_formation(
            &corners,
            complete_graph(4),
            2.0,
            0.05,
            Objective::quadratic(p_star.clone(), 1.0),
            p_star,
            0.2,
        )
        .expect("square formation is well formed")
    }

    /// `d_i0 = (1/N)·Σ_j d_ij`.
    pub fn d_i0(&self) -> Vec<Vec<f64>> {
        let n = self.agents as f64;
        self.offsets
            .iter()
            .map(|row| {
                (0..self.dim)
                    .map(|k| row.iter().map(|d| d[k]).sum::<f64>() / n)
                    .collect()
            })
            .collect()
    }

    /// `M = Σ_j d_j0 d_j0ᵀ`.
    pub fn formation_matrix(&self) -> DMatrix<f64> {
        self.d_i0().iter().fold(DMatrix::zeros(self.dim, self.dim), |acc, d| {
            let v = DVector::from_column_slice(d);
            acc + &v * v.transpose()
        })
    }

    /// Checks offsets, formation rank, connectivity, coefficients and the
    /// convexity constants of `h` on seeded sample pairs.
    pub fn validate(&self, seed: u64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.agents < 2 || self.dim == 0 {
            return bad(format!("need at least two agents in dimension >= 1, got N = {}, n = {}", self.agents, self.dim));
        }
        if self.adjacency.shape() != (self.agents, self.agents) {
            return bad(format!("adjacency must be {0}x{0}", self.agents));
        }
        for i in 0..self.agents {
            if self.offsets[i].len() != self.agents {
                return bad(format!("offset row {i} has wrong length"));
            }
            for j in 0..self.agents {
                let (a, b) = (&self.offsets[i][j], &self.offsets[j][i]);
                if a.len() != self.dim || a.iter().zip(b).any(|(u, v)| *u != -*v) {
                    return bad(format!("offsets d_{i}{j} and d_{j}{i} are not antisymmetric"));
                }
                let w = self.adjacency[(i, j)];
                if w != self.adjacency[(j, i)] || !(w == 0.0 || w == 1.0) || (i == j && w != 0.0) {
                    return bad(format!("adjacency entry ({i}, {j}) must be symmetric 0/1 off the diagonal"));
                }
            }
        }
        let sum: f64 = (0..self.dim)
            .map(|k| self.d_i0().iter().map(|d| d[k]).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt();
        if sum > 1e-15 {
            return bad(format!("formation offsets do not sum to zero (|sum| = {sum:e})"));
        }
        let det = self.formation_matrix().determinant();
        if !(det > 0.0) {
            return bad(format!("formation matrix is singular (det = {det:e})"));
        }
        if !is_connected(&self.adjacency) {
            return bad("communication graph is not connected".into());
        }
        if !(self.mu > 0.0 && self.c0 > 0.0 && self.p_epsilon > 0.0) {
            return bad(format!(
                "mu, c0 and p_epsilon must be positive, got {}, {}, {}",
                self.mu, self.c0, self.p_epsilon
            ));
        }
        if self.p_star.len() != self.dim {
            return bad(format!("p_star must have dimension {}", self.dim));
        }
        let pairs = random_pairs(self.dim, 200, 10.0, seed);
        let (omega, theta) = convexity_constants(&self.objective, &pairs);
        let o = self.objective.omega;
        if !(o > 0.0) || omega < o * (1.0 - 1e-9) || theta > self.objective.theta * (1.0 + 1e-9) {
            return bad(format!(
                "objective violates its declared constants: sampled omega {omega}, theta {theta}"
            ));
        }
        Ok(())
    }

    pub fn network(&self) -> Result<ReducedNetworkMatrices> {
        build_reduced_network(&self.adjacency, self.dim, self.mu)
    }
}

/// Estimator coordinates: per-agent `q`, or `q̂ = (U_1ᵀ ⊗ I_n)q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinates {
    Full,
    Reduced,
}

/// Precomputed data shared by the right-hand sides.
struct Model {
    agents: usize,
    dim: usize,
    c0: f64,
    mu: f64,
    adjacency: DMatrix<f64>,
    offsets: Vec<Vec<Vec<f64>>>,
    d0: Vec<Vec<f64>>,
    m_inv: DMatrix<f64>,
    objective: Objective,
    mats: ReducedNetworkMatrices,
    /// `(L̄⊗ᵀ L̄⊗)⁻¹ L̄⊗ᵀ`
    q_hat_map: DMatrix<f64>,
    /// `U_1 ⊗ I_n`
    u1_kron: DMatrix<f64>,
}

impl Model {
    fn new(scn: &SourceSeekingScenario) -> Result<Arc<Self>> {
        let mats = scn.network()?;
        let m_inv = scn
            .formation_matrix()
            .try_inverse()
            .ok_or_else(|| Error::SingularSolve("formation matrix".into()))?;
        let lk = &mats.l_bar_kron;
        let q_hat_map = (lk.transpose() * lk)
            .try_inverse()
            .ok_or_else(|| Error::SingularSolve("reduced Laplacian Gram matrix".into()))?
            * lk.transpose();
        let u1_kron = super::network::kron_identity(&mats.u1, scn.dim);
        Ok(Arc::new(Model {
            agents: scn.agents,
            dim: scn.dim,
            c0: scn.c0,
            mu: scn.mu,
            adjacency: scn.adjacency.clone(),
            offsets: scn.offsets.clone(),
            d0: scn.d_i0(),
            m_inv,
            objective: scn.objective.clone(),
            mats,
            q_hat_map,
            u1_kron,
        }))
    }

    fn agent<'a>(&self, v: &'a [f64], i: usize) -> &'a [f64] {
        &v[i * self.dim..(i + 1) * self.dim]
    }

    /// `−c₀·σ(M⁻¹δ_i)`
    fn seeking_velocity(&self, delta_i: &[f64]) -> Vec<f64> {
        let u = &self.m_inv * DVector::from_column_slice(delta_i);
        saturation(u.as_slice()).into_iter().map(|v| -self.c0 * v).collect()
    }

    fn formation_velocity(&self, p: &[f64], i: usize, out: &mut [f64]) {
        out.fill(0.0);
        let n = self.agents as f64;
        for j in 0..self.agents {
            let a = self.adjacency[(i, j)];
            if a == 0.0 {
                continue;
            }
            let (pi, pj) = (self.agent(p, i), self.agent(p, j));
            for k in 0..self.dim {
                out[k] -= a * (pi[k] - pj[k] - self.offsets[i][j][k]) / n;
            }
        }
    }

    /// `H_i = N·d_i0·h(p_i)`, stacked.
    fn measurement(&self, p: &[f64]) -> Vec<f64> {
        let n = self.agents as f64;
        (0..self.agents)
            .flat_map(|i| {
                let h = self.objective.value(self.agent(p, i));
                self.d0[i].iter().map(move |d| n * d * h).collect::<Vec<_>>()
            })
            .collect()
    }

    fn slow(&self, p: &[f64], z: &[f64], out: &mut [f64]) {
        let mut vf = vec![0.0; self.dim];
        for i in 0..self.agents {
            let ve = self.seeking_velocity(self.agent(z, i));
            self.formation_velocity(p, i, &mut vf);
            for k in 0..self.dim {
                out[i * self.dim + k] = ve[k] + vf[k];
            }
        }
    }

    fn fast(&self, z: &[f64], h_stack: &[f64], coords: Coordinates, out: &mut [f64]) {
        let nn = self.agents * self.dim;
        let (delta, q) = z.split_at(nn);
        let (d_delta, d_q) = out.split_at_mut(nn);
        match coords {
            Coordinates::Full => {
                for i in 0..self.agents {
                    for k in 0..self.dim {
                        let idx = i * self.dim + k;
                        let mut coupling_q = 0.0;
                        let mut coupling_d = 0.0;
                        for j in 0..self.agents {
                            let a = self.adjacency[(i, j)];
                            let jdx = j * self.dim + k;
                            coupling_q += a * (q[idx] - q[jdx]);
                            coupling_d += a * (delta[idx] - delta[jdx]);
                        }
                        d_delta[idx] = -(delta[idx] - h_stack[idx]) - coupling_q;
                        d_q[idx] = self.mu * coupling_d;
                    }
                }
            }
            Coordinates::Reduced => {
                let lk = &self.mats.l_bar_kron;
                let lq = lk * DVector::from_column_slice(q);
                let ld = lk.transpose() * DVector::from_column_slice(delta);
                for idx in 0..nn {
                    d_delta[idx] = -(delta[idx] - h_stack[idx]) - lq[idx];
                }
                for (o, v) in d_q.iter_mut().zip(ld.iter()) {
                    *o = self.mu * v;
                }
            }
        }
    }

    /// `δ_e` and `q̂_e` for a stacked measurement vector.
    fn estimator_equilibrium(&self, h_stack: &[f64]) -> (Vec<f64>, DVector<f64>) {
        let n = self.agents as f64;
        let delta_e: Vec<f64> = (0..self.dim)
            .map(|k| (0..self.agents).map(|i| h_stack[i * self.dim + k]).sum::<f64>() / n)
            .collect();
        let residual =
            DVector::from_fn(self.agents * self.dim, |idx, _| delta_e[idx % self.dim] - h_stack[idx]);
        let q_hat = -(&self.q_hat_map * residual);
        (delta_e, q_hat)
    }

    fn fast_dim(&self, coords: Coordinates) -> usize {
        let nn = self.agents * self.dim;
        match coords {
            Coordinates::Full => 2 * nn,
            Coordinates::Reduced => nn + (self.agents - 1) * self.dim,
        }
    }

    fn phi(&self, p: &[f64], coords: Coordinates, out: &mut [f64]) {
        let h_stack = self.measurement(p);
        let (delta_e, q_hat) = self.estimator_equilibrium(&h_stack);
        let nn = self.agents * self.dim;
        for idx in 0..nn {
            out[idx] = delta_e[idx % self.dim];
        }
        match coords {
            Coordinates::Full => out[nn..].copy_from_slice((&self.u1_kron * q_hat).as_slice()),
            Coordinates::Reduced => out[nn..].copy_from_slice(q_hat.as_slice()),
        }
    }
}

/// Full closed loop with slow state `p = (p_1, …, p_N)` and fast state
/// `(δ, q)` or `(δ, q̂)`.
pub fn closed_loop(scn: &SourceSeekingScenario, coords: Coordinates) -> Result<PerturbedSystem> {
    let model = Model::new(scn)?;
    let (m1, m2, m3) = (model.clone(), model.clone(), model.clone());
    let nn = model.agents * model.dim;
    Ok(PerturbedSystem::new("source_seeking", Dims::new(nn, model.fast_dim(coords), 0, 0))
        .slow(move |p, z, _, out| m1.slow(p, z, out))
        .fast(move |z, p, _, out| m2.fast(z, &m2.measurement(p), coords, out))
        .steady_state(move |p, out| m3.phi(p, coords, out)))
}

/// Estimator alone with the agents held at their initial positions.
pub fn frozen_estimator(scn: &SourceSeekingScenario, coords: Coordinates) -> Result<PerturbedSystem> {
    Ok(closed_loop(scn, coords)?.slow(|_, _, _, out| out.fill(0.0)))
}

/// The two-time-scale form in shifted coordinates `x = p₀ − p_*` with an
/// exact formation: `ẋ = c₀·g_s`, `g_s = −(1/N)Σ_i σ(M⁻¹δ_i)`, and the
/// reduced estimator driven by `H(p₀)`.
pub fn averaged_system(scn: &SourceSeekingScenario) -> Result<PerturbedSystem> {
    let model = Model::new(scn)?;
    let (m1, m2, m3) = (model.clone(), model.clone(), model.clone());
    let p_star = Arc::new(scn.p_star.clone());
    let (s2, s3) = (p_star.clone(), p_star);
    let formation_positions = move |m: &Model, x: &[f64], p_star: &[f64]| -> Vec<f64> {
        (0..m.agents)
            .flat_map(|i| (0..m.dim).map(move |k| (i, k)))
            .map(|(i, k)| p_star[k] + x[k] + m.d0[i][k])
            .collect()
    };
    let fp2 = formation_positions;
    Ok(PerturbedSystem::new("source_seeking_averaged", Dims::new(model.dim, model.fast_dim(Coordinates::Reduced), 0, 0))
        .slow(move |_, z, _, out| {
            out.fill(0.0);
            let n = m1.agents as f64;
            for i in 0..m1.agents {
                let u = &m1.m_inv * DVector::from_column_slice(m1.agent(z, i));
                for (o, s) in out.iter_mut().zip(saturation(u.as_slice())) {
                    *o -= s / n;
                }
            }
        })
        .slow_rate({
            let c0 = model.c0;
            move |_, _, _| c0
        })
        .fast(move |z, x, _, out| {
            let p = formation_positions(&m2, x, &s2);
            m2.fast(z, &m2.measurement(&p), Coordinates::Reduced, out)
        })
        .steady_state(move |x, out| {
            let p = fp2(&m3, x, &s3);
            m3.phi(&p, Coordinates::Reduced, out)
        }))
}

/// `φ(p₀) = [1_N ⊗ δ_e(p₀); q̂_e(p₀)]` for an exact formation around `p₀`.
pub fn equilibrium_map(scn: &SourceSeekingScenario, p0: &[f64]) -> Result<Vec<f64>> {
    let model = Model::new(scn)?;
    let p: Vec<f64> = scn
        .d_i0()
        .iter()
        .flat_map(|d| d.iter().zip(p0).map(|(a, b)| a + b).collect::<Vec<_>>())
        .collect();
    let mut out = vec![0.0; model.fast_dim(Coordinates::Reduced)];
    model.phi(&p, Coordinates::Reduced, &mut out);
    Ok(out)
}

/// `δ_e(p₀) = Σ_i d_i0·h(p₀ + d_i0)`.
pub fn delta_e(scn: &SourceSeekingScenario, p0: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; scn.dim];
    for d in scn.d_i0() {
        let p: Vec<f64> = d.iter().zip(p0).map(|(a, b)| a + b).collect();
        let h = scn.objective.value(&p);
        for (o, di) in out.iter_mut().zip(&d) {
            *o += di * h;
        }
    }
    out
}

/// Mean-value gradient estimate `Σ_i d_i0·h(p_i)` for given positions.
pub fn gradient_estimate(scn: &SourceSeekingScenario, positions: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; scn.dim];
    for (i, d) in scn.d_i0().iter().enumerate() {
        let h = scn.objective.value(&positions[i * scn.dim..(i + 1) * scn.dim]);
        for (o, di) in out.iter_mut().zip(d) {
            *o += di * h;
        }
    }
    out
}

/// Exact closed-loop equilibrium: agents at `p_* + d_i0`, estimator at φ.
pub fn closed_loop_equilibrium(scn: &SourceSeekingScenario, coords: Coordinates) -> Result<(Vec<f64>, Vec<f64>)> {
    let sys = closed_loop(scn, coords)?;
    let p: Vec<f64> = scn
        .d_i0()
        .iter()
        .flat_map(|d| d.iter().zip(&scn.p_star).map(|(a, b)| a + b).collect::<Vec<_>>())
        .collect();
    let z = sys.phi(&p);
    Ok((p, z))
}

/// Residual `|g_f(φ(p₀), p₀, 0)|` of the reduced estimator.
pub fn equilibrium_residual(scn: &SourceSeekingScenario, p0: &[f64]) -> Result<f64> {
    let sys = averaged_system(scn)?;
    let x: Vec<f64> = p0.iter().zip(&scn.p_star).map(|(a, b)| a - b).collect();
    let r = sys.fast_field(&sys.phi(&x), &x, &[]);
    Ok(r.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// `v_i^f` for every agent.
pub fn formation_velocities(scn: &SourceSeekingScenario, positions: &[f64]) -> Result<Vec<Vec<f64>>> {
    let model = Model::new(scn)?;
    Ok((0..scn.agents)
        .map(|i| {
            let mut out = vec![0.0; scn.dim];
            model.formation_velocity(positions, i, &mut out);
            out
        })
        .collect())
}

/// Slowest decay rate of the estimator, `−max Re λ(A)`.
pub fn estimator_decay_rate(scn: &SourceSeekingScenario) -> Result<f64> {
    Ok(-spectral_abscissa(&scn.network()?.a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSeekingSummary {
    pub final_distance: f64,
    /// First sample time with `|p₀ − p_*| ≤ p_ε`.
    pub first_entry_time: Option<f64>,
    /// Time after which `p₀` never leaves the ball.
    pub settled_time: Option<f64>,
    /// Inside the ball at every sample of the final 25% of the horizon.
    pub remains_last_quarter: bool,
    pub max_formation_error: f64,
    /// Max formation error over the first half of the run.
    pub first_half_formation_error: f64,
    /// max over samples of `|Σ_i v_i^f|`.
    pub max_formation_velocity_sum: f64,
}

pub fn average_position(scn: &SourceSeekingScenario, positions: &[f64]) -> Vec<f64> {
    let n = scn.agents as f64;
    (0..scn.dim)
        .map(|k| (0..scn.agents).map(|i| positions[i * scn.dim + k]).sum::<f64>() / n)
        .collect()
}

pub fn summarize(scn: &SourceSeekingScenario, traj: &Trajectory) -> Result<SourceSeekingSummary> {
    let model = Model::new(scn)?;
    let t_end = traj.final_time();
    let mut summary = SourceSeekingSummary {
        final_distance: f64::NAN,
        first_entry_time: None,
        settled_time: None,
        remains_last_quarter: true,
        max_formation_error: 0.0,
        first_half_formation_error: 0.0,
        max_formation_velocity_sum: 0.0,
    };
    let mut vf = vec![0.0; scn.dim];
    for (k, (t, p)) in traj.times.iter().zip(&traj.xs).enumerate() {
        let p0 = average_position(scn, p);
        let dist = p0.iter().zip(&scn.p_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let inside = dist <= scn.p_epsilon;
        if inside {
            summary.first_entry_time.get_or_insert(*t);
            summary.settled_time.get_or_insert(*t);
        } else {
            summary.settled_time = None;
            if *t >= 0.75 * t_end {
                summary.remains_last_quarter = false;
            }
        }
        let mut sum = vec![0.0; scn.dim];
        for i in 0..scn.agents {
            let err: f64 = (0..scn.dim)
                .map(|c| (p[i * scn.dim + c] - p0[c] - model.d0[i][c]).powi(2))
                .sum::<f64>()
                .sqrt();
            summary.max_formation_error = summary.max_formation_error.max(err);
            if *t <= 0.5 * t_end {
                summary.first_half_formation_error = summary.first_half_formation_error.max(err);
            }
            model.formation_velocity(p, i, &mut vf);
            sum.iter_mut().zip(&vf).for_each(|(s, v)| *s += v);
        }
        let sum_norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        summary.max_formation_velocity_sum = summary.max_formation_velocity_sum.max(sum_norm);
        if k + 1 == traj.len() {
            summary.final_distance = dist;
        }
    }
    Ok(summary)
}

/// `t, p{i}_{k}…, delta{i}_{k}…, q{i}_{k}…` with per-agent `q` recovered
/// from `q̂` in reduced coordinates.
pub fn agent_csv(scn: &SourceSeekingScenario, traj: &Trajectory, coords: Coordinates) -> Result<String> {
    let model = Model::new(scn)?;
    let (agents, dim) = (scn.agents, scn.dim);
    let mut out = String::from("t");
    for prefix in ["p", "delta", "q"] {
        for i in 1..=agents {
            for k in 1..=dim {
                let _ = write!(out, ",{prefix}{i}_{k}");
            }
        }
    }
    out.push('\n');
    let nn = agents * dim;
    for ((t, p), z) in traj.times.iter().zip(&traj.xs).zip(&traj.zs) {
        let q: Vec<f64> = match coords {
            Coordinates::Full => z[nn..].to_vec(),
            Coordinates::Reduced => (&model.u1_kron * DVector::from_column_slice(&z[nn..])).as_slice().to_vec(),
        };
        let _ = write!(out, "{t:.16e}");
        for v in p.iter().chain(&z[..nn]).chain(&q) {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    Ok(out)
}
