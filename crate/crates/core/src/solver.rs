//! ADMM for the pairwise-fusion objective at a fixed tuning parameter.
//!
//! The subject coefficients `gamma` (n blocks of length d) are tied to the
//! pairwise differences `delta_ij` (one block per pair i < j) through the
//! constraint `gamma_i - gamma_j = delta_ij`, with multipliers `upsilon_ij`.
//! One iteration is a closed-form gamma solve, a groupwise MCP threshold of
//! every pair and a dual ascent step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bspline::DesignMatrix;
use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::penalty::{mcp_delta_update_into, PenaltyConfig};
use crate::scalar::Scalar;

/// Largest `n * d` for which the dense gamma system may be assembled.
pub const DENSE_LIMIT: usize = 2000;

/// Lexicographic enumeration of pairs `(i, j)`, `i < j < n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    n: usize,
}

impl PairIndex {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn len(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of pair `(i, j)` with `i < j`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (i + 1..self.n).map(move |j| (i, j)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig<T> {
    /// Absolute primal-residual tolerance; `None` means `1e-4 * sqrt(n d)`.
    pub tolerance: Option<T>,
    pub max_iterations: usize,
    /// Also require `||s|| < dual_gate * eps` before stopping; `None` stops on
    /// the primal residual alone.
    pub dual_gate: Option<T>,
    /// Solve the gamma system blockwise instead of assembling it densely.
    pub structured_solve: bool,
    /// Record `(iteration, ||r||, ||s||, Q_n)` every iteration.
    pub record_trace: bool,
}

impl<T: Scalar> Default for AdmmConfig<T> {
    fn default() -> Self {
        Self {
            tolerance: None,
            max_iterations: 2000,
            dual_gate: Some(T::one()),
            structured_solve: true,
            record_trace: false,
        }
    }
}

impl<T: Scalar> AdmmConfig<T> {
    pub fn tolerance_for(&self, n: usize, d: usize) -> T {
        self.tolerance
            .unwrap_or_else(|| T::lit(1e-4) * T::from_usize_lossy(n * d).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(eps) = self.tolerance {
            if !(eps > T::zero()) {
                return Err(Error::Config(format!(
                    "ADMM tolerance must be positive, got {eps}"
                )));
            }
        }
        if let Some(g) = self.dual_gate {
            if !(g > T::zero()) {
                return Err(Error::Config(format!(
                    "dual gate must be positive, got {g}"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub primal: T,
    pub dual: T,
    pub objective: T,
}

/// Iterate of the fusion ADMM.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<T> {
    pub n: usize,
    pub d: usize,
    /// Subject coefficients, subject-major (`gamma[i*d..(i+1)*d]`).
    pub gamma: Vec<T>,
    /// Pair differences in [`PairIndex`] order.
    pub delta: Vec<T>,
    pub upsilon: Vec<T>,
    pub iterations: usize,
    pub primal_norm: T,
    pub dual_norm: T,
    pub converged: bool,
    pub trace: Vec<IterationRecord<T>>,
}

impl<T: Scalar> AdmmState<T> {
    /// State with `delta = A gamma` and zero multipliers.
    pub fn from_gamma(gamma: Vec<T>, n: usize, d: usize) -> Result<Self> {
        if gamma.len() != n * d {
            return Err(Error::Config(format!(
                "gamma has length {}, expected {}",
                gamma.len(),
                n * d
            )));
        }
        let pairs = PairIndex::new(n);
        let mut delta = vec![T::zero(); pairs.len() * d];
        for (p, (i, j)) in pairs.iter().enumerate() {
            for l in 0..d {
                delta[p * d + l] = gamma[i * d + l] - gamma[j * d + l];
            }
        }
        Ok(Self {
            n,
            d,
            gamma,
            upsilon: vec![T::zero(); delta.len()],
            delta,
            iterations: 0,
            primal_norm: T::zero(),
            dual_norm: T::zero(),
            converged: false,
            trace: Vec::new(),
        })
    }

    pub fn pairs(&self) -> PairIndex {
        PairIndex::new(self.n)
    }

    pub fn gamma_block(&self, i: usize) -> &[T] {
        &self.gamma[i * self.d..(i + 1) * self.d]
    }

    pub fn delta_block(&self, p: usize) -> &[T] {
        &self.delta[p * self.d..(p + 1) * self.d]
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.pairs().len() * self.d;
        if self.gamma.len() != self.n * self.d || self.delta.len() != m || self.upsilon.len() != m {
            return Err(Error::Config(
                "ADMM state has inconsistent block sizes".into(),
            ));
        }
        Ok(())
    }

    /// `gamma` as an n x d matrix (row i = subject i).
    pub fn gamma_matrix(&self) -> DMatrix<T> {
        DMatrix::from_row_slice(self.n, self.d, &self.gamma)
    }

    /// Resets counters and diagnostics while keeping the iterate (warm start).
    pub fn restart(&mut self) {
        self.iterations = 0;
        self.converged = false;
        self.primal_norm = T::zero();
        self.dual_norm = T::zero();
        self.trace.clear();
    }
}

enum GammaSystem<T: Scalar> {
    /// `M = blockdiag(D_i) - theta (1 1^T) (x) I_d` with `D_i = B_i + n theta I`,
    /// inverted by the Woodbury identity: `gamma_i = D_i^{-1} (b_i + u)`,
    /// `u = C^{-1} sum_i D_i^{-1} b_i`, `C = I / theta - sum_i D_i^{-1}`.
    Structured {
        d_inv: Vec<DMatrix<T>>,
        c_inv: DMatrix<T>,
    },
    Dense {
        chol: nalgebra::Cholesky<T, nalgebra::Dyn>,
    },
}

/// Precomputed pieces of the fusion objective for one dataset, working
/// covariance and augmentation parameter.
pub struct FusionProblem<T: Scalar> {
    n: usize,
    d: usize,
    theta: T,
    xs: Vec<DMatrix<T>>,
    ys: Vec<DVector<T>>,
    v_inv: Vec<DMatrix<T>>,
    xtvx: Vec<DMatrix<T>>,
    xtvy: Vec<DVector<T>>,
    system: GammaSystem<T>,
}

impl<T: Scalar> FusionProblem<T> {
    pub fn new(
        design: &DesignMatrix<T>,
        dataset: &LongitudinalDataset<T>,
        v: &[DMatrix<T>],
        theta: T,
        structured: bool,
    ) -> Result<Self> {
        let n = design.n_subjects();
        let d = design.dim();
        if n == 0 {
            return Err(Error::Data("no subjects to fit".into()));
        }
        if dataset.n_subjects() != n || v.len() != n {
            return Err(Error::Config(format!(
                "design has {n} subjects, dataset {}, covariance blocks {}",
                dataset.n_subjects(),
                v.len()
            )));
        }
        if !(theta > T::zero()) {
            return Err(Error::Config(format!(
                "theta must be positive, got {theta}"
            )));
        }
        let mut v_inv = Vec::with_capacity(n);
        let mut xtvx = Vec::with_capacity(n);
        let mut xtvy = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for ((x, vi), s) in design.blocks().iter().zip(v).zip(dataset.subjects()) {
            let chol = vi.clone().cholesky().ok_or_else(|| {
                Error::NotPositiveDefinite(format!("working covariance of subject {}", s.id))
            })?;
            let inv = chol.inverse();
            let y = DVector::from_column_slice(&s.values);
            let xt_vinv = x.transpose() * &inv;
            xtvx.push(&xt_vinv * x);
            xtvy.push(&xt_vinv * &y);
            v_inv.push(inv);
            ys.push(y);
        }

        let system = if structured {
            Self::structured_system(&xtvx, n, d, theta)?
        } else {
            if n * d > DENSE_LIMIT {
                return Err(Error::Config(format!(
                    "dense gamma solve limited to n*d <= {DENSE_LIMIT}, got {}",
                    n * d
                )));
            }
            Self::dense_system(&xtvx, n, d, theta)?
        };

        Ok(Self {
            n,
            d,
            theta,
            xs: design.blocks().to_vec(),
            ys,
            v_inv,
            xtvx,
            xtvy,
            system,
        })
    }

    fn structured_system(
        xtvx: &[DMatrix<T>],
        n: usize,
        d: usize,
        theta: T,
    ) -> Result<GammaSystem<T>> {
        let shift = theta * T::from_usize_lossy(n);
        let mut d_inv = Vec::with_capacity(n);
        let mut c = DMatrix::identity(d, d) / theta;
        for (i, b) in xtvx.iter().enumerate() {
            let mut di = b.clone();
            for l in 0..d {
                di[(l, l)] += shift;
            }
            let inv = di
                .cholesky()
                .ok_or_else(|| {
                    Error::Singular(format!(
                        "block {i} of the gamma system is not positive definite"
                    ))
                })?
                .inverse();
            c -= &inv;
            d_inv.push(inv);
        }
        let c_inv = c.clone().try_inverse().ok_or_else(|| {
            Error::Singular("gamma system is singular (coupling matrix not invertible)".into())
        })?;
        // ill-conditioning check: relative size of the inverse
        let cond = c.norm() * c_inv.norm();
        if !cond.is_finite_value() || cond.as_f64() > 1e14 {
            return Err(Error::Singular(format!(
                "gamma system ill-conditioned (coupling condition estimate {cond})"
            )));
        }
        Ok(GammaSystem::Structured { d_inv, c_inv })
    }

    fn dense_system(xtvx: &[DMatrix<T>], n: usize, d: usize, theta: T) -> Result<GammaSystem<T>> {
        let m = Self::assemble_dense(xtvx, n, d, theta);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Singular("dense gamma system is not positive definite".into()))?;
        Ok(GammaSystem::Dense { chol })
    }

    /// `X^T V^-1 X + theta A^T A` assembled densely.
    pub fn assemble_dense(xtvx: &[DMatrix<T>], n: usize, d: usize, theta: T) -> DMatrix<T> {
        let mut m = DMatrix::zeros(n * d, n * d);
        for i in 0..n {
            m.view_mut((i * d, i * d), (d, d)).copy_from(&xtvx[i]);
            for j in 0..n {
                let w = if i == j {
                    theta * T::from_usize_lossy(n - 1)
                } else {
                    -theta
                };
                for l in 0..d {
                    m[(i * d + l, j * d + l)] += w;
                }
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn xtvx(&self) -> &[DMatrix<T>] {
        &self.xtvx
    }

    pub fn xtvy(&self) -> &[DVector<T>] {
        &self.xtvy
    }

    /// Solves `(X^T V^-1 X + theta A^T A) gamma = rhs`.
    pub fn solve_system(&self, rhs: &[T], out: &mut [T]) {
        let d = self.d;
        match &self.system {
            GammaSystem::Structured { d_inv, c_inv } => {
                let mut s = DVector::zeros(d);
                for (i, di) in d_inv.iter().enumerate() {
                    let b = DVector::from_column_slice(&rhs[i * d..(i + 1) * d]);
                    s += di * b;
                }
                let u = c_inv * s;
                for (i, di) in d_inv.iter().enumerate() {
                    let b = DVector::from_column_slice(&rhs[i * d..(i + 1) * d]) + &u;
                    let g = di * b;
                    out[i * d..(i + 1) * d].copy_from_slice(g.as_slice());
                }
            }
            GammaSystem::Dense { chol } => {
                let g = chol.solve(&DVector::from_column_slice(rhs));
                out.copy_from_slice(g.as_slice());
            }
        }
    }

    /// Closed-form gamma minimizer of the augmented Lagrangian given `delta`, `upsilon`.
    pub fn gamma_update(&self, state: &AdmmState<T>) -> Vec<T> {
        let mut rhs = vec![T::zero(); self.n * self.d];
        let mut out = vec![T::zero(); self.n * self.d];
        self.gamma_rhs(state, &mut rhs);
        self.solve_system(&rhs, &mut out);
        out
    }

    /// `X^T V^-1 Y + A^T (theta delta - upsilon)`
    fn gamma_rhs(&self, state: &AdmmState<T>, rhs: &mut [T]) {
        let d = self.d;
        for (i, c) in self.xtvy.iter().enumerate() {
            rhs[i * d..(i + 1) * d].copy_from_slice(c.as_slice());
        }
        for (p, (i, j)) in PairIndex::new(self.n).iter().enumerate() {
            for l in 0..d {
                let w = self.theta * state.delta[p * d + l] - state.upsilon[p * d + l];
                rhs[i * d + l] += w;
                rhs[j * d + l] -= w;
            }
        }
    }

    /// Groupwise MCP threshold of every `zeta_ij = gamma_i - gamma_j + upsilon_ij / theta`.
    pub fn delta_update(&self, state: &AdmmState<T>, penalty: &PenaltyConfig<T>) -> Vec<T> {
        let d = self.d;
        let mut out = vec![T::zero(); state.delta.len()];
        let mut zeta = vec![T::zero(); d];
        for (p, (i, j)) in PairIndex::new(self.n).iter().enumerate() {
            for l in 0..d {
                zeta[l] = state.gamma[i * d + l] - state.gamma[j * d + l]
                    + state.upsilon[p * d + l] / self.theta;
            }
            mcp_delta_update_into(&zeta, penalty, &mut out[p * d..(p + 1) * d]);
        }
        out
    }

    /// `upsilon_ij + theta (gamma_i - gamma_j - delta_ij)`
    pub fn dual_update(&self, state: &AdmmState<T>) -> Vec<T> {
        let d = self.d;
        let mut out = state.upsilon.clone();
        for (p, (i, j)) in PairIndex::new(self.n).iter().enumerate() {
            for l in 0..d {
                out[p * d + l] += self.theta
                    * (state.gamma[i * d + l] - state.gamma[j * d + l] - state.delta[p * d + l]);
            }
        }
        out
    }

    /// `1/2 sum_i (Y_i - X_i gamma_i)^T V_i^-1 (Y_i - X_i gamma_i)`
    pub fn loss(&self, gamma: &[T]) -> T {
        let d = self.d;
        let mut total = T::zero();
        for i in 0..self.n {
            let g = DVector::from_column_slice(&gamma[i * d..(i + 1) * d]);
            let r = &self.ys[i] - &self.xs[i] * g;
            total += r.dot(&(&self.v_inv[i] * &r));
        }
        total / T::lit(2.0)
    }

    /// Penalized objective `Q_n(gamma; lambda)`.
    pub fn objective(&self, gamma: &[T], penalty: &PenaltyConfig<T>) -> T {
        let d = self.d;
        let mut pen = T::zero();
        for (i, j) in PairIndex::new(self.n).iter() {
            let mut sq = T::zero();
            for l in 0..d {
                let diff = gamma[i * d + l] - gamma[j * d + l];
                sq += diff * diff;
            }
            pen += penalty.value(sq.sqrt());
        }
        self.loss(gamma) + pen
    }

    /// Augmented Lagrangian `L(gamma, delta, upsilon)`.
    pub fn augmented_lagrangian(&self, state: &AdmmState<T>, penalty: &PenaltyConfig<T>) -> T {
        let d = self.d;
        let mut total = self.loss(&state.gamma);
        for (p, (i, j)) in PairIndex::new(self.n).iter().enumerate() {
            let mut dn = T::zero();
            let mut inner = T::zero();
            let mut sq = T::zero();
            for l in 0..d {
                let dl = state.delta[p * d + l];
                dn += dl * dl;
                let c = state.gamma[i * d + l] - state.gamma[j * d + l] - dl;
                inner += state.upsilon[p * d + l] * c;
                sq += c * c;
            }
            total += penalty.value(dn.sqrt()) + inner + self.theta / T::lit(2.0) * sq;
        }
        total
    }

    /// Runs ADMM from `init` until `||A gamma - delta|| < eps` (and the dual
    /// gate, if set, holds) or the iteration cap. Hitting the cap is reported through `converged = false`.
    pub fn run(
        &self,
        penalty: &PenaltyConfig<T>,
        cfg: &AdmmConfig<T>,
        init: AdmmState<T>,
    ) -> Result<AdmmState<T>> {
        penalty.validate()?;
        cfg.validate()?;
        init.validate()?;
        if init.n != self.n || init.d != self.d {
            return Err(Error::Config(format!(
                "initial state is {}x{}, problem is {}x{}",
                init.n, init.d, self.n, self.d
            )));
        }
        if penalty.theta != self.theta {
            return Err(Error::Config(format!(
                "penalty theta {} differs from the theta {} the problem was built with",
                penalty.theta, self.theta
            )));
        }
        let eps = cfg.tolerance_for(self.n, self.d);
        let d = self.d;
        let pairs = PairIndex::new(self.n);
        let mut state = init;
        state.restart();

        let mut rhs = vec![T::zero(); self.n * d];
        let mut zeta = vec![T::zero(); d];
        let mut new_delta = vec![T::zero(); d];
        let mut at_delta_change = vec![T::zero(); self.n * d];

        for iter in 1..=cfg.max_iterations {
            self.gamma_rhs(&state, &mut rhs);
            self.solve_system(&rhs, &mut state.gamma);

            at_delta_change.iter_mut().for_each(|x| *x = T::zero());
            let mut primal_sq = T::zero();
            for (p, (i, j)) in pairs.iter().enumerate() {
                let off = p * d;
                for l in 0..d {
                    zeta[l] = state.gamma[i * d + l] - state.gamma[j * d + l]
                        + state.upsilon[off + l] / self.theta;
                }
                mcp_delta_update_into(&zeta, penalty, &mut new_delta);
                for l in 0..d {
                    let change = new_delta[l] - state.delta[off + l];
                    at_delta_change[i * d + l] += change;
                    at_delta_change[j * d + l] -= change;
                    state.delta[off + l] = new_delta[l];
                    let r = state.gamma[i * d + l] - state.gamma[j * d + l] - new_delta[l];
                    state.upsilon[off + l] += self.theta * r;
                    primal_sq += r * r;
                }
            }
            let dual_sq = at_delta_change.iter().fold(T::zero(), |a, &x| a + x * x);
            state.primal_norm = primal_sq.sqrt();
            state.dual_norm = self.theta * dual_sq.sqrt();
            state.iterations = iter;
            if cfg.record_trace {
                state.trace.push(IterationRecord {
                    iteration: iter,
                    primal: state.primal_norm,
                    dual: state.dual_norm,
                    objective: self.objective(&state.gamma, penalty),
                });
            }
            let dual_ok = cfg.dual_gate.is_none_or(|g| state.dual_norm < g * eps);
            if state.primal_norm < eps && dual_ok {
                state.converged = true;
                break;
            }
        }
        Ok(state)
    }
}

/// Convenience wrapper building the problem and running ADMM once.
pub fn run_admm<T: Scalar>(
    design: &DesignMatrix<T>,
    v: &[DMatrix<T>],
    dataset: &LongitudinalDataset<T>,
    penalty: &PenaltyConfig<T>,
    cfg: &AdmmConfig<T>,
    init: AdmmState<T>,
) -> Result<AdmmState<T>> {
    let problem = FusionProblem::new(design, dataset, v, penalty.theta, cfg.structured_solve)?;
    problem.run(penalty, cfg, init)
}
