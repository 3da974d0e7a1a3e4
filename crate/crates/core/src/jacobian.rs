//! Online RBF estimation of Jacobians.
//!
//! A Jacobian `J ∈ ℝ^{m×n}` is modelled row by row: row `i` is
//! `(Ŵ_i θ(q))ᵀ` with `Ŵ_i ∈ ℝ^{n×ξ}` and Gaussian features `θ(q) ∈ ℝ^ξ`.
//! The stacked weight vector `W̄` holds the rows of `Ŵ_1`, then the rows of
//! `Ŵ_2`, and so on, so entry `(i, a, j)` sits at `i n ξ + a ξ + j`.
//! With `Θ = blockdiag(θ, …, θ) ∈ ℝ^{mξ×m}` and
//! `Q = blockdiag(q̇ ⊗ I_ξ, …) ∈ ℝ^{mnξ×mξ}` the predicted flow is linear in
//! the weights: `Ĵ q̇ = Θᵀ Qᵀ W̄`.
//!
//! The image Jacobian uses `m = 2`, `n = 3`; the shape Jacobian maps the two
//! deflection rates onto every coordinate of the active-section samples.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::plant::PlantParams;
use crate::{Error, Result};

/// Gaussian radial basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfBasis {
    dim: usize,
    /// Centres, `ξ × dim`, row-major.
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl RbfBasis {
    pub fn new(centers: Vec<Vec<f64>>, widths: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Config("a basis needs at least one neuron".into()));
        }
        if centers.len() != widths.len() {
            return Err(Error::Config(format!(
                "{} centres but {} widths",
                centers.len(),
                widths.len()
            )));
        }
        let dim = centers[0].len();
        if dim == 0 || centers.iter().any(|c| c.len() != dim) {
            return Err(Error::Config("basis centres must share a positive dimension".into()));
        }
        if widths.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("basis widths must be positive".into()));
        }
        if centers.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Config("basis centres must be finite".into()));
        }
        Ok(Self { dim, centers: centers.into_iter().flatten().collect(), widths })
    }

    /// `per_axis` centres on `[-1, 1]` along each of the first `grid_dims`
    /// coordinates (zero on the rest), all with width equal to the grid
    /// spacing.
    pub fn grid(dim: usize, grid_dims: usize, per_axis: usize) -> Result<Self> {
        if per_axis == 0 || grid_dims == 0 || grid_dims > dim {
            return Err(Error::Config("invalid basis grid".into()));
        }
        let step = if per_axis > 1 { 2.0 / (per_axis - 1) as f64 } else { 1.0 };
        let count = per_axis.pow(grid_dims as u32);
        let mut centers = Vec::with_capacity(count);
        for idx in 0..count {
            let mut c = alloc::vec![0.0; dim];
            let mut rest = idx;
            for d in (0..grid_dims).rev() {
                let k = rest % per_axis;
                rest /= per_axis;
                c[d] = if per_axis > 1 { -1.0 + step * k as f64 } else { 0.0 };
            }
            centers.push(c);
        }
        Self::new(centers, alloc::vec![step; count])
    }

    /// Neuron count ξ.
    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    pub fn width(&self, j: usize) -> f64 {
        self.widths[j]
    }

    /// `θ_j(x) = exp(-‖x - c_j‖² / (2 σ_j²))`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let c = self.center(j);
            let d2: f64 = c.iter().zip(x).map(|(c, x)| (x - c) * (x - c)).sum();
            let s = self.widths[j];
            *o = math::exp(-d2 / (2.0 * s * s));
        }
    }
}

/// Affine map from motor coordinates to the basis domain:
/// `x_a = (q_a - center_a) / half_range_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    pub center: Vec<f64>,
    pub half_range: Vec<f64>,
}

impl InputScaling {
    pub fn identity(dim: usize) -> Self {
        Self { center: alloc::vec![0.0; dim], half_range: alloc::vec![1.0; dim] }
    }

    /// Scaling of `(q1, q2, q3)` over the plant's motor workspace.
    pub fn motors(p: &PlantParams) -> Self {
        let mid = 0.5 * p.insertion_max;
        Self {
            center: alloc::vec![0.0, 0.0, mid],
            half_range: alloc::vec![p.deflection_limit, p.deflection_limit, mid.max(1e-9)],
        }
    }

    /// Scaling of `(q1, q2)` only.
    pub fn deflection(p: &PlantParams) -> Self {
        Self { center: alloc::vec![0.0, 0.0], half_range: alloc::vec![p.deflection_limit; 2] }
    }

    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        q.iter()
            .zip(self.center.iter().zip(&self.half_range))
            .map(|(q, (c, h))| (q - c) / h)
            .collect()
    }
}

/// Gains of the composite adaptation law.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdaptationGains {
    /// Tracking-error gain μ_e.
    pub mu_e: f64,
    /// Prediction-error gain μ_y.
    pub mu_y: f64,
    /// Diagonal of Γ_W⁻¹ per motor input; expanded over outputs and neurons.
    pub gain_inverse: Vec<f64>,
}

impl AdaptationGains {
    pub fn image() -> Self {
        Self { mu_e: 0.01, mu_y: 0.2, gain_inverse: alloc::vec![1.0; 3] }
    }

    pub fn shape() -> Self {
        Self { mu_e: 0.0, mu_y: 0.2, gain_inverse: alloc::vec![1.0; 2] }
    }
}

impl Default for AdaptationGains {
    fn default() -> Self {
        Self::image()
    }
}

/// Online RBF Jacobian estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfJacobian {
    basis: RbfBasis,
    scaling: InputScaling,
    outputs: usize,
    inputs: usize,
    /// Stacked weights `W̄`.
    weights: Vec<f64>,
    /// Diagonal of Γ_W⁻¹, same layout as `weights`.
    gain_inverse: Vec<f64>,
    mu_e: f64,
    mu_y: f64,
}

impl RbfJacobian {
    /// Estimator with zero weights and `Γ_W⁻¹ = I`.
    pub fn new(basis: RbfBasis, scaling: InputScaling, outputs: usize, mu_e: f64, mu_y: f64) -> Result<Self> {
        let inputs = basis.dim();
        if outputs == 0 {
            return Err(Error::Config("estimator needs at least one output".into()));
        }
        if scaling.center.len() != inputs || scaling.half_range.len() != inputs {
            return Err(Error::Config("input scaling does not match the basis dimension".into()));
        }
        if scaling.half_range.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Config("input scaling ranges must be positive".into()));
        }
        if !(mu_e >= 0.0 && mu_y >= 0.0) {
            return Err(Error::Config("adaptation gains must be non-negative".into()));
        }
        let n = outputs * inputs * basis.len();
        Ok(Self {
            basis,
            scaling,
            outputs,
            inputs,
            weights: alloc::vec![0.0; n],
            gain_inverse: alloc::vec![1.0; n],
            mu_e,
            mu_y,
        })
    }

    /// Image Jacobian estimator over `(q1, q2, q3)`: a 3×3 grid in the
    /// deflection plane at mid insertion, weights uniform in ±`init_range`.
    pub fn image(plant: &PlantParams, gains: &AdaptationGains, init_range: f64, seed: u64) -> Result<Self> {
        let basis = RbfBasis::grid(3, 2, 3)?;
        let mut est = Self::new(basis, InputScaling::motors(plant), 2, gains.mu_e, gains.mu_y)?;
        est.set_input_gains(&gains.gain_inverse)?;
        est.randomize(init_range, seed);
        Ok(est)
    }

    /// Shape Jacobian estimator over `(q1, q2)` for `outputs` coordinates.
    pub fn shape(
        plant: &PlantParams,
        outputs: usize,
        gains: &AdaptationGains,
        init_range: f64,
        seed: u64,
    ) -> Result<Self> {
        let basis = RbfBasis::grid(2, 2, 3)?;
        let mut est = Self::new(basis, InputScaling::deflection(plant), outputs, gains.mu_e, gains.mu_y)?;
        est.set_input_gains(&gains.gain_inverse)?;
        est.randomize(init_range, seed);
        Ok(est)
    }

    pub fn basis(&self) -> &RbfBasis {
        &self.basis
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    /// Neuron count ξ.
    pub fn neurons(&self) -> usize {
        self.basis.len()
    }

    pub fn mu_e(&self) -> f64 {
        self.mu_e
    }

    pub fn mu_y(&self) -> f64 {
        self.mu_y
    }

    /// Stacked weights `W̄`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.weights.len() {
            return Err(Error::EstimatorDimension { expected: self.weights.len(), got: w.len() });
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Adaptation("weights must be finite".into()));
        }
        self.weights.copy_from_slice(w);
        Ok(())
    }

    /// Index of weight `(output i, input a, neuron j)` in `W̄`.
    pub fn index(&self, i: usize, a: usize, j: usize) -> usize {
        (i * self.inputs + a) * self.basis.len() + j
    }

    /// Diagonal of Γ_W⁻¹.
    pub fn gain_inverse(&self) -> &[f64] {
        &self.gain_inverse
    }

    pub fn set_gain_inverse(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.gain_inverse.len() {
            return Err(Error::EstimatorDimension { expected: self.gain_inverse.len(), got: g.len() });
        }
        if g.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Config("Γ_W⁻¹ entries must be positive".into()));
        }
        self.gain_inverse.copy_from_slice(g);
        Ok(())
    }

    /// Sets Γ_W⁻¹ from one value per motor input.
    pub fn set_input_gains(&mut self, per_input: &[f64]) -> Result<()> {
        if per_input.len() != self.inputs {
            return Err(Error::EstimatorDimension { expected: self.inputs, got: per_input.len() });
        }
        let xi = self.basis.len();
        let g: Vec<f64> = (0..self.weights.len()).map(|k| per_input[(k / xi) % self.inputs]).collect();
        self.set_gain_inverse(&g)
    }

    /// Replaces the weights with seeded uniform values in `[-range, range]`.
    pub fn randomize(&mut self, range: f64, seed: u64) {
        if range > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for w in &mut self.weights {
                *w = rng.random_range(-range..=range);
            }
        } else {
            self.weights.iter_mut().for_each(|w| *w = 0.0);
        }
    }

    /// Basis activations `θ(q)` at raw motor coordinates `q`.
    pub fn features(&self, q: &[f64]) -> Vec<f64> {
        self.basis.eval(&self.scaling.apply(q))
    }

    /// `Ĵ(q)`, `outputs × inputs`.
    pub fn eval(&self, q: &[f64]) -> DMatrix<f64> {
        let theta = self.features(q);
        self.eval_with_features(&theta)
    }

    /// `Ĵ` for precomputed activations.
    pub fn eval_with_features(&self, theta: &[f64]) -> DMatrix<f64> {
        let xi = theta.len();
        DMatrix::from_fn(self.outputs, self.inputs, |i, a| {
            let base = (i * self.inputs + a) * xi;
            self.weights[base..base + xi].iter().zip(theta).map(|(w, t)| w * t).sum()
        })
    }

    /// Predicted flow `Ĵ(q) q̇`.
    pub fn predict_flow(&self, q: &[f64], qd: &[f64]) -> DVector<f64> {
        self.eval(q) * DVector::from_column_slice(qd)
    }

    /// Prediction error `measured - Ĵ(q) q̇`.
    pub fn prediction_error(&self, q: &[f64], qd: &[f64], measured: &[f64]) -> Result<DVector<f64>> {
        self.check_dims(q, qd)?;
        if measured.len() != self.outputs {
            return Err(Error::EstimatorDimension { expected: self.outputs, got: measured.len() });
        }
        Ok(DVector::from_column_slice(measured) - self.predict_flow(q, qd))
    }

    fn check_dims(&self, q: &[f64], qd: &[f64]) -> Result<()> {
        if q.len() != self.inputs {
            return Err(Error::EstimatorDimension { expected: self.inputs, got: q.len() });
        }
        if qd.len() != self.inputs {
            return Err(Error::EstimatorDimension { expected: self.inputs, got: qd.len() });
        }
        Ok(())
    }

    /// Weight increment `Δt Γ_W⁻¹ [μ_e QΘe + μ_y QΘỹ̇]` of one adaptation step.
    /// `e` may be omitted when the estimator has no tracking term.
    pub fn increment(
        &self,
        e: Option<&[f64]>,
        flow_error: &[f64],
        q: &[f64],
        qd: &[f64],
        dt: f64,
    ) -> Result<Vec<f64>> {
        self.check_dims(q, qd)?;
        if flow_error.len() != self.outputs {
            return Err(Error::EstimatorDimension { expected: self.outputs, got: flow_error.len() });
        }
        if let Some(e) = e {
            if e.len() != self.outputs {
                return Err(Error::EstimatorDimension { expected: self.outputs, got: e.len() });
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Adaptation(format!("time step must be positive, got {dt}")));
        }
        if !finite(q) || !finite(qd) || !finite(flow_error) || !e.is_none_or(finite) {
            return Err(Error::Adaptation("non-finite adaptation input".into()));
        }
        let theta = self.features(q);
        let xi = theta.len();
        let mut delta = alloc::vec![0.0; self.weights.len()];
        for i in 0..self.outputs {
            let drive = self.mu_y * flow_error[i] + e.map_or(0.0, |e| self.mu_e * e[i]);
            if drive == 0.0 {
                continue;
            }
            for a in 0..self.inputs {
                if qd[a] == 0.0 {
                    continue;
                }
                let base = (i * self.inputs + a) * xi;
                for j in 0..xi {
                    delta[base + j] = dt * self.gain_inverse[base + j] * drive * qd[a] * theta[j];
                }
            }
        }
        Ok(delta)
    }

    /// Applies one composite adaptation step. On error the weights are left
    /// untouched.
    pub fn adapt(&mut self, e: Option<&[f64]>, flow_error: &[f64], q: &[f64], qd: &[f64], dt: f64) -> Result<()> {
        let delta = self.increment(e, flow_error, q, qd, dt)?;
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::Adaptation("weight increment is not finite".into()));
        }
        for (w, d) in self.weights.iter_mut().zip(&delta) {
            *w += d;
        }
        Ok(())
    }

    /// Largest `Δt` for which a prediction-error-only step cannot increase
    /// `‖ỹ̇‖` at the same `(q, q̇, ẏ)`.
    ///
    /// That step maps `ỹ̇` to `(I - Δt μ_y M) ỹ̇` with diagonal
    /// `M_ii = Σ_{a,j} γ_{iaj} q̇_a² θ_j²`, so the bound is `2 / (μ_y max M_ii)`.
    pub fn stability_bound(&self, q: &[f64], qd: &[f64]) -> f64 {
        let theta = self.features(q);
        let xi = theta.len();
        let mut worst: f64 = 0.0;
        for i in 0..self.outputs {
            let mut m = 0.0;
            for a in 0..self.inputs {
                let base = (i * self.inputs + a) * xi;
                for j in 0..xi {
                    m += self.gain_inverse[base + j] * qd[a] * qd[a] * theta[j] * theta[j];
                }
            }
            worst = worst.max(m);
        }
        if worst * self.mu_y > 0.0 { 2.0 / (self.mu_y * worst) } else { f64::INFINITY }
    }

    /// `Θ(q) ∈ ℝ^{mξ×m}`.
    pub fn theta_matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let theta = self.features(q);
        let xi = theta.len();
        let mut m = DMatrix::zeros(self.outputs * xi, self.outputs);
        for i in 0..self.outputs {
            for j in 0..xi {
                m[(i * xi + j, i)] = theta[j];
            }
        }
        m
    }

    /// `Q(q̇) ∈ ℝ^{mnξ×mξ}`: one `q̇ ⊗ I_ξ` block per output.
    pub fn q_matrix(&self, qd: &[f64]) -> DMatrix<f64> {
        let xi = self.basis.len();
        let n = self.inputs;
        let mut m = DMatrix::zeros(self.outputs * n * xi, self.outputs * xi);
        for i in 0..self.outputs {
            for a in 0..n {
                for j in 0..xi {
                    m[((i * n + a) * xi + j, i * xi + j)] = qd[a];
                }
            }
        }
        m
    }

    /// Weights as `(row, neuron, value)` with `row = i · inputs + a`.
    pub fn weight_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let xi = self.basis.len();
        self.weights.iter().enumerate().map(move |(k, w)| (k / xi, k % xi, *w))
    }

    /// Sets one weight addressed as in [`Self::weight_entries`].
    pub fn set_weight_entry(&mut self, row: usize, neuron: usize, value: f64) -> Result<()> {
        let xi = self.basis.len();
        let rows = self.outputs * self.inputs;
        if row >= rows || neuron >= xi {
            return Err(Error::EstimatorDimension { expected: rows * xi, got: row * xi + neuron });
        }
        if !value.is_finite() {
            return Err(Error::Adaptation("weights must be finite".into()));
        }
        self.weights[row * xi + neuron] = value;
        Ok(())
    }
}
