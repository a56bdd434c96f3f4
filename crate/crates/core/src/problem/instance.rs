use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::graph::{generate_regular_graph, Graph};
use super::regularizer::Regularizer;
use crate::error::{check_dim, Error, Result};
use crate::exec::Execution;
use crate::rng::{self, Purpose};

/// Networked regression problem `G(x) = (1/N) Σ_i ‖H_i x_𝒩(i) − h_i‖² + R(x)`.
///
/// Immutable once built. Node `i` owns the block `x_i` of length `m_i`; its
/// loss reads the neighborhood stack `x_𝒩(i)` in ascending node order.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    graph: Graph,
    block_dims: Vec<usize>,
    offsets: Vec<usize>,
    /// `stack_offsets[j][p]`: start of the `p`-th neighbor's block in node `j`'s stack.
    stack_offsets: Vec<Vec<usize>>,
    matrices: Vec<DMatrix<f64>>,
    targets: Vec<DVector<f64>>,
    regularizer: Regularizer,
    generator: Vec<f64>,
}

/// Lipschitz and curvature data.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessReport {
    /// `L_i = 2σ_max(H_i)²`
    pub lipschitz: Vec<f64>,
    pub l_bar: f64,
    /// Strong convexity of `G`; zero when none could be certified.
    pub mu: f64,
    /// Extreme eigenvalues of the aggregate Hessian `(2/N) Σ 𝒜_iᵀ H_iᵀ H_i 𝒜_i`.
    pub hessian_min: f64,
    pub hessian_max: f64,
}

impl SmoothnessReport {
    pub fn strongly_convex(&self) -> bool {
        self.mu > 0.0
    }

    /// Lipschitz constant of `∇F`.
    pub fn l_f(&self) -> f64 {
        self.hessian_max
    }

    pub fn require_strong_convexity(&self) -> Result<f64> {
        if self.strongly_convex() {
            Ok(self.mu)
        } else {
            Err(Error::NotStronglyConvex(format!(
                "mu = {} (smallest Hessian eigenvalue {:e}); linear-rate guarantees do not apply",
                self.mu, self.hessian_min
            )))
        }
    }
}

impl ProblemInstance {
    pub fn new(
        graph: Graph,
        block_dims: Vec<usize>,
        matrices: Vec<DMatrix<f64>>,
        targets: Vec<DVector<f64>>,
        regularizer: Regularizer,
        generator: Vec<f64>,
    ) -> Result<Self> {
        let n = graph.node_count();
        check_dim(n, block_dims.len())?;
        check_dim(n, matrices.len())?;
        check_dim(n, targets.len())?;
        regularizer.validate()?;
        if block_dims.contains(&0) {
            return Err(Error::Parameter("every block dimension must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for &m in &block_dims {
            offsets.push(offsets.last().unwrap() + m);
        }
        check_dim(offsets[n], generator.len())?;
        let mut stack_offsets = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = 0;
            let mut offs = Vec::with_capacity(graph.neighborhood(i).len());
            for &j in graph.neighborhood(i) {
                offs.push(acc);
                acc += block_dims[j];
            }
            check_dim(acc, matrices[i].ncols())?;
            check_dim(matrices[i].nrows(), targets[i].len())?;
            if matrices[i].nrows() == 0 {
                return Err(Error::Parameter(format!("node {i} has no data rows")));
            }
            stack_offsets.push(offs);
        }
        Ok(Self { graph, block_dims, offsets, stack_offsets, matrices, targets, regularizer, generator })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// `P = Σ_i m_i`
    pub fn dim(&self) -> usize {
        self.offsets[self.node_count()]
    }

    pub fn block_dim(&self, i: usize) -> usize {
        self.block_dims[i]
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn max_block_dim(&self) -> usize {
        self.block_dims.iter().copied().max().unwrap_or(0)
    }

    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Length of the neighborhood stack `x_𝒩(i)` (and of `∇f_i`).
    pub fn nbhd_dim(&self, i: usize) -> usize {
        self.matrices[i].ncols()
    }

    pub fn rows(&self, i: usize) -> usize {
        self.matrices[i].nrows()
    }

    pub fn matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.matrices[i]
    }

    pub fn target(&self, i: usize) -> &DVector<f64> {
        &self.targets[i]
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    /// Same data, different regularizer.
    pub fn with_regularizer(&self, regularizer: Regularizer) -> Result<Self> {
        regularizer.validate()?;
        let mut out = self.clone();
        out.regularizer = regularizer;
        Ok(out)
    }

    /// The vector the targets were generated from.
    pub fn generator(&self) -> &[f64] {
        &self.generator
    }

    /// `𝒜_i x`
    pub fn gather(&self, x: &[f64], i: usize) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = Vec::with_capacity(self.nbhd_dim(i));
        for &j in self.graph.neighborhood(i) {
            out.extend_from_slice(&x[self.block_range(j)]);
        }
        Ok(out)
    }

    /// `ℬ_{ji} g`: node `i`'s block of a vector stacked over `𝒩(j)`.
    pub fn scatter_block<'a>(&self, g: &'a [f64], j: usize, i: usize) -> Result<&'a [f64]> {
        check_dim(self.nbhd_dim(j), g.len())?;
        let p = self
            .graph
            .position(j, i)
            .ok_or_else(|| Error::Index(format!("node {i} is not in the neighborhood of node {j}")))?;
        let start = self.stack_offsets[j][p];
        Ok(&g[start..start + self.block_dims[i]])
    }

    /// `out += scale · 𝒜_iᵀ g`
    pub fn scatter_add(&self, out: &mut [f64], i: usize, g: &[f64], scale: f64) -> Result<()> {
        check_dim(self.dim(), out.len())?;
        check_dim(self.nbhd_dim(i), g.len())?;
        let mut pos = 0;
        for &j in self.graph.neighborhood(i) {
            for k in self.block_range(j) {
                out[k] += scale * g[pos];
                pos += 1;
            }
        }
        Ok(())
    }

    /// `𝒜_iᵀ g` as a full-length vector.
    pub fn lift(&self, i: usize, g: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.scatter_add(&mut out, i, g, 1.0)?;
        Ok(out)
    }

    fn residual(&self, i: usize, x_nbhd: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.nbhd_dim(i), x_nbhd.len())?;
        let x = DVector::from_column_slice(x_nbhd);
        Ok(&self.matrices[i] * x - &self.targets[i])
    }

    /// `f_i(x_𝒩(i)) = ‖H_i x_𝒩(i) − h_i‖²`
    pub fn local_loss(&self, i: usize, x_nbhd: &[f64]) -> Result<f64> {
        Ok(self.residual(i, x_nbhd)?.norm_squared())
    }

    /// `∇f_i = 2 H_iᵀ (H_i x_𝒩(i) − h_i)`
    pub fn local_gradient(&self, i: usize, x_nbhd: &[f64]) -> Result<Vec<f64>> {
        let r = self.residual(i, x_nbhd)?;
        let g = self.matrices[i].tr_mul(&r) * 2.0;
        Ok(g.as_slice().to_vec())
    }

    /// Linear part of the gradient: `∇f_i(x + δ) − ∇f_i(x) = 2 H_iᵀ H_i δ`.
    pub fn gradient_difference(&self, i: usize, delta_nbhd: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.nbhd_dim(i), delta_nbhd.len())?;
        let d = DVector::from_column_slice(delta_nbhd);
        let hd = &self.matrices[i] * d;
        Ok((self.matrices[i].tr_mul(&hd) * 2.0).as_slice().to_vec())
    }

    /// `∇F(x) = (1/N) Σ_i 𝒜_iᵀ ∇f_i(𝒜_i x)`
    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.full_gradient_with(x, Execution::Sequential)
    }

    /// Node gradients may be evaluated concurrently; they are accumulated in
    /// ascending node order, so the result does not depend on `exec`.
    pub fn full_gradient_with(&self, x: &[f64], exec: Execution) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let n = self.node_count();
        let locals = exec.map(n, |i| self.gather(x, i).and_then(|xn| self.local_gradient(i, &xn)));
        let mut out = vec![0.0; self.dim()];
        for (i, g) in locals.into_iter().enumerate() {
            self.scatter_add(&mut out, i, &g?, 1.0)?;
        }
        let nf = n as f64;
        out.iter_mut().for_each(|v| *v /= nf);
        Ok(out)
    }

    /// `F(x) = (1/N) Σ_i f_i(𝒜_i x)`
    pub fn smooth_objective(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut acc = 0.0;
        for i in 0..self.node_count() {
            acc += self.local_loss(i, &self.gather(x, i)?)?;
        }
        Ok(acc / self.node_count() as f64)
    }

    pub fn regularizer_value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok((0..self.node_count()).map(|i| self.regularizer.value_block(&x[self.block_range(i)])).sum())
    }

    /// `G(x) = F(x) + R(x)`
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        Ok(self.smooth_objective(x)? + self.regularizer_value(x)?)
    }

    /// `G(x) − G(y)` computed from residual differences, accurate to the
    /// scale of `‖x − y‖` rather than the scale of `G`.
    pub fn objective_gap(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), y.len())?;
        let mut smooth = 0.0;
        for i in 0..self.node_count() {
            let yn = DVector::from_vec(self.gather(y, i)?);
            let dn = DVector::from_vec(self.gather(x, i)?) - &yn;
            let r = &self.matrices[i] * yn - &self.targets[i];
            let d = &self.matrices[i] * dn;
            smooth += d.dot(&(r * 2.0 + &d));
        }
        smooth /= self.node_count() as f64;
        let reg: f64 = (0..self.node_count())
            .map(|i| {
                let range = self.block_range(i);
                self.regularizer.value_difference_block(&x[range.clone()], &y[range])
            })
            .sum();
        Ok(smooth + reg)
    }

    /// Blockwise `prox_{ηR}(v)`.
    pub fn prox(&self, v: &[f64], eta: f64) -> Result<Vec<f64>> {
        let mut out = v.to_vec();
        self.prox_in_place(&mut out, eta)?;
        Ok(out)
    }

    pub fn prox_in_place(&self, v: &mut [f64], eta: f64) -> Result<()> {
        check_dim(self.dim(), v.len())?;
        if eta <= 0.0 {
            return Err(Error::Parameter(format!("prox step must be positive, got {eta}")));
        }
        for i in 0..self.node_count() {
            let range = self.block_range(i);
            self.regularizer.prox_block_in_place(&mut v[range], eta);
        }
        Ok(())
    }

    /// `(2/N) Σ_i 𝒜_iᵀ H_iᵀ H_i 𝒜_i`
    pub fn aggregate_hessian(&self) -> DMatrix<f64> {
        let p = self.dim();
        let n = self.node_count();
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let gram = self.matrices[i].tr_mul(&self.matrices[i]);
            let idx: Vec<usize> =
                self.graph.neighborhood(i).iter().flat_map(|&j| self.block_range(j)).collect();
            for (a, &ga) in idx.iter().enumerate() {
                for (b, &gb) in idx.iter().enumerate() {
                    hess[(ga, gb)] += gram[(a, b)];
                }
            }
        }
        hess * (2.0 / n as f64)
    }

    pub fn smoothness(&self) -> SmoothnessReport {
        let lipschitz: Vec<f64> = self
            .matrices
            .iter()
            .map(|h| {
                let s = h.singular_values().max();
                2.0 * s * s
            })
            .collect();
        let l_bar = lipschitz.iter().copied().fold(0.0, f64::max);
        let eig = SymmetricEigen::new(self.aggregate_hessian()).eigenvalues;
        let hessian_min = eig.min();
        let hessian_max = eig.max();
        let from_r = self.regularizer.strong_convexity();
        let mu = if from_r > 0.0 { from_r } else { hessian_min.max(0.0) };
        SmoothnessReport { lipschitz, l_bar, mu, hessian_min, hessian_max }
    }
}

/// Parameters of a random instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    pub nodes: usize,
    pub degree: usize,
    pub block_dim: usize,
    pub rows: usize,
    pub regularizer: Regularizer,
    pub seed: u64,
}

/// Random instance on a `d`-regular graph.
///
/// `H_i` has i.i.d. `N(0, 1/rows)` entries, the generator `x_gen` has i.i.d.
/// standard normal entries, and `h_i = H_i 𝒜_i x_gen`, so every local loss
/// vanishes at `x_gen`.
pub fn generate_instance(spec: &InstanceSpec) -> Result<ProblemInstance> {
    let InstanceSpec { nodes, degree, block_dim, rows, regularizer, seed } = *spec;
    if rows == 0 || block_dim == 0 {
        return Err(Error::Parameter(format!("need rows >= 1 and m >= 1, got rows = {rows}, m = {block_dim}")));
    }
    let graph = generate_regular_graph(nodes, degree, seed)?;
    let p = nodes * block_dim;
    let mut gen_rng = rng::stream(seed, Purpose::Generator, 0, 0, 0);
    let generator: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut gen_rng)).collect();
    let scale = 1.0 / (rows as f64).sqrt();
    let mut matrices = Vec::with_capacity(nodes);
    let mut targets = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let cols = graph.neighborhood(i).len() * block_dim;
        let mut r = rng::stream(seed, Purpose::Matrices, i as u64, 0, 0);
        // row-major draw order, so the stream maps to the on-disk layout
        let entries =
            (0..rows * cols).map(|_| { let z: f64 = StandardNormal.sample(&mut r); scale * z }).collect::<Vec<f64>>();
        let h = DMatrix::from_row_slice(rows, cols, &entries);
        let xn: Vec<f64> = graph
            .neighborhood(i)
            .iter()
            .flat_map(|&j| generator[j * block_dim..(j + 1) * block_dim].iter().copied())
            .collect();
        targets.push(&h * DVector::from_vec(xn));
        matrices.push(h);
    }
    ProblemInstance::new(graph, vec![block_dim; nodes], matrices, targets, regularizer, generator)
}
