//! Engines that evaluate `G(t,s)f` on the nodes of `μ_t`.
//!
//! A [`Propagation`] holds, for one time `t` and several earlier times
//! `s = t − gap`, the values and gradients of `G(t,s)f` at weighted nodes of
//! `μ_t` together with a representation of each `μ_s`. Every norm used by the
//! inequality checks is a weighted sum over these nodes.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{burn_in_horizon, sample_mu_path, EmpiricalMeasure, Measure, Provenance, GAUSSIAN_TOL};
use crate::model::ProblemSpec;
use crate::ou::{estimate_omega0, evolution_measure_with, ou_kernel, OUModel, OmegaFit};
use crate::quad::{gaussian_nodes_with_root, gaussian_panel_nodes, Nodes};
use crate::sde::{identity, path_rng, purpose, run_cloud, SimConfig, Starts, StepPlan, Workspace};
use crate::testfn::TestFunction;

/// `(η₀, Λ, r₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub eta0: f64,
    pub lambda: f64,
    pub r0: f64,
}

impl From<&ProblemSpec> for Constants {
    fn from(s: &ProblemSpec) -> Self {
        Self { eta0: s.eta0, lambda: s.lambda, r0: s.r0 }
    }
}

/// How inner Monte Carlo paths share randomness across nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// Inner path `k` uses the same increments at every node, so differences
    /// between nodes carry noise proportional to the differences themselves.
    Synchronous,
    /// Every (node, path) pair has its own stream.
    Independent,
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub dim: usize,
    pub t: f64,
    pub gaps: Vec<f64>,
    /// Weighted nodes of `μ_t`.
    pub nodes: Nodes,
    pub sampled: bool,
    /// `values[g][f][j] = G(t, t − gaps[g]) f(x_j)`.
    pub values: Vec<Vec<Vec<f64>>>,
    /// Standard error of each value (zero for quadrature).
    pub value_se: Vec<Vec<Vec<f64>>>,
    /// Standard error of `value − Σ_i w_i value_i` (the centred value).
    pub centered_se: Vec<Vec<Vec<f64>>>,
    /// `grads[g][f][j·d..(j+1)·d] = ∇_x G(t, t − gaps[g]) f(x_j)`.
    pub grads: Vec<Vec<Vec<f64>>>,
    /// Standard error of `|∇_x G f|` at each node.
    pub grad_se: Vec<Vec<Vec<f64>>>,
    /// `μ_{t − gaps[g]}`.
    pub sources: Vec<Measure>,
}

impl Propagation {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn grad_norm(&self, g: usize, f: usize, j: usize) -> f64 {
        let d = self.dim;
        self.grads[g][f][j * d..(j + 1) * d].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `Σ_j w_j G f(x_j)`, which equals `m_s(f)` by invariance.
    pub fn mean_value(&self, g: usize, f: usize) -> f64 {
        let terms: Vec<f64> = self.values[g][f].iter().zip(&self.nodes.weights).map(|(v, w)| v * w).collect();
        crate::linalg::pairwise_sum(&terms)
    }
}

pub trait EvolutionEngine: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn constants(&self) -> Constants;
    /// `μ_t`.
    fn measure(&self, t: f64) -> Result<Measure>;
    fn propagate(&self, t: f64, gaps: &[f64], family: &[TestFunction], coupling: Coupling) -> Result<Propagation>;
}

fn check_request(dim: usize, gaps: &[f64], family: &[TestFunction]) -> Result<()> {
    if gaps.is_empty() || gaps.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Domain("gaps must be positive".into()));
    }
    if family.is_empty() {
        return Err(Error::Domain("empty test family".into()));
    }
    if let Some(f) = family.iter().find(|f| f.dim() != dim) {
        return Err(Error::Dimension { expected: dim, got: f.dim() });
    }
    Ok(())
}

const INNER_PANELS: usize = 30;
const INNER_HALF_WIDTH: f64 = 10.0;

/// Closed-form engine for OU models: `μ_t` by Kronrod panels or tensor
/// Gauss–Hermite nodes, `G(t,s)f` by Kronrod panels (d = 1) or Gauss–Hermite
/// over the kernel.
#[derive(Debug, Clone)]
pub struct GaussianEngine {
    pub model: OUModel,
    pub fit: OmegaFit,
    pub constants: Constants,
    /// Kronrod panels for one-dimensional `μ_t`.
    pub outer_panels: usize,
}

impl GaussianEngine {
    pub fn new(model: OUModel, constants: Constants) -> Result<Self> {
        let fit = estimate_omega0(&model, 20.0, 40)?;
        Ok(Self { model, fit, constants, outer_panels: 60 })
    }

    fn outer_nodes(&self, mu: &crate::ou::GaussianMeasure) -> Nodes {
        match mu.dim() {
            1 => gaussian_panel_nodes(mu.mean[0], mu.cov[(0, 0)].sqrt(), self.outer_panels, 12.0),
            2 => mu.hermite_nodes(40),
            _ => mu.hermite_nodes(12),
        }
    }

    fn inner_order(&self) -> usize {
        if self.model.dim == 2 {
            24
        } else {
            10
        }
    }
}

impl EvolutionEngine for GaussianEngine {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn dim(&self) -> usize {
        self.model.dim
    }

    fn constants(&self) -> Constants {
        self.constants
    }

    fn measure(&self, t: f64) -> Result<Measure> {
        Ok(Measure::Gaussian(evolution_measure_with(&self.model, t, GAUSSIAN_TOL, &self.fit)?))
    }

    fn propagate(&self, t: f64, gaps: &[f64], family: &[TestFunction], _coupling: Coupling) -> Result<Propagation> {
        let d = self.model.dim;
        if d > crate::ou::MAX_TENSOR_DIM {
            return Err(Error::Refused(format!("the Gaussian engine handles d ≤ {}", crate::ou::MAX_TENSOR_DIM)));
        }
        check_request(d, gaps, family)?;
        let mu_t = evolution_measure_with(&self.model, t, GAUSSIAN_TOL, &self.fit)?;
        let nodes = self.outer_nodes(&mu_t);
        let n = nodes.len();
        let nf = family.len();
        let mut values = Vec::with_capacity(gaps.len());
        let mut grads = Vec::with_capacity(gaps.len());
        let mut sources = Vec::with_capacity(gaps.len());
        for &gap in gaps {
            let s = t - gap;
            let kernel = ou_kernel(&self.model, t, s)?;
            let inner = if d == 1 {
                // Gauss–Hermite converges slowly when f has complex poles near the
                // real axis (tanh ridges); panels do not.
                gaussian_panel_nodes(0.0, kernel.cov[(0, 0)].sqrt(), INNER_PANELS, INNER_HALF_WIDTH)
            } else {
                let root = crate::linalg::sym_sqrt_psd(&kernel.cov);
                gaussian_nodes_with_root(&DVector::zeros(d), &root, self.inner_order())
            };
            let ut = kernel.transition.transpose();
            let per_node: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
                .into_par_iter()
                .map_init(
                    || (vec![0.0; d], vec![0.0; d]),
                    |(y, gbuf), j| {
                        let x = DVector::from_column_slice(nodes.point(j));
                        let center = &kernel.transition * x + &kernel.shift;
                        let mut vals = vec![0.0; nf];
                        let mut eg = vec![0.0; nf * d];
                        for k in 0..inner.len() {
                            let w = inner.weights[k];
                            let z = inner.point(k);
                            for i in 0..d {
                                y[i] = center[i] + z[i];
                            }
                            for (fi, f) in family.iter().enumerate() {
                                vals[fi] += w * f.value(y);
                                f.gradient_into(y, gbuf);
                                for i in 0..d {
                                    eg[fi * d + i] += w * gbuf[i];
                                }
                            }
                        }
                        let mut gr = vec![0.0; nf * d];
                        for fi in 0..nf {
                            for r in 0..d {
                                gr[fi * d + r] = (0..d).map(|c| ut[(r, c)] * eg[fi * d + c]).sum();
                            }
                        }
                        (vals, gr)
                    },
                )
                .collect();
            let mut v = vec![Vec::with_capacity(n); nf];
            let mut g = vec![Vec::with_capacity(n * d); nf];
            for (vals, gr) in per_node {
                for fi in 0..nf {
                    v[fi].push(vals[fi]);
                    g[fi].extend_from_slice(&gr[fi * d..(fi + 1) * d]);
                }
            }
            values.push(v);
            grads.push(g);
            sources.push(Measure::Gaussian(evolution_measure_with(&self.model, s, GAUSSIAN_TOL, &self.fit)?));
        }
        let zeros = vec![vec![vec![0.0; n]; nf]; gaps.len()];
        Ok(Propagation {
            dim: d,
            t,
            gaps: gaps.to_vec(),
            nodes,
            sampled: false,
            values,
            value_se: zeros.clone(),
            centered_se: zeros.clone(),
            grads,
            grad_se: zeros,
            sources,
        })
    }
}

/// Nested Monte Carlo engine: `μ_t` from a burn-in cloud, `G(t,s)f(x_j)` from
/// inner Euler–Maruyama paths with pathwise Jacobians.
#[derive(Debug, Clone)]
pub struct MonteCarloEngine {
    pub spec: ProblemSpec,
    pub cfg: SimConfig,
    /// Burn-in accuracy for `μ_t`.
    pub burn_in_tol: f64,
    pub outer: usize,
    pub inner: usize,
}

impl MonteCarloEngine {
    pub fn new(spec: ProblemSpec, cfg: SimConfig, outer: usize, inner: usize) -> Self {
        Self { spec, cfg, burn_in_tol: 1e-3, outer, inner }
    }

    fn cloud_cfg(&self, n: usize) -> SimConfig {
        SimConfig { n_paths: n, ..self.cfg }
    }

    fn sample(&self, t: f64, n: usize) -> Result<EmpiricalMeasure> {
        let h = burn_in_horizon(&self.spec, self.burn_in_tol)?;
        Ok(sample_mu_path(&self.spec, &[t], h, &self.cloud_cfg(n))?.remove(0))
    }
}

struct NodeSums {
    v: Vec<f64>,
    v2: Vec<f64>,
    c2: Vec<f64>,
    g: Vec<f64>,
    gn2: Vec<f64>,
}

impl EvolutionEngine for MonteCarloEngine {
    fn name(&self) -> &str {
        "monte_carlo"
    }

    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn constants(&self) -> Constants {
        Constants::from(&self.spec)
    }

    fn measure(&self, t: f64) -> Result<Measure> {
        Ok(Measure::Empirical(self.sample(t, self.outer)?))
    }

    fn propagate(&self, t: f64, gaps: &[f64], family: &[TestFunction], coupling: Coupling) -> Result<Propagation> {
        let d = self.spec.dim;
        check_request(d, gaps, family)?;
        let mut order: Vec<usize> = (0..gaps.len()).collect();
        order.sort_by(|&a, &b| gaps[a].total_cmp(&gaps[b]));
        let checkpoints: Vec<f64> = order.iter().map(|&g| t - gaps[g]).collect();
        let mu_t = self.sample(t, self.outer)?;
        let n = mu_t.len();
        let nf = family.len();
        let ng = gaps.len();
        let plan = StepPlan::new(&self.spec, t, &checkpoints, self.cfg.dt)?;
        let slot = |c: usize, f: usize| c * nf + f;
        let mut sums: Vec<NodeSums> = (0..n)
            .map(|_| NodeSums {
                v: vec![0.0; ng * nf],
                v2: vec![0.0; ng * nf],
                c2: vec![0.0; ng * nf],
                g: vec![0.0; ng * nf * d],
                gn2: vec![0.0; ng * nf],
            })
            .collect();
        let run_node = |x: &[f64], noise: &[f64], ws: &mut Workspace| -> std::result::Result<(Vec<f64>, Vec<f64>), usize> {
            let mut y = x.to_vec();
            let mut jac = identity(d);
            let mut vals = vec![0.0; ng * nf];
            let mut grs = vec![0.0; ng * nf * d];
            let mut gbuf = vec![0.0; d];
            let mut at = 0;
            for (c, &mark) in plan.marks.iter().enumerate() {
                crate::sde::advance(&plan, at..mark, self.cfg.scheme, &mut y, Some(&mut jac), noise, ws)?;
                at = mark;
                for (fi, f) in family.iter().enumerate() {
                    vals[slot(c, fi)] = f.value(&y);
                    f.gradient_into(&y, &mut gbuf);
                    for col in 0..d {
                        grs[slot(c, fi) * d + col] = (0..d).map(|r| jac[r * d + col] * gbuf[r]).sum();
                    }
                }
            }
            Ok((vals, grs))
        };
        let mut shared = Vec::new();
        for k in 0..self.inner {
            if coupling == Coupling::Synchronous {
                plan.noise(&mut path_rng(self.cfg.seed, purpose::INNER, k as u64), &mut shared);
            }
            let results: Vec<std::result::Result<(Vec<f64>, Vec<f64>), (usize, usize)>> = (0..n)
                .into_par_iter()
                .map_init(
                    || (Workspace::new(d), Vec::new()),
                    |(ws, own), j| {
                        let noise: &[f64] = match coupling {
                            Coupling::Synchronous => &shared,
                            Coupling::Independent => {
                                let id = (j * self.inner + k) as u64;
                                plan.noise(&mut path_rng(self.cfg.seed, purpose::INNER ^ 0x100, id), own);
                                own
                            }
                        };
                        run_node(mu_t.point(j), noise, ws).map_err(|step| (step, j))
                    },
                )
                .collect();
            let mut rows = Vec::with_capacity(n);
            for r in results {
                rows.push(r.map_err(|(step, path)| Error::BlowUp { step, path })?);
            }
            let avg: Vec<f64> =
                (0..ng * nf).map(|q| crate::linalg::pairwise_sum(&rows.iter().map(|r| r.0[q]).collect::<Vec<_>>()) / n as f64).collect();
            for (s, (vals, grs)) in sums.iter_mut().zip(rows) {
                for q in 0..ng * nf {
                    s.v[q] += vals[q];
                    s.v2[q] += vals[q] * vals[q];
                    let c = vals[q] - avg[q];
                    s.c2[q] += c * c;
                    let gq = &grs[q * d..(q + 1) * d];
                    s.gn2[q] += gq.iter().map(|v| v * v).sum::<f64>();
                    for i in 0..d {
                        s.g[q * d + i] += gq[i];
                    }
                }
            }
        }
        let kf = self.inner as f64;
        let se_of = |sum: f64, sum2: f64| -> f64 {
            if self.inner < 2 {
                return 0.0;
            }
            let m = sum / kf;
            ((sum2 / kf - m * m).max(0.0) * kf / (kf - 1.0) / kf).sqrt()
        };
        let mut values = vec![vec![Vec::with_capacity(n); nf]; ng];
        let mut value_se = values.clone();
        let mut centered_se = values.clone();
        let mut grads = vec![vec![Vec::with_capacity(n * d); nf]; ng];
        let mut grad_se = values.clone();
        for (c, &g) in order.iter().enumerate() {
            for fi in 0..nf {
                let q = slot(c, fi);
                for s in &sums {
                    values[g][fi].push(s.v[q] / kf);
                    value_se[g][fi].push(se_of(s.v[q], s.v2[q]));
                    centered_se[g][fi].push(if self.inner < 2 { 0.0 } else { (s.c2[q] / kf / (kf - 1.0)).sqrt() });
                    let gm: Vec<f64> = s.g[q * d..(q + 1) * d].iter().map(|v| v / kf).collect();
                    let norm2 = gm.iter().map(|v| v * v).sum::<f64>();
                    let spread = (s.gn2[q] / kf - norm2).max(0.0);
                    grad_se[g][fi].push(if self.inner < 2 { 0.0 } else { (spread / (kf - 1.0)).sqrt() });
                    grads[g][fi].extend(gm);
                }
            }
        }
        // Independent pushes of the μ_t cloud represent each μ_s.
        let pushed = run_cloud(&self.spec, t, &checkpoints, Starts::Each(&mu_t.samples), n, &self.cloud_cfg(n), purpose::PUSH, false)?;
        let mut sources = vec![None; ng];
        for (c, &g) in order.iter().enumerate() {
            sources[g] = Some(Measure::Empirical(EmpiricalMeasure {
                dim: d,
                samples: pushed.states[c].clone(),
                provenance: Provenance { start: mu_t.provenance.start, t: checkpoints[c], ..mu_t.provenance },
                certificate: mu_t.certificate.clone(),
            }));
        }
        Ok(Propagation {
            dim: d,
            t,
            gaps: gaps.to_vec(),
            nodes: Nodes { dim: d, weights: vec![1.0 / n as f64; n], points: mu_t.samples },
            sampled: true,
            values,
            value_se,
            centered_se,
            grads,
            grad_se,
            sources: sources.into_iter().map(|m| m.expect("every gap pushed")).collect(),
        })
    }
}
