//! Joint belief over the target location and every player's crossover
//! probability, discretized on a product grid.
//!
//! The x axis has equal cells over `[0, 1]`. Each player's ε axis is a set
//! of quadrature nodes over `[0, 1/2)`; likelihoods and means are evaluated
//! at those nodes (cell midpoints for the uniform axis).

use crate::error::{check_open_half, Error, Result};
use crate::info::{capacity_unchecked, h};
use crate::posterior::{grid_fractions, GridPosterior, QueryRegion};

/// Default number of cells on each ε axis.
pub const DEFAULT_EPS_CELLS: usize = 64;

/// Quadrature nodes for one player's crossover probability.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsAxis {
    nodes: Vec<f64>,
    width: f64,
}

impl EpsAxis {
    /// `cells` equal cells over `[0, 1/2)`, represented by their midpoints.
    pub fn uniform(cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::GridTooSmall { min: 1, got: 0 });
        }
        let width = 0.5 / cells as f64;
        Ok(EpsAxis {
            nodes: (0..cells).map(|j| (j as f64 + 0.5) * width).collect(),
            width,
        })
    }

    /// A single known value; the joint model then reduces to the known-ε one.
    pub fn point(eps: f64) -> Result<Self> {
        check_open_half(eps)?;
        Ok(EpsAxis {
            nodes: vec![eps],
            width: 1.0,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cell width used for densities (1 for a point axis).
    pub fn width(&self) -> f64 {
        self.width
    }
}

/// Discretized `p_n(x, ε_1, ..., ε_M)`.
///
/// Storage is row-major with x as the slowest axis, then players in order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGridPosterior {
    x_cells: usize,
    axes: Vec<EpsAxis>,
    strides: Vec<usize>,
    block: usize,
    masses: Vec<f64>,
}

/// `p_n(x, ε_u)` on the `x_cells * eps_cells` grid, row-major in x.
#[derive(Debug, Clone, PartialEq)]
pub struct SubMarginal {
    pub x_cells: usize,
    pub eps_cells: usize,
    pub masses: Vec<f64>,
}

impl SubMarginal {
    pub fn get(&self, ix: usize, ie: usize) -> f64 {
        self.masses[ix * self.eps_cells + ie]
    }
}

/// All marginals of a joint posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMarginals {
    pub x: GridPosterior,
    pub eps: Vec<Vec<f64>>,
    pub sub: Vec<SubMarginal>,
}

impl JointGridPosterior {
    pub fn uniform(x_cells: usize, axes: Vec<EpsAxis>) -> Result<Self> {
        let len = x_cells * axes.iter().map(EpsAxis::len).product::<usize>();
        Self::from_weights(x_cells, axes, vec![1.0; len])
    }

    /// Product prior `p(x) * Π_u p_u(ε_u)`.
    pub fn product(x_prior: &GridPosterior, eps_priors: Vec<(EpsAxis, Vec<f64>)>) -> Result<Self> {
        for (axis, w) in &eps_priors {
            if w.len() != axis.len() {
                return Err(Error::InvalidMasses);
            }
        }
        let x_cells = x_prior.cells();
        let axes: Vec<EpsAxis> = eps_priors.iter().map(|(a, _)| a.clone()).collect();
        let block: usize = axes.iter().map(EpsAxis::len).product();
        let strides = strides_for(&axes);
        let mut weights = vec![0.0; x_cells * block];
        for (ix, &px) in x_prior.masses().iter().enumerate() {
            for r in 0..block {
                let mut w = px;
                for (u, (axis, pw)) in eps_priors.iter().enumerate() {
                    w *= pw[(r / strides[u]) % axis.len()];
                }
                weights[ix * block + r] = w;
            }
        }
        Self::from_weights(x_cells, axes, weights)
    }

    pub fn from_weights(x_cells: usize, axes: Vec<EpsAxis>, weights: Vec<f64>) -> Result<Self> {
        if x_cells < 2 {
            return Err(Error::GridTooSmall {
                min: 2,
                got: x_cells,
            });
        }
        if axes.is_empty() {
            return Err(Error::NoPlayers);
        }
        let block: usize = axes.iter().map(EpsAxis::len).product();
        if weights.len() != x_cells * block
            || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::InvalidMasses);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMasses);
        }
        Ok(JointGridPosterior {
            x_cells,
            strides: strides_for(&axes),
            block,
            axes,
            masses: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn players(&self) -> usize {
        self.axes.len()
    }

    pub fn x_cells(&self) -> usize {
        self.x_cells
    }

    pub fn x_delta(&self) -> f64 {
        1.0 / self.x_cells as f64
    }

    pub fn axes(&self) -> &[EpsAxis] {
        &self.axes
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn check_player(&self, u: usize) -> Result<()> {
        if u < self.players() {
            Ok(())
        } else {
            Err(Error::InvalidPlayer {
                index: u,
                count: self.players(),
            })
        }
    }

    #[inline]
    fn eps_index(&self, r: usize, u: usize) -> usize {
        (r / self.strides[u]) % self.axes[u].len()
    }

    pub fn x_marginal(&self) -> GridPosterior {
        let w: Vec<f64> = self
            .masses
            .chunks_exact(self.block)
            .map(|row| row.iter().sum())
            .collect();
        GridPosterior::from_weights(w).expect("joint posterior holds positive mass")
    }

    pub fn eps_marginal(&self, u: usize) -> Result<Vec<f64>> {
        self.check_player(u)?;
        let mut out = vec![0.0; self.axes[u].len()];
        for row in self.masses.chunks_exact(self.block) {
            for (r, &m) in row.iter().enumerate() {
                out[self.eps_index(r, u)] += m;
            }
        }
        Ok(out)
    }

    pub fn sub_marginal(&self, u: usize) -> Result<SubMarginal> {
        self.check_player(u)?;
        let ne = self.axes[u].len();
        let mut masses = vec![0.0; self.x_cells * ne];
        for (ix, row) in self.masses.chunks_exact(self.block).enumerate() {
            for (r, &m) in row.iter().enumerate() {
                masses[ix * ne + self.eps_index(r, u)] += m;
            }
        }
        Ok(SubMarginal {
            x_cells: self.x_cells,
            eps_cells: ne,
            masses,
        })
    }

    pub fn marginals(&self) -> JointMarginals {
        let m = self.players();
        JointMarginals {
            x: self.x_marginal(),
            eps: (0..m).map(|u| self.eps_marginal(u).unwrap()).collect(),
            sub: (0..m).map(|u| self.sub_marginal(u).unwrap()).collect(),
        }
    }

    /// Bayes update after player `u` answers "is the target in `query`?".
    pub fn bayes_update(&self, u: usize, query: &QueryRegion, response: bool) -> Result<Self> {
        self.check_player(u)?;
        let frac = grid_fractions(self.x_cells, query)?;
        let nodes = self.axes[u].nodes();
        // likelihood of the observed answer when the truth bit is in/out
        let lik: Vec<(f64, f64)> = nodes
            .iter()
            .map(|&e| if response { (1.0 - e, e) } else { (e, 1.0 - e) })
            .collect();
        let mut masses = self.masses.clone();
        for (ix, row) in masses.chunks_exact_mut(self.block).enumerate() {
            let f = frac[ix];
            for (r, m) in row.iter_mut().enumerate() {
                let (l_in, l_out) = lik[self.eps_index(r, u)];
                *m *= f * l_in + (1.0 - f) * l_out;
            }
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        masses.iter_mut().for_each(|m| *m /= total);
        Ok(JointGridPosterior {
            masses,
            ..self.clone_shape()
        })
    }

    fn clone_shape(&self) -> Self {
        JointGridPosterior {
            x_cells: self.x_cells,
            axes: self.axes.clone(),
            strides: self.strides.clone(),
            block: self.block,
            masses: Vec::new(),
        }
    }

    /// Conditional means `(E[X*], E[ε*_1], ..., E[ε*_M])` by node quadrature.
    pub fn means(&self) -> (f64, Vec<f64>) {
        let dx = self.x_delta();
        let mut x_mean = 0.0;
        let mut eps_mean = vec![0.0; self.players()];
        for (ix, row) in self.masses.chunks_exact(self.block).enumerate() {
            let xm = (ix as f64 + 0.5) * dx;
            for (r, &m) in row.iter().enumerate() {
                x_mean += m * xm;
                for (u, e) in eps_mean.iter_mut().enumerate() {
                    *e += m * self.axes[u].nodes[self.eps_index(r, u)];
                }
            }
        }
        (x_mean, eps_mean)
    }

    /// `E[C(ε_u) | F_n]` under the ε_u marginal.
    pub fn expected_capacity(&self, u: usize) -> Result<f64> {
        let marg = self.eps_marginal(u)?;
        Ok(marg
            .iter()
            .zip(self.axes[u].nodes())
            .map(|(p, &e)| p * capacity_unchecked(e))
            .sum())
    }

    /// `E[h(ε_u) | F_n]`.
    pub fn expected_noise_entropy(&self, u: usize) -> Result<f64> {
        let marg = self.eps_marginal(u)?;
        Ok(marg
            .iter()
            .zip(self.axes[u].nodes())
            .map(|(p, &e)| p * h(e))
            .sum())
    }

    /// Differential entropy of the piecewise-constant joint density.
    ///
    /// Point axes count as discrete (unit width).
    pub fn entropy(&self) -> f64 {
        let vol = self.x_delta() * self.axes.iter().map(EpsAxis::width).product::<f64>();
        self.masses
            .iter()
            .filter(|&&m| m > 0.0)
            .map(|&m| -m * (m / vol).ln())
            .sum()
    }
}

fn strides_for(axes: &[EpsAxis]) -> Vec<usize> {
    let mut strides = vec![1; axes.len()];
    for u in (0..axes.len().saturating_sub(1)).rev() {
        strides[u] = strides[u + 1] * axes[u + 1].len();
    }
    strides
}
