//! Expectations over a standard Gaussian vector: tensor Gauss-Hermite rules
//! for low rank, randomly shifted Halton points otherwise.

use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::math::{cos, ln, sqrt, PI};
use crate::seed::splitmix64;

/// Largest latent rank integrated with a tensor rule.
pub const MAX_TENSOR_RANK: usize = 3;
pub const DEFAULT_NODES: usize = 64;
pub const DEFAULT_DRAWS: usize = 1 << 20;
/// Independent random shifts of the Halton point set; the spread of their
/// means is the reported error.
pub const QMC_SHIFTS: usize = 16;

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Tensor rule up to [`MAX_TENSOR_RANK`], quasi-Monte Carlo beyond.
    Auto { nodes: usize, draws: usize },
    /// Tensor rule only; larger ranks are an error.
    Tensor { nodes: usize },
    /// Quasi-Monte Carlo at any rank.
    QuasiMonteCarlo { draws: usize },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Auto { nodes: DEFAULT_NODES, draws: DEFAULT_DRAWS }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadratureError {
    #[error("latent rank {rank} is too large for a tensor rule (max {max}) and Monte Carlo is disabled")]
    Unavailable { rank: usize, max: usize },
    #[error("quasi-Monte Carlo rank {rank} exceeds the {max} supported Halton dimension pairs")]
    RankTooLarge { rank: usize, max: usize },
    #[error("tensor rule needs at least two nodes per axis")]
    TooFewNodes,
    #[error("quasi-Monte Carlo needs at least {min} draws")]
    TooFewDraws { min: usize },
}

/// Nodes and weights of the `n`-point Gauss rule for the standard normal
/// density (Golub-Welsch on the probabilists' Hermite recurrence).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                sqrt(i.max(j) as f64)
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], v * v)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // symmetrise: the rule is exactly symmetric about zero
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let node = 0.5 * (pairs[j].0 - pairs[i].0);
            let weight = 0.5 * (pairs[i].1 + pairs[j].1);
            pairs[i] = (-node, weight);
            pairs[j] = (node, weight);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }
}

/// `E[f(xi)]` for `xi ~ N(0, I_rank)` with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub error: f64,
}

pub fn gaussian_expectation(
    rank: usize,
    integrator: Integrator,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Result<Expectation, QuadratureError> {
    if rank == 0 {
        return Ok(Expectation { value: f(&[]), error: 0.0 });
    }
    match integrator {
        Integrator::Tensor { nodes } => {
            if rank > MAX_TENSOR_RANK {
                return Err(QuadratureError::Unavailable { rank, max: MAX_TENSOR_RANK });
            }
            tensor(rank, nodes, &mut f)
        }
        Integrator::Auto { nodes, draws } => {
            if rank <= MAX_TENSOR_RANK {
                tensor(rank, nodes, &mut f)
            } else {
                quasi_monte_carlo(rank, draws, &mut f)
            }
        }
        Integrator::QuasiMonteCarlo { draws } => quasi_monte_carlo(rank, draws, &mut f),
    }
}

fn tensor(
    rank: usize,
    nodes: usize,
    f: &mut impl FnMut(&[f64]) -> f64,
) -> Result<Expectation, QuadratureError> {
    if nodes < 2 {
        return Err(QuadratureError::TooFewNodes);
    }
    let fine = tensor_sum(rank, &GaussHermite::new(nodes), f);
    let coarse = tensor_sum(rank, &GaussHermite::new((nodes / 2).max(1)), f);
    Ok(Expectation { value: fine, error: (fine - coarse).abs() })
}

fn tensor_sum(rank: usize, rule: &GaussHermite, f: &mut impl FnMut(&[f64]) -> f64) -> f64 {
    let n = rule.nodes.len();
    let mut idx = alloc::vec![0usize; rank];
    let mut xi = alloc::vec![0.0; rank];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for (d, &i) in idx.iter().enumerate() {
            xi[d] = rule.nodes[i];
            w *= rule.weights[i];
        }
        total += w * f(&xi);
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == rank {
                return total;
            }
        }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    out
}

fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn quasi_monte_carlo(
    rank: usize,
    draws: usize,
    f: &mut impl FnMut(&[f64]) -> f64,
) -> Result<Expectation, QuadratureError> {
    if 2 * rank > PRIMES.len() {
        return Err(QuadratureError::RankTooLarge { rank, max: PRIMES.len() / 2 });
    }
    if draws < 2 * QMC_SHIFTS {
        return Err(QuadratureError::TooFewDraws { min: 2 * QMC_SHIFTS });
    }
    let per_shift = draws / QMC_SHIFTS;
    let mut xi = alloc::vec![0.0; rank];
    let mut u = alloc::vec![0.0; 2 * rank];
    let mut shift = alloc::vec![0.0; 2 * rank];
    let mut means = [0.0; QMC_SHIFTS];
    let mut state = 0x6d61_7864_6973_6321u64;
    for mean in means.iter_mut() {
        for s in shift.iter_mut() {
            *s = unit_from_bits(splitmix64(&mut state));
        }
        let mut acc = 0.0;
        for i in 1..=per_shift as u64 {
            for (d, ud) in u.iter_mut().enumerate() {
                let v = radical_inverse(i, PRIMES[d]) + shift[d];
                *ud = if v >= 1.0 { v - 1.0 } else { v };
            }
            for d in 0..rank {
                let u1 = if u[2 * d] > 0.0 { u[2 * d] } else { f64::MIN_POSITIVE };
                xi[d] = sqrt(-2.0 * ln(u1)) * cos(2.0 * PI * u[2 * d + 1]);
            }
            acc += f(&xi);
        }
        *mean = acc / per_shift as f64;
    }
    let value = means.iter().sum::<f64>() / QMC_SHIFTS as f64;
    let var = means.iter().map(|m| (m - value) * (m - value)).sum::<f64>() / (QMC_SHIFTS - 1) as f64;
    Ok(Expectation { value, error: sqrt(var / QMC_SHIFTS as f64) })
}
