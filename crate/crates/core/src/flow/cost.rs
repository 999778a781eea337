use crate::model::{log_factorial, NoiseModel};

/// The concave `-ln z!` part of an interior node edge, or its replacement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConcavePart {
    None,
    /// The true `g(z) = -ln z!`. Not discrete convex.
    Exact,
    /// The affine upper bound `-ln(n!) + alpha (z - n)` touching `g` at `n`.
    Tangent { n_lin: u64, alpha: f64 },
}

/// Cost function of one flow edge over nonnegative integers.
///
/// Every variant exposes the value `c(z)` and the increment `c(z + 1) - c(z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostHandle {
    Zero,
    /// `slope * z`.
    Linear { slope: f64 },
    /// `ln z! - z ln(phi)`.
    Transition { log_phi: f64 },
    /// Observation term plus an optional concave part.
    Node {
        noise: NoiseModel,
        y: f64,
        concave: ConcavePart,
    },
}

impl CostHandle {
    pub fn eval(&self, z: u64) -> f64 {
        match *self {
            CostHandle::Zero => 0.0,
            CostHandle::Linear { slope } => slope * z as f64,
            CostHandle::Transition { log_phi } => log_factorial(z) - z as f64 * log_phi,
            CostHandle::Node { noise, y, concave } => {
                let h = noise.nll(y, z);
                if h == f64::INFINITY {
                    return h;
                }
                h + match concave {
                    ConcavePart::None => 0.0,
                    ConcavePart::Exact => -log_factorial(z),
                    ConcavePart::Tangent { n_lin, alpha } => {
                        -log_factorial(n_lin) + alpha * (z as f64 - n_lin as f64)
                    }
                }
            }
        }
    }

    /// `c(z + 1) - c(z)`; `+inf` past the finite domain, `-inf` before it.
    #[inline]
    pub fn increment(&self, z: u64) -> f64 {
        match *self {
            CostHandle::Zero => 0.0,
            CostHandle::Linear { slope } => slope,
            CostHandle::Transition { log_phi } => ((z + 1) as f64).ln() - log_phi,
            CostHandle::Node { noise, y, concave } => {
                noise.nll_increment(y, z)
                    + match concave {
                        ConcavePart::None => 0.0,
                        ConcavePart::Exact => -((z + 1) as f64).ln(),
                        ConcavePart::Tangent { alpha, .. } => alpha,
                    }
            }
        }
    }

    /// Smallest `z` with finite cost.
    pub fn domain_start(&self) -> u64 {
        match self {
            CostHandle::Node { noise, y, .. } => noise.domain_start(*y),
            _ => 0,
        }
    }

    /// Whether the variant is discrete convex by construction.
    pub fn is_discrete_convex(&self) -> bool {
        !matches!(
            self,
            CostHandle::Node {
                concave: ConcavePart::Exact,
                ..
            }
        )
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, CostHandle::Zero | CostHandle::Linear { .. })
    }
}
