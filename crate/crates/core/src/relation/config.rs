use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ReduceKind;

/// Which geometric terms go into `α`. Column order is fixed:
/// `[ℓ2, ℓ1, p_i, p_ij, p_i − p_ij]`, restricted to the enabled flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometricRelationSpec {
    pub use_l2: bool,
    pub use_l1: bool,
    pub use_diff: bool,
    pub use_abs: bool,
}

impl Default for GeometricRelationSpec {
    fn default() -> Self {
        Self::all()
    }
}

impl GeometricRelationSpec {
    pub const fn all() -> Self {
        GeometricRelationSpec { use_l2: true, use_l1: true, use_diff: true, use_abs: true }
    }

    pub const fn l2_only() -> Self {
        GeometricRelationSpec { use_l2: true, use_l1: false, use_diff: false, use_abs: false }
    }

    /// Distances and relative offset, no absolute positions.
    pub const fn relative() -> Self {
        GeometricRelationSpec { use_l2: true, use_l1: true, use_diff: true, use_abs: false }
    }

    pub fn dim(&self) -> usize {
        self.use_l2 as usize + self.use_l1 as usize + 3 * self.use_diff as usize + 6 * self.use_abs as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::config("geometric relation needs at least one component"));
        }
        Ok(())
    }
}

/// How `θ` combines `η(f_i)` and `μ(f_ij)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticCombinator {
    Summation,
    Subtraction,
    Concatenation,
    Hadamard,
    None,
}

impl SemanticCombinator {
    pub fn short_name(self) -> &'static str {
        match self {
            SemanticCombinator::Summation => "sum",
            SemanticCombinator::Subtraction => "sub",
            SemanticCombinator::Concatenation => "cat",
            SemanticCombinator::Hadamard => "had",
            SemanticCombinator::None => "none",
        }
    }
}

/// Hyperparameters of one aggregator block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraConfig {
    pub c_in: usize,
    pub c_out: usize,
    /// Nominal group size, used by the analytic counters. Forward passes take
    /// the group size from the tensors they are given.
    pub group_size: usize,
    /// Number of attention maps.
    pub k: usize,
    pub r1: usize,
    pub r2: usize,
    pub geo: GeometricRelationSpec,
    pub sem: SemanticCombinator,
    pub agg: ReduceKind,
    /// Hidden width of `M`; `None` means twice its input width.
    pub m_hidden: Option<usize>,
    /// Softmax-normalize each attention map over the group.
    pub normalize: bool,
    /// Replace `M(R)` with ones. The block then reduces to `L(A(γ(f_ij)))`
    /// and carries no relation parameters.
    pub uniform_attention: bool,
}

impl GraConfig {
    pub fn new(c_in: usize, c_out: usize, group_size: usize) -> Self {
        GraConfig {
            c_in,
            c_out,
            group_size,
            k: 4,
            r1: 16,
            r2: 4,
            geo: GeometricRelationSpec::all(),
            sem: SemanticCombinator::Summation,
            agg: ReduceKind::Max,
            m_hidden: None,
            normalize: false,
            uniform_attention: false,
        }
    }

    /// `C′`, width of `η`, `μ` and `ω`.
    pub fn c_rel(&self) -> usize {
        self.c_in / self.r1.max(1)
    }

    /// `C″`, width of `γ` and of the attended values.
    pub fn c_val(&self) -> usize {
        self.c_in / self.r2.max(1)
    }

    pub fn theta_width(&self) -> usize {
        match self.sem {
            SemanticCombinator::None => 0,
            SemanticCombinator::Concatenation => 2 * self.c_rel(),
            _ => self.c_rel(),
        }
    }

    pub fn omega_width(&self) -> usize {
        self.c_rel()
    }

    /// Input width of `M`.
    pub fn m_in(&self) -> usize {
        self.omega_width() + self.theta_width()
    }

    pub fn m_hidden(&self) -> usize {
        self.m_hidden.unwrap_or(2 * self.m_in())
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 {
            return Err(Error::config("GRA channels must be positive"));
        }
        if self.r1 == 0 || self.r2 == 0 || self.k == 0 {
            return Err(Error::config("r1, r2 and K must be positive"));
        }
        if self.c_in % self.r1 != 0 {
            return Err(Error::config(format!("C={} not divisible by r1={}", self.c_in, self.r1)));
        }
        if self.c_in % self.r2 != 0 {
            return Err(Error::config(format!("C={} not divisible by r2={}", self.c_in, self.r2)));
        }
        if self.c_val() % self.k != 0 {
            return Err(Error::config(format!("K={} does not divide C''={}", self.k, self.c_val())));
        }
        if !self.uniform_attention {
            self.geo.validate()?;
            if self.m_hidden() == 0 {
                return Err(Error::config("M hidden width must be positive"));
            }
        }
        Ok(())
    }
}
