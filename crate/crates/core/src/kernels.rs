//! Kernel families and unnormalised pair weights.
//!
//! Every profile satisfies `K(0) = 1`. The three compactly supported
//! families vanish for `u >= 1`, so pairs at or beyond the bandwidth never
//! enter a sparse structure.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SliError};
use crate::geometry::PointSet;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Triangular,
    Tricube,
    Quadratic,
    Gaussian,
    Exponential,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        KernelFamily::Triangular,
        KernelFamily::Tricube,
        KernelFamily::Quadratic,
        KernelFamily::Gaussian,
        KernelFamily::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Triangular => "triangular",
            KernelFamily::Tricube => "tricube",
            KernelFamily::Quadratic => "quadratic",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Exponential => "exponential",
        }
    }
}

/// A kernel choice. Construct from a family or parse a case-insensitive name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::new(KernelFamily::Quadratic)
    }
}

impl KernelSpec {
    pub const fn new(family: KernelFamily) -> Self {
        KernelSpec { family }
    }

    pub fn compact_support(&self) -> bool {
        matches!(
            self.family,
            KernelFamily::Triangular | KernelFamily::Tricube | KernelFamily::Quadratic
        )
    }

    /// Neighbour order that works well with this family: second neighbours
    /// for compact kernels, nearest neighbours otherwise.
    pub fn default_k(&self) -> usize {
        if self.compact_support() {
            2
        } else {
            1
        }
    }

    /// Kernel profile `K(u)` for a non-negative normalised distance `u`.
    #[inline]
    pub fn profile<T: Scalar>(&self, u: T) -> T {
        let one = T::one();
        match self.family {
            KernelFamily::Triangular => {
                if u < one {
                    one - u
                } else {
                    T::zero()
                }
            }
            KernelFamily::Tricube => {
                if u < one {
                    let t = one - u * u * u;
                    t * t * t
                } else {
                    T::zero()
                }
            }
            KernelFamily::Quadratic => {
                if u < one {
                    one - u * u
                } else {
                    T::zero()
                }
            }
            KernelFamily::Gaussian => (-(u * u)).exp(),
            KernelFamily::Exponential => (-u).exp(),
        }
    }

    /// `K(distance / bandwidth)` without validating the bandwidth. Hot loops
    /// call this after the bandwidths have been checked once.
    #[inline]
    pub fn weight<T: Scalar>(&self, distance: T, bandwidth: T) -> T {
        self.profile(distance / bandwidth)
    }

    /// Largest normalised distance with a non-zero weight, if finite.
    pub fn support_radius<T: Scalar>(&self) -> Option<T> {
        self.compact_support().then(T::one)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family.name())
    }
}

impl FromStr for KernelSpec {
    type Err = SliError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        KernelFamily::ALL
            .iter()
            .find(|f| f.name() == lower)
            .map(|&f| KernelSpec::new(f))
            .ok_or_else(|| {
                SliError::InvalidParameter(format!(
                    "unknown kernel '{s}' (expected triangular|tricube|quadratic|gaussian|exponential)"
                ))
            })
    }
}

/// Evaluates `K(distance / bandwidth)`.
pub fn kernel_eval<T: Scalar>(spec: KernelSpec, distance: T, bandwidth: T) -> Result<T> {
    if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
        return Err(SliError::InvalidParameter(format!(
            "bandwidth must be positive and finite, got {bandwidth}"
        )));
    }
    if distance < T::zero() || distance.is_nan() {
        return Err(SliError::InvalidInput(format!(
            "distance must be non-negative, got {distance}"
        )));
    }
    Ok(spec.weight(distance, bandwidth))
}

/// Unnormalised weight `K_{i,j} = K(|s_i - s_j| / h_i)`.
///
/// The bandwidth belongs to the first index, so `pair_weight(i, j)` and
/// `pair_weight(j, i)` differ whenever `h_i != h_j`.
pub fn pair_weight<T: Scalar>(
    spec: KernelSpec,
    points: &PointSet<T>,
    i: usize,
    j: usize,
    h_i: T,
) -> Result<T> {
    let d = crate::geometry::pairwise_distance(points, i, j)?;
    kernel_eval(spec, d, h_i)
}
