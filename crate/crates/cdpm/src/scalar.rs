use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

/// Element type of network tensors. The pipeline runs in `f32` (matching the
/// checkpoint storage format); `f64` instantiations exist for high-precision
/// verification such as finite-difference gradient checks.
pub trait Scalar:
    num_traits::Float + num_traits::NumAssign + Copy + Send + Sync + std::fmt::Debug + 'static
{
    /// Precision tag recorded on parameter collections ("f32" or "f64").
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Uniform draw on [-bound, bound], used by parameter initialization.
    fn uniform_sym<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> Self;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn uniform_sym<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> Self {
        let b = bound as f32;
        Uniform::new_inclusive(-b, b)
            .expect("valid uniform bounds")
            .sample(rng)
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline]
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn uniform_sym<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> Self {
        Uniform::new_inclusive(-bound, bound)
            .expect("valid uniform bounds")
            .sample(rng)
    }
}
