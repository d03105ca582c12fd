//! Linear forward operators and their adjoints.

pub mod fft;
pub mod gradient;
pub mod mask;
pub mod norm;
pub mod psf;

pub use fft::{dft2, idft2, Fft2};
pub use gradient::{div2, grad2, laplacian_eigenvalues};
pub use mask::{fourier_subsample, FourierSampling, SamplingMask};
pub use norm::{operator_norm, GradientMap, LinearMap, ScaledIdentity};
pub use psf::{convolve, Convolution, PointSpreadFunction};
