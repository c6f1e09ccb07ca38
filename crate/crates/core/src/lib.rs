//! Adaptive-basis spectral neural operators.
//!
//! The crate is layered bottom-up:
//!
//! * [`tensor`], [`fft`] and [`autograd`]: dense real/complex tensors, a
//!   unitary radix-2 FFT and a define-by-run reverse-mode tape.
//! * [`frame`]: the learnable density `p(x, m)`, the adaptive frame
//!   `√p(x, m)·e^{ik·x}` and its analysis/synthesis transforms.
//! * [`operator`]: diagonal and cross adaptive spectral layers, whole
//!   networks, the Fourier layer baseline, dense-kernel materialisation and
//!   FLOP accounting.
//! * [`checkpoint`]: the binary model container.

pub mod autograd;
pub mod checkpoint;
pub mod error;
pub mod fft;
pub mod frame;
pub mod operator;
pub mod params;
pub mod rng;
pub mod tensor;

pub use autograd::{Activation, Gradients, Tape, Var};
pub use error::{Error, Result};
pub use tensor::{Dtype, Grid, Tensor};
