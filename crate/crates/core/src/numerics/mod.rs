//! Dense tensors, the differentiation tape, layers, and gradient checking.

pub mod gradcheck;
pub mod nn;
pub mod tape;
pub mod tensor;

pub use gradcheck::{fd_resolution, grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use nn::{affine, uniform_weight, LstmCell, Linear, Mlp, MultiHeadAttention, ParamId, ParamSet};
pub use tape::{sigmoid_scalar, Tape, Var};
pub use tensor::Tensor;
