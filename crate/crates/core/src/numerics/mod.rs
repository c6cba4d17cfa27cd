//! Dense tensors, tape-based reverse-mode differentiation, fully connected
//! networks and the Adam optimizer.

mod adam;
mod mlp;
mod tape;
mod tensor;
pub mod text;

pub use adam::AdamState;
pub use mlp::{BoundMlp, Layer, Mlp, DEFAULT_LEAKY_SLOPE};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::Result;

/// Gradient of `mean(head(phi(x)))` with respect to the inputs `x`.
///
/// Parameters are recorded as constants, so nothing but `x` receives a
/// gradient.
pub fn input_gradient(phi: &Mlp, head: &Mlp, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let pb = phi.bind(&mut tape, false);
    let hb = head.bind(&mut tape, false);
    let z = phi.forward(&mut tape, &pb, xv)?;
    let f = head.forward(&mut tape, &hb, z)?;
    let m = tape.mean(f)?;
    Ok(tape.backward(m)?.wrt(xv))
}
