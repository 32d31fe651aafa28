//! 1-Lipschitz encoder built from Cayley-orthogonal layers and GroupSort,
//! plus the unconstrained linear classifier on top of it.

pub mod checkpoint;
mod layers;
mod model;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layers::{cayley, groupsort, groupsort_rows, DenseLayer, EncoderLayer, InputMap, OrthLinear, SkewParam};
pub use model::{model_lipschitz_bound, Bound, Compiled, LayerKind, Model, ModelSpec};
