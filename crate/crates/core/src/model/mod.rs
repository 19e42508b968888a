//! Second-order vibrational model, internal damping, modal transformation and
//! the structured first-order operator family `A(g)`.

mod io;
mod modal;
mod operator;
mod system;

pub use io::{read_system, system_from_json, system_to_json, write_system};
pub use modal::{assemble_operator, modal_transform, ModalRealization};
pub use operator::{ModeBlocks, StructuredStateOperator, DENSE_CAP};
pub use system::{build_internal_damping, expand_gains, DampingParameter, SecondOrderSystem};
