pub mod c;
pub mod kl;

pub use c::{emit_c, EmitOptions, OffloadMode};
pub use kl::emit_kl;
