//! The networked regression problem: graph, local quadratic losses,
//! separable regularizer, selectors, gradients and objective.

mod container;
mod graph;
mod instance;
mod regularizer;

pub use container::{generator_csv, load_instance, save_instance, ContainerKind, Header, MAGIC, VERSION};
pub(crate) use container::{read_f64s, read_u32, read_u8, write_f64s, write_u32};
pub use graph::{generate_regular_graph, Graph, MAX_PAIRING_RETRIES};
pub use instance::{generate_instance, InstanceSpec, ProblemInstance, SmoothnessReport};
pub use regularizer::{soft_threshold, Regularizer};
