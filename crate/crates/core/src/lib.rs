pub mod graph;
pub mod nscm;
pub mod stats;
pub mod table;
pub mod tensor;
pub mod mpva;
pub mod fairness;
pub mod data_io;
