//! Frequency-domain transmission-line network model.

pub mod cable;
pub mod grid;
pub mod load;
pub mod network;
pub mod oracle;
pub mod spectrum;
pub mod topology;

pub use cable::{propagation_params, Abcd, CableSpec, LineModel, LineParams, DEFAULT_COUPLING};
pub use grid::FrequencyGrid;
pub use load::{AdmittanceModel, Load, LoadElement};
pub use network::{
    admittance_from_reflection, branch_abcd, input_admittance, port_reference, port_reflection,
    reflection_coefficient, transfer_function,
};
pub use oracle::{nodal_oracle, nodal_oracle_extrapolated, OracleOutput, TransferRequest};
pub use spectrum::{stream_from_csv, stream_to_csv, Quantity, Source, Spectrum};
pub use topology::{Branch, BranchId, InlineElement, Node, NodeId, Port, RootedTree, Topology};
