mod external;
mod oracle;
mod toy;

pub use external::{serve, ExternalBackend, ExternalSpec, Request, Response, PROTOCOL_VERSION};
pub use oracle::{AntiOracleBackend, ConstantBackend, OracleBackend, ScriptedBackend};
pub use toy::{input_features, ToyConfig, ToySeq2Seq};
