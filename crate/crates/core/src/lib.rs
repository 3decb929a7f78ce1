pub mod access;
pub mod association;
pub mod channel;
pub mod conic;
pub mod error;
pub mod fronthaul;
pub mod harness;
pub mod linkrates;
pub mod precoding;
pub mod scenario;
pub mod scheduler;
pub mod seeds;
