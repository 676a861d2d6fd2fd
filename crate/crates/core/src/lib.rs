pub mod error;
pub mod numerics;
pub mod scenario;
pub mod channel;
pub mod pilot;
pub mod dictionary;
pub mod estimator;
pub mod locator;
pub mod beamformer;
pub mod harness;
