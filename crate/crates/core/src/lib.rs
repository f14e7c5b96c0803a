pub mod dsp;
pub mod feedback;
pub mod haptics;
pub mod melody;
pub mod scoring;
pub mod stats;
pub mod session;
pub mod service;
