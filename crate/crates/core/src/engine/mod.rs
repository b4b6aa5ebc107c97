mod queue;
mod rng;
mod sim;

pub use queue::{EventQueue, SimEvent};
pub use rng::RngStream;
pub use sim::{run, GuestLoad, GuestTraffic, NetworkConfig, Scenario};
