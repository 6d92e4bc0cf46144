//! Recording service for pusher-slider demonstrations.

pub mod scripted;
pub mod server;
pub mod session;
