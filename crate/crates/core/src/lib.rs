//! Discrete-event simulation of HF radio data links.
//!
//! The crate models the bearer path of an HF network: a table-driven
//! burst-error generator, modem transmit timing, a simplified STANAG 5066
//! selective-repeat data link, a miniature TCP, and a performance-enhancing
//! proxy that terminates TCP on either side of the radio link.

pub mod calibrate;
pub mod errormodel;
pub mod kernel;
pub mod modem;
pub mod output;
pub mod s5066;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod transport;
