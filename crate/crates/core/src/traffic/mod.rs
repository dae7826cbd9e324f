//! Application traffic: CBR real-time UDP and bulk New Reno TCP.

pub mod tcp;
pub mod udp;

pub use tcp::{NewReno, TcpConfig, TcpReceiver};
pub use udp::{Direction, UdpFlowSpec};
