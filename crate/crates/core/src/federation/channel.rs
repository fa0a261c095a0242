//! Message transports: an in-process guest embedding and a TCP binding.
//! Both move the exact same encoded frames, so behavior is transport
//! independent.

use std::collections::VecDeque;
use std::net::TcpStream;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::federation::codec::{
    decode_frame, encode_frame, read_frame, write_frame, ProtocolMessage,
};
use crate::federation::guest::{GuestParty, GuestSession};

/// Reliable ordered message channel from the host's point of view.
pub trait Channel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()>;
    fn recv(&mut self) -> Result<ProtocolMessage>;
}

/// Hook observing every guest-emitted frame, byte for byte.
pub type FrameTap = Box<dyn FnMut(&[u8])>;

/// Hosts a guest session in the same process. Messages still pass
/// through the codec, so framing bugs cannot hide here, and a tap can
/// record exactly what the guest emits.
pub struct InProcChannel {
    session: GuestSession,
    inbox: VecDeque<Vec<u8>>,
    tap: Option<FrameTap>,
}

impl InProcChannel {
    pub fn new(party: Arc<GuestParty>) -> InProcChannel {
        InProcChannel {
            session: GuestSession::new(party),
            inbox: VecDeque::new(),
            tap: None,
        }
    }

    pub fn with_tap(party: Arc<GuestParty>, tap: FrameTap) -> InProcChannel {
        InProcChannel {
            session: GuestSession::new(party),
            inbox: VecDeque::new(),
            tap: Some(tap),
        }
    }

    /// Guest-side log lines accumulated so far.
    pub fn guest_log(&self) -> &[String] {
        &self.session.log
    }
}

impl Channel for InProcChannel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()> {
        let frame = encode_frame(msg);
        if let Some(response) = self.session.handle_frame(&frame) {
            if let Some(tap) = &mut self.tap {
                tap(&response);
            }
            self.inbox.push_back(response);
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage> {
        let bytes = self
            .inbox
            .pop_front()
            .ok_or_else(|| Error::Channel("no pending guest message".into()))?;
        decode_frame(&bytes)
    }
}

/// One TCP connection carrying one session.
pub struct TcpChannel {
    stream: TcpStream,
}

impl TcpChannel {
    pub fn connect(addr: &str) -> Result<TcpChannel> {
        let stream =
            TcpStream::connect(addr).map_err(|e| Error::Channel(format!("connect {addr}: {e}")))?;
        stream
            .set_nodelay(true)
            .map_err(|e| Error::Channel(format!("set_nodelay: {e}")))?;
        Ok(TcpChannel { stream })
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()> {
        write_frame(&mut self.stream, msg)
    }

    fn recv(&mut self) -> Result<ProtocolMessage> {
        read_frame(&mut self.stream)
    }
}
