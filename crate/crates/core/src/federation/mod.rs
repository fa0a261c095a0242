//! Two-party protocol: wire codec, pseudonymous instance tokens, host
//! and guest state machines, and the transports binding them together.

pub mod channel;
pub mod codec;
pub mod guest;
pub mod host;
pub mod pseudonym;

pub use channel::{Channel, FrameTap, InProcChannel, TcpChannel};
pub use codec::{
    decode_frame, encode_frame, read_frame, write_frame, GuestErrorCode, MessageBody,
    ProtocolMessage, Token, MAX_FRAME_LEN, PROTOCOL_VERSION,
};
pub use guest::{serve, GuestParty, GuestSession};
pub use host::{federated_predict, FederatedSession, HostParty};
pub use pseudonym::{pseudonymize_id, PseudonymToken, TOKEN_LEN};
