//! Framed binary wire format for host/guest messages.
//!
//! A frame is a 4-byte big-endian body length followed by the body. The
//! body layout is fixed across all message types:
//!
//! ```text
//! type: u8
//! session_id: u64 big-endian
//! token_len: u32 big-endian, then token bytes (PARTIAL_REQ only, else 0)
//! payload_len: u32 big-endian, then payload bytes
//! ```
//!
//! Token bytes are a kind byte followed by kind-specific content: kind 1
//! is a pseudonym (32 hash bytes follow), kind 2 is the reserved
//! "guest block off" token with no content. Payloads per type: HELLO and
//! HELLO_ACK carry one protocol version byte; PARTIAL_RESP carries
//! little-endian f64 partial distances; ERROR carries a code byte plus
//! UTF-8 detail; PARTIAL_REQ and BYE carry nothing.
//!
//! Decoding is total: any input either parses or returns an error, never
//! panics.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::federation::pseudonym::PseudonymToken;

pub const PROTOCOL_VERSION: u8 = 1;
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

const TYPE_HELLO: u8 = 1;
const TYPE_HELLO_ACK: u8 = 2;
const TYPE_PARTIAL_REQ: u8 = 3;
const TYPE_PARTIAL_RESP: u8 = 4;
const TYPE_ERROR: u8 = 5;
const TYPE_BYE: u8 = 6;

const TOKEN_KIND_PSEUDONYM: u8 = 1;
const TOKEN_KIND_SPECIAL_OFF: u8 = 2;

/// Instance selector carried by PARTIAL_REQ: either a pseudonymized
/// instance id or the reserved marker telling the guest to use its
/// reference values. The two kinds live in separate namespaces by
/// construction, so no pseudonym can collide with the marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    Pseudonym(PseudonymToken),
    SpecialOff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuestErrorCode {
    BadFrame = 1,
    UnknownInstance = 2,
    Protocol = 3,
}

impl GuestErrorCode {
    fn from_u8(b: u8) -> Option<Self> {
        match b {
            1 => Some(GuestErrorCode::BadFrame),
            2 => Some(GuestErrorCode::UnknownInstance),
            3 => Some(GuestErrorCode::Protocol),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            GuestErrorCode::BadFrame => "bad_frame",
            GuestErrorCode::UnknownInstance => "unknown_instance",
            GuestErrorCode::Protocol => "protocol",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Hello {
        version: u8,
    },
    HelloAck {
        version: u8,
    },
    PartialReq {
        token: Token,
    },
    PartialResp {
        partials: Vec<f64>,
    },
    Error {
        code: GuestErrorCode,
        detail: String,
    },
    Bye,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage {
    pub session_id: u64,
    pub body: MessageBody,
}

impl ProtocolMessage {
    pub fn hello(session_id: u64) -> Self {
        ProtocolMessage {
            session_id,
            body: MessageBody::Hello {
                version: PROTOCOL_VERSION,
            },
        }
    }

    pub fn type_byte(&self) -> u8 {
        match &self.body {
            MessageBody::Hello { .. } => TYPE_HELLO,
            MessageBody::HelloAck { .. } => TYPE_HELLO_ACK,
            MessageBody::PartialReq { .. } => TYPE_PARTIAL_REQ,
            MessageBody::PartialResp { .. } => TYPE_PARTIAL_RESP,
            MessageBody::Error { .. } => TYPE_ERROR,
            MessageBody::Bye => TYPE_BYE,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match &self.body {
            MessageBody::Hello { .. } => "HELLO",
            MessageBody::HelloAck { .. } => "HELLO_ACK",
            MessageBody::PartialReq { .. } => "PARTIAL_REQ",
            MessageBody::PartialResp { .. } => "PARTIAL_RESP",
            MessageBody::Error { .. } => "ERROR",
            MessageBody::Bye => "BYE",
        }
    }
}

fn token_bytes(token: &Token) -> Vec<u8> {
    match token {
        Token::Pseudonym(p) => {
            let mut v = Vec::with_capacity(1 + p.len());
            v.push(TOKEN_KIND_PSEUDONYM);
            v.extend_from_slice(p.as_bytes());
            v
        }
        Token::SpecialOff => vec![TOKEN_KIND_SPECIAL_OFF],
    }
}

fn parse_token(bytes: &[u8]) -> Result<Token> {
    match bytes.split_first() {
        Some((&TOKEN_KIND_PSEUDONYM, rest)) => {
            let arr: [u8; 32] = rest
                .try_into()
                .map_err(|_| Error::BadFrame(format!("pseudonym token of {} bytes", rest.len())))?;
            Ok(Token::Pseudonym(PseudonymToken::from_bytes(arr)))
        }
        Some((&TOKEN_KIND_SPECIAL_OFF, [])) => Ok(Token::SpecialOff),
        Some((&TOKEN_KIND_SPECIAL_OFF, _)) => {
            Err(Error::BadFrame("special-off token carries content".into()))
        }
        Some((&kind, _)) => Err(Error::BadFrame(format!("unknown token kind {kind}"))),
        None => Err(Error::BadFrame("empty token".into())),
    }
}

/// Serializes a message to a complete frame, length prefix included.
pub fn encode_frame(msg: &ProtocolMessage) -> Vec<u8> {
    let token = match &msg.body {
        MessageBody::PartialReq { token } => token_bytes(token),
        _ => Vec::new(),
    };
    let payload: Vec<u8> = match &msg.body {
        MessageBody::Hello { version } | MessageBody::HelloAck { version } => vec![*version],
        MessageBody::PartialReq { .. } | MessageBody::Bye => Vec::new(),
        MessageBody::PartialResp { partials } => {
            let mut v = Vec::with_capacity(partials.len() * 8);
            for f in partials {
                v.extend_from_slice(&f.to_le_bytes());
            }
            v
        }
        MessageBody::Error { code, detail } => {
            let mut v = Vec::with_capacity(1 + detail.len());
            v.push(*code as u8);
            v.extend_from_slice(detail.as_bytes());
            v
        }
    };
    let body_len = 1 + 8 + 4 + token.len() + 4 + payload.len();
    let mut frame = Vec::with_capacity(4 + body_len);
    frame.extend_from_slice(&(body_len as u32).to_be_bytes());
    frame.push(msg.type_byte());
    frame.extend_from_slice(&msg.session_id.to_be_bytes());
    frame.extend_from_slice(&(token.len() as u32).to_be_bytes());
    frame.extend_from_slice(&token);
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.extend_from_slice(&payload);
    frame
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::Truncated);
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32_be(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64_be(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_body(body: &[u8]) -> Result<ProtocolMessage> {
    let mut c = Cursor { bytes: body, at: 0 };
    let type_byte = c.u8()?;
    let session_id = c.u64_be()?;
    let token_len = c.u32_be()? as usize;
    if token_len > body.len() {
        return Err(Error::Truncated);
    }
    let token_raw = c.take(token_len)?;
    let payload_len = c.u32_be()? as usize;
    if payload_len > body.len() {
        return Err(Error::Truncated);
    }
    let payload = c.take(payload_len)?;
    if c.at != body.len() {
        return Err(Error::BadFrame(format!(
            "{} trailing bytes after payload",
            body.len() - c.at
        )));
    }

    let expect_no_token = |ctx: &str| -> Result<()> {
        if token_len != 0 {
            return Err(Error::BadFrame(format!("{ctx} must not carry a token")));
        }
        Ok(())
    };

    let body = match type_byte {
        TYPE_HELLO | TYPE_HELLO_ACK => {
            expect_no_token("handshake")?;
            if payload.len() != 1 {
                return Err(Error::BadFrame("handshake payload must be one byte".into()));
            }
            let version = payload[0];
            if type_byte == TYPE_HELLO {
                MessageBody::Hello { version }
            } else {
                MessageBody::HelloAck { version }
            }
        }
        TYPE_PARTIAL_REQ => {
            if !payload.is_empty() {
                return Err(Error::BadFrame("request payload must be empty".into()));
            }
            MessageBody::PartialReq {
                token: parse_token(token_raw)?,
            }
        }
        TYPE_PARTIAL_RESP => {
            expect_no_token("response")?;
            if payload.len() % 8 != 0 {
                return Err(Error::BadFrame(format!(
                    "response payload of {} bytes is not a float array",
                    payload.len()
                )));
            }
            let partials = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            MessageBody::PartialResp { partials }
        }
        TYPE_ERROR => {
            expect_no_token("error")?;
            let (&code_byte, rest) = payload
                .split_first()
                .ok_or_else(|| Error::BadFrame("error payload missing code".into()))?;
            let code = GuestErrorCode::from_u8(code_byte)
                .ok_or_else(|| Error::BadFrame(format!("unknown error code {code_byte}")))?;
            let detail = std::str::from_utf8(rest)
                .map_err(|_| Error::BadFrame("error detail is not UTF-8".into()))?
                .to_string();
            MessageBody::Error { code, detail }
        }
        TYPE_BYE => {
            expect_no_token("bye")?;
            if !payload.is_empty() {
                return Err(Error::BadFrame("bye payload must be empty".into()));
            }
            MessageBody::Bye
        }
        other => return Err(Error::UnknownMessageType(other)),
    };
    Ok(ProtocolMessage { session_id, body })
}

/// Parses one complete frame. The input must contain exactly the frame:
/// a short buffer is `Truncated`, extra bytes are a `BadFrame`.
pub fn decode_frame(bytes: &[u8]) -> Result<ProtocolMessage> {
    if bytes.len() < 4 {
        return Err(Error::Truncated);
    }
    let body_len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    if body_len > MAX_FRAME_LEN {
        return Err(Error::FrameTooLarge {
            len: body_len,
            max: MAX_FRAME_LEN,
        });
    }
    let rest = &bytes[4..];
    if rest.len() < body_len {
        return Err(Error::Truncated);
    }
    if rest.len() > body_len {
        return Err(Error::BadFrame(format!(
            "{} bytes beyond frame end",
            rest.len() - body_len
        )));
    }
    decode_body(rest)
}

/// Reads one frame from a stream.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<ProtocolMessage> {
    let mut len_buf = [0u8; 4];
    reader
        .read_exact(&mut len_buf)
        .map_err(|e| Error::Channel(format!("read frame length: {e}")))?;
    let body_len = u32::from_be_bytes(len_buf) as usize;
    if body_len > MAX_FRAME_LEN {
        return Err(Error::FrameTooLarge {
            len: body_len,
            max: MAX_FRAME_LEN,
        });
    }
    let mut body = vec![0u8; body_len];
    reader
        .read_exact(&mut body)
        .map_err(|e| Error::Channel(format!("read frame body: {e}")))?;
    decode_body(&body)
}

/// Writes one frame to a stream.
pub fn write_frame<W: Write>(writer: &mut W, msg: &ProtocolMessage) -> Result<()> {
    let frame = encode_frame(msg);
    writer
        .write_all(&frame)
        .map_err(|e| Error::Channel(format!("write frame: {e}")))?;
    writer
        .flush()
        .map_err(|e| Error::Channel(format!("flush frame: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn sample_messages() -> Vec<ProtocolMessage> {
        vec![
            ProtocolMessage::hello(7),
            ProtocolMessage {
                session_id: 7,
                body: MessageBody::HelloAck { version: 1 },
            },
            ProtocolMessage {
                session_id: 0xdead_beef,
                body: MessageBody::PartialReq {
                    token: Token::SpecialOff,
                },
            },
            ProtocolMessage {
                session_id: 1,
                body: MessageBody::PartialReq {
                    token: Token::Pseudonym(PseudonymToken::from_bytes([0xab; 32])),
                },
            },
            ProtocolMessage {
                session_id: u64::MAX,
                body: MessageBody::PartialResp {
                    partials: vec![0.0, 1.5, -2.25],
                },
            },
            ProtocolMessage {
                session_id: 2,
                body: MessageBody::Error {
                    code: GuestErrorCode::UnknownInstance,
                    detail: "no such instance".into(),
                },
            },
            ProtocolMessage {
                session_id: 3,
                body: MessageBody::Bye,
            },
        ]
    }

    #[test]
    fn round_trip_all_types() {
        for msg in sample_messages() {
            let frame = encode_frame(&msg);
            assert_eq!(decode_frame(&frame).unwrap(), msg);
        }
    }

    #[test]
    fn golden_bytes_partial_resp() {
        let msg = ProtocolMessage {
            session_id: 0x0102_0304_0506_0708,
            body: MessageBody::PartialResp {
                partials: vec![1.0, 0.5, 0.25],
            },
        };
        let mut expect = vec![
            0x00, 0x00, 0x00, 0x29, // body length 41
            0x04, // PARTIAL_RESP
            0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, // session id
            0x00, 0x00, 0x00, 0x00, // token length 0
            0x00, 0x00, 0x00, 0x18, // payload length 24
        ];
        expect.extend_from_slice(&1.0f64.to_le_bytes());
        expect.extend_from_slice(&0.5f64.to_le_bytes());
        expect.extend_from_slice(&0.25f64.to_le_bytes());
        assert_eq!(encode_frame(&msg), expect);
        assert_eq!(decode_frame(&expect).unwrap(), msg);
    }

    #[test]
    fn golden_bytes_special_off_request() {
        let msg = ProtocolMessage {
            session_id: 5,
            body: MessageBody::PartialReq {
                token: Token::SpecialOff,
            },
        };
        let expect = vec![
            0x00, 0x00, 0x00, 0x12, // body length 18
            0x03, // PARTIAL_REQ
            0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x05, // session id
            0x00, 0x00, 0x00, 0x01, // token length 1
            0x02, // special-off token kind
            0x00, 0x00, 0x00, 0x00, // payload length 0
        ];
        assert_eq!(encode_frame(&msg), expect);
        assert_eq!(decode_frame(&expect).unwrap(), msg);
    }

    #[test]
    fn three_float_body_length() {
        let msg = ProtocolMessage {
            session_id: 0,
            body: MessageBody::PartialResp {
                partials: vec![0.0; 3],
            },
        };
        let frame = encode_frame(&msg);
        // 4-byte prefix + 17-byte fixed header + 24 payload bytes.
        assert_eq!(frame.len(), 4 + 17 + 24);
    }

    #[test]
    fn truncation_at_every_length_errors_cleanly() {
        for msg in sample_messages() {
            let frame = encode_frame(&msg);
            for cut in 0..frame.len() {
                assert!(decode_frame(&frame[..cut]).is_err());
            }
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut frame = encode_frame(&ProtocolMessage::hello(1));
        frame.push(0);
        assert!(matches!(decode_frame(&frame), Err(Error::BadFrame(_))));
    }

    #[test]
    fn oversized_length_prefix_is_rejected() {
        let mut frame = vec![0xff, 0xff, 0xff, 0xff];
        frame.extend_from_slice(&[0; 16]);
        assert!(matches!(
            decode_frame(&frame),
            Err(Error::FrameTooLarge { .. })
        ));
    }

    #[test]
    fn unknown_type_byte_is_rejected() {
        let mut frame = encode_frame(&ProtocolMessage::hello(1));
        frame[4] = 99;
        assert!(matches!(
            decode_frame(&frame),
            Err(Error::UnknownMessageType(99))
        ));
    }

    #[test]
    fn token_on_wrong_type_is_rejected() {
        // Splice a token length into a BYE body.
        let msg = ProtocolMessage {
            session_id: 3,
            body: MessageBody::Bye,
        };
        let mut frame = encode_frame(&msg);
        frame[16] = 0x01; // token_len = 1
        frame.insert(17, 0x02);
        let len = (frame.len() - 4) as u32;
        frame[..4].copy_from_slice(&len.to_be_bytes());
        assert!(decode_frame(&frame).is_err());
    }

    #[test]
    fn decode_never_panics_on_random_bytes() {
        let mut rng = SplitMix64::new(0x5eed);
        for _ in 0..20_000 {
            let len = rng.bounded(120) as usize;
            let bytes: Vec<u8> = (0..len).map(|_| rng.bounded(256) as u8).collect();
            let _ = decode_frame(&bytes);
        }
    }

    #[test]
    fn decode_never_panics_on_mutated_valid_frames() {
        let mut rng = SplitMix64::new(0xf00d);
        let frames: Vec<Vec<u8>> = sample_messages().iter().map(encode_frame).collect();
        for _ in 0..20_000 {
            let mut frame = frames[rng.bounded(frames.len() as u64) as usize].clone();
            let flips = 1 + rng.bounded(4);
            for _ in 0..flips {
                let at = rng.bounded(frame.len() as u64) as usize;
                frame[at] ^= 1 << rng.bounded(8);
            }
            let _ = decode_frame(&frame);
        }
    }

    #[test]
    fn stream_read_write_round_trip() {
        let mut buf = Vec::new();
        for msg in sample_messages() {
            write_frame(&mut buf, &msg).unwrap();
        }
        let mut cursor = std::io::Cursor::new(buf);
        for msg in sample_messages() {
            assert_eq!(read_frame(&mut cursor).unwrap(), msg);
        }
    }
}
