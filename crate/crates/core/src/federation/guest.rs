//! Guest-side party state and per-session protocol handling.

use std::collections::HashMap;
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use crate::dataset::{column_medians, Matrix, NumericDataset};
use crate::error::{Error, Result};
use crate::federation::codec::{
    decode_frame, encode_frame, GuestErrorCode, MessageBody, ProtocolMessage, Token, MAX_FRAME_LEN,
    PROTOCOL_VERSION,
};
use crate::federation::pseudonym::{pseudonymize_id, PseudonymToken};
use crate::knn::partial_sq_dist;

/// The guest's share of the world: its training columns, an instance
/// store keyed by pseudonym, and its slice of the reference row. Raw
/// feature values never leave this struct; responses carry only summed
/// squared distances.
pub struct GuestParty {
    train_cols: Matrix,
    instances: HashMap<PseudonymToken, Vec<f64>>,
    reference: Vec<f64>,
}

impl GuestParty {
    /// Builds the guest from its column slice of the dataset. The
    /// reference values are column medians over the training rows, which
    /// matches the centralized reference because medians are computed
    /// per column.
    pub fn new(
        data: &NumericDataset,
        train_indices: &[usize],
        guest_columns: &[usize],
        key: &[u8],
    ) -> Result<GuestParty> {
        if key.is_empty() {
            return Err(Error::EmptyKey);
        }
        for &c in guest_columns {
            if c >= data.n_cols() {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    columns: data.n_cols(),
                });
            }
        }
        let all_rows: Vec<usize> = (0..data.n_rows()).collect();
        let train_cols = data.matrix.restrict(train_indices, guest_columns);
        let store_rows = data.matrix.restrict(&all_rows, guest_columns);
        let mut instances = HashMap::with_capacity(data.n_rows());
        for (i, &id) in data.ids.iter().enumerate() {
            let token = pseudonymize_id(&id.to_string(), key)?;
            instances.insert(token, store_rows.row(i).to_vec());
        }
        let reference = column_medians(&train_cols)?;
        Ok(GuestParty {
            train_cols,
            instances,
            reference,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_cols.rows
    }

    pub fn n_columns(&self) -> usize {
        self.train_cols.cols
    }

    fn partials_for(&self, token: &Token) -> Result<Vec<f64>> {
        let values: &[f64] = match token {
            Token::Pseudonym(p) => self
                .instances
                .get(p)
                .map(Vec::as_slice)
                .ok_or_else(|| Error::InstanceNotFound(p.prefix_hex()))?,
            Token::SpecialOff => &self.reference,
        };
        let cols: Vec<usize> = (0..self.train_cols.cols).collect();
        partial_sq_dist(&cols, values, &self.train_cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SessionState {
    AwaitHello,
    Ready,
    Closed,
}

/// One protocol session: strict request/response, one HELLO handshake,
/// closed by BYE or any protocol violation. Log lines mention message
/// types, session ids, token prefixes, and row counts only.
pub struct GuestSession {
    party: Arc<GuestParty>,
    state: SessionState,
    session_id: u64,
    pub log: Vec<String>,
}

impl GuestSession {
    pub fn new(party: Arc<GuestParty>) -> GuestSession {
        GuestSession {
            party,
            state: SessionState::AwaitHello,
            session_id: 0,
            log: Vec::new(),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.state == SessionState::Closed
    }

    fn error(
        &mut self,
        session_id: u64,
        code: GuestErrorCode,
        detail: String,
        close: bool,
    ) -> ProtocolMessage {
        if close {
            self.state = SessionState::Closed;
        }
        self.log.push(format!(
            "session {session_id:016x} error code={} detail={detail}",
            code.label()
        ));
        ProtocolMessage {
            session_id,
            body: MessageBody::Error { code, detail },
        }
    }

    /// Handles one decoded message; `None` means the session ended
    /// without a response (BYE).
    pub fn handle(&mut self, msg: ProtocolMessage) -> Option<ProtocolMessage> {
        let type_name = msg.type_name();
        match self.state {
            SessionState::AwaitHello => match msg.body {
                MessageBody::Hello { version } if version == PROTOCOL_VERSION => {
                    self.session_id = msg.session_id;
                    self.state = SessionState::Ready;
                    self.log.push(format!(
                        "session {:016x} hello version {version}",
                        msg.session_id
                    ));
                    Some(ProtocolMessage {
                        session_id: msg.session_id,
                        body: MessageBody::HelloAck {
                            version: PROTOCOL_VERSION,
                        },
                    })
                }
                MessageBody::Hello { version } => Some(self.error(
                    msg.session_id,
                    GuestErrorCode::Protocol,
                    format!("unsupported protocol version {version}"),
                    true,
                )),
                _ => Some(self.error(
                    msg.session_id,
                    GuestErrorCode::Protocol,
                    format!("{type_name} before handshake"),
                    true,
                )),
            },
            SessionState::Ready => {
                if msg.session_id != self.session_id {
                    return Some(self.error(
                        msg.session_id,
                        GuestErrorCode::Protocol,
                        "session id does not match this session".into(),
                        true,
                    ));
                }
                match msg.body {
                    MessageBody::PartialReq { token } => match self.party.partials_for(&token) {
                        Ok(partials) => {
                            let token_desc = match &token {
                                Token::Pseudonym(p) => format!("pseudonym:{}", p.prefix_hex()),
                                Token::SpecialOff => "special_off".to_string(),
                            };
                            self.log.push(format!(
                                "session {:016x} partial token={token_desc} rows={}",
                                self.session_id,
                                partials.len()
                            ));
                            Some(ProtocolMessage {
                                session_id: self.session_id,
                                body: MessageBody::PartialResp { partials },
                            })
                        }
                        Err(Error::InstanceNotFound(prefix)) => Some(self.error(
                            self.session_id,
                            GuestErrorCode::UnknownInstance,
                            format!("no instance for token {prefix}"),
                            false,
                        )),
                        Err(e) => Some(self.error(
                            self.session_id,
                            GuestErrorCode::Protocol,
                            e.to_string(),
                            true,
                        )),
                    },
                    MessageBody::Bye => {
                        self.log
                            .push(format!("session {:016x} bye", self.session_id));
                        self.state = SessionState::Closed;
                        None
                    }
                    _ => Some(self.error(
                        self.session_id,
                        GuestErrorCode::Protocol,
                        format!("unexpected {type_name} in established session"),
                        true,
                    )),
                }
            }
            SessionState::Closed => Some(self.error(
                msg.session_id,
                GuestErrorCode::Protocol,
                "session closed".into(),
                true,
            )),
        }
    }

    /// Decodes and handles one raw frame, returning the encoded response.
    pub fn handle_frame(&mut self, frame: &[u8]) -> Option<Vec<u8>> {
        match decode_frame(frame) {
            Ok(msg) => self.handle(msg).map(|r| encode_frame(&r)),
            Err(e) => {
                let resp = self.error(
                    self.session_id,
                    GuestErrorCode::BadFrame,
                    e.to_string(),
                    true,
                );
                Some(encode_frame(&resp))
            }
        }
    }
}

fn read_raw_frame(stream: &mut TcpStream) -> std::io::Result<Option<Vec<u8>>> {
    use std::io::Read;
    let mut len_buf = [0u8; 4];
    if let Err(e) = stream.read_exact(&mut len_buf) {
        return match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Ok(None),
            _ => Err(e),
        };
    }
    let body_len = u32::from_be_bytes(len_buf) as usize;
    if body_len > MAX_FRAME_LEN {
        // Hand only the length prefix to the session, which answers with
        // a bad_frame error; the oversized body is never read.
        return Ok(Some(len_buf.to_vec()));
    }
    let mut frame = vec![0u8; 4 + body_len];
    frame[..4].copy_from_slice(&len_buf);
    stream.read_exact(&mut frame[4..])?;
    Ok(Some(frame))
}

fn serve_connection(
    mut stream: TcpStream,
    party: Arc<GuestParty>,
    on_log: Arc<dyn Fn(&str) + Send + Sync>,
) {
    use std::io::Write;
    let mut session = GuestSession::new(party);
    let mut logged = 0usize;
    loop {
        let frame = match read_raw_frame(&mut stream) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                on_log(&format!("connection read error: {e}"));
                break;
            }
        };
        let response = session.handle_frame(&frame);
        for line in &session.log[logged..] {
            on_log(line);
        }
        logged = session.log.len();
        match response {
            Some(bytes) => {
                if stream
                    .write_all(&bytes)
                    .and_then(|_| stream.flush())
                    .is_err()
                {
                    break;
                }
            }
            None => break,
        }
        if session.is_closed() {
            break;
        }
    }
}

/// Serves sessions forever, one connection per session, a thread per
/// connection. Guest state is read-only, so sessions are independent.
pub fn serve(
    listener: TcpListener,
    party: Arc<GuestParty>,
    on_log: Arc<dyn Fn(&str) + Send + Sync>,
) -> Result<()> {
    for conn in listener.incoming() {
        match conn {
            Ok(stream) => {
                let party = party.clone();
                let on_log = on_log.clone();
                std::thread::spawn(move || serve_connection(stream, party, on_log));
            }
            Err(e) => return Err(Error::Channel(format!("accept: {e}"))),
        }
    }
    Ok(())
}
