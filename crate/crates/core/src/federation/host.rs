//! Host-side party state and the federated prediction path.

use std::collections::HashMap;

use crate::dataset::{column_medians, Matrix, NumericDataset};
use crate::error::{Error, Result};
use crate::federation::channel::Channel;
use crate::federation::codec::{MessageBody, ProtocolMessage, Token, PROTOCOL_VERSION};
use crate::federation::pseudonym::pseudonymize_id;
use crate::knn::{partial_sq_dist, vote_from_distances};

/// The host's share of the world: its training columns, all training
/// labels, k, an id-indexed store of host-column instance values, its
/// slice of the reference row, and the pseudonym key shared with the
/// guest at setup. Guest columns never appear here.
pub struct HostParty {
    train_cols: Matrix,
    labels: Vec<u8>,
    pub k: usize,
    instances: HashMap<u64, Vec<f64>>,
    reference: Vec<f64>,
    key: Vec<u8>,
}

impl HostParty {
    pub fn new(
        data: &NumericDataset,
        train_indices: &[usize],
        host_columns: &[usize],
        k: usize,
        key: &[u8],
    ) -> Result<HostParty> {
        if key.is_empty() {
            return Err(Error::EmptyKey);
        }
        for &c in host_columns {
            if c >= data.n_cols() {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    columns: data.n_cols(),
                });
            }
        }
        let train_cols = data.matrix.restrict(train_indices, host_columns);
        if k == 0 {
            return Err(Error::KZero);
        }
        if k > train_cols.rows {
            return Err(Error::KTooLarge {
                k,
                n: train_cols.rows,
            });
        }
        let labels: Vec<u8> = train_indices.iter().map(|&i| data.labels[i]).collect();
        let all_rows: Vec<usize> = (0..data.n_rows()).collect();
        let store_rows = data.matrix.restrict(&all_rows, host_columns);
        let mut instances = HashMap::with_capacity(data.n_rows());
        for (i, &id) in data.ids.iter().enumerate() {
            instances.insert(id, store_rows.row(i).to_vec());
        }
        let reference = column_medians(&train_cols)?;
        Ok(HostParty {
            train_cols,
            labels,
            k,
            instances,
            reference,
            key: key.to_vec(),
        })
    }

    /// Host-column values of a stored instance.
    pub fn host_values(&self, id: u64) -> Result<&[f64]> {
        self.instances
            .get(&id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InstanceNotFound(id.to_string()))
    }

    pub fn n_train(&self) -> usize {
        self.train_cols.rows
    }

    pub fn n_columns(&self) -> usize {
        self.train_cols.cols
    }

    /// Host-side reference values, one per host column.
    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    /// Wire token naming an instance without revealing its id.
    pub fn token_for(&self, raw_id: &str) -> Result<Token> {
        Ok(Token::Pseudonym(pseudonymize_id(raw_id, &self.key)?))
    }

    fn host_partials(&self, x_host: &[f64]) -> Result<Vec<f64>> {
        let cols: Vec<usize> = (0..self.train_cols.cols).collect();
        partial_sq_dist(&cols, x_host, &self.train_cols)
    }
}

/// Host end of one protocol session. Construction performs the
/// handshake; requests are strictly sequential.
pub struct FederatedSession<C: Channel> {
    channel: C,
    session_id: u64,
    n_train: usize,
}

impl<C: Channel> FederatedSession<C> {
    pub fn open(mut channel: C, session_id: u64, n_train: usize) -> Result<Self> {
        channel.send(&ProtocolMessage::hello(session_id))?;
        let reply = channel.recv()?;
        match reply.body {
            MessageBody::HelloAck { version } if version == PROTOCOL_VERSION => {
                if reply.session_id != session_id {
                    return Err(Error::Protocol(format!(
                        "handshake answered for session {:016x}, expected {:016x}",
                        reply.session_id, session_id
                    )));
                }
                Ok(FederatedSession {
                    channel,
                    session_id,
                    n_train,
                })
            }
            MessageBody::HelloAck { version } => Err(Error::VersionMismatch(version)),
            MessageBody::Error { code, detail } => Err(Error::Guest {
                code: code.label().into(),
                detail,
            }),
            _ => Err(Error::Protocol(format!(
                "expected HELLO_ACK, got {}",
                reply.type_name()
            ))),
        }
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    /// Requests the guest's partial squared distances for one token.
    pub fn request_partials(&mut self, token: Token) -> Result<Vec<f64>> {
        self.channel.send(&ProtocolMessage {
            session_id: self.session_id,
            body: MessageBody::PartialReq { token },
        })?;
        let reply = self.channel.recv()?;
        if reply.session_id != self.session_id {
            return Err(Error::Protocol(format!(
                "response for session {:016x}, expected {:016x}",
                reply.session_id, self.session_id
            )));
        }
        match reply.body {
            MessageBody::PartialResp { partials } => {
                if partials.len() != self.n_train {
                    return Err(Error::Protocol(format!(
                        "expected {} partial distances, got {}",
                        self.n_train,
                        partials.len()
                    )));
                }
                Ok(partials)
            }
            MessageBody::Error { code, detail } => Err(Error::Guest {
                code: code.label().into(),
                detail,
            }),
            _ => Err(Error::Protocol(format!(
                "expected PARTIAL_RESP, got {}",
                reply.type_name()
            ))),
        }
    }

    /// Ends the session and hands the channel back. The goodbye is
    /// one-way; the returned channel lets callers inspect transport
    /// state (such as the in-process guest log) after shutdown.
    pub fn close(mut self) -> Result<C> {
        self.channel.send(&ProtocolMessage {
            session_id: self.session_id,
            body: MessageBody::Bye,
        })?;
        Ok(self.channel)
    }

    /// The wrapped channel, for transports that expose extra state.
    pub fn channel(&self) -> &C {
        &self.channel
    }
}

/// Two-party prediction: the host masks nothing here, it simply combines
/// its own partial distances for `x_host` with the guest's partials for
/// `token`, then votes over the k nearest training rows. The result is
/// numerically identical to the centralized model on the concatenated
/// vector because squared distances add exactly across the column split.
pub fn federated_predict<C: Channel>(
    host: &HostParty,
    session: &mut FederatedSession<C>,
    x_host: &[f64],
    token: Token,
) -> Result<f64> {
    if x_host.len() != host.n_columns() {
        return Err(Error::DimensionMismatch {
            expected: host.n_columns(),
            got: x_host.len(),
        });
    }
    let mut distances = host.host_partials(x_host)?;
    let guest = session.request_partials(token)?;
    if guest.len() != distances.len() {
        return Err(Error::Protocol(format!(
            "guest returned {} partials for {} training rows",
            guest.len(),
            distances.len()
        )));
    }
    for (d, g) in distances.iter_mut().zip(&guest) {
        *d += g;
    }
    vote_from_distances(&distances, &host.labels, host.k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::channel::InProcChannel;
    use crate::federation::guest::GuestParty;
    use crate::knn::KnnModel;
    use crate::rng::SplitMix64;
    use crate::schema::{Feature, FeatureSchema};
    use std::sync::Arc;

    fn random_data(seed: u64, n: usize, p: usize) -> NumericDataset {
        let mut rng = SplitMix64::new(seed);
        let scale = (1u64 << 20) as f64;
        let mut m = Matrix::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                m.set(i, j, (rng.next_f64() * scale).round() / scale);
            }
        }
        let features = (0..p)
            .map(|j| Feature::continuous(&format!("F{j}")))
            .collect();
        NumericDataset {
            schema: FeatureSchema::new(features, "Y", "1").unwrap(),
            labels: (0..n).map(|_| rng.bounded(2) as u8).collect(),
            ids: (0..n as u64).collect(),
            matrix: m,
        }
    }

    #[test]
    fn federated_equals_centralized_on_random_data() {
        let data = random_data(11, 80, 5);
        let train: Vec<usize> = (0..60).collect();
        let host_cols = vec![0, 1, 2];
        let guest_cols = vec![3, 4];
        let key = b"shared";
        let host = HostParty::new(&data, &train, &host_cols, 5, key).unwrap();
        let guest = Arc::new(GuestParty::new(&data, &train, &guest_cols, key).unwrap());
        let model = KnnModel::fit(&data.subset(&train), 5).unwrap();

        let channel = InProcChannel::new(guest);
        let mut session = FederatedSession::open(channel, 77, host.n_train()).unwrap();
        for i in 60..80 {
            let row = data.matrix.row(i);
            let x_host: Vec<f64> = host_cols.iter().map(|&c| row[c]).collect();
            let token = host.token_for(&data.ids[i].to_string()).unwrap();
            let fed = federated_predict(&host, &mut session, &x_host, token).unwrap();
            let central = model.predict_proba(row).unwrap();
            assert_eq!(fed, central, "instance {i}");
        }
        session.close().unwrap();
    }

    #[test]
    fn special_off_matches_masked_centralized() {
        let data = random_data(13, 50, 4);
        let train: Vec<usize> = (0..40).collect();
        let host_cols = vec![0, 1];
        let guest_cols = vec![2, 3];
        let key = b"shared";
        let host = HostParty::new(&data, &train, &host_cols, 3, key).unwrap();
        let guest = Arc::new(GuestParty::new(&data, &train, &guest_cols, key).unwrap());
        let model = KnnModel::fit(&data.subset(&train), 3).unwrap();
        let reference = crate::dataset::compute_reference(&data.subset(&train)).unwrap();

        let mut session =
            FederatedSession::open(InProcChannel::new(guest), 1, host.n_train()).unwrap();
        for i in 40..50 {
            let row = data.matrix.row(i);
            let x_host: Vec<f64> = host_cols.iter().map(|&c| row[c]).collect();
            let fed = federated_predict(&host, &mut session, &x_host, Token::SpecialOff).unwrap();
            let mut masked = row.to_vec();
            for &c in &guest_cols {
                masked[c] = reference[c];
            }
            assert_eq!(fed, model.predict_proba(&masked).unwrap());
        }
    }

    #[test]
    fn guest_error_propagates() {
        let data = random_data(17, 30, 4);
        let train: Vec<usize> = (0..30).collect();
        let host = HostParty::new(&data, &train, &[0, 1], 3, b"host-key").unwrap();
        // Different guest key: host tokens are unknown to the guest.
        let guest = Arc::new(GuestParty::new(&data, &train, &[2, 3], b"other-key").unwrap());
        let mut session =
            FederatedSession::open(InProcChannel::new(guest), 4, host.n_train()).unwrap();
        let token = host.token_for("0").unwrap();
        let err = federated_predict(&host, &mut session, &[0.0, 0.0], token).unwrap_err();
        match err {
            Error::Guest { code, .. } => assert_eq!(code, "unknown_instance"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn host_reference_matches_centralized_columns() {
        let data = random_data(23, 60, 6);
        let train: Vec<usize> = (5..55).collect();
        let host_cols = vec![0, 2, 4];
        let host = HostParty::new(&data, &train, &host_cols, 5, b"key").unwrap();
        let central = crate::dataset::compute_reference(&data.subset(&train)).unwrap();
        for (t, &c) in host_cols.iter().enumerate() {
            assert_eq!(host.reference()[t], central[c]);
        }
    }
}
