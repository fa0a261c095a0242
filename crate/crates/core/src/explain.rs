//! The two attribution procedures: full feature space (every feature its
//! own player) and federated (host features plus one united guest
//! player), with batch runs and rank-agreement comparison.

use crate::dataset::NumericDataset;
use crate::error::{Error, Result};
use crate::federation::channel::Channel;
use crate::federation::codec::Token;
use crate::federation::host::{federated_predict, FederatedSession, HostParty};
use crate::knn::KnnModel;
use crate::rng::SplitMix64;
use crate::schema::{FeaturePartition, FeatureSchema};
use crate::shapley::{masked_instance, model_value_fn, ShapleyGame, ShapleyReport, WeightingMode};

/// Name of the united guest player in federated reports.
pub const FEDERATED_PLAYER: &str = "federated";

/// Everything the attribution procedures need beyond the model: who owns
/// which column, the weighting rule, the full-width reference row, and
/// the player naming.
#[derive(Debug, Clone)]
pub struct ExplainConfig {
    pub partition: FeaturePartition,
    pub mode: WeightingMode,
    pub reference: Vec<f64>,
    /// Host feature names in partition order, then `FEDERATED_PLAYER`.
    pub player_names: Vec<String>,
}

impl ExplainConfig {
    pub fn new(
        schema: &FeatureSchema,
        partition: FeaturePartition,
        reference: Vec<f64>,
        mode: WeightingMode,
    ) -> Result<Self> {
        partition.validate(schema.n_features())?;
        if reference.len() != schema.n_features() {
            return Err(Error::DimensionMismatch {
                expected: schema.n_features(),
                got: reference.len(),
            });
        }
        let mut player_names: Vec<String> = partition
            .host_indices
            .iter()
            .map(|&i| schema.features[i].name.clone())
            .collect();
        player_names.push(FEDERATED_PLAYER.to_string());
        Ok(ExplainConfig {
            partition,
            mode,
            reference,
            player_names,
        })
    }

    /// Players in the federated game: one per host feature plus one.
    pub fn n_players(&self) -> usize {
        self.partition.n_host() + 1
    }

    /// Column groups for the equivalent centralized grouped game.
    pub fn player_columns(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = self
            .partition
            .host_indices
            .iter()
            .map(|&i| vec![i])
            .collect();
        groups.push(self.partition.guest_indices.clone());
        groups
    }
}

/// Full-feature-space attribution: p players, one per schema feature.
/// Coalition evaluations run in parallel.
pub fn explain_full(
    model: &KnnModel,
    x: &[f64],
    reference: &[f64],
    schema: &FeatureSchema,
    mode: WeightingMode,
) -> Result<ShapleyReport> {
    let columns: Vec<Vec<usize>> = (0..schema.n_features()).map(|j| vec![j]).collect();
    let value_fn = model_value_fn(|v| model.predict_proba(v), x, reference, &columns)?;
    let game = ShapleyGame::with_names(schema.feature_names(), mode)?;
    game.evaluate_par(value_fn)
}

/// Centralized attribution with the guest columns grouped as one player.
/// This is the oracle the federated procedure must match exactly.
pub fn explain_grouped(
    model: &KnnModel,
    x: &[f64],
    config: &ExplainConfig,
) -> Result<ShapleyReport> {
    let columns = config.player_columns();
    let value_fn = model_value_fn(|v| model.predict_proba(v), x, &config.reference, &columns)?;
    let game = ShapleyGame::with_names(config.player_names.clone(), config.mode)?;
    game.evaluate_par(value_fn)
}

/// Value table under construction for one federated explanation, indexed
/// by coalition mask bits. An aborted run keeps what it computed; a
/// retry fills only the holes.
#[derive(Debug, Clone)]
pub struct CoalitionCache {
    values: Vec<Option<f64>>,
}

impl CoalitionCache {
    pub fn new(players: usize) -> CoalitionCache {
        CoalitionCache {
            values: vec![None; 1usize << players],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn filled(&self) -> usize {
        self.values.iter().flatten().count()
    }
}

/// Federated attribution for one stored instance over an open session.
///
/// Enumerates every coalition of {host features} ∪ {united guest
/// feature}. For each coalition the host masks its own columns against
/// the host reference locally; the guest block toggles through the
/// request token: the instance pseudonym when the guest player is in the
/// coalition, the reserved off-token when not. Requests are sequential
/// within the session. A channel failure aborts with the cache intact.
pub fn explain_federated<C: Channel>(
    host: &HostParty,
    session: &mut FederatedSession<C>,
    instance_id: u64,
    config: &ExplainConfig,
    cache: &mut CoalitionCache,
) -> Result<ShapleyReport> {
    let n_host = config.partition.n_host();
    if host.n_columns() != n_host {
        return Err(Error::DimensionMismatch {
            expected: n_host,
            got: host.n_columns(),
        });
    }
    let players = config.n_players();
    if cache.values.len() != 1usize << players {
        return Err(Error::DimensionMismatch {
            expected: 1usize << players,
            got: cache.values.len(),
        });
    }
    let x_host = host.host_values(instance_id)?.to_vec();
    let token_on = host.token_for(&instance_id.to_string())?;
    let fed_bit = 1u32 << n_host;

    for bits in 0..cache.values.len() as u32 {
        if cache.values[bits as usize].is_some() {
            continue;
        }
        let on_columns: Vec<usize> = (0..n_host).filter(|&t| bits >> t & 1 == 1).collect();
        let masked_host = masked_instance(&x_host, host.reference(), &on_columns)?;
        let token = if bits & fed_bit != 0 {
            token_on
        } else {
            Token::SpecialOff
        };
        let value = federated_predict(host, session, &masked_host, token)?;
        cache.values[bits as usize] = Some(value);
    }

    let table: Vec<f64> = cache.values.iter().map(|v| v.unwrap()).collect();
    let game = ShapleyGame::with_names(config.player_names.clone(), config.mode)?;
    game.from_table(&table)
}

/// Reports for a deterministic sample of test rows plus per-player mean
/// attributions.
#[derive(Debug, Clone)]
pub struct BatchReport {
    pub player_names: Vec<String>,
    /// Raw instance id per sampled row, aligned with `reports`.
    pub instance_ids: Vec<u64>,
    pub reports: Vec<ShapleyReport>,
    pub mean_attributions: Vec<f64>,
}

/// Samples `sample_size` distinct test rows from the seed and explains
/// each with the supplied closure (argument: row index within `test`).
pub fn batch_explain<F>(
    test: &NumericDataset,
    sample_size: usize,
    seed: u64,
    mut explain_one: F,
) -> Result<BatchReport>
where
    F: FnMut(usize) -> Result<ShapleyReport>,
{
    if sample_size == 0 {
        return Err(Error::EmptyDataset);
    }
    if sample_size > test.n_rows() {
        return Err(Error::SampleTooLarge {
            requested: sample_size,
            available: test.n_rows(),
        });
    }
    let mut rng = SplitMix64::new(seed);
    let rows = rng.sample_indices(test.n_rows(), sample_size);
    let mut reports = Vec::with_capacity(rows.len());
    let mut instance_ids = Vec::with_capacity(rows.len());
    for &row in &rows {
        instance_ids.push(test.ids[row]);
        reports.push(explain_one(row)?);
    }
    let player_names = reports[0].player_names.clone();
    for r in &reports {
        if r.player_names != player_names {
            return Err(Error::Schema(
                "batch mixes reports with different player sets".into(),
            ));
        }
    }
    let mut mean_attributions = vec![0.0f64; player_names.len()];
    for r in &reports {
        for (m, a) in mean_attributions.iter_mut().zip(&r.attributions) {
            *m += a;
        }
    }
    for m in &mut mean_attributions {
        *m /= reports.len() as f64;
    }
    Ok(BatchReport {
        player_names,
        instance_ids,
        reports,
        mean_attributions,
    })
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap().then(i.cmp(&j)));
    let mut ranks = vec![0.0f64; n];
    let mut s = 0;
    while s < n {
        let mut e = s;
        while e + 1 < n && values[order[e + 1]] == values[order[s]] {
            e += 1;
        }
        let avg = (s + e) as f64 / 2.0 + 1.0;
        for t in s..=e {
            ranks[order[t]] = avg;
        }
        s = e + 1;
    }
    ranks
}

fn named_abs_attributions(report: &ShapleyReport, names: &[String]) -> Result<Vec<f64>> {
    names
        .iter()
        .map(|name| {
            report
                .player_names
                .iter()
                .position(|p| p == name)
                .map(|i| report.attributions[i].abs())
                .ok_or_else(|| Error::PlayerNotFound(name.clone()))
        })
        .collect()
}

/// Spearman rank correlation of |attribution| over the named common
/// players, with tied values assigned average ranks. When either side
/// has no rank variation the result is 1.0 for identical rank vectors
/// and 0.0 otherwise.
pub fn rank_agreement(
    a: &ShapleyReport,
    b: &ShapleyReport,
    common_players: &[String],
) -> Result<f64> {
    if common_players.len() < 3 {
        return Err(Error::TooFewPlayers(common_players.len()));
    }
    let va = named_abs_attributions(a, common_players)?;
    let vb = named_abs_attributions(b, common_players)?;
    let ra = average_ranks(&va);
    let rb = average_ranks(&vb);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    if da == 0.0 || db == 0.0 {
        return Ok(if ra == rb { 1.0 } else { 0.0 });
    }
    Ok(num / (da * db).sqrt())
}

/// Mean absolute difference of attributions over the named players,
/// pairing players by name.
pub fn mean_abs_deviation(
    a: &ShapleyReport,
    b: &ShapleyReport,
    common_players: &[String],
) -> Result<f64> {
    let grab = |r: &ShapleyReport| -> Result<Vec<f64>> {
        common_players
            .iter()
            .map(|name| {
                r.player_names
                    .iter()
                    .position(|p| p == name)
                    .map(|i| r.attributions[i])
                    .ok_or_else(|| Error::PlayerNotFound(name.clone()))
            })
            .collect()
    };
    let va = grab(a)?;
    let vb = grab(b)?;
    let total: f64 = va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / va.len() as f64)
}
