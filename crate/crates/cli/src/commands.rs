//! The five subcommands: sample-data, train, explain, batch, guest.
//!
//! Outputs are deterministic: given the same data, config, and seed,
//! every file is byte-identical across runs. Artifacts are staged to a
//! `.tmp` sibling and renamed, so a failing run leaves no partial files.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fedshap_core::dataset::{
    compute_reference, encode_and_normalize, load_census_csv, train_test_split,
};
use fedshap_core::explain::{
    batch_explain, explain_federated, explain_full, mean_abs_deviation, rank_agreement,
    BatchReport, CoalitionCache, ExplainConfig,
};
use fedshap_core::federation::{
    serve, Channel, FederatedSession, GuestParty, HostParty, InProcChannel, TcpChannel,
};
use fedshap_core::report::{write_bar_csv, write_report_csv, write_scatter_csv};
use fedshap_core::rng::SplitMix64;
use fedshap_core::schema::{FeaturePartition, FeatureSchema};
use fedshap_core::synth::{generate_census_csv, SynthConfig};
use fedshap_core::{Error, KnnModel, NumericDataset, ShapleyReport, WeightingMode};
use serde::{Deserialize, Serialize};

use crate::config::{GuestSettings, Mode, Settings, Transport};
use crate::Failure;

/// Split manifest persisted by `train` so explain and batch reuse the
/// exact train/test division.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub k: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub n_rows: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

const MANIFEST_FILE: &str = "split.json";
const SNAPSHOT_FILE: &str = "model.snapshot";

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let tmp = tmp_path(path);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Renders a CSV through `write` into a staging file, then renames it
/// into place.
fn stage_csv(
    path: &Path,
    write: impl FnOnce(&Path) -> fedshap_core::Result<()>,
) -> Result<(), Failure> {
    let tmp = tmp_path(path);
    write(&tmp).map_err(Failure::Pipeline)?;
    std::fs::rename(&tmp, path).map_err(|e| Failure::Pipeline(Error::io(path, e)))?;
    Ok(())
}

fn load_dataset(settings_data: &Path) -> Result<NumericDataset, Failure> {
    let schema = FeatureSchema::census();
    let raw = load_census_csv(settings_data, &schema).map_err(Failure::Pipeline)?;
    encode_and_normalize(&raw).map_err(Failure::Pipeline)
}

pub fn cmd_sample_data(out: &Path, rows: usize, seed: u64) -> Result<(), Failure> {
    let config = SynthConfig {
        rows,
        seed,
        ..SynthConfig::default()
    };
    let csv = generate_census_csv(&config);
    let lines = csv.lines().count() - 1;
    write_atomic(out, csv.as_bytes()).map_err(Failure::Pipeline)?;
    println!(
        "wrote {lines} data rows ({rows} usable after dropping missing markers) to {}",
        out.display()
    );
    Ok(())
}

pub fn cmd_train(settings: &Settings) -> Result<(), Failure> {
    let data = load_dataset(&settings.data)?;
    let (train, test, train_idx, test_idx) =
        train_test_split(&data, settings.train_fraction, settings.seed)
            .map_err(Failure::Pipeline)?;
    let model = KnnModel::fit(&train, settings.k).map_err(Failure::Pipeline)?;
    let accuracy = model.accuracy(&test).map_err(Failure::Pipeline)?;

    std::fs::create_dir_all(&settings.out)
        .map_err(|e| Failure::Pipeline(Error::io(&settings.out, e)))?;
    let manifest = Manifest {
        k: settings.k,
        seed: settings.seed,
        train_fraction: settings.train_fraction,
        n_rows: data.n_rows(),
        train_indices: train_idx,
        test_indices: test_idx,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Failure::Pipeline(Error::Snapshot(format!("manifest: {e}"))))?;
    let snapshot_path = settings.out.join(SNAPSHOT_FILE);
    let snapshot_tmp = tmp_path(&snapshot_path);
    model.save(&snapshot_tmp).map_err(Failure::Pipeline)?;
    std::fs::rename(&snapshot_tmp, &snapshot_path)
        .map_err(|e| Failure::Pipeline(Error::io(&snapshot_path, e)))?;
    write_atomic(&settings.out.join(MANIFEST_FILE), manifest_json.as_bytes())
        .map_err(Failure::Pipeline)?;

    println!(
        "trained k={} on {} rows ({} test rows held out), test accuracy {accuracy:.4}",
        settings.k,
        train.n_rows(),
        test.n_rows()
    );
    println!(
        "wrote {} and {}",
        snapshot_path.display(),
        settings.out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

struct Workspace {
    data: NumericDataset,
    manifest: Manifest,
    model: KnnModel,
    reference: Vec<f64>,
    schema: FeatureSchema,
}

fn load_workspace(settings: &Settings) -> Result<Workspace, Failure> {
    let data = load_dataset(&settings.data)?;
    let manifest_path = settings.out.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Failure::Pipeline(Error::io(&manifest_path, e)))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Failure::Pipeline(Error::Snapshot(format!("manifest: {e}"))))?;
    if manifest.n_rows != data.n_rows() {
        return Err(Failure::Pipeline(Error::Snapshot(format!(
            "manifest covers {} rows but the dataset has {}; retrain first",
            manifest.n_rows,
            data.n_rows()
        ))));
    }
    if manifest.seed != settings.seed || manifest.train_fraction != settings.train_fraction {
        return Err(Failure::Pipeline(Error::Snapshot(format!(
            "manifest was built with seed {} fraction {}, run asks for seed {} fraction {}; \
             retrain or adjust the config",
            manifest.seed, manifest.train_fraction, settings.seed, settings.train_fraction
        ))));
    }
    let model = KnnModel::load(&settings.out.join(SNAPSHOT_FILE)).map_err(Failure::Pipeline)?;
    let train = data.subset(&manifest.train_indices);
    let reference = compute_reference(&train).map_err(Failure::Pipeline)?;
    Ok(Workspace {
        data,
        manifest,
        model,
        reference,
        schema: FeatureSchema::census(),
    })
}

fn federated_setup(
    settings: &Settings,
    ws: &Workspace,
) -> Result<(FeaturePartition, ExplainConfig, HostParty), Failure> {
    let guest_names = settings.guest_names(&ws.schema)?;
    let name_refs: Vec<&str> = guest_names.iter().map(|s| s.as_str()).collect();
    let partition =
        FeaturePartition::from_guest_names(&ws.schema, &name_refs).map_err(Failure::Pipeline)?;
    let config = ExplainConfig::new(
        &ws.schema,
        partition.clone(),
        ws.reference.clone(),
        WeightingMode::Shapley,
    )
    .map_err(Failure::Pipeline)?;
    let host = HostParty::new(
        &ws.data,
        &ws.manifest.train_indices,
        &partition.host_indices,
        ws.manifest.k,
        settings.key.as_bytes(),
    )
    .map_err(Failure::Pipeline)?;
    Ok((partition, config, host))
}

fn inproc_guest(
    settings: &Settings,
    ws: &Workspace,
    partition: &FeaturePartition,
) -> Result<Arc<GuestParty>, Failure> {
    GuestParty::new(
        &ws.data,
        &ws.manifest.train_indices,
        &partition.guest_indices,
        settings.key.as_bytes(),
    )
    .map(Arc::new)
    .map_err(Failure::Pipeline)
}

fn session_id_for(seed: u64, instance_id: u64) -> u64 {
    SplitMix64::new(seed ^ instance_id.rotate_left(17)).next_u64()
}

/// Runs one or more federated explanations over a single session.
fn explain_over<C: Channel>(
    channel: C,
    host: &HostParty,
    config: &ExplainConfig,
    session_id: u64,
    ids: &[u64],
) -> Result<Vec<ShapleyReport>, Failure> {
    let mut session =
        FederatedSession::open(channel, session_id, host.n_train()).map_err(Failure::Pipeline)?;
    let mut reports = Vec::with_capacity(ids.len());
    for &id in ids {
        let mut cache = CoalitionCache::new(config.n_players());
        let report = explain_federated(host, &mut session, id, config, &mut cache)
            .map_err(Failure::Pipeline)?;
        reports.push(report);
    }
    session.close().map_err(Failure::Pipeline)?;
    Ok(reports)
}

fn run_federated(
    settings: &Settings,
    ws: &Workspace,
    ids: &[u64],
) -> Result<Vec<ShapleyReport>, Failure> {
    let (partition, config, host) = federated_setup(settings, ws)?;
    let session_id = session_id_for(settings.seed, ids.first().copied().unwrap_or(0));
    match &settings.transport {
        Transport::Inproc => {
            let guest = inproc_guest(settings, ws, &partition)?;
            explain_over(InProcChannel::new(guest), &host, &config, session_id, ids)
        }
        Transport::Tcp(addr) => {
            let channel = TcpChannel::connect(addr).map_err(Failure::Pipeline)?;
            explain_over(channel, &host, &config, session_id, ids)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum InstanceSelector {
    Id(u64),
    TestRow(usize),
}

impl InstanceSelector {
    pub fn parse(s: &str) -> Result<InstanceSelector, Failure> {
        let parse_num = |v: &str, what: &str| {
            v.parse::<u64>()
                .map_err(|_| Failure::Usage(format!("bad {what} in --instance {s:?}")))
        };
        if let Some(v) = s.strip_prefix("row:") {
            return Ok(InstanceSelector::TestRow(
                parse_num(v, "row index")? as usize
            ));
        }
        if let Some(v) = s.strip_prefix("id:") {
            return Ok(InstanceSelector::Id(parse_num(v, "instance id")?));
        }
        Ok(InstanceSelector::Id(parse_num(s, "instance id")?))
    }

    /// Resolves to (raw id, row position in the dataset).
    fn resolve(self, ws: &Workspace) -> Result<(u64, usize), Failure> {
        match self {
            InstanceSelector::Id(id) => {
                let row =
                    ws.data.ids.iter().position(|&d| d == id).ok_or_else(|| {
                        Failure::Pipeline(Error::InstanceNotFound(id.to_string()))
                    })?;
                Ok((id, row))
            }
            InstanceSelector::TestRow(r) => {
                let row = *ws.manifest.test_indices.get(r).ok_or_else(|| {
                    Failure::Pipeline(Error::InstanceNotFound(format!(
                        "row:{r} (test split has {} rows)",
                        ws.manifest.test_indices.len()
                    )))
                })?;
                Ok((ws.data.ids[row], row))
            }
        }
    }
}

fn write_single_bar_csv(path: &Path, report: &ShapleyReport) -> fedshap_core::Result<()> {
    let mut order: Vec<usize> = (0..report.player_names.len()).collect();
    order.sort_by(|&a, &b| {
        report.attributions[b]
            .abs()
            .partial_cmp(&report.attributions[a].abs())
            .unwrap()
            .then_with(|| report.player_names[a].cmp(&report.player_names[b]))
    });
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["player", "attribution"])?;
    for i in order {
        w.write_record([
            report.player_names[i].as_str(),
            &report.attributions[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn cmd_explain(settings: &Settings, selector: InstanceSelector) -> Result<(), Failure> {
    let ws = load_workspace(settings)?;
    let (id, row) = selector.resolve(&ws)?;
    let x = ws.data.matrix.row(row);

    let report = match settings.mode {
        Mode::Full => explain_full(
            &ws.model,
            x,
            &ws.reference,
            &ws.schema,
            WeightingMode::Shapley,
        )
        .map_err(Failure::Pipeline)?,
        _ => run_federated(settings, &ws, &[id])?.remove(0),
    };

    std::fs::create_dir_all(&settings.out)
        .map_err(|e| Failure::Pipeline(Error::io(&settings.out, e)))?;
    let stem = format!("report_{}_{id}", settings.mode.label());
    let report_path = settings.out.join(format!("{stem}.csv"));
    let bar_path = settings.out.join(format!("{stem}_bar.csv"));
    stage_csv(&report_path, |p| write_report_csv(p, &report))?;
    stage_csv(&bar_path, |p| write_single_bar_csv(p, &report))?;

    println!(
        "instance {id} mode={}: base {} full {}",
        settings.mode.label(),
        report.base_value,
        report.full_value
    );
    for (name, phi) in report.player_names.iter().zip(&report.attributions) {
        println!("  {name}: {phi}");
    }
    println!("wrote {} and {}", report_path.display(), bar_path.display());
    Ok(())
}

/// Explains the command's deterministic sample in the given mode.
fn batch_reports(settings: &Settings, ws: &Workspace, mode: Mode) -> Result<BatchReport, Failure> {
    let test = ws.data.subset(&ws.manifest.test_indices);
    match mode {
        Mode::Full => batch_explain(&test, settings.sample, settings.seed, |row| {
            explain_full(
                &ws.model,
                test.matrix.row(row),
                &ws.reference,
                &ws.schema,
                WeightingMode::Shapley,
            )
        })
        .map_err(Failure::Pipeline),
        _ => {
            let sub = Settings {
                mode,
                ..settings.clone()
            };
            let (partition, config, host) = federated_setup(&sub, ws)?;
            let session_id = session_id_for(settings.seed, 0xBA7C);
            match &sub.transport {
                Transport::Inproc => {
                    let guest = inproc_guest(&sub, ws, &partition)?;
                    let channel = InProcChannel::new(guest);
                    batch_federated(&sub, ws, &test, channel, &host, &config, session_id)
                }
                Transport::Tcp(addr) => {
                    let channel = TcpChannel::connect(addr).map_err(Failure::Pipeline)?;
                    batch_federated(&sub, ws, &test, channel, &host, &config, session_id)
                }
            }
        }
    }
}

fn batch_federated<C: Channel>(
    settings: &Settings,
    _ws: &Workspace,
    test: &NumericDataset,
    channel: C,
    host: &HostParty,
    config: &ExplainConfig,
    session_id: u64,
) -> Result<BatchReport, Failure> {
    let mut session =
        FederatedSession::open(channel, session_id, host.n_train()).map_err(Failure::Pipeline)?;
    let result = batch_explain(test, settings.sample, settings.seed, |row| {
        let id = test.ids[row];
        let mut cache = CoalitionCache::new(config.n_players());
        explain_federated(host, &mut session, id, config, &mut cache)
    })
    .map_err(Failure::Pipeline);
    session.close().map_err(Failure::Pipeline)?;
    result
}

pub fn cmd_batch(settings: &Settings) -> Result<(), Failure> {
    let ws = load_workspace(settings)?;
    let batch = batch_reports(settings, &ws, settings.mode)?;

    std::fs::create_dir_all(&settings.out)
        .map_err(|e| Failure::Pipeline(Error::io(&settings.out, e)))?;
    let scatter_path = settings
        .out
        .join(format!("scatter_{}.csv", settings.mode.label()));
    let bar_path = settings
        .out
        .join(format!("bar_{}.csv", settings.mode.label()));
    stage_csv(&scatter_path, |p| write_scatter_csv(p, &batch))?;
    stage_csv(&bar_path, |p| write_bar_csv(p, &batch))?;
    println!(
        "batch mode={} sample={} seed={}: wrote {} and {}",
        settings.mode.label(),
        batch.reports.len(),
        settings.seed,
        scatter_path.display(),
        bar_path.display()
    );

    // Rank agreement between the full game and the three-guest federated
    // game on their shared (host) players, over the same sample.
    if matches!(settings.mode, Mode::Full | Mode::Federated3) {
        let other_mode = match settings.mode {
            Mode::Full => Mode::Federated3,
            _ => Mode::Full,
        };
        let other = batch_reports(settings, &ws, other_mode)?;
        let (full, fed) = match settings.mode {
            Mode::Full => (&batch, &other),
            _ => (&other, &batch),
        };
        let guest3: Vec<&str> = FeatureSchema::GUEST3.to_vec();
        let partition =
            FeaturePartition::from_guest_names(&ws.schema, &guest3).map_err(Failure::Pipeline)?;
        let host_names: Vec<String> = partition
            .host_indices
            .iter()
            .map(|&i| ws.schema.features[i].name.clone())
            .collect();
        let mut rho_sum = 0.0;
        let mut mad_sum = 0.0;
        for (a, b) in full.reports.iter().zip(&fed.reports) {
            rho_sum += rank_agreement(a, b, &host_names).map_err(Failure::Pipeline)?;
            mad_sum += mean_abs_deviation(a, b, &host_names).map_err(Failure::Pipeline)?;
        }
        let n = full.reports.len() as f64;
        println!(
            "rank agreement full vs federated3 (host features, {} instances): \
             mean spearman rho {:.4}, mean abs deviation {:.5}",
            full.reports.len(),
            rho_sum / n,
            mad_sum / n
        );
    }
    Ok(())
}

pub fn cmd_guest(config_path: &Path) -> Result<(), Failure> {
    let settings = GuestSettings::resolve(config_path)?;
    let data = load_dataset(&settings.data)?;
    let schema = FeatureSchema::census();
    let name_refs: Vec<&str> = settings.guest_features.iter().map(|s| s.as_str()).collect();
    let partition =
        FeaturePartition::from_guest_names(&schema, &name_refs).map_err(Failure::Pipeline)?;
    let (train_idx, _) =
        fedshap_core::dataset::split_indices(data.n_rows(), settings.train_fraction, settings.seed)
            .map_err(Failure::Pipeline)?;
    let party = GuestParty::new(
        &data,
        &train_idx,
        &partition.guest_indices,
        settings.key.as_bytes(),
    )
    .map_err(Failure::Pipeline)?;

    let listener = TcpListener::bind(&settings.bind)
        .map_err(|e| Failure::Pipeline(Error::Channel(format!("bind {}: {e}", settings.bind))))?;
    let addr = listener
        .local_addr()
        .map_err(|e| Failure::Pipeline(Error::Channel(format!("local addr: {e}"))))?;
    println!(
        "guest listening on {addr} serving {} training rows x {} columns",
        party.n_train(),
        party.n_columns()
    );
    serve(
        listener,
        Arc::new(party),
        Arc::new(|line: &str| println!("{line}")),
    )
    .map_err(Failure::Pipeline)
}
