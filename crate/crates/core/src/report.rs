//! Plot-ready CSV serialization for reports, batches, and datasets.
//!
//! Column schemas are stable:
//! - single report: `player,attribution,base_value,full_value`
//! - batch scatter: `instance,player,attribution`
//! - batch bar: `player,mean_attribution`
//! - dataset export: feature names in schema order, then the label name
//!
//! Floats are written in shortest round-trip form, so identical inputs
//! produce byte-identical files.

use std::path::Path;

use crate::dataset::NumericDataset;
use crate::error::{Error, Result};
use crate::explain::BatchReport;
use crate::shapley::ShapleyReport;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_report_csv(path: &Path, report: &ShapleyReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["player", "attribution", "base_value", "full_value"])?;
    for (name, phi) in report.player_names.iter().zip(&report.attributions) {
        w.write_record([
            name.as_str(),
            &phi.to_string(),
            &report.base_value.to_string(),
            &report.full_value.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_scatter_csv(path: &Path, batch: &BatchReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["instance", "player", "attribution"])?;
    for (id, report) in batch.instance_ids.iter().zip(&batch.reports) {
        for (name, phi) in report.player_names.iter().zip(&report.attributions) {
            w.write_record([&id.to_string(), name.as_str(), &phi.to_string()])?;
        }
    }
    finish(w, path)
}

pub fn write_bar_csv(path: &Path, batch: &BatchReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["player", "mean_attribution"])?;
    for (name, mean) in batch.player_names.iter().zip(&batch.mean_attributions) {
        w.write_record([name.as_str(), &mean.to_string()])?;
    }
    finish(w, path)
}

/// Columnar export of an encoded dataset for inspection: id, features in
/// schema order, label.
pub fn write_dataset_csv(path: &Path, data: &NumericDataset) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(data.schema.feature_names());
    header.push(data.schema.label_name.clone());
    w.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut record = vec![data.ids[i].to_string()];
        record.extend(data.matrix.row(i).iter().map(|v| v.to_string()));
        record.push(data.labels[i].to_string());
        w.write_record(&record)?;
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Matrix;
    use crate::schema::{Feature, FeatureSchema};

    fn sample_report() -> ShapleyReport {
        ShapleyReport {
            player_names: vec!["Age".into(), "Hours per week".into(), "federated".into()],
            attributions: vec![0.125, -0.25, 0.0625],
            base_value: 0.4,
            full_value: 0.3375,
        }
    }

    #[test]
    fn report_csv_round_trips() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let report = sample_report();
        write_report_csv(f.path(), &report).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("player,attribution,base_value,full_value")
        );
        assert_eq!(lines.next(), Some("Age,0.125,0.4,0.3375"));
        assert_eq!(lines.next(), Some("Hours per week,-0.25,0.4,0.3375"));
        assert_eq!(lines.next(), Some("federated,0.0625,0.4,0.3375"));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn batch_csvs_cover_all_instances() {
        let report = sample_report();
        let batch = BatchReport {
            player_names: report.player_names.clone(),
            instance_ids: vec![10, 20],
            reports: vec![report.clone(), report.clone()],
            mean_attributions: vec![0.125, -0.25, 0.0625],
        };
        let scatter = tempfile::NamedTempFile::new().unwrap();
        write_scatter_csv(scatter.path(), &batch).unwrap();
        let text = std::fs::read_to_string(scatter.path()).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3);
        assert!(text.lines().any(|l| l == "20,Hours per week,-0.25"));

        let bar = tempfile::NamedTempFile::new().unwrap();
        write_bar_csv(bar.path(), &batch).unwrap();
        let text = std::fs::read_to_string(bar.path()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().any(|l| l == "player,mean_attribution"));
    }

    #[test]
    fn dataset_export_matches_shape() {
        let schema = FeatureSchema::new(
            vec![Feature::continuous("A"), Feature::continuous("B")],
            "Y",
            "1",
        )
        .unwrap();
        let data = NumericDataset {
            schema,
            matrix: Matrix::from_rows(vec![vec![0.5, 1.0], vec![0.0, 0.25]]).unwrap(),
            labels: vec![1, 0],
            ids: vec![3, 9],
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        write_dataset_csv(f.path(), &data).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec!["id,A,B,Y", "3,0.5,1,1", "9,0,0.25,0"]);
    }
}
