//! Labeled point clouds in CSV form.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use wnll_core::{DataMatrix, LabelVector};

use crate::error::{Error, Result};

/// Points, labels, and the class names in index order.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCsv {
    pub data: DataMatrix,
    pub labels: LabelVector,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

/// Reads a headed CSV. Every column except `label_column` must be numeric;
/// class names are sorted as strings and numbered from 0.
pub fn load_csv(path: &Path, label_column: &str) -> Result<LabeledCsv> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let label_at = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn { path: path.into(), column: label_column.into() })?;
    let feature_names: Vec<String> =
        headers.iter().enumerate().filter(|&(i, _)| i != label_at).map(|(_, h)| h.to_string()).collect();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        for (i, cell) in record.iter().enumerate() {
            if i == label_at {
                raw_labels.push(cell.trim().to_string());
                continue;
            }
            let v: f64 = cell.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::NonNumeric {
                path: path.into(),
                line,
                column: headers.get(i).unwrap_or("").to_string(),
                value: cell.to_string(),
            })?;
            values.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyFile { path: path.into() });
    }
    let class_names: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let labels = raw_labels.iter().map(|l| class_names.binary_search(l).expect("collected above")).collect();
    let data = DataMatrix::new(raw_labels.len(), feature_names.len(), values)?;
    let labels = LabelVector::new(labels, class_names.len().max(1))?;
    Ok(LabeledCsv { data, labels, class_names, feature_names })
}

/// Writes points with a trailing `label` column holding class names.
pub fn write_csv(path: &Path, data: &DataMatrix, labels: &LabelVector, class_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|source| Error::Csv { path: path.into(), source })?;
    let mut header: Vec<String> = (0..data.cols()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    let werr = |source| Error::Csv { path: path.into(), source };
    w.write_record(&header).map_err(werr)?;
    for i in 0..data.rows() {
        let mut row: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        row.push(class_names[labels.get(i)].clone());
        w.write_record(&row).map_err(werr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn lexicographic_class_indexing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "x,y,label\n0,1,b\n1,1,a\n2,0,b\n3,3,a\n").unwrap();
        let t = load_csv(&p, "label").unwrap();
        assert_eq!(t.labels.labels(), &[1, 0, 1, 0]);
        assert_eq!(t.class_names, vec!["a", "b"]);
        assert_eq!((t.data.rows(), t.data.cols()), (4, 2));
        fs::write(&p, "label,x\nb,1\na,2\nb,3\na,4\n").unwrap();
        assert_eq!(load_csv(&p, "label").unwrap().labels.labels(), &[1, 0, 1, 0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "x,y\n0,1\n").unwrap();
        assert!(matches!(load_csv(&p, "label").unwrap_err(), Error::MissingColumn { .. }));
        fs::write(&p, "x,label\n0,a\nfoo,b\n").unwrap();
        assert!(matches!(load_csv(&p, "label").unwrap_err(), Error::NonNumeric { line: 3, .. }));
        fs::write(&p, "x,label\nNaN,a\n").unwrap();
        assert!(matches!(load_csv(&p, "label").unwrap_err(), Error::NonNumeric { .. }));
        fs::write(&p, "x,label\n").unwrap();
        assert!(matches!(load_csv(&p, "label").unwrap_err(), Error::EmptyFile { .. }));
        fs::write(&p, "").unwrap();
        assert!(load_csv(&p, "label").is_err());
    }

    #[test]
    fn moons_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("moons.csv");
        let (x, y) = wnll_core::synth::two_moons(200, 0.1, 3).unwrap();
        write_csv(&p, &x, &y, &["0".into(), "1".into()]).unwrap();
        let t = load_csv(&p, "label").unwrap();
        assert_eq!(t.data, x);
        assert_eq!(t.labels, y);
    }
}
