use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv4Addr;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::schema::{ColumnEncoding, FeatureSchema};
use super::{Dataset, PreprocessReport};
use crate::error::{Error, Result};

/// What to do with NaN / infinite cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonFinitePolicy {
    #[default]
    DropRow,
    Zero,
    /// Replace with the median of the column's finite values.
    Median,
}

impl std::str::FromStr for NonFinitePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop-row" | "drop" => Ok(NonFinitePolicy::DropRow),
            "zero" => Ok(NonFinitePolicy::Zero),
            "median" => Ok(NonFinitePolicy::Median),
            other => Err(Error::InvalidArgument(format!(
                "unknown non-finite policy `{other}` (drop-row | zero | median)"
            ))),
        }
    }
}

/// Trimmed header names; repeated names get `.1`, `.2`, ... suffixes.
fn header_names(header: &csv::ByteRecord) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    header
        .iter()
        .map(|cell| {
            let name = String::from_utf8_lossy(cell).trim().to_string();
            let n = seen.entry(name.clone()).or_insert(0);
            let out = if *n == 0 {
                name.clone()
            } else {
                format!("{name}.{n}")
            };
            *n += 1;
            out
        })
        .collect()
}

fn parse_number(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Some(f64::NAN);
    }
    // Accepts "inf", "Infinity", "NaN" along with ordinary numbers.
    cell.parse::<f64>().ok()
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(false).from_reader(file))
}

struct RawRows {
    values: Vec<f64>,
    labels: Vec<usize>,
    // per categorical column: raw string of every row
    categorical: BTreeMap<usize, Vec<String>>,
}

fn read_file(path: &Path, schema: &FeatureSchema, out: &mut RawRows) -> Result<()> {
    let mut reader = open_reader(path)?;
    let header = reader.byte_headers()?.clone();
    if header.is_empty() {
        return Err(Error::Input(format!("{}: empty file", path.display())));
    }
    let names = header_names(&header);
    let position = |name: &str| {
        names
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
    };
    let label_pos = position(&schema.label_column)?;
    let columns: Vec<(usize, ColumnEncoding)> = schema
        .feature_names
        .iter()
        .map(|f| Ok((position(f)?, schema.encoding(f))))
        .collect::<Result<_>>()?;

    let mut record = csv::ByteRecord::new();
    let mut line = 1usize;
    while reader.read_byte_record(&mut record)? {
        line += 1;
        let raw_label = String::from_utf8_lossy(&record[label_pos]);
        let class = schema.map_label(&raw_label).ok_or_else(|| Error::Label {
            column: schema.label_column.clone(),
            value: raw_label.trim().to_string(),
        })?;
        out.labels.push(class);
        for (j, &(pos, enc)) in columns.iter().enumerate() {
            let cell = String::from_utf8_lossy(&record[pos]);
            let v = match enc {
                ColumnEncoding::Numeric => parse_number(&cell).ok_or_else(|| {
                    Error::Input(format!(
                        "{}:{line}: column `{}` has non-numeric value `{}`",
                        path.display(),
                        schema.feature_names[j],
                        cell.trim()
                    ))
                })?,
                ColumnEncoding::Ipv4 => cell
                    .trim()
                    .parse::<Ipv4Addr>()
                    .map(|a| f64::from(u32::from(a)))
                    .unwrap_or(f64::NAN),
                ColumnEncoding::Categorical => {
                    out.categorical
                        .entry(j)
                        .or_default()
                        .push(cell.trim().to_string());
                    0.0
                }
            };
            out.values.push(v);
        }
    }
    Ok(())
}

/// Load one flow CSV.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    policy: NonFinitePolicy,
) -> Result<(Dataset, PreprocessReport)> {
    load_csv_files(&[path.as_ref()], schema, policy)
}

/// Load and concatenate several CSVs sharing one schema (CICIDS-2017 ships
/// as one file per capture day).
pub fn load_csv_files<P: AsRef<Path>>(
    paths: &[P],
    schema: &FeatureSchema,
    policy: NonFinitePolicy,
) -> Result<(Dataset, PreprocessReport)> {
    schema.validate()?;
    let mut raw = RawRows {
        values: Vec::new(),
        labels: Vec::new(),
        categorical: BTreeMap::new(),
    };
    for p in paths {
        read_file(p.as_ref(), schema, &mut raw)?;
    }
    let n_rows = raw.labels.len();
    let n_features = schema.n_features();
    if n_rows == 0 {
        return Err(Error::Input("no data rows".into()));
    }

    for (j, cells) in &raw.categorical {
        let levels: BTreeSet<&str> = cells.iter().map(String::as_str).collect();
        let code: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        for (i, cell) in cells.iter().enumerate() {
            raw.values[i * n_features + j] = if cell.is_empty() {
                f64::NAN
            } else {
                code[cell.as_str()] as f64
            };
        }
    }

    let mut x = Array2::from_shape_vec((n_rows, n_features), raw.values)
        .map_err(|e| Error::Input(e.to_string()))?;
    let mut y = raw.labels;
    let mut report = PreprocessReport {
        rows_in: n_rows,
        ..Default::default()
    };
    report.nonfinite_cells_handled = x.iter().filter(|v| !v.is_finite()).count();

    match policy {
        NonFinitePolicy::DropRow => {
            let keep: Vec<usize> = (0..n_rows)
                .filter(|&i| x.row(i).iter().all(|v| v.is_finite()))
                .collect();
            report.rows_dropped_nonfinite = n_rows - keep.len();
            if keep.len() != n_rows {
                x = x.select(ndarray::Axis(0), &keep);
                y = keep.iter().map(|&i| y[i]).collect();
            }
        }
        NonFinitePolicy::Zero => x.mapv_inplace(|v| if v.is_finite() { v } else { 0.0 }),
        NonFinitePolicy::Median => {
            for mut col in x.columns_mut() {
                let mut finite: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
                if finite.len() == col.len() {
                    continue;
                }
                let median = if finite.is_empty() {
                    0.0
                } else {
                    finite.sort_by(f64::total_cmp);
                    let m = finite.len() / 2;
                    if finite.len().is_multiple_of(2) {
                        0.5 * (finite[m - 1] + finite[m])
                    } else {
                        finite[m]
                    }
                };
                col.mapv_inplace(|v| if v.is_finite() { v } else { median });
            }
        }
    }
    if report.nonfinite_cells_handled > 0 {
        log::info!(
            "{} non-finite cells handled ({:?}), {} rows dropped",
            report.nonfinite_cells_handled,
            policy,
            report.rows_dropped_nonfinite
        );
    }
    if y.is_empty() {
        return Err(Error::Input("every row contained non-finite values".into()));
    }

    let d = Dataset::new(x, y, schema.clone())?;
    Ok((d, report))
}

/// Build a numeric schema from a CSV header: every column except
/// `label_column` is a feature; classes are the distinct label strings in
/// sorted order.
pub fn infer_schema(path: impl AsRef<Path>, label_column: &str) -> Result<FeatureSchema> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let names = header_names(&reader.byte_headers()?.clone());
    if names.is_empty() {
        return Err(Error::Input(format!("{}: empty file", path.display())));
    }
    let label_pos = names
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("missing column `{label_column}`")))?;
    let mut classes = BTreeSet::new();
    let mut record = csv::ByteRecord::new();
    while reader.read_byte_record(&mut record)? {
        let raw = String::from_utf8_lossy(&record[label_pos]).trim().to_string();
        classes.insert(raw);
    }
    if classes.is_empty() {
        return Err(Error::Input(format!("{}: no data rows", path.display())));
    }
    let features = names
        .into_iter()
        .enumerate()
        .filter(|&(i, _)| i != label_pos)
        .map(|(_, n)| n)
        .collect();
    FeatureSchema::new(features, label_column, classes.into_iter().collect())
}

/// [`infer_schema`] over several files with the same header; classes are
/// the union of every file's labels.
pub fn infer_schema_files<P: AsRef<Path>>(paths: &[P], label_column: &str) -> Result<FeatureSchema> {
    let mut iter = paths.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Input("no input files".into()))?;
    let base = infer_schema(first, label_column)?;
    let mut classes: BTreeSet<String> = base.class_names.iter().cloned().collect();
    for p in iter {
        let s = infer_schema(p, label_column)?;
        if s.feature_names != base.feature_names {
            return Err(Error::Schema(format!(
                "{}: header differs from {}",
                p.as_ref().display(),
                first.as_ref().display()
            )));
        }
        classes.extend(s.class_names);
    }
    FeatureSchema::new(base.feature_names, label_column, classes.into_iter().collect())
}

/// Write a dataset as CSV: feature columns, then the label column holding
/// class names. Values print in shortest round-trip form.
pub fn write_dataset_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = d.schema.feature_names.iter().map(String::as_str).collect();
    header.push(&d.schema.label_column);
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (i, &c) in d.y.iter().enumerate() {
        row.clear();
        row.extend(d.x.row(i).iter().map(|v| v.to_string()));
        row.push(d.schema.class_names[c].clone());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, text: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(text).unwrap();
        p
    }

    fn ab_schema() -> FeatureSchema {
        FeatureSchema::new(vec!["f1".into(), "f2".into()], "label", vec!["a".into(), "b".into()])
            .unwrap()
    }

    #[test]
    fn three_rows_two_features() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", b"f1,f2,label\n1,2,a\n3,4,b\n5,6,a\n");
        let (d, rep) = load_csv(&p, &ab_schema(), NonFinitePolicy::DropRow).unwrap();
        assert_eq!(d.n_samples(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.y, vec![0, 1, 0]);
        assert_eq!(rep.rows_in, 3);
    }

    #[test]
    fn missing_column_names_it() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", b"f1,label\n1,a\n");
        match load_csv(&p, &ab_schema(), NonFinitePolicy::DropRow) {
            Err(Error::Schema(msg)) => assert!(msg.contains("f2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unmapped_label_reports_value() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", b"f1,f2,label\n1,2,zzz\n");
        match load_csv(&p, &ab_schema(), NonFinitePolicy::DropRow) {
            Err(Error::Label { value, .. }) => assert_eq!(value, "zzz"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", b"");
        assert!(matches!(
            load_csv(&p, &ab_schema(), NonFinitePolicy::DropRow),
            Err(Error::Input(_)) | Err(Error::Schema(_))
        ));
        let p = write(&dir, "h.csv", b"f1,f2,label\n");
        assert!(matches!(
            load_csv(&p, &ab_schema(), NonFinitePolicy::DropRow),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn nonfinite_policies() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.csv",
            b"f1,f2,label\n1,Infinity,a\n3,4,b\n5,NaN,a\n7,8,b\n",
        );
        let (d, rep) = load_csv(&p, &ab_schema(), NonFinitePolicy::DropRow).unwrap();
        assert_eq!(d.n_samples(), 2);
        assert_eq!(rep.nonfinite_cells_handled, 2);
        assert_eq!(rep.rows_dropped_nonfinite, 2);

        let (d, _) = load_csv(&p, &ab_schema(), NonFinitePolicy::Zero).unwrap();
        assert_eq!(d.x[[0, 1]], 0.0);

        let (d, _) = load_csv(&p, &ab_schema(), NonFinitePolicy::Median).unwrap();
        assert_eq!(d.x[[0, 1]], 6.0);
        assert_eq!(d.x[[2, 1]], 6.0);
    }

    #[test]
    fn schema_over_files_unions_classes() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(&dir, "a.csv", b"x,Label\n1,BENIGN\n2,DoS\n");
        let b = write(&dir, "b.csv", b"x,Label\n1,BENIGN\n2,PortScan\n");
        let s = infer_schema_files(&[&a, &b], "Label").unwrap();
        assert_eq!(s.class_names, vec!["BENIGN", "DoS", "PortScan"]);
        let c = write(&dir, "c.csv", b"y,Label\n1,BENIGN\n");
        assert!(matches!(infer_schema_files(&[&a, &c], "Label"), Err(Error::Schema(_))));
    }

    #[test]
    fn trims_headers_and_dedupes_repeats() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", b" x, x , Label\n1,2,B\n");
        let s = infer_schema(&p, "Label").unwrap();
        assert_eq!(s.feature_names, vec!["x", "x.1"]);
        assert_eq!(s.class_names, vec!["B"]);
    }

    #[test]
    fn categorical_and_ipv4_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.csv",
            b"PROTO,SRC,ALERT\ntcp,10.0.0.1,\nudp,10.0.0.2,Port Scanning\ntcp,1.2.3.4,\n",
        );
        let schema = FeatureSchema::parse(
            "label_column = ALERT\nclass = Normal\nclass = PortScan\n\
             categorical = PROTO\nipv4 = SRC\n\
             label = <empty> => Normal\nlabel = Port Scanning => PortScan\n",
        )
        .unwrap();
        let (d, _) = load_csv(&p, &schema, NonFinitePolicy::DropRow).unwrap();
        assert_eq!(d.x.column(0).to_vec(), vec![0.0, 1.0, 0.0]);
        assert_eq!(d.x[[0, 1]], f64::from(u32::from(Ipv4Addr::new(10, 0, 0, 1))));
        assert_eq!(d.y, vec![0, 1, 0]);
    }

    #[test]
    fn latin1_label_bytes_decode_lossily() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", b"f1,f2,label\n1,2,Web Attack \x96 XSS\n");
        let schema = FeatureSchema::parse(include_str!("../../schemas/cicids2017.schema")).unwrap();
        let lossy = String::from_utf8_lossy(b"Web Attack \x96 XSS").to_string();
        assert_eq!(schema.map_label(&lossy), schema.class_index("Web Attack"));
        // wrong columns for that schema: the label still resolves before the column check fails
        assert!(load_csv(&p, &schema, NonFinitePolicy::DropRow).is_err());
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let schema = ab_schema();
        let d = Dataset::new(
            ndarray::array![[0.1, 1e-300], [2.5, -3.75]],
            vec![1, 0],
            schema.clone(),
        )
        .unwrap();
        let p = dir.path().join("out.csv");
        write_dataset_csv(&d, &p).unwrap();
        let (back, _) = load_csv(&p, &schema, NonFinitePolicy::DropRow).unwrap();
        assert_eq!(back, d);
    }
}
