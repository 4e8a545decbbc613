use std::io::{Read, Write};
use std::path::Path;

use crate::data::LabelTaxonomy;
use crate::error::{Error, Result};

/// Presence vector for one image, aligned with taxonomy order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelRecord {
    pub id: String,
    pub labels: Vec<u8>,
}

impl LabelRecord {
    pub fn as_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&b| b as f64).collect()
    }
}

/// Parses `id,<label1>,…,<labelL>` CSV. Columns are matched to the taxonomy
/// by header name; every taxonomy label must be present exactly once.
pub fn parse_labels<R: Read>(reader: R, taxonomy: &LabelTaxonomy) -> Result<Vec<LabelRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("id") {
        return Err(Error::Validation(format!(
            "first label column must be \"id\", got {:?}",
            headers.get(0).unwrap_or("")
        )));
    }
    let mut columns = Vec::with_capacity(taxonomy.len());
    for label in taxonomy.labels() {
        let col = headers
            .iter()
            .position(|h| h == label)
            .ok_or_else(|| Error::Validation(format!("label file is missing column {label:?}")))?;
        columns.push(col);
    }
    if headers.len() != taxonomy.len() + 1 {
        let extra: Vec<&str> = headers
            .iter()
            .skip(1)
            .filter(|h| taxonomy.index_of(h).is_none())
            .collect();
        return Err(Error::Validation(format!("unknown label columns {extra:?}")));
    }

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_owned();
        let labels = columns
            .iter()
            .map(|&c| match rec.get(c) {
                Some("0") => Ok(0u8),
                Some("1") => Ok(1u8),
                other => Err(Error::Validation(format!(
                    "row {} ({id:?}), column {:?}: expected 0 or 1, got {:?}",
                    row + 2,
                    &headers[c],
                    other.unwrap_or("")
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        out.push(LabelRecord { id, labels });
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>, taxonomy: &LabelTaxonomy) -> Result<Vec<LabelRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_labels(file, taxonomy)
}

pub fn format_labels<W: Write>(
    writer: W,
    records: &[LabelRecord],
    taxonomy: &LabelTaxonomy,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id"];
    header.extend(taxonomy.labels().iter().map(String::as_str));
    wtr.write_record(&header)?;
    for r in records {
        if r.labels.len() != taxonomy.len() {
            return Err(Error::Shape(format!(
                "record {:?} has {} labels, taxonomy has {}",
                r.id,
                r.labels.len(),
                taxonomy.len()
            )));
        }
        let mut row = vec![r.id.clone()];
        row.extend(r.labels.iter().map(|b| b.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_labels(
    path: impl AsRef<Path>,
    records: &[LabelRecord],
    taxonomy: &LabelTaxonomy,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    format_labels(file, records, taxonomy)
}
