//! Dataset files: one record per line,
//! `id,split,clean_label,noisy_label,f_0,...,f_{d-1}`, header row mandatory.
//! A `# config_hash=...` comment line precedes the header so outputs can be
//! traced back to the configuration that produced them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Dataset, SampleRecord, Split};
use crate::error::{Error, Result};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

pub fn write_dataset_csv(path: &Path, dataset: &Dataset, config_hash: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# config_hash={config_hash}").map_err(|e| io_err(path, e))?;
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec![
        "id".to_string(),
        "split".to_string(),
        "clean_label".to_string(),
        "noisy_label".to_string(),
    ];
    header.extend((0..dataset.feature_dim).map(|j| format!("f_{j}")));
    writer
        .write_record(&header)
        .map_err(|e| Error::Csv { path: path.display().to_string(), source: e })?;
    for r in &dataset.records {
        let mut row = vec![
            r.id.to_string(),
            dataset.split.as_str().to_string(),
            r.clean_label.to_string(),
            r.noisy_label.to_string(),
        ];
        row.extend(r.features.iter().map(|f| f.to_string()));
        writer
            .write_record(&row)
            .map_err(|e| Error::Csv { path: path.display().to_string(), source: e })?;
    }
    writer
        .flush()
        .map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let display = path.display().to_string();
    let malformed = |details: String| Error::MalformedData { path: display.clone(), details };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Csv { path: display.clone(), source: e })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Csv { path: display.clone(), source: e })?
        .clone();
    if headers.len() < 5
        || &headers[0] != "id"
        || &headers[1] != "split"
        || &headers[2] != "clean_label"
        || &headers[3] != "noisy_label"
    {
        return Err(malformed(format!("unexpected header {:?}", headers)));
    }
    let feature_dim = headers.len() - 4;

    let mut split: Option<Split> = None;
    let mut records = Vec::new();
    let mut max_label = 0usize;
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Csv { path: display.clone(), source: e })?;
        if row.len() != headers.len() {
            return Err(malformed(format!(
                "record {} has {} fields, expected {}",
                line,
                row.len(),
                headers.len()
            )));
        }
        let id: usize = row[0].parse().map_err(|_| malformed(format!("bad id {:?}", &row[0])))?;
        let row_split = match &row[1] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(malformed(format!("bad split {other:?}"))),
        };
        match split {
            None => split = Some(row_split),
            Some(s) if s != row_split => {
                return Err(malformed("mixed splits in one file".to_string()))
            }
            _ => {}
        }
        let clean_label: usize = row[2]
            .parse()
            .map_err(|_| malformed(format!("bad clean_label {:?}", &row[2])))?;
        let noisy_label: usize = row[3]
            .parse()
            .map_err(|_| malformed(format!("bad noisy_label {:?}", &row[3])))?;
        max_label = max_label.max(clean_label).max(noisy_label);
        let features = row
            .iter()
            .skip(4)
            .map(|v| v.parse::<f64>().map_err(|_| malformed(format!("bad feature {v:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        records.push(SampleRecord { id, features, clean_label, noisy_label });
    }
    if records.is_empty() {
        return Err(malformed("no records".to_string()));
    }
    Ok(Dataset {
        classes: max_label + 1,
        feature_dim,
        split: split.expect("records imply split"),
        records,
    })
}
