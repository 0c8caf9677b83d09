use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::InteractionDataset;

const HEADER: [&str; 3] = ["user_id", "item_id", "timestamp"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ingested {
    pub records: Vec<Record>,
    /// Data lines that could not be parsed and were skipped.
    pub malformed: usize,
}

/// Reads a `user_id,item_id,timestamp` log. Malformed lines are skipped and
/// counted; more than 1% malformed is an error.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Ingested> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut rows = reader.byte_records();

    let header_ok = match rows.next() {
        Some(Ok(h)) => {
            h.len() == 3
                && h.iter()
                    .zip(HEADER)
                    .all(|(field, want)| std::str::from_utf8(field).map(str::trim) == Ok(want))
        }
        _ => false,
    };
    if !header_ok {
        return Err(Error::MissingHeader {
            path: path.to_path_buf(),
        });
    }

    let mut records = Vec::new();
    let mut malformed = 0usize;
    let mut total = 0usize;
    for row in rows {
        total += 1;
        match row.ok().and_then(|r| parse(&r)) {
            Some(rec) => records.push(rec),
            None => malformed += 1,
        }
    }
    if malformed * 100 > total {
        return Err(Error::TooManyMalformed {
            path: path.to_path_buf(),
            malformed,
            total,
        });
    }
    if malformed > 0 {
        log::warn!("{}: skipped {malformed} malformed lines", path.display());
    }
    Ok(Ingested { records, malformed })
}

fn parse(row: &csv::ByteRecord) -> Option<Record> {
    if row.len() != 3 {
        return None;
    }
    let field = |i: usize| std::str::from_utf8(&row[i]).ok().map(str::trim);
    let (user, item, ts) = (field(0)?, field(1)?, field(2)?);
    if user.is_empty() || item.is_empty() {
        return None;
    }
    Some(Record {
        user_id: user.to_string(),
        item_id: item.to_string(),
        timestamp: ts.parse().ok()?,
    })
}

/// Writes a dataset as a log that [`ingest_csv`] + [`leave_one_out_split`]
/// read back to the same dataset. Timestamps are sequence positions.
///
/// [`leave_one_out_split`]: super::leave_one_out_split
pub fn export_csv(dataset: &InteractionDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", HEADER.join(",")).map_err(io)?;
    for (u, seq) in dataset.sequences.iter().enumerate() {
        for (t, &item) in seq.iter().enumerate() {
            writeln!(w, "{},{},{}", dataset.user_ids[u], dataset.item_label(item), t).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_body() {
        let f = write("user_id,item_id,timestamp\n");
        let got = ingest_csv(f.path()).unwrap();
        assert!(got.records.is_empty());
        assert_eq!(got.malformed, 0);
    }

    #[test]
    fn preserves_file_order() {
        let f = write("user_id,item_id,timestamp\nu1,a,5\nu2,b,1\nu1,c,3\n");
        let got = ingest_csv(f.path()).unwrap();
        let items: Vec<_> = got.records.iter().map(|r| r.item_id.as_str()).collect();
        assert_eq!(items, ["a", "b", "c"]);
        assert_eq!(got.records[1].timestamp, 1);
    }

    #[test]
    fn one_bad_line_in_a_thousand() {
        let mut body = String::from("user_id,item_id,timestamp\n");
        for i in 0..1000 {
            if i == 500 {
                body.push_str("u,x,not-a-number\n");
            } else {
                body.push_str(&format!("u{},i{},{}\n", i % 7, i % 13, i));
            }
        }
        let got = ingest_csv(write(&body).path()).unwrap();
        assert_eq!(got.records.len(), 999);
        assert_eq!(got.malformed, 1);
    }

    #[test]
    fn too_many_malformed() {
        let body = "user_id,item_id,timestamp\nu,i,1\nu,i\nu,i,2\n";
        assert!(matches!(
            ingest_csv(write(body).path()),
            Err(Error::TooManyMalformed { malformed: 1, total: 3, .. })
        ));
    }

    #[test]
    fn missing_header() {
        assert!(matches!(ingest_csv(write("u,i,1\n").path()), Err(Error::MissingHeader { .. })));
        assert!(matches!(ingest_csv(write("").path()), Err(Error::MissingHeader { .. })));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(ingest_csv("/nonexistent/log.csv"), Err(Error::Io { .. })));
    }
}
