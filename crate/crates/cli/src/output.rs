use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use extremo::SpatialDataset;
use serde::Serialize;

/// Buffered sink for `--out` (or stdout).
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(out: &mut dyn Write, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Long-format observation table; missing cells are omitted.
pub fn write_observations(out: &mut dyn Write, dataset: &SpatialDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rep_id", "site_id", "value"])?;
    for (r, rep) in dataset.rep_ids().iter().enumerate() {
        for (s, site) in dataset.sites().iter().enumerate() {
            if let Some(v) = dataset.get(r, s) {
                w.write_record([rep.as_str(), site.id.as_str(), &v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
