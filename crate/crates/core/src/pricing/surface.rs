//! Caplet quote surfaces on disk.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuoteType {
    /// Black-76 implied volatility.
    Vol,
    /// Discounted premium.
    Price,
}

/// One caplet quote. CSV columns: `maturity_years,tenor_years,strike,quote_type,value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceQuote {
    pub maturity_years: f64,
    pub tenor_years: f64,
    pub strike: f64,
    pub quote_type: QuoteType,
    pub value: f64,
}

pub fn read_surface<R: Read>(reader: R) -> Result<Vec<SurfaceQuote>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SurfaceQuote>().enumerate() {
        let q = row?;
        let ok = q.maturity_years > 0.0 && q.tenor_years > 0.0 && q.strike.is_finite() && q.value.is_finite();
        if !ok {
            return Err(Error::Parse(format!("surface row {}: invalid quote {q:?}", i + 1)));
        }
        out.push(q);
    }
    if out.is_empty() {
        return Err(Error::Parse("surface has no quotes".into()));
    }
    Ok(out)
}

pub fn read_surface_file(path: impl AsRef<Path>) -> Result<Vec<SurfaceQuote>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    read_surface(file)
}

pub fn write_surface<W: Write>(quotes: &[SurfaceQuote], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for q in quotes {
        w.serialize(q)?;
    }
    w.flush()?;
    Ok(())
}
