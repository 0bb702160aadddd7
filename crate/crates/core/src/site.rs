//! Gauging-site records and the site CSV schema
//! (`site_id,area_km2,value`, one row per exceedance).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const CSV_COLUMNS: [&str; 3] = ["site_id", "area_km2", "value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub id: String,
    /// Catchment area in km².
    pub area: f64,
    pub exceedances: Vec<f64>,
}

impl SiteRecord {
    pub fn new(id: impl Into<String>, area: f64, exceedances: Vec<f64>) -> Result<Self> {
        let s = Self { id: id.into(), area, exceedances };
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.exceedances.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(invalid(format!("site {}: area must be positive, got {}", self.id, self.area)));
        }
        if let Some(x) = self.exceedances.iter().find(|x| !x.is_finite()) {
            return Err(invalid(format!("site {}: non-finite exceedance {x}", self.id)));
        }
        Ok(())
    }

    /// Sample-mean index flood.
    pub fn mean(&self) -> f64 {
        self.exceedances.iter().sum::<f64>() / self.exceedances.len() as f64
    }
}

pub fn find_site<'a>(sites: &'a [SiteRecord], id: &str) -> Result<&'a SiteRecord> {
    sites.iter().find(|s| s.id == id).ok_or_else(|| Error::UnknownSite(id.to_string()))
}

/// Reads sites from CSV. Sites keep the order of their first row.
pub fn read_sites<R: Read>(reader: R) -> Result<Vec<SiteRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 3];
    for (slot, name) in idx.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { line: 1, message: format!("missing required column `{name}`") })?;
    }
    let mut sites: Vec<SiteRecord> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| {
            row.get(i).ok_or_else(|| Error::Parse { line, message: format!("missing field `{name}`") })
        };
        let number = |i: usize, name: &str| -> Result<f64> {
            let raw = field(i, name)?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line, message: format!("`{name}` is not a finite number: {raw:?}") })
        };
        let id = field(idx[0], "site_id")?.to_string();
        if id.is_empty() {
            return Err(Error::Parse { line, message: "empty `site_id`".into() });
        }
        let area = number(idx[1], "area_km2")?;
        if area <= 0.0 {
            return Err(Error::Parse { line, message: format!("`area_km2` must be positive, got {area}") });
        }
        let value = number(idx[2], "value")?;
        match sites.iter_mut().find(|s| s.id == id) {
            Some(s) => {
                if s.area != area {
                    return Err(Error::Parse {
                        line,
                        message: format!("site {id} has conflicting areas {} and {area}", s.area),
                    });
                }
                s.exceedances.push(value);
            }
            None => sites.push(SiteRecord { id, area, exceedances: vec![value] }),
        }
    }
    if sites.is_empty() {
        return Err(invalid("no site rows found"));
    }
    Ok(sites)
}

pub fn read_sites_path(path: &Path) -> Result<Vec<SiteRecord>> {
    read_sites(std::fs::File::open(path)?)
}

pub fn write_sites<W: Write>(sites: &[SiteRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for s in sites {
        for x in &s.exceedances {
            w.write_record([s.id.clone(), s.area.to_string(), x.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
