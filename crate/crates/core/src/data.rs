//! Data files shipped with the crate. Setting `SEMISTAB_DATA_DIR` makes the
//! loaders read same-named files from that directory instead.

use std::path::PathBuf;

use thiserror::Error;

use crate::cft::{AxiomLedger, CftError};
use crate::discbounds::{DiscError, OdlyzkoTable};
use crate::exclusion::{CitationError, Citations};
use crate::groups::{Catalog, GroupError};

pub const DATA_DIR_ENV: &str = "SEMISTAB_DATA_DIR";

pub const ODLYZKO: &str = include_str!("../data/odlyzko.txt");
pub const AXIOMS: &str = include_str!("../data/axioms.txt");
pub const GROUPS: &str = include_str!("../data/groups.txt");
pub const CITATIONS: &str = include_str!("../data/citations.txt");

#[derive(Debug, Error)]
pub enum DataError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("odlyzko.txt: {0}")]
    Table(#[from] DiscError),
    #[error("axioms.txt: {0}")]
    Ledger(#[from] CftError),
    #[error("groups.txt: {0}")]
    Catalog(#[from] GroupError),
    #[error("citations.txt: {0}")]
    Citations(#[from] CitationError),
}

/// Text of a data file, from the override directory when one is set.
pub fn read(name: &str) -> Result<String, DataError> {
    let bundled = match name {
        "odlyzko.txt" => ODLYZKO,
        "axioms.txt" => AXIOMS,
        "groups.txt" => GROUPS,
        "citations.txt" => CITATIONS,
        _ => "",
    };
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => {
            let path = PathBuf::from(dir).join(name);
            std::fs::read_to_string(&path).map_err(|source| DataError::Io { path, source })
        }
        None => Ok(bundled.to_string()),
    }
}

#[derive(Clone, Debug)]
pub struct DataSet {
    pub table: OdlyzkoTable,
    pub ledger: AxiomLedger,
    pub catalog: Catalog,
    pub citations: Citations,
}

impl DataSet {
    pub fn load() -> Result<DataSet, DataError> {
        Ok(DataSet {
            table: OdlyzkoTable::parse(&read("odlyzko.txt")?)?,
            ledger: AxiomLedger::parse(&read("axioms.txt")?)?,
            catalog: Catalog::parse(&read("groups.txt")?)?,
            citations: Citations::parse(&read("citations.txt")?)?,
        })
    }

    /// The bundled files, ignoring any override directory.
    pub fn bundled() -> DataSet {
        DataSet {
            table: OdlyzkoTable::parse(ODLYZKO).expect("bundled table parses"),
            ledger: AxiomLedger::parse(AXIOMS).expect("bundled ledger parses"),
            catalog: Catalog::parse(GROUPS).expect("bundled catalog parses"),
            citations: Citations::parse(CITATIONS).expect("bundled citations parse"),
        }
    }
}
