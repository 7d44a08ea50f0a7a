use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::router::{PerProfile, ProfileBank};

/// JSON shape of a profile bank file.
///
/// Floats are written in shortest round-trip form, so every value reloads
/// bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankDocument {
    pub n_heads: usize,
    pub profiles: PerProfile<Vec<f64>>,
    pub centers: PerProfile<f64>,
    pub bandwidth: f64,
}

impl From<&ProfileBank> for BankDocument {
    fn from(bank: &ProfileBank) -> Self {
        Self {
            n_heads: bank.n_heads(),
            profiles: bank.profiles().clone(),
            centers: *bank.centers(),
            bandwidth: bank.bandwidth(),
        }
    }
}

impl TryFrom<BankDocument> for ProfileBank {
    type Error = Error;

    fn try_from(doc: BankDocument) -> Result<Self> {
        if doc.profiles.semantic.len() != doc.n_heads {
            return Err(Error::InvalidBank(format!(
                "n_heads is {} but profiles have {} entries",
                doc.n_heads,
                doc.profiles.semantic.len()
            )));
        }
        ProfileBank::from_parts(doc.profiles, doc.centers, doc.bandwidth)
    }
}

impl ProfileBank {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&BankDocument::from(self)).expect("bank serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BankDocument =
            serde_json::from_str(text).map_err(|e| Error::InvalidBank(e.to_string()))?;
        doc.try_into()
    }
}

pub fn save_profile_bank(path: impl AsRef<Path>, bank: &ProfileBank) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bank.to_json() + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_profile_bank(path: impl AsRef<Path>) -> Result<ProfileBank> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ProfileBank::from_json(&text)
}
