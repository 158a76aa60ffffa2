// SPDX-License-Identifier: Apache-2.0

//! Versioned JSON container for fitted models. Floats are written in
//! shortest round-trip form, so save followed by load is bit-exact.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};

pub const CONTAINER_FORMAT: &str = "agewise-model";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Container<T> {
    format: String,
    version: u32,
    kind: String,
    model: T,
}

pub fn to_string<T: Serialize>(kind: &str, model: &T) -> Result<String> {
    let c = Container { format: CONTAINER_FORMAT.to_string(), version: CONTAINER_VERSION, kind: kind.to_string(), model };
    serde_json::to_string(&c).map_err(|e| MlError::Container(e.to_string()))
}

pub fn from_str<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let c: Container<T> = serde_json::from_str(text).map_err(|e| MlError::Container(e.to_string()))?;
    if c.format != CONTAINER_FORMAT {
        return Err(MlError::Container(format!("unexpected format tag {:?}", c.format)));
    }
    if c.version != CONTAINER_VERSION {
        return Err(MlError::Container(format!("unsupported container version {}", c.version)));
    }
    if c.kind != kind {
        return Err(MlError::Container(format!("container holds {:?}, expected {kind:?}", c.kind)));
    }
    Ok(c.model)
}
