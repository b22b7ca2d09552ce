//! JSON montage documents.
//!
//! ```json
//! { "name": "demo", "grid_height": 1, "grid_width": 2,
//!   "channels": [ { "name": "C3", "row": 0, "col": 0 },
//!                 { "name": "C4", "row": 0, "col": 1 } ] }
//! ```
//!
//! Channels are listed in signal order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trm_core::{Electrode, Montage};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelDoc {
    name: String,
    row: usize,
    col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MontageDoc {
    name: String,
    grid_height: usize,
    grid_width: usize,
    channels: Vec<ChannelDoc>,
}

pub fn parse_montage(text: &str) -> Result<Montage, MontageParseError> {
    let doc: MontageDoc = serde_json::from_str(text).map_err(MontageParseError::Json)?;
    let channels = doc
        .channels
        .into_iter()
        .map(|c| Electrode::new(c.name, c.row, c.col))
        .collect();
    Montage::new(doc.name, doc.grid_height, doc.grid_width, channels).map_err(MontageParseError::Invalid)
}

pub fn montage_to_json(montage: &Montage) -> String {
    let doc = MontageDoc {
        name: montage.name().to_string(),
        grid_height: montage.grid_height(),
        grid_width: montage.grid_width(),
        channels: montage
            .channels()
            .iter()
            .map(|e| ChannelDoc {
                name: e.name.clone(),
                row: e.row,
                col: e.col,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("montage documents always serialize");
    text.push('\n');
    text
}

#[derive(Debug, thiserror::Error)]
pub enum MontageParseError {
    #[error(transparent)]
    Json(serde_json::Error),
    #[error(transparent)]
    Invalid(trm_core::Error),
}

pub fn load_montage(path: &Path) -> Result<Montage> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_montage(&text).map_err(|e| match e {
        MontageParseError::Json(source) => Error::Json {
            path: path.to_path_buf(),
            source,
        },
        MontageParseError::Invalid(e) => Error::Invalid(format!("{}: {e}", path.display())),
    })
}

pub fn save_montage(montage: &Montage, path: &Path) -> Result<()> {
    fs::write(path, montage_to_json(montage)).map_err(Error::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(channels: &str, h: usize, w: usize) -> String {
        format!(r#"{{"name":"t","grid_height":{h},"grid_width":{w},"channels":[{channels}]}}"#)
    }

    #[test]
    fn single_channel_montage() {
        let m = parse_montage(&doc(r#"{"name":"Cz","row":0,"col":0}"#, 1, 1)).unwrap();
        assert_eq!((m.grid(), m.channel_count()), ((1, 1), 1));
    }

    #[test]
    fn json_round_trip() {
        let m = parse_montage(&doc(
            r#"{"name":"C3","row":0,"col":0},{"name":"C4","row":1,"col":2}"#,
            2,
            3,
        ))
        .unwrap();
        assert_eq!(parse_montage(&montage_to_json(&m)).unwrap(), m);
    }

    #[test]
    fn invalid_documents_are_rejected() {
        let dup_name = doc(r#"{"name":"C3","row":0,"col":0},{"name":"C3","row":0,"col":1}"#, 1, 2);
        let dup_cell = doc(r#"{"name":"C3","row":0,"col":0},{"name":"C4","row":0,"col":0}"#, 1, 2);
        let out_of_range = doc(r#"{"name":"C3","row":1,"col":0}"#, 1, 2);
        for text in [dup_name, dup_cell, out_of_range] {
            assert!(
                matches!(parse_montage(&text), Err(MontageParseError::Invalid(_))),
                "{text}"
            );
        }
        assert!(matches!(parse_montage("{"), Err(MontageParseError::Json(_))));
        assert!(matches!(
            parse_montage(&doc(r#"{"name":"C3","row":-1,"col":0}"#, 1, 2)),
            Err(MontageParseError::Json(_))
        ));
    }
}
