//! The 9-class challenge taxonomy and 64→9 label remapping.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::LabelMap;

pub const NUM_CLASSES: usize = 9;
pub const NUM_RAW_CLASSES: usize = 64;
/// Reserved id for unlabeled pixels; excluded from loss and metrics.
pub const IGNORE_ID: u8 = 255;

/// Class names in report order.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "Other",
    "Artificial Structure",
    "Artificial Ground",
    "Natural Ground",
    "Obstacle",
    "Vehicle",
    "Vegetation",
    "Human",
    "Sky",
];

/// Default GOOSE 64→9 table, version 1. See `data/goose_64_to_9_v1.csv`.
pub const DEFAULT_MAPPING_CSV: &str = include_str!("../data/goose_64_to_9_v1.csv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    classes: Vec<String>,
    ignore_id: u8,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy {
            classes: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            ignore_id: IGNORE_ID,
        }
    }
}

impl Taxonomy {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn ignore_id(&self) -> u8 {
        self.ignore_id
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

/// Total function from raw ids `0..64` to `0..9 ∪ {IGNORE_ID}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    table: [u8; NUM_RAW_CLASSES],
    explicit: [bool; NUM_RAW_CLASSES],
}

impl Mapping {
    /// Builds a mapping from `(raw, target)` pairs. Raw ids not listed map
    /// to [`IGNORE_ID`].
    pub fn from_entries(entries: impl IntoIterator<Item = (u8, u8)>) -> Result<Self> {
        let mut table = [IGNORE_ID; NUM_RAW_CLASSES];
        let mut explicit = [false; NUM_RAW_CLASSES];
        for (raw, target) in entries {
            check_entry(raw, target).map_err(Error::InvalidArgument)?;
            if explicit[raw as usize] {
                return Err(Error::InvalidArgument(format!("duplicate raw id {raw}")));
            }
            explicit[raw as usize] = true;
            table[raw as usize] = target;
        }
        Ok(Mapping { table, explicit })
    }

    pub fn identity() -> Self {
        Self::from_entries((0..NUM_CLASSES as u8).map(|k| (k, k))).expect("valid identity")
    }

    pub fn goose_default() -> Self {
        Self::parse(DEFAULT_MAPPING_CSV, Path::new("<builtin>")).expect("builtin mapping is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses the `raw_id,target_id` table format.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Mapping {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "raw_id,target_id" => {}
            Some((_, header)) => {
                return Err(err(1, format!("expected header `raw_id,target_id`, got `{header}`")))
            }
            None => return Err(err(1, "empty file".into())),
        }
        let mut table = [IGNORE_ID; NUM_RAW_CLASSES];
        let mut explicit = [false; NUM_RAW_CLASSES];
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [raw, target] = fields[..] else {
                return Err(err(lineno, format!("expected 2 columns, got {}", fields.len())));
            };
            let raw: u8 = raw
                .parse()
                .map_err(|_| err(lineno, format!("raw id `{raw}` is not an integer in 0..64")))?;
            let target: u8 = target
                .parse()
                .map_err(|_| err(lineno, format!("target id `{target}` is not an integer")))?;
            check_entry(raw, target).map_err(|m| err(lineno, m))?;
            if explicit[raw as usize] {
                return Err(err(lineno, format!("duplicate raw id {raw}")));
            }
            explicit[raw as usize] = true;
            table[raw as usize] = target;
        }
        Ok(Mapping { table, explicit })
    }

    pub fn get(&self, raw: u8) -> u8 {
        if raw as usize >= NUM_RAW_CLASSES {
            return IGNORE_ID;
        }
        self.table[raw as usize]
    }

    /// Whether `raw` has an explicit row (as opposed to the ignore fallback).
    pub fn is_explicit(&self, raw: u8) -> bool {
        (raw as usize) < NUM_RAW_CLASSES && self.explicit[raw as usize]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("raw_id,target_id\n");
        for raw in 0..NUM_RAW_CLASSES {
            if self.explicit[raw] {
                out.push_str(&format!("{raw},{}\n", self.table[raw]));
            }
        }
        out
    }
}

fn check_entry(raw: u8, target: u8) -> std::result::Result<(), String> {
    if raw as usize >= NUM_RAW_CLASSES {
        return Err(format!("raw id {raw} outside 0..{NUM_RAW_CLASSES}"));
    }
    if target as usize >= NUM_CLASSES && target != IGNORE_ID {
        return Err(format!(
            "target id {target} outside 0..{NUM_CLASSES} and not the ignore id {IGNORE_ID}"
        ));
    }
    Ok(())
}

/// Maps every raw pixel through `mapping`. The ignore id passes through.
pub fn remap(labels: &LabelMap, mapping: &Mapping) -> Result<LabelMap> {
    let width = labels.width();
    let mut out = Vec::with_capacity(labels.data().len());
    for (i, &raw) in labels.data().iter().enumerate() {
        if raw == IGNORE_ID {
            out.push(IGNORE_ID);
        } else if (raw as usize) < NUM_RAW_CLASSES {
            out.push(mapping.table[raw as usize]);
        } else {
            return Err(Error::InvalidLabel {
                id: raw,
                x: i % width,
                y: i / width,
            });
        }
    }
    LabelMap::from_vec(labels.height(), width, out)
}

/// Pixel count per label id present in the map (the ignore id included).
pub fn class_histogram(labels: &LabelMap) -> BTreeMap<u8, u64> {
    let mut dense = [0u64; 256];
    for &id in labels.data() {
        dense[id as usize] += 1;
    }
    dense
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(id, &n)| (id as u8, n))
        .collect()
}

/// Fraction of non-ignored pixels covered by the `k` most frequent classes.
pub fn top_k_share(hist: &BTreeMap<u8, u64>, k: usize) -> f64 {
    let mut counts: Vec<u64> = hist
        .iter()
        .filter(|(&id, _)| id != IGNORE_ID)
        .map(|(_, &n)| n)
        .collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts.iter().take(k).sum::<u64>() as f64 / total as f64
}
