//! One JSON line per disorder realization, plus the append-only store.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::{FrequencyGrid, SpectralHistogram, SumRuleReport};

/// `(L, W index, realization index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub sites: usize,
    pub w_index: usize,
    pub k: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// Probes of `S^z_site` within one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteProbes {
    pub site: usize,
    /// Infinite entries are written as the string `"inf"`.
    #[serde(with = "inf_as_string")]
    pub chi: Vec<f64>,
    pub diag_sz: Vec<f64>,
    pub weight: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: f64,
    pub overflow: f64,
    pub sum_rule: SumRuleReport,
}

impl SiteProbes {
    pub fn histogram(&self, grid: &FrequencyGrid, norm: f64) -> SpectralHistogram {
        SpectralHistogram {
            edges: grid.edges(),
            weight: self.weight.clone(),
            counts: self.counts.clone(),
            underflow: self.underflow,
            overflow: self.overflow,
            norm,
            n_realizations: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub key: RecordKey,
    pub w: f64,
    pub delta: f64,
    pub two_m: i32,
    pub seed: u64,
    pub config_digest: String,
    pub code_version: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub fields: Vec<f64>,
    pub dim: usize,
    /// Normalizing dimension `D`.
    pub norm: f64,
    /// Eigenstate index range `[start, end)` the probes cover.
    pub window: (usize, usize),
    pub bandwidth: f64,
    pub mean_spacing: f64,
    /// Full ascending spectrum of the sector.
    #[serde(default)]
    pub energies: Vec<f64>,
    /// One entry per interior level of the window.
    pub gap_ratios: Vec<f64>,
    pub gap_degenerate: usize,
    pub grid: FrequencyGrid,
    pub probes: Vec<SiteProbes>,
}

mod inf_as_string {
    use serde::de::{self, SeqAccess, Visitor};
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for &v in values {
            if v.is_finite() {
                seq.serialize_element(&v)?;
            } else if v == f64::INFINITY {
                seq.serialize_element("inf")?;
            } else {
                return Err(serde::ser::Error::custom(format!("cannot store {v}")));
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Vec<f64>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a list of numbers or \"inf\"")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                let mut out = Vec::with_capacity(seq.size_hint().unwrap_or(0));
                while let Some(e) = seq.next_element::<Entry>()? {
                    out.push(match e {
                        Entry::Num(x) => x,
                        Entry::Text(t) if t == "inf" => f64::INFINITY,
                        Entry::Text(t) => return Err(de::Error::custom(format!("bad entry {t:?}"))),
                    });
                }
                Ok(out)
            }
        }
        d.deserialize_seq(V)
    }
}

/// Append-only `records.jsonl` with recovery of a torn final line.
pub struct RecordStore {
    path: PathBuf,
    file: File,
    records: BTreeMap<RecordKey, RealizationRecord>,
}

impl RecordStore {
    pub const FILE_NAME: &'static str = "records.jsonl";

    /// Open (creating if needed) the store in `dir`. Rejects records whose
    /// config digest differs from `digest`.
    pub fn open(dir: &Path, digest: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(Self::FILE_NAME);
        let records = load_records(&path, true)?;
        if let Some(r) = records.values().find(|r| r.config_digest != digest) {
            return Err(Error::Config(vec![format!(
                "{} holds records from a different configuration (digest {} vs {digest}); \
                 use a fresh output directory",
                path.display(),
                r.config_digest
            )]));
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            file,
            records,
        })
    }

    pub fn contains(&self, key: &RecordKey) -> bool {
        self.records.contains_key(key)
    }

    pub fn get(&self, key: &RecordKey) -> Option<&RealizationRecord> {
        self.records.get(key)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Write one record and flush it to disk before returning.
    pub fn append(&mut self, record: RealizationRecord) -> Result<()> {
        let mut line = serde_json::to_string(&record).map_err(|e| Error::Parse {
            path: self.path.clone(),
            msg: e.to_string(),
        })?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))?;
        self.records.insert(record.key, record);
        Ok(())
    }

    pub fn into_records(self) -> BTreeMap<RecordKey, RealizationRecord> {
        self.records
    }
}

/// Read every record of `path`, keyed and therefore sorted. With `repair`,
/// an incomplete last line is cut off the file; otherwise it is ignored.
pub fn load_records(path: &Path, repair: bool) -> Result<BTreeMap<RecordKey, RealizationRecord>> {
    let mut records = BTreeMap::new();
    let mut file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(records),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut reader = BufReader::new(&mut file);
    let mut good_len = 0u64;
    let mut line = String::new();
    let mut torn = false;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        if !line.ends_with('\n') {
            torn = true;
            break;
        }
        match serde_json::from_str::<RealizationRecord>(line.trim_end()) {
            Ok(r) => {
                records.insert(r.key, r);
                good_len += n as u64;
            }
            Err(e) => {
                // Only a damaged final line is recoverable.
                let mut rest = String::new();
                reader.read_line(&mut rest).map_err(|e| Error::io(path, e))?;
                if rest.is_empty() {
                    torn = true;
                    break;
                }
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("line after byte {good_len}: {e}"),
                });
            }
        }
    }
    drop(reader);
    if torn && repair {
        log::warn!("{}: dropping incomplete final record", path.display());
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.set_len(good_len).map_err(|e| Error::io(path, e))?;
    }
    Ok(records)
}
