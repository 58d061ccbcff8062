//! On-disk layout of a split corpus directory.
//!
//! ```text
//! DIR/vocab.tsv              phrase, id, doc_frequency
//! DIR/train.tsv              bios (extraction record format)
//! DIR/test.tsv               cleaned test bios
//! DIR/instances_main.tsv     bio_id, split, target, remainder JSON
//! DIR/instances_general.tsv
//! DIR/manifest.json          stats, config, hashes
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::extraction::{read_bios, write_bios};
use crate::io::{file_sha256, FormatError};

use super::{EvalInstance, SplitKind};
use super::{SplitConfig, SplitCorpus, SplitStats, Vocabulary};

pub const VOCAB_FILE: &str = "vocab.tsv";
pub const TRAIN_FILE: &str = "train.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const MAIN_INSTANCES_FILE: &str = "instances_main.tsv";
pub const GENERAL_INSTANCES_FILE: &str = "instances_general.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config: SplitConfig,
    pub config_hash: String,
    pub input_hash: String,
    pub stats: SplitStats,
    /// File name to SHA-256.
    pub files: BTreeMap<String, String>,
}

pub fn write_instances<W: Write>(mut writer: W, instances: &[EvalInstance]) -> Result<(), FormatError> {
    for inst in instances {
        let remainder = serde_json::to_string(&inst.remainder)?;
        writeln!(
            writer,
            "{}\t{}\t{}\t{}",
            inst.bio_id, inst.split, inst.target, remainder
        )?;
    }
    Ok(())
}

/// Reads instances; `draw` is the occurrence index of each bio id in file order.
pub fn read_instances<R: BufRead>(reader: R) -> Result<Vec<EvalInstance>, FormatError> {
    let mut draws: std::collections::HashMap<String, usize> = Default::default();
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        let [bio_id, split, target, remainder] = fields[..] else {
            return Err(FormatError::at(
                lineno + 1,
                "expected bio_id, split, target, remainder",
            ));
        };
        let split: SplitKind = split
            .parse()
            .map_err(|e: String| FormatError::at(lineno + 1, e))?;
        let remainder: Vec<String> =
            serde_json::from_str(remainder).map_err(|e| FormatError::at(lineno + 1, e.to_string()))?;
        let draw = draws.entry(bio_id.to_string()).or_default();
        out.push(EvalInstance {
            bio_id: bio_id.to_string(),
            draw: *draw,
            remainder,
            target: target.to_string(),
            split,
        });
        *draw += 1;
    }
    Ok(out)
}

pub fn read_instances_file(path: &Path) -> Result<Vec<EvalInstance>, FormatError> {
    read_instances(BufReader::new(File::open(path)?))
}

pub fn read_vocabulary_file(path: &Path) -> Result<Vocabulary, FormatError> {
    Vocabulary::read_tsv(BufReader::new(File::open(path)?))
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<(), FormatError>,
) -> Result<String, FormatError> {
    let path = dir.join(name);
    let mut writer = BufWriter::new(File::create(&path)?);
    body(&mut writer)?;
    writer.flush()?;
    drop(writer);
    Ok(file_sha256(&path)?)
}

/// Persists a split and its manifest into `dir`, creating it if needed.
pub fn write_split(
    dir: &Path,
    split: &SplitCorpus,
    config: &SplitConfig,
    config_hash: &str,
    input_hash: &str,
) -> Result<CorpusManifest, FormatError> {
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    files.insert(
        VOCAB_FILE.to_string(),
        write_file(dir, VOCAB_FILE, |w| split.vocabulary.write_tsv(w))?,
    );
    files.insert(
        TRAIN_FILE.to_string(),
        write_file(dir, TRAIN_FILE, |w| write_bios(w, &split.train))?,
    );
    files.insert(
        TEST_FILE.to_string(),
        write_file(dir, TEST_FILE, |w| write_bios(w, &split.test))?,
    );
    files.insert(
        MAIN_INSTANCES_FILE.to_string(),
        write_file(dir, MAIN_INSTANCES_FILE, |w| write_instances(w, &split.test_main))?,
    );
    files.insert(
        GENERAL_INSTANCES_FILE.to_string(),
        write_file(dir, GENERAL_INSTANCES_FILE, |w| {
            write_instances(w, &split.test_general)
        })?,
    );
    let manifest = CorpusManifest {
        config: *config,
        config_hash: config_hash.to_string(),
        input_hash: input_hash.to_string(),
        stats: split.stats.clone(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(manifest)
}

pub fn read_split(dir: &Path) -> Result<(SplitCorpus, CorpusManifest), FormatError> {
    let manifest: CorpusManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let vocabulary = read_vocabulary_file(&dir.join(VOCAB_FILE))?;
    let train = read_bios(BufReader::new(File::open(dir.join(TRAIN_FILE))?))?;
    let test = read_bios(BufReader::new(File::open(dir.join(TEST_FILE))?))?;
    let test_main = read_instances_file(&dir.join(MAIN_INSTANCES_FILE))?;
    let test_general = read_instances_file(&dir.join(GENERAL_INSTANCES_FILE))?;
    let split = SplitCorpus {
        train,
        test,
        test_main,
        test_general,
        vocabulary,
        stats: manifest.stats.clone(),
    };
    Ok((split, manifest))
}
