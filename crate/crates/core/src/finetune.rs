//! Contrastive triplets, regression pairs and masked-identity records for
//! encoder fine-tuning.
//!
//! Files are tab-separated without a header. Text fields are JSON string
//! literals so tabs and newlines inside phrases survive:
//!
//! | file            | columns                                       |
//! |-----------------|-----------------------------------------------|
//! | `triplets.tsv`  | anchor_text, positive, negative, bio_id       |
//! | `pairs.tsv`     | anchor_text, other_text, label (1.0 or 0.0)   |
//! | `masked.tsv`    | sentence, span_start, span_end, masked_identity |
//!
//! Span offsets count Unicode scalar values, end exclusive.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CooccurrenceIndex, Vocabulary};
use crate::extraction::Bio;
use crate::io::{file_sha256, FormatError};

pub const TRIPLETS_FILE: &str = "triplets.tsv";
pub const PAIRS_FILE: &str = "pairs.tsv";
pub const MASKED_FILE: &str = "masked.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

const SEPARATOR: &str = ", ";
const REJECTION_TRIES: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum FinetuneError {
    #[error("bio {bio_id}: {positive:?} co-occurs with every other vocabulary identity")]
    NoValidNegative { bio_id: String, positive: String },
    #[error("bio {bio_id}: needs {needed} identities, has {found}")]
    TooFewIdentities {
        bio_id: String,
        needed: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub bio_id: String,
    pub anchor: Vec<String>,
    pub positive: String,
    pub negative: String,
}

impl Triplet {
    pub fn anchor_text(&self) -> String {
        self.anchor.join(SEPARATOR)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedBio {
    pub sentence: String,
    pub span_start: usize,
    pub span_end: usize,
    pub masked_identity: String,
}

impl MaskedBio {
    /// Sentence with the span replaced by `replacement`.
    pub fn replace_span(&self, replacement: &str) -> String {
        let chars: Vec<char> = self.sentence.chars().collect();
        let mut out: String = chars[..self.span_start].iter().collect();
        out.push_str(replacement);
        out.extend(&chars[self.span_end..]);
        out
    }

    pub fn span_text(&self) -> String {
        self.sentence
            .chars()
            .skip(self.span_start)
            .take(self.span_end - self.span_start)
            .collect()
    }
}

/// Picks a uniform positive among the bio's vocabulary identities, anchors
/// on the rest of the bio and draws a uniform negative that never co-occurs
/// with the positive.
pub fn make_triplet<R: Rng>(
    bio: &Bio,
    index: &CooccurrenceIndex,
    vocabulary: &Vocabulary,
    rng: &mut R,
) -> Result<Triplet, FinetuneError> {
    let bio = bio.dedup();
    let ids = vocabulary.ids_of(&bio);
    if ids.len() < 2 {
        return Err(FinetuneError::TooFewIdentities {
            bio_id: bio.id.clone(),
            needed: 2,
            found: ids.len(),
        });
    }
    let positive = ids[rng.gen_range(0..ids.len())];
    let positive_phrase = vocabulary.phrase(positive).to_string();
    let anchor: Vec<String> = bio
        .identities
        .iter()
        .filter(|p| **p != positive_phrase)
        .cloned()
        .collect();
    let anchor_ids: Vec<u32> = anchor.iter().filter_map(|p| vocabulary.id(p)).collect();
    let valid = |v: u32| v != positive && !index.co_occur(v, positive) && !anchor_ids.contains(&v);

    let n = vocabulary.len() as u32;
    let mut negative = None;
    for _ in 0..REJECTION_TRIES {
        let v = rng.gen_range(0..n);
        if valid(v) {
            negative = Some(v);
            break;
        }
    }
    let negative = match negative {
        Some(v) => v,
        None => {
            let candidates: Vec<u32> = (0..n).filter(|&v| valid(v)).collect();
            if candidates.is_empty() {
                return Err(FinetuneError::NoValidNegative {
                    bio_id: bio.id.clone(),
                    positive: positive_phrase,
                });
            }
            candidates[rng.gen_range(0..candidates.len())]
        }
    };
    Ok(Triplet {
        bio_id: bio.id.clone(),
        anchor,
        positive: positive_phrase,
        negative: vocabulary.phrase(negative).to_string(),
    })
}

/// Masks one uniformly chosen identity of the comma-joined bio.
pub fn make_masked<R: Rng>(bio: &Bio, rng: &mut R) -> Result<MaskedBio, FinetuneError> {
    let bio = bio.dedup();
    let n = bio.identities.len();
    if n < 2 {
        return Err(FinetuneError::TooFewIdentities {
            bio_id: bio.id.clone(),
            needed: 2,
            found: n,
        });
    }
    let chosen = rng.gen_range(0..n);
    let sep = SEPARATOR.chars().count();
    let span_start: usize = bio.identities[..chosen]
        .iter()
        .map(|p| p.chars().count() + sep)
        .sum();
    let masked_identity = bio.identities[chosen].clone();
    Ok(MaskedBio {
        sentence: bio.render(),
        span_start,
        span_end: span_start + masked_identity.chars().count(),
        masked_identity,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub no_valid_negative: usize,
    pub too_few_vocabulary_identities: usize,
    pub too_few_identities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneManifest {
    pub seed: u64,
    pub n_input_bios: usize,
    pub n_triplets: usize,
    pub n_pairs: usize,
    pub n_masked: usize,
    pub triplet_skips: SkipCounts,
    pub masked_skips: SkipCounts,
    pub negative_sampling: String,
    pub columns: BTreeMap<String, Vec<String>>,
    pub files: BTreeMap<String, String>,
    /// Hash of the run configuration that produced this export.
    pub config_hash: String,
    /// Hash of the corpus manifest the bios came from.
    pub corpus_hash: String,
}

/// In-memory result of [`build_datasets`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Datasets {
    pub triplets: Vec<Triplet>,
    pub masked: Vec<MaskedBio>,
    pub triplet_skips: SkipCounts,
    pub masked_skips: SkipCounts,
}

/// One triplet and one masked record per bio, each bio with its own random
/// stream so output does not depend on scheduling.
pub fn build_datasets(
    bios: &[Bio],
    index: &CooccurrenceIndex,
    vocabulary: &Vocabulary,
    seed: u64,
) -> Datasets {
    let per_bio: Vec<_> = bios
        .par_iter()
        .enumerate()
        .map(|(i, bio)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let triplet = make_triplet(bio, index, vocabulary, &mut rng);
            let masked = make_masked(bio, &mut rng);
            (triplet, masked)
        })
        .collect();
    let mut out = Datasets::default();
    for (triplet, masked) in per_bio {
        match triplet {
            Ok(t) => out.triplets.push(t),
            Err(FinetuneError::NoValidNegative { .. }) => out.triplet_skips.no_valid_negative += 1,
            Err(FinetuneError::TooFewIdentities { .. }) => {
                out.triplet_skips.too_few_vocabulary_identities += 1
            }
        }
        match masked {
            Ok(m) => out.masked.push(m),
            Err(_) => out.masked_skips.too_few_identities += 1,
        }
    }
    out
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn unquote(field: &str, line: usize) -> Result<String, FormatError> {
    serde_json::from_str(field).map_err(|_| FormatError::at(line, format!("bad JSON string {field:?}")))
}

pub fn write_triplets<W: Write>(mut w: W, triplets: &[Triplet]) -> Result<(), FormatError> {
    for t in triplets {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            quote(&t.anchor_text()),
            quote(&t.positive),
            quote(&t.negative),
            quote(&t.bio_id)
        )?;
    }
    Ok(())
}

/// Two rows per triplet: anchor with positive (1.0), anchor with negative (0.0).
pub fn write_pairs<W: Write>(mut w: W, triplets: &[Triplet]) -> Result<(), FormatError> {
    for t in triplets {
        let anchor = quote(&t.anchor_text());
        writeln!(w, "{anchor}\t{}\t1.0", quote(&t.positive))?;
        writeln!(w, "{anchor}\t{}\t0.0", quote(&t.negative))?;
    }
    Ok(())
}

pub fn write_masked<W: Write>(mut w: W, masked: &[MaskedBio]) -> Result<(), FormatError> {
    for m in masked {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            quote(&m.sentence),
            m.span_start,
            m.span_end,
            quote(&m.masked_identity)
        )?;
    }
    Ok(())
}

fn fields(line: &str, n: usize, expected: usize) -> Result<Vec<&str>, FormatError> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != expected {
        return Err(FormatError::at(
            n,
            format!("expected {expected} fields, found {}", f.len()),
        ));
    }
    Ok(f)
}

/// Triplet rows as `(anchor_text, positive, negative, bio_id)`.
pub fn read_triplets<R: BufRead>(r: R) -> Result<Vec<(String, String, String, String)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let f = fields(&line, i + 1, 4)?;
        out.push((
            unquote(f[0], i + 1)?,
            unquote(f[1], i + 1)?,
            unquote(f[2], i + 1)?,
            unquote(f[3], i + 1)?,
        ));
    }
    Ok(out)
}

/// Pair rows as `(anchor_text, other_text, label)`.
pub fn read_pairs<R: BufRead>(r: R) -> Result<Vec<(String, String, f64)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let f = fields(&line, i + 1, 3)?;
        let label = match f[2] {
            "1.0" => 1.0,
            "0.0" => 0.0,
            other => {
                return Err(FormatError::at(
                    i + 1,
                    format!("label must be 1.0 or 0.0, got {other:?}"),
                ))
            }
        };
        out.push((unquote(f[0], i + 1)?, unquote(f[1], i + 1)?, label));
    }
    Ok(out)
}

pub fn read_masked<R: BufRead>(r: R) -> Result<Vec<MaskedBio>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let f = fields(&line, n, 4)?;
        let offset = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| FormatError::at(n, format!("bad offset {s:?}")))
        };
        let m = MaskedBio {
            sentence: unquote(f[0], n)?,
            span_start: offset(f[1])?,
            span_end: offset(f[2])?,
            masked_identity: unquote(f[3], n)?,
        };
        let len = m.sentence.chars().count();
        if m.span_start > m.span_end || m.span_end > len || m.span_text() != m.masked_identity {
            return Err(FormatError::at(n, "span does not cover the masked identity"));
        }
        out.push(m);
    }
    Ok(out)
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> Result<(), FormatError>,
) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Builds and writes all three datasets plus `manifest.json` into `outdir`.
pub fn export_datasets(
    bios: &[Bio],
    index: &CooccurrenceIndex,
    vocabulary: &Vocabulary,
    seed: u64,
    outdir: &Path,
    config_hash: &str,
    corpus_hash: &str,
) -> Result<FinetuneManifest, FormatError> {
    fs::create_dir_all(outdir)?;
    let data = build_datasets(bios, index, vocabulary, seed);
    write_file(&outdir.join(TRIPLETS_FILE), |w| write_triplets(w, &data.triplets))?;
    write_file(&outdir.join(PAIRS_FILE), |w| write_pairs(w, &data.triplets))?;
    write_file(&outdir.join(MASKED_FILE), |w| write_masked(w, &data.masked))?;

    let mut files = BTreeMap::new();
    for name in [TRIPLETS_FILE, PAIRS_FILE, MASKED_FILE] {
        files.insert(name.to_string(), file_sha256(&outdir.join(name))?);
    }
    let cols = |c: &[&str]| c.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let columns = BTreeMap::from([
        (
            TRIPLETS_FILE.to_string(),
            cols(&["anchor_text", "positive", "negative", "bio_id"]),
        ),
        (
            PAIRS_FILE.to_string(),
            cols(&["anchor_text", "other_text", "label"]),
        ),
        (
            MASKED_FILE.to_string(),
            cols(&["sentence", "span_start", "span_end", "masked_identity"]),
        ),
    ]);
    let manifest = FinetuneManifest {
        seed,
        n_input_bios: bios.len(),
        n_triplets: data.triplets.len(),
        n_pairs: 2 * data.triplets.len(),
        n_masked: data.masked.len(),
        triplet_skips: data.triplet_skips,
        masked_skips: data.masked_skips,
        negative_sampling: "uniform over vocabulary identities never co-occurring with the positive".into(),
        columns,
        files,
        config_hash: config_hash.to_string(),
        corpus_hash: corpus_hash.to_string(),
    };
    fs::write(
        outdir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Buffered reader over `path`.
pub fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    Ok(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_cooccurrence, build_vocabulary};
    use crate::extraction::Source;
    use proptest::prelude::*;

    fn bio(id: &str, ids: &[&str]) -> Bio {
        Bio::new(id, Source::Synthetic, ids.iter().map(|s| s.to_string()).collect())
    }

    fn setup() -> (Vec<Bio>, Vocabulary, CooccurrenceIndex) {
        let bios = vec![
            bio(
                "1",
                &["assistant professor", "bernie supporter", "#blacklivesmatter"],
            ),
            bio("2", &["wife", "runner"]),
            bio("3", &["bernie supporter", "wife"]),
            bio("4", &["gamer", "coder"]),
        ];
        let vocab = build_vocabulary(&bios, 1).unwrap();
        let index = build_cooccurrence(&bios, &vocab);
        (bios, vocab, index)
    }

    #[test]
    fn triplet_roles() {
        let (bios, vocab, index) = setup();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = make_triplet(&bios[0], &index, &vocab, &mut rng).unwrap();
            assert!(!t.anchor.contains(&t.positive));
            assert!(!t.anchor.contains(&t.negative));
            assert_eq!(t.anchor.len(), 2);
            let (p, n) = (vocab.id(&t.positive).unwrap(), vocab.id(&t.negative).unwrap());
            assert!(!index.co_occur(p, n) && p != n);
            if t.positive == "bernie supporter" {
                assert_eq!(t.anchor, ["assistant professor", "#blacklivesmatter"]);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = make_triplet(&bios[1], &index, &vocab, &mut rng).unwrap();
        assert_eq!(t.anchor.len(), 1);
    }

    #[test]
    fn no_valid_negative() {
        let bios = vec![bio("1", &["a", "b", "c"])];
        let vocab = build_vocabulary(&bios, 1).unwrap();
        let index = build_cooccurrence(&bios, &vocab);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            make_triplet(&bios[0], &index, &vocab, &mut rng),
            Err(FinetuneError::NoValidNegative { .. })
        ));
        let lone = bio("2", &["a", "zzz"]);
        assert!(matches!(
            make_triplet(&lone, &index, &vocab, &mut rng),
            Err(FinetuneError::TooFewIdentities { found: 1, .. })
        ));
    }

    #[test]
    fn masked_construction() {
        let b = bio("1", &["wife", "runner"]);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = make_masked(&b, &mut rng).unwrap();
            assert_eq!(m.sentence, "wife, runner");
            if m.masked_identity == "runner" {
                assert_eq!((m.span_start, m.span_end), (6, 12));
            } else {
                assert_eq!((m.span_start, m.span_end), (0, 4));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_masked(&bio("x", &["solo"]), &mut rng).is_err());
    }

    #[test]
    fn export_files_round_trip() {
        let (bios, vocab, index) = setup();
        let dir = tempfile::tempdir().unwrap();
        let m = export_datasets(&bios, &index, &vocab, 5, dir.path(), "cfg", "corpus").unwrap();
        assert_eq!(m.n_triplets + m.triplet_skips.no_valid_negative, 4);
        assert_eq!(m.n_masked, 4);
        let triplets = read_triplets(open(&dir.path().join(TRIPLETS_FILE)).unwrap()).unwrap();
        let pairs = read_pairs(open(&dir.path().join(PAIRS_FILE)).unwrap()).unwrap();
        let masked = read_masked(open(&dir.path().join(MASKED_FILE)).unwrap()).unwrap();
        assert_eq!(triplets.len(), m.n_triplets);
        assert_eq!(pairs.len(), 2 * m.n_triplets);
        assert_eq!(pairs[0].2, 1.0);
        assert_eq!(pairs[1].2, 0.0);
        assert_eq!(pairs[0].0, triplets[0].0);
        assert_eq!(masked.len(), 4);

        let again = tempfile::tempdir().unwrap();
        let m2 = export_datasets(&bios, &index, &vocab, 5, again.path(), "cfg", "corpus").unwrap();
        assert_eq!(m.files, m2.files);
    }

    #[test]
    fn escaped_fields() {
        let t = Triplet {
            bio_id: "b\t1".into(),
            anchor: vec!["say \"hi\"".into()],
            positive: "new\nline".into(),
            negative: "é".into(),
        };
        let mut buf = Vec::new();
        write_triplets(&mut buf, std::slice::from_ref(&t)).unwrap();
        let rows = read_triplets(buf.as_slice()).unwrap();
        assert_eq!(
            rows[0],
            (
                t.anchor_text(),
                t.positive.clone(),
                t.negative.clone(),
                t.bio_id.clone()
            )
        );
    }

    proptest! {
        #[test]
        fn masked_reconstruction(ids in prop::collection::btree_set("[a-zé ]{1,8}", 2..6), seed in any::<u64>()) {
            let ids: Vec<String> = ids.into_iter().collect();
            let b = Bio::new("p", Source::Synthetic, ids.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = make_masked(&b, &mut rng).unwrap();
            prop_assert_eq!(m.replace_span(&m.masked_identity), ids.join(", "));
            prop_assert_eq!(m.span_text(), m.masked_identity.clone());
            let chars: Vec<char> = m.sentence.chars().collect();
            prop_assert!(m.span_start == 0 || chars[m.span_start - 2..m.span_start] == [',', ' ']);
            prop_assert!(m.span_end == chars.len() || chars[m.span_end..m.span_end + 2] == [',', ' ']);
        }
    }
}
