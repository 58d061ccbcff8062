//! Embedding matrices and their word2vec-style text/binary files.
//!
//! Both formats start with an ASCII header `"<rows> <dim>\n"`. Each row is
//! the phrase with spaces replaced by `_`, then
//!
//! * text: `dim` space-separated decimals and `\n`;
//! * binary: a space, `dim` little-endian `f32`s and `\n`.
//!
//! Output (context) vectors are stored next to the main file with a `.ctx`
//! suffix, provenance with a `.meta.json` suffix.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::io::FormatError;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Text,
    Binary,
}

impl FileFormat {
    /// `.bin` files are binary, anything else text.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => FileFormat::Binary,
            _ => FileFormat::Text,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub corpus_hash: String,
    /// Hyperparameters set from conventions, not from reported values.
    #[serde(default)]
    pub conventional_defaults: Vec<String>,
    /// Mean loss per positive example, one entry per epoch.
    #[serde(default)]
    pub epoch_losses: Vec<f64>,
    /// Hash of the pipeline run configuration, when trained by a run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config_hash: Option<String>,
}

/// File key of a phrase: spaces become underscores.
pub fn file_key(phrase: &str) -> String {
    phrase.replace(' ', "_")
}

/// Row-major `rows × dim` matrix with one phrase per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    pub phrases: Vec<String>,
    pub dim: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn new(phrases: Vec<String>, dim: usize, data: Vec<F>) -> Result<Self, FormatError> {
        if data.len() != phrases.len() * dim {
            return Err(FormatError::Invalid(format!(
                "{} values for {} rows of dim {dim}",
                data.len(),
                phrases.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::Invalid(format!(
                "non-finite value in row {:?}",
                phrases[pos / dim.max(1)]
            )));
        }
        Ok(Matrix { phrases, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.phrases.len()
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn write<W: Write>(&self, mut w: W, format: FileFormat) -> Result<(), FormatError> {
        writeln!(w, "{} {}", self.rows(), self.dim)?;
        for (i, phrase) in self.phrases.iter().enumerate() {
            let key = file_key(phrase);
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(FormatError::Invalid(format!("phrase {phrase:?} has no file key")));
            }
            w.write_all(key.as_bytes())?;
            match format {
                FileFormat::Text => {
                    for v in self.row(i) {
                        write!(w, " {v}")?;
                    }
                }
                FileFormat::Binary => {
                    w.write_all(b" ")?;
                    for v in self.row(i) {
                        let x = v.to_f32().expect("float narrowing");
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads either format. Phrases come back with underscores as spaces.
    pub fn read<R: BufRead>(mut r: R, format: FileFormat) -> Result<Self, FormatError> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let (rows, dim) = parse_header(&header)?;
        let mut phrases = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(rows * dim);
        match format {
            FileFormat::Text => {
                let mut line = String::new();
                for row in 0..rows {
                    line.clear();
                    if r.read_line(&mut line)? == 0 {
                        return Err(FormatError::at(row + 2, "unexpected end of file"));
                    }
                    let mut fields = line.split_ascii_whitespace();
                    let key = fields
                        .next()
                        .ok_or_else(|| FormatError::at(row + 2, "empty row"))?;
                    phrases.push(key.replace('_', " "));
                    let before = data.len();
                    for field in fields {
                        let v: F = field
                            .parse()
                            .map_err(|_| FormatError::at(row + 2, format!("bad value {field:?}")))?;
                        data.push(v);
                    }
                    if data.len() - before != dim {
                        return Err(FormatError::at(
                            row + 2,
                            format!("expected {dim} values, found {}", data.len() - before),
                        ));
                    }
                }
            }
            FileFormat::Binary => {
                let mut buf = vec![0u8; 4 * dim];
                for row in 0..rows {
                    let mut key = Vec::new();
                    r.read_until(b' ', &mut key)?;
                    if key.pop() != Some(b' ') {
                        return Err(FormatError::Invalid(format!("row {row}: truncated key")));
                    }
                    // rows written without a trailing newline are accepted too
                    let key = String::from_utf8(key)
                        .map_err(|_| FormatError::Invalid(format!("row {row}: key not UTF-8")))?;
                    phrases.push(key.trim_start_matches('\n').replace('_', " "));
                    r.read_exact(&mut buf)?;
                    data.extend(
                        buf.chunks_exact(4)
                            .map(|b| F::from_f64_lossy(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)),
                    );
                }
            }
        }
        Matrix::new(phrases, dim, data)
    }

    pub fn read_path(path: &Path) -> Result<Self, FormatError> {
        Self::read(BufReader::new(File::open(path)?), FileFormat::from_path(path))
    }

    pub fn write_path(&self, path: &Path) -> Result<(), FormatError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w, FileFormat::from_path(path))?;
        w.flush()?;
        Ok(())
    }

    /// Phrase → row lookup keyed by [`file_key`].
    pub fn key_index(&self) -> Result<HashMap<String, usize>, FormatError> {
        let mut index = HashMap::with_capacity(self.rows());
        for (i, phrase) in self.phrases.iter().enumerate() {
            if index.insert(file_key(phrase), i).is_some() {
                return Err(FormatError::Invalid(format!("duplicate row {phrase:?}")));
            }
        }
        Ok(index)
    }
}

pub(crate) fn parse_header(header: &str) -> Result<(usize, usize), FormatError> {
    let mut parts = header.split_ascii_whitespace();
    let parse = |s: Option<&str>| -> Result<usize, FormatError> {
        s.and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::at(1, format!("bad header {:?}", header.trim_end())))
    };
    let rows = parse(parts.next())?;
    let dim = parse(parts.next())?;
    if parts.next().is_some() {
        return Err(FormatError::at(1, "header must be \"rows dim\""));
    }
    Ok((rows, dim))
}

/// Learned input and output vectors over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<F> {
    pub(crate) phrases: Vec<String>,
    pub(crate) dim: usize,
    pub(crate) input: Vec<F>,
    pub(crate) output: Vec<F>,
    pub provenance: Provenance,
}

impl<F: Scalar> EmbeddingTable<F> {
    pub fn new(
        phrases: Vec<String>,
        dim: usize,
        input: Vec<F>,
        output: Vec<F>,
        provenance: Provenance,
    ) -> Result<Self, FormatError> {
        let n = phrases.len() * dim;
        if input.len() != n || output.len() != n {
            return Err(FormatError::Invalid(
                "matrix shape does not match vocabulary".into(),
            ));
        }
        if input.iter().chain(&output).any(|v| !v.is_finite()) {
            return Err(FormatError::Invalid("non-finite embedding value".into()));
        }
        Ok(EmbeddingTable {
            phrases,
            dim,
            input,
            output,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn input_vector(&self, id: u32) -> &[F] {
        let id = id as usize;
        &self.input[id * self.dim..(id + 1) * self.dim]
    }

    pub fn output_vector(&self, id: u32) -> &[F] {
        let id = id as usize;
        &self.output[id * self.dim..(id + 1) * self.dim]
    }

    pub fn input_vector_mut(&mut self, id: u32) -> &mut [F] {
        let id = id as usize;
        &mut self.input[id * self.dim..(id + 1) * self.dim]
    }

    pub fn output_vector_mut(&mut self, id: u32) -> &mut [F] {
        let id = id as usize;
        &mut self.output[id * self.dim..(id + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|v| v.is_finite())
    }

    pub fn input_matrix(&self) -> Matrix<F> {
        Matrix {
            phrases: self.phrases.clone(),
            dim: self.dim,
            data: self.input.clone(),
        }
    }

    pub fn output_matrix(&self) -> Matrix<F> {
        Matrix {
            phrases: self.phrases.clone(),
            dim: self.dim,
            data: self.output.clone(),
        }
    }

    /// Writes `path`, `path.ctx` and `path.meta.json`.
    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        self.input_matrix().write_path(path)?;
        let format = FileFormat::from_path(path);
        let mut w = BufWriter::new(File::create(sidecar(path, "ctx"))?);
        self.output_matrix().write(&mut w, format)?;
        w.flush()?;
        let meta = serde_json::to_string_pretty(&self.provenance)?;
        fs::write(sidecar(path, "meta.json"), meta + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let format = FileFormat::from_path(path);
        let input = Matrix::<F>::read_path(path)?;
        let output = Matrix::<F>::read(BufReader::new(File::open(sidecar(path, "ctx"))?), format)?;
        if output.phrases != input.phrases || output.dim != input.dim {
            return Err(FormatError::Invalid("context file does not match vectors".into()));
        }
        let provenance: Provenance = serde_json::from_str(&fs::read_to_string(sidecar(path, "meta.json"))?)?;
        EmbeddingTable::new(input.phrases, input.dim, input.data, output.data, provenance)
    }
}

/// `path` with an extra suffix: `vec.txt` → `vec.txt.ctx`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix() -> Matrix<f32> {
        Matrix::new(
            vec!["proud mom".into(), "she/her".into()],
            3,
            vec![0.1, -2.5, 3.0e-8, 1.0, 0.0, -0.333_333_34],
        )
        .unwrap()
    }

    #[test]
    fn text_layout() {
        let mut buf = Vec::new();
        matrix().write(&mut buf, FileFormat::Text).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "2 3\nproud_mom 0.1 -2.5 0.00000003\nshe/her 1 0 -0.33333334\n"
        );
    }

    #[test]
    fn binary_layout() {
        let mut buf = Vec::new();
        matrix().write(&mut buf, FileFormat::Binary).unwrap();
        assert!(buf.starts_with(b"2 3\nproud_mom "));
        assert_eq!(buf.len(), 4 + 10 + 12 + 1 + 8 + 12 + 1);
        assert_eq!(
            Matrix::<f32>::read(&buf[..], FileFormat::Binary).unwrap(),
            matrix()
        );
    }

    #[test]
    fn rejects_malformed() {
        assert!(Matrix::<f32>::read("2 3\na 1 2 3\n".as_bytes(), FileFormat::Text).is_err());
        assert!(Matrix::<f32>::read("1 3\na 1 2\n".as_bytes(), FileFormat::Text).is_err());
        assert!(Matrix::<f32>::read("1 2\na 1 NaN\n".as_bytes(), FileFormat::Text).is_err());
        assert!(Matrix::<f32>::read("x 2\n".as_bytes(), FileFormat::Text).is_err());
        let dup = Matrix::<f32>::new(vec!["a b".into(), "a_b".into()], 1, vec![0.0, 1.0]).unwrap();
        assert!(dup.key_index().is_err());
    }

    #[test]
    fn table_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let table = EmbeddingTable::<f64>::new(
            vec!["a".into(), "b c".into()],
            2,
            vec![0.5, -0.25, 1e-300, 3.0],
            vec![0.0, 0.0, 1.0, -1.0],
            Provenance {
                config_hash: "x".into(),
                corpus_hash: "y".into(),
                conventional_defaults: vec!["learning_rate".into()],
                epoch_losses: vec![2.0, 1.5],
                run_config_hash: Some("z".into()),
            },
        )
        .unwrap();
        let path = dir.path().join("vec.txt");
        table.save(&path).unwrap();
        assert!(sidecar(&path, "ctx").exists());
        assert_eq!(EmbeddingTable::<f64>::load(&path).unwrap(), table);
    }

    proptest! {
        #[test]
        fn text_roundtrip_is_exact(values in proptest::collection::vec(-1e6f32..1e6, 6)) {
            let m = Matrix::new(vec!["x".into(), "y z".into()], 3, values).unwrap();
            let mut buf = Vec::new();
            m.write(&mut buf, FileFormat::Text).unwrap();
            prop_assert_eq!(Matrix::<f32>::read(&buf[..], FileFormat::Text).unwrap(), m);
        }
    }
}
