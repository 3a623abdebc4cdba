use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingTable, EncoderKind, ModelDims, NeuralError, PairClassifier};
use crate::corpus::{Vocabulary, PAD};

/// Reads `token v1 … v_d` lines. Vocabulary tokens found in the file take
/// its vectors, the rest (and the overlap vectors) are drawn uniformly from
/// ±0.25 under `seed`; PAD stays zero. A leading `count dim` header line is
/// skipped.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dims: &ModelDims,
    seed: u64,
) -> Result<EmbeddingTable, NeuralError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::random(vocab.len(), dims, &mut rng);
    let reader = BufReader::new(File::open(path)?);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if idx == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let err = |message: String| NeuralError::Embeddings { line: idx + 1, message };
        if fields.len() - 1 != dims.word_dim {
            return Err(err(format!(
                "expected {} values, got {}",
                dims.word_dim,
                fields.len() - 1
            )));
        }
        let Some(row) = vocab.get(fields[0]) else {
            continue;
        };
        if row == PAD {
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| err(format!("`{f}`: {e}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        table.words.row_mut(row).copy_from_slice(&values);
    }
    Ok(table)
}

/// Writes every non-PAD word vector in the text format read by
/// [`load_embeddings`].
pub fn save_embeddings(table: &EmbeddingTable, vocab: &Vocabulary, path: &Path) -> Result<(), NeuralError> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, tok) in vocab.tokens().iter().enumerate() {
        if i == PAD {
            continue;
        }
        write!(w, "{tok}")?;
        for v in table.words.row(i) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

const MAGIC: &[u8; 8] = b"TKDNNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

fn dims_array(d: &ModelDims) -> [u64; 7] {
    [d.word_dim, d.overlap_dim, d.window, d.filters, d.lstm_hidden, d.mlp_hidden, d.max_len].map(|v| v as u64)
}

/// Binary checkpoint: magic, version, encoder kind, dimensions, vocabulary
/// size and hash, then every tensor (shape + little-endian values) in
/// declaration order.
pub fn save_checkpoint(model: &PairClassifier, vocab: &Vocabulary, path: &Path) -> Result<(), NeuralError> {
    if vocab.len() != model.embeddings.vocab_size() {
        return Err(NeuralError::Checkpoint(format!(
            "vocabulary has {} entries but the model has {}",
            vocab.len(),
            model.embeddings.vocab_size()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[match model.kind {
        EncoderKind::Cnn => 0u8,
        EncoderKind::Lstm => 1u8,
    }])?;
    for v in dims_array(&model.dims) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(vocab.len() as u64).to_le_bytes())?;
    w.write_all(&vocab.content_hash())?;
    let tensors = model.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &s in t.shape() {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], NeuralError> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|e| NeuralError::Checkpoint(format!("truncated file: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, NeuralError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
}

/// Loads a checkpoint; with `vocab`, also checks that it is the vocabulary
/// the model was trained with.
pub fn load_checkpoint(path: &Path, vocab: Option<&Vocabulary>) -> Result<PairClassifier, NeuralError> {
    let bad = |m: &str| NeuralError::Checkpoint(m.to_owned());
    let mut r = Reader(BufReader::new(File::open(path)?));
    if &r.bytes::<8>()? != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = match r.bytes::<1>()?[0] {
        0 => EncoderKind::Cnn,
        1 => EncoderKind::Lstm,
        _ => return Err(bad("unknown encoder kind")),
    };
    let mut d = [0usize; 7];
    for v in d.iter_mut() {
        *v = r.u64()? as usize;
    }
    let dims = ModelDims {
        word_dim: d[0],
        overlap_dim: d[1],
        window: d[2],
        filters: d[3],
        lstm_hidden: d[4],
        mlp_hidden: d[5],
        max_len: d[6],
    };
    dims.validate()?;
    let vocab_size = r.u64()? as usize;
    let hash = r.bytes::<32>()?;
    if let Some(v) = vocab {
        if v.len() != vocab_size || v.content_hash() != hash {
            return Err(bad("checkpoint was trained with a different vocabulary"));
        }
    }
    let mut model = PairClassifier::new(kind, dims, vocab_size, &mut ChaCha8Rng::seed_from_u64(0));
    let count = r.u32()? as usize;
    let mut tensors = model.tensors_mut();
    if count != tensors.len() {
        return Err(bad("tensor count does not match the architecture"));
    }
    for t in tensors.iter_mut() {
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        if shape != t.shape() {
            return Err(NeuralError::Checkpoint(format!(
                "tensor shape {shape:?} does not match expected {:?}",
                t.shape()
            )));
        }
        for v in t.data_mut() {
            *v = f64::from_le_bytes(r.bytes()?);
        }
    }
    Ok(model)
}
