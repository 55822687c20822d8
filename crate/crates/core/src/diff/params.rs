use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

/// A trainable tensor together with its gradient accumulator and Adam state.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub moment1: Tensor,
    pub moment2: Tensor,
    pub step: u64,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: Tensor::zeros(r, c),
            moment1: Tensor::zeros(r, c),
            moment2: Tensor::zeros(r, c),
            step: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Named collection of parameters. Insertion order is the canonical order for
/// checkpoints and optimizer sweeps, so runs stay reproducible.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<(String, Param)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name:?}"
        );
        let id = ParamId(self.entries.len());
        self.index.insert(name.to_string(), id.0);
        self.entries.push((name.to_string(), Param::new(value)));
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.entries.iter_mut() {
            p.grad.fill(0.0);
        }
    }
}

/// Draw an `rows x cols` tensor with i.i.d. `N(mean, std^2)` entries.
///
/// Uses Box-Muller over the seeded stream so the draw is reproducible
/// independent of any distribution crate's internals.
pub fn gaussian_tensor(
    rows: usize,
    cols: usize,
    mean: f64,
    std: f64,
    rng: &mut ChaCha8Rng,
) -> Tensor {
    assert!(
        rows > 0 && cols > 0,
        "gaussian_tensor needs a non-empty shape"
    );
    let n = rows * cols;
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        // u1 in (0, 1] avoids ln(0).
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        data.push(mean + std * r * theta.cos());
        if data.len() < n {
            data.push(mean + std * r * theta.sin());
        }
    }
    Tensor::from_vec(rows, cols, data)
}

pub fn init_gaussian(
    store: &mut ParamStore,
    name: &str,
    rows: usize,
    cols: usize,
    mean: f64,
    std: f64,
    rng: &mut ChaCha8Rng,
) -> ParamId {
    store.add(name, gaussian_tensor(rows, cols, mean, std, rng))
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Format(String),
}

const CHECKPOINT_MAGIC: &str = "RNMSR-CKPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Write a checkpoint: magic header, free-form metadata lines, global step,
/// then one `param` section per tensor with full round-trip float formatting.
pub fn write_checkpoint<W: Write>(
    w: W,
    store: &ParamStore,
    step: u64,
    meta: &[(String, String)],
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{} v{}", CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    for (k, v) in meta {
        assert!(
            !k.contains(char::is_whitespace),
            "meta key {k:?} has spaces"
        );
        writeln!(w, "meta {} {}", k, v)?;
    }
    writeln!(w, "step {}", step)?;
    for (name, p) in store.iter() {
        let (r, c) = p.value.shape();
        writeln!(w, "param {} {} {}", name, r, c)?;
        for row in 0..r {
            let line: Vec<String> = p.value.row(row).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub step: u64,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint, CheckpointError> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| CheckpointError::Format("empty checkpoint".into()))??;
    let expected = format!("{} v{}", CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    if header != expected {
        return Err(CheckpointError::Format(format!(
            "bad header {header:?}, expected {expected:?}"
        )));
    }
    let mut meta = Vec::new();
    let mut step = None;
    let mut tensors = Vec::new();
    while let Some(line) = lines.next() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ' ');
        match parts.next() {
            Some("meta") => {
                let rest = parts
                    .next()
                    .ok_or_else(|| CheckpointError::Format("bare meta line".into()))?;
                let (k, v) = rest
                    .split_once(' ')
                    .ok_or_else(|| CheckpointError::Format("meta line missing value".into()))?;
                meta.push((k.to_string(), v.to_string()));
            }
            Some("step") => {
                let rest = parts
                    .next()
                    .ok_or_else(|| CheckpointError::Format("bare step line".into()))?;
                step = Some(
                    rest.trim()
                        .parse::<u64>()
                        .map_err(|e| CheckpointError::Format(format!("bad step {rest:?}: {e}")))?,
                );
            }
            Some("param") => {
                let rest = parts
                    .next()
                    .ok_or_else(|| CheckpointError::Format("bare param line".into()))?;
                let fields: Vec<&str> = rest.split(' ').collect();
                if fields.len() != 3 {
                    return Err(CheckpointError::Format(format!(
                        "param line needs `name rows cols`, got {rest:?}"
                    )));
                }
                let name = fields[0].to_string();
                let rows: usize = fields[1]
                    .parse()
                    .map_err(|e| CheckpointError::Format(format!("bad rows: {e}")))?;
                let cols: usize = fields[2]
                    .parse()
                    .map_err(|e| CheckpointError::Format(format!("bad cols: {e}")))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let row_line = lines.next().ok_or_else(|| {
                        CheckpointError::Format(format!("truncated tensor {name:?}"))
                    })??;
                    for tok in row_line.split(' ') {
                        let v: f64 = tok.parse().map_err(|e| {
                            CheckpointError::Format(format!("bad float {tok:?} in {name:?}: {e}"))
                        })?;
                        data.push(v);
                    }
                }
                if data.len() != rows * cols {
                    return Err(CheckpointError::Format(format!(
                        "tensor {name:?}: expected {} values, got {}",
                        rows * cols,
                        data.len()
                    )));
                }
                tensors.push((name, Tensor::from_vec(rows, cols, data)));
            }
            other => {
                return Err(CheckpointError::Format(format!(
                    "unknown checkpoint directive {other:?}"
                )));
            }
        }
    }
    Ok(Checkpoint {
        meta,
        step: step.ok_or_else(|| CheckpointError::Format("missing step line".into()))?,
        tensors,
    })
}

pub fn write_checkpoint_file(
    path: &Path,
    store: &ParamStore,
    step: u64,
    meta: &[(String, String)],
) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(file, store, step, meta)
}

pub fn read_checkpoint_file(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gaussian_is_deterministic_per_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let ta = gaussian_tensor(4, 5, 0.0, 0.1, &mut a);
        let tb = gaussian_tensor(4, 5, 0.0, 0.1, &mut b);
        assert_eq!(ta.data(), tb.data());
    }

    #[test]
    fn gaussian_sample_statistics() {
        // Sample moments of a 10_000-element draw: mean within 0.005 of 0 and
        // std within 0.01 of 0.1.
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let t = gaussian_tensor(1, 10_000, 0.0, 0.1, &mut rng);
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t
            .data()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 0.005, "sample mean {mean} too far from 0");
        let std = var.sqrt();
        assert!(
            (std - 0.1).abs() < 0.01,
            "sample std {std} too far from 0.1"
        );
    }

    #[test]
    fn gaussian_zero_std_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = gaussian_tensor(3, 3, 0.0, 0.0, &mut rng);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        init_gaussian(&mut store, "w", 3, 4, 0.0, 0.1, &mut rng);
        init_gaussian(&mut store, "b", 1, 4, 0.0, 0.1, &mut rng);

        let mut buf = Vec::new();
        let meta = vec![("dim".to_string(), "4".to_string())];
        write_checkpoint(&mut buf, &store, 17, &meta).unwrap();
        let ckpt = read_checkpoint(&buf[..]).unwrap();

        assert_eq!(ckpt.step, 17);
        assert_eq!(ckpt.meta_value("dim"), Some("4"));
        assert_eq!(ckpt.tensors.len(), 2);
        for (name, tensor) in &ckpt.tensors {
            let id = store.id_of(name).unwrap();
            assert_eq!(tensor.data(), store.get(id).value.data());
        }
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        let err = read_checkpoint("WRONG v1\nstep 0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CheckpointError::Format(_)));
    }
}
