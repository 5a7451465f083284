//! Record streams and weight files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Mutex;

use certsearch_core::agents::{DqnAgent, DqnConfig, QNetwork};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(format!("creating {}", dir.display()), e))?;
    }
    File::create(path).map_err(|e| AppError::io(format!("creating {}", path.display()), e))
}

/// One JSON object per line. Appends are serialized so ensemble workers can
/// share a writer.
pub struct JsonlWriter<W: Write> {
    inner: Mutex<W>,
}

impl JsonlWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(JsonlWriter::new(BufWriter::new(create(path)?)))
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(w: W) -> Self {
        JsonlWriter { inner: Mutex::new(w) }
    }

    pub fn append<T: Serialize>(&self, record: &T) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let mut w = self.inner.lock().expect("writer lock");
        w.write_all(&line).map_err(|e| AppError::io("writing record", e))
    }

    pub fn flush(&self) -> Result<()> {
        self.inner
            .lock()
            .expect("writer lock")
            .flush()
            .map_err(|e| AppError::io("flushing records", e))
    }

    pub fn into_inner(self) -> W {
        self.inner.into_inner().expect("writer lock")
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| AppError::io(format!("opening {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec =
            serde_json::from_str(&line).map_err(|e| AppError::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
        .map_err(|e| AppError::io(format!("writing {}", path.display()), e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<T>, _>>()?;
    Ok(rows)
}

const MAGIC: &[u8; 8] = b"CSQNET\0\0";
pub const WEIGHTS_VERSION: u32 = 1;

/// Where a set of weights came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub n: usize,
    pub budget: u64,
    pub seed: u64,
    pub episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsHeader {
    pub version: u32,
    pub dims: Vec<usize>,
    pub params_per_network: usize,
    pub hyperparams: DqnConfig,
    pub provenance: Provenance,
}

/// Layout: 8-byte magic, u32 LE version, u32 LE header length, JSON header,
/// then the online and target parameters as f64 LE.
pub fn write_weights<W: Write>(agent: &DqnAgent, provenance: Provenance, mut w: W) -> Result<()> {
    let header = WeightsHeader {
        version: WEIGHTS_VERSION,
        dims: agent.online.dims(),
        params_per_network: agent.online.param_count(),
        hyperparams: agent.config,
        provenance,
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| AppError::io("writing weights", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for net in [&agent.online, &agent.target] {
        for v in net.params() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_weights<R: Read>(mut r: R) -> Result<(WeightsHeader, DqnAgent)> {
    let bad = |m: &str| AppError::Format(format!("weights file: {m}"));
    let io = |e| AppError::io("reading weights", e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(io)?;
    let version = u32::from_le_bytes(word);
    if version != WEIGHTS_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    r.read_exact(&mut word).map_err(io)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut json).map_err(io)?;
    let header: WeightsHeader = serde_json::from_slice(&json)?;
    let mut nets = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut params = vec![0f64; header.params_per_network];
        let mut b = [0u8; 8];
        for p in params.iter_mut() {
            r.read_exact(&mut b).map_err(io)?;
            *p = f64::from_le_bytes(b);
        }
        nets.push(QNetwork::from_params(&header.dims, &params)?);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(io)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes"));
    }
    let target = nets.pop().expect("two networks");
    let online = nets.pop().expect("two networks");
    let mut agent = DqnAgent::from_network(online, header.hyperparams);
    agent.target = target;
    Ok((header, agent))
}

pub fn save_weights(path: &Path, agent: &DqnAgent, provenance: Provenance) -> Result<()> {
    write_weights(agent, provenance, BufWriter::new(create(path)?))
}

pub fn load_weights(path: &Path) -> Result<(WeightsHeader, DqnAgent)> {
    let f = File::open(path).map_err(|e| AppError::io(format!("opening {}", path.display()), e))?;
    read_weights(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use certsearch_core::constraints::{candidate_pool, Geometry};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weights_round_trip() {
        let pool = candidate_pool(5, 200, Geometry::Ring, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = DqnAgent::new(&pool, DqnConfig::for_size(5), &mut rng).unwrap();
        agent.target = QNetwork::for_pool(&pool, &mut rng).unwrap();
        let prov = Provenance {
            model: "xx".into(),
            n: 5,
            budget: 200,
            seed: 3,
            episodes: 0,
        };
        let mut buf = Vec::new();
        write_weights(&agent, prov.clone(), &mut buf).unwrap();
        let (header, back) = read_weights(buf.as_slice()).unwrap();
        assert_eq!(header.provenance, prov);
        assert_eq!(back.online.params(), agent.online.params());
        assert_eq!(back.target.params(), agent.target.params());
        assert_eq!(back.config, agent.config);

        buf.push(0);
        assert!(read_weights(buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(read_weights(buf.as_slice()).is_err());
    }

    #[test]
    fn jsonl_lines_are_whole() {
        let w = JsonlWriter::new(Vec::new());
        w.append(&serde_json::json!({"a": 1})).unwrap();
        w.append(&serde_json::json!({"b": [1, 2]})).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text, "{\"a\":1}\n{\"b\":[1,2]}\n");
    }
}
