//! Binary checkpoint files.
//!
//! Layout: a UTF-8 header of `key=value` lines ended by an empty line,
//! followed by tagged sections. Each section is an 8-byte ASCII tag, a
//! little-endian `u64` payload length and the payload. All numbers are
//! little-endian; floating-point values are stored as `f64`.
//!
//! | tag        | payload |
//! |------------|---------|
//! | `WEIGHTS ` | `n_pre u64, n_post u64, n_pre*n_post f64 (row-major), mask flag u8, packed mask bits (LSB first)` |
//! | `THETA   ` | `n u64, n f64` |
//! | `ASSIGN  ` | `n_neurons u64, n_classes u64, labels u32 (u32::MAX = none), proportions f64, mean_rates f64` |
//! | `NGRAM   ` | `n u64, n_classes u64, entries u64, per entry: n u32 keys then n_classes u64 votes` |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::plasticity::Connection;
use crate::readout::{LabelAssignment, NgramTable};
use crate::scalar::Scalar;

pub const MAGIC: &str = "lmsnn-checkpoint 1";

const TAG_WEIGHTS: &[u8; 8] = b"WEIGHTS ";
const TAG_THETA: &[u8; 8] = b"THETA   ";
const TAG_ASSIGN: &[u8; 8] = b"ASSIGN  ";
const TAG_NGRAM: &[u8; 8] = b"NGRAM   ";

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSection {
    pub n_pre: usize,
    pub n_post: usize,
    pub weights: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

impl WeightSection {
    pub fn from_connection<F: Scalar>(c: &Connection<F>) -> Self {
        WeightSection {
            n_pre: c.n_pre(),
            n_post: c.n_post(),
            weights: c.weights().iter().map(|w| w.to_f64_lossy()).collect(),
            mask: c.mask().map(<[bool]>::to_vec),
        }
    }

    /// Installs mask and weights into `c`, which must have matching shape.
    pub fn apply_to<F: Scalar>(&self, c: &mut Connection<F>) -> Result<()> {
        if c.n_pre() != self.n_pre || c.n_post() != self.n_post {
            return Err(Error::Shape(format!(
                "checkpoint weights are {}x{}, connection is {}x{}",
                self.n_pre,
                self.n_post,
                c.n_pre(),
                c.n_post()
            )));
        }
        if let Some(m) = &self.mask {
            c.set_mask(m.clone())?;
        }
        c.set_weights(self.weights.iter().map(|&w| F::of(w)).collect())
    }
}

/// In-memory checkpoint; every section is optional.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub weights: Option<WeightSection>,
    pub theta: Option<Vec<f64>>,
    pub assignment: Option<LabelAssignment>,
    pub ngram: Option<NgramTable>,
}

impl Checkpoint {
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.header.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.get(key).map(String::as_str)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC.as_bytes());
        out.push(b'\n');
        for (k, v) in &self.header {
            if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Input(format!("checkpoint header entry '{k}' cannot be encoded")));
            }
            out.extend_from_slice(format!("{k}={v}\n").as_bytes());
        }
        out.push(b'\n');
        if let Some(w) = &self.weights {
            let mut p = Vec::with_capacity(17 + 8 * w.weights.len());
            put_u64(&mut p, w.n_pre as u64);
            put_u64(&mut p, w.n_post as u64);
            w.weights.iter().for_each(|&x| put_f64(&mut p, x));
            match &w.mask {
                None => p.push(0),
                Some(m) => {
                    p.push(1);
                    let mut bytes = vec![0u8; m.len().div_ceil(8)];
                    for (i, &b) in m.iter().enumerate() {
                        if b {
                            bytes[i / 8] |= 1 << (i % 8);
                        }
                    }
                    p.extend(bytes);
                }
            }
            section(&mut out, TAG_WEIGHTS, &p);
        }
        if let Some(t) = &self.theta {
            let mut p = Vec::new();
            put_u64(&mut p, t.len() as u64);
            t.iter().for_each(|&x| put_f64(&mut p, x));
            section(&mut out, TAG_THETA, &p);
        }
        if let Some(a) = &self.assignment {
            let mut p = Vec::new();
            put_u64(&mut p, a.n_neurons as u64);
            put_u64(&mut p, a.n_classes as u64);
            for l in &a.labels {
                p.extend(l.map_or(u32::MAX, |c| c as u32).to_le_bytes());
            }
            a.proportions.iter().for_each(|&x| put_f64(&mut p, x));
            a.mean_rates.iter().for_each(|&x| put_f64(&mut p, x));
            section(&mut out, TAG_ASSIGN, &p);
        }
        if let Some(t) = &self.ngram {
            let mut p = Vec::new();
            put_u64(&mut p, t.n as u64);
            put_u64(&mut p, t.n_classes as u64);
            put_u64(&mut p, t.counts.len() as u64);
            for (k, v) in &t.counts {
                k.iter().for_each(|&x| p.extend(x.to_le_bytes()));
                v.iter().for_each(|&x| put_u64(&mut p, x));
            }
            section(&mut out, TAG_NGRAM, &p);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut ck = Checkpoint::default();
        let mut pos = 0usize;
        let mut first = true;
        loop {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|i| pos + i)
                .ok_or_else(|| Error::Input(format!("checkpoint header unterminated at offset {pos}")))?;
            let line = std::str::from_utf8(&bytes[pos..end])
                .map_err(|_| Error::Input(format!("checkpoint header is not UTF-8 at offset {pos}")))?;
            let at = pos;
            pos = end + 1;
            if first {
                if line != MAGIC {
                    return Err(Error::Input(format!("not a checkpoint: expected '{MAGIC}' at offset 0")));
                }
                first = false;
                continue;
            }
            if line.is_empty() {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("bad checkpoint header line at offset {at}")))?;
            ck.header.insert(k.to_string(), v.to_string());
        }
        while pos < bytes.len() {
            if bytes.len() < pos + 16 {
                return Err(Error::Input(format!("truncated section header at offset {pos}")));
            }
            let tag: [u8; 8] = bytes[pos..pos + 8].try_into().expect("8 bytes");
            let len = u64::from_le_bytes(bytes[pos + 8..pos + 16].try_into().expect("8 bytes")) as usize;
            let start = pos + 16;
            if bytes.len() < start + len {
                return Err(Error::Input(format!(
                    "section '{}' at offset {pos} needs {len} bytes, file ends at {}",
                    String::from_utf8_lossy(&tag),
                    bytes.len()
                )));
            }
            let mut r = Reader {
                bytes: &bytes[start..start + len],
                pos: 0,
                base: start,
            };
            match &tag {
                TAG_WEIGHTS => {
                    let n_pre = r.u64()? as usize;
                    let n_post = r.u64()? as usize;
                    let weights = r.f64s(n_pre * n_post)?;
                    let mask = match r.u8()? {
                        0 => None,
                        _ => {
                            let n = n_pre * n_post;
                            let packed = r.take(n.div_ceil(8))?;
                            Some((0..n).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect())
                        }
                    };
                    ck.weights = Some(WeightSection {
                        n_pre,
                        n_post,
                        weights,
                        mask,
                    });
                }
                TAG_THETA => {
                    let n = r.u64()? as usize;
                    ck.theta = Some(r.f64s(n)?);
                }
                TAG_ASSIGN => {
                    let n_neurons = r.u64()? as usize;
                    let n_classes = r.u64()? as usize;
                    let mut labels = Vec::with_capacity(n_neurons);
                    for _ in 0..n_neurons {
                        let l = r.u32()?;
                        labels.push((l != u32::MAX).then_some(l as usize));
                    }
                    let proportions = r.f64s(n_neurons * n_classes)?;
                    let mean_rates = r.f64s(n_neurons * n_classes)?;
                    ck.assignment = Some(LabelAssignment {
                        n_classes,
                        n_neurons,
                        proportions,
                        labels,
                        mean_rates,
                    });
                }
                TAG_NGRAM => {
                    let n = r.u64()? as usize;
                    let n_classes = r.u64()? as usize;
                    let entries = r.u64()? as usize;
                    let mut table = NgramTable::new(n, n_classes)?;
                    for _ in 0..entries {
                        let key = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                        let votes = (0..n_classes).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
                        table.counts.insert(key, votes);
                    }
                    ck.ngram = Some(table);
                }
                _ => {
                    return Err(Error::Input(format!(
                        "unknown checkpoint section '{}' at offset {pos}",
                        String::from_utf8_lossy(&tag)
                    )))
                }
            }
            pos = start + len;
        }
        Ok(ck)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes).map_err(|e| match e {
            Error::Input(m) => Error::Input(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend(x.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, x: f64) {
    out.extend(x.to_le_bytes());
}

fn section(out: &mut Vec<u8>, tag: &[u8; 8], payload: &[u8]) {
    out.extend_from_slice(tag);
    put_u64(out, payload.len() as u64);
    out.extend_from_slice(payload);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(Error::Input(format!(
                "section payload truncated at offset {}",
                self.base + self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Input("section size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
