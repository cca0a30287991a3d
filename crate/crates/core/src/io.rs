//! Run configuration files, NDJSON diagnostics streams and checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::{DiagnosticsRecord, ExperimentKind};
use crate::error::{Error, Result};
use crate::evolve::{Accumulators, SimParams};
use crate::regimes::{self, RegimeReport};
use crate::spectral::{Grid, SpectralScalar, SpectralVectorField};

pub const CHECKPOINT_VERSION: u32 = 1;
const PAYLOAD_MARKER: &[u8] = b"--- payload ---\n";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// NDJSON diagnostics path; standard output when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Write the checkpoint every this many samples (and at the end).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

/// Contents of a configuration file such as
///
/// ```text
/// sim.d = 2
/// sim.alpha = 1.0
/// sim.ic.kind = "orszag_tang"
/// sim.ic.amplitude = 0.5
/// io.out = "diag.ndjson"
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))?;
        if cfg.sim.dt.is_none() && cfg.sim.cfl.is_none() {
            cfg.sim.dt = SimParams::default().dt;
        }
        cfg.sim.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Configuration(e.to_string()))
    }

    /// The configuration as a flat map of dotted keys.
    pub fn dotted(&self) -> Result<BTreeMap<String, Value>> {
        let value = serde_json::to_value(self).map_err(|e| Error::Configuration(e.to_string()))?;
        let mut out = BTreeMap::new();
        flatten("", &value, &mut out);
        Ok(out)
    }

    pub fn regime(&self) -> RegimeReport {
        let s = &self.sim;
        regimes::classify_f64(s.d, s.alpha, s.beta, s.s, s.eta, Some(s.lp))
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Null => {}
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

/// JSON formatter printing every float with 17 significant digits.
struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        if v.is_finite() {
            write!(w, "{v:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

/// One JSON object on one line, floats at 17 significant digits.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Configuration(e.to_string()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
}

#[derive(Serialize)]
struct Header<'a> {
    header: HeaderBody<'a>,
}

#[derive(Serialize)]
struct HeaderBody<'a> {
    format: &'static str,
    version: u32,
    config: &'a BTreeMap<String, Value>,
    regime: &'a RegimeReport,
}

/// Line-oriented diagnostics writer; the first line is a header carrying
/// the flattened configuration and its regime report.
pub struct DiagnosticsWriter<W: Write> {
    inner: W,
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(mut inner: W, config: &RunConfig) -> Result<Self> {
        let dotted = config.dotted()?;
        let regime = config.regime();
        let header = Header {
            header: HeaderBody {
                format: "stokes-magneto-diagnostics",
                version: 1,
                config: &dotted,
                regime: &regime,
            },
        };
        inner.write_all(to_json_line(&header)?.as_bytes())?;
        Ok(Self { inner })
    }

    /// Continues an existing stream without a header.
    pub fn append(inner: W) -> Self {
        Self { inner }
    }

    pub fn write_record(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        write_diagnostics(&mut self.inner, record)
    }

    /// Writes any serializable value as one line.
    pub fn write_line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        self.inner.write_all(to_json_line(value)?.as_bytes())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub fn write_diagnostics<W: Write + ?Sized>(stream: &mut W, record: &DiagnosticsRecord) -> Result<()> {
    stream.write_all(to_json_line(record)?.as_bytes())?;
    Ok(())
}

/// Parses the record lines of a stream, skipping the header.
pub fn read_records(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with("{\"header\""))
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Configuration(format!("bad record: {e}"))))
        .collect()
}

fn hex_bits(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn from_hex_bits(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Checkpoint(format!("bad float bits '{s}'")))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    format_version: u32,
    endianness: String,
    /// FNV-1a 64 of the payload, hex.
    hash: String,
    payload_bytes: u64,
    grid: GridDescriptor,
    /// Exact bit patterns of the accumulators.
    state: StateBits,
    sim: SimParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDescriptor {
    d: usize,
    n: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateBits {
    /// Decimal time for reading; `t_bits` is authoritative.
    t: f64,
    t_bits: String,
    step: u64,
    cont_integral: String,
    dissipation_integral: String,
    hs0: String,
}

/// A saved simulation state.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: SimParams,
    pub field: SpectralVectorField,
    pub acc: Accumulators,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn payload(field: &SpectralVectorField) -> Vec<u8> {
    let mut out = Vec::with_capacity(field.grid().d() * field.grid().len() * 16);
    for comp in field.components() {
        for z in comp.coeffs() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let grid = self.field.grid();
        let body = payload(&self.field);
        let header = CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            endianness: "little".into(),
            hash: format!("{:016x}", fnv1a64(&body)),
            payload_bytes: body.len() as u64,
            grid: GridDescriptor {
                d: grid.d(),
                n: grid.n(),
            },
            state: StateBits {
                t: self.acc.t,
                t_bits: hex_bits(self.acc.t),
                step: self.acc.step,
                cont_integral: hex_bits(self.acc.cont_integral),
                dissipation_integral: hex_bits(self.acc.dissipation_integral),
                hs0: hex_bits(self.acc.hs0),
            },
            sim: self.params.clone(),
        };
        let text = toml::to_string(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = text.into_bytes();
        out.extend_from_slice(PAYLOAD_MARKER);
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(PAYLOAD_MARKER.len())
            .position(|w| w == PAYLOAD_MARKER)
            .ok_or_else(|| Error::Checkpoint("payload marker not found".into()))?;
        let text = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
        let body = &bytes[split + PAYLOAD_MARKER.len()..];
        let header: CheckpointHeader = toml::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", header.format_version)));
        }
        if header.endianness != "little" {
            return Err(Error::Checkpoint(format!("unsupported endianness {}", header.endianness)));
        }
        if body.len() as u64 != header.payload_bytes {
            return Err(Error::Checkpoint(format!(
                "payload has {} bytes, header says {}",
                body.len(),
                header.payload_bytes
            )));
        }
        if format!("{:016x}", fnv1a64(body)) != header.hash {
            return Err(Error::Checkpoint("payload hash mismatch".into()));
        }
        let grid = Grid::new(header.grid.d, header.grid.n)?;
        if header.sim.d != grid.d() || header.sim.n != grid.n() {
            return Err(Error::Checkpoint("grid descriptor disagrees with parameters".into()));
        }
        let len = grid.len();
        if body.len() != grid.d() * len * 16 {
            return Err(Error::Checkpoint("payload size does not match the grid".into()));
        }
        let word = |i: usize| f64::from_le_bytes(body[8 * i..8 * i + 8].try_into().expect("8 bytes"));
        let components = (0..grid.d())
            .map(|j| {
                let coeffs = (0..len)
                    .map(|i| {
                        let w = 2 * (j * len + i);
                        Complex64::new(word(w), word(w + 1))
                    })
                    .collect();
                SpectralScalar::from_coeffs(&grid, coeffs)
            })
            .collect::<Result<Vec<_>>>()?;
        let s = &header.state;
        Ok(Checkpoint {
            params: header.sim,
            field: SpectralVectorField::from_components(components)?,
            acc: Accumulators {
                t: from_hex_bits(&s.t_bits)?,
                step: s.step,
                cont_integral: from_hex_bits(&s.cont_integral)?,
                dissipation_integral: from_hex_bits(&s.dissipation_integral)?,
                hs0: from_hex_bits(&s.hs0)?,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
