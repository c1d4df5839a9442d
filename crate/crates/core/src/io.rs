//! JSON instance files with canonical float formatting and content digests.
//!
//! Every float is written with 17 significant digits in exponent form, so a
//! file produced by [`InstanceFile::to_canonical_string`] parses back to the
//! same values and serializes to the same bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, TensoredHermitian, C64};
use crate::qip2::{Promise, Qip2Instance};
use crate::qmam::QmamInstance;
use crate::qrg2::Qrg2Instance;
use crate::states::PureState;

pub const FORMAT_VERSION: &str = "eqsdp-instance/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Qip2,
    Qmam,
    Qrg2,
}

impl InstanceKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Qip2 => "qip2",
            Self::Qmam => "qmam",
            Self::Qrg2 => "qrg2",
        }
    }

    fn dims_len(self) -> usize {
        match self {
            Self::Qip2 | Self::Qmam => 2,
            Self::Qrg2 => 4,
        }
    }

    fn state_count(self) -> usize {
        match self {
            Self::Qip2 => 1,
            Self::Qmam => 0,
            Self::Qrg2 => 2,
        }
    }
}

/// `[re, im]`
pub type ComplexPair = [f64; 2];

/// On-disk form of an instance.
///
/// `dims` is `[m, v]` for qip2, `[x, y]` for qmam (the qubit register is
/// implicit) and `[V_Y, Y, V_N, N]` for qrg2. `states` holds the pure initial
/// states as amplitude vectors: one for qip2, none for qmam, yes then no for
/// qrg2. `measurement` is row-major, one array per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: String,
    pub kind: InstanceKind,
    pub dims: Vec<usize>,
    pub seed: Option<u64>,
    /// `[completeness, soundness]`
    pub promise: Option<[f64; 2]>,
    pub states: Vec<Vec<ComplexPair>>,
    pub measurement: Vec<Vec<ComplexPair>>,
}

#[derive(Clone, Debug)]
pub enum Instance {
    Qip2(Qip2Instance),
    Qmam(QmamInstance),
    Qrg2(Qrg2Instance),
}

impl Instance {
    pub fn kind(&self) -> InstanceKind {
        match self {
            Self::Qip2(_) => InstanceKind::Qip2,
            Self::Qmam(_) => InstanceKind::Qmam,
            Self::Qrg2(_) => InstanceKind::Qrg2,
        }
    }
}

fn pairs_of_vector(v: &CVector) -> Vec<ComplexPair> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn pairs_of_matrix(m: &CMatrix) -> Vec<Vec<ComplexPair>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

fn promise_pair(p: &Promise) -> [f64; 2] {
    [p.completeness, p.soundness]
}

fn format_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.into(),
        message: message.into(),
    }
}

impl InstanceFile {
    pub fn from_qip2(q: &Qip2Instance, seed: Option<u64>) -> Self {
        Self {
            version: FORMAT_VERSION.into(),
            kind: InstanceKind::Qip2,
            dims: q.dims(),
            seed,
            promise: q.promise.as_ref().map(promise_pair),
            states: vec![pairs_of_vector(q.initial.amplitudes())],
            measurement: pairs_of_matrix(q.measurement.matrix()),
        }
    }

    pub fn from_qmam(q: &QmamInstance, seed: Option<u64>) -> Self {
        Self {
            version: FORMAT_VERSION.into(),
            kind: InstanceKind::Qmam,
            dims: vec![q.x_dim, q.y_dim],
            seed,
            promise: Some(promise_pair(&q.promise)),
            states: Vec::new(),
            measurement: pairs_of_matrix(q.measurement.matrix()),
        }
    }

    pub fn from_qrg2(q: &Qrg2Instance, seed: Option<u64>) -> Self {
        Self {
            version: FORMAT_VERSION.into(),
            kind: InstanceKind::Qrg2,
            dims: q.dims.to_vec(),
            seed,
            promise: Some(promise_pair(&q.promise)),
            states: vec![
                pairs_of_vector(q.yes_state.amplitudes()),
                pairs_of_vector(q.no_state.amplitudes()),
            ],
            measurement: pairs_of_matrix(q.measurement.matrix()),
        }
    }

    pub fn from_instance(instance: &Instance, seed: Option<u64>) -> Self {
        match instance {
            Instance::Qip2(q) => Self::from_qip2(q, seed),
            Instance::Qmam(q) => Self::from_qmam(q, seed),
            Instance::Qrg2(q) => Self::from_qrg2(q, seed),
        }
    }

    /// Parses and checks the structure (version, shapes, finiteness).
    pub fn parse(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let file: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            format_error(path, format!("{inner}"))
        })?;
        de.end().map_err(|e| format_error(".", format!("{e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(format_error(
                "version",
                format!(
                    "unsupported version `{}`, expected `{FORMAT_VERSION}`",
                    self.version
                ),
            ));
        }
        let kind = self.kind;
        if self.dims.len() != kind.dims_len() {
            return Err(format_error(
                "dims",
                format!(
                    "{} expects {} dims, got {}",
                    kind.name(),
                    kind.dims_len(),
                    self.dims.len()
                ),
            ));
        }
        if let Some(i) = self.dims.iter().position(|&d| d == 0) {
            return Err(format_error(
                format!("dims[{i}]"),
                "dimension must be at least 1",
            ));
        }
        if kind != InstanceKind::Qip2 && self.promise.is_none() {
            return Err(format_error(
                "promise",
                format!("{} instances need a promise pair", kind.name()),
            ));
        }
        if let Some([c, s]) = self.promise {
            Promise::new(c, s).map_err(|e| format_error("promise", e.to_string()))?;
        }
        if self.states.len() != kind.state_count() {
            return Err(format_error(
                "states",
                format!(
                    "{} expects {} states, got {}",
                    kind.name(),
                    kind.state_count(),
                    self.states.len()
                ),
            ));
        }
        for (i, (state, side)) in self.states.iter().zip(self.state_sides()).enumerate() {
            if state.len() != side {
                return Err(format_error(
                    format!("states[{i}]"),
                    format!("{} amplitudes, expected {side}", state.len()),
                ));
            }
            check_finite(state, &format!("states[{i}]"))?;
        }
        let side = self.measurement_side();
        if self.measurement.len() != side {
            return Err(format_error(
                "measurement",
                format!("{} rows, expected {side}", self.measurement.len()),
            ));
        }
        for (i, row) in self.measurement.iter().enumerate() {
            if row.len() != side {
                return Err(format_error(
                    format!("measurement[{i}]"),
                    format!("{} entries, expected {side}", row.len()),
                ));
            }
            check_finite(row, &format!("measurement[{i}]"))?;
        }
        Ok(())
    }

    fn measurement_side(&self) -> usize {
        let base: usize = self.dims.iter().product();
        if self.kind == InstanceKind::Qmam {
            2 * base
        } else {
            base
        }
    }

    fn state_sides(&self) -> Vec<usize> {
        match self.kind {
            InstanceKind::Qip2 => vec![self.dims[0] * self.dims[1]],
            InstanceKind::Qmam => Vec::new(),
            InstanceKind::Qrg2 => vec![self.dims[0] * self.dims[1], self.dims[2] * self.dims[3]],
        }
    }

    pub fn to_instance(&self) -> Result<Instance> {
        self.validate()?;
        let promise = match self.promise {
            Some([c, s]) => Some(Promise::new(c, s)?),
            None => None,
        };
        let side = self.measurement_side();
        let entries: Vec<C64> = self
            .measurement
            .iter()
            .flatten()
            .map(|&[re, im]| C64::new(re, im))
            .collect();
        let matrix = CMatrix::from_row_slice(side, side, &entries);
        let state = |i: usize, dims: Vec<usize>| -> Result<PureState> {
            let amplitudes = CVector::from_iterator(
                dims.iter().product(),
                self.states[i].iter().map(|&[re, im]| C64::new(re, im)),
            );
            PureState::new(dims, amplitudes).map_err(|e| at_path(format!("states[{i}]"), e))
        };
        let d = &self.dims;
        let instance = match self.kind {
            InstanceKind::Qip2 => {
                let measurement = TensoredHermitian::new_strict(vec![d[0], d[1]], matrix)
                    .map_err(|e| at_path("measurement", e))?;
                let initial = state(0, vec![d[0], d[1]])?;
                Instance::Qip2(
                    Qip2Instance::new(d[0], d[1], initial, measurement, promise)
                        .map_err(|e| at_path("measurement", e))?,
                )
            }
            InstanceKind::Qmam => {
                let measurement = TensoredHermitian::new_strict(vec![2, d[0], d[1]], matrix)
                    .map_err(|e| at_path("measurement", e))?;
                let promise = promise.ok_or(Error::MissingPromise)?;
                Instance::Qmam(
                    QmamInstance::new(d[0], d[1], measurement, promise)
                        .map_err(|e| at_path("measurement", e))?,
                )
            }
            InstanceKind::Qrg2 => {
                let dims = [d[0], d[1], d[2], d[3]];
                let measurement = TensoredHermitian::new_strict(dims.to_vec(), matrix)
                    .map_err(|e| at_path("measurement", e))?;
                let yes = state(0, vec![d[0], d[1]])?;
                let no = state(1, vec![d[2], d[3]])?;
                let promise = promise.ok_or(Error::MissingPromise)?;
                Instance::Qrg2(
                    Qrg2Instance::new(dims, yes, no, measurement, promise)
                        .map_err(|e| at_path("measurement", e))?,
                )
            }
        };
        Ok(instance)
    }

    /// Compact JSON with every float in 17-significant-digit exponent form,
    /// followed by a newline.
    pub fn to_canonical_string(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFloats);
        self.serialize(&mut ser)
            .expect("instance serialization is infallible");
        out.push(b'\n');
        String::from_utf8(out).expect("serializer emits UTF-8")
    }

    /// Hex SHA-256 of the canonical text.
    pub fn digest(&self) -> String {
        digest_hex(self.to_canonical_string().as_bytes())
    }
}

fn at_path(path: impl Into<String>, e: Error) -> Error {
    format_error(path, e.to_string())
}

fn check_finite(values: &[ComplexPair], path: &str) -> Result<()> {
    if let Some(i) = values
        .iter()
        .position(|p| !p[0].is_finite() || !p[1].is_finite())
    {
        return Err(format_error(format!("{path}[{i}]"), "non-finite entry"));
    }
    Ok(())
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Formats a float with 17 significant digits, e.g. `-1.2500000000000000e-1`.
pub fn canonical_float(value: f64) -> String {
    format!("{value:.16e}")
}

struct CanonicalFloats;

impl Formatter for CanonicalFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(canonical_float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn read_instance_file(path: &Path) -> Result<InstanceFile> {
    let text = fs::read_to_string(path)?;
    InstanceFile::parse(&text)
}

pub fn write_instance_file(path: &Path, file: &InstanceFile) -> Result<()> {
    fs::write(path, file.to_canonical_string())?;
    Ok(())
}
