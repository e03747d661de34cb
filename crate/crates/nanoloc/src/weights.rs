//! Versioned binary weight container (`NLQW`) and its text manifest.
//!
//! Layout, little-endian:
//!
//! ```text
//! "NLQW" u16 version u8 stage u32 spec_len spec_text u32 records
//! record: u16 name_len name u8 kind u8 signedness
//!         u32 n_scales f64*n
//!         u32 n_tensors { u8 dtype u8 ndims u32*ndims u32 byte_len bytes }*
//!         u32 n_requant { i32 multiplier u8 shift }*
//! ```

use std::fmt::Write as _;

use nanoloc_core::arch::NetworkSpec;
use nanoloc_core::quant::{
    ActivationQuant, FloatNetwork, IntNetwork, IntOp, LayerParams, OutputQuant, Requant,
    Signedness, Stage,
};

use crate::spec_text;

pub const MAGIC: &[u8; 4] = b"NLQW";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Container {
    Float(FloatNetwork),
    Integer(IntNetwork),
}

impl Container {
    pub fn stage(&self) -> Stage {
        match self {
            Container::Float(_) => Stage::FullPrecision,
            Container::Integer(_) => Stage::IntegerDeployable,
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        match self {
            Container::Float(n) => n.spec(),
            Container::Integer(n) => n.spec(),
        }
    }
}

/// A decoding failure at a byte offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeError {
    pub offset: u64,
    pub reason: String,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum RecordKind {
    Empty = 0,
    Linear = 1,
    BatchNorm = 2,
    Kernel = 3,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum DType {
    F32 = 0,
    I8 = 1,
    I32 = 2,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::I8 => 1,
            _ => 4,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::I8 => "i8",
            DType::I32 => "i32",
        }
    }
}

const SIGN_UNSIGNED8: u8 = 0;
const SIGN_SIGNED8: u8 = 1;
const SIGN_ACCUMULATOR: u8 = 2;
const SIGN_FLOAT: u8 = 3;

fn stage_code(s: Stage) -> u8 {
    match s {
        Stage::FullPrecision => 0,
        Stage::FakeQuantized => 1,
        Stage::IntegerDeployable => 2,
    }
}

struct Tensor {
    dtype: DType,
    dims: Vec<u32>,
    bytes: Vec<u8>,
}

struct Record {
    name: String,
    kind: RecordKind,
    signedness: u8,
    scales: Vec<f64>,
    tensors: Vec<Tensor>,
    requant: Vec<Requant>,
}

/// Weights are stored as `[out_channels, fan_in]`.
fn weight_dims(out: usize, len: usize) -> Vec<u32> {
    vec![out as u32, (len / out.max(1)) as u32]
}

fn f32_tensor(dims: Vec<u32>, v: &[f32]) -> Tensor {
    Tensor {
        dtype: DType::F32,
        dims,
        bytes: v.iter().flat_map(|x| x.to_le_bytes()).collect(),
    }
}

fn records(c: &Container) -> Vec<Record> {
    match c {
        Container::Float(net) => net
            .spec()
            .layers
            .iter()
            .zip(net.params())
            .map(|(l, p)| {
                let (kind, tensors) = match p {
                    LayerParams::None => (RecordKind::Empty, vec![]),
                    LayerParams::Linear { weights, bias } => (
                        RecordKind::Linear,
                        vec![
                            f32_tensor(weight_dims(bias.len(), weights.len()), weights),
                            f32_tensor(vec![bias.len() as u32], bias),
                        ],
                    ),
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        mean,
                        var,
                    } => {
                        let c = vec![gamma.len() as u32];
                        (
                            RecordKind::BatchNorm,
                            [gamma, beta, mean, var]
                                .iter()
                                .map(|v| f32_tensor(c.clone(), v))
                                .collect(),
                        )
                    }
                };
                Record {
                    name: l.name.clone(),
                    kind,
                    signedness: SIGN_FLOAT,
                    scales: vec![],
                    tensors,
                    requant: vec![],
                }
            })
            .collect(),
        Container::Integer(net) => net
            .ops()
            .iter()
            .map(|op| {
                let (signedness, scales) = match &op.output {
                    OutputQuant::Activation(a) => (
                        if a.signedness == Signedness::Unsigned8 {
                            SIGN_UNSIGNED8
                        } else {
                            SIGN_SIGNED8
                        },
                        vec![a.scale],
                    ),
                    OutputQuant::Accumulator { scales } => (SIGN_ACCUMULATOR, scales.clone()),
                };
                let mut tensors = Vec::new();
                if !op.bias.is_empty() {
                    tensors.push(Tensor {
                        dtype: DType::I8,
                        dims: weight_dims(op.bias.len(), op.weights.len()),
                        bytes: op.weights.iter().map(|w| *w as u8).collect(),
                    });
                    tensors.push(Tensor {
                        dtype: DType::I32,
                        dims: vec![op.bias.len() as u32],
                        bytes: op.bias.iter().flat_map(|b| b.to_le_bytes()).collect(),
                    });
                }
                Record {
                    name: op.name.clone(),
                    kind: RecordKind::Kernel,
                    signedness,
                    scales,
                    tensors,
                    requant: op.requant.clone(),
                }
            })
            .collect(),
    }
}

pub fn encode(c: &Container) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(stage_code(c.stage()));
    let spec = spec_text::to_text(c.spec());
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(spec.as_bytes());
    let recs = records(c);
    out.extend_from_slice(&(recs.len() as u32).to_le_bytes());
    for r in &recs {
        out.extend_from_slice(&(r.name.len() as u16).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.push(r.kind as u8);
        out.push(r.signedness);
        out.extend_from_slice(&(r.scales.len() as u32).to_le_bytes());
        r.scales
            .iter()
            .for_each(|s| out.extend_from_slice(&s.to_le_bytes()));
        out.extend_from_slice(&(r.tensors.len() as u32).to_le_bytes());
        for t in &r.tensors {
            out.push(t.dtype as u8);
            out.push(t.dims.len() as u8);
            t.dims
                .iter()
                .for_each(|d| out.extend_from_slice(&d.to_le_bytes()));
            out.extend_from_slice(&(t.bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(&t.bytes);
        }
        out.extend_from_slice(&(r.requant.len() as u32).to_le_bytes());
        for q in &r.requant {
            out.extend_from_slice(&q.multiplier.to_le_bytes());
            out.push(q.shift as u8);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, at: usize, reason: impl Into<String>) -> Result<T, DecodeError> {
        Err(DecodeError {
            offset: at as u64,
            reason: reason.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return self.fail(
                self.pos,
                format!(
                    "truncated {what}: need {n} bytes, {} left",
                    self.buf.len() - self.pos
                ),
            );
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, DecodeError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn i32(&mut self, what: &str) -> Result<i32, DecodeError> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn str(&mut self, n: usize, what: &str) -> Result<String, DecodeError> {
        let at = self.pos;
        let b = self.take(n, what)?;
        match std::str::from_utf8(b) {
            Ok(s) => Ok(s.to_string()),
            Err(_) => self.fail(at, format!("{what} is not UTF-8")),
        }
    }

    /// Element count bounded by the bytes left, so corrupt counts cannot
    /// trigger huge allocations.
    fn count(&mut self, what: &str, min_elem: usize) -> Result<usize, DecodeError> {
        let at = self.pos;
        let n = self.u32(what)? as usize;
        if n.saturating_mul(min_elem) > self.buf.len() - self.pos {
            return self.fail(at, format!("{what} count {n} exceeds the remaining data"));
        }
        Ok(n)
    }
}

fn read_record(r: &mut Reader) -> Result<(usize, Record), DecodeError> {
    let start = r.pos;
    let n = r.u16("name length")? as usize;
    let name = r.str(n, "layer name")?;
    let at = r.pos;
    let kind = match r.u8("record kind")? {
        0 => RecordKind::Empty,
        1 => RecordKind::Linear,
        2 => RecordKind::BatchNorm,
        3 => RecordKind::Kernel,
        k => return r.fail(at, format!("unknown record kind {k}")),
    };
    let at = r.pos;
    let signedness = r.u8("signedness")?;
    if signedness > SIGN_FLOAT {
        return r.fail(at, format!("unknown signedness {signedness}"));
    }
    let ns = r.count("scale", 8)?;
    let scales = (0..ns).map(|_| r.f64("scale")).collect::<Result<_, _>>()?;
    let nt = r.count("tensor", 6)?;
    let mut tensors = Vec::with_capacity(nt);
    for _ in 0..nt {
        let at = r.pos;
        let dtype = match r.u8("dtype")? {
            0 => DType::F32,
            1 => DType::I8,
            2 => DType::I32,
            d => return r.fail(at, format!("unknown dtype {d}")),
        };
        let nd = r.u8("rank")? as usize;
        let dims: Vec<u32> = (0..nd)
            .map(|_| r.u32("dimension"))
            .collect::<Result<_, _>>()?;
        let at = r.pos;
        let len = r.u32("tensor byte length")? as usize;
        let elems: u64 = dims.iter().map(|d| *d as u64).product();
        if elems * dtype.size() as u64 != len as u64 {
            return r.fail(
                at,
                format!(
                    "tensor `{name}` holds {len} bytes, shape needs {}",
                    elems * dtype.size() as u64
                ),
            );
        }
        let bytes = r.take(len, "tensor data")?.to_vec();
        tensors.push(Tensor { dtype, dims, bytes });
    }
    let nq = r.count("requant", 5)?;
    let mut requant = Vec::with_capacity(nq);
    for _ in 0..nq {
        let multiplier = r.i32("multiplier")?;
        let shift = r.u8("shift")? as u32;
        requant.push(Requant { multiplier, shift });
    }
    Ok((
        start,
        Record {
            name,
            kind,
            signedness,
            scales,
            tensors,
            requant,
        },
    ))
}

fn f32s(t: &Tensor) -> Option<Vec<f32>> {
    (t.dtype == DType::F32).then(|| {
        t.bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    })
}

pub fn decode(buf: &[u8]) -> Result<Container, DecodeError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return r.fail(0, "bad magic, expected NLQW");
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return r.fail(4, format!("unsupported version {version}"));
    }
    let stage = match r.u8("stage")? {
        0 => Stage::FullPrecision,
        2 => Stage::IntegerDeployable,
        s => return r.fail(6, format!("stage code {s} cannot be stored")),
    };
    let spec_at = r.pos;
    let n = r.count("spec byte", 1)?;
    let text = r.str(n, "network spec")?;
    let spec = match spec_text::from_text(&text) {
        Ok(s) => s,
        Err(e) => {
            return r.fail(
                spec_at + 4,
                format!("network spec line {}: {}", e.line, e.reason),
            )
        }
    };
    let n = r.count("record", 12)?;
    let mut recs = Vec::with_capacity(n);
    for _ in 0..n {
        recs.push(read_record(&mut r)?);
    }
    if r.pos != buf.len() {
        return r.fail(r.pos, format!("{} trailing bytes", buf.len() - r.pos));
    }
    let container = match stage {
        Stage::FullPrecision => {
            if recs.len() != spec.layers.len() {
                return r.fail(buf.len(), "record count does not match the layer count");
            }
            let mut params = Vec::with_capacity(recs.len());
            for ((at, rec), layer) in recs.iter().zip(&spec.layers) {
                if rec.name != layer.name {
                    return r.fail(
                        *at,
                        format!(
                            "record `{}` where layer `{}` was expected",
                            rec.name, layer.name
                        ),
                    );
                }
                let floats: Option<Vec<Vec<f32>>> = rec.tensors.iter().map(f32s).collect();
                let Some(mut t) = floats else {
                    return r.fail(*at, "full-precision records hold f32 tensors only");
                };
                let p = match (rec.kind, t.len()) {
                    (RecordKind::Empty, 0) => LayerParams::None,
                    (RecordKind::Linear, 2) => {
                        let bias = t.pop().unwrap();
                        LayerParams::Linear {
                            weights: t.pop().unwrap(),
                            bias,
                        }
                    }
                    (RecordKind::BatchNorm, 4) => {
                        let var = t.pop().unwrap();
                        let mean = t.pop().unwrap();
                        let beta = t.pop().unwrap();
                        LayerParams::BatchNorm {
                            gamma: t.pop().unwrap(),
                            beta,
                            mean,
                            var,
                        }
                    }
                    _ => return r.fail(*at, "record kind and tensor count disagree"),
                };
                params.push(p);
            }
            FloatNetwork::from_params(spec, params).map(Container::Float)
        }
        _ => {
            let mut ops = Vec::with_capacity(recs.len());
            for (at, rec) in recs {
                if rec.kind != RecordKind::Kernel {
                    return r.fail(at, "integer containers hold kernel records only");
                }
                let output = match (rec.signedness, rec.scales.as_slice()) {
                    (SIGN_UNSIGNED8, [s]) => OutputQuant::Activation(ActivationQuant {
                        scale: *s,
                        signedness: Signedness::Unsigned8,
                    }),
                    (SIGN_SIGNED8, [s]) => OutputQuant::Activation(ActivationQuant {
                        scale: *s,
                        signedness: Signedness::Signed8,
                    }),
                    (SIGN_ACCUMULATOR, s) => OutputQuant::Accumulator { scales: s.to_vec() },
                    _ => return r.fail(at, "output signedness and scale count disagree"),
                };
                let (weights, bias) = match rec.tensors.as_slice() {
                    [] => (vec![], vec![]),
                    [w, b] if w.dtype == DType::I8 && b.dtype == DType::I32 => (
                        w.bytes.iter().map(|v| *v as i8).collect(),
                        b.bytes
                            .chunks_exact(4)
                            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    ),
                    _ => {
                        return r.fail(
                            at,
                            "kernel records hold an i8 weight and an i32 bias tensor",
                        )
                    }
                };
                ops.push(IntOp {
                    name: rec.name,
                    weights,
                    bias,
                    requant: rec.requant,
                    output,
                });
            }
            IntNetwork::from_parts(spec, ops).map(Container::Integer)
        }
    };
    container.or_else(|e| r.fail(buf.len(), format!("inconsistent contents: {e}")))
}

/// Human-readable summary of a container, one line per record.
pub fn manifest(c: &Container) -> String {
    let recs = records(c);
    let mut s = String::new();
    writeln!(
        s,
        "container NLQW v{VERSION} stage={} network={} records={}",
        c.stage().as_str(),
        c.spec().name,
        recs.len()
    )
    .unwrap();
    for (i, r) in recs.iter().enumerate() {
        let sign = match r.signedness {
            SIGN_UNSIGNED8 => "unsigned8",
            SIGN_SIGNED8 => "signed8",
            SIGN_ACCUMULATOR => "accumulator",
            _ => "float",
        };
        let tensors: Vec<String> = r
            .tensors
            .iter()
            .map(|t| {
                let dims: Vec<String> = t.dims.iter().map(u32::to_string).collect();
                format!("{}[{}]", t.dtype.as_str(), dims.join("x"))
            })
            .collect();
        write!(
            s,
            "record {i} {} output={sign} tensors={}",
            r.name,
            if tensors.is_empty() {
                "-".into()
            } else {
                tensors.join(",")
            }
        )
        .unwrap();
        match r.scales.as_slice() {
            [] => {}
            [one] => write!(s, " scale={one:e}").unwrap(),
            many => write!(s, " scales={}", many.len()).unwrap(),
        }
        match r.requant.as_slice() {
            [] => {}
            [q] => write!(s, " m={} s={}", q.multiplier, q.shift).unwrap(),
            many => write!(s, " requant={}", many.len()).unwrap(),
        }
        s.push('\n');
    }
    s
}
