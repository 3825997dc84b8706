//! JSON file formats for referees, strategies, transcripts and SDP instances.
//!
//! Every document is an envelope `{format_version, kind, dims, payload}`.
//! Complex numbers are two-element arrays `[re, im]`; matrices are row-major
//! nested arrays. Documents emitted here parse back losslessly and
//! re-serialize byte-identically.

use crate::error::{Error, Result};
use crate::game::{Referee, Transcript, UnitaryStrategy};
use crate::qmath::{CMat, Ket};
use crate::sdp::{ChannelKraus, SdpInstance};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

type JsonComplex = [f64; 2];
type JsonMatrix = Vec<Vec<JsonComplex>>;
type JsonKet = Vec<JsonComplex>;

fn complex_out(z: Complex64) -> JsonComplex {
    [z.re, z.im]
}

fn complex_in(v: JsonComplex, what: &str) -> Result<Complex64> {
    if !v[0].is_finite() || !v[1].is_finite() {
        return Err(Error::Serialization(format!("non-finite entry in {what}")));
    }
    Ok(Complex64::new(v[0], v[1]))
}

pub fn mat_to_json(m: &CMat) -> JsonMatrix {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| complex_out(m[(r, c)])).collect())
        .collect()
}

pub fn mat_from_json(rows: &JsonMatrix, what: &str) -> Result<CMat> {
    let nr = rows.len();
    if nr == 0 {
        return Err(Error::Serialization(format!("{what}: empty matrix")));
    }
    let nc = rows[0].len();
    let mut m = CMat::zeros(nr, nc);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != nc {
            return Err(Error::Serialization(format!(
                "{what}: ragged row {r} (expected {nc} entries, got {})",
                row.len()
            )));
        }
        for (c, &z) in row.iter().enumerate() {
            m[(r, c)] = complex_in(z, what)?;
        }
    }
    Ok(m)
}

pub fn ket_to_json(k: &Ket) -> JsonKet {
    k.iter().map(|&z| complex_out(z)).collect()
}

pub fn ket_from_json(v: &JsonKet, what: &str) -> Result<Ket> {
    let mut k = Ket::zeros(v.len());
    for (i, &z) in v.iter().enumerate() {
        k[i] = complex_in(z, what)?;
    }
    Ok(k)
}

#[derive(Serialize, Deserialize)]
struct RefereeDims {
    d_c: usize,
    d_v: usize,
    a: usize,
    b: usize,
}

#[derive(Serialize, Deserialize)]
struct RefereePayload {
    psi: JsonKet,
    v_list: Vec<JsonMatrix>,
    pi: JsonMatrix,
}

#[derive(Serialize, Deserialize)]
struct RefereeDoc {
    format_version: u32,
    kind: String,
    dims: RefereeDims,
    payload: RefereePayload,
}

#[derive(Serialize, Deserialize)]
struct StrategyDims {
    private_dim: usize,
    turns: usize,
}

#[derive(Serialize, Deserialize)]
struct StrategyPayload {
    u_list: Vec<JsonMatrix>,
}

#[derive(Serialize, Deserialize)]
struct StrategyDoc {
    format_version: u32,
    kind: String,
    dims: StrategyDims,
    payload: StrategyPayload,
}

#[derive(Serialize, Deserialize)]
struct TranscriptDims {
    slot_dims: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TranscriptPayload {
    states: Vec<JsonMatrix>,
}

#[derive(Serialize, Deserialize)]
struct TranscriptDoc {
    format_version: u32,
    kind: String,
    dims: TranscriptDims,
    payload: TranscriptPayload,
}

#[derive(Serialize, Deserialize)]
struct SdpDims {
    traced: Vec<usize>,
    residual: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SdpChannel {
    kraus: Vec<JsonMatrix>,
}

#[derive(Serialize, Deserialize)]
struct SdpPayload {
    channels: Vec<SdpChannel>,
    q: JsonMatrix,
    p: JsonMatrix,
}

#[derive(Serialize, Deserialize)]
struct SdpDoc {
    format_version: u32,
    kind: String,
    dims: SdpDims,
    payload: SdpPayload,
}

fn check_header(kind_found: &str, version: u32, kind_expected: &str) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Serialization(format!(
            "unsupported format_version {version} (expected {FORMAT_VERSION})"
        )));
    }
    if kind_found != kind_expected {
        return Err(Error::Serialization(format!(
            "expected kind `{kind_expected}`, found `{kind_found}`"
        )));
    }
    Ok(())
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Serialization(format!("{what}: {e}")))
}

fn pretty<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("serializable document");
    s.push('\n');
    s
}

pub fn referee_to_json(r: &Referee) -> String {
    pretty(&RefereeDoc {
        format_version: FORMAT_VERSION,
        kind: "referee".to_string(),
        dims: RefereeDims {
            d_c: r.d_c(),
            d_v: r.d_v(),
            a: r.alice_turns(),
            b: r.bob_turns(),
        },
        payload: RefereePayload {
            psi: ket_to_json(r.psi()),
            v_list: r.v_unitaries().iter().map(mat_to_json).collect(),
            pi: mat_to_json(r.pi()),
        },
    })
}

pub fn referee_from_json(text: &str) -> Result<Referee> {
    let doc: RefereeDoc = parse(text, "referee file")?;
    check_header(&doc.kind, doc.format_version, "referee")?;
    let psi = ket_from_json(&doc.payload.psi, "psi")?;
    let v_list = doc
        .payload
        .v_list
        .iter()
        .enumerate()
        .map(|(i, m)| mat_from_json(m, &format!("V_{}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let pi = mat_from_json(&doc.payload.pi, "Pi")?;
    Referee::new(doc.dims.d_c, doc.dims.d_v, doc.dims.a, doc.dims.b, psi, v_list, pi)
}

pub fn strategy_to_json(s: &UnitaryStrategy) -> String {
    pretty(&StrategyDoc {
        format_version: FORMAT_VERSION,
        kind: "strategy".to_string(),
        dims: StrategyDims {
            private_dim: s.private_dim(),
            turns: s.turns(),
        },
        payload: StrategyPayload {
            u_list: s.unitaries().iter().map(mat_to_json).collect(),
        },
    })
}

pub fn strategy_from_json(text: &str) -> Result<UnitaryStrategy> {
    let doc: StrategyDoc = parse(text, "strategy file")?;
    check_header(&doc.kind, doc.format_version, "strategy")?;
    if doc.payload.u_list.len() != doc.dims.turns {
        return Err(Error::Serialization(format!(
            "strategy declares {} turns but carries {} unitaries",
            doc.dims.turns,
            doc.payload.u_list.len()
        )));
    }
    let u_list = doc
        .payload
        .u_list
        .iter()
        .enumerate()
        .map(|(i, m)| mat_from_json(m, &format!("U_{}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    UnitaryStrategy::new(doc.dims.private_dim, u_list)
}

/// Transcripts and SDP solutions share the same format: a list of density
/// operators tagged with their dimensions.
pub fn states_to_json(states: &[CMat]) -> String {
    pretty(&TranscriptDoc {
        format_version: FORMAT_VERSION,
        kind: "transcript".to_string(),
        dims: TranscriptDims {
            slot_dims: states.iter().map(|s| s.nrows()).collect(),
        },
        payload: TranscriptPayload {
            states: states.iter().map(mat_to_json).collect(),
        },
    })
}

pub fn states_from_json(text: &str) -> Result<Vec<CMat>> {
    let doc: TranscriptDoc = parse(text, "transcript file")?;
    check_header(&doc.kind, doc.format_version, "transcript")?;
    doc.payload
        .states
        .iter()
        .enumerate()
        .map(|(i, m)| mat_from_json(m, &format!("state {}", i + 1)))
        .collect()
}

pub fn transcript_to_json(t: &Transcript) -> String {
    states_to_json(t.states())
}

pub fn transcript_from_json(text: &str) -> Result<Transcript> {
    Ok(Transcript::new(states_from_json(text)?))
}

pub fn sdp_to_json(inst: &SdpInstance) -> String {
    pretty(&SdpDoc {
        format_version: FORMAT_VERSION,
        kind: "sdp".to_string(),
        dims: SdpDims {
            traced: inst.traced_dims().to_vec(),
            residual: inst.resid_dims().to_vec(),
        },
        payload: SdpPayload {
            channels: inst
                .channels()
                .iter()
                .map(|ch| SdpChannel {
                    kraus: ch.kraus().iter().map(mat_to_json).collect(),
                })
                .collect(),
            q: mat_to_json(inst.q()),
            p: mat_to_json(inst.p()),
        },
    })
}

/// Parse an SDP instance. `q` may carry any positive trace: it is rescaled to
/// a density and the factor returned so callers can undo the normalization on
/// the objective.
pub fn sdp_from_json(text: &str) -> Result<(SdpInstance, f64)> {
    let doc: SdpDoc = parse(text, "sdp file")?;
    check_header(&doc.kind, doc.format_version, "sdp")?;
    let channels = doc
        .payload
        .channels
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            let kraus = ch
                .kraus
                .iter()
                .enumerate()
                .map(|(j, m)| mat_from_json(m, &format!("channel {} Kraus {j}", i + 1)))
                .collect::<Result<Vec<_>>>()?;
            ChannelKraus::new(kraus)
        })
        .collect::<Result<Vec<_>>>()?;
    let q_raw = mat_from_json(&doc.payload.q, "Q")?;
    let p = mat_from_json(&doc.payload.p, "P")?;
    let trace = q_raw.trace().re;
    if trace <= 0.0 {
        return Err(Error::Validation {
            name: "Q".to_string(),
            reason: format!("trace {trace} is not positive"),
        });
    }
    let scale = trace;
    let q = q_raw.scale(1.0 / scale);
    let inst = SdpInstance::new(doc.dims.traced, doc.dims.residual, channels, q, p)?;
    Ok((inst, scale))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(Error::Io)
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text).map_err(Error::Io)
}
