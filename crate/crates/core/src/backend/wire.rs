//! HTTP wire protocol for remote backends.
//!
//! Endpoints (all `POST`):
//!
//! | path                 | request                                  | response                         |
//! |----------------------|------------------------------------------|----------------------------------|
//! | `/v1/capabilities`   | empty                                    | JSON [`CapabilitiesMessage`]     |
//! | `/v1/init-thoughts`  | JSON [`InitThoughtsRequest`]             | multipart: `meta`, `tensor`      |
//! | `/v1/generate`       | multipart: `meta`, `image`               | multipart: `meta`, `tensor`      |
//! | `/v1/refine-eval`    | multipart: `meta`, `image`, `tensor`     | multipart: `meta`, `tensor`      |
//!
//! Requests use `multipart/form-data`, responses `multipart/mixed`. The
//! `meta` part is JSON. Tensor parts are bit-exact binary:
//!
//! ```text
//! "ZGTENSR1" | rank: u32 LE | rank x dim: u32 LE | row-major f32 LE values
//! ```
//!
//! Errors come back as a non-2xx status with a JSON [`ErrorMessage`] body.

use serde::{Deserialize, Serialize};

use super::{
    BackendCapabilities, BackendError, CapturePhase, GenerationOutcome, RefineEvalOutcome,
};
use crate::focus::{AttentionMap, AttentionSlice, PatchSize, VisualGrid};
use crate::geometry::Dims;
use crate::imageops::RasterImage;
use crate::refine::ThoughtVectors;

pub const PROTOCOL_VERSION: u32 = 1;
pub const TENSOR_MAGIC: &[u8; 8] = b"ZGTENSR1";
pub const TENSOR_CONTENT_TYPE: &str = "application/x-zgtensor";
pub const JSON_CONTENT_TYPE: &str = "application/json";

pub const PATH_CAPABILITIES: &str = "/v1/capabilities";
pub const PATH_INIT_THOUGHTS: &str = "/v1/init-thoughts";
pub const PATH_GENERATE: &str = "/v1/generate";
pub const PATH_REFINE_EVAL: &str = "/v1/refine-eval";

fn malformed(msg: impl Into<String>) -> BackendError {
    BackendError::MalformedFrame(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, BackendError> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(BackendError::Shape {
                expected: dims,
                actual: vec![data.len()],
            });
        }
        Ok(Self { dims, data })
    }
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4-byte slice")))
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor, BackendError> {
    if bytes.len() < 12 {
        return Err(malformed(format!(
            "tensor header needs 12 bytes, received {}",
            bytes.len()
        )));
    }
    if &bytes[..8] != TENSOR_MAGIC {
        return Err(malformed("tensor part does not start with ZGTENSR1"));
    }
    let rank = read_u32(bytes, 8).expect("length checked") as usize;
    let header = 12 + 4 * rank;
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let d = read_u32(bytes, 12 + 4 * i).ok_or_else(|| {
            malformed(format!(
                "tensor header of rank {rank} needs {header} bytes, received {}",
                bytes.len()
            ))
        })?;
        dims.push(d as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| malformed(format!("tensor dims {dims:?} overflow")))?;
    let expected = count
        .checked_mul(4)
        .and_then(|b| b.checked_add(header))
        .ok_or_else(|| malformed(format!("tensor dims {dims:?} overflow")))?;
    if bytes.len() != expected {
        return Err(malformed(format!(
            "tensor {dims:?} needs {expected} bytes, received {}",
            bytes.len()
        )));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Ok(Tensor { dims, data })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Part {
    pub name: String,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Part {
    pub fn json<T: Serialize>(name: &str, value: &T) -> Self {
        Self {
            name: name.into(),
            content_type: JSON_CONTENT_TYPE.into(),
            body: serde_json::to_vec(value).expect("wire messages serialize"),
        }
    }

    pub fn tensor(name: &str, t: &Tensor) -> Self {
        Self {
            name: name.into(),
            content_type: TENSOR_CONTENT_TYPE.into(),
            body: encode_tensor(t),
        }
    }
}

/// A complete HTTP body with its `Content-Type`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpBody {
    pub content_type: String,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultipartKind {
    FormData,
    Mixed,
}

fn find(haystack: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if needle.is_empty() || haystack.len() < needle.len() {
        return None;
    }
    (from..=haystack.len() - needle.len()).find(|&i| &haystack[i..i + needle.len()] == needle)
}

/// FNV-1a, only used to derive a deterministic boundary.
fn fnv1a(parts: &[Part]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for &b in p.name.as_bytes().iter().chain(&p.body) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn encode_multipart(kind: MultipartKind, parts: &[Part]) -> HttpBody {
    let seed = fnv1a(parts);
    let boundary = (0u32..)
        .map(|salt| format!("zoomground-{seed:016x}-{salt}"))
        .find(|b| {
            parts
                .iter()
                .all(|p| find(&p.body, b.as_bytes(), 0).is_none())
        })
        .expect("some salt avoids every body");
    let (mime, disposition) = match kind {
        MultipartKind::FormData => ("multipart/form-data", "form-data"),
        MultipartKind::Mixed => ("multipart/mixed", "inline"),
    };
    let mut body = Vec::new();
    for p in parts {
        body.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
        body.extend_from_slice(
            format!(
                "Content-Disposition: {disposition}; name=\"{}\"\r\n",
                p.name
            )
            .as_bytes(),
        );
        body.extend_from_slice(format!("Content-Type: {}\r\n\r\n", p.content_type).as_bytes());
        body.extend_from_slice(&p.body);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    HttpBody {
        content_type: format!("{mime}; boundary={boundary}"),
        body,
    }
}

fn boundary_of(content_type: &str) -> Result<String, BackendError> {
    if !content_type
        .trim_start()
        .to_ascii_lowercase()
        .starts_with("multipart/")
    {
        return Err(malformed(format!(
            "expected a multipart body, got {content_type:?}"
        )));
    }
    content_type
        .split(';')
        .filter_map(|p| p.trim().strip_prefix("boundary="))
        .map(|b| b.trim_matches('"').to_string())
        .next()
        .filter(|b| !b.is_empty())
        .ok_or_else(|| malformed(format!("no boundary in {content_type:?}")))
}

fn header_param(line: &str, key: &str) -> Option<String> {
    line.split(';').find_map(|p| {
        p.trim()
            .strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .map(|v| v.trim_matches('"').to_string())
    })
}

pub fn decode_multipart(content_type: &str, body: &[u8]) -> Result<Vec<Part>, BackendError> {
    let boundary = boundary_of(content_type)?;
    let delim = format!("--{boundary}");
    let close = format!("\r\n{delim}");
    let mut pos = find(body, delim.as_bytes(), 0)
        .ok_or_else(|| malformed("multipart body has no opening boundary"))?
        + delim.len();
    let mut parts = Vec::new();
    loop {
        match body.get(pos..pos + 2) {
            Some(b"--") => return Ok(parts),
            Some(b"\r\n") => pos += 2,
            _ => {
                return Err(malformed(
                    "multipart boundary not followed by CRLF or terminator",
                ))
            }
        }
        let header_end =
            find(body, b"\r\n\r\n", pos).ok_or_else(|| malformed("unterminated part headers"))?;
        let headers = std::str::from_utf8(&body[pos..header_end])
            .map_err(|_| malformed("part headers are not UTF-8"))?;
        let mut name = None;
        let mut content_type = String::from("application/octet-stream");
        for line in headers.split("\r\n") {
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            match key.trim().to_ascii_lowercase().as_str() {
                "content-disposition" => name = header_param(value, "name"),
                "content-type" => content_type = value.trim().to_string(),
                _ => {}
            }
        }
        let start = header_end + 4;
        let end = find(body, close.as_bytes(), start)
            .ok_or_else(|| malformed("multipart part is not terminated by a boundary"))?;
        parts.push(Part {
            name: name.ok_or_else(|| malformed("part without a name"))?,
            content_type,
            body: body[start..end].to_vec(),
        });
        pos = end + close.len();
    }
}

fn take_part<'a>(parts: &'a [Part], name: &str) -> Result<&'a Part, BackendError> {
    parts
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| malformed(format!("missing `{name}` part")))
}

fn parse_json<T: for<'de> Deserialize<'de>>(bytes: &[u8], what: &str) -> Result<T, BackendError> {
    serde_json::from_slice(bytes).map_err(|e| malformed(format!("bad {what} JSON: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilitiesMessage {
    pub protocol_version: u32,
    #[serde(flatten)]
    pub capabilities: BackendCapabilities,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitThoughtsRequest {
    pub n_vectors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub instruction: String,
    pub layer_fraction: f64,
    pub phase: CapturePhase,
    pub image_format: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub rows: usize,
    pub cols: usize,
    pub patch_px_x: f64,
    pub patch_px_y: f64,
    pub image_width: u32,
    pub image_height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMeta {
    pub step_id: usize,
    pub head_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponseMeta {
    pub text: String,
    pub grid: GridMeta,
    pub probing_steps_found: usize,
    pub slice_count: usize,
    pub capture_phase: CapturePhase,
    pub slices: Vec<SliceMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineEvalRequest {
    pub instruction: String,
    pub max_tokens: usize,
    pub image_format: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineEvalResponseMeta {
    pub description: String,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMessage {
    pub code: String,
    pub message: String,
}

fn thoughts_tensor(v: &ThoughtVectors) -> Tensor {
    Tensor {
        dims: vec![v.count(), v.dim()],
        data: v.values().iter().map(|&x| x as f32).collect(),
    }
}

fn tensor_to_thoughts(t: Tensor) -> Result<ThoughtVectors, BackendError> {
    if t.dims.len() != 2 {
        return Err(BackendError::Shape {
            expected: vec![0, 0],
            actual: t.dims,
        });
    }
    ThoughtVectors::new(
        t.dims[0],
        t.dims[1],
        t.data.into_iter().map(f64::from).collect(),
    )
    .map_err(|e| malformed(e.to_string()))
}

pub fn encode_capabilities(caps: &BackendCapabilities, protocol_version: u32) -> HttpBody {
    HttpBody {
        content_type: JSON_CONTENT_TYPE.into(),
        body: serde_json::to_vec(&CapabilitiesMessage {
            protocol_version,
            capabilities: caps.clone(),
        })
        .expect("serializable"),
    }
}

pub fn decode_capabilities(body: &[u8]) -> Result<CapabilitiesMessage, BackendError> {
    parse_json(body, "capabilities")
}

pub fn encode_thoughts(v: &ThoughtVectors) -> HttpBody {
    encode_multipart(
        MultipartKind::Mixed,
        &[
            Part::json("meta", &serde_json::json!({})),
            Part::tensor("tensor", &thoughts_tensor(v)),
        ],
    )
}

pub fn decode_thoughts(content_type: &str, body: &[u8]) -> Result<ThoughtVectors, BackendError> {
    let parts = decode_multipart(content_type, body)?;
    tensor_to_thoughts(decode_tensor(&take_part(&parts, "tensor")?.body)?)
}

pub fn encode_generate_request(
    image: &RasterImage,
    instruction: &str,
    layer_fraction: f64,
    phase: CapturePhase,
) -> Result<HttpBody, BackendError> {
    let meta = GenerateRequest {
        instruction: instruction.into(),
        layer_fraction,
        phase,
        image_format: "png".into(),
    };
    Ok(encode_multipart(
        MultipartKind::FormData,
        &[
            Part::json("meta", &meta),
            Part {
                name: "image".into(),
                content_type: "image/png".into(),
                body: image.encode_png()?,
            },
        ],
    ))
}

pub fn decode_generate_request(
    content_type: &str,
    body: &[u8],
) -> Result<(GenerateRequest, RasterImage), BackendError> {
    let parts = decode_multipart(content_type, body)?;
    let meta: GenerateRequest = parse_json(&take_part(&parts, "meta")?.body, "generate request")?;
    let image = RasterImage::decode(&take_part(&parts, "image")?.body)?;
    Ok((meta, image))
}

pub fn encode_generation_outcome(o: &GenerationOutcome) -> HttpBody {
    let meta = GenerateResponseMeta {
        text: o.text.clone(),
        grid: GridMeta {
            rows: o.grid.rows,
            cols: o.grid.cols,
            patch_px_x: o.grid.patch.x,
            patch_px_y: o.grid.patch.y,
            image_width: o.grid.image_dims.width,
            image_height: o.grid.image_dims.height,
        },
        probing_steps_found: o.probing_steps_found,
        slice_count: o.probing_slices.len(),
        capture_phase: o.capture_phase,
        slices: o
            .probing_slices
            .iter()
            .map(|s| SliceMeta {
                step_id: s.step_id,
                head_id: s.head_id,
            })
            .collect(),
    };
    let data = o
        .probing_slices
        .iter()
        .flat_map(|s| s.map.values().iter().copied())
        .collect();
    let tensor = Tensor {
        dims: vec![o.probing_slices.len(), o.grid.rows, o.grid.cols],
        data,
    };
    encode_multipart(
        MultipartKind::Mixed,
        &[Part::json("meta", &meta), Part::tensor("tensor", &tensor)],
    )
}

pub fn decode_generation_outcome(
    content_type: &str,
    body: &[u8],
) -> Result<GenerationOutcome, BackendError> {
    let parts = decode_multipart(content_type, body)?;
    let meta: GenerateResponseMeta =
        parse_json(&take_part(&parts, "meta")?.body, "generate response")?;
    let tensor = decode_tensor(&take_part(&parts, "tensor")?.body)?;
    let g = &meta.grid;
    let expected = vec![meta.slice_count, g.rows, g.cols];
    if tensor.dims != expected || meta.slices.len() != meta.slice_count {
        return Err(BackendError::Shape {
            expected,
            actual: tensor.dims,
        });
    }
    let grid = VisualGrid {
        rows: g.rows,
        cols: g.cols,
        patch: PatchSize {
            x: g.patch_px_x,
            y: g.patch_px_y,
        },
        image_dims: Dims::new(g.image_width, g.image_height),
    };
    let cells = g.rows * g.cols;
    let probing_slices = meta
        .slices
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let values = tensor.data[i * cells..(i + 1) * cells].to_vec();
            Ok(AttentionSlice {
                step_id: s.step_id,
                head_id: s.head_id,
                map: AttentionMap::new(g.rows, g.cols, values)?,
            })
        })
        .collect::<Result<Vec<_>, BackendError>>()?;
    Ok(GenerationOutcome {
        text: meta.text,
        grid,
        probing_slices,
        probing_steps_found: meta.probing_steps_found,
        capture_phase: meta.capture_phase,
    })
}

pub fn encode_refine_request(
    image: &RasterImage,
    instruction: &str,
    v: &ThoughtVectors,
    max_tokens: usize,
) -> Result<HttpBody, BackendError> {
    let meta = RefineEvalRequest {
        instruction: instruction.into(),
        max_tokens,
        image_format: "png".into(),
    };
    Ok(encode_multipart(
        MultipartKind::FormData,
        &[
            Part::json("meta", &meta),
            Part {
                name: "image".into(),
                content_type: "image/png".into(),
                body: image.encode_png()?,
            },
            Part::tensor("tensor", &thoughts_tensor(v)),
        ],
    ))
}

pub fn decode_refine_request(
    content_type: &str,
    body: &[u8],
) -> Result<(RefineEvalRequest, RasterImage, ThoughtVectors), BackendError> {
    let parts = decode_multipart(content_type, body)?;
    let meta: RefineEvalRequest =
        parse_json(&take_part(&parts, "meta")?.body, "refine-eval request")?;
    let image = RasterImage::decode(&take_part(&parts, "image")?.body)?;
    let v = tensor_to_thoughts(decode_tensor(&take_part(&parts, "tensor")?.body)?)?;
    Ok((meta, image, v))
}

pub fn encode_refine_outcome(o: &RefineEvalOutcome) -> HttpBody {
    let meta = RefineEvalResponseMeta {
        description: o.description.clone(),
        objective: o.objective,
    };
    let tensor = Tensor {
        dims: vec![o.gradient_dims.0, o.gradient_dims.1],
        data: o.gradient.iter().map(|&g| g as f32).collect(),
    };
    encode_multipart(
        MultipartKind::Mixed,
        &[Part::json("meta", &meta), Part::tensor("tensor", &tensor)],
    )
}

pub fn decode_refine_outcome(
    content_type: &str,
    body: &[u8],
) -> Result<RefineEvalOutcome, BackendError> {
    let parts = decode_multipart(content_type, body)?;
    let meta: RefineEvalResponseMeta =
        parse_json(&take_part(&parts, "meta")?.body, "refine-eval response")?;
    let tensor = decode_tensor(&take_part(&parts, "tensor")?.body)?;
    if tensor.dims.len() != 2 {
        return Err(BackendError::Shape {
            expected: vec![0, 0],
            actual: tensor.dims,
        });
    }
    Ok(RefineEvalOutcome {
        description: meta.description,
        objective: meta.objective,
        gradient_dims: (tensor.dims[0], tensor.dims[1]),
        gradient: tensor.data.into_iter().map(f64::from).collect(),
    })
}

pub fn encode_error(code: &str, message: &str) -> HttpBody {
    HttpBody {
        content_type: JSON_CONTENT_TYPE.into(),
        body: serde_json::to_vec(&ErrorMessage {
            code: code.into(),
            message: message.into(),
        })
        .expect("serializable"),
    }
}

/// Serves any [`Backend`](super::Backend) over the protocol, independent of
/// the HTTP server in use. Handy as a conformance reference and for tests.
pub mod server {
    use super::*;
    use crate::backend::Backend;

    fn status_for(e: &BackendError) -> (u16, &'static str) {
        match e {
            BackendError::Capability(_) => (422, "capability"),
            BackendError::Shape { .. } => (422, "shape"),
            BackendError::EmptyAttention => (422, "empty_attention"),
            BackendError::MalformedFrame(_) | BackendError::Image(_) => (400, "malformed_frame"),
            _ => (500, "internal"),
        }
    }

    /// Handles one request; returns the status code and response body.
    pub fn dispatch<B: Backend + ?Sized>(
        backend: &B,
        path: &str,
        content_type: &str,
        body: &[u8],
    ) -> (u16, HttpBody) {
        let result = match path {
            PATH_CAPABILITIES => backend
                .capabilities()
                .map(|c| encode_capabilities(&c, PROTOCOL_VERSION)),
            PATH_INIT_THOUGHTS => parse_json::<InitThoughtsRequest>(body, "init-thoughts request")
                .and_then(|r| backend.initial_thoughts(r.n_vectors))
                .map(|v| encode_thoughts(&v)),
            PATH_GENERATE => decode_generate_request(content_type, body)
                .and_then(|(m, img)| {
                    backend.generate_grounding(&img, &m.instruction, m.layer_fraction, m.phase)
                })
                .map(|o| encode_generation_outcome(&o)),
            PATH_REFINE_EVAL => decode_refine_request(content_type, body)
                .and_then(|(m, img, v)| backend.refine_eval(&img, &m.instruction, &v, m.max_tokens))
                .map(|o| encode_refine_outcome(&o)),
            other => {
                return (
                    404,
                    encode_error("not_found", &format!("no endpoint {other}")),
                )
            }
        };
        match result {
            Ok(body) => (200, body),
            Err(e) => {
                let (status, code) = status_for(&e);
                (status, encode_error(code, &e.to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_golden_bytes() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let bytes = encode_tensor(&t);
        let mut expected = b"ZGTENSR1".to_vec();
        expected.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        expected.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]);
        expected.extend_from_slice(&[0x00, 0x00, 0x20, 0xc0]);
        assert_eq!(bytes, expected);
        assert_eq!(decode_tensor(&bytes).unwrap(), t);
    }

    #[test]
    fn truncated_tensor_names_byte_counts() {
        let t = Tensor::new(vec![2, 3], vec![0.5; 6]).unwrap();
        let bytes = encode_tensor(&t);
        let err = decode_tensor(&bytes[..bytes.len() - 3]).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, BackendError::MalformedFrame(_)));
        assert!(msg.contains("44") && msg.contains("41"), "{msg}");
    }

    #[test]
    fn bad_magic_and_short_header() {
        assert!(matches!(
            decode_tensor(b"ZGTENSR2\0\0\0\0"),
            Err(BackendError::MalformedFrame(_))
        ));
        assert!(matches!(
            decode_tensor(b"ZG"),
            Err(BackendError::MalformedFrame(_))
        ));
        let mut rank_lies = b"ZGTENSR1".to_vec();
        rank_lies.extend_from_slice(&3u32.to_le_bytes());
        assert!(matches!(
            decode_tensor(&rank_lies),
            Err(BackendError::MalformedFrame(_))
        ));
    }

    #[test]
    fn multipart_round_trip() {
        let parts = vec![
            Part::json("meta", &serde_json::json!({"a": 1})),
            Part {
                name: "blob".into(),
                content_type: "application/octet-stream".into(),
                body: b"\r\n--not-a-boundary\r\n\x00\xff".to_vec(),
            },
        ];
        let http = encode_multipart(MultipartKind::Mixed, &parts);
        assert!(http.content_type.starts_with("multipart/mixed; boundary="));
        assert_eq!(
            decode_multipart(&http.content_type, &http.body).unwrap(),
            parts
        );
    }

    #[test]
    fn multipart_rejects_garbage() {
        assert!(decode_multipart("application/json", b"{}").is_err());
        assert!(decode_multipart("multipart/mixed; boundary=x", b"nothing here").is_err());
        assert!(decode_multipart(
            "multipart/mixed; boundary=x",
            b"--x\r\nContent-Type: a\r\n\r\nbody"
        )
        .is_err());
    }
}
