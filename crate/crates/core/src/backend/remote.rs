//! Client side of the wire protocol.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::wire::{self, HttpBody};
use super::{
    Backend, BackendCapabilities, BackendError, CapturePhase, GenerationOutcome, RefineEvalOutcome,
};
use crate::imageops::RasterImage;
use crate::refine::ThoughtVectors;

const MAX_RESPONSE_BYTES: u64 = 1 << 30;

/// Counting gate that caps in-flight requests at the advertised capacity.
#[derive(Debug)]
struct InflightGate {
    capacity: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

impl InflightGate {
    fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            busy: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn enter(&self) -> GateTicket<'_> {
        let mut busy = self.busy.lock().unwrap_or_else(|e| e.into_inner());
        while *busy >= self.capacity {
            busy = self.freed.wait(busy).unwrap_or_else(|e| e.into_inner());
        }
        *busy += 1;
        GateTicket(self)
    }
}

struct GateTicket<'a>(&'a InflightGate);

impl Drop for GateTicket<'_> {
    fn drop(&mut self) {
        let mut busy = self.0.busy.lock().unwrap_or_else(|e| e.into_inner());
        *busy -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteBackend {
    base_url: String,
    agent: ureq::Agent,
    caps: BackendCapabilities,
    gate: InflightGate,
}

impl RemoteBackend {
    /// Fetches and checks capabilities. A protocol version other than
    /// [`wire::PROTOCOL_VERSION`] aborts here, before any tensor moves.
    pub fn connect(base_url: &str) -> Result<Self, BackendError> {
        Self::connect_with_timeout(base_url, Duration::from_secs(600))
    }

    pub fn connect_with_timeout(base_url: &str, timeout: Duration) -> Result<Self, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        let base_url = base_url.trim_end_matches('/').to_string();
        let (_, body) = post(&agent, &base_url, wire::PATH_CAPABILITIES, None)?;
        let msg = wire::decode_capabilities(&body)?;
        if msg.protocol_version != wire::PROTOCOL_VERSION {
            return Err(BackendError::VersionMismatch {
                server: msg.protocol_version,
                client: wire::PROTOCOL_VERSION,
            });
        }
        let gate = InflightGate::new(msg.capabilities.concurrent_capacity);
        Ok(Self {
            base_url,
            agent,
            caps: msg.capabilities,
            gate,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn call(&self, path: &str, body: &HttpBody) -> Result<(String, Vec<u8>), BackendError> {
        let _ticket = self.gate.enter();
        post(&self.agent, &self.base_url, path, Some(body))
    }
}

fn post(
    agent: &ureq::Agent,
    base: &str,
    path: &str,
    body: Option<&HttpBody>,
) -> Result<(String, Vec<u8>), BackendError> {
    let url = format!("{base}{path}");
    let transport = |e: ureq::Error| BackendError::Transport(format!("{url}: {e}"));
    let mut resp = match body {
        Some(b) => agent
            .post(&url)
            .header("Content-Type", &b.content_type)
            .send(&b.body[..])
            .map_err(transport)?,
        None => agent.post(&url).send_empty().map_err(transport)?,
    };
    let status = resp.status().as_u16();
    let content_type = resp
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_string();
    let bytes = resp
        .body_mut()
        .with_config()
        .limit(MAX_RESPONSE_BYTES)
        .read_to_vec()
        .map_err(transport)?;
    if !(200..300).contains(&status) {
        let (code, message) = match serde_json::from_slice::<wire::ErrorMessage>(&bytes) {
            Ok(m) => (m.code, m.message),
            Err(_) => (
                "unknown".into(),
                String::from_utf8_lossy(&bytes).into_owned(),
            ),
        };
        return Err(BackendError::Server {
            status,
            code,
            message,
        });
    }
    Ok((content_type, bytes))
}

impl Backend for RemoteBackend {
    fn capabilities(&self) -> Result<BackendCapabilities, BackendError> {
        Ok(self.caps.clone())
    }

    fn initial_thoughts(&self, n_vectors: usize) -> Result<ThoughtVectors, BackendError> {
        let req = HttpBody {
            content_type: wire::JSON_CONTENT_TYPE.into(),
            body: serde_json::to_vec(&wire::InitThoughtsRequest { n_vectors })
                .expect("serializable"),
        };
        let (ct, body) = self.call(wire::PATH_INIT_THOUGHTS, &req)?;
        let v = wire::decode_thoughts(&ct, &body)?;
        if v.dims() != (n_vectors, self.caps.embedding_dim) {
            return Err(BackendError::Shape {
                expected: vec![n_vectors, self.caps.embedding_dim],
                actual: vec![v.count(), v.dim()],
            });
        }
        Ok(v)
    }

    fn generate_grounding(
        &self,
        image: &RasterImage,
        instruction: &str,
        layer_fraction: f64,
        phase: CapturePhase,
    ) -> Result<GenerationOutcome, BackendError> {
        if !self.caps.supports_phase(phase) {
            return Err(BackendError::Capability(format!(
                "server does not capture {phase} attention"
            )));
        }
        super::select_layer(layer_fraction, self.caps.layer_count)?;
        let req = wire::encode_generate_request(image, instruction, layer_fraction, phase)?;
        let (ct, body) = self.call(wire::PATH_GENERATE, &req)?;
        wire::decode_generation_outcome(&ct, &body)
    }

    fn refine_eval(
        &self,
        image: &RasterImage,
        instruction: &str,
        v: &ThoughtVectors,
        max_tokens: usize,
    ) -> Result<RefineEvalOutcome, BackendError> {
        if v.dim() != self.caps.embedding_dim {
            return Err(BackendError::Shape {
                expected: vec![v.count(), self.caps.embedding_dim],
                actual: vec![v.count(), v.dim()],
            });
        }
        let req = wire::encode_refine_request(image, instruction, v, max_tokens)?;
        let (ct, body) = self.call(wire::PATH_REFINE_EVAL, &req)?;
        let out = wire::decode_refine_outcome(&ct, &body)?;
        if out.gradient_dims != v.dims() {
            return Err(BackendError::Shape {
                expected: vec![v.count(), v.dim()],
                actual: vec![out.gradient_dims.0, out.gradient_dims.1],
            });
        }
        Ok(out)
    }
}
