use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use proptest::prelude::*;
use zoomground::backend::wire::{self, server, HttpBody, Tensor};
use zoomground::{
    Backend, BackendError, BoundingBox, CapturePhase, MockBackend, MockConfig, MockTarget,
    RasterImage, RemoteBackend, ToySoftmaxBackend,
};

type Handler = dyn Fn(&str, &str, &[u8]) -> (u16, HttpBody) + Send + Sync;

/// A local HTTP server running `handler` for every request until dropped.
struct TestServer {
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    hits: Arc<AtomicUsize>,
}

impl TestServer {
    fn start(handler: Arc<Handler>) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let (srv, count) = (server.clone(), hits.clone());
        let thread = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                count.fetch_add(1, Ordering::SeqCst);
                let handler = handler.clone();
                std::thread::spawn(move || {
                    let ct = req
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Content-Type"))
                        .map(|h| h.value.as_str().to_string())
                        .unwrap_or_default();
                    let mut body = Vec::new();
                    req.as_reader().read_to_end(&mut body).unwrap();
                    let (status, out) = handler(req.url(), &ct, &body);
                    let header =
                        tiny_http::Header::from_bytes("Content-Type", out.content_type.as_bytes())
                            .unwrap();
                    let resp = tiny_http::Response::from_data(out.body)
                        .with_status_code(status)
                        .with_header(header);
                    let _ = req.respond(resp);
                });
            }
        });
        Self {
            server,
            thread: Some(thread),
            hits,
        }
    }

    fn serving<B: Backend + 'static>(backend: B) -> Self {
        Self::start(Arc::new(move |path: &str, ct: &str, body: &[u8]| {
            server::dispatch(&backend, path, ct, body)
        }))
    }

    fn url(&self) -> String {
        format!("http://{}", self.server.server_addr().to_ip().unwrap())
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn fixed_mock() -> MockBackend {
    MockBackend::new(MockConfig {
        target: MockTarget::Fixed(BoundingBox::new(100.0, 60.0, 140.0, 90.0).unwrap()),
        ..MockConfig::default()
    })
}

#[test]
fn remote_generation_matches_local_backend() {
    let srv = TestServer::serving(fixed_mock());
    let remote = RemoteBackend::connect(&srv.url()).unwrap();
    let local = fixed_mock();
    assert_eq!(
        remote.capabilities().unwrap(),
        local.capabilities().unwrap()
    );

    let img = RasterImage::filled(300, 200, [200, 210, 220]).unwrap();
    for phase in [CapturePhase::Generation, CapturePhase::Prefill] {
        let got = remote
            .generate_grounding(&img, "save button", 0.7, phase)
            .unwrap();
        let want = local
            .generate_grounding(&img, "save button", 0.7, phase)
            .unwrap();
        assert_eq!(got, want);
    }
}

#[test]
fn remote_refine_eval_round_trips() {
    let toy = ToySoftmaxBackend::new(42, 8);
    let srv = TestServer::serving(toy.clone());
    let remote = RemoteBackend::connect(&srv.url()).unwrap();
    let img = RasterImage::filled(4, 4, [0, 0, 0]).unwrap();
    let v = remote.initial_thoughts(6).unwrap();
    assert_eq!(v.dims(), (6, 8));
    let got = remote.refine_eval(&img, "x", &v, 64).unwrap();
    let want = toy.refine_eval(&img, "x", &v, 64).unwrap();
    assert_eq!(got.description, want.description);
    assert!((got.objective - want.objective).abs() < 1e-12);
    for (a, b) in got.gradient.iter().zip(&want.gradient) {
        // Gradients travel as f32.
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
    }
}

#[test]
fn version_mismatch_aborts_before_tensors_move() {
    let caps = fixed_mock().capabilities().unwrap();
    let srv = TestServer::start(Arc::new(move |_: &str, _: &str, _: &[u8]| {
        (200, wire::encode_capabilities(&caps, 2))
    }));
    match RemoteBackend::connect(&srv.url()) {
        Err(BackendError::VersionMismatch {
            server: 2,
            client: 1,
        }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(srv.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn truncated_payload_is_a_malformed_frame() {
    let mock = fixed_mock();
    let srv = TestServer::start(Arc::new(move |path: &str, ct: &str, body: &[u8]| {
        let (status, mut out) = server::dispatch(&mock, path, ct, body);
        if path == wire::PATH_GENERATE {
            let n = out.body.len();
            out.body.truncate(n - 40);
        }
        (status, out)
    }));
    let remote = RemoteBackend::connect(&srv.url()).unwrap();
    let img = RasterImage::filled(300, 200, [0, 0, 0]).unwrap();
    let err = remote
        .generate_grounding(&img, "x", 0.7, CapturePhase::Generation)
        .unwrap_err();
    assert!(matches!(err, BackendError::MalformedFrame(_)), "{err:?}");
}

#[test]
fn client_refuses_unadvertised_phases() {
    let srv = TestServer::serving(ToySoftmaxBackend::new(1, 4));
    let remote = RemoteBackend::connect(&srv.url()).unwrap();
    let img = RasterImage::filled(4, 4, [0, 0, 0]).unwrap();
    let before = srv.hits.load(Ordering::SeqCst);
    assert!(matches!(
        remote.generate_grounding(&img, "x", 0.7, CapturePhase::Generation),
        Err(BackendError::Capability(_))
    ));
    assert_eq!(srv.hits.load(Ordering::SeqCst), before);
}

#[test]
fn server_errors_keep_status_and_code() {
    let caps = fixed_mock().capabilities().unwrap();
    let srv = TestServer::start(Arc::new(move |path: &str, _: &str, _: &[u8]| {
        if path == wire::PATH_CAPABILITIES {
            (
                200,
                wire::encode_capabilities(&caps, wire::PROTOCOL_VERSION),
            )
        } else {
            (500, wire::encode_error("internal", "out of memory"))
        }
    }));
    let remote = RemoteBackend::connect(&srv.url()).unwrap();
    let img = RasterImage::filled(4, 4, [0, 0, 0]).unwrap();
    match remote.generate_grounding(&img, "x", 0.7, CapturePhase::Generation) {
        Err(BackendError::Server {
            status: 500,
            code,
            message,
        }) => {
            assert_eq!(code, "internal");
            assert_eq!(message, "out of memory");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn dispatch_maps_capability_errors_to_422() {
    let toy = ToySoftmaxBackend::new(1, 4);
    let img = RasterImage::filled(4, 4, [0, 0, 0]).unwrap();
    let req = wire::encode_generate_request(&img, "x", 0.7, CapturePhase::Generation).unwrap();
    let (status, body) = server::dispatch(&toy, wire::PATH_GENERATE, &req.content_type, &req.body);
    assert_eq!(status, 422);
    let msg: wire::ErrorMessage = serde_json::from_slice(&body.body).unwrap();
    assert_eq!(msg.code, "capability");
}

#[test]
fn unknown_endpoint_is_404() {
    let (status, body) = server::dispatch(&fixed_mock(), "/v1/nope", "", b"");
    assert_eq!(status, 404);
    let msg: wire::ErrorMessage = serde_json::from_slice(&body.body).unwrap();
    assert_eq!(msg.code, "not_found");
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let err = RemoteBackend::connect_with_timeout(
        &format!("http://127.0.0.1:{port}"),
        Duration::from_secs(2),
    )
    .unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err:?}");
}

#[test]
fn in_flight_requests_never_exceed_capacity() {
    let mock = MockBackend::new(MockConfig {
        concurrent_capacity: 2,
        target: MockTarget::Fixed(BoundingBox::new(1.0, 1.0, 5.0, 5.0).unwrap()),
        ..MockConfig::default()
    });
    let busy = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (b, p) = (busy.clone(), peak.clone());
    let srv = TestServer::start(Arc::new(move |path: &str, ct: &str, body: &[u8]| {
        let now = b.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(30));
        let out = server::dispatch(&mock, path, ct, body);
        b.fetch_sub(1, Ordering::SeqCst);
        out
    }));
    let remote = RemoteBackend::connect(&srv.url()).unwrap();
    peak.store(0, Ordering::SeqCst);
    let img = RasterImage::filled(56, 56, [0, 0, 0]).unwrap();
    std::thread::scope(|s| {
        for _ in 0..6 {
            s.spawn(|| {
                remote
                    .generate_grounding(&img, "x", 0.5, CapturePhase::Generation)
                    .unwrap()
            });
        }
    });
    let seen = peak.load(Ordering::SeqCst);
    assert!((1..=2).contains(&seen), "peak in-flight {seen}");
}

proptest! {
    #[test]
    fn tensors_round_trip(dims in prop::collection::vec(0usize..5, 0..4), seed in any::<u32>()) {
        let n: usize = dims.iter().product();
        let data: Vec<f32> = (0..n).map(|i| (i as f32 + seed as f32).sin()).collect();
        let t = Tensor::new(dims, data).unwrap();
        let bytes = wire::encode_tensor(&t);
        prop_assert_eq!(wire::decode_tensor(&bytes).unwrap(), t.clone());
        if !bytes.is_empty() {
            prop_assert!(wire::decode_tensor(&bytes[..bytes.len() - 1]).is_err());
        }
    }

    #[test]
    fn generation_outcomes_round_trip(x in 0.0f64..250.0, y in 0.0f64..150.0, phase in prop_oneof![Just(CapturePhase::Generation), Just(CapturePhase::Prefill)]) {
        let mock = MockBackend::new(MockConfig {
            target: MockTarget::Fixed(BoundingBox::new(x, y, x + 30.0, y + 20.0).unwrap()),
            ..MockConfig::default()
        });
        let img = RasterImage::filled(300, 200, [0, 0, 0]).unwrap();
        let out = mock.generate_grounding(&img, "x", 0.7, phase).unwrap();
        let body = wire::encode_generation_outcome(&out);
        prop_assert_eq!(wire::decode_generation_outcome(&body.content_type, &body.body).unwrap(), out);
    }
}
