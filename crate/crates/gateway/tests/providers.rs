use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use morphforge_core::gates::cosine_distance;
use morphforge_core::latent::LatentVector;
use morphforge_core::Raster;
use morphforge_gateway::server::{handle, LocalServer, Request, Response};
use morphforge_gateway::{
    Capability, CapabilitySet, FileProvider, GatewayError, HttpConfig, HttpProvider, Provider, ProviderExt, ToyConfig,
    ToyProvider,
};

fn toy() -> Arc<ToyProvider> {
    Arc::new(ToyProvider::new(ToyConfig::default()).unwrap())
}

fn fast(url: String) -> HttpConfig {
    HttpConfig {
        backoff: Duration::from_millis(1),
        timeout: Duration::from_secs(10),
        ..HttpConfig::new(url)
    }
}

#[test]
fn http_provider_matches_toy_provider() {
    let local = toy();
    let server = LocalServer::serve(local.clone()).unwrap();
    let remote = HttpProvider::connect(fast(server.url())).unwrap();
    assert_eq!(remote.capabilities(), local.capabilities());

    let latents = remote.sample_latents(3, 42).unwrap();
    assert_eq!(latents, local.sample_latents(3, 42).unwrap());
    let images = remote.decode_latents(&latents).unwrap();
    let direct = local.decode_latents(&latents).unwrap();
    assert_eq!(images, direct);
    assert_eq!(
        remote.embed_faces(&images).unwrap(),
        local.embed_faces(&direct).unwrap()
    );
    assert_eq!(
        remote.estimate_poses(&images).unwrap(),
        local.estimate_poses(&direct).unwrap()
    );
    assert_eq!(
        remote.detect_landmarks(&images).unwrap(),
        local.detect_landmarks(&direct).unwrap()
    );
    assert_eq!(
        remote.label_genders(&images).unwrap(),
        local.label_genders(&direct).unwrap()
    );

    let e = remote.embed_faces(&[images[0].clone(), images[0].clone()]).unwrap();
    assert_eq!(cosine_distance(&e[0], &e[1]).unwrap(), 0.0);
}

#[test]
fn no_face_is_distinct_from_transport_failure() {
    let server = LocalServer::serve(toy()).unwrap();
    let remote = HttpProvider::connect(fast(server.url())).unwrap();
    let face = remote.decode_latent(&remote.sample_latents(1, 1).unwrap()[0]).unwrap();
    let blank = Raster::filled(256, 256, 1, 90);
    match remote.estimate_poses(&[face, blank]) {
        Err(GatewayError::NoFace { index }) => assert_eq!(index, 1),
        other => panic!("expected no-face error, got {other:?}"),
    }

    let dead = fast("http://127.0.0.1:9".into());
    match HttpProvider::connect(HttpConfig { retries: 2, ..dead }) {
        Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        Err(e) => panic!("expected transport error, got {e}"),
        Ok(_) => panic!("expected transport error"),
    }
}

/// Delegates to the toy provider after failing the first `failures` data calls.
fn flaky(failures: usize, status: u16, calls: Arc<AtomicUsize>) -> LocalServer {
    let provider = toy();
    LocalServer::with_handler(Arc::new(move |req: &Request| {
        if req.path == "/v1/health" {
            return handle(provider.as_ref(), req);
        }
        let n = calls.fetch_add(1, Ordering::SeqCst);
        if n < failures {
            Response::error(status, "temporarily unavailable")
        } else {
            handle(provider.as_ref(), req)
        }
    }))
    .unwrap()
}

#[test]
fn server_errors_are_retried_with_backoff() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = flaky(2, 503, calls.clone());
    let remote = HttpProvider::connect(fast(server.url())).unwrap();
    assert_eq!(remote.sample_latents(2, 5).unwrap().len(), 2);
    assert_eq!(calls.load(Ordering::SeqCst), 3);

    let calls = Arc::new(AtomicUsize::new(0));
    let server = flaky(10, 500, calls.clone());
    let remote = HttpProvider::connect(HttpConfig {
        retries: 3,
        ..fast(server.url())
    })
    .unwrap();
    assert!(matches!(
        remote.sample_latents(1, 5),
        Err(GatewayError::Server { status: 500, .. })
    ));
    assert_eq!(calls.load(Ordering::SeqCst), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = flaky(10, 400, calls.clone());
    let remote = HttpProvider::connect(fast(server.url())).unwrap();
    assert!(matches!(remote.sample_latents(1, 5), Err(GatewayError::BadRequest(_))));
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_and_mismatched_responses_are_rejected() {
    let provider = toy();
    let server = LocalServer::with_handler(Arc::new(move |req: &Request| {
        if req.path == "/v1/pose" {
            Response {
                status: 200,
                body: b"{\"poses\": 3}".to_vec(),
            }
        } else {
            handle(provider.as_ref(), req)
        }
    }))
    .unwrap();
    let remote = HttpProvider::connect(HttpConfig {
        embedding_dim: Some(8),
        ..fast(server.url())
    })
    .unwrap();
    let img = remote.decode_latent(&remote.sample_latents(1, 2).unwrap()[0]).unwrap();
    assert!(matches!(remote.estimate_pose(&img), Err(GatewayError::Malformed(_))));
    assert!(matches!(
        remote.embed_face(&img),
        Err(GatewayError::EmbeddingDim {
            expected: 8,
            actual: 16
        })
    ));
}

#[test]
fn in_flight_requests_are_bounded() {
    let provider = toy();
    let current = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (c, p) = (current.clone(), peak.clone());
    let server = LocalServer::with_handler(Arc::new(move |req: &Request| {
        if req.path == "/v1/health" {
            return handle(provider.as_ref(), req);
        }
        let now = c.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(30));
        c.fetch_sub(1, Ordering::SeqCst);
        handle(provider.as_ref(), req)
    }))
    .unwrap();
    let remote = Arc::new(
        HttpProvider::connect(HttpConfig {
            max_in_flight: 2,
            ..fast(server.url())
        })
        .unwrap(),
    );
    let workers: Vec<_> = (0..6)
        .map(|i| {
            let r = remote.clone();
            std::thread::spawn(move || r.sample_latents(1, i).unwrap())
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    assert!(peak.load(Ordering::SeqCst) <= 2);
    assert!(peak.load(Ordering::SeqCst) >= 1);
}

#[test]
fn unsupported_capabilities_fail_before_any_request() {
    let dir = tempfile::tempdir().unwrap();
    let caps: CapabilitySet = [Capability::DecodeLatent].into_iter().collect();
    let store = Arc::new(FileProvider::create(dir.path(), &caps, None).unwrap());
    let server = LocalServer::serve(store).unwrap();
    let remote = HttpProvider::connect(fast(server.url())).unwrap();
    assert!(matches!(
        remote.sample_latents(1, 0),
        Err(GatewayError::Unsupported(Capability::SampleLatent))
    ));
    let raw = handle(
        &FileProvider::open(dir.path()).unwrap(),
        &Request {
            method: "POST".into(),
            path: "/v1/embed".into(),
            body: b"{\"images\":[]}".to_vec(),
        },
    );
    assert_eq!(raw.status, 404);
}

#[test]
fn file_provider_replays_recorded_outputs() {
    let toy = toy();
    let dir = tempfile::tempdir().unwrap();
    let store = FileProvider::create(dir.path(), toy.capabilities(), toy.embedding_dim()).unwrap();
    let latents = toy.sample_latents(2, 8).unwrap();
    store.put_samples(8, &latents).unwrap();
    for w in &latents {
        let img = toy.decode_latent(w).unwrap();
        store.put_decode(w, &img).unwrap();
        store.put_embedding(&img, &toy.embed_face(&img).unwrap()).unwrap();
        store.put_pose(&img, &toy.estimate_pose(&img).unwrap()).unwrap();
        store
            .put_landmarks(&img, &toy.detect_landmarks_one(&img).unwrap())
            .unwrap();
        store.put_gender(&img, toy.label_gender(&img).unwrap()).unwrap();
    }

    let replay = FileProvider::open(dir.path()).unwrap();
    assert_eq!(replay.sample_latents(2, 8).unwrap(), latents);
    let images = replay.decode_latents(&latents).unwrap();
    assert_eq!(images, toy.decode_latents(&latents).unwrap());
    assert_eq!(replay.embed_faces(&images).unwrap(), toy.embed_faces(&images).unwrap());
    assert_eq!(
        replay.estimate_poses(&images).unwrap(),
        toy.estimate_poses(&images).unwrap()
    );
    assert_eq!(
        replay.detect_landmarks(&images).unwrap(),
        toy.detect_landmarks(&images).unwrap()
    );
    assert_eq!(
        replay.label_genders(&images).unwrap(),
        toy.label_genders(&images).unwrap()
    );

    let unseen = LatentVector::new(vec![0.5; 32]).unwrap();
    match replay.decode_latent(&unseen) {
        Err(GatewayError::NotFound(key)) => {
            assert!(key.starts_with("decode/"));
            assert_eq!(key.len(), "decode/".len() + 64);
        }
        other => panic!("expected artifact not found, got {other:?}"),
    }
}

#[test]
fn malformed_requests_get_error_bodies_and_server_survives() {
    let server = LocalServer::serve(toy()).unwrap();
    let provider = toy();
    let bad_bodies: [&[u8]; 5] = [
        b"",
        b"{",
        b"{\"latents\":\"%%%\"}",
        b"{\"latents\":\"U1lOVg==\"}",
        b"{\"images\":[\"aGVsbG8=\"]}",
    ];
    for path in ["/v1/decode", "/v1/embed", "/v1/pose", "/v1/landmarks", "/v1/sample"] {
        for body in bad_bodies {
            let r = handle(
                provider.as_ref(),
                &Request {
                    method: "POST".into(),
                    path: path.into(),
                    body: body.to_vec(),
                },
            );
            assert!((400..500).contains(&r.status), "{path} {:?} -> {}", body, r.status);
            let parsed: serde_json::Value = serde_json::from_slice(&r.body).unwrap();
            assert!(parsed["error"].is_string());
        }
    }
    let remote = HttpProvider::connect(fast(server.url())).unwrap();
    assert_eq!(remote.sample_latents(1, 3).unwrap().len(), 1);
}
