//! Blocking HTTP client for the inference sidecar.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use morphforge_core::latent::LatentVector;
use morphforge_core::{Embedding, Gender, LandmarkSet, PoseEstimate, Raster};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::wire::{self, ErrorBody};
use crate::{check_embedding, Capability, CapabilitySet, GatewayError, Provider};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://127.0.0.1:8750`.
    pub endpoint: String,
    /// Retries after the first attempt for transport failures and 5xx.
    pub retries: u32,
    /// Delay before the first retry; doubles each time.
    pub backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Expected embedding length; checked on every response when set.
    pub embedding_dim: Option<usize>,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            retries: 3,
            backoff: Duration::from_millis(100),
            timeout: Duration::from_secs(60),
            max_in_flight: 8,
            embedding_dim: None,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpProvider {
    config: HttpConfig,
    agent: ureq::Agent,
    slots: Slots,
    capabilities: CapabilitySet,
}

impl HttpProvider {
    /// Connects and reads the capability set from `/v1/health`.
    pub fn connect(config: HttpConfig) -> Result<Self, GatewayError> {
        if config.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut provider = Self {
            slots: Slots::new(config.max_in_flight),
            config,
            agent,
            capabilities: CapabilitySet::new(),
        };
        let health: wire::Health = provider.call(wire::HEALTH, None::<&()>)?;
        if health.status != "ok" {
            return Err(GatewayError::Malformed(format!("sidecar status {:?}", health.status)));
        }
        provider.capabilities = health.capabilities.into_iter().collect();
        Ok(provider)
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn call<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: Option<&B>) -> Result<T, GatewayError> {
        let payload = body
            .map(|b| serde_json::to_vec(b).map_err(|e| GatewayError::BadRequest(e.to_string())))
            .transpose()?;
        let mut delay = self.config.backoff;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _slot = self.slots.acquire();
                self.send_once(path, payload.as_deref())
            };
            match outcome {
                Ok(text) => {
                    return serde_json::from_slice(&text).map_err(|e| GatewayError::Malformed(format!("{path}: {e}")));
                }
                Err(e) if e.is_transient() && attempt <= self.config.retries => {
                    tracing::warn!(path, attempt, "retrying after {e}");
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(GatewayError::Transport { message, .. }) => {
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn send_once(&self, path: &str, payload: Option<&[u8]>) -> Result<Vec<u8>, GatewayError> {
        let url = self.url(path);
        let transport = |e: ureq::Error| GatewayError::Transport {
            attempts: 1,
            message: e.to_string(),
        };
        let mut response = match payload {
            Some(bytes) => self
                .agent
                .post(&url)
                .header("Content-Type", "application/json")
                .send(bytes)
                .map_err(transport)?,
            None => self.agent.get(&url).call().map_err(transport)?,
        };
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_vec()
            .map_err(transport)?;
        if status == 200 {
            return Ok(body);
        }
        let message = serde_json::from_slice::<ErrorBody>(&body)
            .map(|b| b.error)
            .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
        Err(match status {
            wire::NO_FACE_STATUS => match wire::parse_no_face(&message) {
                Some(index) => GatewayError::NoFace { index },
                None => GatewayError::BadRequest(message),
            },
            404 if message.starts_with("artifact not found") => GatewayError::NotFound(message),
            400..=499 => GatewayError::BadRequest(format!("{status}: {message}")),
            _ => GatewayError::Server { status, message },
        })
    }

    fn images_call<T: DeserializeOwned>(&self, capability: Capability, images: &[Raster]) -> Result<T, GatewayError> {
        self.require(capability)?;
        self.call(wire::endpoint(capability), Some(&wire::encode_images(images)?))
    }

    fn require(&self, capability: Capability) -> Result<(), GatewayError> {
        if self.capabilities.contains(&capability) {
            Ok(())
        } else {
            Err(GatewayError::Unsupported(capability))
        }
    }
}

fn check_count<T>(items: Vec<T>, expected: usize, what: &str) -> Result<Vec<T>, GatewayError> {
    if items.len() != expected {
        return Err(GatewayError::Malformed(format!(
            "{what}: expected {expected} results, got {}",
            items.len()
        )));
    }
    Ok(items)
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn capabilities(&self) -> &CapabilitySet {
        &self.capabilities
    }

    fn embedding_dim(&self) -> Option<usize> {
        self.config.embedding_dim
    }

    fn sample_latents(&self, count: usize, seed: u64) -> Result<Vec<LatentVector>, GatewayError> {
        self.require(Capability::SampleLatent)?;
        let body: wire::Latents = self.call(wire::SAMPLE, Some(&wire::SampleRequest { count, seed }))?;
        check_count(wire::decode_latents(&body)?, count, "sample")
    }

    fn decode_latents(&self, latents: &[LatentVector]) -> Result<Vec<Raster>, GatewayError> {
        self.require(Capability::DecodeLatent)?;
        let body: wire::Images = self.call(wire::DECODE, Some(&wire::encode_latents(latents)?))?;
        check_count(wire::decode_images(&body)?, latents.len(), "decode")
    }

    fn embed_faces(&self, images: &[Raster]) -> Result<Vec<Embedding>, GatewayError> {
        let body: wire::Embeddings = self.images_call(Capability::EmbedFace, images)?;
        let embeddings = check_count(wire::decode_embeddings(&body)?, images.len(), "embed")?;
        for e in &embeddings {
            check_embedding(self.config.embedding_dim, e)?;
        }
        Ok(embeddings)
    }

    fn estimate_poses(&self, images: &[Raster]) -> Result<Vec<PoseEstimate>, GatewayError> {
        let body: wire::Poses = self.images_call(Capability::EstimatePose, images)?;
        let poses = check_count(body.poses, images.len(), "pose")?;
        if poses.iter().any(|p| !p.is_valid()) {
            return Err(GatewayError::Malformed("non-finite pose angle".into()));
        }
        Ok(poses)
    }

    fn detect_landmarks(&self, images: &[Raster]) -> Result<Vec<LandmarkSet>, GatewayError> {
        let body: wire::Landmarks = self.images_call(Capability::DetectLandmarks, images)?;
        check_count(body.landmarks, images.len(), "landmarks")
    }

    fn label_genders(&self, images: &[Raster]) -> Result<Vec<Gender>, GatewayError> {
        let body: wire::Genders = self.images_call(Capability::LabelGender, images)?;
        check_count(body.genders, images.len(), "gender")
    }
}
