//! JSON bodies of the sidecar protocol. Vector batches travel as base64
//! SYNV blocks, images as base64 PNG.
//!
//! | endpoint           | request               | response                               |
//! |--------------------|-----------------------|----------------------------------------|
//! | `GET /v1/health`   |                       | `{"status":"ok","capabilities":[..]}` |
//! | `POST /v1/sample`  | `{count,seed}`        | `{latents}`                            |
//! | `POST /v1/decode`  | `{latents}`           | `{images:[..]}`                        |
//! | `POST /v1/embed`   | `{images:[..]}`       | `{embeddings}`                         |
//! | `POST /v1/pose`    | `{images:[..]}`       | `{poses:[{yaw,pitch,roll}]}`           |
//! | `POST /v1/landmarks` | `{images:[..]}`     | `{landmarks:[[[x,y] x 68]]}`          |
//! | `POST /v1/gender`  | `{images:[..]}`       | `{genders:["F"|"M"]}`                  |
//!
//! Failures carry `{"error":"<message>"}` with a 4xx or 5xx status.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use morphforge_core::latent::LatentVector;
use morphforge_core::{Embedding, Gender, LandmarkSet, PoseEstimate, Raster, SynvBlock};
use serde::{Deserialize, Serialize};

use crate::{Capability, GatewayError};

pub const HEALTH: &str = "/v1/health";
pub const SAMPLE: &str = "/v1/sample";
pub const DECODE: &str = "/v1/decode";
pub const EMBED: &str = "/v1/embed";
pub const POSE: &str = "/v1/pose";
pub const LANDMARKS: &str = "/v1/landmarks";
pub const GENDER: &str = "/v1/gender";

/// Status used for "no face" failures.
pub const NO_FACE_STATUS: u16 = 422;

pub fn endpoint(capability: Capability) -> &'static str {
    match capability {
        Capability::SampleLatent => SAMPLE,
        Capability::DecodeLatent => DECODE,
        Capability::EmbedFace => EMBED,
        Capability::EstimatePose => POSE,
        Capability::DetectLandmarks => LANDMARKS,
        Capability::LabelGender => GENDER,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub capabilities: Vec<Capability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latents {
    pub latents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Images {
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    pub embeddings: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poses {
    pub poses: Vec<PoseEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub landmarks: Vec<LandmarkSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genders {
    pub genders: Vec<Gender>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn no_face_message(index: usize) -> String {
    format!("no face found in image {index}")
}

/// Inverse of [`no_face_message`]; `None` if the message is about something else.
pub fn parse_no_face(message: &str) -> Option<usize> {
    let rest = message.strip_prefix("no face")?;
    Some(rest.rsplit(' ').next().and_then(|n| n.parse().ok()).unwrap_or(0))
}

pub fn encode_vectors<R: AsRef<[f64]>>(rows: &[R]) -> Result<String, GatewayError> {
    let block = SynvBlock::from_rows(rows).map_err(|e| GatewayError::BadRequest(e.to_string()))?;
    let bytes = block.encode().map_err(|e| GatewayError::BadRequest(e.to_string()))?;
    Ok(STANDARD.encode(bytes))
}

pub fn decode_vectors(text: &str) -> Result<Vec<Vec<f64>>, GatewayError> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| GatewayError::Malformed(format!("base64: {e}")))?;
    let block = SynvBlock::decode(&bytes).map_err(|e| GatewayError::Malformed(format!("SYNV: {e}")))?;
    Ok(block.rows_f64())
}

pub fn encode_latents(latents: &[LatentVector]) -> Result<Latents, GatewayError> {
    let rows: Vec<&[f64]> = latents.iter().map(|w| w.values()).collect();
    Ok(Latents {
        latents: encode_vectors(&rows)?,
    })
}

pub fn decode_latents(body: &Latents) -> Result<Vec<LatentVector>, GatewayError> {
    decode_vectors(&body.latents)?
        .into_iter()
        .map(|v| LatentVector::new(v).map_err(|e| GatewayError::Malformed(e.to_string())))
        .collect()
}

pub fn encode_embeddings(embeddings: &[Embedding]) -> Result<Embeddings, GatewayError> {
    let rows: Vec<&[f64]> = embeddings.iter().map(|e| e.values()).collect();
    Ok(Embeddings {
        embeddings: encode_vectors(&rows)?,
    })
}

pub fn decode_embeddings(body: &Embeddings) -> Result<Vec<Embedding>, GatewayError> {
    Ok(decode_vectors(&body.embeddings)?
        .into_iter()
        .map(Embedding::new)
        .collect())
}

pub fn encode_images(images: &[Raster]) -> Result<Images, GatewayError> {
    let images = images
        .iter()
        .map(|r| {
            r.to_png_bytes()
                .map(|b| STANDARD.encode(b))
                .map_err(|e| GatewayError::BadRequest(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    Ok(Images { images })
}

pub fn decode_images(body: &Images) -> Result<Vec<Raster>, GatewayError> {
    body.images
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let bytes = STANDARD
                .decode(text)
                .map_err(|e| GatewayError::Malformed(format!("image {i}: base64: {e}")))?;
            Raster::from_png_bytes(&bytes).map_err(|e| GatewayError::Malformed(format!("image {i}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_survive_base64_synv() {
        let rows = vec![vec![1.0, -0.5], vec![0.25, 3.0]];
        assert_eq!(decode_vectors(&encode_vectors(&rows).unwrap()).unwrap(), rows);
        assert!(matches!(decode_vectors("!!"), Err(GatewayError::Malformed(_))));
        assert!(matches!(
            decode_vectors(&STANDARD.encode(b"SYNV")),
            Err(GatewayError::Malformed(_))
        ));
    }

    #[test]
    fn field_names_match_protocol() {
        let j = serde_json::to_string(&SampleRequest { count: 2, seed: 7 }).unwrap();
        assert_eq!(j, r#"{"count":2,"seed":7}"#);
        let h = Health {
            status: "ok".into(),
            capabilities: vec![Capability::DecodeLatent, Capability::EmbedFace],
        };
        assert_eq!(
            serde_json::to_string(&h).unwrap(),
            r#"{"status":"ok","capabilities":["decode_latent","embed_face"]}"#
        );
        let p = Poses {
            poses: vec![PoseEstimate {
                yaw: 1.5,
                pitch: 0.0,
                roll: -2.0,
            }],
        };
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"poses":[{"yaw":1.5,"pitch":0.0,"roll":-2.0}]}"#
        );
        let g: Genders = serde_json::from_str(r#"{"genders":["F","M"]}"#).unwrap();
        assert_eq!(g.genders, vec![Gender::F, Gender::M]);
    }

    #[test]
    fn landmarks_are_nested_pairs() {
        let pts: Vec<[f64; 2]> = (0..68).map(|i| [i as f64, 0.5]).collect();
        let body = serde_json::json!({ "landmarks": [pts] }).to_string();
        let parsed: Landmarks = serde_json::from_str(&body).unwrap();
        assert_eq!(parsed.landmarks[0].points()[3].x, 3.0);
        let short = serde_json::json!({ "landmarks": [[[0.0, 0.0]]] }).to_string();
        assert!(serde_json::from_str::<Landmarks>(&short).is_err());
    }

    #[test]
    fn no_face_messages_round_trip() {
        assert_eq!(parse_no_face(&no_face_message(4)), Some(4));
        assert_eq!(parse_no_face("no face"), Some(0));
        assert_eq!(parse_no_face("bad base64"), None);
    }
}
