//! HTTP/JSON expert backend.
//!
//! One [`HttpExperts`] client serves every expert trait against a single
//! base URL (`/detect`, `/itm`, `/simplify`, `/orient`, `/reason`,
//! `/route`). Transport failures (connect errors, timeouts, 5xx) retry with
//! exponential backoff; protocol errors (4xx, malformed bodies,
//! out-of-range values) never do, since they are deterministic.
//!
//! Image payloads travel as base64 PNG. The ITM and orientation endpoints
//! receive pre-cropped images, so the client crops locally before encoding.

use std::io::Cursor;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    DetectRequest, DetectResponse, ErrorResponse, ItmRequest, ItmResponse, OrientRequest,
    OrientResponse, ReasonRequest, ReasonResponse, RouteRequest, RouteResponse, SimplifyRequest,
    SimplifyResponse, WireDetection,
};
use super::{
    b_round3_options, check_itm_score, parse_front_back, parse_left_right, Detection, Detector,
    ExpertEndpointConfig, ExpertError, ImageCrop, ImageRef, ItmScorer, OrientationJudge,
    QueryRouter, Reasoner, Simplifier, Strategy, Verifier,
};
use crate::grounding::Orientation8;
use crate::prompting::RouteLabel;

const BACKOFF_BASE_MS: u64 = 250;

pub struct HttpExperts {
    config: ExpertEndpointConfig,
    client: reqwest::blocking::Client,
}

impl HttpExperts {
    pub fn new(config: ExpertEndpointConfig) -> Result<Self, ExpertError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ExpertError::Usage(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { config, client })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        request: &Req,
    ) -> Result<Resp, ExpertError> {
        let url = format!("{}{path}", self.config.base_url.trim_end_matches('/'));
        let mut attempt = 0u32;
        loop {
            match self.post_once(&url, request) {
                Ok(resp) => return Ok(resp),
                Err(ExpertError::Transport(_)) if attempt < self.config.retries => {
                    std::thread::sleep(Duration::from_millis(BACKOFF_BASE_MS << attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        url: &str,
        request: &Req,
    ) -> Result<Resp, ExpertError> {
        let mut builder = self.client.post(url).json(request);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            ExpertError::Transport(format!("request to {url} failed: {e}"))
        })?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| ExpertError::Transport(format!("reading reply from {url}: {e}")))?;
        if status.is_server_error() {
            return Err(ExpertError::Transport(format!("{url} returned {status}")));
        }
        if status.is_client_error() {
            let detail = serde_json::from_str::<ErrorResponse>(&body)
                .map(|e| e.error)
                .unwrap_or(body);
            return Err(ExpertError::Protocol(format!("{url} returned {status}: {detail}")));
        }
        serde_json::from_str(&body).map_err(|e| {
            ExpertError::Protocol(format!("malformed reply from {url}: {e} (body: {body:?})"))
        })
    }

    fn encode_image(&self, image: &ImageRef) -> Result<String, ExpertError> {
        let png = image.png.as_ref().ok_or_else(|| {
            ExpertError::Usage(format!(
                "image {:?} has no PNG payload for the HTTP backend",
                image.id
            ))
        })?;
        Ok(BASE64.encode(png.as_slice()))
    }

    fn encode_crop(&self, crop: &ImageCrop) -> Result<String, ExpertError> {
        let png = crop.image.png.as_ref().ok_or_else(|| {
            ExpertError::Usage(format!(
                "image {:?} has no PNG payload for the HTTP backend",
                crop.image.id
            ))
        })?;
        Ok(BASE64.encode(crop_png(png, crop.bbox)?))
    }
}

/// Decodes a PNG, crops `(x0, y0, x1, y1)` clamped to the image, and
/// re-encodes. Zero-area crops are protocol errors.
pub fn crop_png(png: &[u8], bbox: (f64, f64, f64, f64)) -> Result<Vec<u8>, ExpertError> {
    let img = image::load_from_memory_with_format(png, image::ImageFormat::Png)
        .map_err(|e| ExpertError::Protocol(format!("undecodable PNG payload: {e}")))?;
    let (w, h) = (img.width(), img.height());
    let x0 = bbox.0.max(0.0).floor() as u32;
    let y0 = bbox.1.max(0.0).floor() as u32;
    let x1 = (bbox.2.ceil() as u32).min(w);
    let y1 = (bbox.3.ceil() as u32).min(h);
    if x1 <= x0 || y1 <= y0 {
        return Err(ExpertError::Protocol(format!(
            "empty crop {bbox:?} of {w}x{h} image"
        )));
    }
    let cropped = img.crop_imm(x0, y0, x1 - x0, y1 - y0);
    let mut out = Cursor::new(Vec::new());
    cropped
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| ExpertError::Protocol(format!("PNG encode failed: {e}")))?;
    Ok(out.into_inner())
}

impl Detector for HttpExperts {
    fn detect(&self, image: &ImageRef, text: &str) -> Result<Vec<Detection>, ExpertError> {
        if text.trim().is_empty() {
            return Err(ExpertError::Usage("empty detection prompt".to_string()));
        }
        let request = DetectRequest {
            image: self.encode_image(image)?,
            text: text.to_string(),
        };
        let response: DetectResponse = self.post("/detect", &request)?;
        response
            .candidates
            .iter()
            .map(WireDetection::to_detection)
            .collect()
    }
}

impl ItmScorer for HttpExperts {
    fn itm_score(&self, crop: &ImageCrop, text: &str) -> Result<f64, ExpertError> {
        let request = ItmRequest {
            image: self.encode_crop(crop)?,
            text: text.to_string(),
        };
        let response: ItmResponse = self.post("/itm", &request)?;
        check_itm_score(response.score)
    }
}

impl Simplifier for HttpExperts {
    fn simplify(&self, text: &str) -> Result<String, ExpertError> {
        if text.trim().is_empty() {
            return Err(ExpertError::Usage("empty simplification input".to_string()));
        }
        let response: SimplifyResponse = self.post(
            "/simplify",
            &SimplifyRequest { text: text.to_string() },
        )?;
        Ok(response.text)
    }
}

impl OrientationJudge for HttpExperts {
    fn orient(
        &self,
        crop: &ImageCrop,
        keyword: &str,
        strategy: Strategy,
    ) -> Result<Orientation8, ExpertError> {
        let image = self.encode_crop(crop)?;
        let ask = |round: Option<u32>, options: Option<Vec<String>>| -> Result<String, ExpertError> {
            let response: OrientResponse = self.post(
                "/orient",
                &OrientRequest {
                    image: image.clone(),
                    keyword: keyword.to_string(),
                    strategy: strategy.as_str().to_string(),
                    round,
                    options,
                },
            )?;
            Ok(response.label)
        };
        let final_label = match strategy {
            Strategy::A | Strategy::C => ask(None, None)?,
            Strategy::BThreeRound => {
                let fb = parse_front_back(&ask(Some(1), None)?)?;
                let lr = parse_left_right(&ask(Some(2), None)?)?;
                let options = b_round3_options(fb, lr)
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                ask(Some(3), Some(options))?
            }
        };
        Orientation8::parse(&final_label).ok_or_else(|| {
            ExpertError::Protocol(format!("unparsable orientation label {final_label:?}"))
        })
    }
}

impl Reasoner for HttpExperts {
    fn complete(&self, system: &str, prompt: &str) -> Result<String, ExpertError> {
        let response: ReasonResponse = self.post(
            "/reason",
            &ReasonRequest {
                system: system.to_string(),
                prompt: prompt.to_string(),
            },
        )?;
        Ok(response.text)
    }
}

impl QueryRouter for HttpExperts {
    fn route(&self, question: &str) -> Result<RouteLabel, ExpertError> {
        let response: RouteResponse = self.post(
            "/route",
            &RouteRequest { question: question.to_string() },
        )?;
        RouteLabel::parse(&response.label).ok_or_else(|| {
            ExpertError::Protocol(format!("unparsable route label {:?}", response.label))
        })
    }
}

impl Verifier for HttpExperts {
    fn verify(&self, crop: &ImageCrop, description: &str) -> Result<bool, ExpertError> {
        // No dedicated endpoint: confirmation rides the reasoner with a
        // caller-defined convention (any reply containing "yes").
        let prompt = format!(
            "Does this crop show: {description}? Answer yes or no.\nIMAGE: {}",
            self.encode_crop(crop)?
        );
        let reply = self.complete("You are a strict visual verifier.", &prompt)?;
        Ok(reply.to_ascii_lowercase().contains("yes"))
    }
}
