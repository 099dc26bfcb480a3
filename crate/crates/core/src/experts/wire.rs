//! Request/response types of the HTTP/JSON expert protocol.
//!
//! All endpoints are POST with UTF-8 `application/json` bodies. RLE runs are
//! row-major flattened pixel indices, identical to the scene-bundle mask
//! layout. A 4xx reply carries `{"error": "..."}` and maps to a protocol
//! error; 5xx and timeouts map to transport errors.

use serde::{Deserialize, Serialize};

use super::{Detection, ExpertError};
use crate::consensus::Mask;

/// `{"size": [h, w], "runs": [s0, l0, s1, l1, ...]}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMaskRle {
    pub size: [u32; 2],
    pub runs: Vec<u32>,
}

impl WireMaskRle {
    pub fn from_mask(mask: &Mask) -> Self {
        let mut runs = Vec::with_capacity(mask.runs.len() * 2);
        for &(start, len) in &mask.runs {
            runs.push(start);
            runs.push(len);
        }
        Self {
            size: [mask.height, mask.width],
            runs,
        }
    }

    pub fn to_mask(&self) -> Result<Mask, ExpertError> {
        if self.runs.len() % 2 != 0 {
            return Err(ExpertError::Protocol(
                "RLE runs array has odd length".to_string(),
            ));
        }
        let pixels = self.size[0] as u64 * self.size[1] as u64;
        let mut pairs = Vec::with_capacity(self.runs.len() / 2);
        let mut prev_end = 0u64;
        for pair in self.runs.chunks_exact(2) {
            let (start, len) = (pair[0], pair[1]);
            let end = start as u64 + len as u64;
            if (start as u64) < prev_end || end > pixels {
                return Err(ExpertError::Protocol(format!(
                    "RLE run ({start}, {len}) unsorted or out of bounds"
                )));
            }
            prev_end = end;
            pairs.push((start, len));
        }
        Ok(Mask::from_runs(self.size[1], self.size[0], pairs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub mask_rle: WireMaskRle,
    pub confidence: f64,
}

impl WireDetection {
    pub fn from_detection(d: &Detection) -> Self {
        Self {
            bbox: [d.bbox.0, d.bbox.1, d.bbox.2, d.bbox.3],
            mask_rle: WireMaskRle::from_mask(&d.mask),
            confidence: d.confidence,
        }
    }

    pub fn to_detection(&self) -> Result<Detection, ExpertError> {
        Ok(Detection {
            mask: self.mask_rle.to_mask()?,
            bbox: (self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3]),
            confidence: self.confidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub candidates: Vec<WireDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItmRequest {
    pub image: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItmResponse {
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifyRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifyResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientRequest {
    pub image: String,
    pub keyword: String,
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientResponse {
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonRequest {
    pub system: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResponse {
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}
