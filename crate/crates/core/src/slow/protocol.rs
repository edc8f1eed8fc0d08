//! Wire messages exchanged with the slow module.
//!
//! Each message is a UTF-8 JSON object preceded by its byte length as a
//! big-endian `u32`. Decoding ignores unknown fields and reports the first
//! offending field by name.

use std::io::{self, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbiter::{AebPrompt, Exchange, MetaAction};

/// Token that closes a rationale asking for braking.
pub const AEB_TOKEN: &str = "<AEB>";

/// Frames larger than this are rejected.
pub const MAX_FRAME: usize = 16 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid field `{field}`: {reason}")]
pub struct DecodeError {
    pub field: String,
    pub reason: String,
}

impl DecodeError {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Pixel box in the synthetic front camera image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageBox {
    pub x_min: i32,
    pub y_min: i32,
    pub x_max: i32,
    pub y_max: i32,
}

impl ImageBox {
    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Left,
    Right,
    Hazard,
    BrakeLights,
}

impl Signal {
    pub fn phrase(self) -> &'static str {
        match self {
            Signal::Left => "a blinking left turn signal",
            Signal::Right => "a blinking right turn signal",
            Signal::Hazard => "flashing hazard lights",
            Signal::BrakeLights => "illuminated brake lights",
        }
    }
}

/// One object in the scene summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    /// Noun phrase, e.g. "black vehicle".
    pub description: String,
    pub image_box: ImageBox,
    /// Center-to-center distance to the ego, m.
    pub distance: f64,
    pub signal: Option<Signal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoSummary {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowRequest {
    pub request_id: u64,
    pub tick: u64,
    pub prompt: AebPrompt,
    pub ego: EgoSummary,
    pub scene_summary: Vec<SceneObject>,
    pub history: Vec<Exchange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowResponse {
    pub request_id: u64,
    pub meta_action: MetaAction,
    pub rationale: String,
    /// Projected brake signal in `[0, 1]`.
    pub brake_signal: f64,
}

impl SlowResponse {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(0.0..=1.0).contains(&self.brake_signal) {
            return Err(DecodeError::new("brake_signal", format!("{} is outside [0, 1]", self.brake_signal)));
        }
        if self.rationale.trim().is_empty() {
            return Err(DecodeError::new("rationale", "empty"));
        }
        if self.rationale.trim_end().ends_with(AEB_TOKEN) != self.meta_action.is_hazard() {
            return Err(DecodeError::new(
                "rationale",
                format!("{AEB_TOKEN} suffix must be present exactly when meta_action is not normal"),
            ));
        }
        Ok(())
    }
}

impl SlowRequest {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.prompt.text.is_empty() {
            return Err(DecodeError::new("prompt.text", "empty"));
        }
        for (i, obj) in self.scene_summary.iter().enumerate() {
            if !obj.image_box.is_valid() {
                return Err(DecodeError::new(format!("scene_summary[{i}].image_box"), "needs x_min < x_max and y_min < y_max"));
            }
        }
        Ok(())
    }
}

/// Logistic projection of a raw score onto `[0, 1]`.
pub fn project_brake_signal(score: f64) -> f64 {
    1.0 / (1.0 + (-score).exp())
}

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("wire types always serialize")
}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, DecodeError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DecodeError::new("$", format!("not UTF-8: {e}")))?;
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let msg = inner.to_string();
        // serde reports a missing field at its parent; name the field itself
        let field = match msg.strip_prefix("missing field `").and_then(|rest| rest.split('`').next()) {
            Some(name) if path == "." => name.to_string(),
            Some(name) => format!("{path}.{name}"),
            None => path,
        };
        DecodeError::new(field, msg)
    })
}

pub fn encode_request(req: &SlowRequest) -> Vec<u8> {
    encode(req)
}

pub fn decode_request(bytes: &[u8]) -> Result<SlowRequest, DecodeError> {
    let req: SlowRequest = decode(bytes)?;
    req.validate()?;
    Ok(req)
}

pub fn encode_response(resp: &SlowResponse) -> Vec<u8> {
    encode(resp)
}

pub fn decode_response(bytes: &[u8]) -> Result<SlowResponse, DecodeError> {
    let resp: SlowResponse = decode(bytes)?;
    resp.validate()?;
    Ok(resp)
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&n| n as usize <= MAX_FRAME)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds limit")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response() -> SlowResponse {
        SlowResponse {
            request_id: 3,
            meta_action: MetaAction::EarlyWarning,
            rationale: "Early Warning. Watch the truck. <AEB>".into(),
            brake_signal: 0.5,
        }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(project_brake_signal(0.0), 0.5);
        assert!(project_brake_signal(10.0) > 0.9999 && project_brake_signal(10.0) < 1.0);
        assert_eq!(project_brake_signal(f64::INFINITY), 1.0);
        // logit(0.1) = ln(0.1 / 0.9) = -2.19722...
        assert!((project_brake_signal(-2.1972) - 0.1).abs() < 1e-4);
    }

    #[test]
    fn response_round_trip() {
        let r = response();
        assert_eq!(decode_response(&encode_response(&r)).unwrap(), r);
    }

    #[test]
    fn missing_field_is_named() {
        let err = decode_response(br#"{"request_id":1,"meta_action":"normal","rationale":"ok"}"#).unwrap_err();
        assert_eq!(err.field, "brake_signal");
    }

    #[test]
    fn unknown_fields_are_dropped() {
        let r = decode_response(br#"{"request_id":1,"meta_action":"normal","rationale":"ok","brake_signal":0.1,"debug":{"x":1}}"#).unwrap();
        assert_eq!(r.request_id, 1);
        assert_eq!(r.brake_signal, 0.1);
    }

    #[test]
    fn bad_type_names_field() {
        let err = decode_response(br#"{"request_id":1,"meta_action":"stop","rationale":"ok","brake_signal":0.1}"#).unwrap_err();
        assert_eq!(err.field, "meta_action");
        let err = decode_response(br#"{"request_id":"x","meta_action":"normal","rationale":"ok","brake_signal":0.1}"#).unwrap_err();
        assert_eq!(err.field, "request_id");
    }

    #[test]
    fn semantic_checks() {
        let mut r = response();
        r.brake_signal = 1.5;
        assert_eq!(decode_response(&encode_response(&r)).unwrap_err().field, "brake_signal");
        let mut r = response();
        r.rationale = "Early Warning. no token".into();
        assert_eq!(decode_response(&encode_response(&r)).unwrap_err().field, "rationale");
        let mut r = response();
        r.meta_action = MetaAction::Normal;
        assert_eq!(decode_response(&encode_response(&r)).unwrap_err().field, "rationale");
    }

    #[test]
    fn framing() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"hello").unwrap();
        write_frame(&mut buf, b"").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 5]);
        let mut cur = io::Cursor::new(buf);
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"hello");
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"");
        assert_eq!(read_frame(&mut cur).unwrap(), None);

        let mut cur = io::Cursor::new(vec![0xff, 0xff, 0xff, 0xff]);
        assert!(read_frame(&mut cur).is_err());
    }
}
