//! Newline-delimited JSON protocol between the harness and an external policy.
//!
//! Each line is one flat JSON object: `kind`, `episode`, `step`, an optional
//! `message` string and numeric payload fields (numbers or arrays), e.g.
//!
//! ```text
//! {"kind":"hello","episode":0,"step":0,"action_dim":2,"obs_dim":10,"protocol_version":1}
//! {"kind":"reset","episode":0,"step":0,"seed":7}
//! {"kind":"obs","episode":0,"step":0,"puck_p":[0.8,0.4],"puck_v":[0.0,0.0],"q":[1.2,-2.4,1.0],"qd":[0.0,0.0,0.0]}
//! {"kind":"action","episode":0,"step":0,"v_ee":[1.5,0.0]}
//! {"kind":"bye","episode":0,"step":0}
//! ```
//!
//! Every `obs` is answered by exactly one `action` carrying the same
//! counters. Numbers use the shortest decimal form that round-trips.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Observation, Result};

pub const PROTOCOL_VERSION: u32 = 1;
pub const ACTION_DIM: usize = 2;
pub const OBS_DIM: usize = 10;
/// Longest line the decoder accepts.
pub const MAX_LINE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Hello,
    Obs,
    Action,
    Reset,
    Bye,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PayloadValue {
    /// Counts, dimensions and seeds.
    Integer(u64),
    Number(f64),
    Array(Vec<f64>),
}

impl PayloadValue {
    fn is_finite(&self) -> bool {
        match self {
            PayloadValue::Integer(_) => true,
            PayloadValue::Number(x) => x.is_finite(),
            PayloadValue::Array(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Envelope {
    kind: MessageKind,
    episode: u64,
    step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    #[serde(flatten)]
    payload: BTreeMap<String, PayloadValue>,
}

/// `(q, qd, puck_p, puck_v)`.
pub type Proprioception = (Vector3<f64>, Vector3<f64>, Vector2<f64>, Vector2<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub kind: MessageKind,
    pub episode: u64,
    pub step: u64,
    pub payload: BTreeMap<String, PayloadValue>,
    /// Human-readable text, used by `error` and optionally `bye`.
    pub message: Option<String>,
}

impl WireMessage {
    pub fn new(kind: MessageKind, episode: u64, step: u64) -> Self {
        Self {
            kind,
            episode,
            step,
            payload: BTreeMap::new(),
            message: None,
        }
    }

    pub fn with_number(mut self, key: &str, value: f64) -> Self {
        self.payload
            .insert(key.to_string(), PayloadValue::Number(value));
        self
    }

    pub fn with_integer(mut self, key: &str, value: u64) -> Self {
        self.payload
            .insert(key.to_string(), PayloadValue::Integer(value));
        self
    }

    pub fn with_array(mut self, key: &str, values: &[f64]) -> Self {
        self.payload
            .insert(key.to_string(), PayloadValue::Array(values.to_vec()));
        self
    }

    pub fn with_message(mut self, text: impl Into<String>) -> Self {
        self.message = Some(text.into());
        self
    }

    pub fn hello() -> Self {
        Self::new(MessageKind::Hello, 0, 0)
            .with_integer("protocol_version", u64::from(PROTOCOL_VERSION))
            .with_integer("action_dim", ACTION_DIM as u64)
            .with_integer("obs_dim", OBS_DIM as u64)
    }

    pub fn reset(episode: u64, seed: u64) -> Self {
        Self::new(MessageKind::Reset, episode, 0).with_integer("seed", seed)
    }

    /// The proprioceptive vector: `q[3], qd[3], puck_p[2], puck_v[2]`.
    pub fn obs(episode: u64, step: u64, obs: &Observation<f64>) -> Self {
        Self::new(MessageKind::Obs, episode, step)
            .with_array("q", obs.q.as_slice())
            .with_array("qd", obs.qd.as_slice())
            .with_array("puck_p", obs.puck_p.as_slice())
            .with_array("puck_v", obs.puck_v.as_slice())
    }

    pub fn action(episode: u64, step: u64, v_ee: &Vector2<f64>) -> Self {
        Self::new(MessageKind::Action, episode, step).with_array("v_ee", v_ee.as_slice())
    }

    pub fn bye(episode: u64, step: u64) -> Self {
        Self::new(MessageKind::Bye, episode, step)
    }

    pub fn error(episode: u64, step: u64, text: impl Into<String>) -> Self {
        Self::new(MessageKind::Error, episode, step).with_message(text)
    }

    pub fn number(&self, key: &str) -> Result<f64> {
        match self.payload.get(key) {
            Some(PayloadValue::Integer(x)) => Ok(*x as f64),
            Some(PayloadValue::Number(x)) => Ok(*x),
            Some(PayloadValue::Array(v)) if v.len() == 1 => Ok(v[0]),
            _ => Err(self.missing(key)),
        }
    }

    pub fn integer(&self, key: &str) -> Result<u64> {
        match self.payload.get(key) {
            Some(PayloadValue::Integer(x)) => Ok(*x),
            _ => Err(self.missing(key)),
        }
    }

    pub fn array(&self, key: &str, len: usize) -> Result<&[f64]> {
        match self.payload.get(key) {
            Some(PayloadValue::Array(v)) if v.len() == len => Ok(v),
            _ => Err(self.missing(key)),
        }
    }

    pub fn v_ee(&self) -> Result<Vector2<f64>> {
        Ok(Vector2::from_column_slice(self.array("v_ee", ACTION_DIM)?))
    }

    /// `(q, qd, puck_p, puck_v)` from an `obs` message.
    pub fn proprioception(&self) -> Result<Proprioception> {
        Ok((
            Vector3::from_column_slice(self.array("q", 3)?),
            Vector3::from_column_slice(self.array("qd", 3)?),
            Vector2::from_column_slice(self.array("puck_p", 2)?),
            Vector2::from_column_slice(self.array("puck_v", 2)?),
        ))
    }

    fn missing(&self, key: &str) -> Error {
        Error::Protocol {
            reason: format!(
                "{:?} message lacks numeric field {key:?} of the expected shape",
                self.kind
            ),
            line: encode_message(self).unwrap_or_default(),
        }
    }
}

/// One JSON line, newline not included.
pub fn encode_message(msg: &WireMessage) -> Result<String> {
    if let Some((key, _)) = msg.payload.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::contract(format!(
            "payload field {key:?} is not finite"
        )));
    }
    let envelope = Envelope {
        kind: msg.kind,
        episode: msg.episode,
        step: msg.step,
        message: msg.message.clone(),
        payload: msg.payload.clone(),
    };
    Ok(serde_json::to_string(&envelope)?)
}

/// Parses one line (a trailing newline is tolerated). Never panics.
pub fn decode_message(bytes: &[u8]) -> Result<WireMessage> {
    let protocol = |reason: String| Error::Protocol {
        reason,
        line: String::from_utf8_lossy(&bytes[..bytes.len().min(256)]).into_owned(),
    };
    if bytes.len() > MAX_LINE_BYTES {
        return Err(protocol(format!("line exceeds {MAX_LINE_BYTES} bytes")));
    }
    let text = std::str::from_utf8(bytes).map_err(|e| protocol(format!("invalid utf-8: {e}")))?;
    let text = text.trim_end_matches(['\n', '\r']);
    let envelope: Envelope = serde_json::from_str(text).map_err(|e| protocol(e.to_string()))?;
    let msg = WireMessage {
        kind: envelope.kind,
        episode: envelope.episode,
        step: envelope.step,
        payload: envelope.payload,
        message: envelope.message,
    };
    if msg.payload.values().any(|v| !v.is_finite()) {
        return Err(protocol("non-finite payload value".into()));
    }
    Ok(msg)
}

/// Decoder that also rejects counter regressions across a stream.
#[derive(Debug, Clone, Default)]
pub struct WireDecoder {
    last: Option<(u64, u64)>,
}

impl WireDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn decode(&mut self, bytes: &[u8]) -> Result<WireMessage> {
        let msg = decode_message(bytes)?;
        if let Some((episode, step)) = self.last {
            let regressed = msg.episode < episode || (msg.episode == episode && msg.step < step);
            if regressed {
                return Err(Error::Desync {
                    expected_episode: episode,
                    expected_step: step,
                    episode: msg.episode,
                    step: msg.step,
                });
            }
        }
        self.last = Some((msg.episode, msg.step));
        Ok(msg)
    }
}
