//! Wire messages of the synthesis service. See `docs/protocol.md`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

/// Largest accepted client message.
pub const MAX_REQUEST_BYTES: usize = 1 << 20;
/// Largest message either side may send (a 2048x1024 PNG fits easily).
pub const MAX_MESSAGE_BYTES: usize = 64 << 20;
/// Equirectangular widths a client may ask for, besides the dataset's own.
pub const TIERS: [usize; 3] = [512, 1024, 2048];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputSpec {
    #[default]
    Equirect,
    /// Pinhole view along the target's forward axis; `fov_deg` is horizontal.
    Perspective { fov_deg: f64, width: u32, height: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRequest {
    /// Echoed in the reply so clients can match responses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<u64>,
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
    #[serde(default)]
    pub output: OutputSpec,
    /// Equirectangular width of the synthesized panorama; the dataset width
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<usize>,
}

impl PoseRequest {
    pub fn at(position: [f64; 3]) -> Self {
        Self {
            request_id: None,
            position,
            yaw: 0.0,
            pitch: 0.0,
            roll: 0.0,
            output: OutputSpec::Equirect,
            quality: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Pose(PoseRequest),
    Health,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameHeader {
    /// Strictly increasing per session, starting at 1.
    pub sequence: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<u64>,
    pub latency_ms: f64,
    pub hole_fraction: f64,
    pub width: u32,
    pub height: u32,
    /// Length of the PNG that follows the header.
    pub png_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub status: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub memory_bytes: usize,
    pub depth_source: String,
    pub world_unit: f64,
    pub tiers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame(FrameHeader),
    /// A queued request was replaced by a newer one before rendering.
    Superseded {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request_id: Option<u64>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request_id: Option<u64>,
        message: String,
    },
    Health(HealthReport),
}

/// Writes one length-prefixed message (big-endian `u32` length).
pub fn write_message(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "message too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// Reads one length-prefixed message; `None` on a clean end of stream.
pub fn read_message(r: &mut impl Read, limit: usize) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > limit {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("message of {len} bytes exceeds the {limit} byte limit"),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}
