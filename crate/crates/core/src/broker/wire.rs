//! Framed wire protocol for the broker's TCP surface.
//!
//! Every frame is `u32 big-endian length | u8 frame type | body`, where the
//! length covers the type byte plus the body. Strings are u16 big-endian
//! length-prefixed UTF-8; payload blobs are u32 big-endian length-prefixed
//! canonical JSON bytes. A frame longer than the negotiated maximum (16 MiB
//! by default) or with an unknown type is a protocol error that closes the
//! connection.

use std::io::{self, Read, Write};

use thiserror::Error;

/// Default and hard upper bound on a frame (length field value).
pub const MAX_FRAME_SIZE: u32 = 16 * 1024 * 1024;

pub const FRAME_DECLARE: u8 = 1;
pub const FRAME_BIND: u8 = 2;
pub const FRAME_PUBLISH: u8 = 3;
pub const FRAME_SUBSCRIBE: u8 = 4;
pub const FRAME_DELIVER: u8 = 5;
pub const FRAME_ACK: u8 = 6;
pub const FRAME_STATS_REQ: u8 = 7;
pub const FRAME_STATS_RESP: u8 = 8;
pub const FRAME_ERROR: u8 = 9;

/// Error codes carried by ERROR frames.
pub const ERR_UNKNOWN_EXCHANGE: u8 = 1;
pub const ERR_UNKNOWN_QUEUE: u8 = 2;
pub const ERR_BAD_ROUTING: u8 = 3;
pub const ERR_PROTOCOL: u8 = 4;
pub const ERR_UNKNOWN_TAG: u8 = 5;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {size} bytes exceeds maximum {max}")]
    TooLarge { size: u32, max: u32 },
    #[error("frame length must be at least 1")]
    Empty,
    #[error("unknown frame type {0}")]
    UnknownType(u8),
    #[error("truncated frame body")]
    Truncated,
    #[error("trailing bytes after frame body")]
    TrailingBytes,
    #[error("invalid UTF-8 in string field")]
    BadUtf8,
    #[error("connection closed")]
    ConnectionClosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubscribeMode {
    Auto = 0,
    Explicit = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Declare {
        exchange: String,
    },
    Bind {
        exchange: String,
        queue: String,
        pattern: String,
    },
    Publish {
        exchange: String,
        routing_key: String,
        published_at_micros: u64,
        payload: Vec<u8>,
    },
    Subscribe {
        queue: String,
        mode: SubscribeMode,
    },
    Deliver {
        queue: String,
        delivery_tag: u64,
        routing_key: String,
        published_at_micros: u64,
        payload: Vec<u8>,
    },
    Ack {
        queue: String,
        delivery_tag: u64,
    },
    StatsReq,
    StatsResp {
        stats_json: Vec<u8>,
    },
    Error {
        code: u8,
        message: String,
    },
}

impl Frame {
    pub fn frame_type(&self) -> u8 {
        match self {
            Frame::Declare { .. } => FRAME_DECLARE,
            Frame::Bind { .. } => FRAME_BIND,
            Frame::Publish { .. } => FRAME_PUBLISH,
            Frame::Subscribe { .. } => FRAME_SUBSCRIBE,
            Frame::Deliver { .. } => FRAME_DELIVER,
            Frame::Ack { .. } => FRAME_ACK,
            Frame::StatsReq => FRAME_STATS_REQ,
            Frame::StatsResp { .. } => FRAME_STATS_RESP,
            Frame::Error { .. } => FRAME_ERROR,
        }
    }
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    let len = s.len().min(u16::MAX as usize) as u16;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&s.as_bytes()[..len as usize]);
}

fn put_blob(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_be_bytes());
    out.extend_from_slice(b);
}

/// Encodes a frame, including the length prefix.
pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut body = Vec::with_capacity(64);
    body.push(frame.frame_type());
    match frame {
        Frame::Declare { exchange } => put_string(&mut body, exchange),
        Frame::Bind {
            exchange,
            queue,
            pattern,
        } => {
            put_string(&mut body, exchange);
            put_string(&mut body, queue);
            put_string(&mut body, pattern);
        }
        Frame::Publish {
            exchange,
            routing_key,
            published_at_micros,
            payload,
        } => {
            put_string(&mut body, exchange);
            put_string(&mut body, routing_key);
            body.extend_from_slice(&published_at_micros.to_be_bytes());
            put_blob(&mut body, payload);
        }
        Frame::Subscribe { queue, mode } => {
            put_string(&mut body, queue);
            body.push(*mode as u8);
        }
        Frame::Deliver {
            queue,
            delivery_tag,
            routing_key,
            published_at_micros,
            payload,
        } => {
            put_string(&mut body, queue);
            body.extend_from_slice(&delivery_tag.to_be_bytes());
            put_string(&mut body, routing_key);
            body.extend_from_slice(&published_at_micros.to_be_bytes());
            put_blob(&mut body, payload);
        }
        Frame::Ack {
            queue,
            delivery_tag,
        } => {
            put_string(&mut body, queue);
            body.extend_from_slice(&delivery_tag.to_be_bytes());
        }
        Frame::StatsReq => {}
        Frame::StatsResp { stats_json } => put_blob(&mut body, stats_json),
        Frame::Error { code, message } => {
            body.push(*code);
            put_string(&mut body, message);
        }
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

struct BodyReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BodyReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.pos + n > self.bytes.len() {
            return Err(FrameError::Truncated);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, FrameError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FrameError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, FrameError> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| FrameError::BadUtf8)
    }

    fn blob(&mut self) -> Result<Vec<u8>, FrameError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    fn finish(self) -> Result<(), FrameError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(FrameError::TrailingBytes)
        }
    }
}

/// Decodes one frame from `bytes` (a complete length-prefixed frame).
/// Rejects oversized, truncated, and trailing-garbage frames.
pub fn decode_frame(bytes: &[u8], max_frame: u32) -> Result<Frame, FrameError> {
    if bytes.len() < 4 {
        return Err(FrameError::Truncated);
    }
    let declared = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if declared == 0 {
        return Err(FrameError::Empty);
    }
    if declared > max_frame {
        return Err(FrameError::TooLarge {
            size: declared,
            max: max_frame,
        });
    }
    if bytes.len() < 4 + declared as usize {
        return Err(FrameError::Truncated);
    }
    if bytes.len() > 4 + declared as usize {
        return Err(FrameError::TrailingBytes);
    }
    decode_body(&bytes[4..])
}

fn decode_body(body: &[u8]) -> Result<Frame, FrameError> {
    let mut reader = BodyReader {
        bytes: body,
        pos: 0,
    };
    let frame_type = reader.u8()?;
    let frame = match frame_type {
        FRAME_DECLARE => Frame::Declare {
            exchange: reader.string()?,
        },
        FRAME_BIND => Frame::Bind {
            exchange: reader.string()?,
            queue: reader.string()?,
            pattern: reader.string()?,
        },
        FRAME_PUBLISH => Frame::Publish {
            exchange: reader.string()?,
            routing_key: reader.string()?,
            published_at_micros: reader.u64()?,
            payload: reader.blob()?,
        },
        FRAME_SUBSCRIBE => {
            let queue = reader.string()?;
            let mode = match reader.u8()? {
                0 => SubscribeMode::Auto,
                1 => SubscribeMode::Explicit,
                other => return Err(FrameError::UnknownType(other)),
            };
            Frame::Subscribe { queue, mode }
        }
        FRAME_DELIVER => Frame::Deliver {
            queue: reader.string()?,
            delivery_tag: reader.u64()?,
            routing_key: reader.string()?,
            published_at_micros: reader.u64()?,
            payload: reader.blob()?,
        },
        FRAME_ACK => Frame::Ack {
            queue: reader.string()?,
            delivery_tag: reader.u64()?,
        },
        FRAME_STATS_REQ => Frame::StatsReq,
        FRAME_STATS_RESP => Frame::StatsResp {
            stats_json: reader.blob()?,
        },
        FRAME_ERROR => Frame::Error {
            code: reader.u8()?,
            message: reader.string()?,
        },
        other => return Err(FrameError::UnknownType(other)),
    };
    reader.finish()?;
    Ok(frame)
}

/// Writes one frame to a stream.
pub fn write_frame<W: Write>(writer: &mut W, frame: &Frame) -> Result<(), FrameError> {
    writer.write_all(&encode_frame(frame))?;
    Ok(())
}

/// Writes a PUBLISH frame without building an intermediate frame value:
/// byte-identical to `write_frame` with `Frame::Publish`, minus the copies.
/// This is the producer hot path.
pub fn write_publish_frame<W: Write>(
    writer: &mut W,
    exchange: &str,
    routing_key: &str,
    published_at_micros: u64,
    payload: &[u8],
) -> Result<(), FrameError> {
    let body_len = 1 + 2 + exchange.len() + 2 + routing_key.len() + 8 + 4 + payload.len();
    writer.write_all(&(body_len as u32).to_be_bytes())?;
    writer.write_all(&[FRAME_PUBLISH])?;
    writer.write_all(&(exchange.len() as u16).to_be_bytes())?;
    writer.write_all(exchange.as_bytes())?;
    writer.write_all(&(routing_key.len() as u16).to_be_bytes())?;
    writer.write_all(routing_key.as_bytes())?;
    writer.write_all(&published_at_micros.to_be_bytes())?;
    writer.write_all(&(payload.len() as u32).to_be_bytes())?;
    writer.write_all(payload)?;
    Ok(())
}

/// Writes a DELIVER frame without intermediate copies; the broker delivery
/// hot path. Byte-identical to `write_frame` with `Frame::Deliver`.
pub fn write_deliver_frame<W: Write>(
    writer: &mut W,
    queue: &str,
    delivery_tag: u64,
    routing_key: &str,
    published_at_micros: u64,
    payload: &[u8],
) -> Result<(), FrameError> {
    let body_len = 1 + 2 + queue.len() + 8 + 2 + routing_key.len() + 8 + 4 + payload.len();
    writer.write_all(&(body_len as u32).to_be_bytes())?;
    writer.write_all(&[FRAME_DELIVER])?;
    writer.write_all(&(queue.len() as u16).to_be_bytes())?;
    writer.write_all(queue.as_bytes())?;
    writer.write_all(&delivery_tag.to_be_bytes())?;
    writer.write_all(&(routing_key.len() as u16).to_be_bytes())?;
    writer.write_all(routing_key.as_bytes())?;
    writer.write_all(&published_at_micros.to_be_bytes())?;
    writer.write_all(&(payload.len() as u32).to_be_bytes())?;
    writer.write_all(payload)?;
    Ok(())
}

/// Reads one frame from a stream. Returns `ConnectionClosed` on clean EOF
/// at a frame boundary.
pub fn read_frame<R: Read>(reader: &mut R, max_frame: u32) -> Result<Frame, FrameError> {
    let mut len_buf = [0u8; 4];
    match reader.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
            return Err(FrameError::ConnectionClosed)
        }
        Err(e) => return Err(FrameError::Io(e)),
    }
    let declared = u32::from_be_bytes(len_buf);
    if declared == 0 {
        return Err(FrameError::Empty);
    }
    if declared > max_frame {
        return Err(FrameError::TooLarge {
            size: declared,
            max: max_frame,
        });
    }
    let mut body = vec![0u8; declared as usize];
    reader.read_exact(&mut body).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            FrameError::Truncated
        } else {
            FrameError::Io(e)
        }
    })?;
    decode_body(&body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn round_trip(frame: Frame) {
        let encoded = encode_frame(&frame);
        let decoded = decode_frame(&encoded, MAX_FRAME_SIZE).unwrap();
        assert_eq!(decoded, frame);
    }

    #[test]
    fn publish_round_trips() {
        round_trip(Frame::Publish {
            exchange: "monitor".into(),
            routing_key: "ganglia.s.n.metrics".into(),
            published_at_micros: 1_367_402_400_000_000,
            payload: vec![0x7b, 0x7d],
        });
    }

    #[test]
    fn all_variants_round_trip() {
        round_trip(Frame::Declare {
            exchange: "monitor".into(),
        });
        round_trip(Frame::Bind {
            exchange: "monitor".into(),
            queue: "q1".into(),
            pattern: "glue2.*.*.job.*".into(),
        });
        round_trip(Frame::Subscribe {
            queue: "q1".into(),
            mode: SubscribeMode::Explicit,
        });
        round_trip(Frame::Deliver {
            queue: "q1".into(),
            delivery_tag: 42,
            routing_key: "a.b".into(),
            published_at_micros: 7,
            payload: b"{\"x\":1}".to_vec(),
        });
        round_trip(Frame::Ack {
            queue: "q1".into(),
            delivery_tag: 42,
        });
        round_trip(Frame::StatsReq);
        round_trip(Frame::StatsResp {
            stats_json: b"{}".to_vec(),
        });
        round_trip(Frame::Error {
            code: ERR_PROTOCOL,
            message: "bad frame".into(),
        });
    }

    #[test]
    fn oversized_length_field_rejected() {
        let mut bytes = 0xFFFF_FFFFu32.to_be_bytes().to_vec();
        bytes.push(FRAME_STATS_REQ);
        assert!(matches!(
            decode_frame(&bytes, MAX_FRAME_SIZE),
            Err(FrameError::TooLarge { .. })
        ));
    }

    #[test]
    fn truncated_and_trailing_rejected() {
        let encoded = encode_frame(&Frame::Declare {
            exchange: "monitor".into(),
        });
        assert!(matches!(
            decode_frame(&encoded[..encoded.len() - 2], MAX_FRAME_SIZE),
            Err(FrameError::Truncated)
        ));
        let mut extended = encoded.clone();
        extended.push(0);
        assert!(matches!(
            decode_frame(&extended, MAX_FRAME_SIZE),
            Err(FrameError::TrailingBytes)
        ));
    }

    #[test]
    fn unknown_frame_type_rejected() {
        let bytes = [0, 0, 0, 1, 200];
        assert!(matches!(
            decode_frame(&bytes, MAX_FRAME_SIZE),
            Err(FrameError::UnknownType(200))
        ));
    }

    #[test]
    fn zero_length_rejected() {
        let bytes = [0, 0, 0, 0];
        assert!(matches!(
            decode_frame(&bytes, MAX_FRAME_SIZE),
            Err(FrameError::Empty)
        ));
    }

    pub(crate) fn random_frame<R: Rng>(rng: &mut R) -> Frame {
        fn random_word<R: Rng>(rng: &mut R) -> String {
            let len = rng.gen_range(1..12);
            (0..len)
                .map(|_| (b'a' + rng.gen_range(0..26)) as char)
                .collect()
        }
        fn random_key<R: Rng>(rng: &mut R) -> String {
            let words = rng.gen_range(1..6);
            (0..words).map(|_| random_word(rng)).collect::<Vec<_>>().join(".")
        }
        fn random_payload<R: Rng>(rng: &mut R) -> Vec<u8> {
            let len = rng.gen_range(0..512);
            (0..len).map(|_| rng.gen()).collect()
        }
        match rng.gen_range(0..9) {
            0 => Frame::Declare {
                exchange: random_word(rng),
            },
            1 => Frame::Bind {
                exchange: random_word(rng),
                queue: random_word(rng),
                pattern: random_key(rng),
            },
            2 => Frame::Publish {
                exchange: random_word(rng),
                routing_key: random_key(rng),
                published_at_micros: rng.gen(),
                payload: random_payload(rng),
            },
            3 => Frame::Subscribe {
                queue: random_word(rng),
                mode: if rng.gen() {
                    SubscribeMode::Auto
                } else {
                    SubscribeMode::Explicit
                },
            },
            4 => Frame::Deliver {
                queue: random_word(rng),
                delivery_tag: rng.gen(),
                routing_key: random_key(rng),
                published_at_micros: rng.gen(),
                payload: random_payload(rng),
            },
            5 => Frame::Ack {
                queue: random_word(rng),
                delivery_tag: rng.gen(),
            },
            6 => Frame::StatsReq,
            7 => Frame::StatsResp {
                stats_json: random_payload(rng),
            },
            _ => Frame::Error {
                code: rng.gen_range(1..6),
                message: random_word(rng),
            },
        }
    }

    #[test]
    fn fuzz_round_trip_ten_thousand_frames() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(0xF4A3);
        for _ in 0..10_000 {
            round_trip(random_frame(&mut rng));
        }
    }

    #[test]
    fn hot_path_writers_match_the_generic_encoder() {
        let payload = vec![1u8, 2, 3, 4, 5];
        let generic = encode_frame(&Frame::Publish {
            exchange: "monitor".into(),
            routing_key: "a.b.c".into(),
            published_at_micros: 123_456,
            payload: payload.clone(),
        });
        let mut direct = Vec::new();
        write_publish_frame(&mut direct, "monitor", "a.b.c", 123_456, &payload).unwrap();
        assert_eq!(direct, generic);

        let generic = encode_frame(&Frame::Deliver {
            queue: "q1".into(),
            delivery_tag: 99,
            routing_key: "a.b.c".into(),
            published_at_micros: 123_456,
            payload: payload.clone(),
        });
        let mut direct = Vec::new();
        write_deliver_frame(&mut direct, "q1", 99, "a.b.c", 123_456, &payload).unwrap();
        assert_eq!(direct, generic);
    }

    #[test]
    fn stream_read_write_round_trip() {
        let frames = vec![
            Frame::Declare {
                exchange: "monitor".into(),
            },
            Frame::StatsReq,
            Frame::Publish {
                exchange: "monitor".into(),
                routing_key: "a.b".into(),
                published_at_micros: 1,
                payload: b"{}".to_vec(),
            },
        ];
        let mut buf = Vec::new();
        for frame in &frames {
            write_frame(&mut buf, frame).unwrap();
        }
        let mut cursor = std::io::Cursor::new(buf);
        for frame in &frames {
            assert_eq!(&read_frame(&mut cursor, MAX_FRAME_SIZE).unwrap(), frame);
        }
        assert!(matches!(
            read_frame(&mut cursor, MAX_FRAME_SIZE),
            Err(FrameError::ConnectionClosed)
        ));
    }
}
