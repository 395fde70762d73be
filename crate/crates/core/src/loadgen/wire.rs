//! Datagram layout, all integers big-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "UAVF"
//!      4     1  version (1)
//!      5     4  uav_id
//!      9     1  service (1 telemetry, 2 iot, 3 streaming)
//!     10     1  subgroup (1 poor, 2 middle, 3 rich)
//!     11     8  seq
//!     19     8  timestamp_us
//!     27     4  payload_len
//!     31     8  event_size (true transaction size, bytes)
//!     39     -  payload_len zero bytes
//! ```
//!
//! A datagram is `max(event_size, HEADER_LEN)` bytes long, capped at
//! [`MAX_DATAGRAM`]. Events above the cap are only encodable in truncating
//! mode; `event_size` still carries the real size.

use thiserror::Error;

use crate::model::{ServiceClass, Subgroup};
use crate::sim::PacketEvent;

pub const MAGIC: [u8; 4] = *b"UAVF";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 39;
/// Largest UDP payload over IPv4.
pub const MAX_DATAGRAM: usize = 65_507;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error(
        "event of {size} bytes exceeds the {MAX_DATAGRAM}-byte datagram limit; \
         fragmentation is out of scope, encode in truncating mode instead"
    )]
    Oversize { size: u64 },
    #[error("datagram of {0} bytes is shorter than the {HEADER_LEN}-byte header")]
    Short(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("bad {field} code {code}")]
    BadCode { field: &'static str, code: u8 },
    #[error("length mismatch: header announces {announced} payload bytes, datagram carries {actual}")]
    LengthMismatch { announced: usize, actual: usize },
}

/// How to treat events larger than one datagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    Reject,
    Allow,
}

/// Datagram length for an event of `size` bytes, or `None` if it does not fit.
pub fn datagram_len(size: u64) -> Option<usize> {
    let len = usize::try_from(size).ok()?.max(HEADER_LEN);
    (len <= MAX_DATAGRAM).then_some(len)
}

fn service_code(c: ServiceClass) -> u8 {
    c.index() as u8 + 1
}

fn subgroup_code(g: Subgroup) -> u8 {
    g.index() as u8 + 1
}

/// Appends the encoded datagram to `buf`.
pub fn encode_into(e: &PacketEvent, mode: Truncation, buf: &mut Vec<u8>) -> Result<(), WireError> {
    let len = match (datagram_len(e.size), mode) {
        (Some(len), _) => len,
        (None, Truncation::Allow) => MAX_DATAGRAM,
        (None, Truncation::Reject) => return Err(WireError::Oversize { size: e.size }),
    };
    let payload_len = len - HEADER_LEN;
    buf.reserve(len);
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&e.uav_id.to_be_bytes());
    buf.push(service_code(e.service));
    buf.push(subgroup_code(e.subgroup));
    buf.extend_from_slice(&e.seq.to_be_bytes());
    buf.extend_from_slice(&e.timestamp_us.to_be_bytes());
    buf.extend_from_slice(&(payload_len as u32).to_be_bytes());
    buf.extend_from_slice(&e.size.to_be_bytes());
    buf.resize(buf.len() + payload_len, 0);
    Ok(())
}

pub fn encode_packet(e: &PacketEvent, mode: Truncation) -> Result<Vec<u8>, WireError> {
    let mut buf = Vec::new();
    encode_into(e, mode, &mut buf)?;
    Ok(buf)
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes(b.try_into().expect("4-byte slice"))
}

fn be_u64(b: &[u8]) -> u64 {
    u64::from_be_bytes(b.try_into().expect("8-byte slice"))
}

pub fn decode_packet(buf: &[u8]) -> Result<PacketEvent, WireError> {
    if buf.len() >= 4 && buf[..4] != MAGIC {
        return Err(WireError::BadMagic(buf[..4].try_into().unwrap()));
    }
    if buf.len() < HEADER_LEN {
        return Err(WireError::Short(buf.len()));
    }
    if buf[4] != VERSION {
        return Err(WireError::BadVersion(buf[4]));
    }
    let uav_id = be_u32(&buf[5..9]);
    let service = ServiceClass::from_index(usize::from(buf[9]).wrapping_sub(1)).ok_or(
        WireError::BadCode {
            field: "service",
            code: buf[9],
        },
    )?;
    let subgroup = Subgroup::from_index(usize::from(buf[10]).wrapping_sub(1)).ok_or(
        WireError::BadCode {
            field: "subgroup",
            code: buf[10],
        },
    )?;
    let seq = be_u64(&buf[11..19]);
    let timestamp_us = be_u64(&buf[19..27]);
    let announced = be_u32(&buf[27..31]) as usize;
    let size = be_u64(&buf[31..39]);
    let actual = buf.len() - HEADER_LEN;
    let consistent = datagram_len(size).unwrap_or(MAX_DATAGRAM) - HEADER_LEN;
    if announced != actual || announced != consistent {
        return Err(WireError::LengthMismatch { announced, actual });
    }
    Ok(PacketEvent {
        timestamp_us,
        uav_id,
        subgroup,
        service,
        seq,
        size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn event(size: u64) -> PacketEvent {
        PacketEvent {
            timestamp_us: 1_234_567,
            uav_id: 0xDEAD_BEEF,
            subgroup: Subgroup::Middle,
            service: ServiceClass::Iot,
            seq: 42,
            size,
        }
    }

    #[test]
    fn header_sized_event_has_empty_payload() {
        let buf = encode_packet(&event(HEADER_LEN as u64), Truncation::Reject).unwrap();
        assert_eq!(buf.len(), HEADER_LEN);
        assert_eq!(be_u32(&buf[27..31]), 0);
    }

    #[test]
    fn small_events_keep_their_size() {
        let buf = encode_packet(&event(5), Truncation::Reject).unwrap();
        assert_eq!(buf.len(), HEADER_LEN);
        assert_eq!(decode_packet(&buf).unwrap(), event(5));
    }

    #[test]
    fn layout_is_big_endian() {
        let buf = encode_packet(&event(100), Truncation::Reject).unwrap();
        assert_eq!(&buf[..5], b"UAVF\x01");
        assert_eq!(&buf[5..9], &[0xDE, 0xAD, 0xBE, 0xEF]);
        assert_eq!(buf[9], 2);
        assert_eq!(buf[10], 2);
        assert_eq!(&buf[11..19], &42u64.to_be_bytes());
        assert_eq!(&buf[19..27], &1_234_567u64.to_be_bytes());
        assert_eq!(&buf[27..31], &61u32.to_be_bytes());
        assert_eq!(&buf[31..39], &100u64.to_be_bytes());
        assert_eq!(buf.len(), 100);
    }

    #[test]
    fn oversize_needs_truncation() {
        let big = event(MAX_DATAGRAM as u64 + 1);
        let err = encode_packet(&big, Truncation::Reject).unwrap_err();
        assert_eq!(err, WireError::Oversize { size: 65_508 });
        assert!(err.to_string().contains("fragmentation"));

        let buf = encode_packet(&big, Truncation::Allow).unwrap();
        assert_eq!(buf.len(), MAX_DATAGRAM);
        assert_eq!(decode_packet(&buf).unwrap(), big);

        let max = event(MAX_DATAGRAM as u64);
        assert_eq!(encode_packet(&max, Truncation::Reject).unwrap().len(), MAX_DATAGRAM);
    }

    #[test]
    fn decode_errors() {
        let good = encode_packet(&event(200), Truncation::Reject).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_packet(&bad), Err(WireError::BadMagic(_))));

        let mut bad = good.clone();
        bad[4] = 9;
        assert_eq!(decode_packet(&bad), Err(WireError::BadVersion(9)));

        let mut bad = good.clone();
        bad[9] = 0;
        assert!(matches!(decode_packet(&bad), Err(WireError::BadCode { field: "service", .. })));

        let mut bad = good.clone();
        bad[10] = 4;
        assert!(matches!(decode_packet(&bad), Err(WireError::BadCode { field: "subgroup", .. })));

        assert!(matches!(
            decode_packet(&good[..good.len() - 1]),
            Err(WireError::LengthMismatch { .. })
        ));
        assert_eq!(decode_packet(&good[..20]), Err(WireError::Short(20)));
    }

    fn arb_event() -> impl Strategy<Value = PacketEvent> {
        (any::<u64>(), any::<u32>(), 0usize..3, 0usize..3, any::<u64>(), 0u64..200_000).prop_map(
            |(timestamp_us, uav_id, g, c, seq, size)| PacketEvent {
                timestamp_us,
                uav_id,
                subgroup: Subgroup::from_index(g).unwrap(),
                service: ServiceClass::from_index(c).unwrap(),
                seq,
                size,
            },
        )
    }

    proptest! {
        #[test]
        fn codec_identity(e in arb_event()) {
            let buf = encode_packet(&e, Truncation::Allow).unwrap();
            prop_assert!(buf.len() <= MAX_DATAGRAM);
            prop_assert_eq!(decode_packet(&buf).unwrap(), e);
        }
    }
}
