//! MQTT 3.1.1 control packets and their wire encoding.
//!
//! Only QoS 0 and 1 are supported; anything touching QoS 2 (including the
//! PUBREC/PUBREL/PUBCOMP packets) is rejected as a protocol error.

use std::fmt;

use thiserror::Error;

use crate::topic::{validate_topic_name, TopicFilter};

/// Largest value the four-byte remaining-length field can carry.
pub const MAX_REMAINING_LENGTH: usize = 268_435_455;

pub const PROTOCOL_NAME: &str = "MQTT";
pub const PROTOCOL_LEVEL: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QoS {
    AtMostOnce = 0,
    AtLeastOnce = 1,
}

impl QoS {
    pub fn from_u8(v: u8) -> Result<QoS, ProtocolError> {
        match v {
            0 => Ok(QoS::AtMostOnce),
            1 => Ok(QoS::AtLeastOnce),
            2 => Err(ProtocolError::UnsupportedQos),
            _ => Err(ProtocolError::Malformed("QoS value 3 is reserved")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LastWill {
    pub topic: String,
    pub payload: Vec<u8>,
    pub qos: QoS,
    pub retain: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connect {
    pub client_id: String,
    pub keep_alive: u16,
    pub clean_session: bool,
    pub will: Option<LastWill>,
    pub username: Option<String>,
    pub password: Option<Vec<u8>>,
}

impl Connect {
    pub fn new(client_id: impl Into<String>, keep_alive: u16) -> Self {
        Connect {
            client_id: client_id.into(),
            keep_alive,
            clean_session: true,
            will: None,
            username: None,
            password: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectReturnCode {
    Accepted = 0,
    UnacceptableProtocolVersion = 1,
    IdentifierRejected = 2,
    ServerUnavailable = 3,
    BadUsernameOrPassword = 4,
    NotAuthorized = 5,
}

impl ConnectReturnCode {
    fn from_u8(v: u8) -> Result<Self, ProtocolError> {
        Ok(match v {
            0 => ConnectReturnCode::Accepted,
            1 => ConnectReturnCode::UnacceptableProtocolVersion,
            2 => ConnectReturnCode::IdentifierRejected,
            3 => ConnectReturnCode::ServerUnavailable,
            4 => ConnectReturnCode::BadUsernameOrPassword,
            5 => ConnectReturnCode::NotAuthorized,
            _ => return Err(ProtocolError::Malformed("unknown CONNACK return code")),
        })
    }
}

impl fmt::Display for ConnectReturnCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConnectReturnCode::Accepted => "accepted",
            ConnectReturnCode::UnacceptableProtocolVersion => "unacceptable protocol version",
            ConnectReturnCode::IdentifierRejected => "identifier rejected",
            ConnectReturnCode::ServerUnavailable => "server unavailable",
            ConnectReturnCode::BadUsernameOrPassword => "bad user name or password",
            ConnectReturnCode::NotAuthorized => "not authorized",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnAck {
    pub session_present: bool,
    pub code: ConnectReturnCode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publish {
    pub dup: bool,
    pub qos: QoS,
    pub retain: bool,
    pub topic: String,
    /// Present exactly when `qos` is above 0.
    pub packet_id: Option<u16>,
    pub payload: Vec<u8>,
}

impl Publish {
    pub fn at_most_once(topic: impl Into<String>, payload: impl Into<Vec<u8>>) -> Self {
        Publish {
            dup: false,
            qos: QoS::AtMostOnce,
            retain: false,
            topic: topic.into(),
            packet_id: None,
            payload: payload.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscribe {
    pub packet_id: u16,
    pub filters: Vec<(String, QoS)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubAckReturn {
    Granted(QoS),
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubAck {
    pub packet_id: u16,
    pub return_codes: Vec<SubAckReturn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unsubscribe {
    pub packet_id: u16,
    pub filters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Connect(Connect),
    ConnAck(ConnAck),
    Publish(Publish),
    PubAck(u16),
    Subscribe(Subscribe),
    SubAck(SubAck),
    Unsubscribe(Unsubscribe),
    UnsubAck(u16),
    PingReq,
    PingResp,
    Disconnect,
}

impl Packet {
    pub fn name(&self) -> &'static str {
        match self {
            Packet::Connect(_) => "CONNECT",
            Packet::ConnAck(_) => "CONNACK",
            Packet::Publish(_) => "PUBLISH",
            Packet::PubAck(_) => "PUBACK",
            Packet::Subscribe(_) => "SUBSCRIBE",
            Packet::SubAck(_) => "SUBACK",
            Packet::Unsubscribe(_) => "UNSUBSCRIBE",
            Packet::UnsubAck(_) => "UNSUBACK",
            Packet::PingReq => "PINGREQ",
            Packet::PingResp => "PINGRESP",
            Packet::Disconnect => "DISCONNECT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("remaining length uses more than 4 bytes")]
    RemainingLengthOverflow,
    #[error("reserved packet type {0}")]
    ReservedPacketType(u8),
    #[error("invalid fixed header flags {flags:#06b} for packet type {packet_type}")]
    InvalidFlags { packet_type: u8, flags: u8 },
    #[error("QoS 2 is not supported by this broker")]
    UnsupportedQos,
    #[error("unsupported protocol {name:?} level {level}")]
    UnsupportedProtocol { name: String, level: u8 },
    #[error("malformed packet: {0}")]
    Malformed(&'static str),
    #[error("invalid UTF-8 string")]
    InvalidUtf8,
    #[error("invalid topic: {0}")]
    InvalidTopic(String),
    #[error("packet of {0} bytes exceeds the configured maximum")]
    TooLarge(usize),
}

/// Appends the variable-length encoding of `len` (1 to 4 bytes).
pub fn encode_remaining_length(mut len: usize, out: &mut Vec<u8>) {
    assert!(len <= MAX_REMAINING_LENGTH, "remaining length {len} out of range");
    loop {
        let mut byte = (len % 128) as u8;
        len /= 128;
        if len > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if len == 0 {
            break;
        }
    }
}

/// Decodes a remaining-length field: `Ok(None)` if more bytes are needed,
/// otherwise the value and the number of bytes it occupied.
pub fn decode_remaining_length(buf: &[u8]) -> Result<Option<(usize, usize)>, ProtocolError> {
    let mut value = 0usize;
    let mut multiplier = 1usize;
    for (i, &byte) in buf.iter().enumerate() {
        if i == 4 {
            return Err(ProtocolError::RemainingLengthOverflow);
        }
        value += (byte & 0x7f) as usize * multiplier;
        if byte & 0x80 == 0 {
            return Ok(Some((value, i + 1)));
        }
        multiplier *= 128;
    }
    if buf.len() >= 4 {
        return Err(ProtocolError::RemainingLengthOverflow);
    }
    Ok(None)
}

/// Total wire size of the packet at the front of `buf`, once the fixed
/// header is complete.
pub fn frame_length(buf: &[u8]) -> Result<Option<usize>, ProtocolError> {
    if buf.is_empty() {
        return Ok(None);
    }
    Ok(decode_remaining_length(&buf[1..])?.map(|(len, n)| 1 + n + len))
}

/// Decodes one packet from the front of `buf`. Returns `Ok(None)` until the
/// whole packet is buffered; on success the second value is its wire size.
pub fn decode(buf: &[u8]) -> Result<Option<(Packet, usize)>, ProtocolError> {
    if buf.is_empty() {
        return Ok(None);
    }
    let header = buf[0];
    let packet_type = header >> 4;
    let flags = header & 0x0f;
    if packet_type == 0 || packet_type == 15 {
        return Err(ProtocolError::ReservedPacketType(packet_type));
    }
    let Some((remaining, len_bytes)) = decode_remaining_length(&buf[1..])? else {
        return Ok(None);
    };
    let total = 1 + len_bytes + remaining;
    if buf.len() < total {
        return Ok(None);
    }
    let body = &buf[1 + len_bytes..total];
    let expect_flags = |expected: u8| {
        if flags == expected {
            Ok(())
        } else {
            Err(ProtocolError::InvalidFlags { packet_type, flags })
        }
    };
    let mut r = Reader::new(body);
    let packet = match packet_type {
        1 => {
            expect_flags(0)?;
            Packet::Connect(decode_connect(&mut r)?)
        }
        2 => {
            expect_flags(0)?;
            let ack_flags = r.u8()?;
            if ack_flags & 0xfe != 0 {
                return Err(ProtocolError::Malformed("reserved CONNACK flag bits set"));
            }
            Packet::ConnAck(ConnAck {
                session_present: ack_flags & 1 == 1,
                code: ConnectReturnCode::from_u8(r.u8()?)?,
            })
        }
        3 => Packet::Publish(decode_publish(flags, &mut r)?),
        4 => {
            expect_flags(0)?;
            Packet::PubAck(r.packet_id()?)
        }
        5..=7 => return Err(ProtocolError::UnsupportedQos),
        8 => {
            expect_flags(0b0010)?;
            let packet_id = r.packet_id()?;
            let mut filters = Vec::new();
            while !r.is_empty() {
                let filter = r.string()?;
                TopicFilter::parse(&filter).map_err(|e| ProtocolError::InvalidTopic(e.to_string()))?;
                let options = r.u8()?;
                if options & 0xfc != 0 {
                    return Err(ProtocolError::Malformed("reserved subscription option bits set"));
                }
                filters.push((filter, QoS::from_u8(options)?));
            }
            if filters.is_empty() {
                return Err(ProtocolError::Malformed("SUBSCRIBE without topic filters"));
            }
            Packet::Subscribe(Subscribe { packet_id, filters })
        }
        9 => {
            expect_flags(0)?;
            let packet_id = r.packet_id()?;
            let mut return_codes = Vec::new();
            while !r.is_empty() {
                return_codes.push(match r.u8()? {
                    0 => SubAckReturn::Granted(QoS::AtMostOnce),
                    1 => SubAckReturn::Granted(QoS::AtLeastOnce),
                    2 => return Err(ProtocolError::UnsupportedQos),
                    0x80 => SubAckReturn::Failure,
                    _ => return Err(ProtocolError::Malformed("invalid SUBACK return code")),
                });
            }
            Packet::SubAck(SubAck { packet_id, return_codes })
        }
        10 => {
            expect_flags(0b0010)?;
            let packet_id = r.packet_id()?;
            let mut filters = Vec::new();
            while !r.is_empty() {
                let filter = r.string()?;
                TopicFilter::parse(&filter).map_err(|e| ProtocolError::InvalidTopic(e.to_string()))?;
                filters.push(filter);
            }
            if filters.is_empty() {
                return Err(ProtocolError::Malformed("UNSUBSCRIBE without topic filters"));
            }
            Packet::Unsubscribe(Unsubscribe { packet_id, filters })
        }
        11 => {
            expect_flags(0)?;
            Packet::UnsubAck(r.packet_id()?)
        }
        12 => {
            expect_flags(0)?;
            Packet::PingReq
        }
        13 => {
            expect_flags(0)?;
            Packet::PingResp
        }
        14 => {
            expect_flags(0)?;
            Packet::Disconnect
        }
        _ => unreachable!("reserved types handled above"),
    };
    if !r.is_empty() {
        return Err(ProtocolError::Malformed("trailing bytes after packet body"));
    }
    Ok(Some((packet, total)))
}

fn decode_connect(r: &mut Reader<'_>) -> Result<Connect, ProtocolError> {
    let name = r.string()?;
    let level = r.u8()?;
    if name != PROTOCOL_NAME || level != PROTOCOL_LEVEL {
        return Err(ProtocolError::UnsupportedProtocol { name, level });
    }
    let flags = r.u8()?;
    if flags & 0x01 != 0 {
        return Err(ProtocolError::Malformed("reserved CONNECT flag set"));
    }
    let clean_session = flags & 0x02 != 0;
    let will_flag = flags & 0x04 != 0;
    let will_qos = (flags >> 3) & 0x03;
    let will_retain = flags & 0x20 != 0;
    let password_flag = flags & 0x40 != 0;
    let username_flag = flags & 0x80 != 0;
    if !will_flag && (will_qos != 0 || will_retain) {
        return Err(ProtocolError::Malformed("will QoS/retain set without will flag"));
    }
    if password_flag && !username_flag {
        return Err(ProtocolError::Malformed("password without user name"));
    }
    let keep_alive = r.u16()?;
    let client_id = r.string()?;
    let will = if will_flag {
        let topic = r.string()?;
        validate_topic_name(&topic).map_err(|e| ProtocolError::InvalidTopic(e.to_string()))?;
        let payload = r.binary()?;
        Some(LastWill {
            topic,
            payload,
            qos: QoS::from_u8(will_qos)?,
            retain: will_retain,
        })
    } else {
        None
    };
    let username = if username_flag { Some(r.string()?) } else { None };
    let password = if password_flag { Some(r.binary()?) } else { None };
    Ok(Connect {
        client_id,
        keep_alive,
        clean_session,
        will,
        username,
        password,
    })
}

fn decode_publish(flags: u8, r: &mut Reader<'_>) -> Result<Publish, ProtocolError> {
    let dup = flags & 0x08 != 0;
    let qos = QoS::from_u8((flags >> 1) & 0x03)?;
    let retain = flags & 0x01 != 0;
    if dup && qos == QoS::AtMostOnce {
        return Err(ProtocolError::Malformed("DUP set on a QoS 0 PUBLISH"));
    }
    let topic = r.string()?;
    validate_topic_name(&topic).map_err(|e| ProtocolError::InvalidTopic(e.to_string()))?;
    let packet_id = match qos {
        QoS::AtMostOnce => None,
        QoS::AtLeastOnce => Some(r.packet_id()?),
    };
    let payload = r.rest().to_vec();
    Ok(Publish {
        dup,
        qos,
        retain,
        topic,
        packet_id,
        payload,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() - self.pos < n {
            return Err(ProtocolError::Malformed("field runs past the end of the packet"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn packet_id(&mut self) -> Result<u16, ProtocolError> {
        match self.u16()? {
            0 => Err(ProtocolError::Malformed("packet identifier 0")),
            id => Ok(id),
        }
    }

    fn binary(&mut self) -> Result<Vec<u8>, ProtocolError> {
        let len = self.u16()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    fn string(&mut self) -> Result<String, ProtocolError> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        let s = std::str::from_utf8(raw).map_err(|_| ProtocolError::InvalidUtf8)?;
        if s.contains('\0') {
            return Err(ProtocolError::InvalidUtf8);
        }
        Ok(s.to_owned())
    }

    fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.pos..];
        self.pos = self.buf.len();
        out
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_binary(out: &mut Vec<u8>, data: &[u8]) {
    assert!(data.len() <= u16::MAX as usize, "field longer than 65535 bytes");
    put_u16(out, data.len() as u16);
    out.extend_from_slice(data);
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    put_binary(out, s.as_bytes());
}

pub fn encode(packet: &Packet) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(packet, &mut out);
    out
}

/// Appends the wire form of `packet`. Panics on packets that cannot be
/// represented (oversized fields, missing packet id on a QoS 1 PUBLISH).
pub fn encode_into(packet: &Packet, out: &mut Vec<u8>) {
    let mut body = Vec::new();
    let header: u8 = match packet {
        Packet::Connect(c) => {
            put_string(&mut body, PROTOCOL_NAME);
            body.push(PROTOCOL_LEVEL);
            let mut flags = 0u8;
            if c.clean_session {
                flags |= 0x02;
            }
            if let Some(w) = &c.will {
                flags |= 0x04 | ((w.qos as u8) << 3);
                if w.retain {
                    flags |= 0x20;
                }
            }
            if c.password.is_some() {
                flags |= 0x40;
            }
            if c.username.is_some() {
                flags |= 0x80;
            }
            body.push(flags);
            put_u16(&mut body, c.keep_alive);
            put_string(&mut body, &c.client_id);
            if let Some(w) = &c.will {
                put_string(&mut body, &w.topic);
                put_binary(&mut body, &w.payload);
            }
            if let Some(u) = &c.username {
                put_string(&mut body, u);
            }
            if let Some(p) = &c.password {
                put_binary(&mut body, p);
            }
            0x10
        }
        Packet::ConnAck(a) => {
            body.push(a.session_present as u8);
            body.push(a.code as u8);
            0x20
        }
        Packet::Publish(p) => {
            put_string(&mut body, &p.topic);
            if p.qos != QoS::AtMostOnce {
                put_u16(&mut body, p.packet_id.expect("QoS 1 PUBLISH needs a packet id"));
            }
            body.extend_from_slice(&p.payload);
            0x30 | ((p.dup as u8) << 3) | ((p.qos as u8) << 1) | p.retain as u8
        }
        Packet::PubAck(id) => {
            put_u16(&mut body, *id);
            0x40
        }
        Packet::Subscribe(s) => {
            put_u16(&mut body, s.packet_id);
            for (filter, qos) in &s.filters {
                put_string(&mut body, filter);
                body.push(*qos as u8);
            }
            0x82
        }
        Packet::SubAck(s) => {
            put_u16(&mut body, s.packet_id);
            for rc in &s.return_codes {
                body.push(match rc {
                    SubAckReturn::Granted(q) => *q as u8,
                    SubAckReturn::Failure => 0x80,
                });
            }
            0x90
        }
        Packet::Unsubscribe(u) => {
            put_u16(&mut body, u.packet_id);
            for filter in &u.filters {
                put_string(&mut body, filter);
            }
            0xa2
        }
        Packet::UnsubAck(id) => {
            put_u16(&mut body, *id);
            0xb0
        }
        Packet::PingReq => 0xc0,
        Packet::PingResp => 0xd0,
        Packet::Disconnect => 0xe0,
    };
    out.push(header);
    encode_remaining_length(body.len(), out);
    out.extend_from_slice(&body);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pingreq_fixture() {
        assert_eq!(decode(&[0xc0, 0x00]).unwrap(), Some((Packet::PingReq, 2)));
        assert_eq!(encode(&Packet::PingReq), [0xc0, 0x00]);
        assert_eq!(encode(&Packet::PingResp), [0xd0, 0x00]);
        assert_eq!(encode(&Packet::Disconnect), [0xe0, 0x00]);
    }

    #[test]
    fn connack_fixture() {
        let ack = Packet::ConnAck(ConnAck {
            session_present: false,
            code: ConnectReturnCode::Accepted,
        });
        assert_eq!(encode(&ack), [0x20, 0x02, 0x00, 0x00]);
        assert_eq!(decode(&[0x20, 0x02, 0x00, 0x00]).unwrap(), Some((ack, 4)));
    }

    #[test]
    fn publish_fixture() {
        // 0x30, remaining 6 = topic length (2) + "a/b" (3) + "x" (1)
        let p = Packet::Publish(Publish::at_most_once("a/b", "x"));
        assert_eq!(encode(&p), [0x30, 0x06, 0x00, 0x03, b'a', b'/', b'b', b'x']);
    }

    #[test]
    fn remaining_length_321() {
        let mut out = Vec::new();
        encode_remaining_length(321, &mut out);
        assert_eq!(out, [0xc1, 0x02]);
        assert_eq!(decode_remaining_length(&[0xc1, 0x02]).unwrap(), Some((321, 2)));
    }

    #[test]
    fn remaining_length_limits() {
        assert_eq!(decode_remaining_length(&[0x80, 0x80, 0x80]).unwrap(), None);
        assert_eq!(
            decode_remaining_length(&[0xff, 0xff, 0xff, 0x7f]).unwrap(),
            Some((MAX_REMAINING_LENGTH, 4))
        );
        assert_eq!(
            decode_remaining_length(&[0x80, 0x80, 0x80, 0x80, 0x01]),
            Err(ProtocolError::RemainingLengthOverflow)
        );
        assert_eq!(
            decode_remaining_length(&[0x80, 0x80, 0x80, 0x80]),
            Err(ProtocolError::RemainingLengthOverflow)
        );
        assert_eq!(decode(&[0xc0, 0x80, 0x80, 0x80, 0x80]), Err(ProtocolError::RemainingLengthOverflow));
    }

    #[test]
    fn incremental_decoding() {
        let wire = encode(&Packet::Subscribe(Subscribe {
            packet_id: 7,
            filters: vec![("a/+".into(), QoS::AtLeastOnce), ("b/#".into(), QoS::AtMostOnce)],
        }));
        for cut in 0..wire.len() {
            assert_eq!(decode(&wire[..cut]).unwrap(), None, "cut at {cut}");
        }
        let mut extended = wire.clone();
        extended.extend_from_slice(&[0xc0, 0x00]);
        let (_, used) = decode(&extended).unwrap().unwrap();
        assert_eq!(used, wire.len());
    }

    #[test]
    fn rejects_reserved_and_qos2() {
        assert_eq!(decode(&[0x00, 0x00]), Err(ProtocolError::ReservedPacketType(0)));
        assert_eq!(decode(&[0xf0, 0x00]), Err(ProtocolError::ReservedPacketType(15)));
        // PUBLISH QoS 2
        assert_eq!(
            decode(&[0x34, 0x05, 0x00, 0x01, b't', 0x00, 0x01]),
            Err(ProtocolError::UnsupportedQos)
        );
        // PUBREC
        assert_eq!(decode(&[0x50, 0x02, 0x00, 0x01]), Err(ProtocolError::UnsupportedQos));
        // SUBSCRIBE requesting QoS 2
        assert_eq!(
            decode(&[0x82, 0x06, 0x00, 0x01, 0x00, 0x01, b't', 0x02]),
            Err(ProtocolError::UnsupportedQos)
        );
    }

    #[test]
    fn rejects_bad_flags_and_bodies() {
        assert!(matches!(decode(&[0xc1, 0x00]), Err(ProtocolError::InvalidFlags { .. })));
        assert!(matches!(
            decode(&[0x80, 0x06, 0x00, 0x01, 0x00, 0x01, b't', 0x00]),
            Err(ProtocolError::InvalidFlags { .. })
        ));
        // wildcard in a PUBLISH topic
        assert!(matches!(
            decode(&[0x30, 0x03, 0x00, 0x01, b'+']),
            Err(ProtocolError::InvalidTopic(_))
        ));
        // PINGREQ with a body
        assert!(matches!(decode(&[0xc0, 0x01, 0x00]), Err(ProtocolError::Malformed(_))));
        // PUBACK with packet id 0
        assert!(matches!(decode(&[0x40, 0x02, 0x00, 0x00]), Err(ProtocolError::Malformed(_))));
        // SUBSCRIBE without filters
        assert!(matches!(decode(&[0x82, 0x02, 0x00, 0x01]), Err(ProtocolError::Malformed(_))));
        // string longer than the packet
        assert!(matches!(decode(&[0x30, 0x02, 0x00, 0x09]), Err(ProtocolError::Malformed(_))));
    }

    #[test]
    fn connect_round_trip_and_protocol_check() {
        let mut c = Connect::new("emulator", 30);
        c.will = Some(LastWill {
            topic: "home/connection".into(),
            payload: b"gone".to_vec(),
            qos: QoS::AtLeastOnce,
            retain: true,
        });
        c.username = Some("u".into());
        c.password = Some(b"p".to_vec());
        let wire = encode(&Packet::Connect(c.clone()));
        assert_eq!(&wire[2..10], &[0x00, 0x04, b'M', b'Q', b'T', b'T', 0x04, 0xee]);
        assert_eq!(decode(&wire).unwrap().unwrap().0, Packet::Connect(c));

        let mut v3 = wire.clone();
        v3[8] = 3;
        assert!(matches!(decode(&v3), Err(ProtocolError::UnsupportedProtocol { level: 3, .. })));
    }
}
