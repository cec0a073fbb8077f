//! Line protocol for the rendezvous server.
//!
//! Records are newline-terminated ASCII lines of space-separated
//! `key=value` tokens; the first token is always `cmd=...`. Token values
//! are percent-encoded so that `=`, `%`, space, and anything outside
//! printable ASCII never appear raw inside a value.

use std::fmt::Write as _;

use thiserror::Error;

/// Maximum encoded key length in bytes.
pub const MAX_KEY_LEN: usize = 256;
/// Maximum encoded value length in bytes.
pub const MAX_VALUE_LEN: usize = 4096;

/// Environment variable carrying the server endpoint (`host:port`).
pub const ENV_ENDPOINT: &str = "RDV_PORT";
/// Environment variable carrying this process's rank.
pub const ENV_RANK: &str = "RDV_RANK";

pub mod reason {
    pub const UNKNOWN_GROUP: &str = "unknown_group";
    pub const DUPLICATE_RANK: &str = "duplicate_rank";
    pub const RANK_OUT_OF_RANGE: &str = "rank_out_of_range";
    pub const ALREADY_INITIALIZED: &str = "already_initialized";
    pub const NOT_INITIALIZED: &str = "not_initialized";
    pub const DUPLICATE_KEY: &str = "duplicate_key";
    pub const KEY_TOO_LONG: &str = "key_too_long";
    pub const VALUE_TOO_LONG: &str = "value_too_long";
    pub const GROUP_FAILED: &str = "group_failed";
    pub const PEER_DISCONNECTED: &str = "peer_disconnected";
    pub const PEER_FINALIZED: &str = "peer_finalized";
    pub const FINALIZED: &str = "finalized";
    pub const BAD_REQUEST: &str = "bad_request";
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("invalid percent escape in value")]
    BadEscape,
    #[error("raw byte {0:#04x} not allowed unencoded")]
    RawByte(u8),
    #[error("key exceeds {MAX_KEY_LEN} encoded bytes")]
    KeyTooLong,
    #[error("value exceeds {MAX_VALUE_LEN} encoded bytes")]
    ValueTooLong,
}

/// True for bytes that may appear unencoded in a token value: printable
/// ASCII `0x21..=0x7E` minus `=` and `%`. Space is outside the range and
/// therefore always encoded.
fn is_plain(b: u8) -> bool {
    (0x21..=0x7e).contains(&b) && b != b'=' && b != b'%'
}

pub fn percent_encode(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for &b in raw.as_bytes() {
        if is_plain(b) {
            out.push(b as char);
        } else {
            write!(out, "%{:02X}", b).unwrap();
        }
    }
    out
}

pub fn percent_decode(enc: &str) -> Result<String, ProtocolError> {
    let bytes = enc.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'%' => {
                if i + 3 > bytes.len() {
                    return Err(ProtocolError::BadEscape);
                }
                let hex = std::str::from_utf8(&bytes[i + 1..i + 3])
                    .map_err(|_| ProtocolError::BadEscape)?;
                let v = u8::from_str_radix(hex, 16).map_err(|_| ProtocolError::BadEscape)?;
                out.push(v);
                i += 3;
            }
            b if is_plain(b) => {
                out.push(b);
                i += 1;
            }
            b => return Err(ProtocolError::RawByte(b)),
        }
    }
    String::from_utf8(out).map_err(|_| ProtocolError::BadEscape)
}

/// A client request, one line on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Init { group: String, rank: u32 },
    Put { key: String, value: String },
    Get { key: String },
    Barrier,
    Finalize,
}

/// A server response, one line on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    InitAck { size: u32 },
    InitErr { reason: String },
    PutAck,
    PutErr { reason: String },
    GetAck { value: String },
    GetNeg,
    BarrierAck { epoch: u64 },
    GroupErr { reason: String },
    FinalizeAck,
}

impl Request {
    /// Best-effort command name from a possibly malformed line, for picking
    /// an error response shape.
    pub fn parse_cmd_name(line: &str) -> Option<&str> {
        let line = line.trim_end_matches(['\r', '\n']);
        line.split(' ').next()?.strip_prefix("cmd=")
    }

    /// Render the record without the trailing newline.
    pub fn encode(&self) -> String {
        match self {
            Request::Init { group, rank } => {
                format!("cmd=init group={} rank={}", percent_encode(group), rank)
            }
            Request::Put { key, value } => format!(
                "cmd=put key={} value={}",
                percent_encode(key),
                percent_encode(value)
            ),
            Request::Get { key } => format!("cmd=get key={}", percent_encode(key)),
            Request::Barrier => "cmd=barrier".to_string(),
            Request::Finalize => "cmd=finalize".to_string(),
        }
    }

    pub fn parse(line: &str) -> Result<Request, ProtocolError> {
        let toks = split_tokens(line)?;
        let cmd = expect_tok(&toks, 0, "cmd")?;
        match cmd.as_str() {
            "init" => {
                let group = expect_tok(&toks, 1, "group")?;
                let rank_s = expect_tok(&toks, 2, "rank")?;
                let rank = rank_s
                    .parse::<u32>()
                    .map_err(|_| ProtocolError::Malformed(format!("bad rank {rank_s:?}")))?;
                Ok(Request::Init { group, rank })
            }
            "put" => {
                check_len(&toks, 1, MAX_KEY_LEN, ProtocolError::KeyTooLong)?;
                check_len(&toks, 2, MAX_VALUE_LEN, ProtocolError::ValueTooLong)?;
                let key = expect_tok(&toks, 1, "key")?;
                let value = expect_tok(&toks, 2, "value")?;
                Ok(Request::Put { key, value })
            }
            "get" => {
                check_len(&toks, 1, MAX_KEY_LEN, ProtocolError::KeyTooLong)?;
                let key = expect_tok(&toks, 1, "key")?;
                Ok(Request::Get { key })
            }
            "barrier" => Ok(Request::Barrier),
            "finalize" => Ok(Request::Finalize),
            other => Err(ProtocolError::Malformed(format!("unknown cmd {other:?}"))),
        }
    }
}

impl Response {
    pub fn encode(&self) -> String {
        match self {
            Response::InitAck { size } => format!("cmd=init_ack size={size}"),
            Response::InitErr { reason } => {
                format!("cmd=init_err reason={}", percent_encode(reason))
            }
            Response::PutAck => "cmd=put_ack".to_string(),
            Response::PutErr { reason } => format!("cmd=put_err reason={}", percent_encode(reason)),
            Response::GetAck { value } => format!("cmd=get_ack value={}", percent_encode(value)),
            Response::GetNeg => "cmd=get_neg".to_string(),
            Response::BarrierAck { epoch } => format!("cmd=barrier_ack epoch={epoch}"),
            Response::GroupErr { reason } => {
                format!("cmd=group_err reason={}", percent_encode(reason))
            }
            Response::FinalizeAck => "cmd=finalize_ack".to_string(),
        }
    }

    pub fn parse(line: &str) -> Result<Response, ProtocolError> {
        let toks = split_tokens(line)?;
        let cmd = expect_tok(&toks, 0, "cmd")?;
        match cmd.as_str() {
            "init_ack" => {
                let size = expect_tok(&toks, 1, "size")?
                    .parse::<u32>()
                    .map_err(|_| ProtocolError::Malformed("bad size".into()))?;
                Ok(Response::InitAck { size })
            }
            "init_err" => Ok(Response::InitErr {
                reason: expect_tok(&toks, 1, "reason")?,
            }),
            "put_ack" => Ok(Response::PutAck),
            "put_err" => Ok(Response::PutErr {
                reason: expect_tok(&toks, 1, "reason")?,
            }),
            "get_ack" => Ok(Response::GetAck {
                value: expect_tok(&toks, 1, "value")?,
            }),
            "get_neg" => Ok(Response::GetNeg),
            "barrier_ack" => {
                let epoch = expect_tok(&toks, 1, "epoch")?
                    .parse::<u64>()
                    .map_err(|_| ProtocolError::Malformed("bad epoch".into()))?;
                Ok(Response::BarrierAck { epoch })
            }
            "group_err" => Ok(Response::GroupErr {
                reason: expect_tok(&toks, 1, "reason")?,
            }),
            "finalize_ack" => Ok(Response::FinalizeAck),
            other => Err(ProtocolError::Malformed(format!("unknown cmd {other:?}"))),
        }
    }
}

/// Split a record into `(name, decoded_value)` pairs.
fn split_tokens(line: &str) -> Result<Vec<(String, String, usize)>, ProtocolError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let mut out = Vec::new();
    for tok in line.split(' ') {
        if tok.is_empty() {
            return Err(ProtocolError::Malformed("empty token".into()));
        }
        let (name, enc) = tok
            .split_once('=')
            .ok_or_else(|| ProtocolError::Malformed(format!("token without '=': {tok:?}")))?;
        out.push((name.to_string(), percent_decode(enc)?, enc.len()));
    }
    if out.is_empty() {
        return Err(ProtocolError::Malformed("empty record".into()));
    }
    Ok(out)
}

fn expect_tok(
    toks: &[(String, String, usize)],
    idx: usize,
    name: &str,
) -> Result<String, ProtocolError> {
    let (n, v, _) = toks
        .get(idx)
        .ok_or_else(|| ProtocolError::Malformed(format!("missing token {name}")))?;
    if n != name {
        return Err(ProtocolError::Malformed(format!(
            "expected token {name}, got {n}"
        )));
    }
    Ok(v.clone())
}

fn check_len(
    toks: &[(String, String, usize)],
    idx: usize,
    max: usize,
    err: ProtocolError,
) -> Result<(), ProtocolError> {
    if let Some((_, _, enc_len)) = toks.get(idx) {
        if *enc_len > max {
            return Err(err);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_leaves_plain_ascii_alone() {
        assert_eq!(percent_encode("10.0.0.1:6000"), "10.0.0.1:6000");
        assert_eq!(percent_encode("ep_3"), "ep_3");
    }

    #[test]
    fn encode_escapes_specials() {
        assert_eq!(percent_encode("a=b"), "a%3Db");
        assert_eq!(percent_encode("a b"), "a%20b");
        assert_eq!(percent_encode("50%"), "50%25");
        assert_eq!(percent_encode("\n"), "%0A");
    }

    #[test]
    fn decode_round_trips() {
        for s in ["a=b", "x y z", "plain", "100% =%= ", "héllo"] {
            assert_eq!(percent_decode(&percent_encode(s)).unwrap(), s);
        }
    }

    #[test]
    fn decode_rejects_raw_specials() {
        assert_eq!(percent_decode("a b"), Err(ProtocolError::RawByte(b' ')));
        assert_eq!(percent_decode("a=b"), Err(ProtocolError::RawByte(b'=')));
        assert!(percent_decode("ab%").is_err());
        assert!(percent_decode("ab%zz").is_err());
    }

    #[test]
    fn request_lines_are_exact() {
        assert_eq!(
            Request::Init { group: "g0".into(), rank: 3 }.encode(),
            "cmd=init group=g0 rank=3"
        );
        assert_eq!(
            Request::Put { key: "k".into(), value: "a=b".into() }.encode(),
            "cmd=put key=k value=a%3Db"
        );
        assert_eq!(Request::Barrier.encode(), "cmd=barrier");
    }

    #[test]
    fn request_parse_round_trips() {
        let reqs = [
            Request::Init { group: "grp 1".into(), rank: 0 },
            Request::Put { key: "ep_0".into(), value: "10.0.0.1:6000".into() },
            Request::Get { key: "ep_0".into() },
            Request::Barrier,
            Request::Finalize,
        ];
        for r in reqs {
            assert_eq!(Request::parse(&r.encode()).unwrap(), r);
        }
    }

    #[test]
    fn response_parse_round_trips() {
        let resps = [
            Response::InitAck { size: 4 },
            Response::InitErr { reason: "duplicate_rank".into() },
            Response::PutAck,
            Response::PutErr { reason: "duplicate_key".into() },
            Response::GetAck { value: "a=b c".into() },
            Response::GetNeg,
            Response::BarrierAck { epoch: 17 },
            Response::GroupErr { reason: "peer_disconnected".into() },
            Response::FinalizeAck,
        ];
        for r in resps {
            assert_eq!(Response::parse(&r.encode()).unwrap(), r);
        }
    }

    #[test]
    fn oversized_key_rejected_at_parse() {
        let key = "k".repeat(MAX_KEY_LEN + 1);
        let line = format!("cmd=put key={key} value=v");
        assert_eq!(Request::parse(&line), Err(ProtocolError::KeyTooLong));

        let val = "v".repeat(MAX_VALUE_LEN + 1);
        let line = format!("cmd=put key=k value={val}");
        assert_eq!(Request::parse(&line), Err(ProtocolError::ValueTooLong));
    }

    #[test]
    fn encoded_length_is_what_counts() {
        // 100 raw spaces encode to 300 bytes; the post-encoding size is
        // checked, so a 2000-space value (6000 encoded bytes) must fail.
        let val = " ".repeat(2000);
        let line = format!("cmd=put key=k value={}", percent_encode(&val));
        assert_eq!(Request::parse(&line), Err(ProtocolError::ValueTooLong));
    }
}
