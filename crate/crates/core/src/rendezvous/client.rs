//! Client side of the rendezvous protocol.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;

use super::protocol::{
    percent_encode, Request, Response, ENV_ENDPOINT, ENV_RANK, MAX_KEY_LEN, MAX_VALUE_LEN,
};
use super::RdvError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Initialized,
    Finalized,
}

/// A session with the rendezvous server, bound to one `(group, rank)`.
///
/// Single-owner: use from one logical thread at a time (moving it between
/// threads is fine).
pub struct ClientSession {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    group_id: String,
    rank: u32,
    size: u32,
    state: State,
}

/// Read the server endpoint from `RDV_PORT`.
pub fn endpoint_from_env() -> Result<String, RdvError> {
    std::env::var(ENV_ENDPOINT).map_err(|_| RdvError::Env(ENV_ENDPOINT))
}

/// Read this process's rank from `RDV_RANK`.
pub fn rank_from_env() -> Result<u32, RdvError> {
    std::env::var(ENV_RANK)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(RdvError::Env(ENV_RANK))
}

impl ClientSession {
    /// Connect to the server and join `group_id` as `rank`.
    pub fn init(server_endpoint: &str, group_id: &str, rank: u32) -> Result<Self, RdvError> {
        let stream = TcpStream::connect(server_endpoint)?;
        stream.set_nodelay(true).ok();
        let mut session = Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            group_id: group_id.to_string(),
            rank,
            size: 0,
            state: State::Initialized,
        };
        let req = Request::Init {
            group: group_id.to_string(),
            rank,
        };
        match session.round_trip(&req)? {
            Response::InitAck { size } => {
                session.size = size;
                Ok(session)
            }
            Response::InitErr { reason } => Err(RdvError::Init { reason }),
            other => Err(unexpected(&req, &other)),
        }
    }

    /// Connect using the `RDV_PORT`/`RDV_RANK` environment bootstrap.
    pub fn init_from_env(group_id: &str) -> Result<Self, RdvError> {
        Self::init(&endpoint_from_env()?, group_id, rank_from_env()?)
    }

    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    /// Group size as reported by the server at init.
    pub fn size(&self) -> u32 {
        self.size
    }

    /// Store an immutable entry in the group's key-value space.
    pub fn put(&mut self, key: &str, value: &str) -> Result<(), RdvError> {
        self.check_initialized()?;
        if percent_encode(key).len() > MAX_KEY_LEN {
            return Err(RdvError::Put {
                reason: format!("key exceeds {MAX_KEY_LEN} encoded bytes"),
            });
        }
        if percent_encode(value).len() > MAX_VALUE_LEN {
            return Err(RdvError::Put {
                reason: format!("value exceeds {MAX_VALUE_LEN} encoded bytes"),
            });
        }
        let req = Request::Put {
            key: key.to_string(),
            value: value.to_string(),
        };
        match self.round_trip(&req)? {
            Response::PutAck => Ok(()),
            Response::PutErr { reason } => Err(RdvError::Put { reason }),
            Response::GroupErr { reason } => Err(RdvError::Group { reason }),
            other => Err(unexpected(&req, &other)),
        }
    }

    /// Fetch an entry. `Ok(None)` is the non-fatal negative response for an
    /// absent key; callers typically retry after a barrier.
    pub fn get(&mut self, key: &str) -> Result<Option<String>, RdvError> {
        self.check_initialized()?;
        let req = Request::Get {
            key: key.to_string(),
        };
        match self.round_trip(&req)? {
            Response::GetAck { value } => Ok(Some(value)),
            Response::GetNeg => Ok(None),
            Response::GroupErr { reason } => Err(RdvError::Group { reason }),
            other => Err(unexpected(&req, &other)),
        }
    }

    /// Block until every rank of the group has entered this barrier.
    /// Returns the completed barrier epoch.
    pub fn barrier(&mut self) -> Result<u64, RdvError> {
        self.check_initialized()?;
        match self.round_trip(&Request::Barrier)? {
            Response::BarrierAck { epoch } => Ok(epoch),
            Response::GroupErr { reason } => Err(RdvError::Group { reason }),
            other => Err(unexpected(&Request::Barrier, &other)),
        }
    }

    /// Leave the group. The session is unusable afterwards.
    pub fn finalize(&mut self) -> Result<(), RdvError> {
        self.check_initialized()?;
        match self.round_trip(&Request::Finalize)? {
            Response::FinalizeAck => {
                self.state = State::Finalized;
                Ok(())
            }
            Response::GroupErr { reason } => Err(RdvError::Group { reason }),
            other => Err(unexpected(&Request::Finalize, &other)),
        }
    }

    fn check_initialized(&self) -> Result<(), RdvError> {
        match self.state {
            State::Initialized => Ok(()),
            State::Finalized => Err(RdvError::SessionState("finalized")),
        }
    }

    fn round_trip(&mut self, req: &Request) -> Result<Response, RdvError> {
        let mut line = req.encode();
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        let mut resp_line = String::new();
        let n = self.reader.read_line(&mut resp_line)?;
        if n == 0 {
            return Err(RdvError::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "server closed connection",
            )));
        }
        Ok(Response::parse(&resp_line)?)
    }
}

fn unexpected(req: &Request, resp: &Response) -> RdvError {
    RdvError::UnexpectedResponse {
        sent: req.encode(),
        got: resp.encode(),
    }
}
