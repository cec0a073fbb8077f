//! The rendezvous server: per-group key-value spaces and barriers over a
//! line protocol.
//!
//! The server never launches processes. Workers are started elsewhere and
//! find the server through the `RDV_PORT`/`RDV_RANK` environment values;
//! the server's whole job is information exchange and synchronization.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use log::{debug, warn};

use super::protocol::{reason, Request, Response};
use super::RdvError;

/// One process group: a key-value space, the joined ranks, and barrier
/// bookkeeping. All mutation happens under the mutex, so every client
/// observes a single total order of puts per space.
struct GroupState {
    size: u32,
    joined: HashSet<u32>,
    kvs: HashMap<String, String>,
    barrier_epoch: u64,
    barrier_waiters: HashSet<u32>,
    /// Set once; a failed group never recovers (fail-stop).
    failed: Option<&'static str>,
}

impl GroupState {
    fn new(size: u32) -> Self {
        Self {
            size,
            joined: HashSet::new(),
            kvs: HashMap::new(),
            barrier_epoch: 0,
            barrier_waiters: HashSet::new(),
            failed: None,
        }
    }

    fn fail(&mut self, why: &'static str) {
        if self.failed.is_none() {
            self.failed = Some(why);
        }
        self.barrier_waiters.clear();
    }

    /// Reset for reuse once every joined rank has finalized cleanly.
    fn reset(&mut self) {
        self.kvs.clear();
        self.barrier_epoch = 0;
        self.barrier_waiters.clear();
    }
}

struct Group {
    state: Mutex<GroupState>,
    barrier_cv: Condvar,
}

struct Shared {
    groups: Mutex<HashMap<String, Arc<Group>>>,
    shutdown: AtomicBool,
    /// Clones of live client streams so shutdown can unblock reads.
    conns: Mutex<Vec<TcpStream>>,
}

/// Handle to a running rendezvous server. Dropping it shuts the server
/// down.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept_thread: Option<JoinHandle<()>>,
}

/// Start the server on `bind_endpoint` with the declared groups.
///
/// Each group gets an empty key-value space; clients may then connect and
/// init ranks in `[0, size)`.
pub fn start_server<A: ToSocketAddrs>(
    bind_endpoint: A,
    groups: &[(String, u32)],
) -> Result<ServerHandle, RdvError> {
    let mut map = HashMap::new();
    for (id, size) in groups {
        if *size == 0 {
            return Err(RdvError::Config(format!("group {id:?} has size 0")));
        }
        if map
            .insert(
                id.clone(),
                Arc::new(Group {
                    state: Mutex::new(GroupState::new(*size)),
                    barrier_cv: Condvar::new(),
                }),
            )
            .is_some()
        {
            return Err(RdvError::Config(format!("duplicate group id {id:?}")));
        }
    }

    let listener = TcpListener::bind(bind_endpoint).map_err(RdvError::Startup)?;
    let addr = listener.local_addr().map_err(RdvError::Startup)?;
    let shared = Arc::new(Shared {
        groups: Mutex::new(map),
        shutdown: AtomicBool::new(false),
        conns: Mutex::new(Vec::new()),
    });

    let accept_shared = Arc::clone(&shared);
    let accept_thread = std::thread::Builder::new()
        .name("rdv-accept".into())
        .spawn(move || accept_loop(listener, accept_shared))
        .map_err(RdvError::Startup)?;

    debug!("rendezvous server listening on {addr}");
    Ok(ServerHandle {
        addr,
        shared,
        accept_thread: Some(accept_thread),
    })
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `host:port` form suitable for `RDV_PORT`.
    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    /// Declare an additional group on a running server (driver-side
    /// administration; not part of the client wire protocol).
    pub fn declare_group(&self, group_id: &str, size: u32) -> Result<(), RdvError> {
        if size == 0 {
            return Err(RdvError::Config(format!("group {group_id:?} has size 0")));
        }
        let mut groups = self.shared.groups.lock().unwrap();
        if groups.contains_key(group_id) {
            return Err(RdvError::Config(format!(
                "duplicate group id {group_id:?}"
            )));
        }
        groups.insert(
            group_id.to_string(),
            Arc::new(Group {
                state: Mutex::new(GroupState::new(size)),
                barrier_cv: Condvar::new(),
            }),
        );
        Ok(())
    }

    pub fn shutdown(&mut self) {
        if self.shared.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        // Unblock accept() with a throwaway connection, then unblock any
        // client reads by closing their sockets.
        let _ = TcpStream::connect(self.addr);
        for s in self.shared.conns.lock().unwrap().iter() {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    loop {
        let (stream, peer) = match listener.accept() {
            Ok(x) => x,
            Err(e) => {
                if shared.shutdown.load(Ordering::SeqCst) {
                    return;
                }
                warn!("accept error: {e}");
                continue;
            }
        };
        if shared.shutdown.load(Ordering::SeqCst) {
            return;
        }
        if let Ok(clone) = stream.try_clone() {
            shared.conns.lock().unwrap().push(clone);
        }
        let conn_shared = Arc::clone(&shared);
        let _ = std::thread::Builder::new()
            .name(format!("rdv-conn-{peer}"))
            .spawn(move || connection_loop(stream, conn_shared));
    }
}

/// Per-connection session state on the server side.
struct Session {
    group: Arc<Group>,
    group_id: String,
    rank: u32,
    finalized: bool,
}

fn connection_loop(stream: TcpStream, shared: Arc<Shared>) {
    let mut reader = BufReader::new(match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    });
    let mut writer = stream;
    let mut session: Option<Session> = None;

    loop {
        let mut line = String::new();
        let n = match reader.read_line(&mut line) {
            Ok(n) => n,
            Err(_) => 0,
        };
        if n == 0 {
            // EOF or error. A disconnect with an active (non-finalized)
            // session is a fail-stop event for the whole group.
            if let Some(s) = &session {
                if !s.finalized {
                    abandon(s);
                }
            }
            return;
        }

        let req = match Request::parse(&line) {
            Ok(r) => r,
            Err(e) => {
                use super::protocol::ProtocolError;
                let resp = match (&e, Request::parse_cmd_name(&line)) {
                    (ProtocolError::KeyTooLong, Some("put")) => Response::PutErr {
                        reason: reason::KEY_TOO_LONG.into(),
                    },
                    (ProtocolError::ValueTooLong, Some("put")) => Response::PutErr {
                        reason: reason::VALUE_TOO_LONG.into(),
                    },
                    _ => Response::GroupErr {
                        reason: reason::BAD_REQUEST.into(),
                    },
                };
                let fatal = !matches!(
                    e,
                    ProtocolError::KeyTooLong | ProtocolError::ValueTooLong
                );
                if send(&mut writer, &resp).is_err() || fatal {
                    if let Some(s) = &session {
                        if !s.finalized && fatal {
                            abandon(s);
                        }
                    }
                    return;
                }
                continue;
            }
        };

        let resp = handle(&shared, &mut session, req);
        if send(&mut writer, &resp).is_err() {
            if let Some(s) = &session {
                if !s.finalized {
                    abandon(s);
                }
            }
            return;
        }
    }
}

fn send(w: &mut TcpStream, resp: &Response) -> std::io::Result<()> {
    let mut line = resp.encode();
    line.push('\n');
    w.write_all(line.as_bytes())
}

/// Mark the session's group failed because this rank went away without
/// finalizing, and wake any barrier waiters.
fn abandon(s: &Session) {
    let mut st = s.group.state.lock().unwrap();
    debug!(
        "rank {} of group {:?} disconnected; failing group",
        s.rank, s.group_id
    );
    st.fail(reason::PEER_DISCONNECTED);
    drop(st);
    s.group.barrier_cv.notify_all();
}

fn handle(shared: &Shared, session: &mut Option<Session>, req: Request) -> Response {
    match req {
        Request::Init { group, rank } => {
            if session.is_some() {
                return Response::InitErr {
                    reason: reason::ALREADY_INITIALIZED.into(),
                };
            }
            let g = match shared.groups.lock().unwrap().get(&group) {
                Some(g) => Arc::clone(g),
                None => {
                    return Response::InitErr {
                        reason: reason::UNKNOWN_GROUP.into(),
                    }
                }
            };
            let mut st = g.state.lock().unwrap();
            if st.failed.is_some() {
                return Response::InitErr {
                    reason: reason::GROUP_FAILED.into(),
                };
            }
            if rank >= st.size {
                return Response::InitErr {
                    reason: reason::RANK_OUT_OF_RANGE.into(),
                };
            }
            if !st.joined.insert(rank) {
                return Response::InitErr {
                    reason: reason::DUPLICATE_RANK.into(),
                };
            }
            let size = st.size;
            drop(st);
            *session = Some(Session {
                group: g,
                group_id: group,
                rank,
                finalized: false,
            });
            Response::InitAck { size }
        }

        Request::Put { key, value } => with_session(session, |s| {
            let mut st = s.group.state.lock().unwrap();
            if let Some(why) = st.failed {
                return Response::GroupErr { reason: why.into() };
            }
            if st.kvs.contains_key(&key) {
                return Response::PutErr {
                    reason: reason::DUPLICATE_KEY.into(),
                };
            }
            st.kvs.insert(key, value);
            Response::PutAck
        }),

        Request::Get { key } => with_session(session, |s| {
            let st = s.group.state.lock().unwrap();
            if let Some(why) = st.failed {
                return Response::GroupErr { reason: why.into() };
            }
            match st.kvs.get(&key) {
                Some(v) => Response::GetAck { value: v.clone() },
                None => Response::GetNeg,
            }
        }),

        Request::Barrier => with_session(session, |s| barrier(s)),

        Request::Finalize => {
            let resp = with_session(session, |s| {
                let mut st = s.group.state.lock().unwrap();
                st.joined.remove(&s.rank);
                if !st.barrier_waiters.is_empty() {
                    // Peers blocked in a barrier can never complete it now.
                    st.fail(reason::PEER_FINALIZED);
                    drop(st);
                    s.group.barrier_cv.notify_all();
                } else if st.joined.is_empty() && st.failed.is_none() {
                    st.reset();
                }
                Response::FinalizeAck
            });
            if matches!(resp, Response::FinalizeAck) {
                if let Some(s) = session {
                    s.finalized = true;
                }
            }
            resp
        }
    }
}

fn with_session(
    session: &mut Option<Session>,
    f: impl FnOnce(&Session) -> Response,
) -> Response {
    match session {
        Some(s) if !s.finalized => f(s),
        Some(_) => Response::GroupErr {
            reason: reason::FINALIZED.into(),
        },
        None => Response::GroupErr {
            reason: reason::NOT_INITIALIZED.into(),
        },
    }
}

/// Block until all `size` ranks of the group have entered the same barrier
/// epoch. Puts issued before any rank's entry are visible to gets after
/// return because all KVS mutations happen under the same group mutex.
fn barrier(s: &Session) -> Response {
    let mut st = s.group.state.lock().unwrap();
    if let Some(why) = st.failed {
        return Response::GroupErr { reason: why.into() };
    }
    let entry_epoch = st.barrier_epoch;
    st.barrier_waiters.insert(s.rank);
    if st.barrier_waiters.len() as u32 == st.size {
        st.barrier_epoch += 1;
        st.barrier_waiters.clear();
        let epoch = st.barrier_epoch;
        drop(st);
        s.group.barrier_cv.notify_all();
        return Response::BarrierAck { epoch };
    }
    loop {
        st = s.group.barrier_cv.wait(st).unwrap();
        if let Some(why) = st.failed {
            return Response::GroupErr { reason: why.into() };
        }
        if st.barrier_epoch > entry_epoch {
            return Response::BarrierAck {
                epoch: st.barrier_epoch,
            };
        }
    }
}
