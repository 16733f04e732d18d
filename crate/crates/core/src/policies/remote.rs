use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use nalgebra::Vector2;

use super::wire::{self, MessageKind, WireDecoder, WireMessage};
use super::Policy;
use crate::{Error, Observation, Result};

/// Per-message deadline for the remote side.
pub const REMOTE_TIMEOUT: Duration = Duration::from_secs(1);

/// Policy living in another process, reached over the line protocol.
///
/// Addresses are `tcp://host:port` or `exec:<shell command>`; the latter
/// spawns the command and talks over its stdin/stdout. Any protocol failure
/// poisons the connection: later calls fail with [`Error::Disconnected`].
pub struct RemotePolicy {
    name: String,
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<Vec<u8>>>,
    decoder: WireDecoder,
    child: Option<Child>,
    timeout: Duration,
    episode: Option<u64>,
    step: u64,
    poisoned: bool,
}

impl std::fmt::Debug for RemotePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemotePolicy")
            .field("name", &self.name)
            .field("episode", &self.episode)
            .field("step", &self.step)
            .field("poisoned", &self.poisoned)
            .finish_non_exhaustive()
    }
}

fn spawn_reader(reader: impl std::io::Read + Send + 'static) -> Receiver<std::io::Result<Vec<u8>>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(reader);
        loop {
            let mut buf = Vec::new();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(buf)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

impl RemotePolicy {
    pub fn connect(address: &str) -> Result<Self> {
        Self::connect_with_timeout(address, REMOTE_TIMEOUT)
    }

    pub fn connect_with_timeout(address: &str, timeout: Duration) -> Result<Self> {
        let (writer, lines, child): (Box<dyn Write + Send>, _, _) =
            if let Some(addr) = address.strip_prefix("tcp://") {
                let stream = TcpStream::connect(addr)?;
                stream.set_nodelay(true)?;
                let read_half = stream.try_clone()?;
                (Box::new(stream), spawn_reader(read_half), None)
            } else if let Some(cmd) = address.strip_prefix("exec:") {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdin), spawn_reader(stdout), Some(child))
            } else {
                return Err(Error::Config(format!(
                    "remote address must start with tcp:// or exec:, got {address:?}"
                )));
            };

        let mut policy = Self {
            name: format!("remote:{address}"),
            writer,
            lines,
            decoder: WireDecoder::new(),
            child,
            timeout,
            episode: None,
            step: 0,
            poisoned: false,
        };
        policy.handshake()?;
        Ok(policy)
    }

    fn handshake(&mut self) -> Result<()> {
        self.send(&WireMessage::hello())?;
        let reply = self.receive()?;
        if reply.kind != MessageKind::Hello {
            return Err(self.poison(Error::Protocol {
                reason: format!("expected hello, got {:?}", reply.kind),
                line: wire::encode_message(&reply).unwrap_or_default(),
            }));
        }
        let version = reply
            .number("protocol_version")
            .map_err(|e| self.poison(e))?;
        if version != f64::from(wire::PROTOCOL_VERSION) {
            return Err(self.poison(Error::Protocol {
                reason: format!("unsupported protocol version {version}"),
                line: wire::encode_message(&reply).unwrap_or_default(),
            }));
        }
        Ok(())
    }

    fn poison(&mut self, err: Error) -> Error {
        self.poisoned = true;
        err
    }

    fn send(&mut self, msg: &WireMessage) -> Result<()> {
        let mut line = wire::encode_message(msg)?;
        line.push('\n');
        let res = self
            .writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush());
        res.map_err(|e| self.poison(Error::Io(e)))
    }

    fn receive(&mut self) -> Result<WireMessage> {
        let bytes = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(bytes)) => bytes,
            Ok(Err(e)) => return Err(self.poison(Error::Io(e))),
            Err(RecvTimeoutError::Timeout) => return Err(self.poison(Error::Timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(self.poison(Error::Disconnected)),
        };
        let msg = self.decoder.decode(&bytes).map_err(|e| self.poison(e))?;
        if msg.kind == MessageKind::Error {
            let text = msg.message.clone().unwrap_or_default();
            return Err(self.poison(Error::Protocol {
                reason: format!("remote reported error: {text}"),
                line: String::from_utf8_lossy(&bytes).trim_end().to_string(),
            }));
        }
        Ok(msg)
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }
}

impl Policy<f64> for RemotePolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn reset(&mut self, seed: u64) -> Result<()> {
        if self.poisoned {
            return Err(Error::Disconnected);
        }
        let episode = self.episode.map_or(0, |e| e + 1);
        self.episode = Some(episode);
        self.step = 0;
        self.send(&WireMessage::reset(episode, seed))
    }

    fn act(&mut self, obs: &Observation<f64>) -> Result<Vector2<f64>> {
        if self.poisoned {
            return Err(Error::Disconnected);
        }
        let Some(episode) = self.episode else {
            return Err(Error::contract("reset must precede act"));
        };
        let step = self.step;
        self.send(&WireMessage::obs(episode, step, obs))?;
        let reply = self.receive()?;
        if reply.kind != MessageKind::Action {
            return Err(self.poison(Error::Protocol {
                reason: format!("expected action, got {:?}", reply.kind),
                line: wire::encode_message(&reply).unwrap_or_default(),
            }));
        }
        if reply.episode != episode || reply.step != step {
            return Err(self.poison(Error::Desync {
                expected_episode: episode,
                expected_step: step,
                episode: reply.episode,
                step: reply.step,
            }));
        }
        let v = reply.v_ee().map_err(|e| self.poison(e))?;
        self.step += 1;
        Ok(v)
    }
}

impl Drop for RemotePolicy {
    fn drop(&mut self) {
        if !self.poisoned {
            let (episode, step) = (self.episode.unwrap_or(0), self.step);
            let _ = self.send(&WireMessage::bye(episode, step));
        }
        if let Some(child) = self.child.as_mut() {
            // give a well-behaved client a moment to exit on bye
            for _ in 0..20 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
