use std::io::Write;
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use funnelhand::fixtures::{cube45, default_hand, skill};
use funnelhand::{load_skill, play, PlayOptions};
use funnelhand_cli::config::bundled_skills;
use funnelhand_cli::protocol::{read_frame, write_frame, ClientMessage, ServerMessage, StateFrame};
use funnelhand_cli::server::SessionServer;
use funnelhand_cli::{new_session, Session};

fn session() -> Session {
    new_session(default_hand(), vec![cube45()], bundled_skills(), funnelhand::sim::DEFAULT_DT).unwrap()
}

fn start_server() -> SocketAddr {
    let server = SessionServer::bind("127.0.0.1:0", Arc::new(session), false).unwrap();
    let addr = server.local_addr().unwrap();
    thread::spawn(move || server.run());
    addr
}

struct Client {
    stream: TcpStream,
}

impl Client {
    fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
        Self { stream }
    }

    fn send(&mut self, m: &ClientMessage) {
        write_frame(&mut self.stream, &m.to_json()).unwrap();
        self.stream.flush().unwrap();
    }

    fn send_raw(&mut self, bytes: &[u8]) {
        self.stream.write_all(bytes).unwrap();
    }

    fn recv(&mut self) -> Option<ServerMessage> {
        let bytes = read_frame(&mut self.stream).unwrap()?;
        Some(ServerMessage::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap())
    }

    /// Reads until `pick` returns something, skipping other messages.
    fn until<T>(&mut self, mut pick: impl FnMut(&ServerMessage) -> Option<T>) -> T {
        loop {
            let m = self.recv().expect("connection closed");
            if let Some(t) = pick(&m) {
                return t;
            }
        }
    }

    fn frame(&mut self) -> StateFrame {
        self.until(|m| match m {
            ServerMessage::StateFrame(f) => Some(f.clone()),
            _ => None,
        })
    }

    /// Lets at least `seconds` of simulated time pass.
    fn wait(&mut self, seconds: f64) {
        let t0 = self.frame().time;
        while self.frame().time < t0 + seconds {}
    }
}

#[test]
fn tcp_session_round_trip() {
    let addr = start_server();
    let mut c = Client::connect(addr);
    let first = c.frame();
    assert_eq!(first.airmass.len(), 11);
    assert_eq!(first.object_poses.len(), 1);

    // a second client is turned away while the first is connected
    let mut other = Client::connect(addr);
    match other.recv() {
        Some(ServerMessage::Error { message }) => assert_eq!(message, "another session is active"),
        m => panic!("expected refusal, got {m:?}"),
    }
    assert!(other.recv().is_none());

    c.send(&ClientMessage::SetSlider { index: 3, value: 0.7 });
    let f = c.until(|m| match m {
        ServerMessage::StateFrame(f) if f.airmass[3] == 0.7 => Some(f.clone()),
        _ => None,
    });
    assert!(f.time > first.time);
    assert_eq!(c.frame().airmass[3], 0.7);

    // malformed input is answered and the session carries on
    c.send_raw(&[0, 0, 0, 5]);
    c.send_raw(b"{oops");
    let msg = c.until(|m| match m {
        ServerMessage::Error { message } => Some(message.clone()),
        _ => None,
    });
    assert!(msg.starts_with("malformed message"), "{msg}");
    c.send(&ClientMessage::SetSlider { index: 3, value: 1.5 });
    let msg = c.until(|m| match m {
        ServerMessage::Error { message } => Some(message.clone()),
        _ => None,
    });
    assert_eq!(msg, "slider out of range");
    assert_eq!(c.frame().airmass[3], 0.7);

    // author three keyframes through the protocol
    let spin = skill("spin").unwrap();
    for k in &spin.keyframes[..3] {
        for (index, &value) in k.airmass.values().iter().enumerate() {
            c.send(&ClientMessage::SetSlider { index, value });
        }
        c.wait(0.5);
        c.send(&ClientMessage::CaptureKeyframe { label: None });
        c.until(|m| matches!(m, ServerMessage::KeyframeAck { .. }).then_some(()));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("studio.json");
    c.send(&ClientMessage::SaveSkill {
        path: path.to_string_lossy().into(),
    });
    let (name, n) = c.until(|m| match m {
        ServerMessage::SkillSaved { name, keyframes, .. } => Some((name.clone(), *keyframes)),
        ServerMessage::Error { message } => panic!("{message}"),
        _ => None,
    });
    assert_eq!((name.as_str(), n), ("studio", 3));
    let saved = load_skill(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(saved.keyframes.len(), 3);

    // replay the saved skill from a fresh start, and the same in batch
    c.send(&ClientMessage::Reset);
    c.send(&ClientMessage::PlaySkill {
        name: "studio".into(),
        time_scale: 1.0,
    });
    let (result, final_pose) = c.until(|m| match m {
        ServerMessage::Outcome { result, final_pose, .. } => Some((result.clone(), *final_pose)),
        ServerMessage::Error { message } => panic!("{message}"),
        _ => None,
    });
    let fresh = session();
    let mut world = fresh.world().clone();
    let log = play(&saved, fresh.simulator(), &mut world, &PlayOptions::scaled(1.0)).unwrap();
    assert_eq!(result, log.outcome);
    assert_eq!(final_pose, log.final_pose().unwrap());

    drop(c);
    // once the first client leaves, a new one is accepted
    thread::sleep(Duration::from_millis(100));
    let mut again = Client::connect(addr);
    assert!(matches!(again.recv(), Some(ServerMessage::StateFrame(_))));
}

#[test]
fn oversized_frame_ends_the_connection() {
    let addr = start_server();
    let mut c = Client::connect(addr);
    c.frame();
    c.send_raw(&u32::MAX.to_be_bytes());
    let msg = c.until(|m| match m {
        ServerMessage::Error { message } => Some(message.clone()),
        _ => None,
    });
    assert!(msg.contains("exceeds"), "{msg}");
    while c.recv().is_some() {}
}
