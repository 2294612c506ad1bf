use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;
use tungstenite::Message;

use orbemu::harness::stream::{decimation, run_live, LiveOptions, StreamServer};
use orbemu::harness::{run_scenario, Log, ScenarioConfig, ScenarioKind, Simulation};

fn free_float(duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        duration: Some(duration),
        ..ScenarioConfig::preset(ScenarioKind::FreeFloat)
    }
}

fn wait_for_clients(server: &StreamServer, n: usize) {
    let start = Instant::now();
    while server.client_count() < n {
        assert!(start.elapsed() < Duration::from_secs(5), "client never registered");
        thread::sleep(Duration::from_millis(5));
    }
}

fn csv(log: &Log) -> Vec<u8> {
    let mut out = Vec::new();
    log.write_csv(&mut out).unwrap();
    out
}

#[test]
fn ndjson_client_gets_frames_errors_and_drives_impulses() {
    let server = StreamServer::bind("127.0.0.1:0").unwrap();
    let mut conn = TcpStream::connect(server.local_addr()).unwrap();
    conn.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    conn.write_all(b"this is not json\n").unwrap();
    wait_for_clients(&server, 1);
    let mut reader = BufReader::new(conn.try_clone().unwrap());

    let cfg = free_float(1.5);
    let decim = decimation(cfg.dt_sim);
    let log = thread::scope(|s| {
        let live = s.spawn(|| run_live(Simulation::new(cfg).unwrap(), &server, LiveOptions::default()));

        let mut frames = Vec::new();
        let mut errors = Vec::new();
        let mut sent = false;
        let mut line = String::new();
        while reader.read_line(&mut line).unwrap() > 0 {
            let v: Value = serde_json::from_str(line.trim()).unwrap();
            match v["type"].as_str().unwrap() {
                "state" => {
                    frames.push(v["tick"].as_u64().unwrap());
                    assert_eq!(v["sats"][0]["name"], "sat1");
                    assert_eq!(v["sats"][0]["des_pose"]["orientation"].as_array().unwrap().len(), 4);
                    if !sent {
                        conn.write_all(
                            b"{\"type\":\"impulse\",\"sat\":\"nope\",\"force\":[1,0,0],\"duration_s\":0.1}\n\
                              {\"type\":\"impulse\",\"sat\":\"sat1\",\"force\":[0.5,0,0],\"duration_s\":0.1}\n",
                        )
                        .unwrap();
                        sent = true;
                    }
                }
                "error" => errors.push(v["message"].as_str().unwrap().to_owned()),
                other => panic!("unexpected frame type {other}"),
            }
            line.clear();
            if v["type"] == "state" && v["tick"].as_u64().unwrap() >= 1499 {
                break;
            }
        }
        let log = live.join().unwrap().unwrap();

        assert!(errors.iter().any(|e| e.contains("malformed")), "{errors:?}");
        assert!(errors.iter().any(|e| e.contains("unknown satellite")), "{errors:?}");
        assert!(frames.len() > 10);
        // ticks advance by the decimation, apart from acknowledgements and the final frame
        let regular = frames.windows(2).filter(|w| w[1] - w[0] == decim).count();
        assert!(regular + 3 >= frames.len() - 1, "{frames:?}");
        assert!(frames.windows(2).all(|w| w[1] >= w[0]));
        log
    });
    let pushed: Vec<_> = log.records.iter().filter(|r| r.sats[0].wrench.force.x == 0.5).collect();
    assert_eq!(pushed.len(), 100);
}

fn ws_next_state(ws: &mut tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>) -> Value {
    loop {
        if let Message::Text(t) = ws.read().unwrap() {
            let v: Value = serde_json::from_str(t.as_str()).unwrap();
            if v["type"] == "state" {
                return v;
            }
        }
    }
}

#[test]
fn websocket_client_pauses_resumes_and_resets() {
    let server = StreamServer::bind("127.0.0.1:0").unwrap();
    let (mut ws, _) = tungstenite::connect(format!("ws://{}", server.local_addr())).unwrap();
    wait_for_clients(&server, 1);

    let cfg = free_float(3.0);
    thread::scope(|s| {
        let live = s.spawn(|| run_live(Simulation::new(cfg).unwrap(), &server, LiveOptions::default()));

        assert_eq!(ws_next_state(&mut ws)["status"], "running");
        ws.send(Message::text(r#"{"type":"cmd","action":"pause"}"#)).unwrap();
        let paused = loop {
            let v = ws_next_state(&mut ws);
            if v["status"] == "paused" {
                break v;
            }
        };
        ws.send(Message::text(r#"{"type":"set_param","path":"vfdm.kp_trans","value":-1}"#)).unwrap();
        let err = loop {
            if let Message::Text(t) = ws.read().unwrap() {
                let v: Value = serde_json::from_str(t.as_str()).unwrap();
                if v["type"] == "error" {
                    break v;
                }
            }
        };
        assert!(err["message"].as_str().unwrap().contains("kp_trans"));

        ws.send(Message::text(r#"{"type":"cmd","action":"resume"}"#)).unwrap();
        let resumed = loop {
            let v = ws_next_state(&mut ws);
            if v["status"] == "running" && v["tick"].as_u64() > paused["tick"].as_u64() {
                break v;
            }
        };

        ws.send(Message::text(r#"{"type":"cmd","action":"reset"}"#)).unwrap();
        let mut last = resumed["tick"].as_u64().unwrap();
        loop {
            let t = ws_next_state(&mut ws)["tick"].as_u64().unwrap();
            if t < last {
                break;
            }
            last = t;
        }
        ws.close(None).unwrap();
        let log = live.join().unwrap().unwrap();
        assert_eq!(log.records.len(), 3000);
    });
}

#[test]
fn loop_does_not_wait_for_clients() {
    let server = StreamServer::bind("127.0.0.1:0").unwrap();
    let cfg = free_float(5.0);
    let start = Instant::now();
    let live = run_live(Simulation::new(cfg.clone()).unwrap(), &server, LiveOptions { headless: true }).unwrap();
    assert!(start.elapsed() < Duration::from_secs(3));
    assert_eq!(csv(&live), csv(&run_scenario(cfg).unwrap()));
}

#[test]
fn stalled_client_does_not_block_the_loop() {
    let server = StreamServer::bind("127.0.0.1:0").unwrap();
    // connects, never reads
    let _idle = TcpStream::connect(server.local_addr()).unwrap();
    wait_for_clients(&server, 1);
    let start = Instant::now();
    run_live(Simulation::new(free_float(20.0)).unwrap(), &server, LiveOptions { headless: true }).unwrap();
    assert!(start.elapsed() < Duration::from_secs(5));
}
