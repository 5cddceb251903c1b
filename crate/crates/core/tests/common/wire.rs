use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use empc_core::bridge::{serve_plant, Reply, ServeSummary};
use empc_core::plant::Plant;
use empc_core::Result;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn spawn_server<P: Plant + Send + 'static>(plant: P, x0: Vec<f64>) -> (String, thread::JoinHandle<Result<ServeSummary>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || serve_plant(&plant, &listener, &x0));
    (endpoint, handle)
}

pub fn random_line(rng: &mut impl Rng) -> Vec<u8> {
    const FRAGMENTS: &[&str] = &[
        "{", "}", "\"op\"", ":", ",", "\"hello\"", "\"get\"", "\"set\"", "\"step\"", "\"names\"", "[", "]",
        "\"x1\"", "\"dt\"", "1e999", "-0", "null", "true", "\"value\"", "\"version\"", "\\u0000", "NaN",
    ];
    let mut line = Vec::new();
    match rng.random_range(0..3) {
        0 => {
            let n = rng.random_range(0..200);
            line.extend((0..n).map(|_| rng.random::<u8>()).filter(|b| *b != b'\n'));
        }
        1 => {
            for _ in 0..rng.random_range(1..12) {
                line.extend_from_slice(FRAGMENTS[rng.random_range(0..FRAGMENTS.len())].as_bytes());
            }
        }
        _ => {
            let valid = br#"{"op":"step","dt":0.01}"#;
            line.extend_from_slice(valid);
            let cut = rng.random_range(0..valid.len());
            line.truncate(cut);
        }
    }
    line.push(b'\n');
    line
}

/// Sends `lines` malformed lines (then one oversized line) inside a session
/// and checks that every one gets an error reply and that the session still
/// works afterwards. Ends the session with bye.
pub fn fuzz_session(endpoint: &str, lines: usize, seed: u64) -> std::result::Result<usize, String> {
    let stream = TcpStream::connect(endpoint).map_err(|e| e.to_string())?;
    stream.set_read_timeout(Some(Duration::from_secs(10))).map_err(|e| e.to_string())?;
    let mut writer = stream.try_clone().map_err(|e| e.to_string())?;
    let mut reader = BufReader::new(stream);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut send = |line: &[u8]| -> std::result::Result<Reply, String> {
        writer.write_all(line).map_err(|e| format!("write: {e}"))?;
        let mut reply = String::new();
        reader.read_line(&mut reply).map_err(|e| format!("read: {e}"))?;
        serde_json::from_str(&reply).map_err(|e| format!("reply {reply:?}: {e}"))
    };
    if !send(b"{\"op\":\"hello\",\"version\":1}\n")?.ok {
        return Err("hello refused".into());
    }
    let mut errors = 0;
    for _ in 0..lines {
        let reply = send(&random_line(&mut rng))?;
        if !reply.ok {
            if reply.err.is_none() {
                return Err("error reply without a message".into());
            }
            errors += 1;
        }
    }
    let mut huge = vec![b' '; 200_000];
    huge.push(b'\n');
    if send(&huge)?.ok {
        return Err("oversized line accepted".into());
    }
    if !send(b"{\"op\":\"get\",\"names\":[\"x1\"]}\n")?.ok {
        return Err("session unusable after fuzzing".into());
    }
    if !send(b"{\"op\":\"bye\"}\n")?.ok {
        return Err("bye refused".into());
    }
    Ok(errors)
}
