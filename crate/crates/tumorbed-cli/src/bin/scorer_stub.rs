//! Stub patch scorer speaking the external-scorer wire protocol, for tests
//! and demos. Reads newline-delimited JSON requests and answers with
//! `{"id":N,"p":P}` where P depends on the mode:
//!   const  - always `--p`
//!   coord  - deterministic hash of (x, y)
//!   silent - never answers (exercises client timeouts)
//!
//! Talks over stdio by default, or serves one TCP connection with --listen.

use std::io::{BufRead, BufReader, Read, Write};

use serde::Deserialize;

#[derive(Deserialize)]
struct Request {
    id: u64,
    #[allow(dead_code)]
    slide: String,
    x: u32,
    y: u32,
    #[allow(dead_code)]
    side: u32,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn main() {
    let mut mode = "coord".to_string();
    let mut p = 0.5f64;
    let mut listen: Option<String> = None;
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--mode" => mode = args.next().expect("--mode needs a value"),
            "--p" => p = args.next().expect("--p needs a value").parse().expect("bad --p"),
            "--listen" => listen = Some(args.next().expect("--listen needs an address")),
            other => {
                eprintln!("unknown argument: {other}");
                std::process::exit(2);
            }
        }
    }

    match listen {
        Some(addr) => {
            let listener = std::net::TcpListener::bind(&addr).expect("bind");
            let (stream, _) = listener.accept().expect("accept");
            let reader = stream.try_clone().expect("clone stream");
            serve(reader, stream, &mode, p);
        }
        None => {
            let stdout = std::io::stdout().lock();
            serve(std::io::stdin().lock(), stdout, &mode, p);
        }
    }
}

fn serve<R: Read, W: Write>(reader: R, mut writer: W, mode: &str, p_const: f64) {
    let reader = BufReader::new(reader);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("bad request `{line}`: {e}");
                continue;
            }
        };
        let p = match mode {
            "const" => p_const,
            "coord" => {
                let h = splitmix64(((req.x as u64) << 32) | req.y as u64);
                (h >> 11) as f64 / (1u64 << 53) as f64
            }
            "silent" => continue,
            other => {
                eprintln!("unknown mode {other}");
                std::process::exit(2);
            }
        };
        if writeln!(writer, "{{\"id\":{},\"p\":{p}}}", req.id).is_err() {
            break;
        }
        let _ = writer.flush();
    }
}
