//! The live transport against a throwaway local HTTP server.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use cryptohalal_core::market::{ClientConfig, HttpTransport, MarketClient, MarketError, Mode};

/// Serves `n` connections, answering each request path via `reply`.
fn serve(n: usize, reply: fn(&str) -> Option<Vec<u8>>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("/").to_owned();
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).unwrap() == 0 || h == "\r\n" {
                    break;
                }
            }
            match reply(&path) {
                Some(bytes) => {
                    let _ = stream.write_all(&bytes);
                }
                None => thread::sleep(Duration::from_millis(800)),
            }
        }
    });
    format!("http://{addr}")
}

fn response(status: &str, extra: &str, body: &[u8]) -> Vec<u8> {
    let mut out = format!(
        "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n{extra}\r\n",
        body.len()
    )
    .into_bytes();
    out.extend_from_slice(body);
    out
}

fn client(timeout_ms: u64, limit: usize) -> MarketClient {
    let cfg = ClientConfig {
        timeout: Duration::from_millis(timeout_ms),
        backoff_base: Duration::ZERO,
        max_retries: 0,
        size_limit: limit,
        ..ClientConfig::default()
    };
    MarketClient::with_transport(Mode::Live { api_key: None }, cfg, Arc::new(HttpTransport))
}

#[test]
fn follows_relative_redirects() {
    let base = serve(2, |path| {
        Some(match path {
            "/start" => response("301 Moved Permanently", "Location: /home\r\n", b""),
            _ => response("200 OK", "Content-Type: text/html\r\n", b"<p>home</p>"),
        })
    });
    let doc = client(5000, 1024).fetch_site(&format!("{base}/start")).unwrap();
    assert_eq!(doc.content, b"<p>home</p>");
    assert_eq!(doc.source_url.unwrap(), format!("{base}/home"));
}

#[test]
fn error_status_and_size_cap() {
    let base = serve(2, |path| {
        Some(match path {
            "/missing" => response("404 Not Found", "", b"nope"),
            _ => response("200 OK", "", &[b'x'; 2048]),
        })
    });
    let c = client(5000, 1024);
    assert!(matches!(
        c.fetch_site(&format!("{base}/missing")),
        Err(MarketError::HttpStatus { status: 404, .. })
    ));
    assert!(matches!(c.fetch_site(&format!("{base}/big")), Err(MarketError::TooLarge { limit: 1024, .. })));
}

#[test]
fn slow_server_times_out() {
    let base = serve(1, |_| None);
    let err = client(150, 1024).fetch_site(&format!("{base}/slow")).unwrap_err();
    assert!(matches!(err, MarketError::Timeout { .. }), "{err:?}");
}
