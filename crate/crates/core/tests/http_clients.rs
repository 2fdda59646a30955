//! Language-model, image-search and image-fetch clients against a local
//! single-threaded HTTP server.

use std::io::{BufRead, BufReader, Cursor, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use modguard_core::augmentation::{AugmentError, Augmenter, LlmClient, LlmClientConfig};
use modguard_core::corpus::{fetch_images, CorpusError, FetchOptions, GoogleImageSearch, ImageSearch};
use modguard_core::textprep::clean_text;

struct Request {
    head: String,
    body: String,
}

struct Reply {
    status: u16,
    content_type: &'static str,
    body: Vec<u8>,
}

impl Reply {
    fn json(status: u16, body: &str) -> Self {
        Self { status, content_type: "application/json", body: body.as_bytes().to_vec() }
    }
}

fn read_request(stream: &mut TcpStream) -> Request {
    let mut reader = BufReader::new(stream);
    let mut head = String::new();
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        head.push_str(&line);
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    Request { head, body: String::from_utf8_lossy(&body).into_owned() }
}

/// Serves `n` connections, answering each with `respond`; requests are
/// forwarded on the returned channel.
fn serve(n: usize, respond: impl Fn(&Request) -> Reply + Send + 'static) -> (String, mpsc::Receiver<Request>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let req = read_request(&mut stream);
            let reply = respond(&req);
            let head = format!(
                "HTTP/1.1 {} X\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                reply.status,
                reply.content_type,
                reply.body.len()
            );
            stream.write_all(head.as_bytes()).unwrap();
            stream.write_all(&reply.body).unwrap();
            let _ = tx.send(req);
        }
    });
    (base, rx)
}

fn llm_config(url: String) -> LlmClientConfig {
    LlmClientConfig {
        endpoint_url: url,
        timeout_s: 5.0,
        max_retries: 1,
        api_key: Some("sekret".into()),
        ..LlmClientConfig::default()
    }
}

#[test]
fn llm_round_trip() {
    let body = r#"{"choices":[{"message":{"role":"assistant","content":"Here:\n[\"they are awful\", \"they are dreadful\"]"}}]}"#;
    let (base, rx) = serve(1, move |_| Reply::json(200, body));
    let client = LlmClient::new(llm_config(format!("{base}/v1/chat/completions"))).unwrap();
    let out = client.rephrase(&clean_text("they are terrible"), 2).unwrap();
    assert_eq!(out.variants, ["they are awful", "they are dreadful"]);

    let req = rx.recv_timeout(Duration::from_secs(5)).unwrap();
    assert!(req.head.starts_with("POST /v1/chat/completions"));
    assert!(req.head.to_ascii_lowercase().contains("authorization: bearer sekret"));
    let sent: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(sent["model"], "Mistral-7B-Instruct");
    assert_eq!(sent["messages"][0]["role"], "user");
    assert!(sent["messages"][0]["content"].as_str().unwrap().contains("they are terrible"));
    assert_eq!(sent["temperature"], 0.7);
}

#[test]
fn llm_retries_then_succeeds() {
    let (base, _rx) = serve(2, {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        move |_| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
                Reply::json(200, r#"{"choices":[{"text":"no list here"}]}"#)
            } else {
                Reply::json(200, r#"{"choices":[{"text":"[\"angry\", \"crowd\"]"}]}"#)
            }
        }
    });
    let client = LlmClient::new(llm_config(base)).unwrap();
    assert_eq!(client.extract_keywords(&clean_text("an angry crowd")).unwrap(), ["angry", "crowd"]);
}

#[test]
fn llm_server_error_is_unreachable() {
    let (base, _rx) = serve(2, |_| Reply::json(500, "{}"));
    let client = LlmClient::new(llm_config(base)).unwrap();
    let err = client.rephrase(&clean_text("x y"), 3).unwrap_err();
    assert!(matches!(err, AugmentError::EndpointUnreachable(_)), "{err:?}");
}

#[test]
fn llm_closed_port_is_unreachable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = LlmClient::new(llm_config(format!("http://127.0.0.1:{port}/"))).unwrap();
    let err = client.rephrase(&clean_text("x y"), 3).unwrap_err();
    assert!(matches!(err, AugmentError::EndpointUnreachable(_)), "{err:?}");
}

#[test]
fn google_search_paginates_and_maps_quota() {
    let (base, rx) = serve(2, |req| {
        let start = if req.head.contains("start=11") { 10 } else { 0 };
        let items: Vec<_> = (start..start + 10)
            .map(|i| serde_json::json!({"link": format!("http://img.test/{i}.png"), "snippet": "s"}))
            .collect();
        Reply::json(200, &serde_json::json!({ "items": items }).to_string())
    });
    let mut s = GoogleImageSearch::new("k", "cx");
    s.endpoint = base;
    let hits = s.search("angry mob", 15).unwrap();
    assert_eq!(hits.len(), 15);
    assert_eq!(hits[14].url, "http://img.test/14.png");
    let first = rx.recv().unwrap();
    assert!(first.head.contains("q=angry") && first.head.contains("searchType=image") && first.head.contains("num=10"));
    assert!(rx.recv().unwrap().head.contains("num=5"));

    let (base, _rx) = serve(1, |_| Reply::json(429, "{}"));
    s.endpoint = base;
    assert!(matches!(s.search("q", 5), Err(CorpusError::QuotaExceeded(_))));
}

fn png_bytes() -> Vec<u8> {
    let img = image::RgbaImage::from_fn(3, 2, |x, y| image::Rgba([x as u8 * 80, y as u8 * 120, 7, 200]));
    let mut out = Vec::new();
    image::DynamicImage::ImageRgba8(img).write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png).unwrap();
    out
}

#[test]
fn fetch_keeps_good_images_and_records_failures() {
    let png = png_bytes();
    let (base, _rx) = serve(3, move |req| {
        if req.head.starts_with("GET /ok.png") {
            Reply { status: 200, content_type: "image/png", body: png.clone() }
        } else if req.head.starts_with("GET /junk") {
            Reply { status: 200, content_type: "image/png", body: b"not an image".to_vec() }
        } else {
            Reply::json(404, "{}")
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let reqs: Vec<(String, String)> = ["ok.png", "junk", "gone", "ok.png"]
        .iter()
        .map(|p| (format!("{base}/{p}"), "angry mob".to_string()))
        .collect();
    let opts = FetchOptions { per_host_delay: Duration::ZERO, timeout: Duration::from_secs(5), ..FetchOptions::default() };
    let report = fetch_images(&reqs, dir.path(), &opts).unwrap();

    assert_eq!(report.fetched.len(), 1);
    assert_eq!(report.fetched[0].proposed_query, "angry mob");
    let saved = image::open(&report.fetched[0].image_path).unwrap();
    assert_eq!(saved.color(), image::ColorType::Rgb8);
    assert_eq!((saved.width(), saved.height()), (3, 2));
    let mut reasons: Vec<_> = report.failures.iter().map(|f| f.reason.clone()).collect();
    reasons.sort();
    assert_eq!(reasons.len(), 2);
    assert_eq!(reasons[0], "HTTP 404");
    assert!(reasons[1].starts_with("decode"), "{reasons:?}");
}
