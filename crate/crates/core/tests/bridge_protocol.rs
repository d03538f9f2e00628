//! Client side of the bridge protocol against the reference server and
//! against scripted misbehaving servers.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};
use tmne_core::embedprovider::{BridgeProvider, EmbeddingProvider, Lexicon, MockProvider};
use tmne_core::protocol::{serve_tcp, BridgeClient, Endpoint, MockBackend};
use tmne_core::scorer::{estimate_fms, lexical_baseline_score, BridgeScorer};
use tmne_core::Error;

fn lexicon() -> Arc<Lexicon> {
    Arc::new(Lexicon::from_pairs([("house", "maison"), ("red", "rouge"), ("the", "la")]).unwrap())
}

fn reference_server(dim: usize) -> Endpoint {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let backend = MockBackend {
        dim,
        seed: 4,
        lexicon: Some(lexicon()),
    };
    thread::spawn(move || serve_tcp(backend, listener));
    Endpoint::Tcp(addr)
}

/// Answer each request line with `reply(request)`; `None` hangs up.
fn scripted<F>(reply: F) -> Endpoint
where
    F: Fn(&Value) -> Option<String> + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut writer = stream.try_clone().unwrap();
        for line in BufReader::new(stream).lines() {
            let req: Value = serde_json::from_str(&line.unwrap()).unwrap();
            match reply(&req) {
                Some(r) => writeln!(writer, "{r}").unwrap(),
                None => return,
            }
        }
    });
    Endpoint::Tcp(addr)
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("the red house number w{i} w{}", i % 7)).collect()
}

#[test]
fn embed_keeps_order_and_matches_in_process_mock() {
    let client = BridgeClient::connect(&reference_server(32)).unwrap();
    let bridge = BridgeProvider::new(client, 32, 64);
    let local = MockProvider::new(32, 4, Some(lexicon())).unwrap();
    let input = texts(150);
    let remote = bridge.embed(&input).unwrap();
    let want = local.embed(&input).unwrap();
    assert_eq!(remote.len(), 150);
    for (r, w) in remote.iter().zip(&want) {
        assert_eq!(r.len(), 32);
        let norm: f32 = r.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
        for (a, b) in r.iter().zip(w) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn chunking_does_not_change_vectors() {
    let endpoint = reference_server(16);
    let input = texts(70);
    let one = BridgeProvider::new(BridgeClient::connect(&endpoint).unwrap(), 16, 1);
    let many = BridgeProvider::new(BridgeClient::connect(&endpoint).unwrap(), 16, 64);
    assert_eq!(one.embed(&input).unwrap(), many.embed(&input).unwrap());
}

#[test]
fn scores_stay_in_the_open_unit_interval() {
    let scorer = BridgeScorer::new(BridgeClient::connect(&reference_server(16)).unwrap());
    let pairs: Vec<(String, String)> = vec![
        ("the red house".into(), "la rouge maison".into()),
        ("the red house".into(), "nothing alike".into()),
        ("house".into(), "maison".into()),
    ];
    let got = estimate_fms(&scorer, &pairs).unwrap();
    for ((s, t), v) in pairs.iter().zip(&got) {
        assert!(*v > 0.0 && *v < 1.0);
        assert_eq!(*v, lexical_baseline_score(s, t, &lexicon()));
    }
}

#[test]
fn error_reply_leaves_the_server_usable() {
    let client = BridgeClient::connect(&reference_server(16)).unwrap();
    let err = client.embed(&["".to_string()]).unwrap_err();
    assert!(matches!(err, Error::Provider(_)), "{err}");
    let (dim, v) = client.embed(&["still here".to_string()]).unwrap();
    assert_eq!((dim, v.len()), (16, 1));
}

#[test]
fn wrong_id_is_a_protocol_error() {
    let endpoint = scripted(|req| {
        let id = req["id"].as_u64().unwrap();
        Some(json!({"id": id + 1, "dim": 8, "vectors": [vec![1.0; 8]]}).to_string())
    });
    let err = BridgeClient::connect(&endpoint).unwrap().embed(&["x".into()]).unwrap_err();
    assert!(matches!(err, Error::Protocol(ref m) if m.contains("echo")), "{err}");
}

#[test]
fn malformed_replies_are_protocol_errors() {
    let endpoint = scripted(|req| {
        let id = &req["id"];
        Some(match req["texts"][0].as_str().unwrap_or("") {
            "garbage" => "not json".to_string(),
            "short" => json!({"id": id, "dim": 8, "vectors": []}).to_string(),
            "ragged" => json!({"id": id, "dim": 8, "vectors": [[1.0, 2.0]]}).to_string(),
            "zero" => json!({"id": id, "dim": 8, "vectors": [vec![0.0; 8]]}).to_string(),
            _ => json!({"id": id, "scores": [1.0]}).to_string(),
        })
    });
    let client = BridgeClient::connect(&endpoint).unwrap();
    for t in ["garbage", "short", "ragged"] {
        let err = client.embed(&[t.to_string()]).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{t}: {err}");
    }
    let provider = BridgeProvider::new(client.clone(), 8, 4);
    assert!(matches!(provider.embed(&["zero".into()]), Err(Error::Protocol(_))));
    // a score of exactly 1 breaks the open-interval contract
    let scorer = BridgeScorer::new(client);
    let err = estimate_fms(&scorer, &[("a".into(), "b".into())]).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn dimension_mismatch_is_reported() {
    let provider = BridgeProvider::new(BridgeClient::connect(&reference_server(12)).unwrap(), 16, 8);
    let err = provider.embed(&["a b".into()]).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { expected: 16, actual: 12 }), "{err}");
}

#[test]
fn hang_up_and_refusal_are_provider_errors() {
    let client = BridgeClient::connect(&scripted(|_| None)).unwrap();
    assert!(matches!(client.embed(&["x".into()]), Err(Error::Provider(_))));

    let addr = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().to_string()
    };
    assert!(matches!(BridgeClient::connect(&Endpoint::Tcp(addr)), Err(Error::Provider(_))));
    let missing = Endpoint::Command(vec!["/nonexistent/bridge-binary".into()]);
    assert!(matches!(BridgeClient::connect(&missing), Err(Error::Provider(_))));
}
