use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use lethe_core::embeddings::{EmbeddingConfig, EmbeddingModel};
use lethe_core::rag::{FusionMode, KnowledgeBase, RemoteGenerator, RemoteRequest, RetrievalMode};
use lethe_core::ranking::Bm25Params;
use lethe_core::text::{Document, PipelineConfig};
use lethe_core::Error;

/// Serve `responses.len()` requests, forwarding each JSON body.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<RemoteRequest>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            tx.send(serde_json::from_slice(&buf).unwrap()).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn knowledge_base() -> KnowledgeBase {
    let pipeline = PipelineConfig::default();
    let docs = vec![Document::new("D1", "solar panels convert light", &pipeline)];
    let model = EmbeddingModel::build(&docs, &EmbeddingConfig::default()).unwrap();
    let mut kb = KnowledgeBase::new(model, pipeline, Bm25Params::default());
    kb.ingest([
        ("D1", "Solar panels convert light into power."),
        ("D2", "Wind turbines spin."),
    ]);
    kb
}

#[test]
fn early_fusion_sends_context_once() {
    let (url, rx) = serve(vec![(200, r#"{"text":"They convert light."}"#.into())]);
    let kb = knowledge_base();
    let r = kb
        .answer("solar light", RetrievalMode::Sparse, FusionMode::Early, 1, &RemoteGenerator::new(url))
        .unwrap();
    assert_eq!(r.answer, "They convert light.");
    assert_eq!(r.provenance, [r.retrieved[0].chunk_id.clone()]);
    let sent = rx.recv().unwrap();
    assert_eq!(sent.query, "solar light");
    assert_eq!(sent.context, "Solar panels convert light into power.");
}

#[test]
fn late_fusion_drafts_then_refines() {
    let (url, rx) = serve(vec![
        (200, r#"{"text":"draft"}"#.into()),
        (200, r#"{"text":"final"}"#.into()),
    ]);
    let kb = knowledge_base();
    let r = kb
        .answer("solar", RetrievalMode::Hybrid, FusionMode::Late, 1, &RemoteGenerator::new(url))
        .unwrap();
    assert_eq!(r.answer, "final");
    let first = rx.recv().unwrap();
    let second = rx.recv().unwrap();
    assert_eq!(first.context, "");
    assert!(second.context.starts_with("Draft answer: draft\n\n"));
}

#[test]
fn server_error_surfaces_as_generator_error() {
    let (url, _rx) = serve(vec![(500, "{}".into())]);
    let kb = knowledge_base();
    let err = kb
        .answer("solar", RetrievalMode::Sparse, FusionMode::Early, 1, &RemoteGenerator::new(url))
        .unwrap_err();
    assert!(matches!(err, Error::Generator(_)), "{err:?}");
}

#[test]
fn unreachable_endpoint() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let kb = knowledge_base();
    let g = RemoteGenerator::new(format!("http://127.0.0.1:{port}/"));
    assert!(matches!(
        kb.answer("solar", RetrievalMode::Sparse, FusionMode::Early, 1, &g),
        Err(Error::Generator(_))
    ));
}
