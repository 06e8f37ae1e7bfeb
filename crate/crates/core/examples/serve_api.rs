//! Serve the JSON API for the fixture on a local port and call it once.
//!
//! cargo run --example serve_api -- --stay   keeps serving on 127.0.0.1:8080

use std::future::IntoFuture;
use std::io::{Read, Write};
use std::net::TcpStream;

use lyric_search::engine::Engine;
use lyric_search::fixtures::fixture_corpus;
use lyric_search::service::{Service, ServiceConfig};
use lyric_search::textprep::PipelineConfig;

fn fetch(addr: std::net::SocketAddr, path: &str) -> std::io::Result<String> {
    let mut stream = TcpStream::connect(addr)?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n")?;
    let mut response = String::new();
    stream.read_to_string(&mut response)?;
    Ok(response)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let stay = std::env::args().any(|a| a == "--stay");
    let engine = Engine::build(fixture_corpus(), &PipelineConfig::default())?;
    let mut config = ServiceConfig::new("unused", "unused");
    config.cors_allowlist = vec!["http://localhost:5173".into()];
    let service = Service::with_engine(engine, config);

    let listener = tokio::net::TcpListener::bind(if stay { "127.0.0.1:8080" } else { "127.0.0.1:0" }).await?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr}");
    let server = tokio::spawn(axum::serve(listener, service.router()).into_future());
    if stay {
        server.await??;
        return Ok(());
    }

    for path in ["/api/health", "/api/search?q=good&k=2", "/api/search?q=the"] {
        let response = tokio::task::spawn_blocking(move || fetch(addr, path)).await??;
        let (head, body) = response.split_once("\r\n\r\n").unwrap_or((&response, ""));
        println!("\nGET {path}\n{}\n{body}", head.lines().next().unwrap_or(""));
    }
    server.abort();
    Ok(())
}
