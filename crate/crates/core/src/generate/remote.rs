//! HTTP client for an external layout generator.
//!
//! Request: `POST <endpoint>` with a JSON body (see [`RemoteRequest`]).
//! Response: the full tile as a PNG in the class palette.

use super::{Capabilities, GenError, GeneratorBackend, KnownRegion};
use crate::layout::{decode_png, encode_png, GenerationCondition, SemanticLayout, NUM_CLASSES};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Extra attempts after the first on transport errors and 5xx replies.
    pub retries: u32,
    pub meters_per_pixel: f64,
    pub supports_text: bool,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8765/generate".into(),
            timeout_ms: 60_000,
            retries: 2,
            meters_per_pixel: 0.5,
            supports_text: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteKnown {
    /// Indexed PNG of the tile; unknown pixels are ground.
    pub png: String,
    /// One byte per pixel, row-major, 1 where the pixel is known.
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub known: Option<RemoteKnown>,
}

impl RemoteRequest {
    pub fn new(
        condition: &GenerationCondition,
        width: usize,
        height: usize,
        known: Option<&KnownRegion>,
    ) -> Self {
        let ratios = condition.ratios.map(|r| {
            r.as_array()
                .iter()
                .map(|v| (v * 1e7).round() / 1e7)
                .collect::<Vec<_>>()
        });
        let known = known.map(|k| {
            let labels: Vec<u8> = k
                .labels
                .iter()
                .zip(&k.mask)
                .map(|(&l, &m)| if m && (l as usize) < NUM_CLASSES { l } else { 0 })
                .collect();
            // mask and label sizes come from a valid KnownRegion
            let layout = SemanticLayout::new(k.width, k.height, labels, 1.0).expect("known region");
            let mask: Vec<u8> = k.mask.iter().map(|&m| m as u8).collect();
            RemoteKnown {
                png: B64.encode(encode_png(&layout)),
                mask: B64.encode(mask),
            }
        });
        Self {
            seed: condition.seed,
            width,
            height,
            ratios,
            text: condition.text.clone(),
            known,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, body: &str) -> Result<Vec<u8>, (bool, String)> {
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(256 << 20)
            .read_to_vec()
            .map_err(|e| (true, e.to_string()))?;
        if status >= 500 {
            return Err((true, format!("HTTP {status}")));
        }
        if status >= 300 {
            return Err((
                false,
                format!("HTTP {status}: {}", String::from_utf8_lossy(&bytes)),
            ));
        }
        Ok(bytes)
    }
}

impl GeneratorBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.config.endpoint
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_ratios: true,
            supports_text: self.config.supports_text,
            supports_partial: true,
        }
    }

    fn generate_tile(
        &self,
        condition: &GenerationCondition,
        width: usize,
        height: usize,
        known: Option<&KnownRegion>,
    ) -> Result<SemanticLayout, GenError> {
        let request = RemoteRequest::new(condition, width, height, known);
        let body = serde_json::to_string(&request).map_err(|e| GenError::BackendFailure(e.to_string()))?;
        let mut last = String::new();
        for _ in 0..=self.config.retries {
            match self.attempt(&body) {
                Ok(bytes) => {
                    let layout = decode_png(&bytes, self.config.meters_per_pixel)
                        .map_err(|e| GenError::BackendFailure(format!("bad reply: {e}")))?;
                    if layout.width() != width || layout.height() != height {
                        return Err(GenError::BackendFailure(format!(
                            "reply is {}x{}, asked for {width}x{height}",
                            layout.width(),
                            layout.height()
                        )));
                    }
                    return Ok(layout);
                }
                Err((retry, msg)) => {
                    last = msg;
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(GenError::BackendFailure(last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{ClassRatios, LandClass};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serve `replies` in order, one per connection, and forward request bodies.
    fn stub(replies: Vec<(u16, Vec<u8>)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (mut s, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(s.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut req = vec![0; len];
                reader.read_exact(&mut req).unwrap();
                let _ = tx.send(String::from_utf8(req).unwrap());
                let head = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: image/png\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
                    body.len()
                );
                s.write_all(head.as_bytes()).unwrap();
                s.write_all(&body).unwrap();
            }
        });
        (format!("http://{addr}/generate"), rx)
    }

    fn backend(endpoint: String) -> RemoteBackend {
        RemoteBackend::new(RemoteConfig {
            endpoint,
            timeout_ms: 5_000,
            retries: 1,
            ..Default::default()
        })
    }

    #[test]
    fn fixed_png_is_decoded_verbatim() {
        let labels: Vec<u8> = (0..48).map(|i| (i % 7) as u8).collect();
        let expected = SemanticLayout::new(8, 6, labels, 0.5).unwrap();
        let (url, rx) = stub(vec![(200, encode_png(&expected))]);
        let r = ClassRatios::new([0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let cond = GenerationCondition::unconditional(9).with_ratios(r).with_text("harbor");
        let got = backend(url).generate_tile(&cond, 8, 6, None).unwrap();
        assert_eq!(got, expected);
        let req: RemoteRequest = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(req.seed, 9);
        assert_eq!((req.width, req.height), (8, 6));
        assert_eq!(req.ratios.unwrap()[0], 0.5);
        assert_eq!(req.text.as_deref(), Some("harbor"));
        assert!(req.known.is_none());
    }

    #[test]
    fn server_errors_are_retried_then_reported() {
        let good = encode_png(&SemanticLayout::filled(4, 4, LandClass::Water, 0.5).unwrap());
        let (url, _rx) = stub(vec![(503, b"busy".to_vec()), (200, good)]);
        let got = backend(url).generate_tile(&GenerationCondition::unconditional(1), 4, 4, None);
        assert!(got.unwrap().labels().iter().all(|&l| l == 6));

        let (url, _rx) = stub(vec![(400, b"bad seed".to_vec())]);
        let err = backend(url)
            .generate_tile(&GenerationCondition::unconditional(1), 4, 4, None)
            .unwrap_err();
        assert!(matches!(err, GenError::BackendFailure(m) if m.contains("400")));
    }

    #[test]
    fn known_region_travels_as_png_and_mask() {
        let known = KnownRegion {
            width: 2,
            height: 2,
            labels: vec![2, 9, 4, 0],
            mask: vec![true, false, true, false],
        };
        let req = RemoteRequest::new(&GenerationCondition::unconditional(0), 2, 2, Some(&known));
        let k = req.known.unwrap();
        assert_eq!(B64.decode(&k.mask).unwrap(), vec![1, 0, 1, 0]);
        let png = decode_png(&B64.decode(&k.png).unwrap(), 1.0).unwrap();
        assert_eq!(png.labels(), &[2, 0, 4, 0]);
    }

    #[test]
    fn unreachable_endpoint_is_backend_failure() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = backend(format!("http://{addr}/x"))
            .generate_tile(&GenerationCondition::unconditional(0), 4, 4, None)
            .unwrap_err();
        assert!(matches!(err, GenError::BackendFailure(_)));
    }
}
