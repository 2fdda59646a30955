use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Result;

#[derive(Debug, Clone)]
pub struct FetchOptions {
    /// Hosts fetched at the same time. Requests to one host are sequential.
    pub max_hosts: usize,
    /// Pause between consecutive requests to the same host.
    pub per_host_delay: Duration,
    pub timeout: Duration,
    pub max_bytes: u64,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            max_hosts: 4,
            per_host_delay: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
            max_bytes: 20 * 1024 * 1024,
        }
    }
}

/// A downloaded image waiting for its label in the manual review pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingImage {
    pub id: String,
    pub url: String,
    pub image_path: String,
    pub proposed_query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchFailure {
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchReport {
    /// In input order.
    pub fetched: Vec<PendingImage>,
    pub failures: Vec<FetchFailure>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(super) struct ManifestRow {
    pub image_path: String,
    pub proposed_query: String,
    #[serde(default)]
    pub label: String,
}

fn host_of(url: &str) -> String {
    url.parse::<ureq::http::Uri>()
        .ok()
        .and_then(|u| u.host().map(str::to_ascii_lowercase))
        .unwrap_or_default()
}

fn file_stem_for(url: &str) -> String {
    hex::encode(Sha256::digest(url.as_bytes()))[..16].to_string()
}

fn fetch_one(agent: &ureq::Agent, url: &str, dest: &Path, max_bytes: u64) -> std::result::Result<(), String> {
    let mut resp = agent.get(url).call().map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    if !(200..300).contains(&status) {
        return Err(format!("HTTP {status}"));
    }
    let mut bytes = Vec::new();
    resp.body_mut()
        .as_reader()
        .take(max_bytes + 1)
        .read_to_end(&mut bytes)
        .map_err(|e| e.to_string())?;
    if bytes.len() as u64 > max_bytes {
        return Err(format!("body exceeds {max_bytes} bytes"));
    }
    let img = image::load_from_memory(&bytes).map_err(|e| format!("decode: {e}"))?;
    let mut png = Vec::new();
    image::DynamicImage::ImageRgb8(img.to_rgb8())
        .write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| format!("encode: {e}"))?;
    fs::write(dest, png).map_err(|e| e.to_string())
}

/// Downloads `(url, proposed_query)` pairs into `dir` as canonical RGB PNGs
/// named by url hash. Per-url failures are collected, not fatal; repeated
/// urls are fetched once.
pub fn fetch_images(requests: &[(String, String)], dir: &Path, opts: &FetchOptions) -> Result<FetchReport> {
    fs::create_dir_all(dir)?;
    let mut seen = HashSet::new();
    let mut by_host: Vec<(String, Vec<usize>)> = Vec::new();
    let mut host_slot: HashMap<String, usize> = HashMap::new();
    for (i, (url, _)) in requests.iter().enumerate() {
        if !seen.insert(url.as_str()) {
            continue;
        }
        let host = host_of(url);
        let slot = *host_slot.entry(host.clone()).or_insert_with(|| {
            by_host.push((host, Vec::new()));
            by_host.len() - 1
        });
        by_host[slot].1.push(i);
    }

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(opts.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let queue = Mutex::new(by_host.into_iter().map(|(_, idx)| idx).collect::<VecDeque<_>>());
    let results: Mutex<Vec<Option<std::result::Result<PathBuf, String>>>> = Mutex::new(vec![None; requests.len()]);
    let workers = opts.max_hosts.max(1).min(queue.lock().unwrap().len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let Some(group) = queue.lock().unwrap().pop_front() else { break };
                for (n, &i) in group.iter().enumerate() {
                    if n > 0 && !opts.per_host_delay.is_zero() {
                        std::thread::sleep(opts.per_host_delay);
                    }
                    let url = &requests[i].0;
                    let dest = dir.join(format!("{}.png", file_stem_for(url)));
                    let r = fetch_one(&agent, url, &dest, opts.max_bytes).map(|_| dest);
                    results.lock().unwrap()[i] = Some(r);
                }
            });
        }
    });

    let mut report = FetchReport::default();
    for (i, r) in results.into_inner().unwrap().into_iter().enumerate() {
        let (url, query) = &requests[i];
        match r {
            None => {}
            Some(Ok(path)) => report.fetched.push(PendingImage {
                id: file_stem_for(url),
                url: url.clone(),
                image_path: path.to_string_lossy().into_owned(),
                proposed_query: query.clone(),
            }),
            Some(Err(reason)) => {
                log::warn!("fetch failed for {url}: {reason}");
                report.failures.push(FetchFailure { url: url.clone(), reason });
            }
        }
    }
    Ok(report)
}

/// Review manifest CSV `image_path,proposed_query,label` with blank labels.
pub fn write_review_manifest<W: Write>(pending: &[PendingImage], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in pending {
        w.serialize(ManifestRow {
            image_path: p.image_path.clone(),
            proposed_query: p.proposed_query.clone(),
            label: String::new(),
        })?;
    }
    w.flush()?;
    Ok(())
}
