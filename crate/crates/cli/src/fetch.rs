//! `fetch`: put the four canonical MNIST files into the data directory and
//! check them against the embedded checksum list.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use logpolar_core::mnist::sha256_hex;

use crate::error::CliError;

/// `sha256  name` lines for the uncompressed canonical files.
pub const CHECKSUMS: &str = include_str!("../checksums/mnist.sha256");

pub const DEFAULT_SOURCE: &str = "https://storage.googleapis.com/cvdf-datasets/mnist";

/// Upper bound on a single download.
const MAX_DOWNLOAD: u64 = 64 << 20;

pub fn expected_checksums() -> Vec<(String, String)> {
    CHECKSUMS
        .lines()
        .filter_map(|l| {
            let mut parts = l.split_whitespace();
            let hash = parts.next()?;
            let name = parts.next()?;
            Some((name.to_string(), hash.to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FetchOutcome {
    AlreadyPresent,
    Fetched,
}

/// Where the files come from: a base URL or a local directory holding the
/// plain or gzipped files.
#[derive(Debug, Clone)]
pub enum Source {
    Url(String),
    Dir(PathBuf),
}

impl Source {
    pub fn parse(s: &str) -> Self {
        if s.starts_with("http://") || s.starts_with("https://") {
            Source::Url(s.trim_end_matches('/').to_string())
        } else {
            Source::Dir(PathBuf::from(s))
        }
    }

    fn read(&self, name: &str) -> Result<Vec<u8>, CliError> {
        match self {
            Source::Dir(dir) => {
                let plain = dir.join(name);
                let path = if plain.exists() {
                    plain
                } else {
                    dir.join(format!("{name}.gz"))
                };
                std::fs::read(&path).map_err(CliError::io(&path))
            }
            Source::Url(base) => {
                let url = format!("{base}/{name}.gz");
                let net = |reason: String| CliError::Network {
                    url: url.clone(),
                    reason,
                };
                let mut resp = ureq::get(&url).call().map_err(|e| net(e.to_string()))?;
                resp.body_mut()
                    .with_config()
                    .limit(MAX_DOWNLOAD)
                    .read_to_vec()
                    .map_err(|e| net(e.to_string()))
            }
        }
    }
}

fn gunzip_if_needed(raw: Vec<u8>, name: &str) -> Result<Vec<u8>, CliError> {
    if !raw.starts_with(&[0x1f, 0x8b]) {
        return Ok(raw);
    }
    let mut out = Vec::new();
    GzDecoder::new(raw.as_slice())
        .read_to_end(&mut out)
        .map_err(CliError::io(Path::new(name)))?;
    Ok(out)
}

fn check(name: &str, expected: &str, bytes: &[u8]) -> Result<(), CliError> {
    let actual = sha256_hex(bytes);
    if actual == expected {
        Ok(())
    } else {
        Err(CliError::ChecksumMismatch {
            file: name.to_string(),
            expected: expected.to_string(),
            actual,
        })
    }
}

/// Ensures all four files exist uncompressed in `data_dir` with the right
/// checksums. Files already present are verified, never re-downloaded; a
/// present file with the wrong hash is an error naming that file.
pub fn fetch(
    data_dir: &Path,
    source: &Source,
    log: &mut dyn FnMut(&str),
) -> Result<Vec<(String, FetchOutcome)>, CliError> {
    std::fs::create_dir_all(data_dir).map_err(CliError::io(data_dir))?;
    let mut outcomes = Vec::new();
    for (name, expected) in expected_checksums() {
        let dest = data_dir.join(&name);
        let gz = data_dir.join(format!("{name}.gz"));
        let existing = if dest.exists() {
            Some(dest.clone())
        } else if gz.exists() {
            Some(gz)
        } else {
            None
        };
        if let Some(path) = existing {
            let raw = std::fs::read(&path).map_err(CliError::io(&path))?;
            check(&name, &expected, &gunzip_if_needed(raw, &name)?)?;
            log(&format!("{name}: present, checksum ok"));
            outcomes.push((name, FetchOutcome::AlreadyPresent));
            continue;
        }
        let bytes = gunzip_if_needed(source.read(&name)?, &name)?;
        check(&name, &expected, &bytes)?;
        let tmp = data_dir.join(format!(".{name}.partial"));
        std::fs::write(&tmp, &bytes).map_err(CliError::io(&tmp))?;
        std::fs::rename(&tmp, &dest).map_err(CliError::io(&dest))?;
        log(&format!("{name}: fetched, checksum ok"));
        outcomes.push((name, FetchOutcome::Fetched));
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_list_matches_the_library() {
        let sums = expected_checksums();
        assert_eq!(sums.len(), 4);
        for ((name, hash), (lib_name, lib_hash)) in sums.iter().zip(logpolar_core::mnist::CANONICAL_FILES) {
            assert_eq!((name.as_str(), hash.as_str()), (lib_name, lib_hash));
        }
    }

    #[test]
    fn wrong_bytes_name_the_file() {
        let err = check("t10k-labels-idx1-ubyte", "00", b"x").unwrap_err();
        assert!(err.to_string().contains("t10k-labels-idx1-ubyte"));
    }

    #[test]
    fn source_kinds() {
        assert!(matches!(Source::parse("https://example.org/m/"), Source::Url(u) if u == "https://example.org/m"));
        assert!(matches!(Source::parse("/tmp/m"), Source::Dir(_)));
    }
}
