//! Content-addressed cache of eigendecompositions.
//!
//! One file per decomposition, named `<hex key>.bin`. All integers and floats
//! are little-endian:
//!
//! | field | bytes |
//! |---|---|
//! | magic `DSEC` | 4 |
//! | format version (`u32`) | 4 |
//! | key (SHA-256 of the canonical request) | 32 |
//! | basis tag (`u8`: 0 coherent, 1 Fock, 2 generic), `n_atoms` (`u64`), truncation (`u64`) | 17 |
//! | rows, columns (`u64` each) | 16 |
//! | eigenvalues | 8 · columns |
//! | eigenvectors, row-major | 8 · rows · columns |
//! | parity flag (`u8`) then one `i8` per column when set | 1 (+ columns) |
//! | residual, orthonormality defect (`f64` each) | 16 |
//! | fingerprint length (`u32`) and UTF-8 bytes | 4 + len |
//! | SHA-256 of every preceding byte | 32 |
//!
//! The cache is advisory: deleting any file is always safe.

use crate::error::{CliError, CliResult};
use dicke_stark::{BasisTag, DcsBasis, EigenDecomposition, FockBasis};
use log::warn;
use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

pub const MAGIC: &[u8; 4] = b"DSEC";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

static EIGENDECOMPOSITIONS: AtomicUsize = AtomicUsize::new(0);
static CACHE_HITS: AtomicUsize = AtomicUsize::new(0);

/// Records `count` eigendecompositions performed by this process.
pub fn count_eigendecompositions(count: usize) {
    EIGENDECOMPOSITIONS.fetch_add(count, Ordering::Relaxed);
}

pub fn eigendecomposition_count() -> usize {
    EIGENDECOMPOSITIONS.load(Ordering::Relaxed)
}

pub fn cache_hit_count() -> usize {
    CACHE_HITS.load(Ordering::Relaxed)
}

/// What a cached decomposition was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheKey {
    pub basis: &'static str,
    pub n_atoms: usize,
    pub truncation: usize,
    /// Number of lowest levels solved for; `0` means the full spectrum.
    pub levels: usize,
    pub omega: f64,
    pub delta: f64,
    pub lambda: f64,
    pub stark_u: f64,
}

impl CacheKey {
    /// Exact bit patterns make the key sensitive to every representable change.
    pub fn canonical(&self) -> String {
        format!(
            "dicke-stark-cache/v{FORMAT_VERSION}|basis={}|n={}|trunc={}|levels={}|omega={:016x}|delta={:016x}|lambda={:016x}|u={:016x}",
            self.basis,
            self.n_atoms,
            self.truncation,
            self.levels,
            self.omega.to_bits(),
            self.delta.to_bits(),
            self.lambda.to_bits(),
            self.stark_u.to_bits()
        )
    }

    pub fn digest(&self) -> [u8; DIGEST_LEN] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }
}

pub fn encode_blob(key: &[u8; DIGEST_LEN], d: &EigenDecomposition) -> Vec<u8> {
    let (rows, cols) = d.eigenvectors.dim();
    let mut out = Vec::with_capacity(128 + 8 * cols * (rows + 1) + d.fingerprint.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(key);
    let (tag, n_atoms, trunc) = match d.basis {
        BasisTag::Dcs(b) => (0u8, b.n_atoms, b.k_trunc),
        BasisTag::Fock(b) => (1u8, b.n_atoms, b.n_trunc),
        BasisTag::Generic => (2u8, 0, 0),
    };
    out.push(tag);
    out.extend_from_slice(&(n_atoms as u64).to_le_bytes());
    out.extend_from_slice(&(trunc as u64).to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    d.eigenvalues.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    for row in d.eigenvectors.rows() {
        row.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    match &d.parities {
        Some(p) => {
            out.push(1);
            out.extend(p.iter().map(|&s| s as u8));
        }
        None => out.push(0),
    }
    out.extend_from_slice(&d.residual.to_le_bytes());
    out.extend_from_slice(&d.orthonormality_defect.to_le_bytes());
    out.extend_from_slice(&(d.fingerprint.len() as u32).to_le_bytes());
    out.extend_from_slice(d.fingerprint.as_bytes());
    let digest: [u8; DIGEST_LEN] = Sha256::digest(&out).into();
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        if n > self.bytes.len() {
            return Err(CliError::CacheCorrupt(format!(
                "blob truncated: wanted {n} bytes, {} left",
                self.bytes.len()
            )));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> CliResult<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| CliError::CacheCorrupt(format!("size {v} does not fit in memory")))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> CliResult<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| CliError::CacheCorrupt("array length overflows".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Decodes a blob and checks its trailing digest, header and, when given, its key.
pub fn decode_blob(bytes: &[u8], expected_key: Option<&[u8; DIGEST_LEN]>) -> CliResult<EigenDecomposition> {
    if bytes.len() < DIGEST_LEN {
        return Err(CliError::CacheCorrupt("blob shorter than its digest".into()));
    }
    let (body, stored) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != stored {
        return Err(CliError::CacheCorrupt("content hash mismatch".into()));
    }
    let mut r = Reader { bytes: body };
    if r.take(4)? != MAGIC {
        return Err(CliError::CacheCorrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CliError::CacheCorrupt(format!("unsupported format version {version}")));
    }
    let key = r.take(DIGEST_LEN)?;
    if expected_key.is_some_and(|k| k.as_slice() != key) {
        return Err(CliError::CacheCorrupt("blob was stored under a different key".into()));
    }
    let tag = r.u8()?;
    let n_atoms = r.usize()?;
    let trunc = r.usize()?;
    let basis = match tag {
        0 => BasisTag::Dcs(DcsBasis { n_atoms, k_trunc: trunc }),
        1 => BasisTag::Fock(FockBasis { n_atoms, n_trunc: trunc }),
        2 if n_atoms == 0 && trunc == 0 => BasisTag::Generic,
        other => return Err(CliError::CacheCorrupt(format!("unknown basis tag {other}"))),
    };
    let rows = r.usize()?;
    let cols = r.usize()?;
    if !matches!(basis, BasisTag::Generic) {
        let expected = n_atoms.checked_add(1).and_then(|a| trunc.checked_add(1).and_then(|t| a.checked_mul(t)));
        if expected != Some(rows) {
            return Err(CliError::CacheCorrupt(format!("{rows} rows do not match {}", basis.label())));
        }
    }
    if cols > rows {
        return Err(CliError::CacheCorrupt(format!("{cols} levels exceed dimension {rows}")));
    }
    let eigenvalues = Array1::from(r.f64s(cols)?);
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| CliError::CacheCorrupt("eigenvector size overflows".into()))?;
    let eigenvectors = Array2::from_shape_vec((rows, cols), r.f64s(len)?)
        .map_err(|e| CliError::CacheCorrupt(e.to_string()))?;
    let parities = match r.u8()? {
        0 => None,
        1 => {
            let p: Vec<i8> = r.take(cols)?.iter().map(|&b| b as i8).collect();
            if p.iter().any(|s| !(-1..=1).contains(s)) {
                return Err(CliError::CacheCorrupt("parity outside {-1, 0, 1}".into()));
            }
            Some(p)
        }
        other => return Err(CliError::CacheCorrupt(format!("bad parity flag {other}"))),
    };
    let residual = r.f64()?;
    let orthonormality_defect = r.f64()?;
    let len = r.u32()? as usize;
    let fingerprint = std::str::from_utf8(r.take(len)?)
        .map_err(|_| CliError::CacheCorrupt("fingerprint is not UTF-8".into()))?
        .to_owned();
    if !r.bytes.is_empty() {
        return Err(CliError::CacheCorrupt(format!("{} trailing bytes", r.bytes.len())));
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        parities,
        residual,
        orthonormality_defect,
        basis,
        fingerprint,
        convergence: None,
    })
}

/// Directory-backed store; `None` disables caching.
#[derive(Debug)]
pub struct CacheStore {
    dir: Option<PathBuf>,
    strict: bool,
}

impl CacheStore {
    pub fn disabled() -> Self {
        Self { dir: None, strict: false }
    }

    /// An unusable directory degrades to a disabled store with a warning.
    pub fn open(dir: Option<&Path>, strict: bool) -> Self {
        let Some(dir) = dir else {
            return Self::disabled();
        };
        let probe = dir.join(format!(".write-probe-{}", std::process::id()));
        let usable = fs::create_dir_all(dir).and_then(|_| fs::write(&probe, b"")).and_then(|_| fs::remove_file(&probe));
        match usable {
            Ok(()) => Self {
                dir: Some(dir.to_path_buf()),
                strict,
            },
            Err(e) => {
                warn!("cache directory {} is unusable ({e}); continuing without a cache", dir.display());
                Self::disabled()
            }
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.dir.is_some()
    }

    fn path(&self, digest: &[u8; DIGEST_LEN]) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{}.bin", hex::encode(digest))))
    }

    /// `Ok(None)` on a miss. A corrupted entry is a miss with a warning, or an
    /// error in strict mode.
    pub fn get(&self, key: &CacheKey) -> CliResult<Option<EigenDecomposition>> {
        let digest = key.digest();
        let Some(path) = self.path(&digest) else {
            return Ok(None);
        };
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                warn!("cannot read cache entry {}: {e}", path.display());
                return Ok(None);
            }
        };
        match decode_blob(&bytes, Some(&digest)) {
            Ok(d) => {
                CACHE_HITS.fetch_add(1, Ordering::Relaxed);
                Ok(Some(d))
            }
            Err(e) if self.strict => Err(CliError::CacheCorrupt(format!("{}: {e}", path.display()))),
            Err(e) => {
                warn!("recomputing corrupted cache entry {}: {e}", path.display());
                Ok(None)
            }
        }
    }

    /// Writes via a temporary file and rename so readers never see a partial blob.
    pub fn put(&self, key: &CacheKey, d: &EigenDecomposition) {
        let digest = key.digest();
        let Some(path) = self.path(&digest) else {
            return;
        };
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let result = fs::write(&tmp, encode_blob(&digest, d)).and_then(|_| fs::rename(&tmp, &path));
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            warn!("cannot write cache entry {}: {e}", path.display());
        }
    }

    /// Cached value if present, otherwise `compute` (counted as one
    /// eigendecomposition) followed by a store.
    pub fn get_or_compute(
        &self,
        key: &CacheKey,
        compute: impl FnOnce() -> dicke_stark::Result<EigenDecomposition>,
    ) -> CliResult<EigenDecomposition> {
        if let Some(d) = self.get(key)? {
            return Ok(d);
        }
        let d = compute()?;
        count_eigendecompositions(1);
        self.put(key, &d);
        Ok(d)
    }
}
