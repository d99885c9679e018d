//! Reduced-basis archive: a single self-describing file with a JSON
//! header (metadata, selected pairs, fingerprints) followed by the
//! snapshot and orthonormal-basis vectors as little-endian f64 payload.
//!
//! Loading verifies nothing by itself; callers compare the stored
//! [`FamilyFingerprint`] against the family reconstructed from their
//! configuration before trusting the basis.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::greedy::{ReducedBasis, TrainingGrid};
use crate::space::Space;
use crate::tikhonov::EtaInterval;

const MAGIC: &[u8; 7] = b"EPSRB1\n";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Hash of a matrix: dimensions plus row-major little-endian entries.
pub fn matrix_fingerprint(m: &DMatrix<f64>) -> String {
    let mut bytes = Vec::with_capacity(16 + m.len() * 8);
    bytes.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    sha256_hex(&bytes)
}

/// Identifies the family a basis was trained for: both space grams plus a
/// canonical encoding of the family configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyFingerprint {
    pub gram_x: String,
    pub gram_y: String,
    pub family: String,
}

impl FamilyFingerprint {
    pub fn new(space_x: &Space, space_y: &Space, family_canonical: &str) -> Self {
        Self {
            gram_x: matrix_fingerprint(space_x.gram()),
            gram_y: matrix_fingerprint(space_y.gram()),
            family: sha256_hex(family_canonical.as_bytes()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectedPair {
    pub nu: Vec<f64>,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub version: u32,
    pub dim_y: usize,
    pub basis_size: usize,
    pub selected: Vec<SelectedPair>,
    pub history: Vec<f64>,
    pub delta: f64,
    pub converged: bool,
    pub warning: Option<String>,
    pub eta_interval: Option<EtaInterval>,
    pub grid_nu: Vec<Vec<f64>>,
    pub grid_eta: Vec<f64>,
    pub fingerprint: FamilyFingerprint,
}

impl ArchiveHeader {
    pub fn grid(&self) -> Result<TrainingGrid> {
        TrainingGrid::new(self.grid_nu.clone(), self.grid_eta.clone())
    }
}

fn vector_bytes(v: &DVector<f64>, out: &mut Vec<u8>) {
    for &x in v.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn write_basis(
    path: &Path,
    basis: &ReducedBasis,
    fingerprint: FamilyFingerprint,
    eta_interval: Option<EtaInterval>,
    grid: &TrainingGrid,
    warning: Option<String>,
) -> Result<()> {
    let dim_y = basis.ortho.first().map(|v| v.len()).unwrap_or(0);
    let header = ArchiveHeader {
        version: 1,
        dim_y,
        basis_size: basis.len(),
        selected: basis
            .selected
            .iter()
            .map(|(nu, eta)| SelectedPair { nu: nu.clone(), eta: *eta })
            .collect(),
        history: basis.history.clone(),
        delta: basis.delta,
        converged: basis.converged,
        warning,
        eta_interval,
        grid_nu: grid.nu_points().to_vec(),
        grid_eta: grid.eta_points().to_vec(),
        fingerprint,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Archive(format!("header encoding failed: {e}")))?;
    let mut payload = Vec::with_capacity(2 * basis.len() * dim_y * 8);
    for v in &basis.snapshots {
        vector_bytes(v, &mut payload);
    }
    for v in &basis.ortho {
        vector_bytes(v, &mut payload);
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(header_json.len() as u64).to_le_bytes())?;
    file.write_all(&header_json)?;
    file.write_all(&payload)?;
    Ok(())
}

pub fn read_basis(path: &Path) -> Result<(ReducedBasis, ArchiveHeader)> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 7];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Archive("not a reduced-basis archive (bad magic)".into()));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)?;
    let header: ArchiveHeader = serde_json::from_slice(&header_json)
        .map_err(|e| Error::Archive(format!("header decoding failed: {e}")))?;
    if header.version != 1 {
        return Err(Error::Archive(format!("unsupported archive version {}", header.version)));
    }
    let m = header.basis_size;
    let n = header.dim_y;
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    let expected = 2 * m * n * 8;
    if payload.len() != expected {
        return Err(Error::Archive(format!(
            "payload length {} does not match expected {expected}",
            payload.len()
        )));
    }
    if header.selected.len() != m {
        return Err(Error::Archive("selected-pair count disagrees with basis size".into()));
    }
    let read_vec = |offset: usize| -> DVector<f64> {
        DVector::from_fn(n, |i, _| {
            let start = offset + i * 8;
            f64::from_le_bytes(payload[start..start + 8].try_into().expect("length checked"))
        })
    };
    let snapshots: Vec<DVector<f64>> = (0..m).map(|k| read_vec(k * n * 8)).collect();
    let ortho: Vec<DVector<f64>> = (0..m).map(|k| read_vec((m + k) * n * 8)).collect();
    let basis = ReducedBasis {
        selected: header.selected.iter().map(|p| (p.nu.clone(), p.eta)).collect(),
        snapshots,
        ortho,
        history: header.history.clone(),
        delta: header.delta,
        converged: header.converged,
    };
    Ok((basis, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_basis(n: usize, m: usize) -> ReducedBasis {
        let snapshots: Vec<DVector<f64>> =
            (0..m).map(|k| DVector::from_fn(n, |i, _| (i + k) as f64 * 0.25 + 1.0)).collect();
        let ortho: Vec<DVector<f64>> =
            (0..m).map(|k| DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 })).collect();
        ReducedBasis {
            selected: (0..m).map(|k| (vec![k as f64, 0.5], 0.1 * (k + 1) as f64)).collect(),
            snapshots,
            ortho,
            history: vec![1.0, 0.5, 1e-7],
            delta: 1e-6,
            converged: true,
        }
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.rbz");
        let basis = toy_basis(5, 2);
        let fp = FamilyFingerprint {
            gram_x: "aa".into(),
            gram_y: "bb".into(),
            family: "cc".into(),
        };
        let grid =
            TrainingGrid::new(vec![vec![0.0, 0.5], vec![1.0, 0.5]], vec![0.1, 0.2]).unwrap();
        write_basis(&path, &basis, fp.clone(), None, &grid, None).unwrap();
        let (loaded, header) = read_basis(&path).unwrap();
        assert_eq!(header.fingerprint, fp);
        assert_eq!(loaded.selected, basis.selected);
        assert_eq!(loaded.history, basis.history);
        assert_eq!(loaded.converged, basis.converged);
        for k in 0..basis.len() {
            assert_eq!(loaded.snapshots[k], basis.snapshots[k]);
            assert_eq!(loaded.ortho[k], basis.ortho[k]);
        }
        assert_eq!(header.grid_eta, vec![0.1, 0.2]);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.rbz");
        std::fs::write(&path, b"definitely not an archive").unwrap();
        match read_basis(&path) {
            Err(Error::Archive(msg)) => assert!(msg.contains("magic")),
            other => panic!("expected archive error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn fingerprints_distinguish_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let mut b = a.clone();
        b[(0, 0)] = 1.0 + 1e-15;
        assert_ne!(matrix_fingerprint(&a), matrix_fingerprint(&b));
        assert_eq!(matrix_fingerprint(&a), matrix_fingerprint(&a.clone()));
    }
}
