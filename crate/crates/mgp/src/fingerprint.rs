//! SHA-256 content fingerprints, hex encoded.

use mgp_core::data::Dataset;
use mgp_core::Mat;
use serde::Serialize;
use sha2::{Digest, Sha256};

fn hex(digest: impl AsRef<[u8]>) -> String {
    digest.as_ref().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn bytes(data: &[u8]) -> String {
    hex(Sha256::digest(data))
}

/// Hash of the canonical JSON encoding.
pub fn json<T: Serialize>(value: &T) -> String {
    bytes(&serde_json::to_vec(value).expect("in-memory JSON encoding cannot fail"))
}

fn feed_matrix(h: &mut Sha256, m: &Mat) {
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
}

pub fn matrix(m: &Mat) -> String {
    let mut h = Sha256::new();
    feed_matrix(&mut h, m);
    hex(h.finalize())
}

pub fn dataset(d: &Dataset) -> String {
    let mut h = Sha256::new();
    feed_matrix(&mut h, &d.values);
    for c in &d.columns {
        h.update(serde_json::to_vec(c).expect("in-memory JSON encoding cannot fail"));
    }
    hex(h.finalize())
}
