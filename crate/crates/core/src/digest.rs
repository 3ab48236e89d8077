//! SHA-256 helpers for content-addressed ids and integrity hashes.

use sha2::{Digest, Sha256};

/// Incremental hasher that length-prefixes every field so that
/// `("ab", "c")` and `("a", "bc")` hash differently.
#[derive(Default)]
pub struct FieldHasher(Sha256);

impl FieldHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(&mut self, bytes: impl AsRef<[u8]>) -> &mut Self {
        let bytes = bytes.as_ref();
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
        self
    }

    pub fn finish(self) -> [u8; 32] {
        self.0.finalize().into()
    }

    pub fn finish_hex(self) -> String {
        hex::encode(self.finish())
    }
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// First `chars` hex digits of the field hash of `fields`.
pub fn short_id<I, B>(fields: I, chars: usize) -> String
where
    I: IntoIterator<Item = B>,
    B: AsRef<[u8]>,
{
    let mut h = FieldHasher::new();
    for f in fields {
        h.field(f);
    }
    let mut hex = h.finish_hex();
    hex.truncate(chars);
    hex
}
