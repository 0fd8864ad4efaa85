//! Order-independent seed derivation.
//!
//! Every random choice in a run (exemplar sampling, per-agent sampling seeds,
//! fixed-exemplar selection) draws its seed from a label path such as
//! `["run:2", "example:17", "agent:4"]`, so results never depend on the order
//! in which agents or examples are scheduled.
//!
//! The chain is:
//!
//! ```text
//! h0     = SHA-256("mamr-seed" || master_seed as 8 little-endian bytes)
//! h(i+1) = SHA-256(h(i) || len(label_i) as 8 LE bytes || label_i)
//! seed   = first 8 bytes of h(n), little-endian
//! ```

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("seed label path must not be empty")]
pub struct EmptyLabels;

pub fn seed_stream<S: AsRef<str>>(master_seed: u64, labels: &[S]) -> Result<u64, EmptyLabels> {
    if labels.is_empty() {
        return Err(EmptyLabels);
    }
    let mut state: [u8; 32] = Sha256::new()
        .chain_update(b"mamr-seed")
        .chain_update(master_seed.to_le_bytes())
        .finalize()
        .into();
    for label in labels {
        let label = label.as_ref().as_bytes();
        state = Sha256::new()
            .chain_update(state)
            .chain_update((label.len() as u64).to_le_bytes())
            .chain_update(label)
            .finalize()
            .into();
    }
    let mut out = [0u8; 8];
    out.copy_from_slice(&state[..8]);
    Ok(u64::from_le_bytes(out))
}

/// `seed_stream` for call sites whose label path is statically non-empty.
pub(crate) fn derive(master_seed: u64, labels: &[&str]) -> u64 {
    seed_stream(master_seed, labels).expect("label path is non-empty")
}
