//! Keyed, counter-based random streams.
//!
//! Every random decision in a run is drawn from a stream that is a pure
//! function of `(master_seed, purpose, index)`. The master seed and purpose
//! are mixed into a ChaCha key and the index selects the ChaCha stream, so
//! task `t` sees the same randomness no matter which tasks were generated
//! before it or on which thread it runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TaskRng = ChaCha8Rng;

/// What a stream is used for. Each purpose gets an unrelated key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Training,
    Evaluation,
    Initialization,
    Synthesis,
    Sampling,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Training => 0x7472_6169_6e00_0001,
            StreamPurpose::Evaluation => 0x6576_616c_0000_0002,
            StreamPurpose::Initialization => 0x696e_6974_0000_0003,
            StreamPurpose::Synthesis => 0x7379_6e74_6800_0004,
            StreamPurpose::Sampling => 0x7361_6d70_6c00_0005,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for `(master_seed, purpose, index)`.
pub fn derive_stream(master_seed: u64, purpose: StreamPurpose, index: u64) -> TaskRng {
    let mut key = [0u8; 32];
    let mut state = master_seed ^ purpose.tag();
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Per-task training stream.
pub fn derive_task_rng(master_seed: u64, task_index: u64) -> TaskRng {
    derive_stream(master_seed, StreamPurpose::Training, task_index)
}
