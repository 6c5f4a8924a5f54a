//! Counter-based random stream splitting.
//!
//! A master seed is split into named streams (symbols, channel, noise), and
//! each stream into independent per-trial substreams by positioning the
//! ChaCha counter. Trial `t` therefore sees the same numbers no matter how
//! many threads run or how many trials other streams consume.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as TrialRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Symbols,
    Channel,
    Noise,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Symbols => 0x5359_4d42,
            Stream::Channel => 0x4348_414e,
            Stream::Noise => 0x4e4f_4953,
        }
    }
}

/// Each substream owns 2^32 words of keystream, far more than one trial draws.
const WORDS_PER_TRIAL_LOG2: u32 = 32;

/// Random source for trial `index` of `stream` under `master`.
pub fn trial_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream.id());
    rng.set_word_pos(u128::from(index) << WORDS_PER_TRIAL_LOG2);
    rng
}
