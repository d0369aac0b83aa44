//! Independent random streams derived from one run seed, so that any step of a
//! run can be replayed without replaying the ones before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; distinct purposes never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Shuffle = 0x5348_5546,
    Noise = 0x4e4f_4953,
    Generate = 0x4745_4e45,
    Selfcheck = 0x5345_4c46,
}

/// Stream number `index` of `purpose` under `seed`.
pub fn stream_rng(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (purpose as u64).rotate_left(32));
    rng.set_stream(index);
    rng
}
