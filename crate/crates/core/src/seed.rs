//! Seed splitting.
//!
//! Every random stream in a run is derived from one master seed. A stream is
//! named by a tag and up to a few integer coordinates (episode, period,
//! drone, ...); the derived seed is a SplitMix64 chain over
//! `master, tag, coords...`. Streams used by the library:
//!
//! | tag            | coordinates              | used for                       |
//! |----------------|--------------------------|--------------------------------|
//! | `SCENARIO`     | -                        | synthetic traffic noise        |
//! | `PLANS`        | episode, period, drone   | plan generation                |
//! | `STATIONS`     | episode, period, drone   | EPOS-only random landing draws |
//! | `NETWORK_INIT` | drone                    | actor/critic initialisation    |
//! | `ACTIONS`      | episode, period, drone   | exploration sampling           |
//! | `SAMPLING`     | episode, drone           | replay minibatch sampling      |
//! | `WINDOWS`      | episode                  | training window choice         |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const SCENARIO: u64 = 0x5343_454e;
pub const PLANS: u64 = 0x504c_414e;
pub const STATIONS: u64 = 0x5354_4154;
pub const NETWORK_INIT: u64 = 0x4e45_5449;
pub const ACTIONS: u64 = 0x4143_5449;
pub const SAMPLING: u64 = 0x5341_4d50;
pub const WINDOWS: u64 = 0x5749_4e44;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed from a master seed, a stream tag and coordinates.
pub fn derive(master: u64, tag: u64, coords: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(tag));
    for &c in coords {
        h = splitmix64(h ^ c.wrapping_mul(0xd6e8_feb8_6659_fd93));
    }
    h
}

pub fn rng(master: u64, tag: u64, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(master, tag, coords))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        let a = derive(42, PLANS, &[0, 1, 2]);
        assert_eq!(a, derive(42, PLANS, &[0, 1, 2]));
        assert_ne!(a, derive(42, PLANS, &[0, 2, 1]));
        assert_ne!(a, derive(42, STATIONS, &[0, 1, 2]));
        assert_ne!(a, derive(43, PLANS, &[0, 1, 2]));
    }
}
