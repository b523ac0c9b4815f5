//! Stable seed derivation. A replication's streams depend only on the master
//! seed, the replication index and the stream tag, never on scheduling.

/// One step of the SplitMix64 generator.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Which random stream of a replication a seed feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Stationary path of component `k`.
    Path(usize),
    /// Latent vector `Z`.
    Latent,
    /// Bridge draws refining the maximum of component `k`.
    Bridge(usize),
    /// Auxiliary draws (tilting position, shared-seed constants, ...).
    Aux(u64),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Path(k) => (k as u64) << 2,
            Stream::Latent => 1,
            Stream::Bridge(k) => ((k as u64) << 2) | 2,
            Stream::Aux(t) => (t << 2) | 3,
        }
    }
}

/// Seed of `stream` in replication `rep` under `master`.
pub fn derive_seed(master: u64, rep: u64, stream: Stream) -> u64 {
    let mut state = master;
    let a = splitmix64(&mut state);
    let mut state = a ^ rep.wrapping_mul(0xd1b5_4a32_d192_ed03);
    let b = splitmix64(&mut state);
    let mut state = b ^ stream.tag().wrapping_mul(0x8cb9_2ba7_2f3d_8dd7);
    splitmix64(&mut state)
}
