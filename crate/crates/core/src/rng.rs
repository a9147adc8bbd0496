//! Counter-based random numbers (Philox4x64-10).
//!
//! Every output block is a pure function of a 128-bit key and a 256-bit
//! counter, so sample `i` of a stream can be produced by any worker without
//! touching shared state.

const MUL0: u64 = 0xD2E7_470E_E14C_6C93;
const MUL1: u64 = 0xCA5A_8263_9512_1157;
const WEYL0: u64 = 0x9E37_79B9_7F4A_7C15;
const WEYL1: u64 = 0xBB67_AE85_84CA_A73B;

#[inline(always)]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    ((p >> 64) as u64, p as u64)
}

/// One Philox4x64 block with 10 rounds.
#[inline]
pub fn philox4x64(counter: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(WEYL0);
            k[1] = k[1].wrapping_add(WEYL1);
        }
        let (hi0, lo0) = mulhilo(MUL0, c[0]);
        let (hi1, lo1) = mulhilo(MUL1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Domain separator in the second key word so that cell streams never share
/// blocks with other consumers of the same seed.
const CELL_STREAM_TAG: u64 = 0x7479_7069_6361_6c63;

/// Addressable source of uniforms for the typical-cell stream.
#[derive(Debug, Clone, Copy)]
pub struct CellRng {
    key: [u64; 2],
}

impl CellRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed, CELL_STREAM_TAG],
        }
    }

    /// Four raw words for sample `index`, block `block` (coordinates
    /// `4*block..4*block+4`), resampling attempt `attempt`.
    #[inline]
    pub fn block(&self, index: u64, block: u64, attempt: u64) -> [u64; 4] {
        philox4x64([index, block, attempt, 0], self.key)
    }
}

/// Maps a raw word to a uniform on `[0, 1)` with 53 bits of resolution.
#[inline(always)]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
