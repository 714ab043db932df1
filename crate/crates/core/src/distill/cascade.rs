use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{Error, Result};

/// Passes that always run before the first verification.
pub const BASE_PASSES: usize = 4;
/// Passes allowed before giving up.
pub const MAX_PASSES: usize = 8;
/// Random-subset parities compared after the base passes.
pub const VERIFICATION_BITS: usize = 64;
/// First-pass block size is this over the QBER estimate.
pub const BLOCK_FACTOR: f64 = 0.73;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeOutcome {
    pub corrected: Vec<u8>,
    /// Parity bits disclosed by the block and bisection steps.
    pub leakage_bits: u64,
    /// Parity bits disclosed by the final consistency checks.
    pub verification_bits: u64,
    pub passes: usize,
    pub corrections: usize,
    /// Set when the keys still disagree after the last pass, or when the
    /// disclosed parities cover the whole key.
    pub failed: bool,
}

struct Pass {
    block: usize,
    /// Position in pass order to key index.
    order: Vec<u32>,
    /// Key index to position in pass order.
    position: Vec<u32>,
    /// Alice's parities of ranges of pass positions disclosed so far.
    known: HashMap<(u32, u32), u8>,
}

impl Pass {
    fn parity(&self, bits: &[u8], start: usize, end: usize) -> u8 {
        self.order[start..end].iter().fold(0, |acc, &i| acc ^ bits[i as usize])
    }
}

struct Session<'a> {
    alice: &'a [u8],
    bob: Vec<u8>,
    passes: Vec<Pass>,
    leaked: u64,
    corrections: usize,
}

impl Session<'_> {
    /// Alice's parity of a range, disclosing it only the first time.
    fn alice_parity(&mut self, pass: usize, start: usize, end: usize) -> u8 {
        let key = (start as u32, end as u32);
        if let Some(&p) = self.passes[pass].known.get(&key) {
            return p;
        }
        let p = self.passes[pass].parity(self.alice, start, end);
        self.passes[pass].known.insert(key, p);
        self.leaked += 1;
        p
    }

    fn block_range(&self, pass: usize, block: usize) -> (usize, usize) {
        let size = self.passes[pass].block;
        let start = block * size;
        (start, (start + size).min(self.bob.len()))
    }

    fn mismatched(&mut self, pass: usize, block: usize) -> bool {
        let (s, e) = self.block_range(pass, block);
        self.alice_parity(pass, s, e) != self.passes[pass].parity(&self.bob, s, e)
    }

    /// Binary search for one error in a block of odd parity difference.
    fn bisect(&mut self, pass: usize, block: usize) -> usize {
        let (mut s, mut e) = self.block_range(pass, block);
        while e - s > 1 {
            let mid = s + (e - s) / 2;
            let left = self.alice_parity(pass, s, mid);
            // The right half's parity follows from the enclosing range.
            if let Some(&whole) = self.passes[pass].known.get(&(s as u32, e as u32)) {
                self.passes[pass].known.entry((mid as u32, e as u32)).or_insert(whole ^ left);
            }
            if left != self.passes[pass].parity(&self.bob, s, mid) {
                e = mid;
            } else {
                s = mid;
            }
        }
        self.passes[pass].order[s] as usize
    }

    /// Corrects `block` of `pass`, then revisits blocks of earlier passes
    /// whose parity the flip has unbalanced.
    fn correct(&mut self, pass: usize, block: usize) {
        let mut stack = vec![(pass, block)];
        while let Some((p, b)) = stack.pop() {
            if !self.mismatched(p, b) {
                continue;
            }
            let idx = self.bisect(p, b);
            self.bob[idx] ^= 1;
            self.corrections += 1;
            for q in 0..=pass {
                if q == p {
                    continue;
                }
                let pos = self.passes[q].position[idx] as usize;
                stack.push((q, pos / self.passes[q].block));
            }
        }
    }
}

fn subset_parities(bits: &[u8], seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks: Vec<Vec<bool>> = (0..VERIFICATION_BITS)
        .map(|_| (0..bits.len()).map(|_| rng.random_bool(0.5)).collect())
        .collect();
    masks
        .iter()
        .map(|m| bits.iter().zip(m).fold(0, |acc, (&b, &on)| acc ^ (b & u8::from(on))))
        .collect()
}

/// Cascade error correction of `bob` towards `alice`.
///
/// Block sizes start at `0.73 / qber_estimate` and double each pass; every
/// pass after the first uses a fresh seeded permutation. After four passes a
/// random-subset hash is compared, with further passes run until it agrees
/// or eight passes have been spent.
pub fn cascade_reconcile(alice: &[u8], bob: &[u8], qber_estimate: f64, seed: u64) -> Result<CascadeOutcome> {
    if alice.len() != bob.len() {
        return Err(Error::invalid("keys differ in length"));
    }
    if !(qber_estimate > 0.0 && qber_estimate <= 0.5) {
        return Err(Error::invalid(format!("qber estimate {qber_estimate} outside (0, 0.5]")));
    }
    let n = alice.len();
    let mut session = Session { alice, bob: bob.to_vec(), passes: Vec::new(), leaked: 0, corrections: 0 };
    if n == 0 {
        return Ok(CascadeOutcome {
            corrected: Vec::new(),
            leakage_bits: 0,
            verification_bits: 0,
            passes: 0,
            corrections: 0,
            failed: false,
        });
    }
    let first_block = ((BLOCK_FACTOR / qber_estimate).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut verification_bits = 0;
    let mut agreed = false;

    for p in 0..MAX_PASSES {
        let mut order: Vec<u32> = (0..n as u32).collect();
        if p > 0 {
            order.shuffle(&mut rng);
        }
        let mut position = vec![0u32; n];
        for (pos, &i) in order.iter().enumerate() {
            position[i as usize] = pos as u32;
        }
        let block = first_block.saturating_mul(1 << p).min(n);
        session.passes.push(Pass { block, order, position, known: HashMap::new() });
        for b in 0..n.div_ceil(block) {
            session.correct(p, b);
        }
        if p + 1 >= BASE_PASSES {
            let hash_seed: u64 = rng.random();
            verification_bits += VERIFICATION_BITS as u64;
            if subset_parities(alice, hash_seed) == subset_parities(&session.bob, hash_seed) {
                agreed = true;
                break;
            }
        }
    }
    let passes = session.passes.len();
    let failed = !agreed || session.leaked >= n as u64;
    Ok(CascadeOutcome {
        corrected: session.bob,
        leakage_bits: session.leaked,
        verification_bits,
        passes,
        corrections: session.corrections,
        failed,
    })
}

/// Privacy amplification by a seeded random Toeplitz matrix, compressing
/// `key` to `out_len` bits.
pub fn toeplitz_hash(key: &[u8], out_len: usize, seed: u64) -> Vec<u8> {
    let n = key.len();
    if n == 0 || out_len == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag: Vec<u8> = (0..n + out_len - 1).map(|_| u8::from(rng.random_bool(0.5))).collect();
    (0..out_len)
        .map(|i| (0..n).fold(0, |acc, j| acc ^ (diag[i + n - 1 - j] & key[j])))
        .collect()
}
