use std::collections::HashMap;

use crate::rng::splitmix64;

const LINE: u64 = 64;

/// Sparse byte-addressable store. Untouched bytes read as a fixed pattern
/// derived from `(seed, address)`.
#[derive(Debug, Clone)]
pub struct Memory {
    seed: u64,
    lines: HashMap<u64, [u8; LINE as usize]>,
}

impl Memory {
    pub fn new(seed: u64) -> Self {
        Memory {
            seed,
            lines: HashMap::new(),
        }
    }

    pub fn pattern_byte(seed: u64, addr: u64) -> u8 {
        splitmix64(seed ^ (addr / 8).wrapping_mul(0x2545_F491_4F6C_DD1D)).to_le_bytes()
            [(addr % 8) as usize]
    }

    fn line(&mut self, base: u64) -> &mut [u8; LINE as usize] {
        let seed = self.seed;
        self.lines.entry(base).or_insert_with(|| {
            let mut l = [0u8; LINE as usize];
            for (i, b) in l.iter_mut().enumerate() {
                *b = Memory::pattern_byte(seed, base + i as u64);
            }
            l
        })
    }

    pub fn read(&self, addr: u64, len: usize) -> Vec<u8> {
        (0..len as u64)
            .map(|i| {
                let a = addr.wrapping_add(i);
                match self.lines.get(&(a - a % LINE)) {
                    Some(l) => l[(a % LINE) as usize],
                    None => Memory::pattern_byte(self.seed, a),
                }
            })
            .collect()
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) {
        for (i, &b) in data.iter().enumerate() {
            let a = addr.wrapping_add(i as u64);
            self.line(a - a % LINE)[(a % LINE) as usize] = b;
        }
    }

    pub fn read_u64(&self, addr: u64) -> u64 {
        u64::from_le_bytes(self.read(addr, 8).try_into().unwrap())
    }
}
