//! Occupancy bitmap over the 16-bit port space.

use rand::Rng;

const WORDS: usize = 65536 / 64;

#[derive(Clone)]
pub(crate) struct PortSet {
    bits: Box<[u64; WORDS]>,
    count: u32,
}

impl std::fmt::Debug for PortSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PortSet({} used)", self.count)
    }
}

impl PortSet {
    pub fn new() -> Self {
        PortSet {
            bits: Box::new([0; WORDS]),
            count: 0,
        }
    }

    pub fn contains(&self, p: u16) -> bool {
        self.bits[p as usize / 64] >> (p % 64) & 1 == 1
    }

    pub fn insert(&mut self, p: u16) -> bool {
        let w = &mut self.bits[p as usize / 64];
        let m = 1u64 << (p % 64);
        if *w & m != 0 {
            return false;
        }
        *w |= m;
        self.count += 1;
        true
    }

    pub fn remove(&mut self, p: u16) -> bool {
        let w = &mut self.bits[p as usize / 64];
        let m = 1u64 << (p % 64);
        if *w & m == 0 {
            return false;
        }
        *w &= !m;
        self.count -= 1;
        true
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Iterate (word index, mask of bits inside [lo, hi]).
    fn masked_words(lo: u16, hi: u16) -> impl Iterator<Item = (usize, u64)> {
        let (wl, wh) = (lo as usize / 64, hi as usize / 64);
        (wl..=wh).map(move |w| {
            let mut m = u64::MAX;
            if w == wl {
                m &= u64::MAX << (lo % 64);
            }
            if w == wh {
                m &= u64::MAX >> (63 - hi % 64);
            }
            (w, m)
        })
    }

    pub fn free_in(&self, lo: u16, hi: u16) -> u32 {
        Self::masked_words(lo, hi)
            .map(|(w, m)| (!self.bits[w] & m).count_ones())
            .sum()
    }

    /// The `n`-th free port (0-based, ascending) inside [lo, hi].
    pub fn nth_free(&self, lo: u16, hi: u16, mut n: u32) -> Option<u16> {
        for (w, m) in Self::masked_words(lo, hi) {
            let mut free = !self.bits[w] & m;
            let c = free.count_ones();
            if n >= c {
                n -= c;
                continue;
            }
            for _ in 0..n {
                free &= free - 1;
            }
            return Some((w * 64) as u16 + free.trailing_zeros() as u16);
        }
        None
    }
}

/// Uniform choice among free ports of [lo, hi]. A few blind draws first,
/// then exact enumeration; both phases are uniform over the free set.
pub(crate) fn pick_uniform<R: Rng>(set: Option<&PortSet>, lo: u16, hi: u16, rng: &mut R) -> Option<u16> {
    let Some(set) = set else {
        return Some(rng.gen_range(lo..=hi));
    };
    for _ in 0..16 {
        let p = rng.gen_range(lo..=hi);
        if !set.contains(p) {
            return Some(p);
        }
    }
    let free = set.free_in(lo, hi);
    if free == 0 {
        return None;
    }
    set.nth_free(lo, hi, rng.gen_range(0..free))
}

/// Linear runs from random offsets with the run length halved after each
/// miss, the way Linux bounds its NAT port search.
pub(crate) fn pick_bounded<R: Rng>(set: Option<&PortSet>, lo: u16, hi: u16, attempts: u32, rng: &mut R) -> Option<u16> {
    let size = hi as u32 - lo as u32 + 1;
    let used = |p: u16| set.is_some_and(|s| s.contains(p));
    let mut run = attempts.clamp(1, size);
    loop {
        let off = rng.gen_range(0..size);
        for i in 0..run {
            let p = (lo as u32 + (off + i) % size) as u16;
            if !used(p) {
                return Some(p);
            }
        }
        if run >= size || run < 16 {
            return None;
        }
        run /= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts_and_nth() {
        let mut s = PortSet::new();
        for p in [0u16, 63, 64, 65535, 100] {
            assert!(s.insert(p));
        }
        assert!(!s.insert(63));
        assert_eq!(s.free_in(0, 65535), 65536 - 5);
        assert_eq!(s.free_in(60, 70), 11 - 2);
        assert_eq!(s.nth_free(60, 70, 0), Some(60));
        assert_eq!(s.nth_free(60, 70, 3), Some(65));
        assert_eq!(s.nth_free(65535, 65535, 0), None);
        assert!(s.remove(64));
        assert_eq!(s.nth_free(63, 64, 0), Some(64));
    }

    #[test]
    fn uniform_pick_finds_last_free_port() {
        let mut s = PortSet::new();
        for p in 1024..=65535u16 {
            if p != 4242 {
                s.insert(p);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(pick_uniform(Some(&s), 1024, 65535, &mut rng), Some(4242));
        s.insert(4242);
        assert_eq!(pick_uniform(Some(&s), 1024, 65535, &mut rng), None);
    }

    #[test]
    fn bounded_pick_can_miss_a_lone_free_port() {
        let mut s = PortSet::new();
        for p in 1024..=65535u16 {
            if p != 4242 {
                s.insert(p);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hits = (0..200)
            .filter(|_| pick_bounded(Some(&s), 1024, 65535, 128, &mut rng).is_some())
            .count();
        // 248 probes over 64512 ports: well under 5% success.
        assert!(hits < 10, "{hits}");
    }
}
