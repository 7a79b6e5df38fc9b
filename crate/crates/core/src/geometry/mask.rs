use crate::{Error, Result};

/// Binary image mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width as usize) * (height as usize)],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for v in 0..height {
            for u in 0..width {
                m.bits[(v * width + u) as usize] = f(u, v);
            }
        }
        m
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[(v * self.width + u) as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, on: bool) {
        self.bits[(v * self.width + u) as usize] = on;
    }

    pub fn fill(&mut self, on: bool) {
        self.bits.iter_mut().for_each(|b| *b = on);
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Set pixels as `(u, v)` in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }

    /// Tight bounding box `(x0, y0, x1, y1)` with exclusive upper corner.
    pub fn bounding_box(&self) -> Option<[u32; 4]> {
        let mut bb: Option<[u32; 4]> = None;
        for (u, v) in self.iter_set() {
            bb = Some(match bb {
                None => [u, v, u + 1, v + 1],
                Some([x0, y0, x1, y1]) => [x0.min(u), y0.min(v), x1.max(u + 1), y1.max(v + 1)],
            });
        }
        bb
    }

    /// Row-major run lengths, alternating off/on, starting with the
    /// (possibly empty) run of zeros.
    pub fn to_rle(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(width: u32, height: u32, runs: &[u32]) -> Result<Self> {
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(Error::invalid(format!(
                "mask RLE covers {total} pixels, image has {expected}"
            )));
        }
        let mut bits = Vec::with_capacity(expected as usize);
        let mut on = false;
        for &r in runs {
            bits.extend(std::iter::repeat_n(on, r as usize));
            on = !on;
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rle_starts_with_zero_run() {
        let mut m = Mask::new(3, 1);
        m.set(0, 0, true);
        assert_eq!(m.to_rle(), vec![0, 1, 2]);
        assert_eq!(Mask::new(2, 2).to_rle(), vec![4]);
    }

    #[test]
    fn rle_length_mismatch() {
        assert!(Mask::from_rle(2, 2, &[1, 2]).is_err());
    }

    #[test]
    fn bbox() {
        let mut m = Mask::new(5, 5);
        m.set(1, 2, true);
        m.set(3, 4, true);
        assert_eq!(m.bounding_box(), Some([1, 2, 4, 5]));
        assert_eq!(Mask::new(2, 2).bounding_box(), None);
    }

    proptest! {
        #[test]
        fn rle_round_trip(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let m = Mask::from_fn(w, h, |u, v| (seed >> ((u * 7 + v * 3) % 64)) & 1 == 1);
            let back = Mask::from_rle(w, h, &m.to_rle()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
