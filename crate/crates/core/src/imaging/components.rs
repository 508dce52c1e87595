use std::collections::VecDeque;

use super::BinaryMask;

/// Pixel adjacency used for labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// 1-based, assigned in raster order of each component's first pixel.
    pub label: usize,
    /// Pixels in raster order.
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// Label the set pixels of `mask` into disjoint connected components.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = mask.dims();
    let mut label = vec![0usize; w * h];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..w * h {
        if !mask.bits()[start] || label[start] != 0 {
            continue;
        }
        let id = components.len() + 1;
        label[start] = id;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            pixels.push((x as usize, y as usize));
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits()[j] && label[j] == 0 {
                    label[j] = id;
                    queue.push_back(j);
                }
            }
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        components.push(Component { label: id, pixels });
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_mask_has_no_components() {
        assert!(connected_components(&BinaryMask::new(5, 5), Connectivity::Eight).is_empty());
    }

    #[test]
    fn two_squares() {
        let m = BinaryMask::from_fn(12, 6, |x, y| (1..4).contains(&y) && ((1..4).contains(&x) || (7..10).contains(&x)));
        let cc = connected_components(&m, Connectivity::Eight);
        assert_eq!(cc.len(), 2);
        assert!(cc.iter().all(|c| c.area() == 9));
        assert_eq!(cc[0].label, 1);
        assert_eq!(cc[0].pixels[0], (1, 1));
        assert_eq!(cc[1].pixels[0], (7, 1));
    }

    #[test]
    fn diagonal_chain_connectivity() {
        let m = BinaryMask::from_fn(6, 6, |x, y| x == y);
        assert_eq!(connected_components(&m, Connectivity::Eight).len(), 1);
        assert_eq!(connected_components(&m, Connectivity::Four).len(), 6);
    }

    proptest! {
        #[test]
        fn areas_sum_to_population(bits in proptest::collection::vec(any::<bool>(), 100), four in any::<bool>()) {
            let m = BinaryMask::from_bits(10, 10, bits).unwrap();
            let conn = if four { Connectivity::Four } else { Connectivity::Eight };
            let cc = connected_components(&m, conn);
            prop_assert_eq!(cc.iter().map(Component::area).sum::<usize>(), m.count());
            let mut seen = BinaryMask::new(10, 10);
            for c in &cc {
                for &(x, y) in &c.pixels {
                    prop_assert!(m.get(x, y) && !seen.get(x, y));
                    seen.set(x, y, true);
                }
            }
        }
    }
}
