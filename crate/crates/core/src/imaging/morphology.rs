//! Binary erosion, dilation, opening and closing.
//!
//! Masks are treated as subsets of the plane (see [`BinaryMask::outside`]).
//! Single erosions and dilations read beyond-frame pixels as the mask's
//! outside value; compositions run on a padded canvas so that openings and
//! closings equal their whole-plane counterparts restricted to the frame.

use super::BinaryMask;
use crate::error::{ensure, Result};

/// Structuring element shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Offsets with `dx² + dy² <= r²`.
    #[default]
    Disk,
    /// Offsets with `max(|dx|, |dy|) <= r`.
    Square,
}

fn offsets(radius: usize, shape: Shape) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if shape == Shape::Square || dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn check_radius(radius: usize) -> Result<()> {
    ensure!(
        radius >= 1,
        InvalidParameter,
        "structuring element radius must be >= 1"
    );
    Ok(())
}

// Structuring elements are symmetric, so the reflected element is the element
// itself and both operators scan the same offset list.
fn apply(mask: &BinaryMask, offsets: &[(isize, isize)], erode: bool) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        if erode {
            offsets.iter().all(|&(dx, dy)| mask.get_signed(x + dx, y + dy))
        } else {
            offsets.iter().any(|&(dx, dy)| mask.get_signed(x + dx, y + dy))
        }
    })
    .with_outside(mask.outside())
}

fn pad(mask: &BinaryMask, margin: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    let m = margin as isize;
    BinaryMask::from_fn(w + 2 * margin, h + 2 * margin, |x, y| {
        mask.get_signed(x as isize - m, y as isize - m)
    })
    .with_outside(mask.outside())
}

fn crop(mask: &BinaryMask, margin: usize, w: usize, h: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| mask.get(x + margin, y + margin)).with_outside(mask.outside())
}

pub fn erode(mask: &BinaryMask, radius: usize, shape: Shape) -> Result<BinaryMask> {
    check_radius(radius)?;
    Ok(apply(mask, &offsets(radius, shape), true))
}

pub fn dilate(mask: &BinaryMask, radius: usize, shape: Shape) -> Result<BinaryMask> {
    check_radius(radius)?;
    Ok(apply(mask, &offsets(radius, shape), false))
}

/// Dilation of the erosion.
pub fn open(mask: &BinaryMask, radius: usize, shape: Shape) -> Result<BinaryMask> {
    check_radius(radius)?;
    let se = offsets(radius, shape);
    let padded = pad(mask, radius);
    let opened = apply(&apply(&padded, &se, true), &se, false);
    Ok(crop(&opened, radius, mask.width(), mask.height()))
}

/// Erosion of the dilation.
pub fn close(mask: &BinaryMask, radius: usize, shape: Shape) -> Result<BinaryMask> {
    check_radius(radius)?;
    let se = offsets(radius, shape);
    let padded = pad(mask, radius);
    let closed = apply(&apply(&padded, &se, false), &se, true);
    Ok(crop(&closed, radius, mask.width(), mask.height()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_mask(w: usize, h: usize, bits: &[bool]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| bits[(y * w + x) % bits.len()])
    }

    #[test]
    fn radius_zero_rejected() {
        let m = BinaryMask::new(4, 4);
        assert!(erode(&m, 0, Shape::Disk).is_err());
        assert!(dilate(&m, 0, Shape::Square).is_err());
        assert!(open(&m, 0, Shape::Disk).is_err());
        assert!(close(&m, 0, Shape::Disk).is_err());
    }

    #[test]
    fn disk_of_radius_one_is_a_cross() {
        assert_eq!(offsets(1, Shape::Disk).len(), 5);
        assert_eq!(offsets(1, Shape::Square).len(), 9);
        assert_eq!(offsets(2, Shape::Disk).len(), 13);
    }

    #[test]
    fn eroding_full_mask_clears_the_border() {
        let full = BinaryMask::from_fn(6, 5, |_, _| true);
        let e = erode(&full, 1, Shape::Square).unwrap();
        for y in 0..5 {
            for x in 0..6 {
                let interior = x > 0 && y > 0 && x < 5 && y < 4;
                assert_eq!(e.get(x, y), interior, "({x},{y})");
            }
        }
    }

    #[test]
    fn opening_removes_isolated_pixel() {
        let mut m = BinaryMask::new(7, 7);
        m.set(3, 3, true);
        assert!(open(&m, 1, Shape::Disk).unwrap().is_empty());
        assert!(open(&m, 1, Shape::Square).unwrap().is_empty());
    }

    #[test]
    fn closing_seals_a_hairline_crack() {
        let solid = BinaryMask::from_fn(30, 30, |x, y| (5..25).contains(&x) && (5..25).contains(&y));
        let mut cracked = solid.clone();
        for x in 8..20 {
            cracked.set(x, 14, false);
        }
        assert_ne!(cracked, solid);
        assert_eq!(close(&cracked, 2, Shape::Disk).unwrap(), solid);
    }

    #[test]
    fn closing_keeps_pixels_touching_the_border() {
        let m = BinaryMask::from_fn(10, 10, |x, y| x < 3 && y < 3);
        let c = close(&m, 2, Shape::Disk).unwrap();
        assert_eq!(c, m);
    }

    #[test]
    fn dilation_grows_a_point_into_the_element() {
        let mut m = BinaryMask::new(9, 9);
        m.set(4, 4, true);
        assert_eq!(dilate(&m, 2, Shape::Disk).unwrap().count(), 13);
        assert_eq!(dilate(&m, 2, Shape::Square).unwrap().count(), 25);
    }

    proptest! {
        #[test]
        fn erosion_dilation_duality(bits in proptest::collection::vec(any::<bool>(), 64..200),
                                    r in 1usize..3, square in any::<bool>()) {
            let shape = if square { Shape::Square } else { Shape::Disk };
            let m = random_mask(13, 11, &bits);
            let lhs = erode(&m, r, shape).unwrap();
            let rhs = dilate(&m.complement(), r, shape).unwrap().complement();
            prop_assert_eq!(lhs, rhs);
            let lhs = dilate(&m, r, shape).unwrap();
            let rhs = erode(&m.complement(), r, shape).unwrap().complement();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn open_close_idempotent(bits in proptest::collection::vec(any::<bool>(), 64..200),
                                 r in 1usize..4, square in any::<bool>()) {
            let shape = if square { Shape::Square } else { Shape::Disk };
            let m = random_mask(14, 12, &bits);
            let o = open(&m, r, shape).unwrap();
            prop_assert_eq!(open(&o, r, shape).unwrap(), o.clone());
            let c = close(&m, r, shape).unwrap();
            prop_assert_eq!(close(&c, r, shape).unwrap(), c.clone());
            // anti-extensive / extensive
            prop_assert!(o.pixels().iter().all(|&(x, y)| m.get(x, y)));
            prop_assert!(m.pixels().iter().all(|&(x, y)| c.get(x, y)));
        }
    }
}
