use serde::{Deserialize, Serialize};

/// Axis-aligned pixel rectangle `[row, row + height) x [col, col + width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        Self {
            row,
            col,
            height,
            width,
        }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.height > 0 && self.width > 0 && self.row + self.height <= height && self.col + self.width <= width
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        self.row < other.row + other.height
            && other.row < self.row + self.height
            && self.col < other.col + other.width
            && other.col < self.col + self.width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row..self.row + self.height).contains(&row) && (self.col..self.col + self.width).contains(&col)
    }

    /// Flat `row * width + col` indices of the covered pixels in an image
    /// `image_width` wide.
    pub fn pixels(&self, image_width: usize) -> impl Iterator<Item = usize> + '_ {
        (self.row..self.row + self.height)
            .flat_map(move |r| (self.col..self.col + self.width).map(move |c| r * image_width + c))
    }

    pub fn origin(&self) -> [usize; 2] {
        [self.row, self.col]
    }
}

/// True when no two regions overlap.
pub fn pairwise_disjoint(regions: &[Region]) -> bool {
    regions
        .iter()
        .enumerate()
        .all(|(i, a)| regions[i + 1..].iter().all(|b| !a.overlaps(b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_and_bounds() {
        let a = Region::new(0, 0, 4, 4);
        let b = Region::new(4, 0, 4, 4);
        let c = Region::new(3, 3, 2, 2);
        assert!(!a.overlaps(&b));
        assert!(a.overlaps(&c) && b.overlaps(&c));
        assert!(pairwise_disjoint(&[a, b]));
        assert!(!pairwise_disjoint(&[a, b, c]));
        assert!(a.fits(4, 4));
        assert!(!b.fits(7, 8));
        assert_eq!(Region::new(1, 1, 2, 2).pixels(4).collect::<Vec<_>>(), vec![5, 6, 9, 10]);
    }
}
