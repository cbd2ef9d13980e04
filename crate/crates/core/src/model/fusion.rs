use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::encoders::{Branch, PooledRepresentation};
use crate::{Error, Result};

/// Which branches are concatenated, in order, and how wide each is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionLayout {
    segments: Vec<(Branch, usize)>,
}

const CANONICAL: [Branch; 4] = [Branch::Rep, Branch::Pos, Branch::Ner, Branch::Hwa];

impl FusionLayout {
    /// Segments must follow the order rep, pos, ner, hwa (any may be
    /// absent, none repeated) and have positive widths.
    pub fn new(segments: Vec<(Branch, usize)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Empty("fusion layout".into()));
        }
        let mut next = 0;
        for &(branch, dim) in &segments {
            let pos = CANONICAL[next..].iter().position(|b| *b == branch).ok_or_else(|| {
                Error::InvalidArgument(format!("branch {branch} out of order or repeated in fusion layout"))
            })?;
            next += pos + 1;
            if dim == 0 {
                return Err(Error::InvalidArgument(format!("branch {branch} has zero width")));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[(Branch, usize)] {
        &self.segments
    }

    /// D, the sum of branch widths.
    pub fn width(&self) -> usize {
        self.segments.iter().map(|s| s.1).sum()
    }

    pub fn contains(&self, branch: Branch) -> bool {
        self.segments.iter().any(|s| s.0 == branch)
    }

    /// Offsets of `branch` inside the fused vector.
    pub fn range(&self, branch: Branch) -> Option<Range<usize>> {
        let mut start = 0;
        for &(b, d) in &self.segments {
            if b == branch {
                return Some(start..start + d);
            }
            start += d;
        }
        None
    }
}

/// H: the concatenation of the branch vectors named by a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedRepresentation {
    vector: Vec<f64>,
    layout: FusionLayout,
}

impl FusedRepresentation {
    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn layout(&self) -> &FusionLayout {
        &self.layout
    }

    /// The slice contributed by `branch`.
    pub fn segment(&self, branch: Branch) -> Option<&[f64]> {
        self.layout.range(branch).map(|r| &self.vector[r])
    }
}

/// Concatenate `parts` in layout order, checking each part's branch tag and width.
pub fn fuse(layout: &FusionLayout, parts: &[&PooledRepresentation]) -> Result<FusedRepresentation> {
    if parts.len() != layout.segments.len() {
        return Err(Error::InvalidArgument(format!(
            "fusion expects {} branch vectors, got {}",
            layout.segments.len(),
            parts.len()
        )));
    }
    let mut vector = Vec::with_capacity(layout.width());
    for (&(branch, dim), part) in layout.segments.iter().zip(parts) {
        if part.branch != branch {
            return Err(Error::BranchMismatch {
                expected: branch.to_string(),
                found: part.branch.to_string(),
            });
        }
        if part.dim() != dim {
            return Err(Error::DimensionMismatch {
                what: format!("{branch} representation"),
                expected: dim,
                found: part.dim(),
            });
        }
        vector.extend_from_slice(&part.vector);
    }
    Ok(FusedRepresentation {
        vector,
        layout: layout.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rep(branch: Branch, dim: usize, fill: f64) -> PooledRepresentation {
        PooledRepresentation::new(branch, (0..dim).map(|i| fill + i as f64).collect()).unwrap()
    }

    fn full(d: [usize; 4]) -> FusionLayout {
        FusionLayout::new(CANONICAL.iter().copied().zip(d).collect()).unwrap()
    }

    #[test]
    fn reference_width() {
        assert_eq!(full([768; 4]).width(), 3072);
    }

    #[test]
    fn swapped_branches_rejected() {
        let layout = full([2, 3, 4, 5]);
        let (r, p, n, h) = (
            rep(Branch::Rep, 2, 0.0),
            rep(Branch::Pos, 3, 0.0),
            rep(Branch::Ner, 4, 0.0),
            rep(Branch::Hwa, 5, 0.0),
        );
        assert!(fuse(&layout, &[&r, &p, &n, &h]).is_ok());
        assert!(matches!(fuse(&layout, &[&r, &n, &p, &h]), Err(Error::BranchMismatch { .. })));
        assert!(matches!(
            fuse(&layout, &[&r, &p, &n, &rep(Branch::Hwa, 6, 0.0)]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(fuse(&layout, &[&r, &p, &n]).is_err());
    }

    #[test]
    fn layout_order_enforced() {
        assert!(FusionLayout::new(vec![(Branch::Pos, 1), (Branch::Rep, 1)]).is_err());
        assert!(FusionLayout::new(vec![(Branch::Rep, 1), (Branch::Rep, 1)]).is_err());
        assert!(FusionLayout::new(vec![(Branch::Rep, 0)]).is_err());
        assert!(FusionLayout::new(vec![(Branch::Rep, 4), (Branch::Hwa, 2)]).is_ok());
    }

    proptest! {
        #[test]
        fn concatenation_preserves_segments(d in proptest::array::uniform4(1usize..40)) {
            let layout = full(d);
            prop_assert_eq!(layout.width(), d.iter().sum::<usize>());
            let parts: Vec<PooledRepresentation> = CANONICAL
                .iter()
                .zip(d)
                .enumerate()
                .map(|(i, (b, dim))| rep(*b, dim, 100.0 * i as f64))
                .collect();
            let refs: Vec<&PooledRepresentation> = parts.iter().collect();
            let h = fuse(&layout, &refs).unwrap();
            prop_assert_eq!(h.dim(), layout.width());
            for p in &parts {
                prop_assert_eq!(h.segment(p.branch).unwrap(), p.vector.as_slice());
            }
            prop_assert_eq!(&h.vector()[..d[0]], parts[0].vector.as_slice());
        }
    }
}
