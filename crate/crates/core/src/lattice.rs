//! Dense simple-cubic lattice with a boundary-condition policy.

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Periodic,
    Open,
}

/// Lattice extents `(Lx, Ly, Lz)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub lx: usize,
    pub ly: usize,
    pub lz: usize,
}

impl Dims {
    pub fn new(lx: usize, ly: usize, lz: usize) -> Result<Self> {
        if lx == 0 || ly == 0 || lz == 0 {
            return Err(invalid("dims", format!("all extents must be positive, got {lx}x{ly}x{lz}")));
        }
        Ok(Self { lx, ly, lz })
    }

    pub fn cube(l: usize) -> Result<Self> {
        Self::new(l, l, l)
    }

    #[inline]
    pub fn volume(&self) -> usize {
        self.lx * self.ly * self.lz
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.lx && y < self.ly && z < self.lz);
        x + self.lx * (y + self.ly * z)
    }

    #[inline]
    pub fn coords(&self, site: usize) -> (usize, usize, usize) {
        debug_assert!(site < self.volume());
        let x = site % self.lx;
        let rest = site / self.lx;
        (x, rest % self.ly, rest / self.ly)
    }

    #[inline]
    pub fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.lx,
            Axis::Y => self.ly,
            Axis::Z => self.lz,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// Neighbor of `site` one step in the positive direction of `axis`.
/// `None` when the step leaves an open lattice.
#[inline]
pub fn forward(dims: Dims, boundary: Boundary, site: usize, axis: Axis) -> Option<usize> {
    let (x, y, z) = dims.coords(site);
    let (c, l) = match axis {
        Axis::X => (x, dims.lx),
        Axis::Y => (y, dims.ly),
        Axis::Z => (z, dims.lz),
    };
    let next = if c + 1 < l {
        c + 1
    } else {
        match boundary {
            Boundary::Periodic => 0,
            Boundary::Open => return None,
        }
    };
    Some(match axis {
        Axis::X => dims.index(next, y, z),
        Axis::Y => dims.index(x, next, z),
        Axis::Z => dims.index(x, y, next),
    })
}

/// Neighbor of `site` one step in the negative direction of `axis`.
#[inline]
pub fn backward(dims: Dims, boundary: Boundary, site: usize, axis: Axis) -> Option<usize> {
    let (x, y, z) = dims.coords(site);
    let (c, l) = match axis {
        Axis::X => (x, dims.lx),
        Axis::Y => (y, dims.ly),
        Axis::Z => (z, dims.lz),
    };
    let prev = if c > 0 {
        c - 1
    } else {
        match boundary {
            Boundary::Periodic => l - 1,
            Boundary::Open => return None,
        }
    };
    Some(match axis {
        Axis::X => dims.index(prev, y, z),
        Axis::Y => dims.index(x, prev, z),
        Axis::Z => dims.index(x, y, prev),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice3D<S> {
    dims: Dims,
    boundary: Boundary,
    sites: Vec<S>,
}

impl<S: Clone> Lattice3D<S> {
    pub fn filled(dims: Dims, boundary: Boundary, value: S) -> Self {
        Self {
            dims,
            boundary,
            sites: vec![value; dims.volume()],
        }
    }
}

impl<S> Lattice3D<S> {
    pub fn from_sites(dims: Dims, boundary: Boundary, sites: Vec<S>) -> Result<Self> {
        if sites.len() != dims.volume() {
            return Err(invalid(
                "sites",
                format!("expected {} sites, got {}", dims.volume(), sites.len()),
            ));
        }
        Ok(Self {
            dims,
            boundary,
            sites,
        })
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    #[inline]
    pub fn sites(&self) -> &[S] {
        &self.sites
    }

    #[inline]
    pub fn sites_mut(&mut self) -> &mut [S] {
        &mut self.sites
    }

    #[inline]
    pub fn get(&self, site: usize) -> &S {
        &self.sites[site]
    }

    #[inline]
    pub fn set(&mut self, site: usize, value: S) {
        self.sites[site] = value;
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> &S {
        &self.sites[self.dims.index(x, y, z)]
    }

    /// Nearest neighbors of `site`: always 6 under periodic boundaries,
    /// 3 to 6 under open ones.
    ///
    /// Panics if `site` is out of range.
    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(6);
        self.for_each_neighbor(site, |n| out.push(n));
        out
    }

    #[inline]
    pub fn for_each_neighbor(&self, site: usize, mut f: impl FnMut(usize)) {
        assert!(site < self.sites.len(), "site {site} out of range");
        for axis in Axis::ALL {
            if let Some(n) = backward(self.dims, self.boundary, site, axis) {
                f(n);
            }
            if let Some(n) = forward(self.dims, self.boundary, site, axis) {
                f(n);
            }
        }
    }

    /// Calls `f(a, b)` once for every nearest-neighbor bond, each counted once.
    pub fn for_each_bond(&self, mut f: impl FnMut(usize, usize)) {
        for site in 0..self.sites.len() {
            for axis in Axis::ALL {
                if let Some(n) = forward(self.dims, self.boundary, site, axis) {
                    f(site, n);
                }
            }
        }
    }
}
