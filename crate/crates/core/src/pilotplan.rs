//! Fractional pilot reuse.
//!
//! A pilot book of `B = beta * K` orthogonal sequences is split into `beta`
//! disjoint blocks of `K`. Every cell of reuse group `g` gives its `k`-th UE
//! pilot `g * K + k`, so pilots are orthogonal inside a cell and shared only
//! among co-channel cells. Pilots are plain indices here; only the inner
//! products `v_a^H v_b` (either `B` or 0) are exposed.

use crate::error::{Error, Result};
use crate::hexgeo::{CellIndex, ReuseCluster};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotPlan {
    n_users: usize,
    reuse_factor: u32,
    cluster: ReuseCluster,
}

impl PilotPlan {
    pub fn new(n_users: usize, reuse_factor: u32) -> Result<Self> {
        if n_users == 0 {
            return Err(Error::Domain("pilot plan needs at least one user".into()));
        }
        let cluster = ReuseCluster::new(reuse_factor)?;
        Ok(PilotPlan {
            n_users,
            reuse_factor,
            cluster,
        })
    }

    /// B.
    pub fn pilot_len(&self) -> usize {
        self.n_users * self.reuse_factor as usize
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn reuse_factor(&self) -> u32 {
        self.reuse_factor
    }

    /// Pilot index in `1..=B` for user `k` (1-based) of a cell in `group`.
    pub fn assign(&self, group: u32, k: usize) -> Result<usize> {
        if group >= self.reuse_factor {
            return Err(Error::Index(format!(
                "group {group} outside 0..{}",
                self.reuse_factor
            )));
        }
        if k == 0 || k > self.n_users {
            return Err(Error::Index(format!(
                "user {k} outside 1..={}",
                self.n_users
            )));
        }
        Ok(group as usize * self.n_users + k)
    }

    pub fn group_of(&self, cell: CellIndex) -> u32 {
        self.cluster.group(cell)
    }

    /// Pilot of user `k` (1-based) in `cell`.
    pub fn pilot_of(&self, cell: CellIndex, k: usize) -> Result<usize> {
        self.assign(self.group_of(cell), k)
    }

    /// Cells of `cells` reusing the pilots of `j`, optionally including `j`.
    pub fn copilot_cells(
        &self,
        j: CellIndex,
        cells: impl IntoIterator<Item = CellIndex>,
        include_self: bool,
    ) -> Vec<CellIndex> {
        let g = self.group_of(j);
        cells
            .into_iter()
            .filter(|&c| (include_self || c != j) && self.group_of(c) == g)
            .collect()
    }

    /// `v_a^H v_b` for this plan's book.
    pub fn inner_product(&self, a: usize, b: usize) -> f64 {
        inner_product(a, b, self.pilot_len())
    }
}

/// `v_a^H v_b` for an orthogonal book of length `b_len` with unit-modulus entries.
pub fn inner_product(a: usize, b: usize, b_len: usize) -> f64 {
    debug_assert!((1..=b_len).contains(&a) && (1..=b_len).contains(&b));
    if a == b {
        b_len as f64
    } else {
        0.0
    }
}

/// Convenience wrapper over [`PilotPlan::copilot_cells`] for a reuse factor.
pub fn copilot_cells(
    j: CellIndex,
    beta: u32,
    cells: impl IntoIterator<Item = CellIndex>,
    include_self: bool,
) -> Result<Vec<CellIndex>> {
    Ok(PilotPlan::new(1, beta)?.copilot_cells(j, cells, include_self))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hexgeo::{self, bs_position, cells_within};
    use crate::netmodel::SUPPORTED_REUSE;
    use proptest::prelude::*;

    #[test]
    fn assign_examples() {
        let p = PilotPlan::new(10, 3).unwrap();
        assert_eq!(p.pilot_len(), 30);
        assert_eq!(p.assign(0, 1).unwrap(), 1);
        assert_eq!(p.assign(2, 10).unwrap(), 30);
        let u = PilotPlan::new(7, 1).unwrap();
        for k in 1..=7 {
            assert_eq!(u.assign(0, k).unwrap(), k);
        }
        assert!(matches!(p.assign(3, 1), Err(Error::Index(_))));
        assert!(matches!(p.assign(0, 0), Err(Error::Index(_))));
        assert!(matches!(p.assign(0, 11), Err(Error::Index(_))));
        assert!(PilotPlan::new(0, 1).is_err());
        assert!(PilotPlan::new(3, 5).is_err());
    }

    #[test]
    fn assign_is_bijective() {
        for beta in SUPPORTED_REUSE {
            let p = PilotPlan::new(6, beta).unwrap();
            let mut all: Vec<usize> = (0..beta)
                .flat_map(|g| (1..=6).map(move |k| (g, k)))
                .map(|(g, k)| p.assign(g, k).unwrap())
                .collect();
            all.sort();
            assert_eq!(all, (1..=p.pilot_len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn inner_products() {
        assert_eq!(inner_product(5, 5, 30), 30.0);
        assert_eq!(inner_product(5, 6, 30), 0.0);
        for i in 1..=30 {
            let s: f64 = (1..=30).map(|j| inner_product(i, j, 30)).sum();
            assert_eq!(s, 30.0);
        }
    }

    #[test]
    fn copilot_examples() {
        let cells = cells_within(3);
        let o = CellIndex::ORIGIN;
        assert_eq!(
            copilot_cells(o, 1, cells.clone(), false).unwrap().len(),
            cells.len() - 1
        );
        let c3 = copilot_cells(o, 3, cells.clone(), false).unwrap();
        let nearest = c3
            .iter()
            .map(|&c| bs_position(c, 1.0).norm())
            .fold(f64::INFINITY, f64::min);
        assert!((nearest - 3.0).abs() < 1e-12);
        let c7 = copilot_cells(o, 7, cells.clone(), false).unwrap();
        assert!(c7.iter().all(|c| c.tier() > 1));
        assert!(copilot_cells(o, 7, cells, true).unwrap().contains(&o));
    }

    proptest! {
        #[test]
        fn inner_product_collapse(
            beta_idx in 0usize..4, k in 1usize..6,
            l1 in -4i64..=4, l2 in -4i64..=4, m in 1usize..6,
            j1 in -4i64..=4, j2 in -4i64..=4, kk in 1usize..6,
        ) {
            let beta = SUPPORTED_REUSE[beta_idx];
            let k_users = k.max(m).max(kk);
            let plan = PilotPlan::new(k_users, beta).unwrap();
            let a = CellIndex::new(l1, l2);
            let b = CellIndex::new(j1, j2);
            let ip = plan.inner_product(plan.pilot_of(a, m).unwrap(), plan.pilot_of(b, kk).unwrap());
            let same = hexgeo::reuse_group(a, beta).unwrap() == hexgeo::reuse_group(b, beta).unwrap() && m == kk;
            prop_assert_eq!(ip, if same { plan.pilot_len() as f64 } else { 0.0 });
        }

        #[test]
        fn intra_cell_orthogonality(beta_idx in 0usize..4, k in 1usize..20, a1 in -9i64..9, a2 in -9i64..9) {
            let plan = PilotPlan::new(k, SUPPORTED_REUSE[beta_idx]).unwrap();
            let c = CellIndex::new(a1, a2);
            let mut ids: Vec<usize> = (1..=k).map(|u| plan.pilot_of(c, u).unwrap()).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), k);
        }
    }
}
