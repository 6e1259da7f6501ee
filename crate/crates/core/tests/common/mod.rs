#![allow(dead_code)]

use std::f64::consts::TAU;

use wannier_core::fiber::{solve_grid, BandWindow, PlaneWaveBasis, PotentialSpec};
use wannier_core::frames::{default_frame, BlochFrame};
use wannier_core::functional::Overlaps;
use wannier_core::lattice::{build_lattice, make_kgrid, BravaisLattice, KGrid};

pub struct Instance {
    pub lat: BravaisLattice,
    pub basis: PlaneWaveBasis,
    pub pot: PotentialSpec,
    pub grid: KGrid,
    pub frame: BlochFrame,
}

impl Instance {
    pub fn overlaps(&self) -> Overlaps {
        Overlaps::new(&self.frame, &self.grid, &self.basis).unwrap()
    }
}

/// Mathieu potential V0·cos x on the 2π lattice, lowest `count` bands above `first`.
pub fn mathieu(n: usize, first: usize, count: usize) -> Instance {
    let lat = build_lattice(&[vec![TAU]]).unwrap();
    let basis = PlaneWaveBasis::new(&lat, 8.0);
    let pot = PotentialSpec::mathieu1d(0.5);
    let grid = make_kgrid(&lat, &[n]).unwrap();
    let spectra = solve_grid(&grid, &basis, &pot).unwrap();
    let frame = default_frame(&lat, &pot, &basis, &grid, &spectra, &BandWindow::new(first, count)).unwrap();
    Instance { lat, basis, pot, grid, frame }
}
