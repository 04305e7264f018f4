//! Binary grayscale (P5) density images.

use std::fs;
use std::io;
use std::path::Path;

use distopt_core::{LevelSetField, Mesh2D};

/// One pixel per element, `round(255·H)`, rows from the top of the domain
/// down.
pub fn encode_density(mesh: &Mesh2D, phi: &LevelSetField) -> Vec<u8> {
    let h = phi.element_heaviside(mesh);
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for r in (0..ny).rev() {
        for c in 0..nx {
            let v = (255.0 * h[mesh.element_index(c, r)]).round().clamp(0.0, 255.0);
            out.push(v as u8);
        }
    }
    out
}

pub fn write_pgm(mesh: &Mesh2D, phi: &LevelSetField, path: &Path) -> io::Result<()> {
    fs::write(path, encode_density(mesh, phi))
}
