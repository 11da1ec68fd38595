//! Legacy VTK ASCII snapshots on quadratic triangles.

use std::io::{self, Write};

use emac_core::spaces::{basis::P2_EDGE_VERTICES, State, TaylorHoodSpace};

use crate::config::PressureOutput;

/// `VTK_QUADRATIC_TRIANGLE`: three corners, then the midpoints of edges
/// 01, 12 and 20, which is the local P2 ordering.
const QUADRATIC_TRIANGLE: u8 = 22;

/// Pressure at every P2 node: the P1 field, averaged onto edge midpoints,
/// plus `½|u|²` in the kinematic variant.
pub fn nodal_pressure(space: &TaylorHoodSpace, state: &State, kind: PressureOutput) -> Vec<f64> {
    let nv = space.n_pressure();
    let mut p = vec![0.0; space.n_nodes()];
    p[..nv].copy_from_slice(&state.p);
    for (e, [a, b]) in space.edges().iter().enumerate() {
        p[nv + e] = 0.5 * (state.p[*a] + state.p[*b]);
    }
    if kind == PressureOutput::Kinematic {
        for (n, pn) in p.iter_mut().enumerate() {
            *pn += 0.5 * (state.u[2 * n].powi(2) + state.u[2 * n + 1].powi(2));
        }
    }
    p
}

pub fn write_snapshot(
    out: &mut impl Write,
    space: &TaylorHoodSpace,
    state: &State,
    kind: PressureOutput,
) -> io::Result<()> {
    let nodes = space.node_coords();
    let cells = space.n_cells();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "emacfil t={}", state.t)?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", nodes.len())?;
    for [x, y] in nodes {
        writeln!(out, "{x} {y} 0")?;
    }
    writeln!(out, "CELLS {} {}", cells, cells * 7)?;
    for k in 0..cells {
        let n = space.cell_nodes(k);
        writeln!(out, "6 {} {} {} {} {} {}", n[0], n[1], n[2], n[3], n[4], n[5])?;
    }
    writeln!(out, "CELL_TYPES {cells}")?;
    for _ in 0..cells {
        writeln!(out, "{QUADRATIC_TRIANGLE}")?;
    }
    writeln!(out, "POINT_DATA {}", nodes.len())?;
    writeln!(out, "VECTORS velocity double")?;
    for n in 0..nodes.len() {
        writeln!(out, "{} {} 0", state.u[2 * n], state.u[2 * n + 1])?;
    }
    writeln!(out, "SCALARS pressure double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for p in nodal_pressure(space, state, kind) {
        writeln!(out, "{p}")?;
    }
    Ok(())
}

// Edge midpoints must follow the corner order VTK expects.
const _: () = assert!(
    P2_EDGE_VERTICES[0][0] == 0
        && P2_EDGE_VERTICES[0][1] == 1
        && P2_EDGE_VERTICES[1][0] == 1
        && P2_EDGE_VERTICES[1][1] == 2
        && P2_EDGE_VERTICES[2][0] == 2
        && P2_EDGE_VERTICES[2][1] == 0
);
