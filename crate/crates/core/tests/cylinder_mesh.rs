use std::path::PathBuf;

use emac_core::assembly::Assembler;
use emac_core::benchmarks::CylinderProblem;
use emac_core::diagnostics::{drag_lift, ForceFunctional, Monitor};
use emac_core::mesh::load_msh;
use emac_core::spaces::{build_taylor_hood, interpolate_pressure, State};

fn asset() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/cylinder.msh")
}

#[test]
fn bundled_mesh_loads_with_all_markers() {
    let mesh = load_msh(asset()).unwrap();
    for m in ["inflow", "outflow", "walls", "cylinder"] {
        assert!(mesh.has_marker(m), "missing marker {m}");
    }
    let area = 2.2 * 0.41 - std::f64::consts::PI * 0.05 * 0.05;
    // The polygonal cylinder boundary removes slightly less area than the circle.
    assert!((mesh.area() - area).abs() < 1e-4, "{}", mesh.area());
    let space = build_taylor_hood(mesh);
    let dofs = space.n_dofs() as f64;
    assert!((dofs - 10210.0).abs() <= 0.05 * 10210.0, "{dofs} DOFs");
}

#[test]
fn cylinder_boundary_nodes_lie_on_the_circle() {
    let space = build_taylor_hood(load_msh(asset()).unwrap());
    let nodes = space.boundary_nodes("cylinder").unwrap();
    assert!(nodes.len() > 100);
    for n in nodes {
        let [x, y] = space.node_coords()[n];
        let r = ((x - CylinderProblem::CENTER[0]).powi(2) + (y - CylinderProblem::CENTER[1]).powi(2)).sqrt();
        assert!((r - CylinderProblem::RADIUS).abs() < 1e-4, "node at radius {r}");
    }
}

#[test]
fn constant_pressure_exerts_no_net_force_on_the_cylinder() {
    let space = build_taylor_hood(load_msh(asset()).unwrap());
    let mut state = State::zeros(&space, 0.0);
    state.p = interpolate_pressure(&space, 0.0, |_, _| 2.5).unwrap();
    let (cd, cl) = drag_lift(&space, &state, 1e-3, "cylinder", None).unwrap();
    assert!(cd.abs() < 1e-10 && cl.abs() < 1e-10, "{cd} {cl}");
    let asm = Assembler::new(&space);
    let mon = Monitor::new(&asm);
    let force = ForceFunctional::new(&space, "cylinder").unwrap();
    let zero = vec![0.0; space.n_velocity()];
    let (cd, cl) = force.evaluate(&asm, &mon, &zero, &state.p, Some(&zero), 1e-3);
    assert!(cd.abs() < 1e-10 && cl.abs() < 1e-10);
}
