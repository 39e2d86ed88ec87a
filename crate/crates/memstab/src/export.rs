//! Plain-text mesh listing for debugging.

use std::io::{self, Write};

use memstab_core::StructuredMesh;

/// Writes `node <i> <x1> <x2> <boundary>` and `tri <t> <a> <b> <c>` records, one per line.
pub fn write_mesh<W: Write>(mesh: &StructuredMesh, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "# ell {} rf {} subdiv {} nodes {} triangles {}",
        mesh.ell,
        mesh.rf,
        mesh.subdiv,
        mesh.num_nodes(),
        mesh.triangles.len()
    )?;
    let mut boundary = vec![false; mesh.num_nodes()];
    for &b in &mesh.boundary_nodes {
        boundary[b] = true;
    }
    for (i, p) in mesh.nodes.iter().enumerate() {
        writeln!(out, "node {i} {:.17e} {:.17e} {}", p[0], p[1], u8::from(boundary[i]))?;
    }
    for (t, [a, b, c]) in mesh.triangles.iter().enumerate() {
        writeln!(out, "tri {t} {a} {b} {c}")?;
    }
    out.flush()
}
