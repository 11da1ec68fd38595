//! ASCII MSH 2.2 subset: `$MeshFormat`, optional `$PhysicalNames`, `$Nodes`
//! and `$Elements` with 2-node lines (type 1) and 3-node triangles (type 2).
//!
//! Marker names come from a sidecar JSON table `<stem>.markers.json` mapping
//! physical tags to names (`{"1": "inflow", ...}`). Without a sidecar the
//! `$PhysicalNames` section is used, and failing that the tag is named
//! `tag<N>`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{BoundaryEdge, Mesh, MeshError};

/// Physical tag → marker name.
pub type MarkerTable = BTreeMap<u32, String>;

const TYPE_LINE: u32 = 1;
const TYPE_TRIANGLE: u32 = 2;

/// Location of the marker sidecar for a mesh file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.markers.json"))
}

/// Reads a mesh file and its optional marker sidecar.
pub fn load_msh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let io_err = |source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let sidecar = sidecar_path(path);
    let markers = if sidecar.exists() {
        let json = std::fs::read_to_string(&sidecar).map_err(|source| MeshError::Io {
            path: sidecar.clone(),
            source,
        })?;
        Some(parse_marker_table(&json).map_err(|message| MeshError::Parse {
            path: sidecar.clone(),
            line: 1,
            message,
        })?)
    } else {
        None
    };
    parse_msh(&text, markers.as_ref()).map_err(|e| match e {
        MeshError::Parse { line, message, .. } => MeshError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

fn parse_marker_table(json: &str) -> Result<MarkerTable, String> {
    let raw: BTreeMap<String, String> =
        serde_json::from_str(json).map_err(|e| format!("marker table: {e}"))?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<u32>()
                .map(|t| (t, v))
                .map_err(|_| format!("marker table key `{k}` is not a physical tag"))
        })
        .collect()
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    /// Next non-blank line, trimmed.
    fn next(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Some(l);
            }
        }
        None
    }

    fn err(&self, message: impl Into<String>) -> MeshError {
        MeshError::Parse {
            path: PathBuf::new(),
            line: self.line,
            message: message.into(),
        }
    }

    fn expect(&mut self, section: &str) -> Result<&'a str, MeshError> {
        self.next()
            .ok_or_else(|| self.err(format!("unexpected end of file in section {section}")))
    }

    fn expect_end(&mut self, section: &str) -> Result<(), MeshError> {
        let end = format!("$End{}", &section[1..]);
        match self.next() {
            Some(l) if l == end => Ok(()),
            Some(l) => Err(self.err(format!("expected {end}, found `{l}`"))),
            None => Err(self.err(format!("unexpected end of file: missing {end}"))),
        }
    }

    fn count(&mut self, section: &str) -> Result<usize, MeshError> {
        let l = self.expect(section)?;
        l.parse()
            .map_err(|_| self.err(format!("invalid entry count `{l}` in {section}")))
    }
}

fn parse_fields<T: std::str::FromStr>(
    lines: &Lines,
    line: &str,
    section: &str,
) -> Result<Vec<T>, MeshError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| lines.err(format!("invalid token `{tok}` in {section}")))
        })
        .collect()
}

/// Parses MSH 2.2 text. `markers` overrides `$PhysicalNames` when given.
pub fn parse_msh(text: &str, markers: Option<&MarkerTable>) -> Result<Mesh, MeshError> {
    let mut lines = Lines::new(text);
    let mut format_seen = false;
    let mut physical_names: MarkerTable = BTreeMap::new();
    let mut nodes: Option<(Vec<usize>, Vec<[f64; 2]>)> = None;
    let mut lines_raw: Vec<([usize; 2], u32, usize)> = Vec::new();
    let mut tris_raw: Vec<([usize; 3], usize)> = Vec::new();
    let mut elements_seen = false;

    while let Some(header) = lines.next() {
        match header {
            "$MeshFormat" => {
                let l = lines.expect(header)?;
                let f: Vec<&str> = l.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(lines.err(format!("malformed $MeshFormat line `{l}`")));
                }
                if f[0] != "2.2" {
                    return Err(lines.err(format!("unsupported format version {}", f[0])));
                }
                if f[1] != "0" {
                    return Err(lines.err("binary MSH files are not supported"));
                }
                lines.expect_end(header)?;
                format_seen = true;
            }
            "$PhysicalNames" => {
                let n = lines.count(header)?;
                for _ in 0..n {
                    let l = lines.expect(header)?;
                    let mut parts = l.splitn(3, char::is_whitespace);
                    let (dim, tag, name) = (parts.next(), parts.next(), parts.next());
                    let (Some(dim), Some(tag), Some(name)) = (dim, tag, name) else {
                        return Err(lines.err(format!("malformed physical name `{l}`")));
                    };
                    let tag: u32 = tag
                        .parse()
                        .map_err(|_| lines.err(format!("invalid physical tag `{tag}`")))?;
                    if dim == "1" {
                        physical_names.insert(tag, name.trim().trim_matches('"').to_string());
                    }
                }
                lines.expect_end(header)?;
            }
            "$Nodes" => {
                if !format_seen {
                    return Err(lines.err("$Nodes before $MeshFormat"));
                }
                let n = lines.count(header)?;
                let mut ids = Vec::with_capacity(n);
                let mut coords = Vec::with_capacity(n);
                for _ in 0..n {
                    let l = lines.expect(header)?;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    if f.len() != 4 {
                        return Err(lines.err(format!("node line must have 4 fields: `{l}`")));
                    }
                    let id: usize = f[0]
                        .parse()
                        .map_err(|_| lines.err(format!("invalid node id `{}`", f[0])))?;
                    let xy: Vec<f64> = parse_fields(&lines, &f[1..3].join(" "), header)?;
                    ids.push(id);
                    coords.push([xy[0], xy[1]]);
                }
                lines.expect_end(header)?;
                nodes = Some((ids, coords));
            }
            "$Elements" => {
                if nodes.is_none() {
                    return Err(lines.err("$Elements before $Nodes"));
                }
                let n = lines.count(header)?;
                for _ in 0..n {
                    let l = lines.expect(header)?;
                    let f: Vec<usize> = parse_fields(&lines, l, header)?;
                    if f.len() < 3 {
                        return Err(lines.err(format!("malformed element `{l}`")));
                    }
                    let (etype, ntags) = (f[1] as u32, f[2]);
                    let n_nodes = match etype {
                        TYPE_LINE => 2,
                        TYPE_TRIANGLE => 3,
                        other => {
                            return Err(lines.err(format!("unsupported element type {other}")))
                        }
                    };
                    if f.len() != 3 + ntags + n_nodes {
                        return Err(lines.err(format!(
                            "element expects {} fields, found {}",
                            3 + ntags + n_nodes,
                            f.len()
                        )));
                    }
                    let physical = if ntags > 0 { f[3] as u32 } else { 0 };
                    let vs = &f[3 + ntags..];
                    if etype == TYPE_LINE {
                        lines_raw.push(([vs[0], vs[1]], physical, lines.line));
                    } else {
                        tris_raw.push(([vs[0], vs[1], vs[2]], lines.line));
                    }
                }
                lines.expect_end(header)?;
                elements_seen = true;
            }
            other if other.starts_with("$End") => {
                return Err(lines.err(format!("unmatched section terminator `{other}`")));
            }
            other if other.starts_with('$') => {
                // Unknown section: skip to its terminator.
                let end = format!("$End{}", &other[1..]);
                loop {
                    match lines.next() {
                        Some(l) if l == end => break,
                        Some(_) => {}
                        None => {
                            return Err(lines.err(format!("unexpected end of file: missing {end}")))
                        }
                    }
                }
            }
            other => return Err(lines.err(format!("unexpected content `{other}`"))),
        }
    }
    if !format_seen {
        return Err(lines.err("missing section $MeshFormat"));
    }
    let Some((ids, coords)) = nodes else {
        return Err(lines.err("missing section $Nodes"));
    };
    if !elements_seen {
        return Err(lines.err("missing section $Elements"));
    }

    let lookup: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    if lookup.len() != ids.len() {
        return Err(lines.err("duplicate node ids in $Nodes"));
    }
    let resolve = |id: usize, line: usize| {
        lookup.get(&id).copied().ok_or_else(|| MeshError::Parse {
            path: PathBuf::new(),
            line,
            message: format!("element references unknown node {id}"),
        })
    };

    // Keep only nodes used by triangles, in file order.
    let mut used = vec![false; ids.len()];
    let mut triangles = Vec::with_capacity(tris_raw.len());
    for (t, line) in &tris_raw {
        let mut tri = [0usize; 3];
        for k in 0..3 {
            tri[k] = resolve(t[k], *line)?;
            used[tri[k]] = true;
        }
        triangles.push(tri);
    }
    let mut compact = vec![usize::MAX; ids.len()];
    let mut vertices = Vec::new();
    for (i, &u) in used.iter().enumerate() {
        if u {
            compact[i] = vertices.len();
            vertices.push(coords[i]);
        }
    }
    for tri in &mut triangles {
        for v in tri.iter_mut() {
            *v = compact[*v];
        }
        let [a, b, c] = tri.map(|v| vertices[v]);
        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if cross < 0.0 {
            tri.swap(1, 2);
        }
    }
    let mut boundary_edges = Vec::with_capacity(lines_raw.len());
    let mut tags_used = std::collections::BTreeSet::new();
    for (e, tag, line) in &lines_raw {
        let mut vs = [0usize; 2];
        for k in 0..2 {
            let v = compact[resolve(e[k], *line)?];
            if v == usize::MAX {
                return Err(MeshError::Parse {
                    path: PathBuf::new(),
                    line: *line,
                    message: format!("line element uses node {} not in any triangle", e[k]),
                });
            }
            vs[k] = v;
        }
        tags_used.insert(*tag);
        boundary_edges.push(BoundaryEdge {
            vertices: vs,
            tag: *tag,
        });
    }

    let mut table: MarkerTable = BTreeMap::new();
    for tag in tags_used {
        let name = markers
            .and_then(|m| m.get(&tag).cloned())
            .or_else(|| physical_names.get(&tag).cloned())
            .unwrap_or_else(|| format!("tag{tag}"));
        table.insert(tag, name);
    }
    Mesh::new(vertices, triangles, boundary_edges, table)
}

/// Writes the mesh as MSH 2.2 plus the marker sidecar next to it.
pub fn write_msh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    let _ = writeln!(out, "$PhysicalNames\n{}", mesh.markers().len());
    for (tag, name) in mesh.markers() {
        let _ = writeln!(out, "1 {tag} \"{name}\"");
    }
    out.push_str("$EndPhysicalNames\n");
    let _ = writeln!(out, "$Nodes\n{}", mesh.n_vertices());
    for (i, v) in mesh.vertices().iter().enumerate() {
        // `{:?}` prints the shortest round-tripping representation.
        let _ = writeln!(out, "{} {:?} {:?} 0", i + 1, v[0], v[1]);
    }
    out.push_str("$EndNodes\n");
    let n_el = mesh.boundary_edges().len() + mesh.n_triangles();
    let _ = writeln!(out, "$Elements\n{n_el}");
    let mut id = 1;
    for e in mesh.boundary_edges() {
        let _ = writeln!(
            out,
            "{id} {TYPE_LINE} 2 {} {} {} {}",
            e.tag,
            e.tag,
            e.vertices[0] + 1,
            e.vertices[1] + 1
        );
        id += 1;
    }
    for t in mesh.triangles() {
        let _ = writeln!(
            out,
            "{id} {TYPE_TRIANGLE} 2 0 1 {} {} {}",
            t[0] + 1,
            t[1] + 1,
            t[2] + 1
        );
        id += 1;
    }
    out.push_str("$EndElements\n");
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MeshError::Io { path, source }
    };
    std::fs::write(path, out).map_err(io_err(path))?;
    let table: BTreeMap<String, &String> = mesh
        .markers()
        .iter()
        .map(|(t, n)| (t.to_string(), n))
        .collect();
    let json = serde_json::to_string_pretty(&table).expect("marker table serializes");
    let sidecar = sidecar_path(path);
    std::fs::write(&sidecar, json).map_err(io_err(&sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_rectangle;

    const UNIT_SQUARE: &str = "$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
10 1 1 0
11 0 0 0
12 1 0 0
13 0 1 0
$EndNodes
$Elements
6
1 1 2 7 1 11 12
2 1 2 7 1 12 10
3 1 2 8 1 10 13
4 1 2 8 1 13 11
5 2 2 0 1 11 12 10
6 2 2 0 1 11 13 10
$EndElements
";

    #[test]
    fn parses_unit_square_and_reorients() {
        let markers = MarkerTable::from([(7, "walls".into()), (8, "lid".into())]);
        let m = parse_msh(UNIT_SQUARE, Some(&markers)).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
        assert!((m.area() - 1.0).abs() < 1e-15);
        assert_eq!(m.edges_with_marker("walls").unwrap().len(), 2);
        assert_eq!(m.edges_with_marker("lid").unwrap().len(), 2);
        for k in 0..2 {
            assert!(m.signed_area(k) > 0.0);
        }
    }

    #[test]
    fn same_geometry_as_generated_square() {
        let parsed = parse_msh(UNIT_SQUARE, None).unwrap();
        let generated = generate_rectangle(1, 1, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let mut a: Vec<_> = parsed.vertices().to_vec();
        let mut b: Vec<_> = generated.vertices().to_vec();
        a.sort_by(|p, q| p.partial_cmp(q).unwrap());
        b.sort_by(|p, q| p.partial_cmp(q).unwrap());
        assert_eq!(a, b);
        let tri_sets = |m: &Mesh| {
            let mut s: Vec<Vec<[u64; 2]>> = m
                .triangles()
                .iter()
                .map(|t| {
                    let mut v: Vec<[u64; 2]> = t
                        .iter()
                        .map(|&i| m.vertices()[i].map(f64::to_bits))
                        .collect();
                    v.sort();
                    v
                })
                .collect();
            s.sort();
            s
        };
        assert_eq!(tri_sets(&parsed), tri_sets(&generated));
        assert_eq!(parsed.markers().get(&7).map(String::as_str), Some("tag7"));
    }

    #[test]
    fn truncated_file_names_missing_section() {
        let cut = UNIT_SQUARE.split("$Elements").next().unwrap();
        let err = parse_msh(cut, None).unwrap_err().to_string();
        assert!(err.contains("$Elements"), "{err}");

        let cut = &UNIT_SQUARE[..UNIT_SQUARE.find("13 0 1 0").unwrap()];
        let err = parse_msh(cut, None).unwrap_err().to_string();
        assert!(err.contains("$Nodes"), "{err}");
    }

    #[test]
    fn rejects_unsupported_elements_with_line_number() {
        let text = UNIT_SQUARE.replace("5 2 2 0 1 11 12 10", "5 3 2 0 1 11 12 10 13");
        match parse_msh(&text, None).unwrap_err() {
            MeshError::Parse { line, message, .. } => {
                assert_eq!(line, 17);
                assert!(message.contains("unsupported element type 3"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_count_mismatch_and_bad_version() {
        let text = UNIT_SQUARE.replace("$Nodes\n4", "$Nodes\n5");
        assert!(parse_msh(&text, None).is_err());
        let text = UNIT_SQUARE.replace("2.2 0 8", "4.1 0 8");
        assert!(parse_msh(&text, None)
            .unwrap_err()
            .to_string()
            .contains("version"));
    }

    #[test]
    fn write_then_load_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rect.msh");
        let mesh = generate_rectangle(5, 3, [-0.3, 0.7, 0.1, 0.41]).unwrap();
        write_msh(&mesh, &path).unwrap();
        let back = load_msh(&path).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.triangles(), mesh.triangles());
        assert_eq!(back.boundary_edges(), mesh.boundary_edges());
        assert_eq!(back.markers(), mesh.markers());
    }
}
