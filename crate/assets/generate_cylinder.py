"""Generate the bundled channel-with-cylinder mesh (ASCII MSH 2.2 + marker sidecar).

Requires the `triangle` Python package. Usage:
    python3 generate_cylinder.py [output_stem]
"""
import json
import math
import sys

import numpy as np
import triangle

LENGTH, HEIGHT = 2.2, 0.41
CENTER, RADIUS = (0.2, 0.2), 0.05
TAGS = {1: "inflow", 2: "outflow", 3: "walls", 4: "cylinder"}

N_CIRCLE = 64
H_NEAR, GROWTH, H_WAKE, H_FAR = 0.0065, 0.3, 0.025, 0.09
# Wake cells coarsen downstream; the near wake sets the shedding onset.
WAKE_GROWTH = 0.03


def size(x, y):
    d = math.hypot(x - CENTER[0], y - CENTER[1]) - RADIUS
    h = min(H_NEAR + GROWTH * max(d, 0.0), H_FAR)
    if x > CENTER[0] and abs(y - CENTER[1]) < 0.12 + 0.05 * (x - CENTER[0]):
        h = min(h, H_WAKE + WAKE_GROWTH * (x - CENTER[0]))
    return h


def boundary():
    pts, segs, marks = [], [], []

    def polyline(points, tag, closed=False):
        start = len(pts)
        pts.extend(points)
        n = len(points)
        for i in range(n - 1 if not closed else n):
            segs.append([start + i, start + (i + 1) % n])
            marks.append(tag)

    def side(a, b):
        # Grade along the side by the size field at each point.
        out, t = [a], 0.0
        length = math.dist(a, b)
        while True:
            x = (a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t)
            t += size(*x) / length
            if t >= 1.0 - 0.3 * size(*x) / length:
                break
            out.append((a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t))
        return out

    corners = [(0.0, 0.0), (LENGTH, 0.0), (LENGTH, HEIGHT), (0.0, HEIGHT)]
    tags = [3, 2, 3, 1]
    outer_pts, outer_tags = [], []
    for k in range(4):
        seg = side(corners[k], corners[(k + 1) % 4])
        outer_pts.extend(seg)
        outer_tags.extend([tags[k]] * len(seg))
    start = len(pts)
    pts.extend(outer_pts)
    n = len(outer_pts)
    for i in range(n):
        segs.append([start + i, start + (i + 1) % n])
        marks.append(outer_tags[i])
    circle = [
        (CENTER[0] + RADIUS * math.cos(2 * math.pi * k / N_CIRCLE),
         CENTER[1] + RADIUS * math.sin(2 * math.pi * k / N_CIRCLE))
        for k in range(N_CIRCLE)
    ]
    polyline(circle, 4, closed=True)
    return np.array(pts), np.array(segs), np.array(marks)


def generate():
    pts, segs, marks = boundary()
    pslg = dict(vertices=pts, segments=segs, segment_markers=marks.reshape(-1, 1), holes=[CENTER])
    mesh = triangle.triangulate(pslg, "pq32a0.005e")
    for _ in range(12):
        v, t = mesh["vertices"], mesh["triangles"]
        cent = v[t].mean(axis=1)
        target = np.array([0.433 * size(x, y) ** 2 for x, y in cent])
        e1, e2 = v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]]
        area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if np.all(area <= 1.05 * target):
            break
        mesh["triangle_max_area"] = target.reshape(-1, 1)
        mesh = triangle.triangulate(mesh, "rpq32ae")
    return mesh


def boundary_edges(mesh):
    edges = []
    for (a, b), m in zip(mesh["edges"], mesh["edge_markers"].ravel()):
        if m in TAGS:
            edges.append((int(a), int(b), int(m)))
    return edges


def write(stem, mesh):
    v, t = mesh["vertices"], mesh["triangles"]
    edges = boundary_edges(mesh)
    with open(stem + ".msh", "w") as f:
        f.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        f.write("$PhysicalNames\n%d\n" % len(TAGS))
        for tag, name in TAGS.items():
            f.write('1 %d "%s"\n' % (tag, name))
        f.write("$EndPhysicalNames\n$Nodes\n%d\n" % len(v))
        for i, (x, y) in enumerate(v):
            f.write("%d %r %r 0\n" % (i + 1, float(x), float(y)))
        f.write("$EndNodes\n$Elements\n%d\n" % (len(edges) + len(t)))
        k = 1
        for a, b, m in edges:
            f.write("%d 1 2 %d %d %d %d\n" % (k, m, m, a + 1, b + 1))
            k += 1
        for tri in t:
            f.write("%d 2 2 5 5 %d %d %d\n" % (k, tri[0] + 1, tri[1] + 1, tri[2] + 1))
            k += 1
        f.write("$EndElements\n")
    with open(stem + ".markers.json", "w") as f:
        json.dump({str(k): v for k, v in TAGS.items()}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    stem = sys.argv[1] if len(sys.argv) > 1 else "cylinder"
    mesh = generate()
    nv, nt = len(mesh["vertices"]), len(mesh["triangles"])
    ne = (3 * nt + sum(1 for _ in boundary_edges(mesh))) // 2
    print("vertices %d triangles %d edges %d dofs %d" % (nv, nt, ne, 3 * nv + 2 * ne))
    write(stem, mesh)
