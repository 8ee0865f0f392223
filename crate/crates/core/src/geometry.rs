//! Closed triangulated surfaces for the unit-scale cavity shape.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lattice::Vec3;

/// Largest icosphere refinement accepted by the generators.
pub const MAX_REFINEMENT: u32 = 7;

/// Closed, outward-oriented triangle mesh with per-triangle geometry cached.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    centroids: Vec<Vec3>,
    areas: Vec<f64>,
    normals: Vec<Vec3>,
}

impl SurfaceMesh {
    /// Validates and builds a mesh. Triangles must be counter-clockwise seen from outside.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<SurfaceMesh> {
        let mesh = Self::build_unchecked(vertices, triangles)?;
        mesh.check_closed()?;
        mesh.check_gauss()?;
        let volume = mesh.enclosed_volume();
        if !(volume > 0.0) {
            return Err(Error::InvalidMesh(format!(
                "enclosed volume {volume:e} is not positive (inward orientation?)"
            )));
        }
        Ok(mesh)
    }

    fn build_unchecked(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<SurfaceMesh> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {v} has non-finite coordinates")));
        }
        let nv = vertices.len();
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references vertex {bad} but there are only {nv} vertices"
                )));
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let cross = (b - a).cross(&(c - a));
            let twice_area = cross.norm();
            if !(twice_area > 0.0) {
                return Err(Error::InvalidMesh(format!("triangle {t} has zero area")));
            }
            centroids.push((a + b + c) / 3.0);
            areas.push(0.5 * twice_area);
            normals.push(cross / twice_area);
        }
        Ok(SurfaceMesh {
            vertices,
            triangles,
            centroids,
            areas,
            normals,
        })
    }

    /// Every directed edge must appear once and its reverse once.
    fn check_closed(&self) -> Result<()> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * self.triangles.len());
        for tri in &self.triangles {
            for e in 0..3 {
                *directed.entry((tri[e], tri[(e + 1) % 3])).or_insert(0) += 1;
            }
        }
        // Report the smallest offending edge so the message is reproducible.
        let mut bad: Option<(usize, usize)> = None;
        for (&(i, j), &count) in &directed {
            if count != 1 || directed.get(&(j, i)) != Some(&1) {
                let edge = (i.min(j), i.max(j));
                if bad.map_or(true, |b| edge < b) {
                    bad = Some(edge);
                }
            }
        }
        match bad {
            Some((i, j)) => Err(Error::OpenSurface(i, j)),
            None => Ok(()),
        }
    }

    fn check_gauss(&self) -> Result<()> {
        let residual = self.gauss_residual();
        if residual > 1e-8 * self.total_area() {
            return Err(Error::InvalidMesh(format!(
                "sum of area-weighted normals {residual:e} exceeds closedness tolerance"
            )));
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn centroids(&self) -> &[Vec3] {
        &self.centroids
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// `|Σ area·n|`; zero for a closed surface.
    pub fn gauss_residual(&self) -> f64 {
        self.areas
            .iter()
            .zip(&self.normals)
            .fold(Vec3::zeros(), |acc, (a, n)| acc + *a * n)
            .norm()
    }

    /// Volume by the divergence theorem, `(1/3) Σ c·n·area`.
    pub fn enclosed_volume(&self) -> f64 {
        self.centroids
            .iter()
            .zip(&self.normals)
            .zip(&self.areas)
            .map(|((c, n), a)| c.dot(n) * a)
            .sum::<f64>()
            / 3.0
    }

    /// Largest edge length of triangle `t`.
    pub fn triangle_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    /// Mesh size `sqrt(total area / triangle count)`.
    pub fn mesh_size(&self) -> f64 {
        (self.total_area() / self.len() as f64).sqrt()
    }

    /// Largest vertex-to-vertex distance. Exact up to 20k vertices; above that the
    /// bounding-box diagonal is returned, which bounds it from above.
    pub fn diameter(&self) -> f64 {
        if self.vertices.len() <= 20_000 {
            let mut best = 0.0f64;
            for (i, a) in self.vertices.iter().enumerate() {
                for b in &self.vertices[i + 1..] {
                    best = best.max((a - b).norm_squared());
                }
            }
            best.sqrt()
        } else {
            let (lo, hi) = self.vertices.iter().fold(
                (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
                |(lo, hi), v| (lo.inf(v), hi.sup(v)),
            );
            (hi - lo).norm()
        }
    }

    pub fn translated(&self, shift: Vec3) -> SurfaceMesh {
        self.map_vertices(|v| v + shift)
    }

    pub fn scaled(&self, factor: f64) -> SurfaceMesh {
        assert!(factor > 0.0, "scale factor must be positive");
        self.map_vertices(|v| v * factor)
    }

    fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> SurfaceMesh {
        let vertices = self.vertices.iter().map(f).collect();
        Self::build_unchecked(vertices, self.triangles.clone()).expect("affine image of a valid mesh")
    }

    fn flipped(self) -> SurfaceMesh {
        let triangles = self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self::build_unchecked(self.vertices, triangles).expect("flip of a valid mesh")
    }

    /// Splits every triangle into four at the edge midpoints (no projection).
    pub fn subdivided(&self) -> SurfaceMesh {
        let (vertices, triangles) = subdivide(&self.vertices, &self.triangles, |v| v);
        SurfaceMesh::new(vertices, triangles).expect("subdivision of a valid mesh")
    }

    /// Serializes as ASCII OFF with 17 significant digits.
    pub fn to_off(&self) -> String {
        let mut out = String::new();
        out.push_str("OFF\n");
        let _ = writeln!(out, "{} {} 0", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z);
        }
        for [a, b, c] in &self.triangles {
            let _ = writeln!(out, "3 {a} {b} {c}");
        }
        out
    }
}

fn subdivide(
    vertices: &[Vec3],
    triangles: &[[usize; 3]],
    project: impl Fn(Vec3) -> Vec3,
) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut vertices = vertices.to_vec();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |i: usize, j: usize, vertices: &mut Vec<Vec3>| -> usize {
        *midpoints.entry((i.min(j), i.max(j))).or_insert_with(|| {
            vertices.push(project(0.5 * (vertices[i] + vertices[j])));
            vertices.len() - 1
        })
    };
    let mut out = Vec::with_capacity(4 * triangles.len());
    for &[a, b, c] in triangles {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        out.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
    }
    (vertices, out)
}

fn icosphere(refinement: u32) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    if refinement > MAX_REFINEMENT {
        return Err(Error::InvalidArgument(format!(
            "refinement {refinement} outside [0, {MAX_REFINEMENT}]"
        )));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..refinement {
        let (v, t) = subdivide(&vertices, &triangles, |p| p.normalize());
        vertices = v;
        triangles = t;
    }
    Ok((vertices, triangles))
}

/// Icosphere: a subdivided icosahedron projected onto the sphere, `20·4^refinement` triangles.
pub fn make_sphere_mesh(radius: f64, refinement: u32) -> Result<SurfaceMesh> {
    make_ellipsoid_mesh(Vec3::repeat(radius), refinement)
}

/// Icosphere with its vertices scaled per axis.
pub fn make_ellipsoid_mesh(semi_axes: Vec3, refinement: u32) -> Result<SurfaceMesh> {
    if !semi_axes.iter().all(|&s| s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "semi-axes must be positive, got ({}, {}, {})",
            semi_axes.x, semi_axes.y, semi_axes.z
        )));
    }
    let (vertices, triangles) = icosphere(refinement)?;
    let vertices = vertices.into_iter().map(|v| v.component_mul(&semi_axes)).collect();
    SurfaceMesh::new(vertices, triangles)
}

/// Axis-aligned box centred at the origin, each face split into `divisions²` squares
/// of two triangles each.
pub fn make_box_mesh(sides: Vec3, divisions: usize) -> Result<SurfaceMesh> {
    if !sides.iter().all(|&s| s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument("box sides must be positive".into()));
    }
    if divisions == 0 {
        return Err(Error::InvalidArgument("box needs at least one division per edge".into()));
    }
    let n = divisions as i64;
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |p: [i64; 3], vertices: &mut Vec<Vec3>| -> usize {
        *index.entry(p).or_insert_with(|| {
            vertices.push(Vec3::new(
                (p[0] as f64 / n as f64 - 0.5) * sides.x,
                (p[1] as f64 / n as f64 - 0.5) * sides.y,
                (p[2] as f64 / n as f64 - 0.5) * sides.z,
            ));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::new();
    for axis in 0..3 {
        // (u, v, axis) is a right-handed triple.
        let u = (axis + 1) % 3;
        let v = (axis + 2) % 3;
        for side in [0, n] {
            for i in 0..n {
                for j in 0..n {
                    let at = |di: i64, dj: i64| {
                        let mut p = [0i64; 3];
                        p[axis] = side;
                        p[u] = i + di;
                        p[v] = j + dj;
                        p
                    };
                    let q = [at(0, 0), at(1, 0), at(1, 1), at(0, 1)].map(|p| vertex(p, &mut vertices));
                    if side == n {
                        triangles.push([q[0], q[1], q[2]]);
                        triangles.push([q[0], q[2], q[3]]);
                    } else {
                        triangles.push([q[0], q[2], q[1]]);
                        triangles.push([q[0], q[3], q[2]]);
                    }
                }
            }
        }
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Parses an ASCII OFF triangle mesh. Inward-oriented input is flipped as a whole.
pub fn load_off(text: &[u8]) -> Result<SurfaceMesh> {
    let text = std::str::from_utf8(text).map_err(|e| Error::MalformedOff {
        line: 0,
        msg: format!("not valid UTF-8: {e}"),
    })?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let malformed = |line: usize, msg: String| Error::MalformedOff { line, msg };
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| malformed(0, "empty input".into()))?;
    let mut header_tokens = header.split_whitespace();
    if header_tokens.next() != Some("OFF") {
        return Err(malformed(header_line, format!("expected 'OFF' header, found '{header}'")));
    }
    // Some exporters put the counts on the header line.
    let rest: Vec<&str> = header_tokens.collect();
    let (count_line, count_tokens) = if rest.is_empty() {
        let (n, l) = lines
            .next()
            .ok_or_else(|| malformed(header_line, "missing vertex/face counts".into()))?;
        (n, l.split_whitespace().collect::<Vec<_>>())
    } else {
        (header_line, rest)
    };
    if count_tokens.len() < 2 {
        return Err(malformed(count_line, "expected '<nv> <nf> <ne>'".into()));
    }
    let parse_count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| malformed(count_line, format!("invalid count '{s}'")))
    };
    let nv = parse_count(count_tokens[0])?;
    let nf = parse_count(count_tokens[1])?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, l) = lines
            .next()
            .ok_or_else(|| malformed(count_line, format!("expected {nv} vertices, found {}", vertices.len())))?;
        let coords: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|s| s.parse::<f64>().map_err(|_| malformed(n, format!("invalid coordinate '{s}'"))))
            .collect::<Result<_>>()?;
        if coords.len() != 3 {
            return Err(malformed(n, "vertex needs three coordinates".into()));
        }
        vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (n, l) = lines
            .next()
            .ok_or_else(|| malformed(count_line, format!("expected {nf} faces, found {}", triangles.len())))?;
        let ints: Vec<usize> = l
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|_| malformed(n, format!("invalid index '{s}'"))))
            .collect::<Result<_>>()?;
        match ints.first() {
            Some(3) if ints.len() >= 4 => {}
            Some(&k) if k != 3 => {
                return Err(malformed(n, format!("only triangles are supported, found a {k}-gon")))
            }
            _ => return Err(malformed(n, "face needs '3 i j k'".into())),
        }
        let tri = [ints[1], ints[2], ints[3]];
        if let Some(&bad) = tri.iter().find(|&&i| i >= nv) {
            return Err(malformed(n, format!("vertex index {bad} out of range")));
        }
        triangles.push(tri);
    }
    if let Some((n, _)) = lines.next() {
        return Err(malformed(n, "trailing data after the declared faces".into()));
    }

    let mesh = SurfaceMesh::build_unchecked(vertices, triangles)?;
    mesh.check_closed()?;
    let mesh = if mesh.enclosed_volume() < 0.0 { mesh.flipped() } else { mesh };
    mesh.check_gauss()?;
    if !(mesh.enclosed_volume() > 0.0) {
        return Err(Error::InvalidMesh("enclosed volume is zero".into()));
    }
    Ok(mesh)
}

/// A cavity shape that can be meshed at successive refinement levels.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    Ellipsoid { semi_axes: Vec3 },
    /// Axis-aligned box; level `l` uses `2^l` divisions per edge.
    Box { sides: Vec3 },
    /// A fixed polyhedron; level `l` is `l` flat midpoint subdivisions.
    Mesh(SurfaceMesh),
}

impl Shape {
    pub fn mesh(&self, level: u32) -> Result<SurfaceMesh> {
        match self {
            Shape::Sphere { radius } => make_sphere_mesh(*radius, level),
            Shape::Ellipsoid { semi_axes } => make_ellipsoid_mesh(*semi_axes, level),
            Shape::Box { sides } => {
                if level > MAX_REFINEMENT {
                    return Err(Error::InvalidArgument(format!("box level {level} too large")));
                }
                make_box_mesh(*sides, 1 << level)
            }
            Shape::Mesh(base) => {
                if level > MAX_REFINEMENT {
                    return Err(Error::InvalidArgument(format!("subdivision level {level} too large")));
                }
                let mut m = base.clone();
                for _ in 0..level {
                    m = m.subdivided();
                }
                Ok(m)
            }
        }
    }
}
