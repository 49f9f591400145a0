use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

/// Indexed triangle mesh. Triangles are wound counter-clockwise seen from
/// the side of lower field values.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub iso_value: f64,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn corners(&self, t: &[u32; 3]) -> [[f64; 3]; 3] {
        t.map(|v| self.vertices[v as usize])
    }

    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                let n = cross(sub(b, a), sub(c, a));
                0.5 * dot(n, n).sqrt()
            })
            .sum()
    }

    /// Enclosed volume; positive when normals point outward.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Every directed edge is matched by exactly one opposite edge.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                *directed.entry((t[e], t[(e + 1) % 3])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// `V - E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
                used[a as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Wavefront OBJ with `v` and `f` records only.
    pub fn write_obj<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# iso {}", self.iso_value)?;
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    pub fn to_obj_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_obj(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriangleMesh {
        TriangleMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
            iso_value: 0.0,
        }
    }

    #[test]
    fn tetrahedron_measures() {
        let m = tetrahedron();
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-12);
        let want = 1.5 + 3f64.sqrt() / 2.0;
        assert!((m.area() - want).abs() < 1e-12);
    }

    #[test]
    fn open_mesh_detected() {
        let mut m = tetrahedron();
        m.triangles.pop();
        assert!(!m.is_watertight());
        let obj = String::from_utf8(m.to_obj_bytes()).unwrap();
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 3);
        assert!(obj.contains("f 1 2 4"));
    }
}
