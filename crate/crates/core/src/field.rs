//! Nodal scalar fields and per-triangle vector fields with role tags.

use crate::error::{MatmiError, Result};
use crate::mesh::Mesh;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarRole {
    Conductivity,
    Potential,
    StreamFunction,
    Source,
    OrthogonalPotential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorRole {
    Current,
    VectorPotential,
    OrthogonalField,
    Gradient,
}

impl ScalarRole {
    pub fn tag(self) -> &'static str {
        match self {
            ScalarRole::Conductivity => "conductivity",
            ScalarRole::Potential => "potential",
            ScalarRole::StreamFunction => "stream-function",
            ScalarRole::Source => "source",
            ScalarRole::OrthogonalPotential => "orthogonal-potential",
        }
    }
    pub fn from_tag(s: &str) -> Option<Self> {
        [
            ScalarRole::Conductivity,
            ScalarRole::Potential,
            ScalarRole::StreamFunction,
            ScalarRole::Source,
            ScalarRole::OrthogonalPotential,
        ]
        .into_iter()
        .find(|r| r.tag() == s)
    }
}

impl VectorRole {
    pub fn tag(self) -> &'static str {
        match self {
            VectorRole::Current => "current",
            VectorRole::VectorPotential => "vector-potential",
            VectorRole::OrthogonalField => "orthogonal-field",
            VectorRole::Gradient => "gradient",
        }
    }
    pub fn from_tag(s: &str) -> Option<Self> {
        [
            VectorRole::Current,
            VectorRole::VectorPotential,
            VectorRole::OrthogonalField,
            VectorRole::Gradient,
        ]
        .into_iter()
        .find(|r| r.tag() == s)
    }
}

/// Piecewise-linear field stored at mesh nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub role: ScalarRole,
    pub values: Vec<f64>,
}

/// Piecewise-constant vector field stored per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub role: VectorRole,
    pub values: Vec<[f64; 2]>,
}

impl ScalarField {
    pub fn new(role: ScalarRole, values: Vec<f64>) -> Self {
        Self { role, values }
    }

    pub fn from_fn(mesh: &Mesh, role: ScalarRole, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self {
            role,
            values: mesh.nodes().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.values.len() != mesh.num_nodes() {
            return Err(MatmiError::Usage(format!(
                "{} field has {} values but the mesh has {} nodes",
                self.role.tag(),
                self.values.len(),
                mesh.num_nodes()
            )));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "matmi-field v1")?;
        writeln!(w, "{}", self.role.tag())?;
        writeln!(w, "{}", self.values.len())?;
        for v in &self.values {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = crate::io::Lines::new(r);
        lines.expect_header("matmi-field v1")?;
        let tag = lines.next_line()?;
        let role = ScalarRole::from_tag(&tag)
            .ok_or_else(|| MatmiError::Format(format!("'{tag}' is not a scalar field role")))?;
        let n = lines.count("value count")?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(lines.floats(1)?[0]);
        }
        Ok(Self { role, values })
    }
}

impl VectorField {
    pub fn new(role: VectorRole, values: Vec<[f64; 2]>) -> Self {
        Self { role, values }
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.values.len() != mesh.num_triangles() {
            return Err(MatmiError::Usage(format!(
                "{} field has {} values but the mesh has {} triangles",
                self.role.tag(),
                self.values.len(),
                mesh.num_triangles()
            )));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "matmi-field v1")?;
        writeln!(w, "{}", self.role.tag())?;
        writeln!(w, "{}", self.values.len())?;
        for v in &self.values {
            writeln!(w, "{:e} {:e}", v[0], v[1])?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = crate::io::Lines::new(r);
        lines.expect_header("matmi-field v1")?;
        let tag = lines.next_line()?;
        let role = VectorRole::from_tag(&tag)
            .ok_or_else(|| MatmiError::Format(format!("'{tag}' is not a vector field role")))?;
        let n = lines.count("value count")?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let v = lines.floats(2)?;
            values.push([v[0], v[1]]);
        }
        Ok(Self { role, values })
    }
}
