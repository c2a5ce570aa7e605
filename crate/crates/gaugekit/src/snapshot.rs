//! Plain-text snapshots of lattice fields.
//!
//! This file is the in-repo documentation of the exchange format. A snapshot
//! is a CSV document with two header lines followed by one data row per
//! lattice cell:
//!
//! ```text
//! manifold_id,dims,degree,group_id
//! torus2,8x8,1,U1
//! 0,0.102,...                      <- row-major cells, components interleaved
//! ```
//!
//! * `manifold_id` — base grid kind: `torus2`, `torus4` or `sphere2`.
//! * `dims` — extents of the stored region joined by `x`, slowest axis
//!   first; a snapshot may cover a chart region rather than the whole grid.
//! * `degree` — form degree of the stored field; group-valued maps are
//!   stored with degree 0.
//! * `group_id` — `U1` or `SU2`.
//!
//! Data rows follow in row-major cell order. Each form component contributes
//! the complex coordinates of its value in component order, every complex
//! number as a `re,im` pair, so a row holds
//! `num_form_components × group_components × 2` numbers. Floats print in
//! Rust's shortest round-trip notation, which makes write → read → write
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Domain, FormField, GroupField};
use crate::grid::GridKind;
use crate::lie::{AlgebraElement, GroupElement, GroupId};

/// An exported field: the header metadata plus one value row per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    /// Base grid kind the field was sampled on.
    pub manifold_id: GridKind,
    /// Extents of the stored region, row-major.
    pub dims: Vec<usize>,
    /// Form degree; 0 for group-valued maps.
    pub degree: usize,
    /// Structure group of the values.
    pub group_id: GroupId,
    /// One entry per cell in row-major order; each entry holds the
    /// components of all stored values at that cell, interleaved.
    pub rows: Vec<Vec<Complex64>>,
}

fn kind_name(kind: GridKind) -> &'static str {
    match kind {
        GridKind::Torus2 => "torus2",
        GridKind::Torus4 => "torus4",
        GridKind::Sphere2 => "sphere2",
    }
}

fn kind_from_name(name: &str) -> Option<GridKind> {
    match name {
        "torus2" => Some(GridKind::Torus2),
        "torus4" => Some(GridKind::Torus4),
        "sphere2" => Some(GridKind::Sphere2),
        _ => None,
    }
}

fn group_from_name(name: &str) -> Option<GroupId> {
    match name {
        "U1" => Some(GroupId::U1),
        "SU2" => Some(GroupId::Su2),
        _ => None,
    }
}

impl FieldSnapshot {
    /// Captures a group-valued map (stored with degree 0).
    pub fn of_group_field(f: &GroupField) -> FieldSnapshot {
        let rows = (0..f.domain.num_points()).map(|p| f.value(p).components()).collect();
        FieldSnapshot {
            manifold_id: f.domain.grid.kind,
            dims: f.domain.region.len.clone(),
            degree: 0,
            group_id: f.group,
            rows,
        }
    }

    /// Captures an algebra-valued differential form.
    pub fn of_form_field(f: &FormField) -> FieldSnapshot {
        let comps = f.num_form_comps();
        let rows = (0..f.domain.num_points())
            .map(|p| {
                let mut row = Vec::new();
                for c in 0..comps {
                    row.extend(f.value(p, c).components());
                }
                row
            })
            .collect();
        FieldSnapshot {
            manifold_id: f.domain.grid.kind,
            dims: f.domain.region.len.clone(),
            degree: f.degree,
            group_id: f.group,
            rows,
        }
    }

    /// Renders the snapshot in the CSV format documented at module level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("manifold_id,dims,degree,group_id\n");
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            kind_name(self.manifold_id),
            dims.join("x"),
            self.degree,
            self.group_id.name()
        );
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                let _ = write!(out, "{},{}", v.re, v.im);
                first = false;
            }
            out.push('\n');
        }
        out
    }

    /// Parses a snapshot from the CSV format documented at module level.
    pub fn from_csv(text: &str) -> Result<FieldSnapshot> {
        let mut lines = text.lines().enumerate();
        let (_, names) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty snapshot".into(),
        })?;
        if names.trim() != "manifold_id,dims,degree,group_id" {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected snapshot header {names:?}"),
            });
        }
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 2,
            msg: "missing snapshot header record".into(),
        })?;
        let parts: Vec<&str> = header.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: 2,
                msg: format!("expected 4 header fields, got {}", parts.len()),
            });
        }
        let manifold_id = kind_from_name(parts[0]).ok_or_else(|| Error::Parse {
            line: 2,
            msg: format!("unknown manifold_id {:?}", parts[0]),
        })?;
        let dims = parts[1]
            .split('x')
            .map(|d| {
                d.parse::<usize>().map_err(|e| Error::Parse {
                    line: 2,
                    msg: format!("bad extent {d:?}: {e}"),
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::Parse {
                line: 2,
                msg: format!("degenerate dims {:?}", parts[1]),
            });
        }
        let degree = parts[2].parse::<usize>().map_err(|e| Error::Parse {
            line: 2,
            msg: format!("bad degree {:?}: {e}", parts[2]),
        })?;
        let group_id = group_from_name(parts[3]).ok_or_else(|| Error::Parse {
            line: 2,
            msg: format!("unknown group_id {:?}", parts[3]),
        })?;
        let cells: usize = dims.iter().product();
        let mut rows = Vec::with_capacity(cells);
        let mut width = None;
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let numbers = line
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: idx + 1,
                        msg: format!("bad number {v:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if numbers.len() % 2 != 0 {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("odd value count {}; re,im pairs expected", numbers.len()),
                });
            }
            match width {
                None => width = Some(numbers.len()),
                Some(w) if w != numbers.len() => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("row has {} values, earlier rows had {w}", numbers.len()),
                    });
                }
                _ => {}
            }
            rows.push(numbers.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect());
        }
        if rows.len() != cells {
            return Err(Error::Parse {
                line: text.lines().count(),
                msg: format!("expected {cells} data rows for dims {dims:?}, got {}", rows.len()),
            });
        }
        Ok(FieldSnapshot { manifold_id, dims, degree, group_id, rows })
    }

    /// Writes the CSV rendering to a file.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Reads a snapshot file.
    pub fn load(path: &Path) -> Result<FieldSnapshot> {
        FieldSnapshot::from_csv(&fs::read_to_string(path)?)
    }

    fn check_domain(&self, domain: &Domain, expect_degree: usize) -> Result<()> {
        if domain.grid.kind != self.manifold_id || domain.region.len != self.dims {
            return Err(Error::DomainMismatch {
                reason: format!(
                    "snapshot of {} region {:?} cannot land on a {} region {:?}",
                    kind_name(self.manifold_id),
                    self.dims,
                    kind_name(domain.grid.kind),
                    domain.region.len
                ),
            });
        }
        if self.degree != expect_degree {
            return Err(Error::DomainMismatch {
                reason: format!("snapshot has degree {}, expected {expect_degree}", self.degree),
            });
        }
        Ok(())
    }

    /// Rebuilds a group-valued map on the given domain. The snapshot is
    /// trusted data: values are reinstated from their components verbatim,
    /// without re-projection onto the group.
    pub fn group_field(&self, domain: &Domain) -> Result<GroupField> {
        self.check_domain(domain, 0)?;
        let want = self.group_id.components();
        let mut out = GroupField::identity(domain.clone(), self.group_id);
        for (p, row) in self.rows.iter().enumerate() {
            if row.len() != want {
                return Err(Error::DomainMismatch {
                    reason: format!(
                        "cell {p} holds {} components, a {} group value needs {want}",
                        row.len(),
                        self.group_id.name()
                    ),
                });
            }
            out.set_value(p, &GroupElement::from_components(self.group_id, row));
        }
        Ok(out)
    }

    /// Rebuilds an algebra-valued form on the given domain.
    pub fn form_field(&self, domain: &Domain) -> Result<FormField> {
        self.check_domain(domain, self.degree)?;
        let mut out = FormField::zeros(domain.clone(), self.group_id, self.degree);
        let comps = out.num_form_comps();
        let per = self.group_id.components();
        for (p, row) in self.rows.iter().enumerate() {
            if row.len() != comps * per {
                return Err(Error::DomainMismatch {
                    reason: format!(
                        "cell {p} holds {} components, a degree-{} {} form needs {}",
                        row.len(),
                        self.degree,
                        self.group_id.name(),
                        comps * per
                    ),
                });
            }
            for c in 0..comps {
                let v = AlgebraElement::from_components(
                    self.group_id,
                    &row[c * per..(c + 1) * per],
                );
                out.set_value(p, c, &v);
            }
        }
        Ok(out)
    }
}
