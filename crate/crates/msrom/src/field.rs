//! High-contrast permeability fields, one positive value per fine cell.
//!
//! The generator produces a deterministic arrangement of channels and blocky
//! inclusions controlled by a seed; the file format is plain text so fields
//! can be produced or inspected with external tools.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::FineMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField {
    pub nx: usize,
    pub ny: usize,
    /// One value per fine cell, row-major (x fastest).
    pub values: Vec<f64>,
}

impl PermeabilityField {
    pub fn constant(fine: &FineMesh, value: f64) -> Self {
        PermeabilityField {
            nx: fine.nx,
            ny: fine.ny,
            values: vec![value; fine.n_cells()],
        }
    }

    #[inline]
    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn contrast(&self) -> f64 {
        self.max() / self.min()
    }

    pub fn matches(&self, fine: &FineMesh) -> bool {
        self.nx == fine.nx && self.ny == fine.ny
    }
}

/// Deterministic channelized field: background 1, channels and inclusions at
/// `contrast`. At least one channel spans the full domain width. Row 0 of
/// cells is always left at the background value so min = 1.
pub fn generate_channelized(
    fine: &FineMesh,
    contrast: f64,
    layout_seed: u64,
) -> Result<PermeabilityField> {
    if !(contrast >= 1.0) {
        return Err(Error::config(format!(
            "permeability contrast must be >= 1, got {contrast}"
        )));
    }
    let (nx, ny) = (fine.nx, fine.ny);
    let mut values = vec![1.0; nx * ny];
    if contrast == 1.0 {
        return Ok(PermeabilityField { nx, ny, values });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(layout_seed);
    // Thin features (one fine cell per 1/64 of the domain) kept away from the
    // boundary strip: high-permeability cells flush against the Dirichlet
    // boundary create fine-scale layers no coarse space can represent.
    let thick = (ny / 64).max(1);
    let margin = (ny / 8).max(2);
    let paint = |i0: usize, i1: usize, j0: usize, j1: usize, values: &mut Vec<f64>| {
        for j in j0..j1.min(ny) {
            for i in i0..i1.min(nx) {
                values[j * nx + i] = contrast;
            }
        }
    };

    if ny <= 2 * margin + 2 * thick + 2 || nx <= 2 * margin + 2 * thick + 2 {
        // Mesh too small for structured features; single centered inclusion.
        paint(nx / 2, nx / 2 + 1, ny / 2, ny / 2 + 1, &mut values);
        return Ok(PermeabilityField { nx, ny, values });
    }

    // Guaranteed full-width channel.
    let j_main = rng.random_range(margin..ny - margin - thick);
    paint(0, nx, j_main, j_main + thick, &mut values);

    // One partial horizontal channel, vertically separated from the main one.
    let mut j_part;
    loop {
        j_part = rng.random_range(margin..ny - margin - thick);
        if j_part.abs_diff(j_main) > 2 * margin / 3 {
            break;
        }
    }
    let len = rng.random_range(nx / 3..2 * nx / 3);
    let i0 = rng.random_range(margin..nx - margin - len.min(nx - 2 * margin - 1));
    paint(i0, i0 + len, j_part, j_part + thick, &mut values);

    // One partial vertical channel.
    let i_v = rng.random_range(margin..nx - margin - thick);
    let vlen = rng.random_range(ny / 4..ny / 2);
    let j0 = rng.random_range(margin..ny - margin - vlen.min(ny - 2 * margin - 1));
    paint(i_v, i_v + thick, j0, j0 + vlen, &mut values);

    // A few small blocky inclusions.
    for _ in 0..3 {
        let w = rng.random_range(nx / 32..(nx / 12).max(nx / 32 + 1)).max(1);
        let h = rng.random_range(ny / 32..(ny / 12).max(ny / 32 + 1)).max(1);
        let i0 = rng.random_range(margin..nx - margin - w);
        let j0 = rng.random_range(margin..ny - margin - h);
        paint(i0, i0 + w, j0, j0 + h, &mut values);
    }

    Ok(PermeabilityField { nx, ny, values })
}

/// Write a field in the documented text format: header `nx ny`, then ny rows
/// of nx values, row-major.
pub fn save_field(field: &PermeabilityField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", field.nx, field.ny));
    for j in 0..field.ny {
        let row: Vec<String> = (0..field.nx)
            .map(|i| format!("{}", field.values[j * field.nx + i]))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<PermeabilityField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_field(&text, path)
}

fn parse_field(text: &str, path: &Path) -> Result<PermeabilityField> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: msg,
    };
    let mut lines = text.lines().enumerate();
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty field file".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(hline + 1, format!("expected header `nx ny`, got `{header}`")));
    }
    let nx: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(hline + 1, format!("bad nx `{}`", dims[0])))?;
    let ny: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(hline + 1, format!("bad ny `{}`", dims[1])))?;
    let expected = nx * ny;
    let mut values = Vec::with_capacity(expected);
    let mut last_line = hline + 1;
    for (lno, line) in lines {
        last_line = lno + 1;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(lno + 1, format!("bad value `{tok}`")))?;
            if !(v > 0.0) {
                return Err(parse_err(lno + 1, format!("non-positive permeability {v}")));
            }
            values.push(v);
            if values.len() > expected {
                return Err(parse_err(
                    lno + 1,
                    format!("too many values: header promises {expected}"),
                ));
            }
        }
    }
    if values.len() != expected {
        return Err(parse_err(
            last_line,
            format!("value count mismatch: header promises {expected}, found {}", values.len()),
        ));
    }
    Ok(PermeabilityField { nx, ny, values })
}
