//! Writer for the Conic Benchmark Format (CBF, version 3).
//!
//! The dump describes the lowered [`StandardForm`]:
//!
//! * `VAR`: all variables free (`F`), program variables first, then the
//!   fill variables introduced by completion blocks.
//! * `CON`: scalar-cone rows `A x + b ∈ K` in the order `L=` (equalities),
//!   `L+` (nonnegative rows), then one `Q` block per second-order cone
//!   (first coordinate bounds the norm of the rest).
//! * `PSDCON`: one affine PSD constraint `Σ x_j H_j + D ⪰ 0` per PSD cone,
//!   entries given on the lower triangle in `HCOORD` / `DCOORD`.
//! * `OBJACOORD` / `OBJBCOORD`: the minimized linear objective.

use std::io::{self, Write};

use super::{triangle_order, ConeBlock, StandardForm};

pub fn write_cbf<W: Write>(sf: &StandardForm, mut w: W) -> io::Result<()> {
    writeln!(w, "VER\n3\n")?;
    writeln!(w, "OBJSENSE\nMIN\n")?;
    writeln!(w, "VAR\n{} 1\nF {}\n", sf.n_vars, sf.n_vars)?;

    let scalar: Vec<&ConeBlock> = sf
        .blocks
        .iter()
        .filter(|b| !matches!(b, ConeBlock::Psd { .. }) && !b.rows().is_empty())
        .collect();
    let n_rows: usize = scalar.iter().map(|b| b.rows().len()).sum();
    if n_rows > 0 {
        writeln!(w, "CON\n{} {}", n_rows, scalar.len())?;
        for b in &scalar {
            let tag = match b {
                ConeBlock::Zero(_) => "L=",
                ConeBlock::Nonneg(_) => "L+",
                _ => "Q",
            };
            writeln!(w, "{tag} {}", b.rows().len())?;
        }
        writeln!(w)?;
    }
    let psd: Vec<(usize, &[super::LinExpr])> = sf
        .blocks
        .iter()
        .filter_map(|b| match b {
            ConeBlock::Psd { dim, rows } => Some((*dim, rows.as_slice())),
            _ => None,
        })
        .collect();
    if !psd.is_empty() {
        writeln!(w, "PSDCON\n{}", psd.len())?;
        for (dim, _) in &psd {
            writeln!(w, "{dim}")?;
        }
        writeln!(w)?;
    }

    let obj: Vec<_> = sf.objective.iter().filter(|t| t.1 != 0.0).collect();
    if !obj.is_empty() {
        writeln!(w, "OBJACOORD\n{}", obj.len())?;
        for (j, c) in obj {
            writeln!(w, "{j} {c:e}")?;
        }
        writeln!(w)?;
    }
    if sf.objective_constant != 0.0 {
        writeln!(w, "OBJBCOORD\n{:e}\n", sf.objective_constant)?;
    }

    let rows = scalar.iter().flat_map(|b| b.rows());
    let (mut a, mut bvec) = (Vec::new(), Vec::new());
    for (r, e) in rows.enumerate() {
        for &(v, c) in &e.terms {
            a.push((r, v.0, c));
        }
        if e.constant != 0.0 {
            bvec.push((r, e.constant));
        }
    }
    if !a.is_empty() {
        writeln!(w, "ACOORD\n{}", a.len())?;
        for (r, j, c) in a {
            writeln!(w, "{r} {j} {c:e}")?;
        }
        writeln!(w)?;
    }
    if !bvec.is_empty() {
        writeln!(w, "BCOORD\n{}", bvec.len())?;
        for (r, c) in bvec {
            writeln!(w, "{r} {c:e}")?;
        }
        writeln!(w)?;
    }

    let (mut h, mut d) = (Vec::new(), Vec::new());
    for (k, (dim, rows)) in psd.iter().enumerate() {
        for ((i, j), e) in triangle_order(*dim).zip(rows.iter()) {
            // CBF lists the lower triangle: row index ≥ column index.
            for &(v, c) in &e.terms {
                h.push((k, v.0, j, i, c));
            }
            if e.constant != 0.0 {
                d.push((k, j, i, e.constant));
            }
        }
    }
    if !h.is_empty() {
        writeln!(w, "HCOORD\n{}", h.len())?;
        for (k, v, r, c, x) in h {
            writeln!(w, "{k} {v} {r} {c} {x:e}")?;
        }
        writeln!(w)?;
    }
    if !d.is_empty() {
        writeln!(w, "DCOORD\n{}", d.len())?;
        for (k, r, c, x) in d {
            writeln!(w, "{k} {r} {c} {x:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
