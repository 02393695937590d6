//! On-disk layouts for grid maps.
//!
//! Binary (all little-endian): magic `TORGRID1`, `u64` resolution `N`, four
//! `i64` entries `a b c d` of the integer part `[[a, b], [c, d]]`, then `N²`
//! pairs of `f64` `(ux, uy)` for node `(i/N, j/N)` in row-major order (`j`
//! outer, `i` inner).
//!
//! CSV: a line `# N,a,b,c,d`, the header `N,a,b,c,d` values, a line
//! `i,j,ux,uy`, then one line per node in the same order. Floats are written
//! in shortest round-trip form, so re-import is exact.

use std::io::{self, BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FoliationError, GridHomeomorphism};
use crate::geom::Vec2;
use crate::homology::IntMatrix;

pub const MAGIC: &[u8; 8] = b"TORGRID1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridFormat {
    Csv,
    Binary,
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a grid file (bad magic)")]
    BadMagic,
    #[error("malformed grid file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("stored linear part is not unimodular")]
    Matrix,
    #[error(transparent)]
    Grid(#[from] FoliationError),
}

pub fn write_grid(w: &mut impl Write, g: &GridHomeomorphism, format: GridFormat) -> Result<(), FormatError> {
    let a = g.linear();
    let n = g.resolution();
    match format {
        GridFormat::Binary => {
            let mut buf = Vec::with_capacity(48 + 16 * n * n);
            buf.extend_from_slice(MAGIC);
            buf.extend_from_slice(&(n as u64).to_le_bytes());
            for e in [a.a, a.b, a.c, a.d] {
                buf.extend_from_slice(&e.to_le_bytes());
            }
            for u in g.displacements() {
                buf.extend_from_slice(&u.x.to_le_bytes());
                buf.extend_from_slice(&u.y.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        GridFormat::Csv => {
            let mut s = String::with_capacity(48 * n * n + 64);
            s.push_str("# N,a,b,c,d\n");
            s.push_str(&format!("{},{},{},{},{}\n", n, a.a, a.b, a.c, a.d));
            s.push_str("i,j,ux,uy\n");
            for (k, u) in g.displacements().iter().enumerate() {
                s.push_str(&format!("{},{},{},{}\n", k % n, k / n, u.x, u.y));
            }
            w.write_all(s.as_bytes())?;
        }
    }
    Ok(())
}

fn finish(n: usize, m: [i64; 4], disp: Vec<Vec2>) -> Result<GridHomeomorphism, FormatError> {
    let a = IntMatrix::new(m[0], m[1], m[2], m[3]).map_err(|_| FormatError::Matrix)?;
    Ok(GridHomeomorphism::new(n, a, disp)?)
}

pub fn read_grid(r: &mut impl Read, format: GridFormat) -> Result<GridHomeomorphism, FormatError> {
    match format {
        GridFormat::Binary => {
            let mut head = [0u8; 48];
            r.read_exact(&mut head)?;
            if &head[..8] != MAGIC {
                return Err(FormatError::BadMagic);
            }
            let word = |k: usize| <[u8; 8]>::try_from(&head[8 * k..8 * k + 8]).unwrap();
            let n = u64::from_le_bytes(word(1)) as usize;
            let m = [2, 3, 4, 5].map(|k| i64::from_le_bytes(word(k)));
            let count = n.checked_mul(n).ok_or(FormatError::Parse {
                line: 0,
                msg: "resolution overflow".into(),
            })?;
            let mut body = Vec::new();
            r.read_to_end(&mut body)?;
            if body.len() != 16 * count {
                return Err(FormatError::Parse {
                    line: 0,
                    msg: format!("expected {} payload bytes, found {}", 16 * count, body.len()),
                });
            }
            let f = |b: &[u8]| f64::from_le_bytes(<[u8; 8]>::try_from(b).unwrap());
            let disp = body.chunks_exact(16).map(|c| Vec2::new(f(&c[..8]), f(&c[8..]))).collect();
            finish(n, m, disp)
        }
        GridFormat::Csv => {
            let reader = BufReader::new(r);
            let mut n = None;
            let mut m = [0i64; 4];
            let mut disp = Vec::new();
            let bad = |line: usize, msg: &str| FormatError::Parse {
                line,
                msg: msg.to_string(),
            };
            let mut data_rows = 0usize;
            for (ln, line) in reader.lines().enumerate() {
                let line = line?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') || t.starts_with("i,") {
                    continue;
                }
                let fields: Vec<&str> = t.split(',').map(str::trim).collect();
                match n {
                    None => {
                        if fields.len() != 5 {
                            return Err(bad(ln + 1, "header needs N,a,b,c,d"));
                        }
                        let size: usize = fields[0].parse().map_err(|_| bad(ln + 1, "bad N"))?;
                        for k in 0..4 {
                            m[k] = fields[k + 1].parse().map_err(|_| bad(ln + 1, "bad matrix entry"))?;
                        }
                        n = Some(size);
                        disp = vec![Vec2::new(f64::NAN, f64::NAN); size * size];
                    }
                    Some(size) => {
                        if fields.len() != 4 {
                            return Err(bad(ln + 1, "row needs i,j,ux,uy"));
                        }
                        let i: usize = fields[0].parse().map_err(|_| bad(ln + 1, "bad i"))?;
                        let j: usize = fields[1].parse().map_err(|_| bad(ln + 1, "bad j"))?;
                        if i >= size || j >= size {
                            return Err(bad(ln + 1, "node index out of range"));
                        }
                        let ux: f64 = fields[2].parse().map_err(|_| bad(ln + 1, "bad ux"))?;
                        let uy: f64 = fields[3].parse().map_err(|_| bad(ln + 1, "bad uy"))?;
                        disp[j * size + i] = Vec2::new(ux, uy);
                        data_rows += 1;
                    }
                }
            }
            let n = n.ok_or_else(|| bad(0, "missing header"))?;
            if data_rows != n * n {
                return Err(bad(0, &format!("expected {} rows, found {}", n * n, data_rows)));
            }
            finish(n, m, disp)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_roundtrips_both_ways() {
        let g = GridHomeomorphism::identity(8);
        for fmt in [GridFormat::Binary, GridFormat::Csv] {
            let mut buf = Vec::new();
            write_grid(&mut buf, &g, fmt).unwrap();
            let h = read_grid(&mut buf.as_slice(), fmt).unwrap();
            assert_eq!(h.displacements(), g.displacements());
            assert_eq!(h.linear(), g.linear());
        }
    }

    #[test]
    fn binary_layout_is_documented() {
        let g = GridHomeomorphism::dehn_twist(4, 0.25, 0.75).unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, &g, GridFormat::Binary).unwrap();
        assert_eq!(buf.len(), 48 + 16 * 16);
        assert_eq!(&buf[..8], b"TORGRID1");
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 4);
        assert_eq!(i64::from_le_bytes(buf[24..32].try_into().unwrap()), 1);
        let node1 = g.node_displacement(1, 0);
        assert_eq!(f64::from_le_bytes(buf[64..72].try_into().unwrap()), node1.x);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        assert!(matches!(
            read_grid(&mut &b"NOTAGRIDxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx"[..], GridFormat::Binary),
            Err(FormatError::BadMagic)
        ));
        let csv = "# N,a,b,c,d\n2,1,0,0,1\ni,j,ux,uy\n0,0,0,0\n";
        assert!(matches!(
            read_grid(&mut csv.as_bytes(), GridFormat::Csv),
            Err(FormatError::Parse { .. })
        ));
    }
}
