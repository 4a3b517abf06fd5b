//! `BTNFIELD v1` field snapshots: one ASCII header line
//! `BTNFIELD v1 <nx> <ny> <lx> <ly>` followed by `nx*ny` little-endian `f64`
//! values in row-major node order. Lengths are printed in shortest
//! round-trip form so a snapshot reloads bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Grid, ScalarField};
use crate::error::{BtnError, Result};

const MAGIC: &str = "BTNFIELD";
const VERSION: &str = "v1";

pub fn write_field<W: Write>(field: &ScalarField, mut out: W) -> Result<()> {
    let g = field.grid();
    writeln!(
        out,
        "{MAGIC} {VERSION} {} {} {:?} {:?}",
        g.nx(),
        g.ny(),
        g.lx(),
        g.ly()
    )?;
    let mut bytes = Vec::with_capacity(8 * g.len());
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn read_field<R: Read>(input: R) -> Result<ScalarField> {
    let mut reader = BufReader::new(input);
    let mut header = Vec::new();
    reader.read_until(b'\n', &mut header)?;
    let header = std::str::from_utf8(&header)
        .map_err(|_| BtnError::Format("header is not UTF-8".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != MAGIC {
        return Err(BtnError::Format(format!("bad header {:?}", header.trim_end())));
    }
    if parts[1] != VERSION {
        return Err(BtnError::Format(format!("unsupported version {}", parts[1])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| BtnError::Format(format!("bad node count {s:?}")))
    };
    let len = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| BtnError::Format(format!("bad length {s:?}")))
    };
    let grid = Grid::new(num(parts[2])?, num(parts[3])?, len(parts[4])?, len(parts[5])?)?;

    let mut bytes = vec![0u8; 8 * grid.len()];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| BtnError::Format("truncated payload".into()))?;
    if reader.read(&mut [0u8; 1])? != 0 {
        return Err(BtnError::Format("trailing bytes after payload".into()));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ScalarField::from_values(grid, values)
}

pub fn save_field(field: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    write_field(field, BufWriter::new(File::create(path)?))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    read_field(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let g = Grid::new(3, 4, 1.0, 0.1).unwrap();
        let f = ScalarField::zeros(g);
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let header_end = buf.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(&buf[..header_end], b"BTNFIELD v1 3 4 1.0 0.1");
        assert_eq!(buf.len() - header_end - 1, 8 * 12);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_field(&b"NOTAFIELD v1 3 3 1 1\n"[..]).is_err());
        assert!(read_field(&b"BTNFIELD v2 3 3 1 1\n"[..]).is_err());
        let mut short = b"BTNFIELD v1 3 3 1 1\n".to_vec();
        short.extend_from_slice(&[0u8; 16]);
        assert!(read_field(&short[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            nx in 3usize..9,
            ny in 3usize..9,
            lx in 1e-3f64..1e3,
            ly in 1e-3f64..1e3,
            seed in proptest::collection::vec(-1e300f64..1e300, 81),
        ) {
            let g = Grid::new(nx, ny, lx, ly).unwrap();
            let f = ScalarField::from_values(g, seed[..g.len()].to_vec()).unwrap();
            let mut buf = Vec::new();
            write_field(&f, &mut buf).unwrap();
            let back = read_field(&buf[..]).unwrap();
            prop_assert_eq!(back.grid(), f.grid());
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
