use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// File magic for cached matrices: 8 bytes, versioned in the last byte.
const MAGIC: &[u8; 8] = b"GFMATRX1";

/// Persist a matrix as magic + u64 row/col header + row-major little-endian
/// float64 payload.
pub fn write_matrix(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MAGIC)?;
    file.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    file.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    for &x in matrix.iter() {
        file.write_all(&x.to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: format!("{}: not a cached matrix (bad magic)", path.display()),
        });
    }
    let mut word = [0u8; 8];
    file.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    file.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        file.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))
}
