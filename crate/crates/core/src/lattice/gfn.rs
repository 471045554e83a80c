//! GFN files: raw little-endian `f64` node values in row-major order, with a
//! JSON sidecar at `<file>.json` holding the grid metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Grid, GridFunction, Role};
use crate::error::{Error, Result};

pub const FORMAT: &str = "gfn";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GfnMeta {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub bounds: Vec<(f64, f64)>,
    pub h: f64,
    pub shape: Vec<usize>,
    pub role: Role,
}

impl GfnMeta {
    pub fn of(u: &GridFunction) -> GfnMeta {
        let g = u.grid();
        GfnMeta {
            format: FORMAT.into(),
            version: VERSION,
            dim: g.dim(),
            bounds: g.bounds(),
            h: g.h(),
            shape: g.shape().to_vec(),
            role: u.role(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode(u: &GridFunction) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(8 * u.values().len());
    for v in u.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn decode(meta: &GfnMeta, bytes: &[u8]) -> Result<GridFunction> {
    if meta.format != FORMAT || meta.version != VERSION {
        return Err(Error::GridMismatch(format!(
            "unsupported format {} v{}",
            meta.format, meta.version
        )));
    }
    if meta.bounds.len() != meta.dim {
        return Err(Error::GridMismatch("bounds do not match dim".into()));
    }
    let grid = Grid::new(&meta.bounds, meta.h)?;
    if grid.shape() != meta.shape.as_slice() {
        return Err(Error::GridMismatch(format!(
            "declared shape {:?} but bounds and h give {:?}",
            meta.shape,
            grid.shape()
        )));
    }
    if bytes.len() != 8 * grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} bytes for {} nodes",
            bytes.len(),
            grid.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    GridFunction::new(grid, values, meta.role)
}

/// Writes `path` and its sidecar.
pub fn write(u: &GridFunction, path: &Path) -> Result<()> {
    fs::write(path, encode(u))?;
    let meta = serde_json::to_string_pretty(&GfnMeta::of(u))?;
    fs::write(sidecar_path(path), meta + "\n")?;
    Ok(())
}

pub fn read(path: &Path) -> Result<GridFunction> {
    let meta: GfnMeta = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    decode(&meta, &fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid, sample};
    use proptest::prelude::*;

    #[test]
    fn sidecar_is_readable_json() {
        let g = make_grid(&[(-1.0, 1.0), (0.0, 0.5)], 0.125).unwrap();
        let u = sample(|x| x[1] * x[1], &g, Role::U).unwrap();
        let meta = serde_json::to_value(GfnMeta::of(&u)).unwrap();
        assert_eq!(meta["dim"], 2);
        assert_eq!(meta["role"], "u");
        assert_eq!(meta["shape"], serde_json::json!([17, 5]));
    }

    #[test]
    fn rejects_truncated_payload() {
        let g = make_grid(&[(0.0, 1.0), (0.0, 1.0)], 0.25).unwrap();
        let u = GridFunction::zeros(&g, Role::Signed);
        let bytes = encode(&u);
        assert!(decode(&GfnMeta::of(&u), &bytes[..bytes.len() - 8]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn round_trip_is_bit_exact(
            lo0 in -3.0f64..0.0,
            lo1 in -3.0f64..0.0,
            n0 in 1usize..12,
            n1 in 1usize..12,
            n2 in 0usize..6,
            h in 0.01f64..0.7,
            seed in any::<u64>(),
        ) {
            let mut bounds = vec![(lo0, lo0 + n0 as f64 * h), (lo1, lo1 + n1 as f64 * h)];
            if n2 > 0 {
                bounds.push((0.1, 0.1 + n2 as f64 * h));
            }
            let g = match Grid::new(&bounds, h) {
                Ok(g) => g,
                Err(_) => return Ok(()),
            };
            let mut state = seed;
            let values: Vec<f64> = (0..g.len())
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    f64::from_bits((state >> 12) | 0x3ff0_0000_0000_0000) - 1.5
                })
                .collect();
            let u = GridFunction::new(g, values, Role::Signed).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("field.gfn");
            write(&u, &path).unwrap();
            let back = read(&path).unwrap();
            prop_assert_eq!(back.grid(), u.grid());
            prop_assert_eq!(back.role(), u.role());
            for (a, b) in back.values().iter().zip(u.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
