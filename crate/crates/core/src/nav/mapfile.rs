//! `MARVINMAP v1` map files.
//!
//! ```text
//! MARVINMAP v1
//! width 40
//! height 30
//! resolution 0.05
//! origin -1 -1 0
//! data
//! <width*height bytes, row-major from cell (0, 0)>
//! ```
//!
//! Cell bytes are 0 (free), 100 (occupied) and 255 (unknown). Header values
//! are written in shortest round-trip form, so a reload is bit-exact. The
//! origin yaw must be zero.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Cell, OccupancyGrid};
use crate::nav::mapper::MapperState;

pub const MAGIC: &str = "MARVINMAP v1";

fn cell_byte(c: Cell) -> u8 {
    match c {
        Cell::Free => 0,
        Cell::Occupied => 100,
        Cell::Unknown => 255,
    }
}

pub fn write_map<W: Write>(grid: &OccupancyGrid, mut out: W) -> Result<()> {
    write!(
        out,
        "{MAGIC}\nwidth {}\nheight {}\nresolution {:?}\norigin {:?} {:?} 0\ndata\n",
        grid.width, grid.height, grid.resolution, grid.origin_x, grid.origin_y
    )?;
    let bytes: Vec<u8> = grid.cells.iter().map(|c| cell_byte(*c)).collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

fn header_line<R: BufRead>(input: &mut R, line: usize) -> Result<String> {
    let mut s = String::new();
    let n = input.read_line(&mut s)?;
    if n == 0 {
        return Err(Error::parse(line, "unexpected end of file"));
    }
    if !s.ends_with('\n') {
        return Err(Error::parse(line, "truncated header line"));
    }
    Ok(s.trim_end_matches(['\n', '\r']).to_string())
}

fn keyed<'a>(s: &'a str, key: &str, line: usize) -> Result<Vec<&'a str>> {
    let mut parts = s.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::parse(line, format!("expected '{key}'")));
    }
    Ok(parts.collect())
}

fn number<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::parse(line, format!("bad number '{s}'")))
}

pub fn read_map<R: BufRead>(mut input: R) -> Result<OccupancyGrid> {
    if header_line(&mut input, 1)? != MAGIC {
        return Err(Error::parse(1, format!("expected '{MAGIC}'")));
    }
    let single = |s: &str, key: &str, line: usize| -> Result<String> {
        match keyed(s, key, line)?.as_slice() {
            [v] => Ok(v.to_string()),
            _ => Err(Error::parse(line, format!("'{key}' takes one value"))),
        }
    };
    let width: usize = number(&single(&header_line(&mut input, 2)?, "width", 2)?, 2)?;
    let height: usize = number(&single(&header_line(&mut input, 3)?, "height", 3)?, 3)?;
    let resolution: f64 = number(&single(&header_line(&mut input, 4)?, "resolution", 4)?, 4)?;
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::parse(4, "resolution must be positive"));
    }
    let origin_line = header_line(&mut input, 5)?;
    let (ox, oy) = match keyed(&origin_line, "origin", 5)?.as_slice() {
        [x, y, yaw] => {
            let yaw: f64 = number(yaw, 5)?;
            if yaw != 0.0 {
                return Err(Error::parse(5, "rotated origins are not supported"));
            }
            (number::<f64>(x, 5)?, number::<f64>(y, 5)?)
        }
        _ => return Err(Error::parse(5, "'origin' takes x y yaw")),
    };
    if header_line(&mut input, 6)? != "data" {
        return Err(Error::parse(6, "expected 'data'"));
    }
    let len = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(2, "map too large"))?;
    let mut bytes = Vec::with_capacity(len);
    input.by_ref().take(len as u64 + 1).read_to_end(&mut bytes)?;
    if bytes.len() < len {
        return Err(Error::parse(
            7,
            format!("expected {len} cell bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > len {
        return Err(Error::parse(7, "trailing bytes after cell data"));
    }
    let cells = bytes
        .iter()
        .enumerate()
        .map(|(i, b)| match b {
            0 => Ok(Cell::Free),
            100 => Ok(Cell::Occupied),
            255 => Ok(Cell::Unknown),
            _ => Err(Error::parse(7, format!("bad cell byte {b} at offset {i}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    OccupancyGrid::from_cells(width, height, resolution, (ox, oy), cells)
}

/// Writes the thresholded mapper state.
pub fn save_map(state: &MapperState, path: impl AsRef<Path>) -> Result<()> {
    save_grid(&state.to_grid(), path)
}

pub fn save_grid(grid: &OccupancyGrid, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_map(grid, std::io::BufWriter::new(f))
}

pub fn load_map(path: impl AsRef<Path>) -> Result<OccupancyGrid> {
    let f = std::fs::File::open(path)?;
    read_map(std::io::BufReader::new(f))
}
