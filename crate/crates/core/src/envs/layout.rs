//! Plain-text kitchen maps.
//!
//! One character per cell:
//!
//! | char | meaning                       |
//! |------|-------------------------------|
//! | `X`  | counter (stations may go here) |
//! | `#`  | wall (never holds a station)  |
//! | `.` or space | floor                 |
//! | `O`  | onion dispenser               |
//! | `T`  | tomato dispenser              |
//! | `F`  | fish dispenser                |
//! | `D`  | dish dispenser                |
//! | `P`  | pot                           |
//! | `S`  | serving station               |
//!
//! A map without station characters has its stations placed at random on
//! reachable counters at every reset. A map with any station character is
//! fixed and must name every station the recipe set needs.

use alloc::string::String;
use alloc::vec::Vec;

use super::overcooked::{Ingredient, Station};
use super::grid::Pos;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Floor,
    Counter,
    Wall,
    Station(Station),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KitchenLayout {
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
}

pub const SIMPLE_ROOM: &str = "\
XXXXXXX
X.....X
X.....X
X.....X
XXXXXXX
";

pub const RING_ROOM: &str = "\
XXXXXXXXX
X.......X
X.XXXXX.X
X.XXXXX.X
X.XXXXX.X
X.......X
XXXXXXXXX
";

impl KitchenLayout {
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim_end().is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::Layout("empty map".into()));
        }
        let width = rows.iter().map(|r| r.chars().count()).max().unwrap_or(0);
        let height = rows.len();
        let mut cells = Vec::with_capacity(width * height);
        for (y, row) in rows.iter().enumerate() {
            let chars: Vec<char> = row.chars().collect();
            for x in 0..width {
                let c = chars.get(x).copied().unwrap_or(' ');
                let cell = match c {
                    '.' | ' ' => Cell::Floor,
                    'X' => Cell::Counter,
                    '#' => Cell::Wall,
                    'O' => Cell::Station(Station::Dispenser(Ingredient::Onion)),
                    'T' => Cell::Station(Station::Dispenser(Ingredient::Tomato)),
                    'F' => Cell::Station(Station::Dispenser(Ingredient::Fish)),
                    'D' => Cell::Station(Station::DishDispenser),
                    'P' => Cell::Station(Station::Pot),
                    'S' => Cell::Station(Station::Serving),
                    other => {
                        return Err(Error::Layout(alloc::format!("unknown character {:?} at ({}, {})", other, x, y)))
                    }
                };
                let border = x == 0 || y == 0 || x == width - 1 || y == height - 1;
                if border && cell == Cell::Floor {
                    return Err(Error::Layout(alloc::format!("floor on the map border at ({}, {})", x, y)));
                }
                cells.push(cell);
            }
        }
        let layout = Self { width, height, cells };
        if layout.floor_cells().is_empty() {
            return Err(Error::Layout("map has no floor".into()));
        }
        if layout.stations().iter().filter(|(_, s)| *s == Station::Pot).count() > 1 {
            return Err(Error::Layout("at most one pot is supported".into()));
        }
        Ok(layout)
    }

    pub fn cell(&self, p: Pos) -> Cell {
        self.cells[p.1 * self.width + p.0]
    }

    pub fn is_floor(&self, p: Pos) -> bool {
        self.cell(p) == Cell::Floor
    }

    pub fn floor_cells(&self) -> Vec<Pos> {
        self.positions().filter(|&p| self.cell(p) == Cell::Floor).collect()
    }

    /// Counters orthogonally adjacent to at least one floor cell.
    pub fn reachable_counters(&self) -> Vec<Pos> {
        self.positions()
            .filter(|&p| self.cell(p) == Cell::Counter && self.neighbours(p).any(|n| self.cell(n) == Cell::Floor))
            .collect()
    }

    /// Fixed stations named in the map.
    pub fn stations(&self) -> Vec<(Pos, Station)> {
        self.positions()
            .filter_map(|p| match self.cell(p) {
                Cell::Station(s) => Some((p, s)),
                _ => None,
            })
            .collect()
    }

    pub fn has_fixed_stations(&self) -> bool {
        !self.stations().is_empty()
    }

    fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| (x, y)))
    }

    fn neighbours(&self, p: Pos) -> impl Iterator<Item = Pos> + '_ {
        let (x, y) = (p.0 as isize, p.1 as isize);
        [(0, -1), (1, 0), (0, 1), (-1, 0)].into_iter().filter_map(move |(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height)
                .then_some((nx as usize, ny as usize))
        })
    }

    /// ASCII rendering with the given stations overlaid.
    pub fn render(&self, stations: &[(Pos, Station)], agent: Option<Pos>) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let p = (x, y);
                let c = if agent == Some(p) {
                    '@'
                } else if let Some((_, s)) = stations.iter().find(|(q, _)| *q == p) {
                    s.symbol()
                } else {
                    match self.cell(p) {
                        Cell::Floor => '.',
                        Cell::Counter => 'X',
                        Cell::Wall => '#',
                        Cell::Station(s) => s.symbol(),
                    }
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_maps_parse() {
        let s = KitchenLayout::parse(SIMPLE_ROOM).unwrap();
        assert_eq!((s.width, s.height), (7, 5));
        assert_eq!(s.floor_cells().len(), 15);
        assert_eq!(s.reachable_counters().len(), 16);
        let r = KitchenLayout::parse(RING_ROOM).unwrap();
        assert_eq!(r.floor_cells().len(), 20);
        assert!(!r.has_fixed_stations());
    }

    #[test]
    fn fixed_stations_and_errors() {
        let l = KitchenLayout::parse("XOPX\nX..S\nXDXX\n").unwrap();
        assert_eq!(l.stations().len(), 4);
        assert!(KitchenLayout::parse("XQX\nX.X\nXXX\n").is_err());
        assert!(KitchenLayout::parse(".XX\nX.X\nXXX\n").is_err());
        assert!(KitchenLayout::parse("XPP\nX.X\nXXX\n").is_err());
        assert!(KitchenLayout::parse("\n\n").is_err());
    }
}
