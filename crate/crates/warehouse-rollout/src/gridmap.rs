//! Static warehouse geometry: cell kinds, scalar indexing, adjacency and
//! map file parsing.
//!
//! A map file is UTF-8 text, one row per line, over the alphabet
//! `.` (floor), `#` (wall), `@` (storage), `D` (delivery).

use std::fmt;

use crate::dynamics::Action;

/// Scalar cell index, `index = row * width + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex(pub u32);

impl CellIndex {
    #[inline]
    pub fn as_usize(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Floor,
    Wall,
    Storage,
    Delivery,
}

impl CellKind {
    pub fn to_char(self) -> char {
        match self {
            CellKind::Floor => '.',
            CellKind::Wall => '#',
            CellKind::Storage => '@',
            CellKind::Delivery => 'D',
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MapError {
    #[error("empty map input")]
    Empty,
    #[error("ragged line {line}: expected width {expected}, got {got}")]
    RaggedLine { line: usize, expected: usize, got: usize },
    #[error("unknown character {ch:?} at line {line}, col {col}")]
    UnknownChar { line: usize, col: usize, ch: char },
}

/// Immutable grid geometry. Safe for unrestricted concurrent reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: u32,
    height: u32,
    kinds: Vec<CellKind>,
}

impl GridMap {
    pub fn new(width: u32, height: u32, kinds: Vec<CellKind>) -> Self {
        assert!(width >= 1 && height >= 1);
        assert_eq!(kinds.len(), (width * height) as usize);
        GridMap { width, height, kinds }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[CellKind] {
        &self.kinds
    }

    #[inline]
    pub fn kind(&self, c: CellIndex) -> CellKind {
        self.kinds[c.as_usize()]
    }

    #[inline]
    pub fn index(&self, row: u32, col: u32) -> CellIndex {
        debug_assert!(row < self.height && col < self.width);
        CellIndex(row * self.width + col)
    }

    #[inline]
    pub fn coords(&self, c: CellIndex) -> (u32, u32) {
        (c.0 / self.width, c.0 % self.width)
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> {
        (0..self.kinds.len() as u32).map(CellIndex)
    }

    pub fn storage_cells(&self) -> Vec<CellIndex> {
        self.cells().filter(|&c| self.kind(c) == CellKind::Storage).collect()
    }

    pub fn delivery_cells(&self) -> Vec<CellIndex> {
        self.cells().filter(|&c| self.kind(c) == CellKind::Delivery).collect()
    }

    /// Destination of `action` from `c`, or `None` when it leaves the grid.
    /// Walls are not filtered here; callers decide what blocks.
    pub fn apply_action(&self, c: CellIndex, action: Action) -> Option<CellIndex> {
        let (r, col) = self.coords(c);
        let (nr, nc) = match action {
            Action::Up => (r.checked_sub(1)?, col),
            Action::Down => (r + 1, col),
            Action::Left => (r, col.checked_sub(1)?),
            Action::Right => (r, col + 1),
            Action::Stay => (r, col),
        };
        if nr >= self.height || nc >= self.width {
            return None;
        }
        Some(self.index(nr, nc))
    }

    /// In-bounds, non-wall neighbors of `c`, paired with the action reaching
    /// them, in the fixed order Up, Down, Left, Right.
    pub fn neighbors(&self, c: CellIndex) -> Vec<(Action, CellIndex)> {
        let mut out = Vec::with_capacity(4);
        for action in Action::MOVES {
            if let Some(n) = self.apply_action(c, action) {
                if self.kind(n) != CellKind::Wall {
                    out.push((action, n));
                }
            }
        }
        out
    }

    /// 64-bit FNV-1a over the kinds array, with width and height mixed in.
    /// Used as the path-cache fingerprint.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        };
        for b in self.width.to_le_bytes() {
            eat(b);
        }
        for b in self.height.to_le_bytes() {
            eat(b);
        }
        for &k in &self.kinds {
            eat(k.to_char() as u8);
        }
        h
    }
}

/// Parses map-file text into a [`GridMap`].
pub fn parse_map(text: &str) -> Result<GridMap, MapError> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
    if lines.is_empty() {
        return Err(MapError::Empty);
    }
    let width = lines[0].chars().count();
    let mut kinds = Vec::with_capacity(width * lines.len());
    for (li, line) in lines.iter().enumerate() {
        let got = line.chars().count();
        if got != width {
            return Err(MapError::RaggedLine { line: li + 1, expected: width, got });
        }
        for (ci, ch) in line.chars().enumerate() {
            let kind = match ch {
                '.' => CellKind::Floor,
                '#' => CellKind::Wall,
                '@' => CellKind::Storage,
                'D' => CellKind::Delivery,
                other => {
                    return Err(MapError::UnknownChar { line: li + 1, col: ci + 1, ch: other })
                }
            };
            kinds.push(kind);
        }
    }
    Ok(GridMap::new(width as u32, lines.len() as u32, kinds))
}

/// Inverse of [`parse_map`]: `parse_map(&render_map(m)) == m`.
pub fn render_map(map: &GridMap) -> String {
    let mut out = String::with_capacity(map.num_cells() + map.height as usize);
    for r in 0..map.height {
        for c in 0..map.width {
            out.push(map.kind(map.index(r, c)).to_char());
        }
        out.push('\n');
    }
    out
}
