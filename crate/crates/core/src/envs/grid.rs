//! Grid helpers shared by the gridworld environments.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pos {
    pub row: i32,
    pub col: i32,
}

impl Pos {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn offset(self, dr: i32, dc: i32) -> Self {
        Self::new(self.row + dr, self.col + dc)
    }

    pub fn manhattan(self, other: Pos) -> i32 {
        (self.row - other.row).abs() + (self.col - other.col).abs()
    }

    pub fn neighbours(self) -> [Pos; 4] {
        [
            self.offset(-1, 0),
            self.offset(1, 0),
            self.offset(0, -1),
            self.offset(0, 1),
        ]
    }
}

/// The first five actions of every gridworld.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Stay,
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::Stay, Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn from_action(action: usize) -> Option<Move> {
        Self::ALL.get(action).copied()
    }

    pub fn apply(self, p: Pos) -> Pos {
        match self {
            Move::Stay => p,
            Move::Up => p.offset(-1, 0),
            Move::Down => p.offset(1, 0),
            Move::Left => p.offset(0, -1),
            Move::Right => p.offset(0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Bounds {
    pub rows: i32,
    pub cols: i32,
}

impl Bounds {
    pub fn contains(self, p: Pos) -> bool {
        p.row >= 0 && p.row < self.rows && p.col >= 0 && p.col < self.cols
    }

    pub fn normalized(self, p: Pos) -> [f64; 2] {
        [
            p.row as f64 / (self.rows - 1).max(1) as f64,
            p.col as f64 / (self.cols - 1).max(1) as f64,
        ]
    }
}

/// Appends a one-hot window of `(2 * radius + 1)^2` cells centred on `centre`;
/// `classify` maps a cell to its channel, or `None` for an empty cell.
pub(crate) fn encode_window<F>(
    out: &mut Vec<f64>,
    centre: Pos,
    radius: i32,
    channels: usize,
    mut classify: F,
) where
    F: FnMut(Pos) -> Option<usize>,
{
    for dr in -radius..=radius {
        for dc in -radius..=radius {
            let start = out.len();
            out.extend(std::iter::repeat(0.0).take(channels));
            if let Some(ch) = classify(centre.offset(dr, dc)) {
                out[start + ch] = 1.0;
            }
        }
    }
}
