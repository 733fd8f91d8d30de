//! Token sequences for the noisy latent and the conditioning branches.
//!
//! Image branches are flattened row-major. The unified sequence always holds
//! the four branches in the order `[X, C_T, C_L, C_R]`; the text branch is a
//! zero-length segment. Each image branch gets a 2-D position offset so that
//! position indices of different branches never collide:
//! `X` at `(0, 0)`, `C_L` at `(0, cols)`, `C_R` at `(rows, 0)`.

use ndarray::{concatenate, s, Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Noisy,
    Text,
    LineArt,
    Reference,
}

impl Branch {
    /// Fixed concatenation order of the unified sequence.
    pub const ORDER: [Branch; 4] = [Branch::Noisy, Branch::Text, Branch::LineArt, Branch::Reference];

    pub fn is_image(self) -> bool {
        !matches!(self, Branch::Text)
    }

    fn slot(self) -> usize {
        match self {
            Branch::Noisy => 0,
            Branch::Text => 1,
            Branch::LineArt => 2,
            Branch::Reference => 3,
        }
    }
}

/// `rows x cols x d_model` spatial feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    pub data: Array3<f64>,
    pub branch: Branch,
}

impl FeatureGrid {
    pub fn new(data: Array3<f64>, branch: Branch) -> Self {
        Self { data, branch }
    }

    pub fn zeros(rows: usize, cols: usize, d_model: usize, branch: Branch) -> Self {
        Self::new(Array3::zeros((rows, cols, d_model)), branch)
    }

    pub fn rows(&self) -> usize {
        self.data.dim().0
    }

    pub fn cols(&self) -> usize {
        self.data.dim().1
    }

    pub fn d_model(&self) -> usize {
        self.data.dim().2
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn with_branch(mut self, branch: Branch) -> Self {
        self.branch = branch;
        self
    }

    /// Row-major `(rows * cols) x d_model` token matrix.
    pub fn token_matrix(&self) -> Array2<f64> {
        let (r, c, d) = self.data.dim();
        self.data
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((r * c, d))
            .expect("standard layout reshape")
    }

    pub fn from_token_matrix(tokens: ArrayView2<f64>, rows: usize, cols: usize, branch: Branch) -> Result<Self> {
        let (n, d) = tokens.dim();
        if n != rows * cols {
            return Err(Error::GridMismatch(format!("{n} tokens cannot form a {rows}x{cols} grid")));
        }
        let data = tokens
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, cols, d))
            .expect("standard layout reshape");
        Ok(Self::new(data, branch))
    }

    pub fn flatten(&self) -> TokenSequence {
        TokenSequence {
            tokens: self.token_matrix(),
            branch: self.branch,
            grid: Some((self.rows(), self.cols())),
            position_offset: (0, 0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Ordered embedding vectors of one branch.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    /// `len x d_model`
    pub tokens: Array2<f64>,
    pub branch: Branch,
    pub grid: Option<(usize, usize)>,
    pub position_offset: (i64, i64),
}

impl TokenSequence {
    pub fn empty(branch: Branch, d_model: usize) -> Self {
        Self {
            tokens: Array2::zeros((0, d_model)),
            branch,
            grid: None,
            position_offset: (0, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_model(&self) -> usize {
        self.tokens.ncols()
    }

    /// 2-D position of every token, offset applied.
    pub fn positions(&self) -> Vec<(i64, i64)> {
        let Some((_, cols)) = self.grid else {
            return Vec::new();
        };
        let (dr, dc) = self.position_offset;
        (0..self.len()).map(|i| (dr + (i / cols) as i64, dc + (i % cols) as i64)).collect()
    }
}

pub fn reshape_to_grid(seq: &TokenSequence) -> Result<FeatureGrid> {
    let Some((rows, cols)) = seq.grid else {
        return Err(Error::NotAnImageBranch(seq.branch));
    };
    if !seq.branch.is_image() {
        return Err(Error::NotAnImageBranch(seq.branch));
    }
    FeatureGrid::from_token_matrix(seq.tokens.view(), rows, cols, seq.branch)
}

/// Placement of one branch inside a unified sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub branch: Branch,
    pub start: usize,
    pub len: usize,
    pub grid: Option<(usize, usize)>,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Segment layout of a unified sequence, without the token values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceLayout {
    pub segments: Vec<Segment>,
}

impl SequenceLayout {
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn segment(&self, branch: Branch) -> Segment {
        self.segments[branch.slot()]
    }

    /// `(start, len)` per branch in `[X, C_T, C_L, C_R]` order.
    pub fn boundaries(&self) -> Vec<(usize, usize)> {
        self.segments.iter().map(|s| (s.start, s.len)).collect()
    }
}

/// Concatenation `[X, C_T, C_L, C_R]` of the branch token sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct UnifiedSequence {
    segments: Vec<TokenSequence>,
    layout: SequenceLayout,
}

impl UnifiedSequence {
    /// Builds a sequence from the four branches, in order. The text branch
    /// must be empty.
    pub fn from_parts(noisy: TokenSequence, text: TokenSequence, line: TokenSequence, reference: TokenSequence) -> Result<Self> {
        let parts = [noisy, text, line, reference];
        let d = parts[0].d_model();
        let mut start = 0;
        let mut layout = Vec::with_capacity(4);
        for (part, branch) in parts.iter().zip(Branch::ORDER) {
            if part.branch != branch {
                return Err(Error::InvalidArgument(format!(
                    "expected {branch:?} segment, found {:?}",
                    part.branch
                )));
            }
            if part.d_model() != d {
                return Err(Error::DimensionMismatch(format!(
                    "{branch:?} has d_model {} but {:?} has {d}",
                    part.d_model(),
                    Branch::Noisy
                )));
            }
            if let Some((r, c)) = part.grid {
                if r * c != part.len() {
                    return Err(Error::GridMismatch(format!(
                        "{branch:?} has {} tokens for a {r}x{c} grid",
                        part.len()
                    )));
                }
            }
            layout.push(Segment {
                branch,
                start,
                len: part.len(),
                grid: part.grid,
            });
            start += part.len();
        }
        if !parts[1].is_empty() {
            return Err(Error::InvalidArgument("text branch must be empty".into()));
        }
        Ok(Self {
            segments: parts.into(),
            layout: SequenceLayout { segments: layout },
        })
    }

    /// Noisy latent only; all conditioning segments are empty.
    pub fn unconditional(noisy: &FeatureGrid) -> Result<Self> {
        let d = noisy.d_model();
        let x = noisy.clone().with_branch(Branch::Noisy).flatten();
        Self::from_parts(
            x,
            TokenSequence::empty(Branch::Text, d),
            TokenSequence::empty(Branch::LineArt, d),
            TokenSequence::empty(Branch::Reference, d),
        )
    }

    pub fn layout(&self) -> &SequenceLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_model(&self) -> usize {
        self.segments[0].d_model()
    }

    pub fn boundaries(&self) -> Vec<(usize, usize)> {
        self.layout.boundaries()
    }

    /// All tokens concatenated, `len x d_model`.
    pub fn tokens(&self) -> Array2<f64> {
        let views: Vec<_> = self.segments.iter().map(|s| s.tokens.view()).collect();
        concatenate(Axis(0), &views).expect("segments share d_model")
    }

    pub fn positions(&self) -> Vec<(i64, i64)> {
        self.segments.iter().flat_map(|s| s.positions()).collect()
    }

    pub fn slice_branch(&self, branch: Branch) -> TokenSequence {
        self.segments[branch.slot()].clone()
    }

    /// Same layout, new token values (e.g. after a projection).
    pub fn with_tokens(&self, tokens: ArrayView2<f64>) -> Result<Self> {
        if tokens.nrows() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} tokens for a sequence of length {}",
                tokens.nrows(),
                self.len()
            )));
        }
        let segments = self
            .segments
            .iter()
            .zip(&self.layout.segments)
            .map(|(seq, seg)| TokenSequence {
                tokens: tokens.slice(s![seg.range(), ..]).to_owned(),
                ..seq.clone()
            })
            .collect();
        Ok(Self {
            segments,
            layout: self.layout.clone(),
        })
    }
}

/// Concatenates the noisy latent and conditioning grids into `[X, C_T, C_L, C_R]`.
pub fn assemble(noisy: &FeatureGrid, line: &FeatureGrid, reference: &FeatureGrid) -> Result<UnifiedSequence> {
    let d = noisy.d_model();
    if line.d_model() != d || reference.d_model() != d {
        return Err(Error::DimensionMismatch(format!(
            "d_model differs across branches: noisy {d}, line {}, reference {}",
            line.d_model(),
            reference.d_model()
        )));
    }
    if (noisy.rows(), noisy.cols()) != (line.rows(), line.cols()) {
        return Err(Error::GridMismatch(format!(
            "noisy grid {}x{} vs line grid {}x{}",
            noisy.rows(),
            noisy.cols(),
            line.rows(),
            line.cols()
        )));
    }
    let (rows, cols) = (noisy.rows() as i64, noisy.cols() as i64);
    let x = noisy.clone().with_branch(Branch::Noisy).flatten();
    let mut l = line.clone().with_branch(Branch::LineArt).flatten();
    l.position_offset = (0, cols);
    let mut r = reference.clone().with_branch(Branch::Reference).flatten();
    r.position_offset = (rows, 0);
    UnifiedSequence::from_parts(x, TokenSequence::empty(Branch::Text, d), l, r)
}

pub fn slice_branch(u: &UnifiedSequence, branch: Branch) -> TokenSequence {
    u.slice_branch(branch)
}

/// Sinusoidal 2-D positional encoding: the first half of the channels encodes
/// the row index, the second half the column index.
pub fn positional_encoding(positions: &[(i64, i64)], d_model: usize) -> Array2<f64> {
    assert!(d_model % 4 == 0, "d_model must be divisible by 4 for 2-D positional encoding");
    let half = d_model / 2;
    let pairs = half / 2;
    let mut out = Array2::zeros((positions.len(), d_model));
    for (i, &(r, c)) in positions.iter().enumerate() {
        for (axis, p) in [(0usize, r), (1, c)] {
            for k in 0..pairs {
                let freq = 1.0 / 10000f64.powf(k as f64 / pairs as f64);
                let angle = p as f64 * freq;
                out[[i, axis * half + 2 * k]] = angle.sin();
                out[[i, axis * half + 2 * k + 1]] = angle.cos();
            }
        }
    }
    out
}
