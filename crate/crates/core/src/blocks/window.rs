//! Non-overlapping window partitioning with optional half-window cyclic shift.

use crate::autodiff::Var;
use crate::error::{CanmError, Result};

/// Window geometry for a `H x W` map. Windows larger than the map clamp to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGrid {
    pub h: usize,
    pub w: usize,
    pub wh: usize,
    pub ww: usize,
    pub shift: bool,
}

impl WindowGrid {
    pub fn new(h: usize, w: usize, window: usize, shift: bool) -> Result<Self> {
        let (wh, ww) = (window.min(h), window.min(w));
        if wh == 0 || !h.is_multiple_of(wh) || !w.is_multiple_of(ww) {
            return Err(CanmError::shape(format!(
                "feature map {h}x{w} is not divisible by window {wh}x{ww}"
            )));
        }
        Ok(WindowGrid { h, w, wh, ww, shift })
    }

    pub fn count(&self) -> usize {
        (self.h / self.wh) * (self.w / self.ww)
    }

    pub fn tokens(&self) -> usize {
        self.wh * self.ww
    }

    /// Roll applied before partitioning. A window spanning the whole axis is never shifted.
    fn offsets(&self) -> (isize, isize) {
        if !self.shift {
            return (0, 0);
        }
        let oy = if self.wh < self.h { (self.wh / 2) as isize } else { 0 };
        let ox = if self.ww < self.w { (self.ww / 2) as isize } else { 0 };
        (oy, ox)
    }
}

fn roll2(x: &Var, dy: isize, dx: isize) -> Result<Var> {
    let mut y = x.clone();
    if dy != 0 {
        y = y.roll(2, dy)?;
    }
    if dx != 0 {
        y = y.roll(3, dx)?;
    }
    Ok(y)
}

/// `[B, C, H, W] -> [B * nW, C, wh, ww]`, windows in row-major grid order.
pub fn window_partition(x: &Var, g: &WindowGrid) -> Result<Var> {
    let &[b, c, h, w] = x.shape() else {
        return Err(CanmError::shape(format!("window_partition needs [B, C, H, W], got {:?}", x.shape())));
    };
    if (h, w) != (g.h, g.w) {
        return Err(CanmError::shape(format!(
            "window grid built for {}x{}, input is {h}x{w}",
            g.h, g.w
        )));
    }
    let (oy, ox) = g.offsets();
    let (nh, nw) = (h / g.wh, w / g.ww);
    roll2(x, -oy, -ox)?
        .reshape(&[b, c, nh, g.wh, nw, g.ww])?
        .permute(&[0, 2, 4, 1, 3, 5])?
        .reshape(&[b * nh * nw, c, g.wh, g.ww])
}

/// Exact inverse of [`window_partition`] with the same grid.
pub fn window_reverse(x: &Var, g: &WindowGrid) -> Result<Var> {
    let &[bn, c, wh, ww] = x.shape() else {
        return Err(CanmError::shape(format!("window_reverse needs [B*nW, C, wh, ww], got {:?}", x.shape())));
    };
    if (wh, ww) != (g.wh, g.ww) || bn % g.count() != 0 {
        return Err(CanmError::shape(format!(
            "{:?} is not a window batch for grid {g:?}",
            x.shape()
        )));
    }
    let (nh, nw) = (g.h / wh, g.w / ww);
    let b = bn / g.count();
    let y = x
        .reshape(&[b, nh, nw, c, wh, ww])?
        .permute(&[0, 3, 1, 4, 2, 5])?
        .reshape(&[b, c, g.h, g.w])?;
    let (oy, ox) = g.offsets();
    roll2(&y, oy, ox)
}
