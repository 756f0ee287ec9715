use super::{Frame, HilbertParams, SfcError, SfcInterval};
use crate::region::BoundingBox;

/// Curve intervals covering exactly the grid cells of `b`, sorted and
/// merged. Sub-cubes fully inside the box become whole intervals; partial
/// ones are refined level by level.
pub fn bbox_to_intervals(b: &BoundingBox, params: HilbertParams) -> Result<Vec<SfcInterval>, SfcError> {
    let n = params.dims();
    if b.dims() != n as usize {
        return Err(SfcError::Range(format!("box {b} has {} axes, curve has {n}", b.dims())));
    }
    let side = params.side() as i64;
    if b.lo().iter().any(|&c| c < 0) || b.hi().iter().any(|&c| c >= side) {
        return Err(SfcError::Range(format!("box {b} outside the {side}-cell grid")));
    }
    let mut out = Vec::new();
    let query = Query {
        lo: b.lo().iter().map(|&c| c as u64).collect(),
        hi: b.hi().iter().map(|&c| c as u64).collect(),
        n,
    };
    query.descend(params.order(), Frame::default(), &vec![0; n as usize], 0, &mut out);
    Ok(out)
}

struct Query {
    lo: Vec<u64>,
    hi: Vec<u64>,
    n: u32,
}

impl Query {
    fn descend(&self, level: u32, frame: Frame, origin: &[u64], prefix: u64, out: &mut Vec<SfcInterval>) {
        let size = 1u64 << level;
        let mut inside = true;
        for axis in 0..origin.len() {
            let (a, b) = (origin[axis], origin[axis] + size - 1);
            if b < self.lo[axis] || a > self.hi[axis] {
                return;
            }
            inside &= self.lo[axis] <= a && b <= self.hi[axis];
        }
        if inside {
            let shift = self.n * level;
            let iv = SfcInterval::new(prefix << shift, ((prefix + 1) << shift) - 1);
            match out.last_mut() {
                Some(last) if last.end + 1 == iv.start => last.end = iv.end,
                _ => out.push(iv),
            }
            return;
        }
        let half = size / 2;
        let mut child_origin = origin.to_vec();
        for w in 0..(1u64 << self.n) {
            let corner = frame.corner(w, self.n);
            for (axis, c) in child_origin.iter_mut().enumerate() {
                *c = origin[axis] + ((corner >> axis) & 1) * half;
            }
            self.descend(level - 1, frame.child(w, self.n), &child_origin, (prefix << self.n) | w, out);
        }
    }
}
