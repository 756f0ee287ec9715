//! Reference Hilbert curve built recursively: the order-k curve is the
//! concatenation of 2^n transformed order-(k-1) curves, one per sub-cube,
//! visited in reflected Gray-code order. This pins the orientation the
//! fast codec must reproduce exactly: for two axes at order 1 the cells are
//! visited (0,0), (0,1), (1,1), (1,0).
#![allow(dead_code)]

fn mask(n: u32) -> u64 {
    (1u64 << n) - 1
}

fn rotl(x: u64, s: u32, n: u32) -> u64 {
    let s = s % n;
    if s == 0 {
        return x;
    }
    ((x << s) | (x >> (n - s))) & mask(n)
}

fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

fn entry_corner(i: u64) -> u64 {
    if i == 0 {
        0
    } else {
        gray(2 * ((i - 1) / 2))
    }
}

fn intra_direction(i: u64, n: u32) -> u32 {
    if i == 0 {
        0
    } else if i % 2 == 0 {
        (i - 1).trailing_ones() % n
    } else {
        i.trailing_ones() % n
    }
}

/// Points of the curve in visiting order.
pub fn curve(dims: u32, order: u32) -> Vec<Vec<u64>> {
    build(dims, order, 0, 0)
}

fn build(n: u32, order: u32, entry: u64, dir: u32) -> Vec<Vec<u64>> {
    if order == 0 {
        return vec![vec![0; n as usize]];
    }
    let half = 1u64 << (order - 1);
    let mut out = Vec::with_capacity(1usize << (n * order));
    for w in 0..(1u64 << n) {
        // sub-cube corner for the w-th visit, mapped into this frame
        let corner = rotl(gray(w), dir + 1, n) ^ entry;
        let child_entry = entry ^ rotl(entry_corner(w), dir + 1, n);
        let child_dir = (dir + intra_direction(w, n) + 1) % n;
        for mut p in build(n, order - 1, child_entry, child_dir) {
            for (axis, c) in p.iter_mut().enumerate() {
                *c += ((corner >> axis) & 1) * half;
            }
            out.push(p);
        }
    }
    out
}

/// Index of every grid point, keyed by row-major position.
pub fn index_table(dims: u32, order: u32) -> Vec<u64> {
    let side = 1u64 << order;
    let pts = curve(dims, order);
    let mut table = vec![0u64; pts.len()];
    for (h, p) in pts.iter().enumerate() {
        let mut lin = 0u64;
        for &c in p {
            lin = lin * side + c;
        }
        table[lin as usize] = h as u64;
    }
    table
}

/// Classical two-axis rotate-and-flip construction, used as a second,
/// structurally different reference for the planar case.
pub fn classic_xy2d(order: u32, x: u64, y: u64) -> u64 {
    let n = 1u64 << order;
    let (mut x, mut y) = (x, y);
    let mut d = 0;
    let mut s = n / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = n - 1 - x;
                y = n - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s /= 2;
    }
    d
}
