//! Integer-lattice geometry.
//!
//! Directions are indexed `0..2d`: index `i < d` is `+e_i` and index `i + d`
//! is `-e_i`. A [`DirectionBasis`] reorders them against a unit vector `ell`
//! so that the first `d` entries have non-increasing, non-negative dot
//! products with `ell`.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 6;

/// A site of `Z^d`, `d <= MAX_DIM`. Unused coordinates are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    dim: u8,
    c: [i64; MAX_DIM],
}

impl Site {
    pub fn new(coords: &[i64]) -> Site {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "site dimension must be in 1..={MAX_DIM}"
        );
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site { dim: coords.len() as u8, c }
    }

    pub fn origin(dim: usize) -> Site {
        Site::new(&vec![0; dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i64] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> i64 {
        self.c[axis]
    }

    #[inline]
    pub fn step(&self, dir: Direction) -> Site {
        let mut s = *self;
        s.c[dir.axis()] += dir.sign();
        s
    }

    pub fn add(&self, other: &Site) -> Site {
        let mut s = *self;
        for i in 0..self.dim() {
            s.c[i] += other.c[i];
        }
        s
    }

    pub fn sub(&self, other: &Site) -> Site {
        let mut s = *self;
        for i in 0..self.dim() {
            s.c[i] -= other.c[i];
        }
        s
    }

    pub fn scale(&self, k: i64) -> Site {
        let mut s = *self;
        for i in 0..self.dim() {
            s.c[i] *= k;
        }
        s
    }

    #[inline]
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.coords().iter().zip(v).map(|(&x, &y)| x as f64 * y).sum()
    }

    pub fn l1(&self) -> i64 {
        self.coords().iter().map(|x| x.abs()).sum()
    }

    pub fn linf(&self) -> i64 {
        self.coords().iter().map(|x| x.abs()).max().unwrap_or(0)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.coords().iter().map(|&x| x as f64).collect()
    }

    pub fn neighbors(&self) -> impl Iterator<Item = Site> + '_ {
        Direction::all(self.dim()).map(move |e| self.step(e))
    }
}

impl Serialize for Site {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Site, D::Error> {
        let v = Vec::<i64>::deserialize(d)?;
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(serde::de::Error::custom(format!("site needs 1..={MAX_DIM} coordinates")));
        }
        Ok(Site::new(&v))
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// A signed unit vector of `Z^d`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Direction {
    dim: u8,
    index: u8,
}

impl Direction {
    pub fn new(index: usize, dim: usize) -> Direction {
        assert!(dim >= 1 && dim <= MAX_DIM && index < 2 * dim);
        Direction {
            dim: dim as u8,
            index: index as u8,
        }
    }

    pub fn along(axis: usize, positive: bool, dim: usize) -> Direction {
        Direction::new(if positive { axis } else { axis + dim }, dim)
    }

    pub fn all(dim: usize) -> impl Iterator<Item = Direction> {
        (0..2 * dim).map(move |i| Direction::new(i, dim))
    }

    /// Zero-based index in `0..2d`.
    #[inline]
    pub fn index(&self) -> usize {
        self.index as usize
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn axis(&self) -> usize {
        (self.index % self.dim) as usize
    }

    #[inline]
    pub fn sign(&self) -> i64 {
        if self.index < self.dim {
            1
        } else {
            -1
        }
    }

    pub fn is_positive(&self) -> bool {
        self.index < self.dim
    }

    pub fn neg(&self) -> Direction {
        Direction::new((self.index() + self.dim()) % (2 * self.dim()), self.dim())
    }

    pub fn vector(&self) -> Site {
        Site::origin(self.dim()).step(*self)
    }

    #[inline]
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.sign() as f64 * v[self.axis()]
    }
}

impl fmt::Debug for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}e{}", if self.is_positive() { '+' } else { '-' }, self.axis() + 1)
    }
}

fn check_unit(v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::param(format!(
            "direction has {} components, expected {dim}",
            v.len()
        )));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
        return Err(Error::param(format!("direction must be a unit vector, |v| = {norm}")));
    }
    Ok(())
}

/// Normalize a non-zero vector.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::param("cannot normalize a zero vector"));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// The enumeration `e_1, ..., e_{2d}` of the unit directions against `ell`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionBasis {
    pub ell: Vec<f64>,
    pub ordered: Vec<Direction>,
}

impl DirectionBasis {
    /// Orders the axes by decreasing `|ell_i|` (ties: smaller axis first) and
    /// signs each so its dot product with `ell` is non-negative (`+` on zero).
    pub fn build(ell: &[f64], dim: usize) -> Result<DirectionBasis> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::param(format!("dimension must be in 1..={MAX_DIM}")));
        }
        check_unit(ell, dim)?;
        let mut axes: Vec<usize> = (0..dim).collect();
        axes.sort_by(|&a, &b| ell[b].abs().total_cmp(&ell[a].abs()).then(a.cmp(&b)));
        let mut ordered: Vec<Direction> = axes
            .iter()
            .map(|&a| Direction::along(a, ell[a] >= 0.0, dim))
            .collect();
        let negatives: Vec<Direction> = ordered.iter().map(|e| e.neg()).collect();
        ordered.extend(negatives);
        Ok(DirectionBasis {
            ell: ell.to_vec(),
            ordered,
        })
    }

    /// The canonical basis `+e_1..+e_d`, obtained from `ell = e_1`.
    pub fn canonical(dim: usize) -> DirectionBasis {
        let mut ell = vec![0.0; dim];
        ell[0] = 1.0;
        DirectionBasis::build(&ell, dim).expect("e_1 is a unit vector")
    }

    pub fn dim(&self) -> usize {
        self.ell.len()
    }

    /// `e_k` for a one-based `k` in `1..=2d`.
    pub fn e(&self, k: usize) -> Direction {
        self.ordered[k - 1]
    }

    pub fn dots(&self) -> Vec<f64> {
        self.ordered.iter().map(|e| e.dot(&self.ell)).collect()
    }

    /// The first `d` ordered directions.
    pub fn frame(&self) -> &[Direction] {
        &self.ordered[..self.dim()]
    }
}

/// A unit hypercube `{anchor + sum eps_i f_i}` where `f_1..f_d` is a frame of
/// signed axes. Corners are indexed by the bitmask `eps`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnitHypercube {
    anchor: Site,
    frame: [Direction; MAX_DIM],
}

impl fmt::Debug for UnitHypercube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cube(anchor={:?}, frame={:?})", self.anchor, self.frame())
    }
}

impl UnitHypercube {
    /// `𝔥_x` with the canonical frame `+e_1..+e_d`.
    pub fn at(anchor: Site) -> UnitHypercube {
        let d = anchor.dim();
        let mut frame = [Direction::new(0, d); MAX_DIM];
        for (i, f) in frame.iter_mut().enumerate().take(d) {
            *f = Direction::new(i, d);
        }
        UnitHypercube { anchor, frame }
    }

    /// `𝔥_x` built on the first `d` directions of a basis.
    pub fn with_frame(anchor: Site, frame: &[Direction]) -> Result<UnitHypercube> {
        let d = anchor.dim();
        if frame.len() != d {
            return Err(Error::param("frame must have d directions"));
        }
        let mut seen = [false; MAX_DIM];
        for f in frame {
            if f.dim() != d || seen[f.axis()] {
                return Err(Error::param("frame must use every axis exactly once"));
            }
            seen[f.axis()] = true;
        }
        let mut arr = [Direction::new(0, d); MAX_DIM];
        arr[..d].copy_from_slice(frame);
        Ok(UnitHypercube { anchor, frame: arr })
    }

    pub fn anchor(&self) -> Site {
        self.anchor
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }

    pub fn frame(&self) -> &[Direction] {
        &self.frame[..self.dim()]
    }

    pub fn n_corners(&self) -> usize {
        1 << self.dim()
    }

    pub fn corner(&self, mask: usize) -> Site {
        let mut s = self.anchor;
        for (i, f) in self.frame().iter().enumerate() {
            if mask >> i & 1 == 1 {
                s = s.step(*f);
            }
        }
        s
    }

    pub fn corners(&self) -> Vec<Site> {
        (0..self.n_corners()).map(|m| self.corner(m)).collect()
    }

    /// Corner mask of `site`, or `None` when the site is outside the cube.
    #[inline]
    pub fn mask_of(&self, site: &Site) -> Option<usize> {
        let mut mask = 0;
        for (i, f) in self.frame().iter().enumerate() {
            let off = (site.coord(f.axis()) - self.anchor.coord(f.axis())) * f.sign();
            match off {
                0 => {}
                1 => mask |= 1 << i,
                _ => return None,
            }
        }
        Some(mask)
    }

    #[inline]
    pub fn contains(&self, site: &Site) -> bool {
        self.mask_of(site).is_some()
    }

    /// Direction from corner `mask` to its neighbor across frame axis `i`.
    pub fn interior_dir(&self, mask: usize, i: usize) -> Direction {
        if mask >> i & 1 == 0 {
            self.frame[i]
        } else {
            self.frame[i].neg()
        }
    }

    /// Direction leaving the cube from corner `mask` along frame axis `i`.
    pub fn exterior_dir(&self, mask: usize, i: usize) -> Direction {
        self.interior_dir(mask, i).neg()
    }

    /// `∂_x 𝔥` for the corner `mask`, ordered by frame axis.
    pub fn exterior_sites(&self, mask: usize) -> Vec<Site> {
        let c = self.corner(mask);
        (0..self.dim()).map(|i| c.step(self.exterior_dir(mask, i))).collect()
    }

    /// `∂𝔥`.
    pub fn boundary(&self) -> Vec<Site> {
        (0..self.n_corners()).flat_map(|m| self.exterior_sites(m)).collect()
    }

    pub fn translate(&self, by: &Site) -> UnitHypercube {
        UnitHypercube {
            anchor: self.anchor.add(by),
            frame: self.frame,
        }
    }
}

/// The `2^d` canonical-frame hypercubes containing `x`.
pub fn hypercubes_containing(x: &Site) -> Vec<UnitHypercube> {
    let d = x.dim();
    (0..1usize << d)
        .map(|mask| {
            let mut a = *x;
            for i in 0..d {
                if mask >> i & 1 == 1 {
                    a = a.step(Direction::new(i + d, d));
                }
            }
            UnitHypercube::at(a)
        })
        .collect()
}

/// `∂_x A`: the neighbors of `x` outside `A`, in direction-index order.
pub fn boundary_towards(x: &Site, set: &HashSet<Site>) -> Result<Vec<Site>> {
    if !set.contains(x) {
        return Err(Error::param(format!("{x} is not in the set")));
    }
    Ok(x.neighbors().filter(|y| !set.contains(y)).collect())
}

/// Oblique projection onto `vhat` along the hyperplane orthogonal to `e_{i0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub vhat: Vec<f64>,
    /// `e_{i0}`, signed so that `vhat · e_{i0} > 0`.
    pub e_i0: Direction,
    pub vhat_dot_e: f64,
}

impl Projection {
    /// `i0` maximizes `|vhat_i|` with ties going to the smaller axis.
    pub fn new(vhat: &[f64]) -> Result<Projection> {
        let d = vhat.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::param("projection direction has bad dimension"));
        }
        check_unit(vhat, d)?;
        let mut axis = 0;
        for i in 1..d {
            if vhat[i].abs() > vhat[axis].abs() {
                axis = i;
            }
        }
        let dot = vhat[axis].abs();
        if dot == 0.0 {
            return Err(Error::DegenerateDirection("vhat · e_i0 = 0".into()));
        }
        Ok(Projection {
            vhat: vhat.to_vec(),
            e_i0: Direction::along(axis, vhat[axis] > 0.0, d),
            vhat_dot_e: dot,
        })
    }

    /// `(P(z), Q(z))` with `P(z) + Q(z) = z`.
    pub fn split(&self, z: &Site) -> (Vec<f64>, Vec<f64>) {
        let t = (z.coord(self.e_i0.axis()) * self.e_i0.sign()) as f64 / self.vhat_dot_e;
        let p: Vec<f64> = self.vhat.iter().map(|v| t * v).collect();
        let q: Vec<f64> = z.coords().iter().zip(&p).map(|(&zi, pi)| zi as f64 - pi).collect();
        (p, q)
    }

    #[inline]
    pub fn along_e(&self, z: &Site) -> i64 {
        z.coord(self.e_i0.axis()) * self.e_i0.sign()
    }

    pub fn q_linf(&self, z: &Site) -> f64 {
        self.split(z).1.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
    }
}

/// `project(z, vhat) = (P(z), Q(z))`.
pub fn project(z: &Site, vhat: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(Projection::new(vhat)?.split(z))
}

/// Tilted box `B_{beta,L}(x)` around the direction `vhat`.
#[derive(Clone, Debug)]
pub struct TiltedBox {
    pub center: Site,
    pub beta: f64,
    pub l: f64,
    pub proj: Projection,
    l_beta: f64,
}

impl TiltedBox {
    pub fn new(center: Site, beta: f64, l: f64, vhat: &[f64]) -> Result<TiltedBox> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::param("beta must be in (0, 1)"));
        }
        if !(l > 0.0) {
            return Err(Error::param("L must be positive"));
        }
        Ok(TiltedBox {
            center,
            beta,
            l,
            proj: Projection::new(vhat)?,
            l_beta: l.powf(beta),
        })
    }

    pub fn l_beta(&self) -> f64 {
        self.l_beta
    }

    /// `-L^β < (y-x)·e_{i0} < L` and `‖Q(y-x)‖_∞ < L^β`.
    pub fn contains(&self, y: &Site) -> bool {
        let z = y.sub(&self.center);
        let h = self.proj.along_e(&z) as f64;
        -self.l_beta < h && h < self.l && self.proj.q_linf(&z) < self.l_beta
    }

    /// Whether `y` lies in `∂B` and on the front face `(y-x)·e_{i0} = L`.
    pub fn is_front_boundary(&self, y: &Site) -> bool {
        let z = y.sub(&self.center);
        self.proj.along_e(&z) as f64 == self.l
            && !self.contains(y)
            && y.neighbors().any(|n| self.contains(&n))
    }
}

/// The box `R((-L', L) × (-L̃, L̃)^{d-1}) ∩ Z^d`, where `R` rotates `e_1` onto
/// `ell` inside `span{e_1, ell}`. With `closed` set the ℓ-bounds are weak and
/// the lateral bound is dropped, which gives the slab `U_b^ℓ(L)`.
#[derive(Clone, Debug)]
pub struct SlabBox {
    pub ell: Vec<f64>,
    pub l: f64,
    pub lp: f64,
    pub ltilde: f64,
    pub closed: bool,
    /// Row-major `d × d`.
    pub rotation: Vec<f64>,
}

impl SlabBox {
    pub fn new(ell: &[f64], l: f64, lp: f64, ltilde: f64) -> Result<SlabBox> {
        let d = ell.len();
        check_unit(ell, d)?;
        if !(l > 0.0 && lp > 0.0 && ltilde > 0.0) {
            return Err(Error::param("box sizes must be positive"));
        }
        Ok(SlabBox {
            ell: ell.to_vec(),
            l,
            lp,
            ltilde,
            closed: false,
            rotation: rotation_onto(ell)?,
        })
    }

    /// `U_b^ℓ(L) = {x : -bL <= x·ℓ <= L}`.
    pub fn slab(ell: &[f64], b: f64, l: f64) -> Result<SlabBox> {
        if !(b > 0.0) {
            return Err(Error::param("b must be positive"));
        }
        let mut s = SlabBox::new(ell, l, b * l, f64::INFINITY)?;
        s.closed = true;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.ell.len()
    }

    /// Coordinates of `R^T y`.
    pub fn local(&self, y: &Site) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|j| (0..d).map(|i| self.rotation[i * d + j] * y.coord(i) as f64).sum())
            .collect()
    }

    pub fn contains(&self, y: &Site) -> bool {
        let s = y.dot(&self.ell);
        if self.closed {
            return -self.lp <= s && s <= self.l;
        }
        if !(-self.lp < s && s < self.l) {
            return false;
        }
        self.local(y).iter().skip(1).all(|c| c.abs() < self.ltilde)
    }
}

/// The rotation of `R^d` acting in `span{e_1, ell}` that sends `e_1` to `ell`.
pub fn rotation_onto(ell: &[f64]) -> Result<Vec<f64>> {
    let d = ell.len();
    let mut r = vec![0.0; d * d];
    for i in 0..d {
        r[i * d + i] = 1.0;
    }
    let c = ell[0];
    let mut w: Vec<f64> = ell.to_vec();
    w[0] = 0.0;
    let s = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if s < 1e-15 {
        if c > 0.0 {
            return Ok(r);
        }
        if d < 2 {
            return Err(Error::DegenerateDirection(
                "no rotation of R^1 sends e_1 to -e_1".into(),
            ));
        }
        // half-turn in the (e_1, e_2) plane
        w = vec![0.0; d];
        w[1] = 1.0;
        return Ok(plane_rotation(d, &w, -1.0, 0.0));
    }
    for x in w.iter_mut() {
        *x /= s;
    }
    Ok(plane_rotation(d, &w, c, s))
}

// R = I + (c-1)(u u^T + w w^T) + s (w u^T - u w^T), u = e_1.
fn plane_rotation(d: usize, w: &[f64], c: f64, s: f64) -> Vec<f64> {
    let mut u = vec![0.0; d];
    u[0] = 1.0;
    let mut r = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let id = if i == j { 1.0 } else { 0.0 };
            r[i * d + j] =
                id + (c - 1.0) * (u[i] * u[j] + w[i] * w[j]) + s * (w[i] * u[j] - u[i] * w[j]);
        }
    }
    r
}

/// The sets `A` (the L∞ collar around `𝔥_{d e_1}`) and `B = {0, e_1, ..., (d-1)e_1}`.
#[derive(Clone, Debug)]
pub struct TrapCollar {
    pub cube: UnitHypercube,
    pub a: BTreeSet<Site>,
    pub b: BTreeSet<Site>,
}

pub fn trap_collar(dim: usize) -> Result<TrapCollar> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::param(format!("dimension must be in 1..={MAX_DIM}")));
    }
    let e1 = Direction::new(0, dim).vector();
    let cube = UnitHypercube::at(e1.scale(dim as i64));
    let anchor = cube.anchor();
    let mut a = BTreeSet::new();
    // every z with ‖z - y‖_∞ = 1 for a corner y lies in anchor + [-1, 2]^d
    let span = 4usize.pow(dim as u32);
    for code in 0..span {
        let mut off = vec![0i64; dim];
        let mut c = code;
        for o in off.iter_mut() {
            *o = (c % 4) as i64 - 1;
            c /= 4;
        }
        let z = anchor.add(&Site::new(&off));
        if cube.contains(&z) {
            continue;
        }
        if cube.corners().iter().any(|y| z.sub(y).linf() == 1) {
            a.insert(z);
        }
    }
    let b = (0..dim as i64).map(|k| e1.scale(k)).collect();
    Ok(TrapCollar { cube, a, b })
}

impl TrapCollar {
    pub fn union(&self) -> BTreeSet<Site> {
        self.a.union(&self.b).copied().collect()
    }

    /// Nearest-neighbor connectivity of `A ∪ B`.
    pub fn is_connected(&self) -> bool {
        let all = self.union();
        let Some(start) = all.iter().next().copied() else {
            return true;
        };
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for y in x.neighbors() {
                if all.contains(&y) && seen.insert(y) {
                    queue.push_back(y);
                }
            }
        }
        seen.len() == all.len()
    }

    pub fn contains_cube_boundary(&self) -> bool {
        self.cube.boundary().iter().all(|y| self.a.contains(y))
    }

    /// Whether every site of `A` is strictly ahead of the origin along `ell`.
    pub fn ahead_of_origin(&self, ell: &[f64]) -> bool {
        self.a.iter().all(|z| z.dot(ell) > 0.0)
    }

    /// Shortest path inside `A ∪ B` (inclusive endpoints), if any.
    pub fn shortest_path(&self, from: &Site, to: &Site) -> Option<Vec<Site>> {
        let all = self.union();
        if !all.contains(from) || !all.contains(to) {
            return None;
        }
        let mut prev = std::collections::HashMap::from([(*from, *from)]);
        let mut queue = VecDeque::from([*from]);
        while let Some(x) = queue.pop_front() {
            if x == *to {
                let mut path = vec![x];
                let mut cur = x;
                while cur != *from {
                    cur = prev[&cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for y in x.neighbors() {
                if all.contains(&y) && !prev.contains_key(&y) {
                    prev.insert(y, x);
                    queue.push_back(y);
                }
            }
        }
        None
    }
}
