//! Small absorbing Markov chains.
//!
//! Systems `(I - P) x = b` with `P` substochastic, `b >= 0` are solved by
//! Gaussian elimination in the Grassmann–Taksar–Heyman form: every pivot is
//! formed as "exit mass + mass to not-yet-eliminated states" rather than
//! `1 - P_kk`, so no subtraction ever occurs. The result keeps full relative
//! precision even when a state leaks with probability `1e-17` per step, where
//! partial-pivoting LU loses every digit.

use crate::error::{Error, Result};

/// Transient part of an absorbing chain.
#[derive(Clone, Debug)]
pub struct AbsorbingChain {
    n: usize,
    /// Row-major `n × n`, diagonal ignored.
    p: Vec<f64>,
    /// Mass leaving each state to the absorbing set.
    exit: Vec<f64>,
}

impl AbsorbingChain {
    pub fn new(n: usize, p: Vec<f64>, exit: Vec<f64>) -> Result<AbsorbingChain> {
        if p.len() != n * n || exit.len() != n {
            return Err(Error::param("chain: matrix size mismatch"));
        }
        if p.iter().chain(&exit).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::param("chain: negative or non-finite entry"));
        }
        Ok(AbsorbingChain { n, p, exit })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn exit(&self) -> &[f64] {
        &self.exit
    }

    /// The chain with state `k` turned absorbing; the returned chain indexes
    /// the remaining states in increasing order.
    pub fn kill(&self, k: usize) -> AbsorbingChain {
        let idx: Vec<usize> = (0..self.n).filter(|&i| i != k).collect();
        let m = idx.len();
        let mut p = vec![0.0; m * m];
        let mut exit = vec![0.0; m];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                p[a * m + b] = self.p(i, j);
            }
            exit[a] = self.exit[i] + self.p(i, k);
        }
        AbsorbingChain { n: m, p, exit }
    }

    pub fn factor(&self) -> Result<Factor> {
        let n = self.n;
        let mut p = self.p.clone();
        let mut exit = self.exit.clone();
        let mut pivot = vec![0.0; n];
        for k in 0..n {
            let piv = exit[k] + (k + 1..n).map(|j| p[k * n + j]).sum::<f64>();
            if !(piv > 0.0) {
                return Err(Error::DegenerateEnvironment(format!(
                    "state {k} cannot leave the set of remaining states"
                )));
            }
            pivot[k] = piv;
            for i in k + 1..n {
                let pik = p[i * n + k];
                if pik == 0.0 {
                    continue;
                }
                let f = pik / piv;
                // store the multiplier in place of the eliminated entry
                p[i * n + k] = f;
                for j in k + 1..n {
                    p[i * n + j] += f * p[k * n + j];
                }
                exit[i] += f * exit[k];
            }
        }
        Ok(Factor { n, lu: p, pivot })
    }
}

/// Subtraction-free factorization of `I - P`.
#[derive(Clone, Debug)]
pub struct Factor {
    n: usize,
    /// Strict lower part: multipliers. Strict upper part: reduced `P`.
    lu: Vec<f64>,
    pivot: Vec<f64>,
}

impl Factor {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solve `(I - P) x = b` for `b >= 0`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        debug_assert!(b.iter().all(|x| *x >= 0.0));
        let mut y = b.to_vec();
        for k in 0..n {
            if y[k] == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let f = self.lu[i * n + k];
                if f != 0.0 {
                    y[i] += f * y[k];
                }
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| self.lu[k * n + j] * x[j]).sum();
            x[k] = (y[k] + s) / self.pivot[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn lu_oracle(c: &AbsorbingChain, b: &[f64]) -> Vec<f64> {
        let n = c.n();
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { -c.p(i, j) });
        a.lu().solve(&DVector::from_column_slice(b)).unwrap().iter().copied().collect()
    }

    fn random_chain(n: usize, seed: u64) -> AbsorbingChain {
        let mut s = crate::rng::CounterStream::new(seed);
        let mut p = vec![0.0; n * n];
        let mut exit = vec![0.0; n];
        for i in 0..n {
            let w: Vec<f64> = (0..=n).map(|_| s.next_f64()).collect();
            let tot: f64 = w.iter().sum();
            for j in 0..n {
                if j != i {
                    p[i * n + j] = w[j] / tot;
                }
            }
            exit[i] = (w[n] + w[i]) / tot;
        }
        AbsorbingChain::new(n, p, exit).unwrap()
    }

    #[test]
    fn matches_lu_on_random_chains() {
        for seed in 0..50 {
            let c = random_chain(8, seed);
            let f = c.factor().unwrap();
            let b: Vec<f64> = (0..8).map(|i| (i % 3) as f64).collect();
            let x = f.solve(&b);
            let y = lu_oracle(&c, &b);
            for (u, v) in x.iter().zip(&y) {
                assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn two_state_closed_form() {
        // states 0 <-> 1 with leak r at each: mean absorption time 1/r
        for r in [0.5, 1e-3, 1e-12, 1e-17] {
            let c = AbsorbingChain::new(2, vec![0.0, 1.0 - r, 1.0 - r, 0.0], vec![r, r]).unwrap();
            let x = c.factor().unwrap().solve(&[1.0, 1.0]);
            assert!((x[0] * r - 1.0).abs() < 1e-12, "r = {r}: {}", x[0]);
        }
    }

    #[test]
    fn closed_class_is_degenerate() {
        let c = AbsorbingChain::new(2, vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(c.factor(), Err(Error::DegenerateEnvironment(_))));
    }

    #[test]
    fn killing_moves_mass_to_exit() {
        let c = random_chain(4, 9);
        let k = c.kill(2);
        assert_eq!(k.n(), 3);
        assert!((k.exit()[2] - (c.exit()[3] + c.p(3, 2))).abs() < 1e-15);
        assert_eq!(k.p(0, 2), c.p(0, 3));
    }
}
