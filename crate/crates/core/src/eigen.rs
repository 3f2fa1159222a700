//! Full eigendecomposition of dense real symmetric matrices.
//!
//! Householder reduction to tridiagonal form followed by the implicit-shift
//! QL iteration, both accumulating the orthogonal transformation (the
//! classic `tred2`/`tql2` pair of EISPACK). The transformation is stored
//! transposed, one eigenvector per contiguous row, so every inner loop of
//! both phases runs over unit-stride memory.

use crate::error::{Error, Result};
use crate::model::DenseSymmetricMatrix;

/// QL iterations allowed per eigenvalue before giving up.
pub const MAX_QL_ITERATIONS: usize = 50;

/// Ascending eigenvalues with orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    dim: usize,
    energies: Vec<f64>,
    /// `vectors[k * dim + a]` is component `a` of eigenvector `k`.
    vectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Eigenvector belonging to `energies()[k]`.
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    /// Matrix element `V_{a k}`: component `a` of eigenvector `k`.
    pub fn component(&self, a: usize, k: usize) -> f64 {
        self.vectors[k * self.dim + a]
    }

    /// Build from explicit parts; `vectors` holds one eigenvector per row.
    pub fn from_parts(energies: Vec<f64>, vectors: Vec<f64>) -> Result<Self> {
        let dim = energies.len();
        if vectors.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} vector entries for dimension {dim}, got {}",
                dim * dim,
                vectors.len()
            )));
        }
        Ok(Self {
            dim,
            energies,
            vectors,
        })
    }

    /// `max |V^T V - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(self.vector(i), self.vector(j)) - target).abs());
            }
        }
        worst
    }

    /// `max_k |H v_k - E_k v_k|_2`.
    pub fn max_residual(&self, h: &DenseSymmetricMatrix) -> f64 {
        (0..self.dim)
            .map(|k| {
                let v = self.vector(k);
                let hv = h.mul_vec(v);
                hv.iter()
                    .zip(v)
                    .map(|(a, b)| (a - self.energies[k] * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Diagonalize `h`, consuming it to reuse its storage.
pub fn diagonalize(h: DenseSymmetricMatrix) -> Result<EigenDecomposition> {
    let n = h.dim();
    if n == 0 {
        return Err(Error::invalid("cannot diagonalize an empty matrix"));
    }
    let mut t = h.into_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut t, &mut d, &mut e);
    ql_implicit(n, &mut t, &mut d, &mut e)?;
    sort_ascending(n, &mut t, &mut d);
    Ok(EigenDecomposition {
        dim: n,
        energies: d,
        vectors: t,
    })
}

/// Thirty-two independent partial sums so the loop vectorizes without a
/// serial dependency; the summation order is fixed, so results are
/// reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 32;
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    for (l, (x, y)) in ra.iter().zip(rb).enumerate() {
        acc[l] += x * y;
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for l in 0..width {
            acc[l] += acc[l + width];
        }
    }
    acc[0]
}

/// Householder tridiagonalization. `t` holds the symmetric input and is
/// overwritten with the transpose of the accumulated orthogonal matrix
/// (`t[j * n + k] = Q[k][j]`). On exit `d` is the diagonal and `e[1..]` the
/// subdiagonal.
fn tridiagonalize(n: usize, t: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = t[j * n + n - 1];
    }

    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = t[j * n + i - 1];
                t[j * n + i] = 0.0;
                t[i * n + j] = 0.0;
            }
        } else {
            for x in d[..i].iter_mut() {
                *x /= scale;
                h += *x * *x;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].fill(0.0);

            // e <- A u over the leading i x i block (lower triangle stored in
            // the upper part of each row of t).
            {
                let (head, row_i) = t.split_at_mut(i * n);
                for j in 0..i {
                    let f = d[j];
                    row_i[j] = f;
                    let row = &head[j * n..j * n + i];
                    let mut g = e[j] + row[j] * f;
                    let tail = &row[j + 1..i];
                    g += dot(tail, &d[j + 1..i]);
                    for (ek, &a) in e[j + 1..i].iter_mut().zip(tail) {
                        *ek += a * f;
                    }
                    e[j] = g;
                }
            }

            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                let row = &mut t[j * n..j * n + i];
                for ((a, &ek), &dk) in row[j..i].iter_mut().zip(&e[j..i]).zip(&d[j..i]) {
                    *a -= f * ek + g * dk;
                }
                d[j] = t[j * n + i - 1];
                t[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations, a block of reflectors at a time. Each
    // row only ever sees reflectors in increasing order, exactly as in the
    // unblocked loop, but stays cache resident across the whole block.
    const BLOCK: usize = 32;
    let mut reflectors = vec![0.0; BLOCK * n];
    let mut scaled = vec![0.0; BLOCK * n];
    for i0 in (0..n - 1).step_by(BLOCK) {
        let i1 = (i0 + BLOCK).min(n - 1);
        for i in i0..i1 {
            let r = i - i0;
            t[i * n + n - 1] = t[i * n + i];
            t[i * n + i] = 1.0;
            let u = &mut t[(i + 1) * n..(i + 1) * n + i + 1];
            let h = d[i + 1];
            reflectors[r * n..r * n + i + 1].copy_from_slice(u);
            if h != 0.0 {
                for (s, &x) in scaled[r * n..r * n + i + 1].iter_mut().zip(u.iter()) {
                    *s = x / h;
                }
            }
            u.fill(0.0);
        }
        for j in 0..i1 {
            let row = &mut t[j * n..j * n + i1];
            for i in i0.max(j)..i1 {
                let r = i - i0;
                if d[i + 1] == 0.0 {
                    continue;
                }
                let u = &reflectors[r * n..r * n + i + 1];
                let dk = &scaled[r * n..r * n + i + 1];
                let prefix = &mut row[..i + 1];
                let g = dot(u, prefix);
                for (a, &x) in prefix.iter_mut().zip(dk) {
                    *a -= g * x;
                }
            }
        }
    }
    for j in 0..n {
        d[j] = t[j * n + n - 1];
        t[j * n + n - 1] = 0.0;
    }
    t[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on the tridiagonal `(d, e)`, rotating the rows of `t`.
fn ql_implicit(n: usize, t: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    let mut rotations = Vec::with_capacity(ROTATION_BATCH.min(n * n) + n);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::NoConvergence { dim: n, index: l });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in d[l + 2..n].iter_mut() {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    rotations.push(Rotation { row: i, c, s });
                }
                if rotations.len() >= ROTATION_BATCH {
                    apply_rotations(n, t, &rotations);
                    rotations.clear();
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    apply_rotations(n, t, &rotations);
    Ok(())
}

/// Replays the rotations over a packed `n x w` panel. Runs of rotations on
/// rows `(i, i+1), (i-1, i), ...` are applied as one chain that carries the
/// shared row in registers.
fn replay_panel(panel: &mut [f64], w: usize, rotations: &[Rotation]) {
    const LANES: usize = 32;
    let mut start = 0;
    while start < rotations.len() {
        let mut end = start + 1;
        while end < rotations.len() && rotations[end].row + 1 == rotations[end - 1].row {
            end += 1;
        }
        let chain = &rotations[start..end];
        let top = chain[0].row + 1;
        let bottom = chain[chain.len() - 1].row;
        let mut col = 0;
        while col + LANES <= w {
            let mut carry = [0.0; LANES];
            carry.copy_from_slice(&panel[top * w + col..top * w + col + LANES]);
            for rot in chain {
                let base = rot.row * w + col;
                let mut a = [0.0; LANES];
                a.copy_from_slice(&panel[base..base + LANES]);
                let mut nb = [0.0; LANES];
                for l in 0..LANES {
                    nb[l] = rot.s * a[l] + rot.c * carry[l];
                    carry[l] = rot.c * a[l] - rot.s * carry[l];
                }
                panel[base + w..base + w + LANES].copy_from_slice(&nb);
            }
            panel[bottom * w + col..bottom * w + col + LANES].copy_from_slice(&carry);
            col += LANES;
        }
        while col < w {
            let mut carry = panel[top * w + col];
            for rot in chain {
                let a = panel[rot.row * w + col];
                panel[(rot.row + 1) * w + col] = rot.s * a + rot.c * carry;
                carry = rot.c * a - rot.s * carry;
            }
            panel[bottom * w + col] = carry;
            col += 1;
        }
        start = end;
    }
}

#[derive(Clone, Copy)]
struct Rotation {
    row: usize,
    c: f64,
    s: f64,
}

/// Rotations are buffered and replayed over narrow column panels so the
/// panel of `t` stays cache resident. The rotations never feed back into the
/// tridiagonal iteration, and each element sees them in the original order.
const ROTATION_BATCH: usize = 1 << 20;
const PANEL: usize = 64;

fn apply_rotations(n: usize, t: &mut [f64], rotations: &[Rotation]) {
    if rotations.is_empty() {
        return;
    }
    // Packing the panel contiguously keeps the replay inside a few pages; a
    // strided walk over thousands of rows thrashes the TLB.
    let mut panel = vec![0.0; n * PANEL];
    for c0 in (0..n).step_by(PANEL) {
        let w = PANEL.min(n - c0);
        for r in 0..n {
            panel[r * w..(r + 1) * w].copy_from_slice(&t[r * n + c0..r * n + c0 + w]);
        }
        replay_panel(&mut panel[..n * w], w, rotations);
        for r in 0..n {
            t[r * n + c0..r * n + c0 + w].copy_from_slice(&panel[r * w..(r + 1) * w]);
        }
    }
}

fn sort_ascending(n: usize, t: &mut [f64], d: &mut [f64]) {
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in i + 1..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            let (lo, hi) = t.split_at_mut(k * n);
            lo[i * n..(i + 1) * n].swap_with_slice(&mut hi[..n]);
        }
    }
}

/// `M_nm = <n| diag(d) |m>` in the eigenbasis.
#[derive(Clone, Debug)]
pub struct ObservableMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl ObservableMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.data[n * self.dim + m]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|n| self.get(n, n)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|n| self.get(n, n)).sum()
    }

    /// Exactly symmetric row-major data.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::invalid("observable data has wrong length"));
        }
        let m = Self { dim, data };
        for n in 0..dim {
            for k in 0..n {
                if m.get(n, k) != m.get(k, n) {
                    return Err(Error::invalid("observable matrix is not symmetric"));
                }
            }
        }
        Ok(m)
    }
}

/// Rotate a diagonal operator into the eigenbasis: `M_nm = sum_a V_an d_a V_am`.
pub fn rotate_diagonal_observable(
    decomp: &EigenDecomposition,
    diag: &[f64],
) -> Result<ObservableMatrix> {
    let n = decomp.dim;
    if diag.len() != n {
        return Err(Error::invalid(format!(
            "observable has length {}, decomposition has dimension {n}",
            diag.len()
        )));
    }
    const BLOCK: usize = 16;
    let mut data = vec![0.0; n * n];
    let mut scaled = vec![0.0; BLOCK * n];
    for start in (0..n).step_by(BLOCK) {
        let rows = BLOCK.min(n - start);
        for r in 0..rows {
            let v = decomp.vector(start + r);
            for ((s, &x), &w) in scaled[r * n..(r + 1) * n].iter_mut().zip(v).zip(diag) {
                *s = x * w;
            }
        }
        for m in start..n {
            let vm = decomp.vector(m);
            for r in 0..rows.min(m - start + 1) {
                let value = dot(&scaled[r * n..(r + 1) * n], vm);
                let row = start + r;
                data[row * n + m] = value;
                data[m * n + row] = value;
            }
        }
    }
    Ok(ObservableMatrix { dim: n, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_symmetric(n: usize, seed: u64) -> DenseSymmetricMatrix {
        let mut rng = SplitMix64::new(seed);
        let mut m = DenseSymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.set_sym(i, j, rng.next_symmetric());
            }
        }
        m
    }

    #[test]
    fn one_by_one() {
        let h = DenseSymmetricMatrix::from_row_major(1, vec![3.0]).unwrap();
        let dec = diagonalize(h).unwrap();
        assert_eq!(dec.energies(), &[3.0]);
        assert_eq!(dec.vector(0), &[1.0]);
    }

    #[test]
    fn diagonal_input() {
        let diag = [0.5, -2.0, 7.0, 1.0];
        let mut h = DenseSymmetricMatrix::zeros(4);
        for (i, &x) in diag.iter().enumerate() {
            h.set_sym(i, i, x);
        }
        let dec = diagonalize(h).unwrap();
        assert_eq!(dec.energies(), &[-2.0, 0.5, 1.0, 7.0]);
        for (k, &orig) in [1usize, 0, 3, 2].iter().enumerate() {
            for a in 0..4 {
                let expect = if a == orig { 1.0 } else { 0.0 };
                assert_eq!(dec.component(a, k).abs(), expect);
            }
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        for &(a, b, c) in &[(1.0, 2.0, 0.5), (-3.0, 4.0, 2.5), (0.0, 0.0, 1.0), (5.0, 5.0, -1e-3)] {
            let h = DenseSymmetricMatrix::from_row_major(2, vec![a, c, c, b]).unwrap();
            let dec = diagonalize(h).unwrap();
            let mid = 0.5 * (a + b);
            let rad = (0.25 * (a - b) * (a - b) + c * c).sqrt();
            assert!((dec.energies()[0] - (mid - rad)).abs() < 1e-14);
            assert!((dec.energies()[1] - (mid + rad)).abs() < 1e-14);
        }
    }

    #[test]
    fn random_matrix_contracts() {
        for (n, seed) in [(2, 1), (3, 2), (17, 3), (64, 4), (150, 5)] {
            let h = random_symmetric(n, seed);
            let norm = h.frobenius_norm();
            let trace = h.trace();
            let dec = diagonalize(h.clone()).unwrap();
            assert!(dec.energies().windows(2).all(|w| w[0] <= w[1]));
            assert!(dec.orthogonality_error() <= 1e-10);
            assert!(dec.max_residual(&h) <= 1e-8 * norm);
            let sum: f64 = dec.energies().iter().sum();
            assert!((sum - trace).abs() <= 1e-8 * norm);
        }
    }

    #[test]
    fn zero_matrix() {
        let dec = diagonalize(DenseSymmetricMatrix::zeros(5)).unwrap();
        assert!(dec.energies().iter().all(|&x| x == 0.0));
        assert!(dec.orthogonality_error() <= 1e-15);
    }

    #[test]
    fn deterministic() {
        let h = random_symmetric(40, 11);
        let a = diagonalize(h.clone()).unwrap();
        let b = diagonalize(h).unwrap();
        assert_eq!(a.energies(), b.energies());
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn permutation_similarity_preserves_spectrum() {
        let n = 30;
        let h = random_symmetric(n, 21);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = SplitMix64::new(99);
        for i in (1..n).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            perm.swap(i, j);
        }
        let mut p = DenseSymmetricMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                p.set_sym(i, j, h.get(perm[i], perm[j]));
            }
        }
        let a = diagonalize(h).unwrap();
        let b = diagonalize(p).unwrap();
        for (x, y) in a.energies().iter().zip(b.energies()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_identity_and_trace() {
        let n = 5;
        let mut vectors = vec![0.0; n * n];
        for k in 0..n {
            vectors[k * n + k] = 1.0;
        }
        let dec = EigenDecomposition::from_parts(vec![0.0, 1.0, 2.0, 3.0, 4.0], vectors).unwrap();
        let d = [0.5, -0.5, 0.5, 0.5, -0.5];
        let m = rotate_diagonal_observable(&dec, &d).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(m.get(i, j), if i == j { d[i] } else { 0.0 });
            }
        }
        assert!(rotate_diagonal_observable(&dec, &d[..3]).is_err());

        let h = random_symmetric(37, 8);
        let dec = diagonalize(h).unwrap();
        let d: Vec<f64> = (0..37).map(|a| if a % 3 == 0 { 0.5 } else { -0.5 }).collect();
        let m = rotate_diagonal_observable(&dec, &d).unwrap();
        assert!((m.trace() - d.iter().sum::<f64>()).abs() < 1e-10);
        for r in 0..37 {
            let row_sq: f64 = m.row(r).iter().map(|x| x * x).sum();
            assert!((row_sq - 0.25).abs() < 1e-10);
            assert!(m.row(r).iter().all(|x| x.abs() <= 0.5 + 1e-12));
        }
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..29).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..29).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
