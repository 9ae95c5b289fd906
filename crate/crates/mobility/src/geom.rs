//! Small fixed-capacity vectors and symmetric matrices for spatial dimension
//! d ∈ {2, 3}. Points are `[f64; 3]` with only the first `d` entries live;
//! carrying the dimension separately keeps the hot loops allocation-free.

pub const MAX_DIM: usize = 3;

/// A point or vector; entries past the active dimension are zero.
pub type Coord = [f64; MAX_DIM];

pub const ZERO: Coord = [0.0; MAX_DIM];

#[inline]
pub fn e1() -> Coord {
    [1.0, 0.0, 0.0]
}

#[inline]
pub fn dot(d: usize, a: &Coord, b: &Coord) -> f64 {
    let mut s = 0.0;
    for k in 0..d {
        s += a[k] * b[k];
    }
    s
}

#[inline]
pub fn norm(d: usize, a: &Coord) -> f64 {
    dot(d, a, a).sqrt()
}

#[inline]
pub fn sub(d: usize, a: &Coord, b: &Coord) -> Coord {
    let mut r = ZERO;
    for k in 0..d {
        r[k] = a[k] - b[k];
    }
    r
}

#[inline]
pub fn axpy(d: usize, alpha: f64, x: &Coord, y: &mut Coord) {
    for k in 0..d {
        y[k] += alpha * x[k];
    }
}

#[inline]
pub fn scale(d: usize, alpha: f64, x: &Coord) -> Coord {
    let mut r = ZERO;
    for k in 0..d {
        r[k] = alpha * x[k];
    }
    r
}

/// Symmetric d×d matrix in packed storage: diagonal first, then the strict
/// upper triangle in row order (xy, xz, yz for d = 3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat {
    pub d: usize,
    diag: [f64; MAX_DIM],
    off: [f64; 3],
}

impl SymMat {
    pub fn zeros(d: usize) -> Self {
        SymMat {
            d,
            diag: [0.0; MAX_DIM],
            off: [0.0; 3],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for k in 0..d {
            m.diag[k] = 1.0;
        }
        m
    }

    pub fn scaled_identity(d: usize, c: f64) -> Self {
        let mut m = Self::zeros(d);
        for k in 0..d {
            m.diag[k] = c;
        }
        m
    }

    pub fn diagonal(d: usize, entries: &[f64]) -> Self {
        let mut m = Self::zeros(d);
        for k in 0..d {
            m.diag[k] = entries[k];
        }
        m
    }

    #[inline]
    fn off_index(i: usize, j: usize) -> usize {
        // (0,1) -> 0, (0,2) -> 1, (1,2) -> 2
        debug_assert!(i < j);
        i + j - 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i < j {
            self.off[Self::off_index(i, j)]
        } else {
            self.off[Self::off_index(j, i)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i == j {
            self.diag[i] = v;
        } else if i < j {
            self.off[Self::off_index(i, j)] = v;
        } else {
            self.off[Self::off_index(j, i)] = v;
        }
    }

    #[inline]
    pub fn add_assign(&mut self, other: &SymMat) {
        for k in 0..MAX_DIM {
            self.diag[k] += other.diag[k];
        }
        for k in 0..3 {
            self.off[k] += other.off[k];
        }
    }

    #[inline]
    pub fn scale(&self, c: f64) -> SymMat {
        let mut m = *self;
        for k in 0..MAX_DIM {
            m.diag[k] *= c;
        }
        for k in 0..3 {
            m.off[k] *= c;
        }
        m
    }

    /// Matrix-vector product.
    #[inline]
    pub fn mul_vec(&self, x: &Coord) -> Coord {
        let mut r = ZERO;
        for i in 0..self.d {
            let mut s = 0.0;
            for j in 0..self.d {
                s += self.get(i, j) * x[j];
            }
            r[i] = s;
        }
        r
    }

    /// Rayleigh quotient ξ·Mξ / |ξ|².
    pub fn rayleigh(&self, xi: &Coord) -> f64 {
        let mx = self.mul_vec(xi);
        dot(self.d, xi, &mx) / dot(self.d, xi, xi)
    }

    /// Eigenvalues in ascending order (closed form for d = 2, cyclic Jacobi
    /// for d = 3).
    pub fn eigenvalues(&self) -> [f64; MAX_DIM] {
        match self.d {
            2 => {
                let (a, c, b) = (self.diag[0], self.diag[1], self.off[0]);
                let mean = 0.5 * (a + c);
                let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                [mean - r, mean + r, 0.0]
            }
            3 => {
                let (q, _) = self.jacobi();
                let mut ev = q;
                ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
                ev
            }
            _ => panic!("unsupported dimension {}", self.d),
        }
    }

    /// Symmetric positive-definite square root. Exact 2×2 formula; for 3×3 a
    /// Jacobi eigendecomposition. Requires the matrix to be SPD.
    pub fn sqrt_spd(&self) -> SymMat {
        match self.d {
            2 => {
                let (a, c, b) = (self.diag[0], self.diag[1], self.off[0]);
                let det = a * c - b * b;
                assert!(det > 0.0 && a + c > 0.0, "matrix is not SPD");
                let s = det.sqrt();
                let t = (a + c + 2.0 * s).sqrt();
                let mut m = SymMat::zeros(2);
                m.diag[0] = (a + s) / t;
                m.diag[1] = (c + s) / t;
                m.off[0] = b / t;
                m
            }
            3 => {
                let (ev, vecs) = self.jacobi_full();
                let mut m = SymMat::zeros(3);
                for i in 0..3 {
                    for j in i..3 {
                        let mut s = 0.0;
                        for k in 0..3 {
                            assert!(ev[k] > 0.0, "matrix is not SPD");
                            s += vecs[i][k] * ev[k].sqrt() * vecs[j][k];
                        }
                        m.set(i, j, s);
                    }
                }
                m
            }
            _ => panic!("unsupported dimension {}", self.d),
        }
    }

    fn jacobi(&self) -> ([f64; MAX_DIM], ()) {
        let (ev, _) = self.jacobi_full();
        (ev, ())
    }

    /// Cyclic Jacobi for the 3×3 case: deterministic sweeps until off-diagonal
    /// mass is at rounding level. Returns (eigenvalues, column eigenvectors).
    fn jacobi_full(&self) -> ([f64; MAX_DIM], [[f64; 3]; 3]) {
        let mut a = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = self.get(i, j);
            }
        }
        let mut v = [[0.0f64; 3]; 3];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _sweep in 0..50 {
            let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
            if off < 1e-30 {
                break;
            }
            for p in 0..2 {
                for q in (p + 1)..3 {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..3 {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..3 {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for k in 0..3 {
                        let vkp = v[k][p];
                        let vkq = v[k][q];
                        v[k][p] = c * vkp - s * vkq;
                        v[k][q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        ([a[0][0], a[1][1], a[2][2]], v)
    }

    /// Frobenius norm of M - Mᵀ; zero by construction for this storage, kept
    /// for dense imports.
    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                let v = self.get(i, j);
                s += v * v;
            }
        }
        s.sqrt()
    }
}

/// Dense (possibly non-symmetric) d×d matrix for reporting: the homogenized
/// matrix is assembled column by column and its asymmetry is a diagnostic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenseMat {
    pub d: usize,
    pub entries: [[f64; MAX_DIM]; MAX_DIM],
}

impl DenseMat {
    pub fn zeros(d: usize) -> Self {
        DenseMat {
            d,
            entries: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn scaled_identity(d: usize, c: f64) -> Self {
        let mut m = Self::zeros(d);
        for k in 0..d {
            m.entries[k][k] = c;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i][j] = v;
    }

    pub fn mul_vec(&self, x: &Coord) -> Coord {
        let mut r = ZERO;
        for i in 0..self.d {
            for j in 0..self.d {
                r[i] += self.entries[i][j] * x[j];
            }
        }
        r
    }

    pub fn column(&self, j: usize) -> Coord {
        let mut r = ZERO;
        for i in 0..self.d {
            r[i] = self.entries[i][j];
        }
        r
    }

    /// Frobenius norm of the antisymmetric part.
    pub fn asymmetry(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                let v = self.entries[i][j] - self.entries[j][i];
                s += v * v;
            }
        }
        s.sqrt()
    }

    /// Symmetrized copy.
    pub fn symmetrized(&self) -> SymMat {
        let mut m = SymMat::zeros(self.d);
        for i in 0..self.d {
            for j in i..self.d {
                m.set(i, j, 0.5 * (self.entries[i][j] + self.entries[j][i]));
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &DenseMat) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                m = m.max((self.entries[i][j] - other.entries[i][j]).abs());
            }
        }
        m
    }
}
