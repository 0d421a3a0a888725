//! Phase-space points `z = (z_j)_{j ∈ 𝒵}` on a truncated lattice, the
//! weighted ℓ¹ norms `‖z‖_ρ = Σ e^{ρ|j|} |z_j|`, the tail functional and the
//! conversions to and from functions on the torus.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Index, Lattice, Sign};
use crate::scalar::{cast, CompensatedSum, Real};
use crate::spectral::GridTransform;

/// Sparse coefficient sequence on a lattice.
#[derive(Clone, Debug)]
pub struct State<S: Real> {
    lattice: Arc<Lattice>,
    coeffs: BTreeMap<Index, Complex<S>>,
}

impl<S: Real> PartialEq for State<S> {
    fn eq(&self, other: &Self) -> bool {
        self.lattice == other.lattice && self.coeffs == other.coeffs
    }
}

impl<S: Real> State<S> {
    pub fn zero(lattice: Arc<Lattice>) -> Self {
        Self { lattice, coeffs: BTreeMap::new() }
    }

    /// Real state with the given `ξ_a`; `η_a = conj(ξ_a)` is filled in.
    pub fn from_xi<I>(lattice: Arc<Lattice>, xi: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<i64>, Complex<S>)>,
    {
        let mut z = Self::zero(lattice);
        for (a, c) in xi {
            let site = z.lattice.require_site(&a)?;
            z.set_xi(site, c);
        }
        Ok(z)
    }

    /// Dense `ξ` vector indexed by site number; `η = conj(ξ)`.
    pub fn from_xi_dense(lattice: Arc<Lattice>, xi: &[Complex<S>]) -> Self {
        assert_eq!(xi.len(), lattice.n_sites());
        let mut z = Self::zero(lattice);
        for (site, &c) in xi.iter().enumerate() {
            if c != Complex::default() {
                z.set_xi(site as u32, c);
            }
        }
        z
    }

    /// Real state with `ξ_a` uniform in `[-1, 1]²` on every site, rescaled so
    /// that `‖z‖_ρ = norm`.
    pub fn random<R: rand::Rng + ?Sized>(lattice: Arc<Lattice>, rho: S, norm: S, rng: &mut R) -> Result<Self> {
        let xi: Vec<Complex<S>> = lattice
            .sites()
            .map(|_| Complex::new(cast::<S>(rng.random_range(-1.0..1.0)), cast::<S>(rng.random_range(-1.0..1.0))))
            .collect();
        let z = Self::from_xi_dense(lattice, &xi);
        let current = z.norm_rho(rho)?;
        Ok(z.scale(norm / current))
    }

    /// Dense vector indexed by [`Index::slot`].
    pub fn from_dense(lattice: Arc<Lattice>, values: &[Complex<S>]) -> Self {
        assert_eq!(values.len(), lattice.n_indices());
        let coeffs = values
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != Complex::default())
            .map(|(slot, &c)| (Index::from_slot(slot), c))
            .collect();
        Self { lattice, coeffs }
    }

    pub fn to_dense(&self) -> Vec<Complex<S>> {
        let mut v = vec![Complex::default(); self.lattice.n_indices()];
        for (j, c) in &self.coeffs {
            v[j.slot()] = *c;
        }
        v
    }

    /// Dense `ξ` by site number.
    pub fn xi_dense(&self) -> Vec<Complex<S>> {
        (0..self.lattice.n_sites() as u32).map(|s| self.get(Index::new(s, Sign::Plus))).collect()
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn set(&mut self, j: Index, value: Complex<S>) {
        assert!(self.lattice.contains_index(j), "index {j:?} outside lattice");
        self.coeffs.insert(j, value);
    }

    /// Sets `ξ_a = c` and `η_a = conj(c)`.
    pub fn set_xi(&mut self, site: u32, c: Complex<S>) {
        self.set(Index::new(site, Sign::Plus), c);
        self.set(Index::new(site, Sign::Minus), c.conj());
    }

    pub fn get(&self, j: Index) -> Complex<S> {
        self.coeffs.get(&j).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Index, Complex<S>)> + '_ {
        self.coeffs.iter().map(|(j, c)| (*j, *c))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `z_{j̄} = conj(z_j)` for all `j`, up to `tol` in absolute value.
    pub fn is_real(&self, tol: S) -> bool {
        self.coeffs.iter().all(|(j, c)| (self.get(j.conj()) - c.conj()).norm() <= tol)
    }

    pub fn scale(&self, s: S) -> Self {
        Self {
            lattice: Arc::clone(&self.lattice),
            coeffs: self.coeffs.iter().map(|(j, c)| (*j, *c * s)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (j, c) in &other.coeffs {
            let e = out.coeffs.entry(*j).or_default();
            *e = *e + *c;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-S::one()))
    }

    fn check_finite(&self) -> Result<()> {
        if self.coeffs.values().all(|c| c.re.is_finite() && c.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("state coefficients"))
        }
    }

    fn weighted_sum(&self, rho: S, keep: impl Fn(f64) -> bool) -> Result<S> {
        if !(rho >= S::zero()) {
            return Err(Error::param("rho", "must be a nonnegative number"));
        }
        self.check_finite()?;
        let lattice = &self.lattice;
        Ok(self
            .coeffs
            .iter()
            .filter(|(j, _)| keep(lattice.modulus(j.site())))
            .map(|(j, c)| (rho * cast::<S>(lattice.modulus(j.site()))).exp() * c.norm())
            .collect::<CompensatedSum<S>>()
            .value())
    }

    /// `‖z‖_ρ = Σ_j e^{ρ|j|} |z_j|`.
    pub fn norm_rho(&self, rho: S) -> Result<S> {
        self.weighted_sum(rho, |_| true)
    }

    /// Tail functional `Σ_{|j| > N} e^{ρ|j|} |z_j|`.
    pub fn tail_norm(&self, rho: S, n: f64) -> Result<S> {
        self.weighted_sum(rho, |m| m > n)
    }

    /// Fourier synthesis `u(x + iy) = Σ_a ξ_a e^{i a·(x+iy)}` at complex points.
    /// Each point is a pair `(x, y)` of real `d`-vectors.
    pub fn to_function(&self, points: &[(Vec<S>, Vec<S>)]) -> Vec<Complex<S>> {
        let xi: Vec<(Vec<S>, Complex<S>)> = self
            .coeffs
            .iter()
            .filter(|(j, _)| j.sign() == Sign::Plus)
            .map(|(j, c)| {
                let a = self.lattice.coords(j.site()).iter().map(|&x| cast::<S>(x as f64)).collect();
                (a, *c)
            })
            .collect();
        points
            .iter()
            .map(|(x, y)| {
                let mut acc = Complex::default();
                for (a, c) in &xi {
                    let ax = a.iter().zip(x).fold(S::zero(), |s, (ai, xi)| s + *ai * *xi);
                    let ay = a.iter().zip(y).fold(S::zero(), |s, (ai, yi)| s + *ai * *yi);
                    // e^{i a·(x+iy)} = e^{-a·y} e^{i a·x}
                    acc = acc + *c * Complex::from_polar((-ay).exp(), ax);
                }
                acc
            })
            .collect()
    }

    /// Samples `u` on the uniform real grid with `m` points per axis, row-major.
    pub fn to_grid(&self, m: usize) -> Result<Vec<Complex<S>>> {
        let mut t = GridTransform::<S>::new(&self.lattice, m)?;
        let mut grid = vec![Complex::default(); t.len()];
        for (j, c) in &self.coeffs {
            if j.sign() == Sign::Plus {
                grid[t.bin(j.site())] = *c;
            }
        }
        t.inverse(&mut grid);
        Ok(grid)
    }

    /// Discrete Fourier analysis of grid samples of `u` (row-major, `m` points
    /// per axis), keeping the lattice modes. The result is real by
    /// construction: `η_a = conj(ξ_a)`.
    pub fn from_function(samples: &[Complex<S>], m: usize, lattice: Arc<Lattice>) -> Result<Self> {
        let mut t = GridTransform::<S>::new(&lattice, m)?;
        if samples.len() != t.len() {
            return Err(Error::param(
                "samples",
                format!("expected {} grid values, got {}", t.len(), samples.len()),
            ));
        }
        let mut grid = samples.to_vec();
        t.forward(&mut grid);
        let norm = cast::<S>(t.len() as f64).recip();
        let xi: Vec<Complex<S>> = lattice.sites().map(|s| grid[t.bin(s)] * norm).collect();
        Ok(Self::from_xi_dense(lattice, &xi))
    }

    /// Estimate of the strip norm `sup_{|Im x| <= mu} |u|`, sampled on the
    /// boundary `|y| = mu` (the maximum of `|u|` is attained there). In `d = 1`
    /// this is exact up to the `x` resolution; in higher dimension `y` runs
    /// over the coordinate and diagonal directions.
    pub fn strip_sup(&self, mu: S, samples_per_axis: usize) -> S {
        let d = self.lattice.dim();
        let m = samples_per_axis.max(self.lattice.side());
        let mut directions: Vec<Vec<S>> = Vec::new();
        for i in 0..d {
            for s in [S::one(), -S::one()] {
                let mut y = vec![S::zero(); d];
                y[i] = s * mu;
                directions.push(y);
            }
        }
        if d > 1 {
            let w = mu / cast::<S>((d as f64).sqrt());
            for mask in 0..(1u32 << d) {
                directions.push((0..d).map(|i| if mask >> i & 1 == 1 { w } else { -w }).collect());
            }
        }
        let tau = cast::<S>(std::f64::consts::TAU);
        let n_points = m.pow(d as u32);
        let mut best = S::zero();
        for y in &directions {
            let pts: Vec<(Vec<S>, Vec<S>)> = (0..n_points)
                .map(|mut n| {
                    let mut x = vec![S::zero(); d];
                    for xi in x.iter_mut().rev() {
                        *xi = tau * cast::<S>((n % m) as f64) / cast::<S>(m as f64);
                        n /= m;
                    }
                    (x, y.clone())
                })
                .collect();
            for v in self.to_function(&pts) {
                best = best.max(v.norm());
            }
        }
        best
    }
}

/// Constant `c_{ρ,μ} = (2 / (1 − e^{(μ−ρ)/√d}))^d` of the analytic/ℓ¹
/// comparison, defined for `μ < ρ`.
pub fn strip_constant(d: usize, rho: f64, mu: f64) -> Result<f64> {
    if !(mu < rho) {
        return Err(Error::param("mu", "must be smaller than rho"));
    }
    let base = 2.0 / (1.0 - ((mu - rho) / (d as f64).sqrt()).exp());
    Ok(base.powi(d as i32))
}

#[derive(Serialize, Deserialize)]
struct StateEntry {
    a: Vec<i64>,
    delta: i64,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct StateDoc {
    d: usize,
    #[serde(rename = "K")]
    k: usize,
    entries: Vec<StateEntry>,
}

impl State<f64> {
    pub fn to_json(&self) -> serde_json::Value {
        let entries = self
            .iter()
            .map(|(j, c)| StateEntry {
                a: self.lattice.coords(j.site()).into_vec(),
                delta: j.delta(),
                re: c.re,
                im: c.im,
            })
            .collect();
        let doc = StateDoc { d: self.lattice.dim(), k: self.lattice.radius(), entries };
        serde_json::to_value(doc).expect("state serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: StateDoc = serde_json::from_value(value.clone())?;
        let lattice = Arc::new(Lattice::new(doc.d, doc.k)?);
        let mut z = State::zero(Arc::clone(&lattice));
        for e in doc.entries {
            let j = lattice.index(&e.a, Sign::from_value(e.delta)?)?;
            z.set(j, Complex::new(e.re, e.im));
        }
        Ok(z)
    }

    /// CSV with columns `a0, …, a{d-1}, delta, re, im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.lattice.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..d).map(|i| format!("a{i}")).collect();
        header.extend(["delta", "re", "im"].map(String::from));
        w.write_record(&header)?;
        for (j, c) in self.iter() {
            let mut row: Vec<String> =
                self.lattice.coords(j.site()).iter().map(|x| x.to_string()).collect();
            row.push(j.delta().to_string());
            row.push(format!("{:e}", c.re));
            row.push(format!("{:e}", c.im));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, lattice: Arc<Lattice>) -> Result<Self> {
        let d = lattice.dim();
        let mut r = csv::Reader::from_reader(input);
        let mut z = State::zero(Arc::clone(&lattice));
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != d + 3 {
                return Err(Error::Schema {
                    context: "state csv".into(),
                    reason: format!("expected {} columns, got {}", d + 3, rec.len()),
                });
            }
            let parse_err = |field: &str| Error::Schema {
                context: "state csv".into(),
                reason: format!("unparsable field `{field}`"),
            };
            let ints: Vec<i64> = (0..=d)
                .map(|i| rec[i].trim().parse::<i64>().map_err(|_| parse_err(&rec[i])))
                .collect::<Result<_>>()?;
            let re: f64 = rec[d + 1].trim().parse().map_err(|_| parse_err(&rec[d + 1]))?;
            let im: f64 = rec[d + 2].trim().parse().map_err(|_| parse_err(&rec[d + 2]))?;
            z.set(lattice.index_from_slice(&ints)?, Complex::new(re, im));
        }
        Ok(z)
    }
}

/// Header of the binary grid format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridHeader {
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// Points per axis.
    pub grid: usize,
    /// `"complex64"` (two `f32`) or `"complex128"` (two `f64`).
    pub dtype: String,
}

/// Writes a one-line JSON header followed by little-endian row-major complex data.
pub fn write_grid<W: Write>(mut out: W, header: &GridHeader, data: &[Complex<f64>]) -> Result<()> {
    let expected = header.grid.pow(header.d as u32);
    if data.len() != expected {
        return Err(Error::param("data", format!("expected {expected} values, got {}", data.len())));
    }
    let io = |e| Error::io("grid output", e);
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n").map_err(io)?;
    match header.dtype.as_str() {
        "complex128" => {
            for c in data {
                out.write_all(&c.re.to_le_bytes()).map_err(io)?;
                out.write_all(&c.im.to_le_bytes()).map_err(io)?;
            }
        }
        "complex64" => {
            for c in data {
                out.write_all(&(c.re as f32).to_le_bytes()).map_err(io)?;
                out.write_all(&(c.im as f32).to_le_bytes()).map_err(io)?;
            }
        }
        other => return Err(Error::param("dtype", format!("unknown dtype `{other}`"))),
    }
    Ok(())
}

pub fn read_grid<R: Read>(input: R) -> Result<(GridHeader, Vec<Complex<f64>>)> {
    let io = |e| Error::io("grid input", e);
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line).map_err(io)?;
    let header: GridHeader = serde_json::from_str(line.trim_end())?;
    let n = header.grid.pow(header.d as u32);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(io)?;
    let width = match header.dtype.as_str() {
        "complex128" => 8,
        "complex64" => 4,
        other => return Err(Error::param("dtype", format!("unknown dtype `{other}`"))),
    };
    if bytes.len() != 2 * width * n {
        return Err(Error::Schema {
            context: "grid".into(),
            reason: format!("expected {} payload bytes, got {}", 2 * width * n, bytes.len()),
        });
    }
    let read = |chunk: &[u8]| -> f64 {
        if width == 8 {
            f64::from_le_bytes(chunk.try_into().expect("8 bytes"))
        } else {
            f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64
        }
    };
    let data = bytes
        .chunks_exact(2 * width)
        .map(|c| Complex::new(read(&c[..width]), read(&c[width..])))
        .collect();
    Ok((header, data))
}

pub fn read_grid_file(path: &Path) -> Result<(GridHeader, Vec<Complex<f64>>)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_grid(f)
}
