//! Perturbation sampling and kernel weights.
//!
//! A sample removes `s ~ U{1..d}` distinct words chosen uniformly among the
//! size-`s` subsets, every occurrence of a removed word included. Its weight
//! is `exp(-d_cos(1, z)^2 / (2 nu^2))`, which only depends on `s / d` through
//! `psi`.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, LocalDictionary};
use crate::error::{Error, Result};
use crate::report::csv_number;

/// Kernel bandwidth in the internal convention. The reference LIME
/// implementation multiplies this by 100.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub const LIME_SCALE: f64 = 100.0;
    /// The large-bandwidth limit, where every weight equals 1.
    pub const INFINITE: Bandwidth = Bandwidth(f64::INFINITY);

    pub fn new(nu: f64) -> Result<Self> {
        if nu > 0.0 {
            Ok(Self(nu))
        } else {
            Err(Error::InvalidBandwidth(nu))
        }
    }

    pub fn from_lime(nu_lime: f64) -> Result<Self> {
        Self::new(nu_lime / Self::LIME_SCALE).map_err(|_| Error::InvalidBandwidth(nu_lime))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn lime(self) -> f64 {
        self.0 * Self::LIME_SCALE
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `exp(-1 / (2 nu^2))`, the smallest possible weight.
    pub fn min_weight(self) -> f64 {
        psi(1.0, self)
    }
}

impl TryFrom<f64> for Bandwidth {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Bandwidth> for f64 {
    fn from(b: Bandwidth) -> f64 {
        b.0
    }
}

impl std::fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// `psi(t) = exp(-(1 - sqrt(1 - t))^2 / (2 nu^2))`, the weight of a sample
/// with a fraction `t` of its distinct words removed.
pub fn psi(t: f64, nu: Bandwidth) -> f64 {
    debug_assert!((0.0..=1.0).contains(&t), "t = {t}");
    let r = 1.0 - (1.0 - t.clamp(0.0, 1.0)).sqrt();
    (-(r * r) / (2.0 * nu.0 * nu.0)).exp()
}

/// `1 - <u, v> / (|u| |v|)`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    assert_eq!(u.len(), v.len(), "dimension mismatch");
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::UndefinedCosineDistance);
    }
    Ok(1.0 - uv / (uu.sqrt() * vv.sqrt()))
}

/// Kernel weight of the interpretable vector `z`, computed from the cosine
/// distance to the all-ones vector. The all-absent vector (every word
/// removed) gets `psi(1)`.
pub fn weight(z: &[bool], nu: Bandwidth) -> f64 {
    if !z.iter().any(|&b| b) {
        return psi(1.0, nu);
    }
    let ones = vec![1.0; z.len()];
    let zf: Vec<f64> = z.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let dist = cosine_distance(&ones, &zf).expect("both vectors are nonzero");
    (-(dist * dist) / (2.0 * nu.0 * nu.0)).exp()
}

/// The removed words of one draw: `s` distinct indices in increasing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalDraw {
    pub s: usize,
    pub removed: Vec<usize>,
}

impl RemovalDraw {
    pub fn contains(&self, index: usize) -> bool {
        self.removed.binary_search(&index).is_ok()
    }

    /// Interpretable features: `z_j = true` iff word `j` survives.
    pub fn presence(&self, d: usize) -> Vec<bool> {
        let mut z = vec![true; d];
        for &j in &self.removed {
            z[j] = false;
        }
        z
    }
}

pub fn draw_removal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<RemovalDraw> {
    if d == 0 {
        return Err(Error::EmptyLocalDictionary);
    }
    let s = rng.random_range(1..=d);
    let mut removed = index::sample(rng, d, s).into_vec();
    removed.sort_unstable();
    Ok(RemovalDraw { s, removed })
}

/// Tokens of `xi` whose word index is not in `removed`, in original order.
pub fn apply_removal(xi: &Document, local: &LocalDictionary, removed: &[usize]) -> Document {
    let mut drop = vec![false; local.len()];
    for &j in removed {
        drop[j] = true;
    }
    let tokens = xi.tokens.iter().filter(|t| local.index_of(t).is_none_or(|j| !drop[j])).cloned().collect();
    Document { tokens, source_id: xi.source_id.clone() }
}

/// One perturbed document. The surviving text is rebuilt on demand from the
/// draw since only `z` and the embedding are needed downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedSample {
    pub draw: RemovalDraw,
    pub z: Vec<bool>,
    pub weight: f64,
}

impl PerturbedSample {
    pub fn survivor(&self, xi: &Document, local: &LocalDictionary) -> Document {
        apply_removal(xi, local, &self.draw.removed)
    }

    pub fn present_count(&self) -> usize {
        self.z.len() - self.draw.s
    }
}

/// `psi(s / d)` for `s = 0..=d`.
pub fn weight_table(d: usize, nu: Bandwidth) -> Vec<f64> {
    (0..=d).map(|s| psi(s as f64 / d as f64, nu)).collect()
}

/// Generator for stream `stream` of the master seed. Streams of one seed
/// never overlap.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub samples: Vec<PerturbedSample>,
    pub d: usize,
    pub nu: Bandwidth,
    pub seed: u64,
    pub stream: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.weight)
    }

    /// CSV dump with columns `run,sample,s,z,weight`; `z` is a bitstring in
    /// local dictionary order.
    pub fn write_csv<W: Write>(&self, writer: &mut csv::Writer<W>, run: u64, header: bool) -> Result<()> {
        if header {
            writer.write_record(["run", "sample", "s", "z", "weight"])?;
        }
        for (i, sample) in self.samples.iter().enumerate() {
            let bits: String = sample.z.iter().map(|&b| if b { '1' } else { '0' }).collect();
            writer.write_record([
                run.to_string(),
                i.to_string(),
                sample.draw.s.to_string(),
                bits,
                csv_number(sample.weight),
            ])?;
        }
        Ok(())
    }
}

/// Draws `n` samples from an explicit generator.
pub fn sample_with_rng<R: Rng + ?Sized>(
    d: usize,
    n: usize,
    nu: Bandwidth,
    rng: &mut R,
) -> Result<Vec<PerturbedSample>> {
    if d == 0 {
        return Err(Error::EmptyLocalDictionary);
    }
    let table = weight_table(d, nu);
    (0..n)
        .map(|_| {
            let draw = draw_removal(d, rng)?;
            let z = draw.presence(d);
            let weight = table[draw.s];
            Ok(PerturbedSample { draw, z, weight })
        })
        .collect()
}

/// `n` i.i.d. samples for a document with local dictionary `local`, fully
/// determined by `(seed, stream)`.
pub fn sample_batch_stream(
    local: &LocalDictionary,
    n: usize,
    nu: Bandwidth,
    seed: u64,
    stream: u64,
) -> Result<SampleBatch> {
    let d = local.len();
    let mut rng = stream_rng(seed, stream);
    let samples = sample_with_rng(d, n, nu, &mut rng)?;
    Ok(SampleBatch { samples, d, nu, seed, stream })
}

pub fn sample_batch(local: &LocalDictionary, n: usize, nu: Bandwidth, seed: u64) -> Result<SampleBatch> {
    sample_batch_stream(local, n, nu, seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{local_dictionary, tokenize};

    fn nu(v: f64) -> Bandwidth {
        Bandwidth::new(v).unwrap()
    }

    #[test]
    fn bandwidth_validation_and_lime_scale() {
        assert!(Bandwidth::new(0.0).is_err());
        assert!(Bandwidth::new(-1.0).is_err());
        assert!(Bandwidth::new(f64::NAN).is_err());
        assert_eq!(Bandwidth::from_lime(25.0).unwrap().value(), 0.25);
        assert_eq!(nu(0.25).lime(), 25.0);
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(0.0, nu(0.25)), 1.0);
        assert!((psi(1.0, nu(0.25)) - (-8f64).exp()).abs() < 1e-18);
        assert!((psi(1.0, nu(0.25)) - 3.3546e-4).abs() < 1e-8);
        assert_eq!(psi(0.7, Bandwidth::INFINITE), 1.0);
        let v = nu(0.3);
        let grid: Vec<f64> = (0..=100).map(|i| psi(i as f64 / 100.0, v)).collect();
        assert!(grid.windows(2).all(|w| w[1] <= w[0]));
        assert!(grid.iter().all(|&x| x >= v.min_weight() && x <= 1.0));
    }

    #[test]
    fn cosine_examples() {
        let u = [1.0, 2.0, 3.0];
        assert!(cosine_distance(&u, &u).unwrap().abs() < 1e-15);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 1.0);
        let d = cosine_distance(&[1.0; 4], &[1.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((d - (1.0 - 3.0 / (2.0 * 3f64.sqrt()))).abs() < 1e-15);
        assert!((d - 0.13397).abs() < 1e-5);
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::UndefinedCosineDistance)));
    }

    #[test]
    fn weight_matches_psi() {
        for d in 1..=40 {
            for s in 0..=d {
                let z: Vec<bool> = (0..d).map(|j| j >= s).collect();
                for v in [0.05, 0.25, 1.0, 10.0] {
                    let b = nu(v);
                    let w = weight(&z, b);
                    let p = psi(s as f64 / d as f64, b);
                    assert!((w - p).abs() <= 1e-12, "d={d} s={s} nu={v}: {w} vs {p}");
                }
            }
        }
        assert_eq!(weight(&[true; 7], nu(0.25)), 1.0);
    }

    #[test]
    fn draw_removal_edge_cases() {
        let mut rng = stream_rng(1, 0);
        assert!(matches!(draw_removal(0, &mut rng), Err(Error::EmptyLocalDictionary)));
        for _ in 0..20 {
            let r = draw_removal(1, &mut rng).unwrap();
            assert_eq!((r.s, r.removed.as_slice()), (1, &[0usize][..]));
        }
    }

    #[test]
    fn removal_sizes_are_uniform() {
        let d = 5;
        let n = 1_000_000;
        let mut rng = stream_rng(11, 0);
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[draw_removal(d, &mut rng).unwrap().s] += 1;
        }
        let p: f64 = 0.2;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for &c in &counts[1..] {
            assert!((c as f64 / n as f64 - p).abs() < 3.0 * se + 1e-12, "{counts:?}");
        }
        assert_eq!(counts[0], 0);
    }

    #[test]
    fn presence_probabilities() {
        let d = 3;
        let n = 200_000;
        let mut rng = stream_rng(5, 0);
        let mut present = 0usize;
        let mut pair = 0usize;
        let mut by_s = [(0usize, 0usize); 4];
        for _ in 0..n {
            let r = draw_removal(d, &mut rng).unwrap();
            let z = r.presence(d);
            present += z[0] as usize;
            pair += (z[0] && z[1]) as usize;
            by_s[r.s].0 += 1;
            by_s[r.s].1 += z[2] as usize;
        }
        let check = |hits: usize, total: usize, p: f64| {
            let se = (p * (1.0 - p) / total as f64).sqrt();
            let phat = hits as f64 / total as f64;
            assert!((phat - p).abs() <= 3.0 * se + 1e-12, "{phat} vs {p}");
        };
        check(present, n, (d as f64 - 1.0) / (2.0 * d as f64));
        check(pair, n, (d as f64 - 2.0) / (3.0 * d as f64));
        for s in 1..=d {
            check(by_s[s].1, by_s[s].0, (d - s) as f64 / d as f64);
        }
    }

    #[test]
    fn apply_removal_examples() {
        let xi = tokenize("a b a");
        let local = local_dictionary(&xi);
        assert_eq!(apply_removal(&xi, &local, &[]), xi);
        assert!(apply_removal(&xi, &local, &[0, 1]).is_empty());
        assert_eq!(apply_removal(&xi, &local, &[0]).tokens, ["b"]);
    }

    #[test]
    fn batches_are_reproducible() {
        let xi = tokenize("one two three four five six seven");
        let local = local_dictionary(&xi);
        let a = sample_batch(&local, 500, nu(0.25), 42).unwrap();
        let b = sample_batch(&local, 500, nu(0.25), 42).unwrap();
        assert_eq!(a, b);
        let c = sample_batch_stream(&local, 500, nu(0.25), 42, 1).unwrap();
        assert_ne!(a.samples, c.samples);
        for s in &a.samples {
            assert_eq!(s.z.iter().filter(|&&b| b).count(), local.len() - s.draw.s);
            assert_eq!(s.weight, psi(s.draw.s as f64 / local.len() as f64, nu(0.25)));
            let survivor = s.survivor(&xi, &local);
            assert_eq!(local_dictionary(&survivor).len(), s.present_count());
        }
    }

    #[test]
    fn csv_dump_shape() {
        let local = local_dictionary(&tokenize("x y z"));
        let batch = sample_batch(&local, 3, nu(0.5), 1).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        batch.write_csv(&mut w, 0, true).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "run,sample,s,z,weight");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').nth(3).unwrap().len(), 3);
    }
}
