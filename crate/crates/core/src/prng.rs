//! Splittable, value-typed random keys.
//!
//! Kernels never share a mutable generator. Every draw is a pure function of
//! an [`RngKey`], and composition hands each child kernel its own key by
//! splitting the parent key. Two conventions keep replay deterministic:
//!
//! * a composite of `k` children splits its key into `k` sub-keys,
//!   left-to-right in composition order;
//! * a loop over iterations derives the key for iteration `i` by folding `i`
//!   into the loop's root key ([`RngKey::fold_in`]), so arbitrarily long runs
//!   need O(1) key state.
//!
//! Keys are 256 bits of opaque state. Splitting is a hash-style derivation:
//! child `i` is read out of the ChaCha stream `i + 1` seeded by the parent
//! key, while value draws use stream `0`, so a key's own draw stream never
//! collides with its children. A key is meant to be used for *either*
//! splitting *or* drawing, never both.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::state::Tensor;
use ndarray::ArrayD;

/// Opaque 256-bit splittable random key.
///
/// `RngKey` is a plain value: copying it and replaying the same operations
/// yields the same results. Equal keys produce equal draws.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngKey {
    words: [u64; 4],
}

impl std::fmt::Debug for RngKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "RngKey({:016x}{:016x}{:016x}{:016x})",
            self.words[0], self.words[1], self.words[2], self.words[3]
        )
    }
}

/// Stream id used for value draws; child derivation uses `data + 1`.
const DRAW_STREAM: u64 = 0;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl RngKey {
    /// Derives a root key from a user-facing integer seed.
    pub fn from_seed(seed: u64) -> Self {
        let mut s = seed;
        RngKey {
            words: [
                splitmix64(&mut s),
                splitmix64(&mut s),
                splitmix64(&mut s),
                splitmix64(&mut s),
            ],
        }
    }

    fn seed_bytes(&self) -> [u8; 32] {
        let mut bytes = [0u8; 32];
        for (i, w) in self.words.iter().enumerate() {
            bytes[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
        }
        bytes
    }

    fn rng_at_stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed_bytes());
        rng.set_stream(stream);
        rng
    }

    /// Deterministically derives a child key from `data`.
    ///
    /// Distinct `data` values give statistically independent children; the
    /// children are also independent of this key's own draw stream.
    pub fn fold_in(&self, data: u64) -> RngKey {
        let mut rng = self.rng_at_stream(data.wrapping_add(1));
        RngKey {
            words: [rng.random(), rng.random(), rng.random(), rng.random()],
        }
    }

    /// Splits this key into `n` child keys, left to right.
    ///
    /// Errors when `n == 0`.
    pub fn split(&self, n: usize) -> Result<Vec<RngKey>> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "cannot split a key into 0 children".into(),
            ));
        }
        Ok((0..n).map(|i| self.fold_in(i as u64)).collect())
    }

    /// Splits into exactly two child keys (the common case for kernels).
    pub fn split2(&self) -> (RngKey, RngKey) {
        (self.fold_in(0), self.fold_in(1))
    }

    /// Opens the draw stream of this key.
    pub fn stream(&self) -> KeyStream {
        KeyStream {
            rng: self.rng_at_stream(DRAW_STREAM),
        }
    }
}

/// Sequential draw stream derived from one key.
///
/// All draws are deterministic in the originating key and the draw order.
pub struct KeyStream {
    rng: ChaCha8Rng,
}

impl KeyStream {
    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Uniform draw in `[low, high)`.
    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(rand_distr::StandardNormal)
    }

    /// Bernoulli draw with success probability `p` (assumed in `[0, 1]`).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer draw in `[low, high)`.
    pub fn integer_uniform(&mut self, low: i64, high: i64) -> i64 {
        self.rng.random_range(low..high)
    }

    /// Binomial draw with `n` trials and success probability `p`.
    pub fn binomial(&mut self, n: u64, p: f64) -> u64 {
        if p <= 0.0 || n == 0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        let d = rand_distr::Binomial::new(n, p).expect("p validated above");
        self.rng.sample(d)
    }
}

/// Primitive distribution requests understood by [`sample_primitive`].
#[derive(Clone, Debug, PartialEq)]
pub enum DistributionSpec {
    /// Uniform on `[low, high)`, elementwise over `shape`.
    Uniform {
        low: f64,
        high: f64,
        shape: Vec<usize>,
    },
    /// Standard normal, elementwise over `shape`.
    StandardNormal { shape: Vec<usize> },
    /// Bernoulli with success probability `p`; yields 0/1 integers.
    Bernoulli { p: f64, shape: Vec<usize> },
    /// Uniform integers in `[low, high)`.
    IntegerUniform {
        low: i64,
        high: i64,
        shape: Vec<usize>,
    },
}

/// Draws a tensor of independent primitives from `key`.
///
/// The result is a pure function of `(key, spec)`: repeated calls return
/// bit-identical tensors. Elements fill the requested shape in row-major
/// order.
pub fn sample_primitive(key: &RngKey, spec: &DistributionSpec) -> Result<Tensor> {
    let mut stream = key.stream();
    match spec {
        DistributionSpec::Uniform { low, high, shape } => {
            if !(low < high) {
                return Err(Error::InvalidArgument(format!(
                    "uniform bounds must satisfy low < high, got [{low}, {high})"
                )));
            }
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| stream.uniform_in(*low, *high)).collect();
            Ok(Tensor::F64(from_vec(shape, data)?))
        }
        DistributionSpec::StandardNormal { shape } => {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| stream.standard_normal()).collect();
            Ok(Tensor::F64(from_vec(shape, data)?))
        }
        DistributionSpec::Bernoulli { p, shape } => {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidArgument(format!(
                    "bernoulli probability must lie in [0, 1], got {p}"
                )));
            }
            let n: usize = shape.iter().product();
            let data: Vec<i64> = (0..n).map(|_| stream.bernoulli(*p) as i64).collect();
            Ok(Tensor::I64(from_vec(shape, data)?))
        }
        DistributionSpec::IntegerUniform { low, high, shape } => {
            if !(low < high) {
                return Err(Error::InvalidArgument(format!(
                    "integer_uniform bounds must satisfy low < high, got [{low}, {high})"
                )));
            }
            let n: usize = shape.iter().product();
            let data: Vec<i64> = (0..n).map(|_| stream.integer_uniform(*low, *high)).collect();
            Ok(Tensor::I64(from_vec(shape, data)?))
        }
    }
}

fn from_vec<T>(shape: &[usize], data: Vec<T>) -> Result<ArrayD<T>> {
    ArrayD::from_shape_vec(ndarray::IxDyn(shape), data)
        .map_err(|e| Error::InvalidArgument(format!("bad tensor shape {shape:?}: {e}")))
}
