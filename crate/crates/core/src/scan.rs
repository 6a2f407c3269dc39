//! Work-efficient prefix sums over weight vectors.
//!
//! Both backends run the Blelloch up-sweep/down-sweep over the same balanced
//! binary tree, on a buffer zero-padded to the next power of two. The parallel
//! backend only changes which thread executes a tree node, never the order of
//! the additions, so the two backends agree bit for bit.
//!
//! Additions whose second operand is known to be padding are replaced by
//! copies. That keeps the addition count at most `2n - 2` for `n` live
//! elements.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Leaves per parallel task. The low tree levels of each block run on one
/// thread; the top levels are walked across blocks.
const BLOCK: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanBackend {
    Sequential,
    #[default]
    Parallel,
}

/// Result of one up/down sweep.
#[derive(Clone, Debug)]
pub struct Sweep {
    /// Exclusive prefixes over the padded buffer.
    buffer: Vec<f64>,
    len: usize,
    total: f64,
    /// Floating-point additions performed.
    pub additions: usize,
}

impl Sweep {
    pub fn inclusive(&self) -> Vec<f64> {
        let n = self.len;
        let mut out = Vec::with_capacity(n);
        out.extend_from_slice(&self.buffer[1..n]);
        out.push(self.last());
        out
    }

    pub fn exclusive(&self) -> Vec<f64> {
        self.buffer[..self.len].to_vec()
    }

    /// Inclusive prefix of the final element.
    pub fn last(&self) -> f64 {
        if self.len < self.buffer.len() {
            self.buffer[self.len]
        } else {
            self.total
        }
    }
}

#[inline]
fn up_node(node: &mut [f64], lo: usize, n: usize) -> usize {
    let stride = node.len();
    let half = stride / 2;
    if lo >= n {
        0
    } else if lo + half >= n {
        node[stride - 1] = node[half - 1];
        0
    } else {
        node[stride - 1] += node[half - 1];
        1
    }
}

#[inline]
fn down_node(node: &mut [f64], lo: usize, n: usize) -> usize {
    let stride = node.len();
    let half = stride / 2;
    let left = node[half - 1];
    let acc = node[stride - 1];
    node[half - 1] = acc;
    if lo >= n {
        0
    } else if lo == 0 {
        node[stride - 1] = left;
        0
    } else {
        node[stride - 1] = acc + left;
        1
    }
}

fn up_levels(buf: &mut [f64], base: usize, n: usize, levels: std::ops::Range<u32>) -> usize {
    let mut adds = 0;
    for d in levels {
        let stride = 1usize << (d + 1);
        for (k, node) in buf.chunks_exact_mut(stride).enumerate() {
            adds += up_node(node, base + k * stride, n);
        }
    }
    adds
}

fn down_levels(buf: &mut [f64], base: usize, n: usize, levels: std::ops::Range<u32>) -> usize {
    let mut adds = 0;
    for d in levels.rev() {
        let stride = 1usize << (d + 1);
        for (k, node) in buf.chunks_exact_mut(stride).enumerate() {
            adds += down_node(node, base + k * stride, n);
        }
    }
    adds
}

/// Runs the up-sweep and down-sweep on `values`.
pub fn sweep(values: &[f64], backend: ScanBackend) -> Result<Sweep> {
    let n = values.len();
    if n == 0 {
        return Err(Error::invalid("scan input must be non-empty"));
    }
    let padded = n.next_power_of_two();
    let depth = padded.trailing_zeros();
    let mut buf = vec![0.0; padded];
    buf[..n].copy_from_slice(values);

    let (block, block_depth) = match backend {
        ScanBackend::Sequential => (padded, depth),
        ScanBackend::Parallel => {
            let b = BLOCK.min(padded);
            (b, b.trailing_zeros())
        }
    };

    let mut additions = 0;
    additions += match backend {
        ScanBackend::Sequential => up_levels(&mut buf, 0, n, 0..block_depth),
        ScanBackend::Parallel => buf
            .par_chunks_mut(block)
            .enumerate()
            .map(|(b, chunk)| up_levels(chunk, b * block, n, 0..block_depth))
            .sum(),
    };
    additions += up_levels(&mut buf, 0, n, block_depth..depth);

    let total = buf[padded - 1];
    buf[padded - 1] = 0.0;

    additions += down_levels(&mut buf, 0, n, block_depth..depth);
    additions += match backend {
        ScanBackend::Sequential => down_levels(&mut buf, 0, n, 0..block_depth),
        ScanBackend::Parallel => buf
            .par_chunks_mut(block)
            .enumerate()
            .map(|(b, chunk)| down_levels(chunk, b * block, n, 0..block_depth))
            .sum(),
    };

    Ok(Sweep {
        buffer: buf,
        len: n,
        total,
        additions,
    })
}

/// Inclusive prefix sum: `out[k] = v[0] + ... + v[k]`, parallel backend.
pub fn inclusive_scan(values: &[f64]) -> Result<Vec<f64>> {
    inclusive_scan_with(values, ScanBackend::Parallel)
}

pub fn inclusive_scan_with(values: &[f64], backend: ScanBackend) -> Result<Vec<f64>> {
    Ok(sweep(values, backend)?.inclusive())
}

/// Exclusive prefix sum: `out[0] = 0`, `out[k] = inclusive[k - 1]`.
pub fn exclusive_scan(values: &[f64]) -> Result<Vec<f64>> {
    exclusive_scan_with(values, ScanBackend::Parallel)
}

pub fn exclusive_scan_with(values: &[f64], backend: ScanBackend) -> Result<Vec<f64>> {
    Ok(sweep(values, backend)?.exclusive())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub workers: usize,
    pub median_ns: u128,
    pub p95_ns: u128,
}

/// Times the parallel inclusive scan for every `(size, workers)` pair.
///
/// Inputs are fixed pseudo-random weights so repeated runs time the same work.
pub fn scan_bench(sizes: &[usize], workers: &[usize], reps: usize) -> Result<Vec<BenchRow>> {
    use rand::Rng;
    let reps = reps.max(1);
    let mut rows = Vec::new();
    for &size in sizes {
        let mut rng = crate::rng::stream(0, crate::rng::Domain::Driver, &[size as u64]);
        let input: Vec<f64> = (0..size.max(1)).map(|_| rng.random::<f64>()).collect();
        for &w in workers {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            let mut times: Vec<u128> = pool.install(|| {
                // warm-up
                let _ = inclusive_scan(&input);
                (0..reps)
                    .map(|_| {
                        let start = Instant::now();
                        let out = inclusive_scan(&input);
                        let t = start.elapsed().as_nanos();
                        std::hint::black_box(out).ok();
                        t
                    })
                    .collect()
            });
            times.sort_unstable();
            let at = |q: f64| times[((times.len() - 1) as f64 * q).round() as usize];
            rows.push(BenchRow {
                size,
                workers: w,
                median_ns: at(0.5),
                p95_ns: at(0.95),
            });
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: std::io::Write>(rows: &[BenchRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "size,workers,median_ns,p95_ns")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.size, r.workers, r.median_ns, r.p95_ns)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: the prefix over `[0, k)` is the left fold of the
    /// perfect pairwise sums of the aligned power-of-two blocks given by the
    /// binary expansion of `k`, most significant first.
    fn block_sum(v: &[f64]) -> f64 {
        if v.len() == 1 {
            v[0]
        } else {
            let (l, r) = v.split_at(v.len() / 2);
            block_sum(l) + block_sum(r)
        }
    }

    fn tree_prefix(v: &[f64], k: usize) -> f64 {
        let mut acc: Option<f64> = None;
        let mut start = 0;
        for bit in (0..usize::BITS).rev() {
            let size = 1usize << bit;
            if k & size != 0 {
                let s = block_sum(&v[start..start + size]);
                acc = Some(match acc {
                    None => s,
                    Some(a) => a + s,
                });
                start += size;
            }
        }
        acc.unwrap_or(0.0)
    }

    fn oracle_inclusive(v: &[f64]) -> Vec<f64> {
        (1..=v.len()).map(|k| tree_prefix(v, k)).collect()
    }

    #[test]
    fn hand_examples() {
        assert_eq!(inclusive_scan(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 3.0, 6.0, 10.0]);
        assert_eq!(exclusive_scan(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0, 1.0, 3.0, 6.0]);
        assert_eq!(inclusive_scan(&[2.5]).unwrap(), vec![2.5]);
        assert_eq!(exclusive_scan(&[0.0; 7]).unwrap(), vec![0.0; 7]);
    }

    #[test]
    fn empty_rejected() {
        assert!(inclusive_scan(&[]).is_err());
    }

    #[test]
    fn long_vector_matches_oracle_bitwise() {
        use rand::Rng;
        let mut rng = crate::rng::stream(11, crate::rng::Domain::Driver, &[]);
        let v: Vec<f64> = (0..10_007).map(|_| rng.random::<f64>()).collect();
        let par = inclusive_scan_with(&v, ScanBackend::Parallel).unwrap();
        let seq = inclusive_scan_with(&v, ScanBackend::Sequential).unwrap();
        let oracle = oracle_inclusive(&v);
        for k in 0..v.len() {
            assert_eq!(par[k].to_bits(), oracle[k].to_bits(), "index {k}");
            assert_eq!(seq[k].to_bits(), oracle[k].to_bits(), "index {k}");
        }
    }

    #[test]
    fn tiny_input_backends_agree() {
        let v = [0.3, 0.1, 0.7, 0.2, 0.9, 0.4, 0.6, 0.5];
        let a = inclusive_scan_with(&v, ScanBackend::Parallel).unwrap();
        let b = inclusive_scan_with(&v, ScanBackend::Sequential).unwrap();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    proptest! {
        #[test]
        fn scan_properties(v in prop::collection::vec(0.0f64..1.0, 1..700)) {
            let s = sweep(&v, ScanBackend::Parallel).unwrap();
            let inc = s.inclusive();
            let exc = s.exclusive();
            prop_assert!(s.additions <= 2 * v.len());
            prop_assert_eq!(exc[0], 0.0);
            for k in 1..v.len() {
                prop_assert_eq!(exc[k].to_bits(), inc[k - 1].to_bits());
                prop_assert!(inc[k] >= inc[k - 1]);
            }
            prop_assert_eq!(inc[v.len() - 1].to_bits(), tree_prefix(&v, v.len()).to_bits());
        }
    }
}
