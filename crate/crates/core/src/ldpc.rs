//! Regular LDPC code construction (progressive edge growth), systematic
//! encoding, and sum-product decoding with extrinsic LLR output.
//!
//! LLR convention matches the rest of the crate: `L = ln P(b=1)/P(b=0)`, so a
//! positive posterior decides bit 1. Check-node updates run in the
//! tanh/atanh domain with inputs clamped to +-30; a normalized min-sum
//! variant is available for fast sweeps.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::seeded_rng;
use crate::error::Error;
use crate::Result;

/// Message-passing rule for [`LdpcCode::decode_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMethod {
    /// Exact tanh-domain sum-product.
    SumProduct,
    /// Normalized min-sum (factor 0.75).
    MinSum,
}

/// LLR magnitude cap applied to channel inputs and variable messages.
pub const LLR_CLAMP: f64 = 30.0;

const MIN_SUM_SCALE: f64 = 0.75;

/// A binary regular LDPC code with a systematic encoder.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    n: usize,
    k_info: usize,
    col_degree: usize,
    row_degree: usize,
    /// Variable indices per check, sorted.
    check_vars: Vec<Vec<usize>>,
    /// Check indices per variable, sorted.
    var_checks: Vec<Vec<usize>>,
    /// Codeword positions carrying message bits, sorted.
    info_positions: Vec<usize>,
    /// Pivot (parity) position per reduced row.
    pivot_positions: Vec<usize>,
    /// Per reduced row: bitmask over the k_info message bits.
    parity_masks: Vec<Vec<u64>>,
    /// Flat edge list grouped by check (CSR layout for the decoder).
    check_offsets: Vec<usize>,
    edge_var: Vec<usize>,
    var_edge_offsets: Vec<usize>,
    var_edge_ids: Vec<usize>,
}

/// Decoder output for one codeword.
#[derive(Debug, Clone)]
pub struct DecodeResult {
    /// Hard decisions (0/1) on all n bits.
    pub hard_bits: Vec<u8>,
    /// Extrinsic LLRs: posterior minus (clamped) channel input.
    pub extrinsic: Vec<f64>,
    /// True when every parity check is satisfied by `hard_bits`.
    pub parity_ok: bool,
    pub iterations_used: usize,
}

fn words(bits: usize) -> usize {
    bits.div_ceil(64)
}

#[inline]
fn get_bit(row: &[u64], i: usize) -> bool {
    row[i / 64] >> (i % 64) & 1 == 1
}

#[inline]
fn set_bit(row: &mut [u64], i: usize) {
    row[i / 64] |= 1 << (i % 64);
}

impl LdpcCode {
    /// Builds a column-regular code by progressive edge growth.
    ///
    /// Each new edge connects to a lowest-degree check among those farthest
    /// from (or unreachable from) the variable in the current graph, keeping
    /// girth large. Row degrees are capped at `n * col_degree / m`, so when
    /// that ratio is integral the rows come out exactly regular.
    /// Construction retries internal streams until the parity matrix has
    /// full row rank, which pins the rate to `1 - m/n`.
    pub fn build(n: usize, rate: f64, col_degree: usize, seed: u64) -> Result<Self> {
        let k_info_f = n as f64 * rate;
        if (k_info_f - k_info_f.round()).abs() > 1e-9 {
            return Err(Error::config("n * rate must be integral"));
        }
        let k_info = k_info_f.round() as usize;
        if k_info == 0 || k_info >= n {
            return Err(Error::Infeasible(format!(
                "rate {rate} leaves no parity or no data"
            )));
        }
        let m = n - k_info;
        if col_degree == 0 || col_degree > m {
            return Err(Error::Infeasible(format!(
                "column degree {col_degree} incompatible with {m} checks"
            )));
        }

        for attempt in 0..32u64 {
            let mut rng = seeded_rng(seed, attempt);
            let graph = peg_graph(n, m, col_degree, &mut rng);
            if let Some(code) = Self::from_graph(n, k_info, col_degree, graph) {
                return Ok(code);
            }
        }
        Err(Error::Infeasible(
            "could not reach full-rank parity matrix".into(),
        ))
    }

    fn from_graph(
        n: usize,
        k_info: usize,
        col_degree: usize,
        check_vars: Vec<Vec<usize>>,
    ) -> Option<Self> {
        let m = check_vars.len();
        let w = words(n);
        let mut rows: Vec<Vec<u64>> = vec![vec![0u64; w]; m];
        for (c, vars) in check_vars.iter().enumerate() {
            for &v in vars {
                set_bit(&mut rows[c], v);
            }
        }

        // Reduced row echelon form over GF(2), pivots chosen left to right.
        let mut pivot_positions = Vec::with_capacity(m);
        let mut rank = 0usize;
        for col in 0..n {
            let Some(r) = (rank..m).find(|&r| get_bit(&rows[r], col)) else {
                continue;
            };
            rows.swap(rank, r);
            let pivot_row = rows[rank].clone();
            for (r2, row) in rows.iter_mut().enumerate() {
                if r2 != rank && get_bit(row, col) {
                    for (dst, src) in row.iter_mut().zip(&pivot_row) {
                        *dst ^= src;
                    }
                }
            }
            pivot_positions.push(col);
            rank += 1;
            if rank == m {
                break;
            }
        }
        if rank < m {
            return None;
        }

        let pivot_set: std::collections::HashSet<usize> =
            pivot_positions.iter().copied().collect();
        let info_positions: Vec<usize> = (0..n).filter(|i| !pivot_set.contains(i)).collect();
        debug_assert_eq!(info_positions.len(), k_info);

        let kw = words(k_info);
        let parity_masks = rows
            .iter()
            .take(m)
            .map(|row| {
                let mut mask = vec![0u64; kw];
                for (bit, &pos) in info_positions.iter().enumerate() {
                    if get_bit(row, pos) {
                        set_bit(&mut mask, bit);
                    }
                }
                mask
            })
            .collect();

        let mut var_checks = vec![Vec::new(); n];
        for (c, vars) in check_vars.iter().enumerate() {
            for &v in vars {
                var_checks[v].push(c);
            }
        }
        let row_degree = check_vars.iter().map(Vec::len).max().unwrap_or(0);

        let mut check_offsets = Vec::with_capacity(check_vars.len() + 1);
        let mut edge_var = Vec::new();
        check_offsets.push(0usize);
        for vars in &check_vars {
            edge_var.extend_from_slice(vars);
            check_offsets.push(edge_var.len());
        }
        let mut per_var: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (e, &v) in edge_var.iter().enumerate() {
            per_var[v].push(e);
        }
        let mut var_edge_offsets = Vec::with_capacity(n + 1);
        let mut var_edge_ids = Vec::with_capacity(edge_var.len());
        var_edge_offsets.push(0usize);
        for edges in &per_var {
            var_edge_ids.extend_from_slice(edges);
            var_edge_offsets.push(var_edge_ids.len());
        }

        Some(LdpcCode {
            n,
            k_info,
            col_degree,
            row_degree,
            check_vars,
            var_checks,
            info_positions,
            pivot_positions,
            parity_masks,
            check_offsets,
            edge_var,
            var_edge_offsets,
            var_edge_ids,
        })
    }

    pub fn block_length(&self) -> usize {
        self.n
    }

    pub fn message_length(&self) -> usize {
        self.k_info
    }

    pub fn rate(&self) -> f64 {
        self.k_info as f64 / self.n as f64
    }

    pub fn col_degree(&self) -> usize {
        self.col_degree
    }

    pub fn row_degree(&self) -> usize {
        self.row_degree
    }

    pub fn check_count(&self) -> usize {
        self.check_vars.len()
    }

    pub fn check_vars(&self) -> &[Vec<usize>] {
        &self.check_vars
    }

    /// Positions of message bits inside a codeword.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// Systematic encode: message bits appear verbatim at
    /// [`Self::info_positions`], parities fill the pivot positions.
    pub fn encode(&self, msg: &[u8]) -> Result<Vec<u8>> {
        if msg.len() != self.k_info {
            return Err(Error::dimension(format!(
                "message length {} != {}",
                msg.len(),
                self.k_info
            )));
        }
        let kw = words(self.k_info);
        let mut msg_words = vec![0u64; kw];
        for (i, &b) in msg.iter().enumerate() {
            if b & 1 == 1 {
                set_bit(&mut msg_words, i);
            }
        }
        let mut cw = vec![0u8; self.n];
        for (bit, &pos) in self.info_positions.iter().enumerate() {
            cw[pos] = msg[bit] & 1;
        }
        for (row, &pos) in self.parity_masks.iter().zip(&self.pivot_positions) {
            let ones: u32 = row
                .iter()
                .zip(&msg_words)
                .map(|(a, b)| (a & b).count_ones())
                .sum();
            cw[pos] = (ones & 1) as u8;
        }
        Ok(cw)
    }

    /// Extracts the message bits from a codeword.
    pub fn extract_message(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| codeword[p]).collect()
    }

    /// True when `bits` satisfies every check.
    pub fn parity_check(&self, bits: &[u8]) -> bool {
        self.check_vars
            .iter()
            .all(|vars| vars.iter().fold(0u8, |acc, &v| acc ^ (bits[v] & 1)) == 0)
    }

    /// Dense generator matrix (k_info x n, entries 0/1). Row i encodes the
    /// i-th unit message.
    pub fn generator(&self) -> Vec<Vec<u8>> {
        (0..self.k_info)
            .map(|i| {
                let mut msg = vec![0u8; self.k_info];
                msg[i] = 1;
                self.encode(&msg).expect("unit message encodes")
            })
            .collect()
    }

    /// Sum-product decode. Failure is conveyed through `parity_ok`, never an
    /// error.
    pub fn decode(&self, channel_llr: &[f64], max_iters: usize) -> DecodeResult {
        self.decode_with(channel_llr, max_iters, DecodeMethod::SumProduct)
    }

    pub fn decode_with(
        &self,
        channel_llr: &[f64],
        max_iters: usize,
        method: DecodeMethod,
    ) -> DecodeResult {
        assert_eq!(channel_llr.len(), self.n, "LLR length");
        let ch: Vec<f64> = channel_llr
            .iter()
            .map(|&l| {
                if l.is_nan() {
                    0.0
                } else {
                    l.clamp(-LLR_CLAMP, LLR_CLAMP)
                }
            })
            .collect();

        let check_offsets = &self.check_offsets;
        let var_edges =
            |v: usize| &self.var_edge_ids[self.var_edge_offsets[v]..self.var_edge_offsets[v + 1]];

        let ne = self.edge_var.len();
        let mut c2v = vec![0.0f64; ne];
        let mut v2c = vec![0.0f64; ne];
        let mut posterior = vec![0.0f64; self.n];
        let mut hard = vec![0u8; self.n];
        let mut iterations_used = max_iters;
        let mut parity_ok = false;
        let mut scratch: Vec<f64> = Vec::new();

        for iter in 1..=max_iters {
            // Variable pass: v2c = clamp(ch + sum of other checks).
            for v in 0..self.n {
                let total: f64 = var_edges(v).iter().map(|&e| c2v[e]).sum();
                for &e in var_edges(v) {
                    v2c[e] = (ch[v] + total - c2v[e]).clamp(-LLR_CLAMP, LLR_CLAMP);
                }
            }

            // Check pass.
            for c in 0..self.check_vars.len() {
                let span = check_offsets[c]..check_offsets[c + 1];
                let deg = span.len();
                let sign_flip = if (deg - 1) % 2 == 0 { 1.0 } else { -1.0 };
                match method {
                    DecodeMethod::SumProduct => {
                        scratch.clear();
                        scratch.extend(span.clone().map(|e| (v2c[e] / 2.0).tanh()));
                        // Exclusion products via prefix/suffix.
                        let mut suffix = vec![1.0f64; deg + 1];
                        for i in (0..deg).rev() {
                            suffix[i] = suffix[i + 1] * scratch[i];
                        }
                        let mut prefix = 1.0f64;
                        for (i, e) in span.clone().enumerate() {
                            let p = (prefix * suffix[i + 1])
                                .clamp(-0.999_999_999_999_999, 0.999_999_999_999_999);
                            c2v[e] = -2.0 * (sign_flip * p).atanh();
                            prefix *= scratch[i];
                        }
                    }
                    DecodeMethod::MinSum => {
                        // Track the two smallest magnitudes and the sign product.
                        let mut min1 = f64::INFINITY;
                        let mut min2 = f64::INFINITY;
                        let mut min_e = usize::MAX;
                        let mut sign_prod = 1.0f64;
                        for e in span.clone() {
                            let mag = v2c[e].abs();
                            if v2c[e] < 0.0 {
                                sign_prod = -sign_prod;
                            }
                            if mag < min1 {
                                min2 = min1;
                                min1 = mag;
                                min_e = e;
                            } else if mag < min2 {
                                min2 = mag;
                            }
                        }
                        for e in span.clone() {
                            let mag = if e == min_e { min2 } else { min1 };
                            let self_sign = if v2c[e] < 0.0 { -1.0 } else { 1.0 };
                            // -sign_flip: the (-1)^deg factor of the exact rule.
                            c2v[e] = -sign_flip * sign_prod * self_sign * MIN_SUM_SCALE * mag;
                        }
                    }
                }
            }

            for v in 0..self.n {
                let total: f64 = var_edges(v).iter().map(|&e| c2v[e]).sum();
                posterior[v] = ch[v] + total;
                hard[v] = (posterior[v] > 0.0) as u8;
            }
            if self.parity_check(&hard) {
                iterations_used = iter;
                parity_ok = true;
                break;
            }
        }

        let extrinsic = posterior.iter().zip(&ch).map(|(p, c)| p - c).collect();
        DecodeResult {
            hard_bits: hard,
            extrinsic,
            parity_ok,
            iterations_used,
        }
    }
}

/// Progressive edge growth: returns variable lists per check.
fn peg_graph(n: usize, m: usize, col_degree: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let cap = (n * col_degree).div_ceil(m);
    let mut check_vars: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut var_checks: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut degree = vec![0usize; m];

    let mut candidate_buf: Vec<usize> = Vec::with_capacity(m);
    for v in 0..n {
        for edge in 0..col_degree {
            candidate_buf.clear();
            if edge == 0 {
                candidate_buf.extend(0..m);
            } else {
                // BFS from v; candidates are unreachable checks, or failing
                // that, the deepest BFS layer.
                let mut seen_check = vec![false; m];
                let mut seen_var = vec![false; n];
                seen_var[v] = true;
                let mut frontier: Vec<usize> = var_checks[v].clone();
                for &c in &frontier {
                    seen_check[c] = true;
                }
                let mut last_layer = frontier.clone();
                loop {
                    let mut next_vars = Vec::new();
                    for &c in &frontier {
                        for &u in &check_vars[c] {
                            if !seen_var[u] {
                                seen_var[u] = true;
                                next_vars.push(u);
                            }
                        }
                    }
                    let mut next_checks = Vec::new();
                    for &u in &next_vars {
                        for &c in &var_checks[u] {
                            if !seen_check[c] {
                                seen_check[c] = true;
                                next_checks.push(c);
                            }
                        }
                    }
                    if next_checks.is_empty() {
                        break;
                    }
                    last_layer = next_checks.clone();
                    frontier = next_checks;
                }
                let unreachable: Vec<usize> = (0..m).filter(|&c| !seen_check[c]).collect();
                if unreachable.is_empty() {
                    candidate_buf.extend(last_layer);
                } else {
                    candidate_buf.extend(unreachable);
                }
            }

            // Prefer checks under the nominal row degree, but keep the
            // distance ranking authoritative: escalate the cap rather than
            // abandon the farthest candidates.
            let mut pool: Vec<usize> = Vec::new();
            let mut relax = 0;
            while pool.is_empty() {
                pool = candidate_buf
                    .iter()
                    .copied()
                    .filter(|&c| degree[c] < cap + relax && !var_checks[v].contains(&c))
                    .collect();
                relax += 1;
                if relax > m {
                    pool = (0..m).filter(|&c| !var_checks[v].contains(&c)).collect();
                    break;
                }
            }
            let min_deg = pool
                .iter()
                .map(|&c| degree[c])
                .min()
                .expect("pool not empty");
            let mut best: Vec<usize> = pool.into_iter().filter(|&c| degree[c] == min_deg).collect();
            best.shuffle(rng);
            let chosen = best[0];

            check_vars[chosen].push(v);
            var_checks[v].push(chosen);
            degree[chosen] += 1;
        }
    }
    for vars in &mut check_vars {
        vars.sort_unstable();
    }
    check_vars
}

// ---------------------------------------------------------------------------
// alist text format (MacKay), for cross-checks with external tools.
// ---------------------------------------------------------------------------

/// Serializes the parity-check matrix in alist format.
pub fn to_alist(code: &LdpcCode) -> String {
    let n = code.n;
    let m = code.check_vars.len();
    let max_dv = code.var_checks.iter().map(Vec::len).max().unwrap_or(0);
    let max_dc = code.check_vars.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{n} {m}");
    let _ = writeln!(out, "{max_dv} {max_dc}");
    let degrees = |lists: &[Vec<usize>]| {
        lists
            .iter()
            .map(|l| l.len().to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "{}", degrees(&code.var_checks));
    let _ = writeln!(out, "{}", degrees(&code.check_vars));
    let entries = |lists: &[Vec<usize>], width: usize, out: &mut String| {
        for list in lists {
            let mut items: Vec<String> = list.iter().map(|&i| (i + 1).to_string()).collect();
            while items.len() < width {
                items.push("0".into());
            }
            let _ = writeln!(out, "{}", items.join(" "));
        }
    };
    entries(&code.var_checks, max_dv, &mut out);
    entries(&code.check_vars, max_dc, &mut out);
    out
}

pub fn write_alist(path: impl AsRef<Path>, code: &LdpcCode) -> Result<()> {
    std::fs::write(path, to_alist(code))?;
    Ok(())
}

/// Parses an alist file into per-check variable lists, returning
/// (n, m, check_vars).
pub fn parse_alist(text: &str) -> Result<(usize, usize, Vec<Vec<usize>>)> {
    let mut tokens = text.split_ascii_whitespace().map(|t| {
        t.parse::<usize>()
            .map_err(|_| Error::Parse(format!("alist: bad token `{t}`")))
    });
    let mut next = move || -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::Parse("alist: truncated".into()))?
    };
    let n = next()?;
    let m = next()?;
    let max_dv = next()?;
    let max_dc = next()?;
    let dv: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_>>()?;
    let dc: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_>>()?;
    // Variable sections are redundant for reconstruction; validate counts.
    for &d in &dv {
        if d > max_dv {
            return Err(Error::Parse("alist: variable degree exceeds max".into()));
        }
        for _ in 0..max_dv {
            next()?;
        }
    }
    let mut check_vars = vec![Vec::new(); m];
    for (c, &d) in dc.iter().enumerate() {
        if d > max_dc {
            return Err(Error::Parse("alist: check degree exceeds max".into()));
        }
        for slot in 0..max_dc {
            let idx = next()?;
            if idx == 0 {
                continue;
            }
            if slot >= d {
                return Err(Error::Parse("alist: entry past declared degree".into()));
            }
            if idx > n {
                return Err(Error::Parse("alist: variable index out of range".into()));
            }
            check_vars[c].push(idx - 1);
        }
        check_vars[c].sort_unstable();
    }
    Ok((n, m, check_vars))
}

pub fn read_alist(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<Vec<usize>>)> {
    parse_alist(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Smallest nonzero codeword weight, by enumeration (toy codes only).
    fn min_distance(code: &LdpcCode) -> usize {
        let k = code.message_length();
        assert!(k <= 16);
        (1..(1u32 << k))
            .map(|m| {
                let msg: Vec<u8> = (0..k).map(|i| ((m >> i) & 1) as u8).collect();
                code.encode(&msg).unwrap().iter().map(|&b| b as usize).sum()
            })
            .min()
            .unwrap()
    }

    fn toy_code() -> LdpcCode {
        // Column degree 3: with degree 2 every column would sum the rows to
        // zero, so a 5x10 matrix could never reach full rank. Single-flip
        // correction additionally needs d_min >= 3, which not every seed
        // delivers at this tiny size.
        for seed in 0..64 {
            let code = LdpcCode::build(10, 0.5, 3, seed).unwrap();
            if min_distance(&code) >= 3 {
                return code;
            }
        }
        panic!("no d_min >= 3 toy code in seed range");
    }

    fn main_code() -> LdpcCode {
        LdpcCode::build(512, 0.5, 3, 7).unwrap()
    }

    fn random_message(code: &LdpcCode, rng: &mut impl Rng) -> Vec<u8> {
        (0..code.message_length())
            .map(|_| rng.random_range(0..2u8))
            .collect()
    }

    #[test]
    fn build_512_is_column_regular() {
        let code = main_code();
        assert_eq!(code.check_count(), 256);
        assert_eq!(code.block_length(), 512);
        assert_eq!(code.message_length(), 256);
        for checks in &code.var_checks {
            assert_eq!(checks.len(), 3);
        }
        // 512 * 3 / 256 = 6 exactly, so the cap makes rows regular too.
        for vars in code.check_vars() {
            assert_eq!(vars.len(), 6);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = LdpcCode::build(128, 0.5, 3, 5).unwrap();
        let b = LdpcCode::build(128, 0.5, 3, 5).unwrap();
        assert_eq!(a.check_vars, b.check_vars);
        let c = LdpcCode::build(128, 0.5, 3, 6).unwrap();
        assert_ne!(a.check_vars, c.check_vars);
    }

    #[test]
    fn infeasible_degrees_rejected() {
        assert!(LdpcCode::build(10, 0.5, 0, 1).is_err());
        assert!(LdpcCode::build(10, 0.5, 6, 1).is_err());
        assert!(LdpcCode::build(10, 0.95, 1, 1).is_err());
        assert!(LdpcCode::build(10, 0.123, 3, 1).is_err());
        // Weight-2 columns force dependent rows: full rank is unreachable.
        assert!(LdpcCode::build(10, 0.5, 2, 1).is_err());
    }

    #[test]
    fn generator_orthogonal_to_parity() {
        let code = LdpcCode::build(96, 0.5, 3, 3).unwrap();
        for row in code.generator() {
            assert!(code.parity_check(&row));
        }
    }

    #[test]
    fn encode_zero_and_linearity() {
        let code = LdpcCode::build(64, 0.5, 3, 2).unwrap();
        let zero = code.encode(&vec![0u8; code.message_length()]).unwrap();
        assert!(zero.iter().all(|&b| b == 0));

        let mut rng = seeded_rng(1, 0);
        let m1 = random_message(&code, &mut rng);
        let m2 = random_message(&code, &mut rng);
        let xor: Vec<u8> = m1.iter().zip(&m2).map(|(a, b)| a ^ b).collect();
        let c1 = code.encode(&m1).unwrap();
        let c2 = code.encode(&m2).unwrap();
        let cx = code.encode(&xor).unwrap();
        for i in 0..code.block_length() {
            assert_eq!(cx[i], c1[i] ^ c2[i]);
        }
        assert!(code.encode(&vec![0u8; 3]).is_err());
    }

    #[test]
    fn random_codewords_satisfy_parity() {
        let code = main_code();
        let mut rng = seeded_rng(2, 0);
        for _ in 0..10 {
            let msg = random_message(&code, &mut rng);
            let cw = code.encode(&msg).unwrap();
            assert!(code.parity_check(&cw));
            assert_eq!(code.extract_message(&cw), msg);
        }
    }

    #[test]
    fn decode_noiseless_fixed_point() {
        let code = main_code();
        let mut rng = seeded_rng(3, 0);
        let msg = random_message(&code, &mut rng);
        let cw = code.encode(&msg).unwrap();
        let llr: Vec<f64> = cw
            .iter()
            .map(|&b| {
                if b == 1 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let res = code.decode(&llr, 10);
        assert!(res.parity_ok);
        assert_eq!(res.iterations_used, 1);
        assert_eq!(res.hard_bits, cw);
    }

    #[test]
    fn decode_all_zero_llr_stalls_symmetrically() {
        let code = main_code();
        let res = code.decode(&vec![0.0; 512], 5);
        for &e in &res.extrinsic {
            assert_eq!(e, 0.0);
        }
        assert!(res.hard_bits.iter().all(|&b| b == 0));
    }

    /// Brute-force maximum-likelihood decoder over all 2^k codewords:
    /// maximizes sum_i c_i * L_i under the ln P(1)/P(0) convention.
    fn ml_decode(code: &LdpcCode, llr: &[f64]) -> Vec<u8> {
        let k = code.message_length();
        assert!(k <= 20, "toy codes only");
        let mut best_metric = f64::NEG_INFINITY;
        let mut best = Vec::new();
        for m in 0..(1u32 << k) {
            let msg: Vec<u8> = (0..k).map(|i| ((m >> i) & 1) as u8).collect();
            let cw = code.encode(&msg).unwrap();
            let metric: f64 = cw
                .iter()
                .zip(llr)
                .map(|(&c, &l)| if c == 1 { l } else { 0.0 })
                .sum();
            if metric > best_metric {
                best_metric = metric;
                best = cw;
            }
        }
        best
    }

    #[test]
    fn toy_code_corrects_single_flip_and_matches_ml() {
        let code = toy_code();
        let mut rng = seeded_rng(4, 0);
        for trial in 0..20 {
            let msg = random_message(&code, &mut rng);
            let cw = code.encode(&msg).unwrap();
            let mut llr: Vec<f64> = cw.iter().map(|&b| (2.0 * b as f64 - 1.0) * 8.0).collect();
            let flip = trial % code.block_length();
            llr[flip] = -llr[flip];
            let ml = ml_decode(&code, &llr);
            assert_eq!(ml, cw, "ML oracle should undo one flip");
            let res = code.decode(&llr, 20);
            assert!(res.parity_ok, "trial {trial}");
            assert_eq!(res.hard_bits, cw);
        }
    }

    #[test]
    fn spa_posteriors_match_map_on_tree_code() {
        // Cycle-free graph: v0--c0--v1--c1--{v2, v3}. After enough sweeps
        // the sum-product posteriors equal the exact bitwise MAP marginals.
        let check_vars = vec![vec![0usize, 1], vec![1, 2, 3]];
        let code = LdpcCode::from_graph(4, 2, 1, check_vars).unwrap();
        let codewords: Vec<Vec<u8>> = (0..4u8)
            .map(|m| {
                let msg = vec![m & 1, (m >> 1) & 1];
                code.encode(&msg).unwrap()
            })
            .collect();

        let mut rng = seeded_rng(12, 0);
        for _ in 0..50 {
            let llr: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            // Exact marginals: weight(c) = exp(sum_i c_i llr_i) over codewords.
            let weight =
                |c: &[u8]| -> f64 { c.iter().zip(&llr).map(|(&b, &l)| b as f64 * l).sum::<f64>().exp() };
            let res = code.decode(&llr, 8);
            for bit in 0..4 {
                let p1: f64 = codewords.iter().filter(|c| c[bit] == 1).map(|c| weight(c)).sum();
                let p0: f64 = codewords.iter().filter(|c| c[bit] == 0).map(|c| weight(c)).sum();
                let map_llr = (p1 / p0).ln();
                let spa = llr[bit] + res.extrinsic[bit];
                assert!(
                    (spa - map_llr).abs() < 1e-9,
                    "bit {bit}: spa {spa} map {map_llr}"
                );
            }
        }
    }

    #[test]
    fn extrinsic_decomposition_is_exact() {
        let code = LdpcCode::build(64, 0.5, 3, 8).unwrap();
        let mut rng = seeded_rng(5, 0);
        let llr: Vec<f64> = (0..64).map(|_| rng.random_range(-6.0..6.0)).collect();
        let res = code.decode(&llr, 4);
        // Posterior is channel + extrinsic by construction; recompute the
        // posterior sign from the pieces and compare with the hard bits.
        for i in 0..64 {
            let posterior = llr[i] + res.extrinsic[i];
            assert_eq!(res.hard_bits[i], (posterior > 0.0) as u8);
        }
    }

    #[test]
    fn decoder_negation_equivariance_on_even_degree_code() {
        // All rows have degree 6 (even), so the all-ones word is a codeword
        // and negating every LLR flips every hard decision.
        let code = main_code();
        let ones = vec![1u8; code.block_length()];
        assert!(code.parity_check(&ones));

        let mut rng = seeded_rng(6, 0);
        let llr: Vec<f64> = (0..code.block_length())
            .map(|_| rng.random_range(-4.0..4.0))
            .collect();
        let neg: Vec<f64> = llr.iter().map(|l| -l).collect();
        let a = code.decode(&llr, 8);
        let b = code.decode(&neg, 8);
        for i in 0..code.block_length() {
            assert_eq!(a.hard_bits[i] ^ 1, b.hard_bits[i]);
            assert!((a.extrinsic[i] + b.extrinsic[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn min_sum_corrects_strong_single_flip() {
        let code = toy_code();
        let mut rng = seeded_rng(7, 0);
        let msg = random_message(&code, &mut rng);
        let cw = code.encode(&msg).unwrap();
        let mut llr: Vec<f64> = cw.iter().map(|&b| (2.0 * b as f64 - 1.0) * 8.0).collect();
        llr[3] = -llr[3];
        let res = code.decode_with(&llr, 20, DecodeMethod::MinSum);
        assert!(res.parity_ok);
        assert_eq!(res.hard_bits, cw);
    }

    #[test]
    fn alist_roundtrip() {
        let code = LdpcCode::build(48, 0.5, 3, 9).unwrap();
        let text = to_alist(&code);
        let (n, m, check_vars) = parse_alist(&text).unwrap();
        assert_eq!(n, 48);
        assert_eq!(m, 24);
        assert_eq!(check_vars, code.check_vars);
        assert!(parse_alist("3 2\n1").is_err());
    }
}
