//! Piecewise-linear symbolization. A series becomes (len, inc) pieces under
//! a per-piece error budget, pieces are clustered into an alphabet, and the
//! alphabet supports nearest-center assignment plus an approximate inverse.

use crate::error::{Result, StatError};
use serde::{Deserialize, Serialize};

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Piece {
    /// Steps covered, >= 1. A piece over indices i..j has len j-i.
    pub len: usize,
    /// Total rise over the piece.
    pub inc: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Codebook {
    /// (mean len, mean inc) per cluster, original units, ordered by symbol.
    centers: Vec<(f64, f64)>,
    populations: Vec<usize>,
    symbols: Vec<char>,
    pub scl: f64,
    pub tol: f64,
    sigma_len: f64,
    sigma_inc: f64,
}

#[derive(Clone, Debug)]
pub struct SymbolicSequence {
    pub symbols: String,
    pub tol: f64,
    /// Points in the series the sequence was built from.
    pub source_len: usize,
}

/// Window-level Z-score; a constant series maps to all zeros.
pub fn zscore(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        vec![0.0; x.len()]
    } else {
        x.iter().map(|v| (v - mean) / std).collect()
    }
}

/// Greedy compression: each piece is the longest prefix whose endpoint-
/// connecting line keeps the summed squared error within len * tol^2.
pub fn compress(x: &[f64], tol: f64) -> Result<Vec<Piece>> {
    if x.len() < 2 {
        return Err(StatError::Input(format!(
            "compression needs at least 2 points, got {}",
            x.len()
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(StatError::Input("non-finite value in series".into()));
    }
    if !(tol > 0.0) {
        return Err(StatError::Config(format!("tolerance must be positive, got {tol}")));
    }
    let mut pieces = Vec::new();
    let mut i = 0usize;
    while i + 1 < x.len() {
        // Running sums over d_k = x[k] - x[i]: with slope s = inc/len the
        // error is sum(d_k - (k-i) s)^2 = A - 2 s B + s^2 C, updated in O(1)
        // as the candidate endpoint advances.
        let (mut a, mut b, mut c) = (0.0_f64, 0.0_f64, 0.0_f64);
        let mut j = i + 1;
        {
            let d = x[j] - x[i];
            a += d * d;
            b += d;
            c += 1.0;
        }
        loop {
            if j + 1 >= x.len() {
                break;
            }
            let k = (j + 1 - i) as f64;
            let d = x[j + 1] - x[i];
            let (a2, b2, c2) = (a + d * d, b + k * d, c + k * k);
            let s = d / k;
            let err = a2 - 2.0 * s * b2 + s * s * c2;
            if err <= k * tol * tol {
                j += 1;
                a = a2;
                b = b2;
                c = c2;
            } else {
                break;
            }
        }
        pieces.push(Piece {
            len: j - i,
            inc: x[j] - x[i],
        });
        i = j;
    }
    Ok(pieces)
}

/// Direct (non-incremental) evaluation of the compression criterion; the
/// tests use it as an independent oracle against `compress`.
pub fn piece_error(x: &[f64], i: usize, j: usize) -> f64 {
    let len = (j - i) as f64;
    let slope = (x[j] - x[i]) / len;
    (i..=j)
        .map(|k| {
            let line = x[i] + slope * (k - i) as f64;
            let e = x[k] - line;
            e * e
        })
        .sum()
}

fn population_std(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = vals.clone().count() as f64;
    let mean = vals.clone().sum::<f64>() / n;
    (vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Cluster pieces into a codebook. Also reports which symbol each input
/// piece landed in and the input index of each cluster's starter, which the
/// aggregation-guarantee tests check directly.
pub fn digitize_detailed(
    pieces: &[Piece],
    tol: f64,
    scl: f64,
) -> Result<(Codebook, Vec<usize>, Vec<usize>)> {
    if pieces.is_empty() {
        return Err(StatError::Input("cannot build a codebook from zero pieces".into()));
    }
    let mut sigma_len = population_std(pieces.iter().map(|p| p.len as f64));
    let mut sigma_inc = population_std(pieces.iter().map(|p| p.inc));
    if sigma_len == 0.0 {
        sigma_len = 1.0;
    }
    if sigma_inc == 0.0 {
        sigma_inc = 1.0;
    }
    let pts: Vec<(f64, f64)> = pieces
        .iter()
        .map(|p| (scl * p.len as f64 / sigma_len, p.inc / sigma_inc))
        .collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[a].0.total_cmp(&pts[b].0));

    let r2 = 2.0 * tol * tol; // radius tol * sqrt(2), squared
    let mut group_of = vec![usize::MAX; pts.len()];
    let mut starters: Vec<usize> = Vec::new();
    for si in 0..order.len() {
        let s = order[si];
        if group_of[s] != usize::MAX {
            continue;
        }
        let gid = starters.len();
        starters.push(s);
        group_of[s] = gid;
        for &t in &order[si + 1..] {
            if group_of[t] != usize::MAX {
                continue;
            }
            let dx = pts[t].0 - pts[s].0;
            if dx * dx > r2 {
                break; // sorted by x: nothing further can be in range
            }
            let dy = pts[t].1 - pts[s].1;
            if dx * dx + dy * dy <= r2 {
                group_of[t] = gid;
            }
        }
    }

    let ng = starters.len();
    let mut sums = vec![(0.0_f64, 0.0_f64); ng];
    let mut pops = vec![0usize; ng];
    for (p, &g) in pieces.iter().zip(&group_of) {
        sums[g].0 += p.len as f64;
        sums[g].1 += p.inc;
        pops[g] += 1;
    }
    // largest cluster first; stable sort keeps discovery order on ties
    let mut by_pop: Vec<usize> = (0..ng).collect();
    by_pop.sort_by(|&a, &b| pops[b].cmp(&pops[a]));

    let mut centers = Vec::with_capacity(ng);
    let mut populations = Vec::with_capacity(ng);
    let mut symbols = Vec::with_capacity(ng);
    let mut symbol_of_group = vec![0usize; ng];
    for (rank, &g) in by_pop.iter().enumerate() {
        centers.push((sums[g].0 / pops[g] as f64, sums[g].1 / pops[g] as f64));
        populations.push(pops[g]);
        symbols.push(alphabet_symbol(rank));
        symbol_of_group[g] = rank;
    }
    let symbol_of_piece: Vec<usize> = group_of.iter().map(|&g| symbol_of_group[g]).collect();
    let starter_of_symbol: Vec<usize> = by_pop.iter().map(|&g| starters[g]).collect();

    Ok((
        Codebook {
            centers,
            populations,
            symbols,
            scl,
            tol,
            sigma_len,
            sigma_inc,
        },
        symbol_of_piece,
        starter_of_symbol,
    ))
}

pub fn digitize(pieces: &[Piece], tol: f64, scl: f64) -> Result<Codebook> {
    digitize_detailed(pieces, tol, scl).map(|(c, _, _)| c)
}

/// 'A'-'Z', 'a'-'z', '0'-'9', then codepoints from U+0100 up (hopping the
/// surrogate block) so any cluster count gets a distinct single character.
pub fn alphabet_symbol(i: usize) -> char {
    match i {
        0..=25 => (b'A' + i as u8) as char,
        26..=51 => (b'a' + (i - 26) as u8) as char,
        52..=61 => (b'0' + (i - 52) as u8) as char,
        _ => {
            let mut cp = 0x100u32 + (i as u32 - 62);
            if cp >= 0xD800 {
                cp += 0x800;
            }
            char::from_u32(cp).expect("codepoint skips surrogates")
        }
    }
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, idx: usize) -> (f64, f64) {
        self.centers[idx]
    }

    pub fn population(&self, idx: usize) -> usize {
        self.populations[idx]
    }

    pub fn symbol(&self, idx: usize) -> char {
        self.symbols[idx]
    }

    pub fn symbol_index(&self, ch: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == ch)
    }

    fn scale_point(&self, len: f64, inc: f64) -> (f64, f64) {
        (self.scl * len / self.sigma_len, inc / self.sigma_inc)
    }

    /// Nearest center in scaled space; ties go to the lower symbol index.
    pub fn assign(&self, piece: &Piece) -> usize {
        let p = self.scale_point(piece.len as f64, piece.inc);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, &(cl, ci)) in self.centers.iter().enumerate() {
            let c = self.scale_point(cl, ci);
            let d = (p.0 - c.0) * (p.0 - c.0) + (p.1 - c.1) * (p.1 - c.1);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// One header line (tol, scl, sigmas) then one record per symbol:
    /// symbol, mean length, mean increment, population.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {} {}\n", self.tol, self.scl, self.sigma_len, self.sigma_inc);
        for k in 0..self.len() {
            out.push_str(&format!(
                "{} {} {} {}\n",
                self.symbols[k], self.centers[k].0, self.centers[k].1, self.populations[k]
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Codebook> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| StatError::Load("empty codebook".into()))?;
        let h: Vec<f64> = header
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| StatError::Load(format!("codebook header: {e}"))))
            .collect::<Result<_>>()?;
        if h.len() != 4 {
            return Err(StatError::Load(format!(
                "codebook header needs 4 fields, got {}",
                h.len()
            )));
        }
        let mut centers = Vec::new();
        let mut populations = Vec::new();
        let mut symbols = Vec::new();
        for line in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(StatError::Load(format!("bad codebook record: {line:?}")));
            }
            let mut chars = toks[0].chars();
            let sym = chars
                .next()
                .filter(|_| chars.next().is_none())
                .ok_or_else(|| StatError::Load(format!("bad symbol field: {:?}", toks[0])))?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| StatError::Load(format!("codebook record: {e}")))
            };
            symbols.push(sym);
            centers.push((parse(toks[1])?, parse(toks[2])?));
            populations.push(
                toks[3]
                    .parse::<usize>()
                    .map_err(|e| StatError::Load(format!("codebook record: {e}")))?,
            );
        }
        if centers.is_empty() {
            return Err(StatError::Load("codebook has no records".into()));
        }
        Ok(Codebook {
            centers,
            populations,
            symbols,
            tol: h[0],
            scl: h[1],
            sigma_len: h[2],
            sigma_inc: h[3],
        })
    }
}

/// Compress, then map every piece through the codebook.
pub fn symbolize(x: &[f64], book: &Codebook) -> Result<SymbolicSequence> {
    let pieces = compress(x, book.tol)?;
    let symbols: String = pieces.iter().map(|p| book.symbol(book.assign(p))).collect();
    Ok(SymbolicSequence {
        symbols,
        tol: book.tol,
        source_len: x.len(),
    })
}

pub fn validate_tolerances(tols: &[f64]) -> Result<()> {
    if tols.iter().any(|&t| !(t > 0.0)) {
        return Err(StatError::Config(format!("tolerances must be positive: {tols:?}")));
    }
    if tols.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StatError::Config(format!(
            "tolerances must be strictly increasing: {tols:?}"
        )));
    }
    Ok(())
}

/// One sequence per tolerance, each with a codebook fit on this window's own
/// pieces. Training fits shared codebooks instead; this entry point serves
/// the per-window tests and the reconstruction oracle.
pub fn multi_scale(x: &[f64], tols: &[f64], scl: f64) -> Result<Vec<(SymbolicSequence, Codebook)>> {
    validate_tolerances(tols)?;
    let z = zscore(x);
    tols.iter()
        .map(|&tol| {
            let pieces = compress(&z, tol)?;
            let book = digitize(&pieces, tol, scl)?;
            let seq = SymbolicSequence {
                symbols: pieces.iter().map(|p| book.symbol(book.assign(p))).collect(),
                tol,
                source_len: x.len(),
            };
            Ok((seq, book))
        })
        .collect()
}

/// Inverse transform: stitch center pieces cumulatively. Center lengths are
/// fractional, so rounding is compensated against the running total and the
/// final piece is forced so the decoded length is exact.
pub fn reconstruct(seq: &SymbolicSequence, book: &Codebook, start: f64) -> Result<Vec<f64>> {
    let total_steps = seq.source_len.saturating_sub(1);
    let m = seq.symbols.chars().count();
    let mut out = Vec::with_capacity(seq.source_len);
    out.push(start);
    if m == 0 {
        if total_steps != 0 {
            return Err(StatError::Input(
                "empty sequence for a multi-point series".into(),
            ));
        }
        return Ok(out);
    }
    let mut cum_real = 0.0_f64;
    let mut done = 0usize;
    let mut val = start;
    for (k, ch) in seq.symbols.chars().enumerate() {
        let idx = book
            .symbol_index(ch)
            .ok_or_else(|| StatError::Input(format!("symbol {ch:?} not in codebook")))?;
        let (mean_len, mean_inc) = book.center(idx);
        cum_real += mean_len;
        let steps = if k == m - 1 {
            total_steps - done
        } else {
            let want = cum_real.round() as i64 - done as i64;
            want.clamp(0, (total_steps - done) as i64) as usize
        };
        if steps > 0 {
            let ds = mean_inc / steps as f64;
            for _ in 0..steps {
                val += ds;
                out.push(val);
            }
            done += steps;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_series_is_one_flat_piece() {
        let x = vec![3.25; 10];
        let p = compress(&x, 0.01).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].len, 9);
        assert_eq!(p[0].inc, 0.0);
    }

    #[test]
    fn exact_ramp_is_one_piece() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let p = compress(&x, 0.01).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].len, 9);
        assert_eq!(p[0].inc, 9.0);
    }

    #[test]
    fn too_short_series_is_an_input_error() {
        assert!(compress(&[1.0], 0.1).is_err());
        assert!(compress(&[], 0.1).is_err());
    }

    #[test]
    fn pieces_partition_and_satisfy_criterion_with_maximality() {
        let x: Vec<f64> = (0..96)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 24.0).sin())
            .collect();
        let tol = 0.1;
        let pieces = compress(&x, tol).unwrap();
        assert_eq!(pieces.iter().map(|p| p.len).sum::<usize>(), 95);
        let mut i = 0usize;
        for p in &pieces {
            let j = i + p.len;
            assert!((x[j] - x[i] - p.inc).abs() < 1e-12);
            let err = piece_error(&x, i, j);
            assert!(
                err <= p.len as f64 * tol * tol + 1e-12,
                "criterion violated on [{i}..{j}]: {err}"
            );
            if j + 1 < x.len() {
                let ext = piece_error(&x, i, j + 1);
                assert!(
                    ext > (p.len + 1) as f64 * tol * tol,
                    "piece [{i}..{j}] not maximal"
                );
            }
            i = j;
        }
    }

    #[test]
    fn identical_pieces_collapse_to_one_center() {
        let pieces = vec![Piece { len: 4, inc: 1.5 }; 7];
        let book = digitize(&pieces, 0.1, 1.0).unwrap();
        assert_eq!(book.len(), 1);
        assert_eq!(book.symbol(0), 'A');
        assert_eq!(book.center(0), (4.0, 1.5));
        assert_eq!(book.population(0), 7);
    }

    #[test]
    fn larger_cluster_gets_the_earlier_letter() {
        let mut pieces = vec![Piece { len: 2, inc: 0.1 }; 3];
        pieces.extend(vec![Piece { len: 40, inc: -9.0 }; 5]);
        let book = digitize(&pieces, 0.1, 1.0).unwrap();
        assert_eq!(book.len(), 2);
        assert_eq!(book.symbol(0), 'A');
        assert_eq!(book.population(0), 5);
        assert!((book.center(0).0 - 40.0).abs() < 1e-12);
        assert_eq!(book.symbol(1), 'B');
        assert_eq!(book.population(1), 3);
    }

    #[test]
    fn every_piece_is_within_radius_of_its_starter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pieces: Vec<Piece> = (0..50)
            .map(|_| Piece {
                len: rng.random_range(1..30),
                inc: rng.random_range(-2.0..2.0),
            })
            .collect();
        let tol = 0.3;
        let (book, symbol_of, starter_of) = digitize_detailed(&pieces, tol, 1.0).unwrap();
        let r2 = 2.0 * tol * tol;
        for (i, p) in pieces.iter().enumerate() {
            let s = &pieces[starter_of[symbol_of[i]]];
            let a = book.scale_point(p.len as f64, p.inc);
            let b = book.scale_point(s.len as f64, s.inc);
            let d2 = (a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1);
            assert!(d2 <= r2 + 1e-12, "piece {i} outside its starter's radius");
        }
    }

    #[test]
    fn assign_exact_center_and_tie_rule() {
        let pieces = vec![
            Piece { len: 1, inc: 0.0 },
            Piece { len: 1, inc: 0.0 },
            Piece { len: 3, inc: 0.0 },
        ];
        // tiny radius keeps the two distinct positions in separate clusters
        let book = digitize(&pieces, 0.01, 1.0).unwrap();
        assert_eq!(book.len(), 2);
        assert_eq!(book.assign(&Piece { len: 1, inc: 0.0 }), 0);
        assert_eq!(book.assign(&Piece { len: 3, inc: 0.0 }), 1);
        // equidistant between the two centers -> lower symbol index
        assert_eq!(book.assign(&Piece { len: 2, inc: 0.0 }), 0);
    }

    #[test]
    fn assign_matches_linear_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let corpus: Vec<Piece> = (0..300)
            .map(|_| Piece {
                len: rng.random_range(1..60),
                inc: rng.random_range(-3.0..3.0),
            })
            .collect();
        let book = digitize(&corpus, 0.2, 1.0).unwrap();
        for _ in 0..1000 {
            let p = Piece {
                len: rng.random_range(1..60),
                inc: rng.random_range(-3.0..3.0),
            };
            let got = book.assign(&p);
            let sp = book.scale_point(p.len as f64, p.inc);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for k in 0..book.len() {
                let c = book.scale_point(book.center(k).0, book.center(k).1);
                let d = (sp.0 - c.0) * (sp.0 - c.0) + (sp.1 - c.1) * (sp.1 - c.1);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            assert_eq!(got, best);
        }
    }

    #[test]
    fn multi_scale_constant_series_is_single_symbol_everywhere() {
        let x = vec![5.0; 50];
        let scales = multi_scale(&x, &[0.01, 0.1, 0.5], 1.0).unwrap();
        for (seq, _) in &scales {
            assert_eq!(seq.symbols, "A");
        }
    }

    #[test]
    fn multi_scale_lengths_non_increasing() {
        let x: Vec<f64> = (0..96)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 24.0).sin() + 0.01 * t as f64)
            .collect();
        let scales = multi_scale(&x, &[0.01, 0.1, 0.5], 1.0).unwrap();
        let lens: Vec<usize> = scales.iter().map(|(s, _)| s.symbols.chars().count()).collect();
        assert!(lens[0] >= lens[1] && lens[1] >= lens[2], "{lens:?}");
    }

    #[test]
    fn bad_tolerances_are_config_errors() {
        assert!(multi_scale(&[0.0, 1.0, 2.0], &[0.1, 0.1, 0.5], 1.0).is_err());
        assert!(multi_scale(&[0.0, 1.0, 2.0], &[0.5, 0.1], 1.0).is_err());
        assert!(validate_tolerances(&[0.0, 0.1]).is_err());
    }

    #[test]
    fn reconstruct_is_exact_on_constant_and_ramp() {
        for x in [vec![2.0; 12], (0..12).map(|i| i as f64 * 0.5).collect::<Vec<_>>()] {
            let pieces = compress(&x, 0.01).unwrap();
            let book = digitize(&pieces, 0.01, 1.0).unwrap();
            let seq = SymbolicSequence {
                symbols: pieces.iter().map(|p| book.symbol(book.assign(p))).collect(),
                tol: 0.01,
                source_len: x.len(),
            };
            let y = reconstruct(&seq, &book, x[0]).unwrap();
            assert_eq!(y.len(), x.len());
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstruct_length_exact_on_random_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let mut v = 0.0;
            let x: Vec<f64> = (0..96)
                .map(|_| {
                    v += rng.random_range(-0.3..0.3);
                    v
                })
                .collect();
            for &tol in &[0.01, 0.1, 0.5] {
                let z = zscore(&x);
                let pieces = compress(&z, tol).unwrap();
                let book = digitize(&pieces, tol, 1.0).unwrap();
                let seq = SymbolicSequence {
                    symbols: pieces.iter().map(|p| book.symbol(book.assign(p))).collect(),
                    tol,
                    source_len: z.len(),
                };
                let y = reconstruct(&seq, &book, z[0]).unwrap();
                assert_eq!(y.len(), 96);
            }
        }
    }

    #[test]
    fn alphabet_order_and_extension() {
        assert_eq!(alphabet_symbol(0), 'A');
        assert_eq!(alphabet_symbol(25), 'Z');
        assert_eq!(alphabet_symbol(26), 'a');
        assert_eq!(alphabet_symbol(51), 'z');
        assert_eq!(alphabet_symbol(52), '0');
        assert_eq!(alphabet_symbol(61), '9');
        assert_eq!(alphabet_symbol(62), '\u{100}');
        assert_eq!(alphabet_symbol(63), '\u{101}');
        // far out: still distinct single chars
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..70000 {
            assert!(seen.insert(alphabet_symbol(i)), "collision at {i}");
        }
    }

    #[test]
    fn codebook_text_roundtrip() {
        let pieces = vec![
            Piece { len: 3, inc: 0.5 },
            Piece { len: 3, inc: 0.5 },
            Piece { len: 17, inc: -2.25 },
        ];
        let book = digitize(&pieces, 0.1, 1.0).unwrap();
        let text = book.to_text();
        let back = Codebook::from_text(&text).unwrap();
        assert_eq!(back.len(), book.len());
        for k in 0..book.len() {
            assert_eq!(back.symbol(k), book.symbol(k));
            assert_eq!(back.center(k), book.center(k));
            assert_eq!(back.population(k), book.population(k));
        }
        assert_eq!(back.tol, book.tol);
        assert_eq!(back.sigma_len, book.sigma_len);
        assert_eq!(back.sigma_inc, book.sigma_inc);
    }

    #[test]
    fn codebook_text_rejects_garbage() {
        assert!(Codebook::from_text("").is_err());
        assert!(Codebook::from_text("0.1 1 1 1\nAB 1 2 3\n").is_err());
        assert!(Codebook::from_text("0.1 1 1\nA 1 2 3\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_criterion_and_maximality(
            seed in 0u64..1000,
            n in 8usize..120,
            tol in 0.01f64..0.6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = 0.0;
            let x: Vec<f64> = (0..n).map(|_| { v += rng.random_range(-0.5..0.5); v }).collect();
            let z = zscore(&x);
            let pieces = compress(&z, tol).unwrap();
            prop_assert_eq!(pieces.iter().map(|p| p.len).sum::<usize>(), n - 1);
            let mut i = 0usize;
            for p in &pieces {
                let j = i + p.len;
                prop_assert!(piece_error(&z, i, j) <= p.len as f64 * tol * tol + 1e-9);
                if j + 1 < z.len() {
                    prop_assert!(piece_error(&z, i, j + 1) > (p.len + 1) as f64 * tol * tol);
                }
                i = j;
            }
        }

        #[test]
        fn prop_sequence_length_non_increasing_in_tol(
            seed in 0u64..1000,
            n in 16usize..100,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = 0.0;
            let x: Vec<f64> = (0..n).map(|_| { v += rng.random_range(-0.5..0.5); v }).collect();
            let z = zscore(&x);
            let mut prev = usize::MAX;
            for tol in [0.01, 0.05, 0.1, 0.25, 0.5, 1.0] {
                let cur = compress(&z, tol).unwrap().len();
                prop_assert!(cur <= prev, "tol {} gave {} pieces after {}", tol, cur, prev);
                prev = cur;
            }
        }

        #[test]
        fn prop_decoded_length_always_exact(
            seed in 0u64..1000,
            n in 8usize..120,
            tol in 0.01f64..0.6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = 0.0;
            let x: Vec<f64> = (0..n).map(|_| { v += rng.random_range(-0.5..0.5); v }).collect();
            let z = zscore(&x);
            let pieces = compress(&z, tol).unwrap();
            let book = digitize(&pieces, tol, 1.0).unwrap();
            let seq = SymbolicSequence {
                symbols: pieces.iter().map(|p| book.symbol(book.assign(p))).collect(),
                tol,
                source_len: n,
            };
            let y = reconstruct(&seq, &book, z[0]).unwrap();
            prop_assert_eq!(y.len(), n);
        }
    }
}
