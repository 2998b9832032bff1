//! Tripling coefficients C_ijk = mean(psi_i * psi_j * psi_k) over the unit
//! square, and the sparse triple-product sum that only enumerates triples
//! with nonzero C.
//!
//! Under the unit-square convention the integral of three basis functions is
//! nonzero in exactly three situations: all three scaling (C = 1); three
//! distinct wavelet types on one square (C = 2^l); or two identical wavelets
//! together with the scaling function or a strictly coarser overlapping
//! wavelet (C = +-2^l at the coarser function's level, sign given by its
//! constant value over the pair's support square). Everything else vanishes.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::haar::{BasisIndex, SparseCoeffs, WaveletType};
use crate::map::LatLongMap;

/// Classified value of one tripling coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriplingCase {
    /// All three scaling functions; value 1.
    AllScaling,
    /// Same square, all three wavelet types distinct; value 2^l.
    SameSquareDistinct { level: u32 },
    /// Two identical wavelets plus scaling or a strictly coarser
    /// overlapping wavelet; value +-2^(coarser level).
    PairPlusCoarser { coarser_level: u32, negative: bool },
    /// Every remaining combination integrates to zero.
    Zero,
}

impl TriplingCase {
    pub fn value(&self) -> f64 {
        match *self {
            TriplingCase::AllScaling => 1.0,
            TriplingCase::SameSquareDistinct { level } => (1u64 << level) as f64,
            TriplingCase::PairPlusCoarser {
                coarser_level,
                negative,
            } => {
                let v = (1u64 << coarser_level) as f64;
                if negative {
                    -v
                } else {
                    v
                }
            }
            TriplingCase::Zero => 0.0,
        }
    }
}

/// The constant value (in units of 2^coarse_level, i.e. just the sign) a
/// coarser wavelet takes over a descendant square. `None` when the squares
/// do not overlap.
fn coarse_sign_over(
    coarse: (u32, u32, u32, WaveletType),
    fine_level: u32,
    fine_row: u32,
    fine_col: u32,
) -> Option<bool> {
    let (cl, cr, cc, ty) = coarse;
    debug_assert!(cl < fine_level);
    let shift = fine_level - cl;
    if (fine_row >> shift) != cr || (fine_col >> shift) != cc {
        return None; // disjoint supports
    }
    let rb = (fine_row >> (shift - 1)) & 1;
    let cb = (fine_col >> (shift - 1)) & 1;
    let negative = match ty {
        WaveletType::Horizontal => cb == 1,
        WaveletType::Vertical => rb == 1,
        WaveletType::Diagonal => rb != cb,
    };
    Some(negative)
}

/// Evaluates one tripling coefficient from the case structure.
pub fn tripling_coefficient(i: BasisIndex, j: BasisIndex, k: BasisIndex) -> TriplingCase {
    let mut scalings = 0;
    let mut wavelets: Vec<(u32, u32, u32, WaveletType)> = Vec::with_capacity(3);
    for idx in [i, j, k] {
        match idx {
            BasisIndex::Scaling => scalings += 1,
            BasisIndex::Wavelet {
                level,
                row,
                col,
                ty,
            } => wavelets.push((level, row, col, ty)),
        }
    }
    match scalings {
        3 => TriplingCase::AllScaling,
        2 => TriplingCase::Zero, // mean of a single wavelet is zero
        1 => {
            // Orthonormality: <psi_a, psi_b> = delta_ab.
            if wavelets[0] == wavelets[1] {
                TriplingCase::PairPlusCoarser {
                    coarser_level: 0,
                    negative: false,
                }
            } else {
                TriplingCase::Zero
            }
        }
        _ => {
            let [a, b, c] = [wavelets[0], wavelets[1], wavelets[2]];
            if a.0 == b.0 && b.0 == c.0 && (a.1, a.2) == (b.1, b.2) && (b.1, b.2) == (c.1, c.2) {
                // One square; nonzero only when all three types differ.
                return if a.3 != b.3 && b.3 != c.3 && a.3 != c.3 {
                    TriplingCase::SameSquareDistinct { level: a.0 }
                } else {
                    TriplingCase::Zero
                };
            }
            // Remaining nonzero case: an identical pair plus a strictly
            // coarser overlapping wavelet.
            let (pair, third) = if a == b {
                (a, c)
            } else if a == c {
                (a, b)
            } else if b == c {
                (b, a)
            } else {
                return TriplingCase::Zero;
            };
            if third.0 >= pair.0 {
                return TriplingCase::Zero;
            }
            match coarse_sign_over(third, pair.0, pair.1, pair.2) {
                Some(negative) => TriplingCase::PairPlusCoarser {
                    coarser_level: third.0,
                    negative,
                },
                None => TriplingCase::Zero,
            }
        }
    }
}

/// Note: the scaling-function case of the pair rule reports
/// `PairPlusCoarser { coarser_level: 0, negative: false }`, whose value 1
/// coincides with the constant scaling function.
struct WaveletEntry {
    val: f64,
    level: u32,
    row: u32,
    col: u32,
}

// Ordered maps keep the summation order deterministic, which the renderer
// relies on for bitwise-stable images.
struct ChannelView {
    scaling: f64,
    by_ordinal: BTreeMap<u64, WaveletEntry>,
    /// (level, row, col) -> [h, v, d] values (zero when absent).
    by_square: BTreeMap<(u32, u32, u32), [f64; 3]>,
}

impl ChannelView {
    fn new(list: &[(u64, f64)], size_exp: u32) -> Result<Self> {
        let mut scaling = 0.0;
        let mut by_ordinal = BTreeMap::new();
        let mut by_square: BTreeMap<(u32, u32, u32), [f64; 3]> = BTreeMap::new();
        for &(ord, val) in list {
            match BasisIndex::from_ordinal(ord, size_exp)? {
                BasisIndex::Scaling => scaling = val,
                BasisIndex::Wavelet {
                    level,
                    row,
                    col,
                    ty,
                } => {
                    by_ordinal.insert(
                        ord,
                        WaveletEntry {
                            val,
                            level,
                            row,
                            col,
                        },
                    );
                    by_square.entry((level, row, col)).or_default()[ty as usize] = val;
                }
            }
        }
        Ok(ChannelView {
            scaling,
            by_ordinal,
            by_square,
        })
    }

    /// Visits the scaling value and every strictly coarser wavelet
    /// overlapping the given square, each weighted by its signed 2^l value
    /// there (the tripling coefficient of the pair case).
    fn for_each_coarser(&self, level: u32, row: u32, col: u32, mut sink: impl FnMut(f64)) {
        if self.scaling != 0.0 {
            sink(self.scaling);
        }
        for cl in 0..level {
            let shift = level - cl;
            let cr = row >> shift;
            let cc = col >> shift;
            let rb = (row >> (shift - 1)) & 1;
            let cb = (col >> (shift - 1)) & 1;
            let amp = (1u64 << cl) as f64;
            for ty in WaveletType::ALL {
                let ord = BasisIndex::Wavelet {
                    level: cl,
                    row: cr,
                    col: cc,
                    ty,
                }
                .ordinal();
                if let Some(e) = self.by_ordinal.get(&ord) {
                    let negative = match ty {
                        WaveletType::Horizontal => cb == 1,
                        WaveletType::Vertical => rb == 1,
                        WaveletType::Diagonal => rb != cb,
                    };
                    sink(if negative { -e.val * amp } else { e.val * amp });
                }
            }
        }
    }
}

/// Sparse triple-product sum sum_ijk C_ijk a_i b_j c_k, one value per
/// channel. Single-channel inputs broadcast against multi-channel ones.
pub fn triple_product_sum(a: &SparseCoeffs, b: &SparseCoeffs, c: &SparseCoeffs) -> Result<Vec<f64>> {
    if a.size_exp != b.size_exp || b.size_exp != c.size_exp {
        return Err(Error::SizeMismatch(
            a.size_exp,
            if a.size_exp != b.size_exp {
                b.size_exp
            } else {
                c.size_exp
            },
        ));
    }
    let channels = a.channels.max(b.channels).max(c.channels);
    for s in [a, b, c] {
        if s.channels != 1 && s.channels != channels {
            return Err(Error::ChannelMismatch(s.channels, channels));
        }
    }
    let mut out = Vec::with_capacity(channels);
    for ch in 0..channels {
        let pick = |s: &SparseCoeffs| if s.channels == 1 { 0 } else { ch };
        let va = ChannelView::new(&a.coeffs[pick(a)], a.size_exp)?;
        let vb = ChannelView::new(&b.coeffs[pick(b)], b.size_exp)?;
        let vc = ChannelView::new(&c.coeffs[pick(c)], c.size_exp)?;
        out.push(triple_sum_channel(&va, &vb, &vc));
    }
    Ok(out)
}

fn triple_sum_channel(a: &ChannelView, b: &ChannelView, c: &ChannelView) -> f64 {
    let mut total = 0.0;
    for_each_nonzero_term(a, b, c, |term| total += term);
    total
}

/// Walks exactly the triples with nonzero tripling coefficient that are
/// present in the three sets, feeding each term C_ijk a_i b_j c_k to the
/// sink. The traversal follows the theorem's case structure, so the cost is
/// O(K log N) for K retained coefficients, never all K^3 triples.
fn for_each_nonzero_term(
    a: &ChannelView,
    b: &ChannelView,
    c: &ChannelView,
    mut sink: impl FnMut(f64),
) {
    // Case (a): all three scaling.
    if a.scaling != 0.0 && b.scaling != 0.0 && c.scaling != 0.0 {
        sink(a.scaling * b.scaling * c.scaling);
    }

    // Case (b): one square, three distinct types, all six assignments.
    // Iterate squares of the smallest map and require presence in the others.
    let smallest = [&a.by_square, &b.by_square, &c.by_square]
        .into_iter()
        .min_by_key(|m| m.len())
        .expect("three maps");
    for &(level, row, col) in smallest.keys() {
        let (Some(ta), Some(tb), Some(tc)) = (
            a.by_square.get(&(level, row, col)),
            b.by_square.get(&(level, row, col)),
            c.by_square.get(&(level, row, col)),
        ) else {
            continue;
        };
        let amp = (1u64 << level) as f64;
        for (i, j, k) in [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)] {
            let prod = ta[i] * tb[j] * tc[k];
            if prod != 0.0 {
                sink(amp * prod);
            }
        }
    }

    // Case (c): identical pair in two of the sets, third strictly coarser
    // (or scaling) from the remaining set.
    pair_terms(a, b, c, &mut sink);
    pair_terms(a, c, b, &mut sink);
    pair_terms(b, c, a, &mut sink);
}

/// Terms x_w * y_w * z_third over wavelets w present in both x and y, with
/// the third drawn from z's scaling and strict overlapping ancestors of w.
fn pair_terms(x: &ChannelView, y: &ChannelView, z: &ChannelView, sink: &mut impl FnMut(f64)) {
    let (small, other) = if x.by_ordinal.len() <= y.by_ordinal.len() {
        (&x.by_ordinal, &y.by_ordinal)
    } else {
        (&y.by_ordinal, &x.by_ordinal)
    };
    for (ord, xe) in small {
        let Some(ye) = other.get(ord) else {
            continue;
        };
        let pair = xe.val * ye.val;
        z.for_each_coarser(xe.level, xe.row, xe.col, |signed_third| {
            sink(pair * signed_third);
        });
    }
}

/// Mean over the grid of the pointwise triple product (unit-square
/// measure) — the brute-force oracle for [`triple_product_sum`].
pub fn brute_force_triple_integral(
    ma: &LatLongMap,
    mb: &LatLongMap,
    mc: &LatLongMap,
) -> Result<Vec<f64>> {
    if ma.size_exp() != mb.size_exp() || mb.size_exp() != mc.size_exp() {
        return Err(Error::SizeMismatch(ma.size_exp(), mb.size_exp().max(mc.size_exp())));
    }
    let channels = ma.channels().max(mb.channels()).max(mc.channels());
    for m in [ma, mb, mc] {
        if m.channels() != 1 && m.channels() != channels {
            return Err(Error::ChannelMismatch(m.channels(), channels));
        }
    }
    let plane = ma.side() * ma.side();
    let mut out = Vec::with_capacity(channels);
    for ch in 0..channels {
        let pick = |m: &LatLongMap| if m.channels() == 1 { 0 } else { ch };
        let (pa, pb, pc) = (ma.channel(pick(ma)), mb.channel(pick(mb)), mc.channel(pick(mc)));
        let sum: f64 = (0..plane).map(|i| pa[i] * pb[i] * pc[i]).sum();
        out.push(sum / plane as f64);
    }
    Ok(out)
}
