//! Globally adaptive 7/15-point Gauss–Kronrod integration of vector-valued
//! integrands, with graded substitution at endpoint singularities.

// Kronrod abscissae on [0, 1]; odd indices are the Gauss points.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One integration segment `[a, b]`. A grade > 1 on an end means the
/// integrand has an integrable singularity there.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub grade_left: u32,
    pub grade_right: u32,
    /// Caller value handed back with nodes near a graded end, typically
    /// the exact location of the singularity in the caller's coordinates.
    pub anchor_left: Option<f64>,
    pub anchor_right: Option<f64>,
    /// Caller-defined group id; per-group sums are reported.
    pub tag: usize,
}

impl Segment {
    pub fn plain(a: f64, b: f64) -> Self {
        Self {
            a,
            b,
            grade_left: 1,
            grade_right: 1,
            anchor_left: None,
            anchor_right: None,
            tag: 0,
        }
    }
}

/// A quadrature node. On graded pieces with an anchor, `near` holds the
/// anchor and the offset `z - z0` from the singular end, computed without
/// cancellation.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub z: f64,
    pub near: Option<(f64, f64)>,
}

/// Per-component acceptance: `err ≤ max(abs, rel·|value|, roundoff floor)`.
#[derive(Debug, Clone, Copy)]
pub struct ComponentTol {
    pub rel: f64,
    pub abs: f64,
}

#[derive(Debug, Clone)]
pub struct VecIntegral {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// `∫|f_k|` as estimated by the Kronrod rule.
    pub abs_values: Vec<f64>,
    /// `[tag][component]` sums of values.
    pub tag_values: Vec<Vec<f64>>,
    /// `[tag][component]` sums of absolute values.
    pub tag_abs: Vec<Vec<f64>>,
    pub panels: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Linear,
    // z = z0 + h v^p, v in [0, 1]
    Left { z0: f64, h: f64, p: i32, anchor: Option<f64> },
    // z = z0 - h v^p, v in [0, 1]
    Right { z0: f64, h: f64, p: i32, anchor: Option<f64> },
}

impl Map {
    #[inline]
    fn apply(&self, v: f64) -> (Node, f64) {
        match *self {
            Map::Linear => (Node { z: v, near: None }, 1.0),
            Map::Left { z0, h, p, anchor } => {
                let vp1 = v.powi(p - 1);
                let dz = h * vp1 * v;
                (Node { z: z0 + dz, near: anchor.map(|y| (y, dz)) }, h * p as f64 * vp1)
            }
            Map::Right { z0, h, p, anchor } => {
                let vp1 = v.powi(p - 1);
                let dz = -h * vp1 * v;
                (Node { z: z0 + dz, near: anchor.map(|y| (y, dz)) }, h * p as f64 * vp1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    map: Map,
    tag: usize,
}

struct Panel {
    piece: usize,
    lo: f64,
    hi: f64,
    frozen: bool,
}

struct Workspace {
    dim: usize,
    fvals: Vec<f64>,
    buf: Vec<f64>,
}

fn roundoff_floor(abs: f64) -> f64 {
    50.0 * f64::EPSILON * abs
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            fvals: vec![0.0; 15 * dim],
            buf: vec![0.0; dim],
        }
    }

    /// Kronrod rule on `[lo, hi]` of the mapped integrand; writes value,
    /// error and |f| integral for every component into `out`.
    fn rule<F: FnMut(Node, &mut [f64])>(
        &mut self,
        f: &mut F,
        map: Map,
        lo: f64,
        hi: f64,
        out_val: &mut [f64],
        out_err: &mut [f64],
        out_abs: &mut [f64],
    ) {
        let dim = self.dim;
        let center = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        // node i in 0..15: 0..7 left side, 7 center, 8..15 right side
        for i in 0..15 {
            let xi = if i < 7 {
                center - half * XGK[i]
            } else if i == 7 {
                center
            } else {
                center + half * XGK[14 - i]
            };
            let (node, jac) = map.apply(xi);
            let row = &mut self.fvals[i * dim..(i + 1) * dim];
            if jac == 0.0 {
                row.iter_mut().for_each(|r| *r = 0.0);
                continue;
            }
            self.buf.iter_mut().for_each(|b| *b = 0.0);
            f(node, &mut self.buf);
            for (r, b) in row.iter_mut().zip(self.buf.iter()) {
                *r = b * jac;
            }
        }
        for k in 0..dim {
            let fc = self.fvals[7 * dim + k];
            let mut res_k = WGK[7] * fc;
            let mut res_g = WG[3] * fc;
            let mut res_abs = WGK[7] * fc.abs();
            for j in 0..7 {
                let f1 = self.fvals[j * dim + k];
                let f2 = self.fvals[(14 - j) * dim + k];
                res_k += WGK[j] * (f1 + f2);
                res_abs += WGK[j] * (f1.abs() + f2.abs());
                if j % 2 == 1 {
                    res_g += WG[j / 2] * (f1 + f2);
                }
            }
            let mean = 0.5 * res_k;
            let mut res_asc = WGK[7] * (fc - mean).abs();
            for j in 0..7 {
                let f1 = self.fvals[j * dim + k];
                let f2 = self.fvals[(14 - j) * dim + k];
                res_asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
            }
            let hl = half.abs();
            let result = res_k * half;
            res_abs *= hl;
            res_asc *= hl;
            let mut err = ((res_k - res_g) * half).abs();
            if res_asc != 0.0 && err != 0.0 {
                err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
            }
            if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
                err = err.max(roundoff_floor(res_abs));
            }
            out_val[k] = result;
            out_err[k] = err;
            out_abs[k] = res_abs;
        }
    }
}

fn build_pieces(segments: &[Segment]) -> Vec<(Piece, f64, f64)> {
    let mut pieces = Vec::with_capacity(segments.len());
    for s in segments {
        if !(s.b > s.a) {
            continue;
        }
        let gl = s.grade_left > 1;
        let gr = s.grade_right > 1;
        match (gl, gr) {
            (false, false) => pieces.push((
                Piece {
                    map: Map::Linear,
                    tag: s.tag,
                },
                s.a,
                s.b,
            )),
            (true, false) => pieces.push((
                Piece {
                    map: Map::Left {
                        z0: s.a,
                        h: s.b - s.a,
                        p: s.grade_left as i32,
                        anchor: s.anchor_left,
                    },
                    tag: s.tag,
                },
                0.0,
                1.0,
            )),
            (false, true) => pieces.push((
                Piece {
                    map: Map::Right {
                        z0: s.b,
                        h: s.b - s.a,
                        p: s.grade_right as i32,
                        anchor: s.anchor_right,
                    },
                    tag: s.tag,
                },
                0.0,
                1.0,
            )),
            (true, true) => {
                let m = 0.5 * (s.a + s.b);
                let h = m - s.a;
                pieces.push((
                    Piece {
                        map: Map::Left {
                            z0: s.a,
                            h,
                            p: s.grade_left as i32,
                            anchor: s.anchor_left,
                        },
                        tag: s.tag,
                    },
                    0.0,
                    1.0,
                ));
                pieces.push((
                    Piece {
                        map: Map::Right {
                            z0: s.b,
                            h,
                            p: s.grade_right as i32,
                            anchor: s.anchor_right,
                        },
                        tag: s.tag,
                    },
                    0.0,
                    1.0,
                ));
            }
        }
    }
    pieces
}

/// Integrates the `dim`-component integrand `f` over the union of
/// `segments`, bisecting the worst panel until every component meets its
/// tolerance or `max_panels` is reached.
pub fn integrate<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    segments: &[Segment],
    dim: usize,
    tols: &[ComponentTol],
    max_panels: usize,
) -> VecIntegral {
    integrate_nodes(|n: Node, out: &mut [f64]| f(n.z, out), segments, dim, tols, max_panels)
}

/// [`integrate`] with the full [`Node`] passed to the integrand.
pub fn integrate_nodes<F: FnMut(Node, &mut [f64])>(
    mut f: F,
    segments: &[Segment],
    dim: usize,
    tols: &[ComponentTol],
    max_panels: usize,
) -> VecIntegral {
    assert_eq!(tols.len(), dim);
    let n_tags = segments.iter().map(|s| s.tag + 1).max().unwrap_or(1);
    let pieces = build_pieces(segments);
    let mut ws = Workspace::new(dim);

    let mut panels: Vec<Panel> = Vec::with_capacity(pieces.len() * 4);
    let mut val: Vec<f64> = Vec::with_capacity(pieces.len() * 4 * dim);
    let mut err: Vec<f64> = Vec::with_capacity(pieces.len() * 4 * dim);
    let mut absv: Vec<f64> = Vec::with_capacity(pieces.len() * 4 * dim);
    let mut tv = vec![0.0; dim];
    let mut te = vec![0.0; dim];
    let mut ta = vec![0.0; dim];

    let piece_list: Vec<Piece> = pieces.iter().map(|p| p.0).collect();
    for (i, (piece, lo, hi)) in pieces.iter().enumerate() {
        ws.rule(&mut f, piece.map, *lo, *hi, &mut tv, &mut te, &mut ta);
        panels.push(Panel {
            piece: i,
            lo: *lo,
            hi: *hi,
            frozen: false,
        });
        val.extend_from_slice(&tv);
        err.extend_from_slice(&te);
        absv.extend_from_slice(&ta);
    }

    let mut tot_v = vec![0.0; dim];
    let mut tot_e = vec![0.0; dim];
    let mut tot_a = vec![0.0; dim];
    let sum_totals = |val: &[f64], err: &[f64], absv: &[f64], tv: &mut [f64], te: &mut [f64], ta: &mut [f64]| {
        tv.iter_mut().for_each(|x| *x = 0.0);
        te.iter_mut().for_each(|x| *x = 0.0);
        ta.iter_mut().for_each(|x| *x = 0.0);
        for p in 0..val.len() / dim.max(1) {
            for k in 0..dim {
                tv[k] += val[p * dim + k];
                te[k] += err[p * dim + k];
                ta[k] += absv[p * dim + k];
            }
        }
    };
    sum_totals(&val, &err, &absv, &mut tot_v, &mut tot_e, &mut tot_a);

    let target = |k: usize, tot_v: &[f64], tot_a: &[f64]| -> f64 {
        tols[k]
            .abs
            .max(tols[k].rel * tot_v[k].abs())
            .max(2.0 * roundoff_floor(tot_a[k]))
    };

    let mut converged = false;
    let (mut lv, mut le, mut la) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let (mut rv, mut re, mut ra) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    loop {
        if (0..dim).all(|k| tot_e[k] <= target(k, &tot_v, &tot_a)) {
            converged = true;
            break;
        }
        if panels.len() >= max_panels {
            break;
        }
        let targets: Vec<f64> = (0..dim)
            .map(|k| target(k, &tot_v, &tot_a).max(f64::MIN_POSITIVE))
            .collect();
        let mut worst = None;
        let mut worst_score = -1.0;
        for (j, p) in panels.iter().enumerate() {
            if p.frozen {
                continue;
            }
            let score = (0..dim)
                .map(|k| err[j * dim + k] / targets[k])
                .fold(0.0, f64::max);
            if score > worst_score {
                worst_score = score;
                worst = Some(j);
            }
        }
        let Some(j) = worst else { break };
        let (lo, hi, piece) = (panels[j].lo, panels[j].hi, panels[j].piece);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) || (hi - lo) <= 1e-14 * (lo.abs() + hi.abs()) {
            panels[j].frozen = true;
            continue;
        }
        let map = piece_list[piece].map;
        ws.rule(&mut f, map, lo, mid, &mut lv, &mut le, &mut la);
        ws.rule(&mut f, map, mid, hi, &mut rv, &mut re, &mut ra);
        for k in 0..dim {
            tot_v[k] += lv[k] + rv[k] - val[j * dim + k];
            tot_e[k] += le[k] + re[k] - err[j * dim + k];
            tot_a[k] += la[k] + ra[k] - absv[j * dim + k];
            val[j * dim + k] = lv[k];
            err[j * dim + k] = le[k];
            absv[j * dim + k] = la[k];
        }
        panels[j].hi = mid;
        panels.push(Panel {
            piece,
            lo: mid,
            hi,
            frozen: false,
        });
        val.extend_from_slice(&rv);
        err.extend_from_slice(&re);
        absv.extend_from_slice(&ra);
    }

    sum_totals(&val, &err, &absv, &mut tot_v, &mut tot_e, &mut tot_a);
    let mut tag_values = vec![vec![0.0; dim]; n_tags];
    let mut tag_abs = vec![vec![0.0; dim]; n_tags];
    for (j, p) in panels.iter().enumerate() {
        let tag = piece_list[p.piece].tag;
        for k in 0..dim {
            tag_values[tag][k] += val[j * dim + k];
            tag_abs[tag][k] += absv[j * dim + k];
        }
    }
    VecIntegral {
        values: tot_v,
        errors: tot_e,
        abs_values: tot_a,
        tag_values,
        tag_abs,
        panels: panels.len(),
        converged,
    }
}

/// Scalar convenience wrapper over [`integrate`].
pub fn integrate_scalar<F: Fn(f64) -> f64>(
    f: F,
    segments: &[Segment],
    tol: ComponentTol,
    max_panels: usize,
) -> (f64, f64, bool) {
    let r = integrate(
        |z, out: &mut [f64]| out[0] = f(z),
        segments,
        1,
        &[tol],
        max_panels,
    );
    (r.values[0], r.errors[0], r.converged)
}

/// Splits `[a, b]` at the given breakpoints, carrying their grades onto
/// the adjacent segment ends.
pub fn split_segments(a: f64, b: f64, breaks: &[(f64, u32)], tag: usize) -> Vec<Segment> {
    let anchored: Vec<(f64, u32, Option<f64>)> = breaks.iter().map(|&(p, g)| (p, g, None)).collect();
    split_segments_anchored(a, b, &anchored, tag)
}

/// [`split_segments`] with an optional anchor per breakpoint. At
/// coincident breakpoints the highest grade wins, with its anchor.
pub fn split_segments_anchored(a: f64, b: f64, breaks: &[(f64, u32, Option<f64>)], tag: usize) -> Vec<Segment> {
    type Cut = (f64, u32, Option<f64>);
    let merge = |into: &mut Cut, g: u32, anchor: Option<f64>| {
        if g > into.1 {
            into.1 = g;
            into.2 = anchor;
        }
    };
    let mut pts: Vec<Cut> = breaks
        .iter()
        .copied()
        .filter(|(p, _, _)| *p >= a && *p <= b && p.is_finite())
        .collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut end_a: Cut = (a, 1, None);
    let mut end_b: Cut = (b, 1, None);
    let mut interior: Vec<Cut> = Vec::new();
    for (p, g, anchor) in pts {
        if p == a {
            merge(&mut end_a, g, anchor);
        } else if p == b {
            merge(&mut end_b, g, anchor);
        } else if let Some(last) = interior.last_mut().filter(|l| l.0 == p) {
            merge(last, g, anchor);
        } else {
            interior.push((p, g, anchor));
        }
    }
    let mut segs = Vec::with_capacity(interior.len() + 1);
    let mut left = end_a;
    for right in interior.into_iter().chain(std::iter::once(end_b)) {
        segs.push(Segment {
            a: left.0,
            b: right.0,
            grade_left: left.1,
            grade_right: right.1,
            anchor_left: left.2,
            anchor_right: right.2,
            tag,
        });
        left = right;
    }
    segs
}
