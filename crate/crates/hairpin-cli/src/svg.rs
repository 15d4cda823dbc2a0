//! Minimal SVG emitters for batch plotting: a histogram and a scatter with a
//! fitted line. Just primitives; styling is left to downstream tools.

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 50.0;

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    )
}

fn axes(x_label: &str, y_label: &str) -> String {
    format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{ly}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"14\" y=\"{cy}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {cy})\">{y_label}</text>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        cx = W / 2.0,
        ly = H - 12.0,
        cy = H / 2.0,
    )
}

fn span(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        (lo - 0.5, lo + 0.5)
    } else {
        (lo, hi)
    }
}

/// Histogram with `bins` equal-width bars.
pub fn histogram(values: &[f64], bins: usize, x_label: &str) -> String {
    let (lo, hi) = span(values);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let peak = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let mut out = header();
    out.push_str(&axes(x_label, "count"));
    for (k, &n) in counts.iter().enumerate() {
        let bar_h = plot_h * n as f64 / peak;
        let x = MARGIN + plot_w * k as f64 / bins as f64;
        let y = H - MARGIN - bar_h;
        out.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{bar_h:.2}\" fill=\"steelblue\" stroke=\"white\"/>\n",
            w = plot_w / bins as f64
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter of paired draws with an optional overlay line `y = a + b x`.
pub fn scatter(xs: &[f64], ys: &[f64], line: Option<(f64, f64)>, x_label: &str, y_label: &str) -> String {
    let (xlo, xhi) = span(xs);
    let (ylo, yhi) = span(ys);
    let px = |x: f64| MARGIN + (W - 2.0 * MARGIN) * (x - xlo) / (xhi - xlo);
    let py = |y: f64| H - MARGIN - (H - 2.0 * MARGIN) * (y - ylo) / (yhi - ylo);
    let mut out = header();
    out.push_str(&axes(x_label, y_label));
    for (&x, &y) in xs.iter().zip(ys) {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"steelblue\" fill-opacity=\"0.45\"/>\n",
            px(x),
            py(y)
        ));
    }
    if let Some((intercept, slope)) = line {
        let y1 = intercept + slope * xlo;
        let y2 = intercept + slope * xhi;
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"crimson\" stroke-width=\"1.5\"/>\n",
            px(xlo),
            py(y1.clamp(ylo, yhi)),
            px(xhi),
            py(y2.clamp(ylo, yhi))
        ));
    }
    out.push_str("</svg>\n");
    out
}
