//! CSV tables (17 significant digits, byte-stable) and static SVG plots.

use crate::linalg::{Matrix, Vector};
use crate::pipeline::Solution;
use crate::strain::{StrainRecord, StudyReport};
use crate::sweep::active_mask_hex;
use std::fmt::Write as _;
use std::io::Write;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |j| format!("{prefix}_{j}"))
}

/// `t, sigma_el_1..m`.
pub fn elastic_csv<W: Write>(out: W, times: &[f64], stress: &[Vector]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let m = stress.first().map_or(0, |s| s.len());
    let header: Vec<String> = std::iter::once("t".to_string()).chain(indexed("sigma_el", m)).collect();
    w.write_record(&header)?;
    for (t, s) in times.iter().zip(stress) {
        w.write_record(std::iter::once(num(*t)).chain(s.iter().map(|x| num(*x))))?;
    }
    w.flush()?;
    Ok(())
}

/// `t, y_*, sigma_*, [xi_*], step, active` with the hex face mask.
pub fn sweep_csv<W: Write>(out: W, solution: &Solution) -> csv::Result<()> {
    let traj = solution.sweep();
    let xi = solution.xi();
    let m = traj.y.first().map_or(0, |s| s.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(indexed("y", m));
    header.extend(indexed("sigma", m));
    if xi.is_some() {
        header.extend(indexed("xi", m));
    }
    header.push("step".into());
    header.push("active".into());
    w.write_record(&header)?;
    for k in 0..traj.len() {
        let mut row: Vec<String> = vec![num(traj.times[k])];
        row.extend(traj.y[k].iter().map(|x| num(*x)));
        row.extend(traj.sigma[k].iter().map(|x| num(*x)));
        if let Some(xi) = xi {
            row.extend(xi[k].iter().map(|x| num(*x)));
        }
        row.push(num(traj.step_norms[k]));
        row.push(active_mask_hex(&traj.active[k]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t, omega_*, eps_*, eps_p_*`.
pub fn strain_csv<W: Write>(out: W, rec: &StrainRecord) -> csv::Result<()> {
    let m = rec.eps.first().map_or(0, |s| s.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(indexed("omega", m));
    header.extend(indexed("eps", m));
    header.extend(indexed("eps_p", m));
    w.write_record(&header)?;
    for k in 0..rec.times.len() {
        let mut row = vec![num(rec.times[k])];
        row.extend(rec.omega[k].iter().map(|x| num(*x)));
        row.extend(rec.eps[k].iter().map(|x| num(*x)));
        row.extend(rec.eps_p[k].iter().map(|x| num(*x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn study_csv<W: Write>(out: W, report: &StudyReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["elements", "h", "inv_h", "max_omega", "concentration"])?;
    for r in &report.rows {
        w.write_record([
            r.elements.to_string(),
            num(r.h),
            num(1.0 / r.h),
            num(r.max_omega),
            num(r.concentration),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn study_table(report: &StudyReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>8} {:>12} {:>14} {:>14}", "N", "log(1/h)", "max|omega|", "log max|omega|");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:>8} {:>12.6} {:>14.6e} {:>14.6}",
            r.elements,
            (1.0 / r.h).ln(),
            r.max_omega,
            r.max_omega.max(f64::MIN_POSITIVE).ln()
        );
    }
    let _ = writeln!(s, "slope p = {:.4}", report.slope);
    let _ = writeln!(
        s,
        "{}",
        if report.regularity_lost {
            "regularity lost: strain rates grow without bound under refinement"
        } else {
            "strain rates stay bounded under refinement"
        }
    );
    s
}

/// Linear map from data to a `w × h` canvas with margins.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    w: f64,
    h: f64,
    pad: f64,
}

impl Frame {
    fn new(mut x0: f64, mut x1: f64, mut y0: f64, mut y1: f64) -> Self {
        if !(x1 > x0) {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if !(y1 > y0) {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let (dx, dy) = (0.05 * (x1 - x0), 0.05 * (y1 - y0));
        Self {
            x0: x0 - dx,
            x1: x1 + dx,
            y0: y0 - dy,
            y1: y1 + dy,
            w: 640.0,
            h: 420.0,
            pad: 48.0,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.pad + (x - self.x0) / (self.x1 - self.x0) * (self.w - 2.0 * self.pad)
    }

    fn py(&self, y: f64) -> f64 {
        self.h - self.pad - (y - self.y0) / (self.y1 - self.y0) * (self.h - 2.0 * self.pad)
    }

    fn polyline(&self, pts: &[(f64, f64)], color: &str, extra: &str) -> String {
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" {extra} points=\"{}\"/>\n",
            coords.join(" ")
        )
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{cx}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
            w = self.w,
            h = self.h,
            cx = self.w / 2.0
        );
        let (l, r, t, b) = (self.pad, self.w - self.pad, self.pad, self.h - self.pad);
        let _ = writeln!(
            s,
            "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
            r - l,
            b - t
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{xlabel} [{:.3}, {:.3}]</text>",
            self.w / 2.0,
            self.h - 14.0,
            self.x0,
            self.x1
        );
        let _ = writeln!(
            s,
            "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{ylabel} [{:.3}, {:.3}]</text>",
            self.h / 2.0,
            self.h / 2.0,
            self.y0,
            self.y1
        );
        s
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot of several series against `t`.
pub fn svg_time_series(title: &str, times: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let finite = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let f = Frame::new(times[0], *times.last().unwrap(), lo, hi);
    let mut s = f.open(title, "t", "value");
    for (i, (name, v)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = times.iter().copied().zip(v.iter().copied()).collect();
        s += &f.polyline(&pts, color, "");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"{color}\">{name}</text>",
            f.w - f.pad + 4.0,
            f.pad + 12.0 * (i as f64 + 1.0)
        );
    }
    s + "</svg>\n"
}

/// Two-element stress plane: yield box, the line `σ̃(t) + V` at the last
/// time, the elastic path and the stress trajectory.
pub fn svg_stress_plane(lower: &Vector, upper: &Vector, basis_v: &Matrix, elastic: &[Vector], sigma: &[Vector]) -> String {
    let pts = elastic.iter().chain(sigma);
    let mut xs: Vec<f64> = pts.clone().map(|p| p[0]).collect();
    let mut ys: Vec<f64> = pts.map(|p| p[1]).collect();
    for v in [lower, upper] {
        if v.iter().all(|x| x.is_finite()) {
            xs.push(v[0]);
            ys.push(v[1]);
        }
    }
    let fold = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (x0, x1) = fold(&xs);
    let (y0, y1) = fold(&ys);
    let f = Frame::new(x0, x1, y0, y1);
    let mut s = f.open("stress plane", "sigma_1", "sigma_2");
    if lower.iter().chain(upper.iter()).all(|x| x.is_finite()) {
        let corners = [(lower[0], lower[1]), (upper[0], lower[1]), (upper[0], upper[1]), (lower[0], upper[1]), (lower[0], lower[1])];
        s += &f.polyline(&corners, "#444", "stroke-dasharray=\"4 3\"");
    }
    if basis_v.ncols() == 1 {
        let d = basis_v.column(0);
        let base = elastic.last().unwrap();
        let span = 2.0 * ((f.x1 - f.x0).abs() + (f.y1 - f.y0).abs()) / d.norm().max(1e-300);
        let line = [(base[0] - span * d[0], base[1] - span * d[1]), (base[0] + span * d[0], base[1] + span * d[1])];
        let _ = writeln!(s, "<clipPath id=\"frame\"><rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/></clipPath>", f.pad, f.pad, f.w - 2.0 * f.pad, f.h - 2.0 * f.pad);
        s += &f.polyline(&line, "#2ca02c", "clip-path=\"url(#frame)\"");
    }
    let path: Vec<(f64, f64)> = elastic.iter().map(|p| (p[0], p[1])).collect();
    s += &f.polyline(&path, "#1f77b4", "");
    let traj: Vec<(f64, f64)> = sigma.iter().map(|p| (p[0], p[1])).collect();
    s += &f.polyline(&traj, "#d62728", "");
    s + "</svg>\n"
}

/// Moving-set snapshots in chart coordinates: intervals against time for
/// `dim V = 1`, polygons for `dim V = 2`.
pub fn svg_moving_sets(snapshots: &[(f64, Vec<Vector>)], path: &[(f64, Vector)]) -> String {
    let dim = path.first().map_or(1, |p| p.1.len());
    if dim == 1 {
        let lo: Vec<(f64, f64)> = snapshots
            .iter()
            .map(|(t, v)| (*t, v.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min)))
            .collect();
        let hi: Vec<(f64, f64)> = snapshots
            .iter()
            .map(|(t, v)| (*t, v.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max)))
            .collect();
        let ys = lo.iter().chain(&hi).map(|p| p.1).chain(path.iter().map(|p| p.1[0])).filter(|v| v.is_finite());
        let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let t0 = path.first().map_or(0.0, |p| p.0);
        let t1 = path.last().map_or(1.0, |p| p.0);
        let f = Frame::new(t0, t1, y0, y1);
        let mut s = f.open("moving set C(t) and state y(t)", "t", "chart coordinate");
        s += &f.polyline(&lo, "#444", "stroke-dasharray=\"4 3\"");
        s += &f.polyline(&hi, "#444", "stroke-dasharray=\"4 3\"");
        let traj: Vec<(f64, f64)> = path.iter().map(|(t, c)| (*t, c[0])).collect();
        s += &f.polyline(&traj, "#d62728", "");
        return s + "</svg>\n";
    }
    let all = snapshots.iter().flat_map(|(_, v)| v.iter()).chain(path.iter().map(|p| &p.1));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let f = Frame::new(x0, x1, y0, y1);
    let mut s = f.open("moving set snapshots", "c_1", "c_2");
    for (i, (_, verts)) in snapshots.iter().enumerate() {
        let ordered = hull_order(verts);
        let mut pts: Vec<(f64, f64)> = ordered.iter().map(|p| (p[0], p[1])).collect();
        if let Some(&first) = pts.first() {
            pts.push(first);
        }
        s += &f.polyline(&pts, PALETTE[i % PALETTE.len()], "stroke-opacity=\"0.7\"");
    }
    let traj: Vec<(f64, f64)> = path.iter().map(|(_, c)| (c[0], c[1])).collect();
    s += &f.polyline(&traj, "#000", "");
    s + "</svg>\n"
}

/// Vertices sorted by angle around their centroid.
fn hull_order(verts: &[Vector]) -> Vec<Vector> {
    if verts.is_empty() {
        return Vec::new();
    }
    let n = verts.len() as f64;
    let cx = verts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = verts.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut out = verts.to_vec();
    out.sort_by(|a, b| {
        let ta = (a[1] - cy).atan2(a[0] - cx);
        let tb = (b[1] - cy).atan2(b[0] - cx);
        ta.partial_cmp(&tb).unwrap()
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_seventeen_digits() {
        let mut buf = Vec::new();
        elastic_csv(&mut buf, &[0.1], &[Vector::from_vec(vec![1.0 / 3.0])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,sigma_el_1"));
        let row = lines.next().unwrap();
        let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
        assert_eq!(row, "1.0000000000000001e-1,3.3333333333333331e-1");
    }

    #[test]
    fn svg_is_well_formed() {
        let s = svg_time_series("x", &[0.0, 1.0], &[("a".into(), vec![0.0, 1.0])]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 1);
    }
}
