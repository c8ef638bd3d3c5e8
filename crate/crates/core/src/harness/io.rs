//! Trajectory files, histograms and plot-data emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::dynamics::{Drift, Ensemble, TimeGrid, Trajectory};
use crate::error::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn header(dim: usize, noise: bool) -> String {
    let mut h = String::from("m,l,t");
    for k in 1..=dim {
        h.push_str(&format!(",x{k}"));
    }
    if noise {
        for k in 1..=dim {
            h.push_str(&format!(",dw{k}"));
        }
    }
    h
}

/// Writes one row per `(m, l)`; values carry 17 significant digits.
///
/// Noise columns appear only when every trajectory has a record; the last
/// row of each trajectory leaves them empty.
pub fn write_ensemble<W: Write>(ens: &Ensemble, mut w: W) -> std::io::Result<()> {
    let d = ens.dim();
    let noise = ens.has_noise();
    writeln!(w, "{}", header(d, noise))?;
    let times = ens.grid().times();
    for (m, tr) in ens.trajectories().iter().enumerate() {
        for (l, t) in times.iter().enumerate() {
            write!(w, "{m},{l},{t:.16e}")?;
            for v in tr.state(l, d) {
                write!(w, ",{v:.16e}")?;
            }
            if noise {
                match tr.increment(l, d) {
                    Some(dw) => {
                        for v in dw {
                            write!(w, ",{v:.16e}")?;
                        }
                    }
                    None => {
                        for _ in 0..d {
                            write!(w, ",")?;
                        }
                    }
                }
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn save_ensemble(ens: &Ensemble, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_ensemble(ens, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a trajectory file. `dim`, when given, must match the header.
pub fn load_ensemble(path: impl AsRef<Path>, dim: Option<usize>) -> Result<Ensemble> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ensemble(std::io::BufReader::new(file), dim)
}

fn parse_header(fields: &csv::StringRecord) -> Result<(usize, bool)> {
    let names: Vec<&str> = fields.iter().map(str::trim).collect();
    if names.len() < 4 || names[..3] != ["m", "l", "t"] {
        return Err(Error::format(Some(1), "header must start with m,l,t,x1"));
    }
    let rest = &names[3..];
    let d = rest.iter().take_while(|n| n.starts_with('x')).count();
    let noise_cols = rest.len() - d;
    let expected = header(d, noise_cols > 0);
    if d == 0 || (noise_cols != 0 && noise_cols != d) || names.join(",") != expected {
        return Err(Error::format(
            Some(1),
            format!(
                "header `{}` is not of the form `{}`",
                names.join(","),
                header(d.max(1), true)
            ),
        ));
    }
    Ok((d, noise_cols > 0))
}

pub fn read_ensemble<R: std::io::Read>(reader: R, dim: Option<usize>) -> Result<Ensemble> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let head = match records.next() {
        Some(r) => r.map_err(|e| Error::format(Some(1), e.to_string()))?,
        None => return Err(Error::format(None, "file is empty")),
    };
    let (d, has_noise) = parse_header(&head)?;
    if let Some(expected) = dim {
        if expected != d {
            return Err(Error::format(
                Some(1),
                format!("header has {d} state columns, expected {expected}"),
            ));
        }
    }
    let width = 3 + d * if has_noise { 2 } else { 1 };

    let mut times: Vec<f64> = Vec::new();
    let mut trajectories: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut current: Option<(usize, Vec<f64>, Vec<f64>)> = None;
    let mut last_l = 0usize;

    for (row, rec) in records.enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::format(Some(line), e.to_string()))?;
        if rec.len() != width {
            return Err(Error::format(
                Some(line),
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let int = |i: usize, name: &str| {
            rec[i].trim().parse::<usize>().map_err(|_| {
                Error::format(
                    Some(line),
                    format!("field `{name}` is not an index: `{}`", &rec[i]),
                )
            })
        };
        let float = |i: usize| {
            let s = rec[i].trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::format(
                        Some(line),
                        format!("field {} is not a finite number: `{s}`", i + 1),
                    )
                })
        };
        let m = int(0, "m")?;
        let l = int(1, "l")?;
        let t = float(2)?;

        let new_trajectory = match &current {
            None => {
                if m != 0 {
                    return Err(Error::format(Some(line), "first trajectory must be m = 0"));
                }
                true
            }
            Some((cm, ..)) if *cm == m => false,
            Some((cm, ..)) if m == cm + 1 => true,
            Some(_) => {
                return Err(Error::format(
                    Some(line),
                    format!("trajectory index {m} out of order"),
                ))
            }
        };
        if new_trajectory {
            if let Some((cm, s, n)) = current.take() {
                if cm == 0 {
                    times.truncate(last_l + 1);
                } else if last_l + 1 != times.len() {
                    return Err(Error::format(
                        Some(line),
                        format!("trajectory {cm} is shorter than trajectory 0"),
                    ));
                }
                trajectories.push((s, n));
            }
            if l != 0 {
                return Err(Error::format(Some(line), "trajectory must start at l = 0"));
            }
            current = Some((m, Vec::new(), Vec::new()));
        } else if l != last_l + 1 {
            return Err(Error::format(
                Some(line),
                format!("step index {l} out of order"),
            ));
        }
        last_l = l;
        if m == 0 {
            times.push(t);
        } else if times.get(l) != Some(&t) {
            return Err(Error::format(
                Some(line),
                format!("time {t} disagrees with trajectory 0"),
            ));
        }

        let (_, states, noise) = current.as_mut().expect("set above");
        for k in 0..d {
            states.push(float(3 + k)?);
        }
        if has_noise {
            let blank = (0..d).all(|k| rec[3 + d + k].trim().is_empty());
            if !blank {
                for k in 0..d {
                    noise.push(float(3 + d + k)?);
                }
            }
        }
    }
    let (_, s, n) = current.ok_or_else(|| Error::format(None, "file has no data rows"))?;
    if trajectories.is_empty() {
        times.truncate(last_l + 1);
    } else if last_l + 1 != times.len() {
        return Err(Error::format(
            None,
            "last trajectory is shorter than trajectory 0",
        ));
    }
    trajectories.push((s, n));

    let len = times.len();
    let grid = TimeGrid::new(times).map_err(|e| Error::format(None, e.to_string()))?;
    let trajectories = trajectories
        .into_iter()
        .enumerate()
        .map(|(m, (s, n))| {
            let noise = if has_noise {
                if n.len() != (len - 1) * d {
                    return Err(Error::format(
                        None,
                        format!("trajectory {m} must have noise on every row but the last"),
                    ));
                }
                Some(n)
            } else {
                None
            };
            Ok(Trajectory::new(s, noise))
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(grid, d, trajectories, None)
}

/// Equal-width histogram of one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

fn histogram_on<'a>(
    values: impl Iterator<Item = &'a f64>,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Histogram {
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0u64; bins];
    for v in values {
        let b = ((v - lo) / (hi - lo) * bins as f64).floor();
        let b = if b < 0.0 {
            0
        } else {
            (b as usize).min(bins - 1)
        };
        counts[b] += 1;
    }
    Histogram { edges, counts }
}

fn coordinate_range<'a>(states: impl Iterator<Item = &'a [f64]>, k: usize) -> (f64, f64) {
    states.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x[k]), hi.max(x[k]))
    })
}

/// Per-dimension histograms of every state in the ensemble.
pub fn density_histogram(ens: &Ensemble, bins: usize) -> Result<Vec<Histogram>> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    Ok((0..ens.dim())
        .map(|k| {
            let (lo, hi) = coordinate_range(ens.pooled_states(), k);
            let values: Vec<f64> = ens.pooled_states().map(|x| x[k]).collect();
            histogram_on(values.iter(), lo, hi, bins)
        })
        .collect())
}

/// Histograms of both ensembles on shared edges: `dim,lo,hi,observed,replayed`.
pub fn write_histogram_pair(
    ens: &Ensemble,
    replay: &Ensemble,
    bins: usize,
    path: &Path,
) -> Result<()> {
    let mut w = create(path)?;
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "dim,lo,hi,observed,replayed")?;
        for k in 0..ens.dim() {
            let (a0, a1) = coordinate_range(ens.pooled_states(), k);
            let (b0, b1) = coordinate_range(replay.pooled_states(), k);
            let (lo, hi) = (a0.min(b0), a1.max(b1));
            let a: Vec<f64> = ens.pooled_states().map(|x| x[k]).collect();
            let b: Vec<f64> = replay.pooled_states().map(|x| x[k]).collect();
            let ha = histogram_on(a.iter(), lo, hi, bins);
            let hb = histogram_on(b.iter(), lo, hi, bins);
            for i in 0..bins {
                writeln!(
                    w,
                    "{},{:.16e},{:.16e},{},{}",
                    k + 1,
                    ha.edges[i],
                    ha.edges[i + 1],
                    ha.counts[i],
                    hb.counts[i]
                )?;
            }
        }
        w.flush()
    };
    run(&mut w).map_err(|e| Error::io(path, e))
}

/// First `count` trajectories side by side: `m,l,t,x1..xd,xhat1..xhatd`.
pub fn write_overlay(ens: &Ensemble, replay: &Ensemble, count: usize, path: &Path) -> Result<()> {
    let d = ens.dim();
    let mut w = create(path)?;
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        let mut h = String::from("m,l,t");
        (1..=d).for_each(|k| h.push_str(&format!(",x{k}")));
        (1..=d).for_each(|k| h.push_str(&format!(",xhat{k}")));
        writeln!(w, "{h}")?;
        for m in 0..count.min(ens.len()) {
            let (a, b) = (ens.trajectory(m), replay.trajectory(m));
            for (l, t) in ens.grid().times().iter().enumerate() {
                write!(w, "{m},{l},{t:.16e}")?;
                for v in a.state(l, d).iter().chain(b.state(l, d)) {
                    write!(w, ",{v:.16e}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()
    };
    run(&mut w).map_err(|e| Error::io(path, e))
}

/// True and fitted drift on `points` equally spaced states: `x,f,fhat` (1D only).
pub fn write_drift_curve(
    f_true: &dyn Drift,
    f_hat: &dyn Drift,
    lo: f64,
    hi: f64,
    points: usize,
    path: &Path,
) -> Result<()> {
    if f_true.dim() != 1 || f_hat.dim() != 1 {
        return Err(Error::invalid("drift curves are one-dimensional"));
    }
    let mut w = create(path)?;
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "x,f,fhat")?;
        let n = points.max(2);
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            writeln!(
                w,
                "{x:.16e},{:.16e},{:.16e}",
                f_true.eval(&[x])[0],
                f_hat.eval(&[x])[0]
            )?;
        }
        w.flush()
    };
    run(&mut w).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_ensemble, CovarianceModel, FnDrift, InitialDistribution};

    fn sample(noise: bool) -> Ensemble {
        let f = FnDrift::new(2, |x: &[f64], o: &mut [f64]| {
            o[0] = -x[1];
            o[1] = x[0];
        });
        let cov = CovarianceModel::diagonal(vec![0.6, 0.8]).unwrap();
        let grid = TimeGrid::uniform(0.1, 0.01).unwrap();
        let init = InitialDistribution::uniform(2, 0.0, 10.0);
        simulate_ensemble(&f, &cov, &grid, 4, &init, 9, noise).unwrap()
    }

    fn round_trip(ens: &Ensemble) -> Ensemble {
        let mut buf = Vec::new();
        write_ensemble(ens, &mut buf).unwrap();
        read_ensemble(buf.as_slice(), Some(ens.dim())).unwrap()
    }

    fn same_data(a: &Ensemble, b: &Ensemble) -> bool {
        a.grid() == b.grid() && a.trajectories() == b.trajectories()
    }

    #[test]
    fn lossless_round_trip() {
        let ens = sample(true);
        let back = round_trip(&ens);
        assert!(same_data(&ens, &back));
        let plain = sample(false);
        let back = round_trip(&plain);
        assert!(same_data(&plain, &back) && !back.has_noise());
    }

    #[test]
    fn file_layout() {
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        let ens = Ensemble::new(
            grid,
            1,
            vec![Trajectory::new(vec![1.0, 2.0, 3.0], Some(vec![0.5, -0.25]))],
            None,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_ensemble(&ens, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "m,l,t,x1,dw1");
        assert_eq!(
            lines[1],
            "0,0,0.0000000000000000e0,1.0000000000000000e0,5.0000000000000000e-1"
        );
        assert!(lines[3].ends_with(','));
    }

    #[test]
    fn missing_noise_columns() {
        let text = "m,l,t,x1\n0,0,0,1\n0,1,0.5,2\n1,0,0,3\n1,1,0.5,4\n";
        let ens = read_ensemble(text.as_bytes(), None).unwrap();
        assert_eq!(ens.len(), 2);
        assert!(!ens.has_noise());
        assert_eq!(ens.trajectory(1).states(), &[3.0, 4.0]);
    }

    #[test]
    fn format_errors_carry_lines() {
        let cases = [
            ("m,l,t,x1,x2\n0,0,0,1,2\n", Some(1)),
            ("m,l,t,x1\n0,0,0,1\n0,1,0.5,abc\n", Some(3)),
            ("m,l,t,x1\n0,0,0,1\n0,2,0.5,1\n", Some(3)),
            ("m,l,t,x1\n0,0,0,1\n0,1,0.5\n", Some(3)),
            (
                "m,l,t,x1\n0,0,0,1\n0,1,0.5,1\n1,0,0,1\n1,1,0.7,1\n",
                Some(5),
            ),
            ("m,l,t,y1\n0,0,0,1\n", Some(1)),
        ];
        for (text, line) in cases {
            match read_ensemble(text.as_bytes(), Some(1)) {
                Err(Error::Format { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn histogram_counts() {
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        let same =
            Ensemble::from_states(grid.clone(), &[vec![vec![2.0]; 3], vec![vec![2.0]; 3]]).unwrap();
        let h = density_histogram(&same, 4).unwrap();
        assert_eq!(h[0].counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h[0].counts.iter().sum::<u64>(), 6);

        // states 0..9 as five two-point trajectories
        let pairs: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|i| vec![vec![2.0 * i as f64], vec![2.0 * i as f64 + 1.0]])
            .collect();
        let tiny = TimeGrid::uniform(1.0, 1.0).unwrap();
        let ens = Ensemble::from_states(tiny, &pairs).unwrap();
        let h = density_histogram(&ens, 5).unwrap();
        assert_eq!(h[0].counts, vec![2; 5]);
        assert!(density_histogram(&ens, 0).is_err());
    }

    #[test]
    fn histogram_conserves_mass() {
        let ens = sample(false);
        for h in density_histogram(&ens, 7).unwrap() {
            assert_eq!(
                h.counts.iter().sum::<u64>(),
                (ens.len() * ens.grid().len()) as u64
            );
            assert_eq!(h.edges.len(), 8);
        }
    }
}
