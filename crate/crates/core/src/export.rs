//! CSV writers. Floats carry 17 significant digits so files round-trip exactly.

use std::io::{self, Write};

use crate::control::{Hamiltonian, ValueGrid};
use crate::cooperation::CooperationReport;
use crate::pde::{FrontTrace, Simulation};
use crate::phase_plane::{PhasePoint, Trajectory};
use crate::profile::Profile;
use crate::wave::{FishermanDensity, SpeedMaps};

/// `{:.16e}` formatting of one value.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header plus numeric rows.
pub fn write_rows<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.into_iter().map(float))?;
    }
    w.flush()
}

/// `s,u,p`.
pub fn trajectory<W: Write>(out: W, traj: &Trajectory) -> io::Result<()> {
    write_rows(out, &["s", "u", "p"], traj.samples().map(|(s, pt)| vec![s, pt.u, pt.p]))
}

/// `s,u,p,energy`, with `energy(u, p)` supplied by the caller.
pub fn trajectory_with_energy<W: Write>(
    out: W,
    traj: &Trajectory,
    energy: impl Fn(PhasePoint) -> f64,
) -> io::Result<()> {
    write_rows(
        out,
        &["s", "u", "p", "energy"],
        traj.samples().map(|(s, pt)| vec![s, pt.u, pt.p, energy(pt)]),
    )
}

/// `u,p` points of a curve in the phase plane.
pub fn phase_curve<W: Write>(out: W, points: &[PhasePoint]) -> io::Result<()> {
    write_rows(out, &["u", "p"], points.iter().map(|pt| vec![pt.u, pt.p]))
}

/// `s,theta,theta_prime,m` on `n + 1` uniform points of `[lo, hi]`.
pub fn wave<W: Write>(
    out: W,
    profile: &dyn Profile,
    density: Option<&FishermanDensity>,
    lo: f64,
    hi: f64,
    n: usize,
) -> io::Result<()> {
    let n = n.max(1);
    write_rows(
        out,
        &["s", "theta", "theta_prime", "m"],
        (0..=n).map(|i| {
            let s = lo + (hi - lo) * i as f64 / n as f64;
            vec![
                s,
                profile.theta(s),
                profile.theta_prime(s),
                density.map_or(0.0, |d| d.eval(s)),
            ]
        }),
    )
}

/// `s,m` on the density's own grid.
pub fn density<W: Write>(out: W, density: &FishermanDensity) -> io::Result<()> {
    write_rows(out, &["s", "m"], density.grid().map(|(s, m)| vec![s, m]))
}

/// `s,V,dV,feedback` with `feedback = H'(V')`.
pub fn value_grid<W: Write>(out: W, grid: &ValueGrid, hamiltonian: &Hamiltonian) -> io::Result<()> {
    let dv = grid.derivative();
    write_rows(
        out,
        &["s", "V", "dV", "feedback"],
        (0..grid.s.len()).map(|i| vec![grid.s[i], grid.v[i], dv[i], hamiltonian.dh(dv[i])]),
    )
}

/// `t,x,theta,m` for every recorded snapshot, every `stride`-th node.
pub fn snapshots<W: Write>(out: W, sim: &Simulation, stride: usize) -> io::Result<()> {
    let stride = stride.max(1);
    let x = sim.grid.nodes();
    write_rows(
        out,
        &["t", "x", "theta", "m"],
        sim.snapshots.iter().flat_map(|snap| {
            (0..x.len())
                .step_by(stride)
                .map(|i| vec![snap.t, x[i], snap.theta[i], snap.harvest[i]])
                .collect::<Vec<_>>()
        }),
    )
}

/// `t,front_x`.
pub fn front<W: Write>(out: W, trace: &FrontTrace) -> io::Result<()> {
    write_rows(
        out,
        &["t", "front_x"],
        trace.times.iter().zip(&trace.positions).map(|(&t, &x)| vec![t, x]),
    )
}

/// `lambda,c0,c1,...`; saturated entries are written as `inf`.
pub fn speed_maps<W: Write>(out: W, maps: &SpeedMaps) -> io::Result<()> {
    let header: Vec<String> = std::iter::once("lambda".to_string())
        .chain((0..maps.curves.len()).map(|k| format!("c{k}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        out,
        &header,
        maps.lambdas.iter().enumerate().map(|(i, &l)| {
            std::iter::once(l)
                .chain(maps.curves.iter().map(|curve| curve[i].speed))
                .collect()
        }),
    )
}

/// `t,x,theta,m` of the coordinated run, every `stride`-th node.
pub fn cooperation_space_time<W: Write>(out: W, report: &CooperationReport, stride: usize) -> io::Result<()> {
    let stride = stride.max(1);
    let x = report.grid.nodes();
    write_rows(
        out,
        &["t", "x", "theta", "m"],
        report.frames.iter().flat_map(|fr| {
            (0..x.len())
                .step_by(stride)
                .map(|i| vec![fr.t, x[i], fr.theta[i], fr.harvest[i]])
                .collect::<Vec<_>>()
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::AffineProfile;

    fn parse(bytes: &[u8]) -> (Vec<String>, Vec<Vec<f64>>) {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().unwrap().iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
            .collect();
        (header, rows)
    }

    #[test]
    fn floats_round_trip() {
        let values = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::f64::consts::PI];
        let mut buf = Vec::new();
        write_rows(&mut buf, &["a"], values.iter().map(|&v| vec![v])).unwrap();
        let (header, rows) = parse(&buf);
        assert_eq!(header, ["a"]);
        for (row, v) in rows.iter().zip(values) {
            assert_eq!(row[0].to_bits(), v.to_bits());
        }
    }

    #[test]
    fn wave_columns() {
        let prof = AffineProfile { theta0: 0.2, slope: 0.5 };
        let mut buf = Vec::new();
        wave(&mut buf, &prof, None, 0.0, 1.0, 4).unwrap();
        let (header, rows) = parse(&buf);
        assert_eq!(header, ["s", "theta", "theta_prime", "m"]);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4], vec![1.0, 0.7, 0.5, 0.0]);
    }
}
