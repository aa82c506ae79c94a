//! CSV exports. Numbers are written with 17 significant digits so they
//! round-trip exactly.

use std::io::Write;

use crate::error::Result;
use crate::noise::SpectrumResult;
use crate::semiclassics::Trajectory;
use crate::stochastic::PhaseRecord;

/// Round-trip formatting of one value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_rows<W: Write>(
    w: &mut W,
    header: &str,
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    writeln!(w, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt_f64).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub const TRAJECTORY_HEADER: &str = "t,beta_r,beta_i,alpha_r,alpha_i";

pub fn write_trajectory<W: Write>(w: &mut W, traj: &Trajectory) -> Result<()> {
    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, y)| vec![*t, y[0], y[1], y[2], y[3]]);
    write_rows(w, TRAJECTORY_HEADER, rows)
}

pub const SPECTRUM_HEADER: &str = "omega,S33_re,S33_im,S33_abs";

/// `S_33` columns, plus `S<ij>_re,S<ij>_im,S<ij>_abs` for each extra pair
/// (1-based indices in the header).
pub fn write_spectrum<W: Write>(
    w: &mut W,
    spec: &SpectrumResult,
    extra: &[(usize, usize)],
) -> Result<()> {
    let mut header = SPECTRUM_HEADER.to_string();
    for (i, j) in extra {
        let tag = format!("S{}{}", i + 1, j + 1);
        header.push_str(&format!(",{tag}_re,{tag}_im,{tag}_abs"));
    }
    let rows = spec.omega.iter().zip(&spec.s).map(|(w, s)| {
        let mut row = vec![*w];
        for &(i, j) in std::iter::once(&(2, 2)).chain(extra) {
            let z = s[(i, j)];
            row.extend([z.re, z.im, z.norm()]);
        }
        row
    });
    write_rows(w, &header, rows)
}

pub const PHASE_HEADER: &str = "t,var_phi,n_effective";

pub fn write_phase_record<W: Write>(w: &mut W, rec: &PhaseRecord) -> Result<()> {
    writeln!(w, "{PHASE_HEADER}")?;
    for (t, v, n) in rec.variance_curve() {
        writeln!(w, "{},{},{n}", fmt_f64(t), fmt_f64(v))?;
    }
    Ok(())
}
