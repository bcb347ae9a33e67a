//! Binary dumps of a grid state and CSV marginals for plotting.
//!
//! Layout, all little-endian: `n` as `u64`, `L` as `f64`, `t` as `f64`, then
//! `n²` pairs `(re, im)` of `f64` in row-major order (`x` index slowest).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::pde::{GridSpec, GridState, PdeError};

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("snapshot header declares n = {0}, which is not a usable grid size")]
    BadSize(u64),
    #[error("snapshot has {0} trailing bytes")]
    Trailing(usize),
    #[error(transparent)]
    Grid(#[from] PdeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub half_width: f64,
    pub t: f64,
    pub psi: Vec<C64>,
}

impl Snapshot {
    pub fn of(state: &GridState) -> Self {
        Snapshot {
            n: state.spec().n(),
            half_width: state.spec().half_width(),
            t: state.t(),
            psi: state.psi().to_vec(),
        }
    }

    /// The time step is not stored, so the caller supplies the one to resume with.
    pub fn into_state(self, dt: f64) -> Result<GridState, SnapshotError> {
        let spec = GridSpec::new(self.n, self.half_width, dt)?;
        Ok(GridState::from_parts(spec, self.psi, self.t)?)
    }

    pub fn write_to(&self, mut out: impl Write) -> io::Result<()> {
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&self.half_width.to_le_bytes())?;
        out.write_all(&self.t.to_le_bytes())?;
        for z in &self.psi {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
        out.flush()
    }

    pub fn read_from(mut input: impl Read) -> Result<Self, SnapshotError> {
        let mut word = [0u8; 8];
        let mut next = |input: &mut dyn Read| -> io::Result<[u8; 8]> {
            input.read_exact(&mut word)?;
            Ok(word)
        };
        let n_raw = u64::from_le_bytes(next(&mut input)?);
        let half_width = f64::from_le_bytes(next(&mut input)?);
        let t = f64::from_le_bytes(next(&mut input)?);
        let n = usize::try_from(n_raw)
            .ok()
            .filter(|n| n.is_power_of_two() && n.checked_mul(*n).is_some())
            .ok_or(SnapshotError::BadSize(n_raw))?;
        let mut psi = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            let re = f64::from_le_bytes(next(&mut input)?);
            let im = f64::from_le_bytes(next(&mut input)?);
            psi.push(C64::new(re, im));
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(SnapshotError::Trailing(rest.len()));
        }
        Ok(Snapshot { n, half_width, t, psi })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SnapshotError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Writes `x,px,py`: the density integrated over the other coordinate.
pub fn write_marginals(state: &GridState, mut out: impl Write) -> io::Result<()> {
    let spec = state.spec();
    let n = spec.n();
    let dx = spec.dx();
    let rho = state.density();
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let p = rho[i * n + j] * dx;
            px[i] += p;
            py[j] += p;
        }
    }
    writeln!(out, "# t={:?}", state.t())?;
    writeln!(out, "x,px,py")?;
    for i in 0..n {
        writeln!(out, "{:?},{:?},{:?}", spec.coord(i), px[i], py[i])?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::init_packet;

    #[test]
    fn round_trip_is_exact() {
        let spec = GridSpec::new(64, 9.0, 0.005).unwrap();
        let state = init_packet(spec, 0.8, 0.5).unwrap();
        let snap = Snapshot::of(&state);
        let mut buf = Vec::new();
        snap.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 16 * 64 * 64);
        assert_eq!(&buf[..8], &64u64.to_le_bytes());
        let back = Snapshot::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.into_state(0.005).unwrap(), state);
    }

    #[test]
    fn truncated_and_padded_files_fail() {
        let spec = GridSpec::new(64, 9.0, 0.005).unwrap();
        let mut buf = Vec::new();
        Snapshot::of(&init_packet(spec, 0.8, 0.0).unwrap()).write_to(&mut buf).unwrap();
        assert!(matches!(Snapshot::read_from(&buf[..buf.len() - 1]), Err(SnapshotError::Io(_))));
        buf.push(0);
        assert!(matches!(Snapshot::read_from(buf.as_slice()), Err(SnapshotError::Trailing(1))));
        let mut bad = 3u64.to_le_bytes().to_vec();
        bad.extend_from_slice(&[0; 16]);
        assert!(matches!(Snapshot::read_from(bad.as_slice()), Err(SnapshotError::BadSize(3))));
    }

    #[test]
    fn marginals_integrate_to_one() {
        let spec = GridSpec::new(64, 9.0, 0.005).unwrap();
        let state = init_packet(spec, 0.8, 0.0).unwrap();
        let mut buf = Vec::new();
        write_marginals(&state, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut total = 0.0;
        for line in text.lines().skip(2) {
            let cols: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            total += cols[1] * spec.dx();
        }
        assert!((total - 1.0).abs() < 1e-12);
    }
}
