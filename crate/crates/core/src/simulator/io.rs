//! Dataset container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "DMRA"
//!      4     2  version (u16)
//!      6     2  flags (u16): bit 0 elements, bit 1 signal, bit 2 distribution
//!      8     4  L (u32)
//!     12     8  n (u64)
//!     20     8  sigma (f64)
//!     28     8  seed (u64)
//!     36  8nL   observations, row-major f64
//!          4n   [elements] canonical element index per row (u32)
//!          8L   [signal] f64
//!         16L   [distribution] p then q, f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::group::{DihedralElement, Signal};
use crate::moments::GroupDistribution;

use super::ObservationSet;

pub const MAGIC: [u8; 4] = *b"DMRA";
pub const FORMAT_VERSION: u16 = 1;

const HAS_ELEMENTS: u16 = 1;
const HAS_SIGNAL: u16 = 1 << 1;
const HAS_DISTRIBUTION: u16 = 1 << 2;

pub fn save(obs: &ObservationSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(obs, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ObservationSet> {
    let mut r = BufReader::new(File::open(path)?);
    read_from(&mut r)
}

pub(crate) fn write_to<W: Write>(obs: &ObservationSet, w: &mut W) -> Result<()> {
    let mut flags = 0u16;
    if obs.true_elements().is_some() {
        flags |= HAS_ELEMENTS;
    }
    if obs.true_signal().is_some() {
        flags |= HAS_SIGNAL;
    }
    if obs.true_distribution().is_some() {
        flags |= HAS_DISTRIBUTION;
    }
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(obs.signal_len() as u32).to_le_bytes())?;
    w.write_all(&(obs.len() as u64).to_le_bytes())?;
    w.write_all(&obs.sigma().to_le_bytes())?;
    w.write_all(&obs.seed().to_le_bytes())?;
    for v in obs.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    if let Some(elems) = obs.true_elements() {
        for g in elems {
            w.write_all(&(g.index() as u32).to_le_bytes())?;
        }
    }
    if let Some(x) = obs.true_signal() {
        for v in x.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    if let Some(d) = obs.true_distribution() {
        for v in d.to_flat() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Truncated,
        _ => Error::Io(e),
    })
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut b = [0u8; 8];
    for _ in 0..count {
        read_exact(r, &mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub(crate) fn read_from<R: Read>(r: &mut R) -> Result<ObservationSet> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u16(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let flags = read_u16(r)?;
    if flags & !(HAS_ELEMENTS | HAS_SIGNAL | HAS_DISTRIBUTION) != 0 {
        return Err(Error::Format(format!("unknown flags {flags:#06x}")));
    }
    let l = read_u32(r)? as usize;
    let n = read_u64(r)? as usize;
    let sigma = f64::from_le_bytes(read_u64(r)?.to_le_bytes());
    let seed = read_u64(r)?;
    let count = n
        .checked_mul(l)
        .ok_or_else(|| Error::Format("n·L overflows".into()))?;
    let data = read_f64s(r, count)?;
    let elements = if flags & HAS_ELEMENTS != 0 {
        let mut elems = Vec::with_capacity(n);
        for _ in 0..n {
            let idx = read_u32(r)? as usize;
            if idx >= 2 * l {
                return Err(Error::Format(format!("element index {idx} out of range")));
            }
            elems.push(DihedralElement::from_index(l, idx));
        }
        Some(elems)
    } else {
        None
    };
    let signal = if flags & HAS_SIGNAL != 0 {
        Some(Signal::new(read_f64s(r, l)?).map_err(|e| Error::Format(e.to_string()))?)
    } else {
        None
    };
    let distribution = if flags & HAS_DISTRIBUTION != 0 {
        let flat = read_f64s(r, 2 * l)?;
        Some(GroupDistribution::from_flat(l, &flat).map_err(|e| Error::Format(e.to_string()))?)
    } else {
        None
    };
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after dataset".into()));
    }
    ObservationSet::new(data, l, sigma, seed)
        .and_then(|o| o.with_ground_truth(elements, signal, distribution))
        .map_err(|e| Error::Format(e.to_string()))
}

/// Writes `index,y_0,...,y_{L-1}` rows with 17 significant digits.
pub fn write_csv<W: Write>(obs: &ObservationSet, w: &mut W) -> Result<()> {
    let header: Vec<String> = std::iter::once("index".to_string())
        .chain((0..obs.signal_len()).map(|k| format!("y_{k}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, row) in obs.rows().enumerate() {
        write!(w, "{i}")?;
        for v in row {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn export_csv(obs: &ObservationSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(obs, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate, sample_distribution, sample_signal};
    use proptest::prelude::*;

    fn sample(l: usize, n: usize, seed: u64) -> ObservationSet {
        let x = sample_signal(l, seed).unwrap();
        let rho = sample_distribution(l, seed).unwrap();
        generate(&x, &rho, n, 0.5, seed).unwrap()
    }

    #[test]
    fn round_trip_through_file() {
        let obs = sample(6, 300, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.dmra");
        save(&obs, &path).unwrap();
        assert_eq!(load(&path).unwrap(), obs);
    }

    #[test]
    fn truncated_file_is_a_structured_error() {
        let obs = sample(5, 20, 2);
        let mut bytes = Vec::new();
        write_to(&obs, &mut bytes).unwrap();
        for cut in [3, 10, 36, bytes.len() - 1] {
            let err = read_from(&mut &bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Truncated), "cut {cut}: {err}");
        }
    }

    #[test]
    fn version_and_magic_are_checked() {
        let obs = sample(5, 4, 3);
        let mut bytes = Vec::new();
        write_to(&obs, &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            read_from(&mut bad.as_slice()),
            Err(Error::Version { found: 9, .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(read_from(&mut extra.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn absent_ground_truth_stays_absent() {
        let obs = ObservationSet::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, 0.0, 9).unwrap();
        let mut bytes = Vec::new();
        write_to(&obs, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 36 + 6 * 8);
        let back = read_from(&mut bytes.as_slice()).unwrap();
        assert!(back.true_elements().is_none());
        assert!(back.true_signal().is_none());
        assert!(back.true_distribution().is_none());
        assert_eq!(back, obs);
    }

    #[test]
    fn csv_header_and_rows() {
        let obs = ObservationSet::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, 0.0, 0).unwrap();
        let mut out = Vec::new();
        write_csv(&obs, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,y_0,y_1,y_2");
        assert_eq!(lines.len(), 3);
        let parsed: Vec<f64> = lines[2].split(',').skip(1).map(|s| s.parse().unwrap()).collect();
        assert_eq!(parsed, vec![4.0, 5.0, 6.0]);
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip_bit_exact(
            values in prop::collection::vec(-1e300f64..1e300, 3..60),
            sigma in 0.0f64..10.0,
            seed in any::<u64>(),
        ) {
            let l = 3;
            let rows = values.len() / l;
            let data = values[..rows * l].to_vec();
            let obs = ObservationSet::new(data, l, sigma, seed).unwrap();
            let mut bytes = Vec::new();
            write_to(&obs, &mut bytes).unwrap();
            prop_assert_eq!(read_from(&mut bytes.as_slice()).unwrap(), obs);
        }
    }
}
