//! "TSR1" tensor fixture format.
//!
//! An ASCII header line `TSR1 <ndim> <ext0> ... <extN-1>\n` followed by
//! little-endian 64-bit IEEE-754 values in row-major order. This is the
//! interchange format the CLI uses for fixtures, schedules, and manifests.

use crate::tensor::Tensor;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &str = "TSR1";
const MAX_HEADER_BYTES: usize = 4096;

#[derive(Debug, Error)]
pub enum Tsr1Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("missing or oversized header line")]
    Header,
    #[error("bad magic: expected {MAGIC:?}, got {got:?}")]
    Magic { got: String },
    #[error("malformed header field {field:?}")]
    Field { field: String },
    #[error("header declares {declared} dims but lists {listed} extents")]
    DimCount { declared: usize, listed: usize },
    #[error("zero extent in header shape {shape:?}")]
    ZeroExtent { shape: Vec<usize> },
    #[error("payload truncated: expected {expected} values, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("trailing bytes after {expected} values")]
    TrailingData { expected: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: Box<Tsr1Error>,
    },
}

pub type Tsr1Result<T> = Result<T, Tsr1Error>;

/// Serialize a tensor to a writer.
pub fn write(tensor: &Tensor, mut out: impl Write) -> Tsr1Result<()> {
    let mut header = format!("{MAGIC} {}", tensor.rank());
    for e in tensor.shape() {
        header.push(' ');
        header.push_str(&e.to_string());
    }
    header.push('\n');
    out.write_all(header.as_bytes())?;
    for v in tensor.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Deserialize a tensor from a reader. Rejects non-finite payload values;
/// files are the trust boundary for the finiteness invariant.
pub fn read(mut input: impl Read) -> Tsr1Result<Tensor> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if header.len() > MAX_HEADER_BYTES {
            return Err(Tsr1Error::Header);
        }
        match input.read(&mut byte)? {
            0 => return Err(Tsr1Error::Header),
            _ => {
                if byte[0] == b'\n' {
                    break;
                }
                header.push(byte[0]);
            }
        }
    }
    let header = String::from_utf8(header).map_err(|_| Tsr1Error::Header)?;
    let mut fields = header.split_whitespace();
    let magic = fields.next().unwrap_or("");
    if magic != MAGIC {
        return Err(Tsr1Error::Magic {
            got: magic.to_string(),
        });
    }
    let ndim: usize = parse_field(fields.next())?;
    let shape: Vec<usize> = fields
        .map(|f| parse_field(Some(f)))
        .collect::<Tsr1Result<_>>()?;
    if shape.len() != ndim {
        return Err(Tsr1Error::DimCount {
            declared: ndim,
            listed: shape.len(),
        });
    }
    if ndim == 0 || shape.contains(&0) {
        return Err(Tsr1Error::ZeroExtent { shape });
    }
    let expected: usize = shape.iter().product();
    let mut payload = Vec::with_capacity(expected * 8);
    input.read_to_end(&mut payload)?;
    if payload.len() < expected * 8 {
        return Err(Tsr1Error::Truncated {
            expected,
            got: payload.len() / 8,
        });
    }
    if payload.len() > expected * 8 {
        return Err(Tsr1Error::TrailingData { expected });
    }
    let mut data = Vec::with_capacity(expected);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Tsr1Error::NonFinite { index: i });
        }
        data.push(v);
    }
    // Header validation above guarantees the constructor cannot fail.
    Ok(Tensor::new(shape, data).expect("validated shape"))
}

fn parse_field(field: Option<&str>) -> Tsr1Result<usize> {
    let field = field.ok_or(Tsr1Error::Header)?;
    field.parse().map_err(|_| Tsr1Error::Field {
        field: field.to_string(),
    })
}

/// Write a tensor to a file, wrapping errors with the path.
pub fn write_file(tensor: &Tensor, path: impl AsRef<Path>) -> Tsr1Result<()> {
    let path = path.as_ref();
    let attach = |source: Tsr1Error| Tsr1Error::File {
        path: path.display().to_string(),
        source: Box::new(source),
    };
    let file = std::fs::File::create(path).map_err(|e| attach(e.into()))?;
    write(tensor, io::BufWriter::new(file)).map_err(attach)
}

/// Read a tensor from a file, wrapping errors with the path.
pub fn read_file(path: impl AsRef<Path>) -> Tsr1Result<Tensor> {
    let path = path.as_ref();
    let attach = |source: Tsr1Error| Tsr1Error::File {
        path: path.display().to_string(),
        source: Box::new(source),
    };
    let file = std::fs::File::open(path).map_err(|e| attach(e.into()))?;
    read(io::BufReader::new(file)).map_err(attach)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(t: &Tensor) -> Tensor {
        let mut buf = Vec::new();
        write(t, &mut buf).unwrap();
        read(buf.as_slice()).unwrap()
    }

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
        let mut buf = Vec::new();
        write(&t, &mut buf).unwrap();
        assert!(buf.starts_with(b"TSR1 2 2 3\n"));
        assert_eq!(buf.len(), "TSR1 2 2 3\n".len() + 6 * 8);
    }

    #[test]
    fn rejects_bad_magic() {
        let err = read(&b"TSR2 1 1\n\x00\x00\x00\x00\x00\x00\x00\x00"[..]).unwrap_err();
        assert!(matches!(err, Tsr1Error::Magic { .. }));
    }

    #[test]
    fn rejects_truncated_payload() {
        let t = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write(&t, &mut buf).unwrap();
        buf.truncate(buf.len() - 8);
        assert!(matches!(
            read(buf.as_slice()).unwrap_err(),
            Tsr1Error::Truncated {
                expected: 4,
                got: 3
            }
        ));
    }

    #[test]
    fn rejects_trailing_bytes() {
        let t = Tensor::new(vec![1], vec![1.0]).unwrap();
        let mut buf = Vec::new();
        write(&t, &mut buf).unwrap();
        buf.extend_from_slice(&[0u8; 8]);
        assert!(matches!(
            read(buf.as_slice()).unwrap_err(),
            Tsr1Error::TrailingData { .. }
        ));
    }

    #[test]
    fn rejects_non_finite_values() {
        let mut buf = b"TSR1 1 2\n".to_vec();
        buf.extend_from_slice(&1.0f64.to_le_bytes());
        buf.extend_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            read(buf.as_slice()).unwrap_err(),
            Tsr1Error::NonFinite { index: 1 }
        ));
    }

    #[test]
    fn rejects_zero_extent() {
        let err = read(&b"TSR1 2 3 0\n"[..]).unwrap_err();
        assert!(matches!(err, Tsr1Error::ZeroExtent { .. }));
    }

    #[test]
    fn file_errors_carry_the_path() {
        let err = read_file("/nonexistent/fixture.tsr").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/fixture.tsr"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn roundtrip_is_bit_exact(
            dims in proptest::collection::vec(1usize..5, 1..4),
            seed in 0u64..1000,
        ) {
            use rand::SeedableRng;
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor::random_uniform(&dims, -1e6, 1e6, &mut r).unwrap();
            prop_assert_eq!(roundtrip(&t), t);
        }
    }
}
