//! Minimal reader/writer for the npy array format, restricted to version 1.0
//! little-endian `f32` matrices in C order.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";
const VERSION: [u8; 2] = [1, 0];
const ALIGN: usize = 64;

/// Parsed header dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

impl Header {
    fn to_dict_string(&self) -> String {
        let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        let shape = if dims.len() == 1 {
            format!("({},)", dims[0])
        } else {
            format!("({})", dims.join(", "))
        };
        format!(
            "{{'descr': '{}', 'fortran_order': {}, 'shape': {}, }}",
            self.descr,
            if self.fortran_order { "True" } else { "False" },
            shape
        )
    }
}

pub fn write_f32_matrix<W: Write>(w: &mut W, m: &Array2<f32>) -> std::io::Result<()> {
    let header = Header {
        descr: "<f4".into(),
        fortran_order: false,
        shape: vec![m.nrows(), m.ncols()],
    };
    let mut dict = header.to_dict_string();
    // magic(6) + version(2) + len(2) + dict + '\n' padded to ALIGN
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    w.write_all(&MAGIC)?;
    w.write_all(&VERSION)?;
    w.write_all(&(dict.len() as u16).to_le_bytes())?;
    w.write_all(dict.as_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 4);
    for v in m.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

/// Reads and validates the header, leaving `r` positioned at the payload.
pub fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut preamble = [0u8; 10];
    r.read_exact(&mut preamble)
        .map_err(|_| Error::Format("file too short for npy preamble".into()))?;
    if preamble[..6] != MAGIC {
        return Err(Error::Format("bad magic: not an npy file".into()));
    }
    if preamble[6..8] != VERSION {
        return Err(Error::Format(format!(
            "unsupported npy version {}.{}",
            preamble[6], preamble[7]
        )));
    }
    let len = u16::from_le_bytes([preamble[8], preamble[9]]) as usize;
    let mut raw = vec![0u8; len];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Format("truncated npy header".into()))?;
    let text =
        std::str::from_utf8(&raw).map_err(|_| Error::Format("npy header is not ASCII".into()))?;
    parse_dict(text)
}

pub fn read_f32_matrix<R: Read>(r: &mut R) -> Result<Array2<f32>> {
    let header = read_header(r)?;
    if header.descr != "<f4" {
        return Err(Error::Format(format!(
            "unsupported dtype '{}' (expected '<f4')",
            header.descr
        )));
    }
    if header.fortran_order {
        return Err(Error::Format(
            "unsupported order: fortran_order is True".into(),
        ));
    }
    let [rows, cols] = header.shape[..] else {
        return Err(Error::Format(format!(
            "expected a 2-D array, header declares shape {:?}",
            header.shape
        )));
    };
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)
        .map_err(|e| Error::Format(format!("payload read failed: {e}")))?;
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "payload has {} bytes, shape ({rows}, {cols}) needs {}",
            payload.len(),
            count * 4
        )));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))
}

fn parse_dict(text: &str) -> Result<Header> {
    let mut p = DictParser {
        s: text.trim_end().as_bytes(),
        i: 0,
    };
    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    p.expect(b'{')?;
    loop {
        p.skip_ws();
        if p.peek() == Some(b'}') {
            break;
        }
        let key = p.string()?;
        p.skip_ws();
        p.expect(b':')?;
        p.skip_ws();
        match key.as_str() {
            "descr" => descr = Some(p.string()?),
            "fortran_order" => fortran = Some(p.boolean()?),
            "shape" => shape = Some(p.tuple()?),
            other => return Err(Error::Format(format!("unexpected header key '{other}'"))),
        }
        p.skip_ws();
        match p.peek() {
            Some(b',') => p.i += 1,
            Some(b'}') => {}
            _ => return Err(Error::Format("malformed npy header dictionary".into())),
        }
    }
    match (descr, fortran, shape) {
        (Some(descr), Some(fortran_order), Some(shape)) => Ok(Header {
            descr,
            fortran_order,
            shape,
        }),
        _ => Err(Error::Format(
            "npy header must declare descr, fortran_order and shape".into(),
        )),
    }
}

struct DictParser<'a> {
    s: &'a [u8],
    i: usize,
}

impl DictParser<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.i).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n')) {
            self.i += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.i += 1;
            Ok(())
        } else {
            Err(Error::Format(format!(
                "malformed npy header: expected '{}' at byte {}",
                c as char, self.i
            )))
        }
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => {
                return Err(Error::Format(
                    "malformed npy header: expected string".into(),
                ))
            }
        };
        self.i += 1;
        let start = self.i;
        while self.peek().is_some_and(|c| c != quote) {
            self.i += 1;
        }
        let out = String::from_utf8_lossy(&self.s[start..self.i]).into_owned();
        self.expect(quote)?;
        Ok(out)
    }

    fn boolean(&mut self) -> Result<bool> {
        let rest = &self.s[self.i..];
        if rest.starts_with(b"True") {
            self.i += 4;
            Ok(true)
        } else if rest.starts_with(b"False") {
            self.i += 5;
            Ok(false)
        } else {
            Err(Error::Format(
                "malformed npy header: expected True/False".into(),
            ))
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b')') => {
                    self.i += 1;
                    return Ok(dims);
                }
                Some(b',') => self.i += 1,
                Some(c) if c.is_ascii_digit() => {
                    let start = self.i;
                    while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        self.i += 1;
                    }
                    let txt = std::str::from_utf8(&self.s[start..self.i]).unwrap_or("");
                    dims.push(
                        txt.parse()
                            .map_err(|_| Error::Format(format!("bad dimension '{txt}'")))?,
                    );
                }
                _ => return Err(Error::Format("malformed shape tuple in npy header".into())),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn encode(m: &Array2<f32>) -> Vec<u8> {
        let mut out = Vec::new();
        write_f32_matrix(&mut out, m).unwrap();
        out
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&array![[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(&bytes[..6], b"\x93NUMPY");
        assert_eq!(&bytes[6..8], &[1, 0]);
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        let dict = std::str::from_utf8(&bytes[10..10 + hlen]).unwrap();
        assert!(dict.starts_with("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }"));
        assert!(dict.ends_with('\n'));
        assert_eq!(bytes.len(), 10 + hlen + 24);
        assert_eq!(&bytes[10 + hlen..10 + hlen + 4], &1.0f32.to_le_bytes());
    }

    #[test]
    fn reads_numpy_style_header() {
        // what numpy.save emits for np.zeros((1, 2), '<f4')
        let dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2), }";
        let mut bytes = MAGIC.to_vec();
        bytes.extend([1, 0]);
        let mut padded = dict.to_string();
        while !(10 + padded.len() + 1).is_multiple_of(64) {
            padded.push(' ');
        }
        padded.push('\n');
        bytes.extend((padded.len() as u16).to_le_bytes());
        bytes.extend(padded.as_bytes());
        bytes.extend([0u8; 8]);
        let m = read_f32_matrix(&mut bytes.as_slice()).unwrap();
        assert_eq!(m.dim(), (1, 2));
    }

    #[test]
    fn rejects_big_endian() {
        let mut bytes = encode(&array![[1.0f32]]);
        let pos = bytes.windows(3).position(|w| w == b"<f4").unwrap();
        bytes[pos] = b'>';
        let err = read_f32_matrix(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("unsupported dtype"));
    }

    #[test]
    fn rejects_bad_magic_version_and_order() {
        let good = encode(&array![[1.0f32, 2.0]]);

        let mut bad = good.clone();
        bad[1] = b'X';
        assert!(read_f32_matrix(&mut bad.as_slice())
            .unwrap_err()
            .to_string()
            .contains("magic"));

        let mut bad = good.clone();
        bad[6] = 3;
        assert!(read_f32_matrix(&mut bad.as_slice())
            .unwrap_err()
            .to_string()
            .contains("version"));

        let mut bad = good.clone();
        let pos = bad.windows(5).position(|w| w == b"False").unwrap();
        bad.splice(pos..pos + 5, b"True ".iter().copied());
        assert!(read_f32_matrix(&mut bad.as_slice())
            .unwrap_err()
            .to_string()
            .contains("order"));
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut bytes = encode(&array![[1.0f32, 2.0]]);
        bytes.pop();
        assert!(matches!(
            read_f32_matrix(&mut bytes.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
