//! Little-endian binary formats.
//!
//! `DFCM` measurement bundle:
//!
//! ```text
//! "DFCM" | u16 version=1 | u64 seed | u32 N | u32 M | u8 include_dc | u32 pixel_id
//! | M x u32 omega | ceil(N/8) bytes modulation (bit j of byte j/8, LSB first; 1 = +1)
//! | f64 z_bar (NaN when absent) | M x f64 y_biased
//! ```
//!
//! `DFLS` spectrum:
//!
//! ```text
//! "DFLS" | u16 version=1 | u32 width | u32 height | width*height x f32, row-major
//! ```

use crate::error::{DecodeError, Error, Result};
use crate::grid::{GridShape, SpectrumGrid};
use crate::hadamard::HadamardOrder;
use crate::sensing::{MeasurementBundle, SensingPlan};

pub const BUNDLE_MAGIC: [u8; 4] = *b"DFCM";
pub const SPECTRUM_MAGIC: [u8; 4] = *b"DFLS";
pub const FORMAT_VERSION: u16 = 1;

const BUNDLE_HEADER: usize = 4 + 2 + 8 + 4 + 4 + 1 + 4;
const SPECTRUM_HEADER: usize = 4 + 2 + 4 + 4;

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let available = self.data.len() - self.pos;
        if n > available {
            return Err(DecodeError::Truncated {
                needed: n,
                available,
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const K: usize>(&mut self) -> Result<[u8; K], DecodeError> {
        Ok(self.take(K)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32, DecodeError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    /// Fails early when fewer than `n` bytes remain, before allocating.
    fn require(&self, n: usize) -> Result<(), DecodeError> {
        if n > self.remaining() {
            return Err(DecodeError::Truncated {
                needed: n,
                available: self.remaining(),
            });
        }
        Ok(())
    }

    fn finish(self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

fn header(r: &mut Reader<'_>, magic: [u8; 4]) -> Result<(), DecodeError> {
    let got = r.array::<4>()?;
    if got != magic {
        return Err(DecodeError::BadMagic(got));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    Ok(())
}

fn invalid(field: &'static str, reason: impl Into<String>) -> DecodeError {
    DecodeError::Invalid {
        field,
        reason: reason.into(),
    }
}

pub fn encode_bundle(plan: &SensingPlan, bundle: &MeasurementBundle) -> Result<Vec<u8>> {
    let (n, m) = (plan.n(), plan.m_count());
    if bundle.y_biased.len() != m {
        return Err(Error::SizeMismatch {
            expected: m,
            actual: bundle.y_biased.len(),
        });
    }
    let n32 = u32::try_from(n).map_err(|_| Error::invalid("N does not fit in u32"))?;
    let mut out = Vec::with_capacity(BUNDLE_HEADER + 12 * m + n.div_ceil(8) + 8);
    out.extend_from_slice(&BUNDLE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&plan.seed().to_le_bytes());
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.push(u8::from(plan.include_dc()));
    out.extend_from_slice(&bundle.pixel_id.to_le_bytes());
    for &i in plan.omega() {
        out.extend_from_slice(&(i as u32).to_le_bytes());
    }
    let mut bitmap = vec![0u8; n.div_ceil(8)];
    for (j, &s) in plan.modulation().iter().enumerate() {
        if s > 0 {
            bitmap[j / 8] |= 1 << (j % 8);
        }
    }
    out.extend_from_slice(&bitmap);
    out.extend_from_slice(&bundle.z_bar.unwrap_or(f64::NAN).to_le_bytes());
    for y in &bundle.y_biased {
        out.extend_from_slice(&y.to_le_bytes());
    }
    Ok(out)
}

/// Decodes a bundle file into its plan and measurements.
pub fn decode_bundle(data: &[u8]) -> Result<(SensingPlan, MeasurementBundle), DecodeError> {
    let mut r = Reader::new(data);
    header(&mut r, BUNDLE_MAGIC)?;
    let seed = r.u64()?;
    let n = r.u32()? as usize;
    let m = r.u32()? as usize;
    let include_dc = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(invalid("include_dc", format!("expected 0 or 1, got {v}"))),
    };
    let pixel_id = r.u32()?;
    let order = HadamardOrder::from_len(n).map_err(|e| invalid("N", e.to_string()))?;
    if m == 0 || m > n {
        return Err(invalid("M", format!("{m} not in 1..={n}")));
    }
    let bitmap_len = n.div_ceil(8);
    r.require(4 * m + bitmap_len + 8 + 8 * m)?;

    let omega = (0..m)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let bitmap = r.take(bitmap_len)?;
    let modulation: Vec<i8> = (0..n)
        .map(|j| if bitmap[j / 8] >> (j % 8) & 1 == 1 { 1 } else { -1 })
        .collect();
    if !n.is_multiple_of(8) && bitmap[n / 8] >> (n % 8) != 0 {
        return Err(invalid("modulation", "padding bits must be zero"));
    }
    let z = r.f64()?;
    let y_biased = (0..m).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;

    let plan = SensingPlan::from_parts(order, omega, modulation, seed, include_dc)
        .map_err(|e| invalid("plan", e.to_string()))?;
    let z_bar = if z.is_nan() { None } else { Some(z) };
    Ok((plan, MeasurementBundle::new(pixel_id, y_biased, z_bar)))
}

pub fn encode_spectrum(s: &SpectrumGrid) -> Result<Vec<u8>> {
    let w = u32::try_from(s.width()).map_err(|_| Error::invalid("width does not fit in u32"))?;
    let h = u32::try_from(s.height()).map_err(|_| Error::invalid("height does not fit in u32"))?;
    let mut out = Vec::with_capacity(SPECTRUM_HEADER + 4 * s.values().len());
    out.extend_from_slice(&SPECTRUM_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for &v in s.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes a spectrum; the pitch is not stored in the file.
pub fn decode_spectrum(data: &[u8], pixel_pitch: f64) -> Result<SpectrumGrid, DecodeError> {
    let mut r = Reader::new(data);
    header(&mut r, SPECTRUM_MAGIC)?;
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    let count = w
        .checked_mul(h)
        .filter(|c| c.checked_mul(4).is_some())
        .ok_or_else(|| invalid("shape", format!("{w}x{h} overflows")))?;
    r.require(4 * count)?;
    let values = (0..count)
        .map(|_| r.f32().map(f64::from))
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    SpectrumGrid::from_values(GridShape::new(w, h, pixel_pitch), values)
        .map_err(|e| invalid("values", e.to_string()))
}
