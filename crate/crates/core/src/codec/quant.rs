use crate::error::{Error, Result};

/// ITU-T T.81 Annex K luminance table, row-major.
#[rustfmt::skip]
pub const BASE_LUMINANCE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// ITU-T T.81 Annex K chrominance table, row-major.
#[rustfmt::skip]
pub const BASE_CHROMINANCE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Quantizer divisors for one quality factor, every entry in `1..=255`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantTable {
    pub luminance: [u16; 64],
    pub chrominance: [u16; 64],
}

fn scale_table(base: &[u16; 64], scale: u32) -> [u16; 64] {
    let mut out = [1u16; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((b as u32 * scale + 50) / 100).clamp(1, 255) as u16;
    }
    out
}

impl QuantTable {
    /// Independent JPEG Group quality scaling: `5000 / qf` below 50,
    /// `200 - 2 qf` from 50 up.
    pub fn for_quality(qf: u32) -> Result<Self> {
        if !(1..=100).contains(&qf) {
            return Err(Error::Invalid(format!("quality factor {qf} outside 1..=100")));
        }
        let scale = if qf < 50 { 5000 / qf } else { 200 - 2 * qf };
        Ok(QuantTable {
            luminance: scale_table(&BASE_LUMINANCE, scale),
            chrominance: scale_table(&BASE_CHROMINANCE, scale),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_50_is_the_base_table() {
        let t = QuantTable::for_quality(50).unwrap();
        assert_eq!(t.luminance, BASE_LUMINANCE);
        assert_eq!(t.chrominance, BASE_CHROMINANCE);
    }

    #[test]
    fn quality_100_is_all_ones() {
        let t = QuantTable::for_quality(100).unwrap();
        assert!(t.luminance.iter().chain(&t.chrominance).all(|&v| v == 1));
    }

    #[test]
    fn lower_quality_is_coarser() {
        let q10 = QuantTable::for_quality(10).unwrap();
        let q50 = QuantTable::for_quality(50).unwrap();
        for i in 0..64 {
            assert!(q10.luminance[i] >= q50.luminance[i]);
            assert!(q10.chrominance[i] >= q50.chrominance[i]);
        }
        // spot value: 16 * 500 / 100 = 80
        assert_eq!(q10.luminance[0], 80);
    }

    #[test]
    fn out_of_range_quality_rejected() {
        assert!(QuantTable::for_quality(0).is_err());
        assert!(QuantTable::for_quality(101).is_err());
    }

    #[test]
    fn entries_stay_in_byte_range() {
        for qf in 1..=100 {
            let t = QuantTable::for_quality(qf).unwrap();
            assert!(t.luminance.iter().chain(&t.chrominance).all(|&v| (1..=255).contains(&v)));
        }
    }
}
