//! The Internet checksum (ones'-complement sum of 16-bit words).

use std::net::Ipv4Addr;

/// Adds `bytes` as big-endian 16-bit words onto `acc` without folding.
/// An odd trailing byte is padded with a zero low byte.
pub fn sum_words(bytes: &[u8], mut acc: u64) -> u64 {
    let mut chunks = bytes.chunks_exact(2);
    for pair in &mut chunks {
        acc += u64::from(u16::from_be_bytes([pair[0], pair[1]]));
    }
    if let [last] = chunks.remainder() {
        acc += u64::from(*last) << 8;
    }
    acc
}

fn fold(mut acc: u64) -> u16 {
    while acc > 0xffff {
        acc = (acc & 0xffff) + (acc >> 16);
    }
    acc as u16
}

/// Standard Internet checksum of `bytes` seeded with a pre-summed
/// pseudo-header. Returns the value to store in the checksum field.
pub fn ones_complement_checksum(bytes: &[u8], pseudo_header_sum: u64) -> u16 {
    !fold(sum_words(bytes, pseudo_header_sum))
}

/// True iff `bytes` (with its checksum field embedded) sums to 0xffff.
pub fn verify(bytes: &[u8], pseudo_header_sum: u64) -> bool {
    fold(sum_words(bytes, pseudo_header_sum)) == 0xffff
}

/// Unfolded sum of the IPv4 pseudo-header used by TCP and UDP.
pub fn pseudo_header_sum(src: Ipv4Addr, dst: Ipv4Addr, protocol: u8, length: usize) -> u64 {
    let mut acc = sum_words(&src.octets(), 0);
    acc = sum_words(&dst.octets(), acc);
    acc + u64::from(protocol) + length as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_all_ones() {
        assert_eq!(ones_complement_checksum(&[], 0), 0xffff);
    }

    #[test]
    fn rfc1071_example() {
        // Worked example from RFC 1071 section 3: sum 0xddf2, checksum !0xddf2.
        let data = [0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7];
        assert_eq!(ones_complement_checksum(&data, 0), !0xddf2);
    }

    #[test]
    fn odd_length_pads_low_byte() {
        assert_eq!(ones_complement_checksum(&[0xab], 0), !0xab00);
    }

    #[test]
    fn embedded_checksum_verifies() {
        let mut data = vec![0x45, 0x00, 0x00, 0x28, 0x12, 0x34, 0x00, 0x00, 0x40, 0x06, 0, 0];
        data.extend_from_slice(&[10, 0, 0, 1, 10, 0, 0, 2]);
        let c = ones_complement_checksum(&data, 0);
        data[10..12].copy_from_slice(&c.to_be_bytes());
        assert!(verify(&data, 0));
        data[3] ^= 0x01;
        assert!(!verify(&data, 0));
    }
}
