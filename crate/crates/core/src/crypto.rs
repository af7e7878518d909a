//! Shared-secret material and the byte transforms the channels build on:
//! RC4 (KSA + PRGA) and a modular ASCII shift.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CryptoError {
    #[error("RC4 key must be 1..=256 bytes, got {0}")]
    BadKeyLength(usize),
    #[error("sequence permutation must contain each nibble 0..=15 exactly once")]
    BadPermutation,
    #[error("invalid hex in {field}")]
    BadHex {
        field: &'static str,
        source: hex::FromHexError,
    },
}

// ---- RC4 ----

/// RC4 stream state. One instance encrypts or decrypts one message; the
/// cipher is an XOR stream, so applying it twice with the same key restores
/// the input.
#[derive(Debug, Clone)]
pub struct Rc4 {
    s: [u8; 256],
    i: u8,
    j: u8,
}

impl Rc4 {
    /// Key-scheduling algorithm. Keys are 1..=256 bytes.
    pub fn new(key: &[u8]) -> Result<Self, CryptoError> {
        if key.is_empty() || key.len() > 256 {
            return Err(CryptoError::BadKeyLength(key.len()));
        }
        let mut s = [0u8; 256];
        for (i, v) in s.iter_mut().enumerate() {
            *v = i as u8;
        }
        let mut j = 0u8;
        for i in 0..256 {
            j = j
                .wrapping_add(s[i])
                .wrapping_add(key[i % key.len()]);
            s.swap(i, j as usize);
        }
        Ok(Self { s, i: 0, j: 0 })
    }

    /// Next PRGA keystream byte.
    pub fn keystream_byte(&mut self) -> u8 {
        self.i = self.i.wrapping_add(1);
        self.j = self.j.wrapping_add(self.s[self.i as usize]);
        self.s.swap(self.i as usize, self.j as usize);
        let t = self.s[self.i as usize].wrapping_add(self.s[self.j as usize]);
        self.s[t as usize]
    }

    pub fn keystream(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.keystream_byte()).collect()
    }

    /// XOR `data` against the keystream, advancing the stream.
    pub fn apply(&mut self, data: &[u8]) -> Vec<u8> {
        data.iter().map(|&b| b ^ self.keystream_byte()).collect()
    }
}

/// One-shot RC4 over a whole message.
pub fn rc4_apply(key: &[u8], data: &[u8]) -> Result<Vec<u8>, CryptoError> {
    Ok(Rc4::new(key)?.apply(data))
}

// ---- ASCII shift ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftDirection {
    Forward,
    Backward,
}

/// Byte-wise modular shift: forward adds `offset` mod 256, backward subtracts.
/// Offset 0 is the identity; forward then backward restores the input.
pub fn ascii_shift(data: &[u8], offset: u8, direction: ShiftDirection) -> Vec<u8> {
    data.iter()
        .map(|&b| match direction {
            ShiftDirection::Forward => b.wrapping_add(offset),
            ShiftDirection::Backward => b.wrapping_sub(offset),
        })
        .collect()
}

pub const DEFAULT_ASCII_SHIFT: u8 = 13;

// ---- shared secret ----

/// Sender/receiver agreement for the covert channels: the RC4 key, the
/// 16-nibble sequence permutation used by the FlowLabel channel, and the
/// ASCII-shift offset used by the Length channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedSecret {
    rc4_key: Vec<u8>,
    sequence_permutation: [u8; 16],
    ascii_shift: u8,
}

/// Sequence permutation used in the worked examples: E A 7 1 2 3 4 5 6 8 9 B
/// C D F 0.
pub const EXAMPLE_SEQUENCE: [u8; 16] = [
    0xE, 0xA, 0x7, 0x1, 0x2, 0x3, 0x4, 0x5, 0x6, 0x8, 0x9, 0xB, 0xC, 0xD, 0xF, 0x0,
];

impl SharedSecret {
    pub fn new(
        rc4_key: Vec<u8>,
        sequence_permutation: [u8; 16],
        ascii_shift: u8,
    ) -> Result<Self, CryptoError> {
        if rc4_key.is_empty() || rc4_key.len() > 256 {
            return Err(CryptoError::BadKeyLength(rc4_key.len()));
        }
        let mut seen = [false; 16];
        for &n in &sequence_permutation {
            if n > 0xF || seen[n as usize] {
                return Err(CryptoError::BadPermutation);
            }
            seen[n as usize] = true;
        }
        Ok(Self {
            rc4_key,
            sequence_permutation,
            ascii_shift,
        })
    }

    /// Key as hex, permutation as 16 hex digits, shift as an integer.
    pub fn from_hex_parts(
        key_hex: &str,
        sequence_hex: &str,
        ascii_shift: u8,
    ) -> Result<Self, CryptoError> {
        let key = hex::decode(key_hex).map_err(|source| CryptoError::BadHex {
            field: "rc4 key",
            source,
        })?;
        let mut perm = [0u8; 16];
        if sequence_hex.len() != 16 {
            return Err(CryptoError::BadPermutation);
        }
        for (i, c) in sequence_hex.chars().enumerate() {
            perm[i] = c.to_digit(16).ok_or(CryptoError::BadPermutation)? as u8;
        }
        Self::new(key, perm, ascii_shift)
    }

    pub fn rc4_key(&self) -> &[u8] {
        &self.rc4_key
    }

    pub fn sequence_permutation(&self) -> &[u8; 16] {
        &self.sequence_permutation
    }

    pub fn ascii_shift(&self) -> u8 {
        self.ascii_shift
    }

    /// Nibble identifying carrier `position` within its 16-packet block;
    /// positions wrap around the permutation.
    pub fn sequence_nibble(&self, position: usize) -> u8 {
        self.sequence_permutation[position % 16]
    }

    /// Index of `nibble` inside the permutation, if it is a valid nibble.
    pub fn sequence_position(&self, nibble: u8) -> Option<usize> {
        self.sequence_permutation.iter().position(|&n| n == nibble)
    }

    pub fn cipher(&self) -> Rc4 {
        // Key length is validated on construction.
        Rc4::new(&self.rc4_key).expect("validated key")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independently written reference: one-shot, index arithmetic instead of
    // wrapping u8 state. Cross-checks the streaming implementation above.
    fn rc4_reference(key: &[u8], data: &[u8]) -> Vec<u8> {
        let mut s: Vec<usize> = (0..256).collect();
        let mut j = 0usize;
        for i in 0..256 {
            j = (j + s[i] + key[i % key.len()] as usize) % 256;
            s.swap(i, j);
        }
        let (mut i, mut j) = (0usize, 0usize);
        data.iter()
            .map(|&b| {
                i = (i + 1) % 256;
                j = (j + s[i]) % 256;
                s.swap(i, j);
                b ^ s[(s[i] + s[j]) % 256] as u8
            })
            .collect()
    }

    #[test]
    fn keystream_for_40_bit_test_key() {
        let mut rc4 = Rc4::new(&[0x01, 0x02, 0x03, 0x04, 0x05]).unwrap();
        assert_eq!(
            rc4.keystream(16),
            hex::decode("b2396305f03dc027ccc3524a0a1118a8").unwrap()
        );
    }

    #[test]
    fn published_plaintext_vectors() {
        assert_eq!(
            rc4_apply(b"Key", b"Plaintext").unwrap(),
            hex::decode("bbf316e8d940af0ad3").unwrap()
        );
        assert_eq!(
            rc4_apply(b"Wiki", b"pedia").unwrap(),
            hex::decode("1021bf0420").unwrap()
        );
    }

    #[test]
    fn matches_reference_implementation() {
        let keys: [&[u8]; 4] = [b"Key", b"Secret", &[0xff], &[1, 2, 3, 4, 5, 6, 7, 8]];
        for key in keys {
            let data: Vec<u8> = (0u16..700).map(|i| (i % 251) as u8).collect();
            assert_eq!(rc4_apply(key, &data).unwrap(), rc4_reference(key, &data));
        }
    }

    #[test]
    fn apply_twice_restores_input() {
        let msg = b"This is a covert communication";
        let ct = rc4_apply(b"Key", msg).unwrap();
        assert_ne!(&ct[..], &msg[..]);
        assert_eq!(rc4_apply(b"Key", &ct).unwrap(), msg);
    }

    #[test]
    fn one_stream_differs_from_restarted_streams() {
        // Encrypting two identical halves with one stream must not repeat the
        // ciphertext; restarting the cipher per half would.
        let mut stream = Rc4::new(b"Key").unwrap();
        let a = stream.apply(b"commo");
        let b = stream.apply(b"commo");
        assert_ne!(a, b);
    }

    #[test]
    fn key_length_bounds() {
        assert_eq!(Rc4::new(&[]).unwrap_err(), CryptoError::BadKeyLength(0));
        assert_eq!(
            Rc4::new(&[0u8; 257]).unwrap_err(),
            CryptoError::BadKeyLength(257)
        );
        assert!(Rc4::new(&[0u8; 256]).is_ok());
    }

    #[test]
    fn shift_forward_then_backward_is_identity() {
        let data: Vec<u8> = (0..=255).collect();
        for offset in [0u8, 1, 13, 128, 255] {
            let shifted = ascii_shift(&data, offset, ShiftDirection::Forward);
            let restored = ascii_shift(&shifted, offset, ShiftDirection::Backward);
            assert_eq!(restored, data, "offset {offset}");
        }
    }

    #[test]
    fn shift_examples() {
        assert_eq!(
            ascii_shift(b"AB", 13, ShiftDirection::Forward),
            vec![0x4e, 0x4f]
        );
        assert_eq!(ascii_shift(&[0xF5], 13, ShiftDirection::Forward), vec![2]);
        assert_eq!(ascii_shift(b"AB", 0, ShiftDirection::Forward), b"AB");
    }

    #[test]
    fn secret_validation() {
        let mut dup = EXAMPLE_SEQUENCE;
        dup[0] = dup[1];
        assert_eq!(
            SharedSecret::new(b"Key".to_vec(), dup, 13).unwrap_err(),
            CryptoError::BadPermutation
        );
        assert_eq!(
            SharedSecret::new(vec![], EXAMPLE_SEQUENCE, 13).unwrap_err(),
            CryptoError::BadKeyLength(0)
        );
    }

    #[test]
    fn secret_from_hex_parts() {
        let s = SharedSecret::from_hex_parts("4b6579", "ea7123456", 13);
        assert!(s.is_err(), "short permutation rejected");
        let s = SharedSecret::from_hex_parts("4b6579", "ea71234568 9bcdf0", 13);
        assert!(s.is_err(), "non-hex rejected");
        let s = SharedSecret::from_hex_parts("4b6579", "ea712345689bcdf0", 13).unwrap();
        assert_eq!(s.rc4_key(), b"Key");
        assert_eq!(s.sequence_permutation(), &EXAMPLE_SEQUENCE);
    }

    #[test]
    fn sequence_nibbles_wrap() {
        let s = SharedSecret::new(b"Key".to_vec(), EXAMPLE_SEQUENCE, 13).unwrap();
        assert_eq!(s.sequence_nibble(0), 0xE);
        assert_eq!(s.sequence_nibble(2), 0x7);
        assert_eq!(s.sequence_nibble(15), 0x0);
        assert_eq!(s.sequence_nibble(16), 0xE);
        assert_eq!(s.sequence_nibble(18), 0x7);
        assert_eq!(s.sequence_position(0xE), Some(0));
        assert_eq!(s.sequence_position(0x0), Some(15));
    }
}
