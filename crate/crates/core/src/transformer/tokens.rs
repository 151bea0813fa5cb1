use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TOK1";

/// Codebook indices of one shape in row-major grid order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(pub Vec<u32>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[u32] {
        &self.0
    }

    /// Errors on the first token `>= vocab`.
    pub fn check_vocab(&self, vocab: usize) -> Result<()> {
        match self.0.iter().position(|&t| t as usize >= vocab) {
            Some(position) => Err(Error::TokenOutOfRange {
                position,
                token: self.0[position] as usize,
                vocab,
            }),
            None => Ok(()),
        }
    }
}

impl From<Vec<u32>> for TokenSequence {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

/// Layout: `TOK1`, u32 sequence count, u32 sequence length, then
/// `count * length` little-endian u16 tokens.
pub fn write_token_dataset<W: Write>(mut w: W, seqs: &[TokenSequence]) -> Result<()> {
    let len = seqs.first().map_or(0, TokenSequence::len);
    if let Some(bad) = seqs.iter().find(|s| s.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            actual: bad.len(),
        });
    }
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(seqs.len() as u32)?;
    w.write_u32::<LittleEndian>(len as u32)?;
    for s in seqs {
        for (position, &t) in s.0.iter().enumerate() {
            let t16 = u16::try_from(t).map_err(|_| Error::TokenOutOfRange {
                position,
                token: t as usize,
                vocab: u16::MAX as usize + 1,
            })?;
            w.write_u16::<LittleEndian>(t16)?;
        }
    }
    Ok(())
}

pub fn read_token_dataset<R: Read>(mut r: R) -> Result<Vec<TokenSequence>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("token dataset: bad magic".into()));
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut s = Vec::with_capacity(len);
        for _ in 0..len {
            s.push(r.read_u16::<LittleEndian>()? as u32);
        }
        out.push(TokenSequence(s));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn dataset_round_trip(seqs in prop::collection::vec(prop::collection::vec(0u32..8192, 7), 0..6)) {
            let seqs: Vec<TokenSequence> = seqs.into_iter().map(TokenSequence).collect();
            let mut buf = Vec::new();
            write_token_dataset(&mut buf, &seqs).unwrap();
            prop_assert_eq!(&buf[..4], b"TOK1");
            prop_assert_eq!(read_token_dataset(buf.as_slice()).unwrap(), seqs);
        }
    }

    #[test]
    fn ragged_dataset_rejected() {
        let seqs = vec![TokenSequence(vec![1, 2]), TokenSequence(vec![1])];
        assert!(write_token_dataset(Vec::new(), &seqs).is_err());
    }

    #[test]
    fn vocab_check_reports_position() {
        let err = TokenSequence(vec![0, 3, 9]).check_vocab(4).unwrap_err();
        assert!(matches!(err, Error::TokenOutOfRange { position: 2, token: 9, vocab: 4 }));
    }
}
