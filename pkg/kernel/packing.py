"""
Bit-plane packing for binary codes.

A code vector b in {-1, +1}^p is stored one bit per entry, 32 entries per
unsigned 32-bit word. Column j lives at bit (j mod 32) of word j // 32,
LSB first; a set bit means +1 and a clear bit means -1. Padding bits past
the last column are always 0.
"""

import numpy as np

WORD_BITS = 32


def words_per_row(cols: int) -> int:
    return (cols + WORD_BITS - 1) // WORD_BITS


def pack_plane(bits: np.ndarray) -> np.ndarray:
    """
    Pack a (rows, cols) boolean matrix (True = +1) into (rows, words) uint32 words.
    """
    bits = np.asarray(bits, dtype=bool)
    if bits.ndim != 2:
        raise ValueError(f"pack_plane expects a 2-D bit matrix, got {bits.ndim}-D")

    rows, cols = bits.shape
    n_words = words_per_row(cols)
    padded = np.zeros((rows, n_words * WORD_BITS), dtype=bool)
    padded[:, :cols] = bits

    # little bit order inside each byte + little-endian bytes inside each word
    # gives exactly the LSB-first column order
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u4").astype(np.uint32)


def unpack_plane(words: np.ndarray, cols: int) -> np.ndarray:
    """Inverse of pack_plane: (rows, words) uint32 -> (rows, cols) bool"""
    words = np.ascontiguousarray(words, dtype="<u4")
    if words.ndim != 2:
        raise ValueError(f"unpack_plane expects a 2-D word matrix, got {words.ndim}-D")
    if words.shape[1] != words_per_row(cols):
        raise ValueError(
            f"{words.shape[1]} words per row cannot hold exactly {cols} columns"
        )

    as_bytes = words.view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")
    return bits[:, :cols].astype(bool)


def pack_row(b: np.ndarray) -> np.ndarray:
    """Pack a single +/-1 vector into its word sequence"""
    b = np.asarray(b)
    if b.ndim != 1:
        raise ValueError(f"pack_row expects a vector, got shape {b.shape}")
    if not np.isin(b, (-1, 1)).all():
        bad = b[~np.isin(b, (-1, 1))][0]
        raise ValueError(f"Code entries must be -1 or +1, found {bad}")

    return pack_plane((b > 0).reshape(1, -1))[0]


def unpack_row(words: np.ndarray, cols: int) -> np.ndarray:
    """Unpack a word sequence back into a +/-1 int8 vector of length cols"""
    words = np.asarray(words, dtype=np.uint32).reshape(1, -1)
    bits = unpack_plane(words, cols)[0]
    return np.where(bits, 1, -1).astype(np.int8)
