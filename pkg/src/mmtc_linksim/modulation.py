"""Gray-mapped QPSK and the zero-augmented alphabet used for sparse detection.

Gray table (bit 0 drives the in-phase sign, bit 1 the quadrature sign)::

    (0, 0) -> (+1 + 1j) / sqrt(2)
    (0, 1) -> (+1 - 1j) / sqrt(2)
    (1, 0) -> (-1 + 1j) / sqrt(2)
    (1, 1) -> (-1 - 1j) / sqrt(2)

The augmented alphabet stores the zero (inactive-device) symbol at index 0,
followed by the QPSK points in bit-label order, so index ``1 + 2*b0 + b1``
carries label ``(b0, b1)``.  Lowest-index tie breaking therefore favours the
zero symbol.
"""
from dataclasses import dataclass

import numpy as np

BITS_PER_SYMBOL = 2
_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def _check_bits(bits):
    arr = np.asarray(bits)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("bits must be 0 or 1")
    if arr.ndim == 0 or arr.shape[-1] % BITS_PER_SYMBOL:
        raise ValueError(
            f"trailing dimension must be a multiple of {BITS_PER_SYMBOL}, got shape {arr.shape}"
        )
    return arr.astype(np.int8)


def qpsk_map(bits):
    """Map bit pairs along the last axis onto unit-energy Gray QPSK symbols.

    ``bits`` of shape ``(..., 2k)`` gives symbols of shape ``(..., k)``.
    """
    b = _check_bits(bits)
    b = b.reshape(b.shape[:-1] + (-1, BITS_PER_SYMBOL))
    return ((1 - 2 * b[..., 0]) + 1j * (1 - 2 * b[..., 1])) * _INV_SQRT2


def qpsk_demap_hard(symbols):
    """Hard Gray demapping; the inverse of :func:`qpsk_map`.

    Zero symbols have no label and are rejected.
    """
    s = np.asarray(symbols, dtype=np.complex128)
    if np.any(s == 0):
        raise ValueError("the zero symbol carries no bit label")
    bits = np.stack([(s.real < 0), (s.imag < 0)], axis=-1).astype(np.int8)
    return bits.reshape(s.shape[:-1] + (-1,)) if s.ndim else bits


@dataclass(frozen=True)
class AugmentedAlphabet:
    """Constellation points plus the zero symbol, with bit labels for the nonzero points."""

    points: np.ndarray
    labels: np.ndarray  # (|A|, bits) labels of points[1:]

    @classmethod
    def qpsk(cls):
        labels = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.int8)
        points = np.concatenate([[0.0 + 0.0j], qpsk_map(labels.reshape(-1))])
        return cls(points=points, labels=labels)

    @property
    def size(self):
        return self.points.size

    @property
    def constellation(self):
        return self.points[1:]

    @property
    def bits_per_symbol(self):
        return self.labels.shape[1]

    @property
    def min_distance(self):
        c = self.constellation
        d = np.abs(c[:, None] - c[None, :])
        return d[d > 0].min()

    def antipodal_labels(self):
        """Labels of ``points[1:]`` as +1 (bit 0) / -1 (bit 1)."""
        return 1 - 2 * self.labels.astype(np.float64)

    def index_of(self, symbols, atol=1e-9):
        """Alphabet index of each symbol; raises if a symbol is off-alphabet."""
        s = np.asarray(symbols, dtype=np.complex128)
        d = np.abs(s[..., None] - self.points)
        idx = np.argmin(d, axis=-1)
        if np.any(np.take_along_axis(d, idx[..., None], -1) > atol):
            raise ValueError("symbol not in the augmented alphabet")
        return idx
