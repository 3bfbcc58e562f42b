"""Regular-column LDPC codes: construction, encoding, alist I/O and sum-product decoding.

LLRs follow ``L = log P(bit = 0) / P(bit = 1)`` (natural log), so a
positive value favours bit 0.
"""
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._validation import check_random_state


class ConstructionError(RuntimeError):
    """Raised when no parity matrix meeting the constraints was found."""


def gf2_rref(A):
    """Reduced row echelon form over GF(2).

    Returns ``(R, pivots)`` where ``R`` has the zero rows removed and
    ``pivots[i]`` is the pivot column of row ``i``.
    """
    R = (np.asarray(A) % 2).astype(np.uint8).copy()
    m, n = R.shape
    pivots = []
    row = 0
    for col in range(n):
        if row == m:
            break
        hits = np.flatnonzero(R[row:, col]) + row
        if hits.size == 0:
            continue
        p = hits[0]
        if p != row:
            R[[row, p]] = R[[p, row]]
        others = np.flatnonzero(R[:, col])
        others = others[others != row]
        R[others] ^= R[row]
        pivots.append(col)
        row += 1
    return R[:row], np.array(pivots, dtype=np.int64)


def gf2_rank(A):
    return gf2_rref(A)[1].size


@dataclass
class ParityMatrix:
    """Binary parity-check matrix with a systematic encoder.

    Attributes
    ----------
    H : ndarray of uint8, shape (m, n)
    generator : ndarray of uint8, shape (k, n)
        ``codeword = info @ generator (mod 2)``.
    info_positions : ndarray of int
        Codeword positions that carry the information bits verbatim.
    """

    H: np.ndarray
    generator: np.ndarray = field(init=False)
    info_positions: np.ndarray = field(init=False)

    def __post_init__(self):
        self.H = (np.asarray(self.H) % 2).astype(np.uint8)
        R, pivots = gf2_rref(self.H)
        n = self.H.shape[1]
        free = np.setdiff1d(np.arange(n), pivots)
        G = np.zeros((free.size, n), dtype=np.uint8)
        G[:, free] = np.eye(free.size, dtype=np.uint8)
        # pivot bits: c_p = R[:, free] c_free
        G[:, pivots] = R[:, free].T
        self.generator = G
        self.info_positions = free
        self._graph = None

    @property
    def n(self):
        return self.H.shape[1]

    @property
    def m(self):
        return self.H.shape[0]

    @property
    def k(self):
        return self.generator.shape[0]

    @property
    def rank(self):
        return self.n - self.k

    @property
    def rate(self):
        return self.k / self.n

    def column_weights(self):
        return self.H.sum(axis=0).astype(np.int64)

    def max_column_overlap(self):
        """Largest number of rows shared by two distinct columns (1 means no 4-cycles)."""
        Hi = self.H.astype(np.int64)
        ov = Hi.T @ Hi
        np.fill_diagonal(ov, 0)
        return int(ov.max()) if ov.size else 0

    def encode(self, info):
        """Encode rows of ``info`` (..., k) into codewords (..., n)."""
        info = np.asarray(info)
        if info.shape[-1] != self.k:
            raise ValueError(f"expected {self.k} information bits, got {info.shape[-1]}")
        return ((info.astype(np.int64) @ self.generator.astype(np.int64)) % 2).astype(np.int8)

    def syndrome(self, bits):
        return (self.H.astype(np.int64) @ np.asarray(bits, dtype=np.int64).T % 2).T

    def extract_info(self, bits):
        return np.asarray(bits)[..., self.info_positions]

    def graph(self):
        """Edge lists used by the decoder (built once)."""
        if self._graph is None:
            rows, cols = np.nonzero(self.H)  # row-major: edges grouped by check
            check_ptr = np.zeros(self.m + 1, dtype=np.int64)
            np.add.at(check_ptr, rows + 1, 1)
            check_ptr = np.cumsum(check_ptr)
            order = np.argsort(cols, kind="stable")
            var_ptr = np.zeros(self.n + 1, dtype=np.int64)
            np.add.at(var_ptr, cols + 1, 1)
            var_ptr = np.cumsum(var_ptr)
            self._graph = (cols.astype(np.int64), check_ptr, order.astype(np.int64), var_ptr)
        return self._graph


def build_ldpc(n_cols=256, n_rows=128, col_weight=6, rng=None, max_retries=50):
    """Random parity matrix with fixed column weight and no length-4 cycles.

    Columns are placed one at a time, progressive-edge-growth style: each new
    edge goes to a least-loaded row that shares no column with the rows
    already chosen for the current column.  A dead end restarts the whole
    construction, up to ``max_retries`` times.
    """
    rng = check_random_state(rng)
    if col_weight > n_rows:
        raise ValueError("column weight cannot exceed the number of rows")
    for _ in range(max_retries):
        H = _try_build(n_cols, n_rows, col_weight, rng)
        if H is not None:
            return ParityMatrix(H)
    raise ConstructionError(
        f"no {n_rows}x{n_cols} matrix with column weight {col_weight} and girth > 4 after {max_retries} attempts"
    )


def _try_build(n, m, wc, rng):
    H = np.zeros((m, n), dtype=np.uint8)
    degree = np.zeros(m, dtype=np.int64)
    for j in rng.permutation(n):
        chosen = []
        blocked = np.zeros(m, dtype=bool)
        for _ in range(wc):
            ok = ~blocked
            ok[chosen] = False
            cand = np.flatnonzero(ok)
            if cand.size == 0:
                return None
            low = cand[degree[cand] == degree[cand].min()]
            r = int(rng.choice(low))
            chosen.append(r)
            degree[r] += 1
            H[r, j] = 1
            # rows of columns already sharing row r with j may not be reused
            nbr = np.flatnonzero(H[r])
            blocked |= H[:, nbr[nbr != j]].any(axis=1)
    return H


def write_alist(path, parity):
    """Write a parity matrix in alist format (1-based indices, zero padded)."""
    H = parity.H if isinstance(parity, ParityMatrix) else (np.asarray(parity) % 2).astype(np.uint8)
    m, n = H.shape
    cw = H.sum(axis=0).astype(int)
    rw = H.sum(axis=1).astype(int)
    lines = [f"{n} {m}", f"{cw.max()} {rw.max()}", " ".join(map(str, cw)), " ".join(map(str, rw))]
    for j in range(n):
        idx = list(np.flatnonzero(H[:, j]) + 1) + [0] * (cw.max() - cw[j])
        lines.append(" ".join(map(str, idx)))
    for i in range(m):
        idx = list(np.flatnonzero(H[i]) + 1) + [0] * (rw.max() - rw[i])
        lines.append(" ".join(map(str, idx)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_alist(path):
    """Read an alist file into a :class:`ParityMatrix`."""
    with open(path, encoding="utf-8") as fh:
        tokens = [line.split() for line in fh if line.strip()]
    try:
        n, m = map(int, tokens[0])
        col_lists = tokens[4:4 + n]
        H = np.zeros((m, n), dtype=np.uint8)
        for j, row in enumerate(col_lists):
            for v in map(int, row):
                if v:
                    H[v - 1, j] = 1
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed alist file {path}") from exc
    if len(col_lists) != n:
        raise ValueError(f"malformed alist file {path}: expected {n} column lines")
    return ParityMatrix(H)


@njit(cache=True)
def _spa(llr, edge_var, check_ptr, var_order, var_ptr, max_iters):
    n = llr.size
    m = check_ptr.size - 1
    E = edge_var.size
    q = np.empty(E)
    r = np.zeros(E)
    th = np.empty(E)
    pre = np.empty(E)
    post = llr.copy()
    hard = np.zeros(n, dtype=np.int8)
    for e in range(E):
        q[e] = llr[edge_var[e]]
    converged = False
    it = 0
    lim = 1.0 - 1e-12
    while it < max_iters:
        it += 1
        # check nodes, tanh rule with leave-one-out products (prefix/suffix)
        for c in range(m):
            a, b = check_ptr[c], check_ptr[c + 1]
            for e in range(a, b):
                th[e] = np.tanh(0.5 * q[e])
            acc = 1.0
            for e in range(a, b):
                pre[e] = acc
                acc *= th[e]
            acc = 1.0
            for e in range(b - 1, a - 1, -1):
                p = pre[e] * acc
                acc *= th[e]
                if p > lim:
                    p = lim
                elif p < -lim:
                    p = -lim
                r[e] = 2.0 * np.arctanh(p)
        # variable nodes
        for v in range(n):
            s = llr[v]
            for k in range(var_ptr[v], var_ptr[v + 1]):
                s += r[var_order[k]]
            post[v] = s
            hard[v] = 1 if s < 0 else 0
            for k in range(var_ptr[v], var_ptr[v + 1]):
                e = var_order[k]
                q[e] = s - r[e]
        ok = True
        for c in range(m):
            par = 0
            for e in range(check_ptr[c], check_ptr[c + 1]):
                par ^= hard[edge_var[e]]
            if par:
                ok = False
                break
        if ok:
            converged = True
            break
    return post, hard, converged, it


@dataclass
class DecodeResult:
    posterior: np.ndarray
    extrinsic: np.ndarray
    hard_bits: np.ndarray
    converged: bool
    iterations: int

    def __iter__(self):
        return iter((self.posterior, self.extrinsic, self.hard_bits, self.converged))


def spa_decode(channel_llrs, parity, max_iters=50):
    """Flooding sum-product decoding of one codeword.

    Parameters
    ----------
    channel_llrs : ndarray, shape (n,)
        Input LLRs, ``log P(0)/P(1)``.
    parity : ParityMatrix
    max_iters : int
        Stops earlier once every check is satisfied.

    Returns
    -------
    DecodeResult
        Unpacks as ``(posterior, extrinsic, hard_bits, converged)`` with
        ``extrinsic = posterior - channel_llrs``.
    """
    llr = np.ascontiguousarray(channel_llrs, dtype=np.float64)
    if llr.shape != (parity.n,):
        raise ValueError(f"expected {parity.n} LLRs, got shape {llr.shape}")
    if not np.all(np.isfinite(llr)):
        raise ValueError("channel LLRs must be finite")
    edge_var, check_ptr, var_order, var_ptr = parity.graph()
    post, hard, conv, it = _spa(llr, edge_var, check_ptr, var_order, var_ptr, int(max_iters))
    return DecodeResult(post, post - llr, hard, bool(conv), int(it))
