"""
SCMA codebook handling, encoding and log-domain message passing decoding.

Observations are indexed (slot t, observation o, band n_s). An observation is
one receive antenna of one slot; every observation of a slot shares the UE
codeword variables of that slot, and the per-antenna likelihoods of a band are
multiplied inside that band's function node.
"""

import itertools
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from utils.modulation_utils import bits_to_index, index_to_bits

logger = logging.getLogger(__name__)

DEFAULT_CODEBOOK_PATH = Path(__file__).resolve().parent.parent / "scma_codebook.json"


class ScmaError(Exception):
    """Base exception for SCMA operations"""
    pass


class ScmaConfigurationError(ScmaError):
    """Malformed codebook or decoder settings"""
    pass


class InstanceTooLargeError(ScmaError):
    """Exhaustive decoding would enumerate too many hypotheses"""
    pass


@dataclass(frozen=True, eq=False)
class ScmaCodebook:
    """Codewords C[k, n_s, n_c] with their factor-graph structure."""

    codewords: np.ndarray
    ue_bands: Tuple[Tuple[int, ...], ...]
    band_ues: Tuple[Tuple[int, ...], ...]
    name: str = "custom"
    version: str = "1.0"

    @classmethod
    def from_codewords(cls, codewords: np.ndarray, name: str = "custom",
                       version: str = "1.0") -> "ScmaCodebook":
        """Infer G_k and F_ns from the nonzero pattern of the codewords."""
        C = np.asarray(codewords, dtype=complex)
        occupied = np.any(np.abs(C) > 0, axis=2)
        ue_bands = tuple(tuple(int(n) for n in np.flatnonzero(row)) for row in occupied)
        band_ues = tuple(tuple(int(k) for k in np.flatnonzero(col)) for col in occupied.T)
        return cls(C, ue_bands, band_ues, name, version)

    @property
    def K(self) -> int:
        return self.codewords.shape[0]

    @property
    def N_s(self) -> int:
        return self.codewords.shape[1]

    @property
    def N_c(self) -> int:
        return self.codewords.shape[2]

    @property
    def d_v(self) -> int:
        return max(len(g) for g in self.ue_bands)

    @property
    def d_c(self) -> int:
        return max(len(f) for f in self.band_ues)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.N_c))

    @property
    def is_regular(self) -> bool:
        return (len({len(g) for g in self.ue_bands}) == 1
                and len({len(f) for f in self.band_ues}) == 1)

    @property
    def support_mask(self) -> np.ndarray:
        """(K x N_s) boolean mask of G_k."""
        mask = np.zeros((self.K, self.N_s), dtype=bool)
        for k, bands in enumerate(self.ue_bands):
            mask[k, list(bands)] = True
        return mask

    def validate(self, strict: bool = True) -> None:
        """
        Check supports, factor-graph consistency and codeword energy.

        Raises:
            ScmaConfigurationError: on any violation
        """
        C = self.codewords
        if C.ndim != 3:
            raise ScmaConfigurationError(f"Codewords must be (K, N_s, N_c), got {C.shape}")
        if self.N_c < 2 or self.N_c & (self.N_c - 1):
            raise ScmaConfigurationError(f"N_c must be a power of two, got {self.N_c}")
        if len(self.ue_bands) != self.K or len(self.band_ues) != self.N_s:
            raise ScmaConfigurationError("Support sets do not match codeword dimensions")
        mask = self.support_mask
        for ns, ues in enumerate(self.band_ues):
            if set(ues) != set(np.flatnonzero(mask[:, ns]).tolist()):
                raise ScmaConfigurationError(f"Band {ns} user set disagrees with UE band sets")
        nonzero = np.abs(C) > 0
        for k in range(self.K):
            for n_c in range(self.N_c):
                if not np.array_equal(nonzero[k, :, n_c], mask[k]):
                    raise ScmaConfigurationError(
                        f"Codeword {n_c} of UE {k} is not supported exactly on {self.ue_bands[k]}")
        if strict:
            if not self.is_regular:
                raise ScmaConfigurationError("Codebook is not regular in d_v / d_c")
            energy = np.mean(np.sum(np.abs(C) ** 2, axis=1), axis=1)
            if np.max(np.abs(energy - 1.0)) > 1e-9:
                raise ScmaConfigurationError(f"Average codeword energy must be 1, got {energy}")

    def to_dict(self) -> dict:
        return {
            "version": self.version, "name": self.name, "K": self.K, "N_s": self.N_s,
            "N_c": self.N_c, "d_v": self.d_v, "d_c": self.d_c,
            "ue_bands": [list(g) for g in self.ue_bands],
            "band_ues": [list(f) for f in self.band_ues],
            "codewords": np.stack([self.codewords.real, self.codewords.imag], axis=-1).tolist(),
        }


def load_codebook(path: Union[str, Path], strict: bool = True) -> ScmaCodebook:
    """
    Load a versioned JSON codebook ([re, im] pairs, codewords[k][n_s][n_c]).

    Raises:
        ScmaConfigurationError: unreadable file or inconsistent content
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ScmaConfigurationError(f"Cannot read codebook {path}: {e}")
    try:
        raw = np.asarray(doc["codewords"], dtype=float)
        codewords = raw[..., 0] + 1j * raw[..., 1]
        cb = ScmaCodebook(
            codewords=codewords,
            ue_bands=tuple(tuple(g) for g in doc["ue_bands"]),
            band_ues=tuple(tuple(f) for f in doc["band_ues"]),
            name=doc.get("name", path.stem), version=str(doc.get("version", "1.0")))
    except (KeyError, IndexError, ValueError) as e:
        raise ScmaConfigurationError(f"Malformed codebook {path}: {e}")
    for key in ("K", "N_s", "N_c", "d_v", "d_c"):
        if key in doc and doc[key] != getattr(cb, key):
            raise ScmaConfigurationError(f"Codebook field {key}={doc[key]} disagrees with codewords")
    cb.validate(strict=strict)
    logger.debug(f"Loaded codebook {cb.name} v{cb.version} from {path}")
    return cb


def save_codebook(cb: ScmaCodebook, path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        json.dump(cb.to_dict(), f, indent=2)


def build_default_codebook() -> ScmaCodebook:
    """The shipped 6-UE, 4-band, 4-point codebook (ISAC_CODEBOOK overrides the file)."""
    return load_codebook(os.getenv("ISAC_CODEBOOK", str(DEFAULT_CODEBOOK_PATH)))


def encode(bits: Sequence[int], k: int, cb: ScmaCodebook) -> np.ndarray:
    """
    Map log2(N_c) bits (MSB first) of UE k to its codeword.

    Raises:
        ScmaError: wrong bit count or UE index
    """
    bits = np.asarray(bits).reshape(-1)
    if bits.size != cb.bits_per_symbol:
        raise ScmaError(f"Expected {cb.bits_per_symbol} bits, got {bits.size}")
    if not 0 <= k < cb.K:
        raise ScmaError(f"UE index {k} outside 0..{cb.K - 1}")
    return cb.codewords[k, :, int(bits_to_index(bits)[0])].copy()


def encode_indices(indices: np.ndarray, cb: ScmaCodebook) -> np.ndarray:
    """Codeword indices (K x T) -> symbols (K x T x N_s)."""
    indices = np.asarray(indices, dtype=np.int64)
    K, T = indices.shape
    out = np.empty((K, T, cb.N_s), dtype=complex)
    for k in range(K):
        out[k] = cb.codewords[k][:, indices[k]].T
    return out


@dataclass
class MessageState:
    """Log-domain messages; f2v[n_s] is (d_c, T, N_c), v2f[k] is (d_v, T, N_c)."""

    f2v: List[np.ndarray]
    v2f: List[np.ndarray]
    iteration: int = 0


@dataclass
class DecodeResult:
    decisions: np.ndarray                  # (K, T) codeword indices
    log_posteriors: np.ndarray             # (K, T, N_c), normalized
    bit_llrs: np.ndarray                   # (K, T, bits), positive favours bit 0
    iterations: int = 0
    converged: bool = True
    unstable: bool = False
    state: Optional[MessageState] = None

    def bits(self, bits_per_symbol: int) -> np.ndarray:
        return np.stack([index_to_bits(row, bits_per_symbol) for row in self.decisions])


def _prepare(y: np.ndarray, h: np.ndarray, cb: ScmaCodebook) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if y.ndim == 2:
        y = y[:, None, :]
    if h.ndim == 2:
        h = h[:, :, None]
    if y.shape[2] != cb.N_s:
        raise ScmaError(f"y carries {y.shape[2]} bands, codebook {cb.N_s}")
    if h.shape[0] != cb.K or h.shape[1:] != y.shape[:2]:
        raise ScmaError(f"h shape {h.shape} does not match y {y.shape} and K={cb.K}")
    return y, h


def _tuples(n_c: int, d: int) -> np.ndarray:
    return np.array(list(itertools.product(range(n_c), repeat=d)), dtype=np.int64).reshape(-1, d)


def band_log_likelihoods(y: np.ndarray, h: np.ndarray, N_0: float, cb: ScmaCodebook) -> List[np.ndarray]:
    """
    log f_ns for every codeword tuple of the band's users.

    Returns:
        list over bands of arrays (T, N_c, ..., N_c) with one axis per user of F_ns
    """
    if N_0 <= 0:
        raise ScmaError(f"N_0 must be positive, got {N_0}")
    y, h = _prepare(y, h, cb)
    T = y.shape[0]
    out = []
    for ns, users in enumerate(cb.band_ues):
        d = len(users)
        combos = _tuples(cb.N_c, d)
        symbols = np.stack([cb.codewords[u, ns, combos[:, j]] for j, u in enumerate(users)], axis=1)
        pred = np.einsum("jto,qj->toq", h[list(users)], symbols)
        ll = -np.sum(np.abs(y[:, :, ns][:, :, None] - pred) ** 2, axis=1) / N_0
        out.append(ll.reshape((T,) + (cb.N_c,) * d))
    return out


def _normalize(msg: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Shift so logsumexp over the last axis is 0; repair non-finite values."""
    unstable = False
    if not np.all(np.isfinite(msg)):
        unstable = True
        msg = np.where(np.isfinite(msg), msg, -1e300)
    msg = msg - logsumexp(msg, axis=-1, keepdims=True)
    if not np.all(np.isfinite(msg)):
        unstable = True
        msg = np.where(np.isfinite(msg), msg, -np.log(msg.shape[-1]))
        msg = msg - logsumexp(msg, axis=-1, keepdims=True)
    return msg, unstable


def _expand(msg: np.ndarray, axis: int, d: int) -> np.ndarray:
    """(T, N_c) message broadcast along tuple axis `axis` of a (T,)+(N_c,)*d array."""
    shape = [msg.shape[0]] + [1] * d
    shape[1 + axis] = msg.shape[1]
    return msg.reshape(shape)


def bit_llrs(log_posteriors: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """Per-bit log-likelihood ratios log P(b=0)/P(b=1), MSB first."""
    n_c = log_posteriors.shape[-1]
    labels = index_to_bits(np.arange(n_c), bits_per_symbol).reshape(n_c, bits_per_symbol)
    out = np.empty(log_posteriors.shape[:-1] + (bits_per_symbol,))
    for b in range(bits_per_symbol):
        zero = labels[:, b] == 0
        out[..., b] = (logsumexp(log_posteriors[..., zero], axis=-1)
                       - logsumexp(log_posteriors[..., ~zero], axis=-1))
    return out


def mpa_decode(y: np.ndarray, h: np.ndarray, N_0: float, cb: ScmaCodebook,
               max_iterations: int = 10, tolerance: float = 1e-6) -> DecodeResult:
    """
    Log-domain flooding message passing decoder.

    Args:
        y: received samples (T, N_obs, N_s) or (T, N_s)
        h: effective channel of each UE (K, T, N_obs) or (K, T), data power included
        N_0: noise variance
        cb: codebook
        max_iterations: S_max
        tolerance: early exit when no message moves more than this

    Returns:
        DecodeResult: decisions, log-posteriors, bit LLRs and the final messages
    """
    if max_iterations < 1:
        raise ScmaConfigurationError(f"max_iterations must be >= 1, got {max_iterations}")
    ll = band_log_likelihoods(y, h, N_0, cb)
    T = ll[0].shape[0]
    n_c = cb.N_c
    uniform = np.full((T, n_c), -np.log(n_c))
    band_pos = [{u: j for j, u in enumerate(users)} for users in cb.band_ues]
    ue_pos = [{ns: j for j, ns in enumerate(bands)} for bands in cb.ue_bands]

    state = MessageState(
        f2v=[np.repeat(uniform[None], len(users), axis=0) for users in cb.band_ues],
        v2f=[np.repeat(uniform[None], len(bands), axis=0) for bands in cb.ue_bands])
    unstable = False
    converged = False
    for s in range(1, max_iterations + 1):
        new_f2v = []
        for ns, users in enumerate(cb.band_ues):
            d = len(users)
            incoming = [state.v2f[u][ue_pos[u][ns]] for u in users]
            out = np.empty((d, T, n_c))
            for j in range(d):
                acc = ll[ns]
                for jj in range(d):
                    if jj != j:
                        acc = acc + _expand(incoming[jj], jj, d)
                axes = tuple(1 + a for a in range(d) if a != j)
                msg = logsumexp(acc, axis=axes) if axes else acc
                out[j], flag = _normalize(msg)
                unstable |= flag
            new_f2v.append(out)
        new_v2f = []
        for k, bands in enumerate(cb.ue_bands):
            out = np.empty((len(bands), T, n_c))
            for j, ns in enumerate(bands):
                acc = np.zeros((T, n_c))
                for other in bands:
                    if other != ns:
                        acc = acc + new_f2v[other][band_pos[other][k]]
                out[j], flag = _normalize(acc)
                unstable |= flag
            new_v2f.append(out)
        change = max(float(np.max(np.abs(a - b))) for a, b in zip(new_f2v, state.f2v))
        state = MessageState(f2v=new_f2v, v2f=new_v2f, iteration=s)
        if change < tolerance:
            converged = True
            break

    log_post = np.empty((cb.K, T, n_c))
    for k, bands in enumerate(cb.ue_bands):
        acc = sum(state.f2v[ns][band_pos[ns][k]] for ns in bands)
        log_post[k], flag = _normalize(acc)
        unstable |= flag
    if unstable:
        logger.warning("⚠️ Non-finite SCMA messages were renormalized")
    return DecodeResult(
        decisions=np.argmax(log_post, axis=-1), log_posteriors=log_post,
        bit_llrs=bit_llrs(log_post, cb.bits_per_symbol), iterations=state.iteration,
        converged=converged, unstable=unstable, state=state)


def ml_decode(y: np.ndarray, h: np.ndarray, N_0: float, cb: ScmaCodebook,
              max_hypotheses: int = 1 << 16) -> DecodeResult:
    """
    Exact joint ML decoding by enumerating all N_c^K codeword tuples.

    Raises:
        InstanceTooLargeError: when N_c^K exceeds max_hypotheses
    """
    n_hyp = cb.N_c ** cb.K
    if n_hyp > max_hypotheses:
        raise InstanceTooLargeError(f"{n_hyp} hypotheses exceed the limit of {max_hypotheses}")
    ll = band_log_likelihoods(y, h, N_0, cb)
    T = ll[0].shape[0]
    hyps = _tuples(cb.N_c, cb.K)
    total = np.zeros((T, n_hyp))
    for ns, users in enumerate(cb.band_ues):
        d = len(users)
        weights = cb.N_c ** np.arange(d - 1, -1, -1)
        flat = hyps[:, list(users)] @ weights
        total += ll[ns].reshape(T, -1)[:, flat]
    best = np.argmax(total, axis=1)
    log_post = np.empty((cb.K, T, cb.N_c))
    for k in range(cb.K):
        for c in range(cb.N_c):
            log_post[k, :, c] = logsumexp(total[:, hyps[:, k] == c], axis=1)
        log_post[k] -= logsumexp(log_post[k], axis=-1, keepdims=True)
    return DecodeResult(
        decisions=hyps[best].T.copy(), log_posteriors=log_post,
        bit_llrs=bit_llrs(log_post, cb.bits_per_symbol))
