"""Problem instances: the JSON matrix format and seeded random generators."""
from __future__ import annotations

import json

import numpy as np

from .errors import DimensionMismatch, ValidationError


def matrix_to_json(M) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in M]


def matrix_from_json(rows, n: int, name: str) -> np.ndarray:
    try:
        M = np.array([[complex(v[0], v[1]) for v in row] for row in rows], dtype=complex)
    except (TypeError, IndexError, ValueError) as exc:
        raise ValidationError(f"{name}: entries must be [re, im] pairs") from exc
    if M.shape != (n, n):
        raise DimensionMismatch(f"{name} has shape {M.shape}, expected ({n}, {n})")
    return M


def instance_to_json(A, B) -> dict:
    A = np.asarray(A, dtype=complex)
    return {"n": int(A.shape[0]), "A": matrix_to_json(A), "B": matrix_to_json(B)}


def instance_from_json(data: dict):
    """``(A, B)`` as complex arrays; raises :class:`ValidationError` on malformed input."""
    if not isinstance(data, dict) or not {"n", "A", "B"} <= data.keys():
        raise ValidationError('instance must be an object with keys "n", "A", "B"')
    n = data["n"]
    if not isinstance(n, int) or n < 1:
        raise ValidationError("n must be a positive integer")
    return matrix_from_json(data["A"], n, "A"), matrix_from_json(data["B"], n, "B")


def load_instance(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_json(data)


def dump_instance(A, B) -> str:
    return json.dumps(instance_to_json(A, B), indent=1, sort_keys=True) + "\n"


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    """Hermitian matrix with ``|entry| <= scale`` (real and imaginary parts uniform)."""
    G = rng.uniform(-1, 1, size=(n, n)) + 1j * rng.uniform(-1, 1, size=(n, n))
    return scale * (G + G.conj().T) / 2


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    H = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, R = np.linalg.qr(H)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_spectrum(rng: np.random.Generator, n: int, min_gap: float = 0.3, max_gap: float = 0.7, offset: float = 0.3):
    return offset + np.cumsum(rng.uniform(min_gap, max_gap, size=n))


def random_instance(seed: int, n: int, commuting: bool = False):
    """Seeded ``(A, B)``; ``B = G G^dagger`` with ``G = U diag(sqrt(b))`` and eigenvalue gaps >= 0.3.

    Commuting instances are diagonal.  Entries of ``A`` are bounded by 1 in
    modulus, well inside the ``||A||_max <= 2`` regime the tests assume.
    """
    rng = np.random.default_rng(seed)
    b = random_spectrum(rng, n)
    if commuting:
        A = np.diag(rng.uniform(-1, 1, size=n)).astype(complex)
        return A, np.diag(b).astype(complex)
    A = random_hermitian(rng, n) / np.sqrt(2)
    G = random_unitary(rng, n) * np.sqrt(b)
    B = G @ G.conj().T
    return A, (B + B.conj().T) / 2
