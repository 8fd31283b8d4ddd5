# core/fingerprint.py
"""
Hashed circular (ECFP-style) fingerprints and Tanimoto distances.

Identifiers come from a seedless 64-bit BLAKE2b digest of integer tuples, so
bit positions are reproducible across machines. They are not meant to match
other ECFP implementations bit for bit.
"""

import hashlib
import logging
import struct
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np

from core.molgraph import ELEMENTS, MolecularGraph
from utils.errors import GraftError

logger = logging.getLogger(__name__)

DEFAULT_N_BITS = 2048
ECFP4_RADIUS = 2
ECFP6_RADIUS = 3
MAX_RADIUS = 4
MIN_N_BITS = 64

_MASK64 = (1 << 64) - 1


class LengthMismatch(GraftError, ValueError):
    """Fingerprints of different width or radius were compared"""


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-width bit vector of circular substructure features"""
    bits: np.ndarray
    radius: int

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        bits.setflags(write=False)
        object.__setattr__(self, 'bits', bits)
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")

    @property
    def n_bits(self) -> int:
        return int(self.bits.shape[0])

    @property
    def n_set(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def on_bits(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.bits))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return self.radius == other.radius and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.radius, self.on_bits))


def stable_hash(values: Iterable[int]) -> int:
    """Seedless 64-bit hash of a sequence of integers"""
    packed = b''.join(struct.pack('<Q', value & _MASK64) for value in values)
    return int.from_bytes(hashlib.blake2b(packed, digest_size=8).digest(), 'little')


def _initial_identifier(mol: MolecularGraph, index: int) -> int:
    atom = mol.atoms[index]
    return stable_hash((
        ELEMENTS.index(atom.element),
        atom.degree,
        atom.total_h,
        atom.formal_charge,
        int(atom.is_aromatic),
    ))


def environment_features(mol: MolecularGraph, radius: int) -> List[Tuple[int, int]]:
    """
    Enumerate unique circular environments up to a radius

    Returns:
        (radius, identifier) for every emitted feature, in emission order.
        A feature whose covered atom and bond sets were already emitted is
        skipped; within one iteration the smaller identifier wins.
    """
    n = mol.n_atoms
    identifiers = [_initial_identifier(mol, i) for i in range(n)]
    atom_cover: List[FrozenSet[int]] = [frozenset((i,)) for i in range(n)]
    bond_cover: List[FrozenSet[int]] = [frozenset() for _ in range(n)]

    seen = set()
    emitted: List[Tuple[int, int]] = []
    for i in range(n):
        seen.add((atom_cover[i], bond_cover[i]))
        emitted.append((0, identifiers[i]))

    for level in range(1, radius + 1):
        new_identifiers = []
        new_atom_cover = []
        new_bond_cover = []
        for i in range(n):
            pairs = []
            atoms = set(atom_cover[i])
            bonds = set(bond_cover[i])
            for bond_index in mol.incident_bonds[i]:
                bond = mol.bonds[bond_index]
                j = bond.other(i)
                pairs.append((bond.order.value, identifiers[j]))
                atoms |= atom_cover[j]
                bonds |= bond_cover[j]
                bonds.add(bond_index)
            pairs.sort()
            flat = [level, identifiers[i]]
            for order, neighbor_id in pairs:
                flat.extend((order, neighbor_id))
            new_identifiers.append(stable_hash(flat))
            new_atom_cover.append(frozenset(atoms))
            new_bond_cover.append(frozenset(bonds))

        candidates: Dict[Tuple[FrozenSet[int], FrozenSet[int]], int] = {}
        for i in range(n):
            key = (new_atom_cover[i], new_bond_cover[i])
            if key in seen:
                continue
            if key not in candidates or new_identifiers[i] < candidates[key]:
                candidates[key] = new_identifiers[i]

        for key, identifier in sorted(candidates.items(), key=lambda item: item[1]):
            seen.add(key)
            emitted.append((level, identifier))

        identifiers = new_identifiers
        atom_cover = new_atom_cover
        bond_cover = new_bond_cover

    return emitted


def ecfp(mol: MolecularGraph, radius: int = ECFP4_RADIUS, n_bits: int = DEFAULT_N_BITS) -> Fingerprint:
    """
    Folded circular fingerprint

    Args:
        mol: Parsed molecule
        radius: Neighbourhood radius (2 for ECFP4, 3 for ECFP6), 0..4
        n_bits: Power of two >= 64

    Returns:
        Fingerprint with one bit per folded feature identifier
    """
    if not 0 <= radius <= MAX_RADIUS:
        raise ValueError(f"radius must be in [0, {MAX_RADIUS}], got {radius}")
    if n_bits < MIN_N_BITS or n_bits & (n_bits - 1):
        raise ValueError(f"n_bits must be a power of two >= {MIN_N_BITS}, got {n_bits}")

    bits = np.zeros(n_bits, dtype=bool)
    for _, identifier in environment_features(mol, radius):
        bits[identifier % n_bits] = True
    return Fingerprint(bits=bits, radius=radius)


def _check_compatible(a: Fingerprint, b: Fingerprint) -> None:
    if a.n_bits != b.n_bits or a.radius != b.radius:
        raise LengthMismatch(
            f"Cannot compare fingerprints ({a.n_bits} bits, r={a.radius}) and ({b.n_bits} bits, r={b.radius})")


def tanimoto_distance(a: Fingerprint, b: Fingerprint) -> float:
    """1 - |a AND b| / |a OR b|; 0 when both are empty"""
    _check_compatible(a, b)
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 0.0
    return 1.0 - np.count_nonzero(a.bits & b.bits) / union


def fingerprint_matrix(fps: Sequence[Fingerprint]) -> np.ndarray:
    """Stack fingerprints into an (n, n_bits) float64 0/1 matrix"""
    if not fps:
        return np.zeros((0, DEFAULT_N_BITS))
    first = fps[0]
    for fp in fps[1:]:
        _check_compatible(first, fp)
    return np.vstack([fp.bits for fp in fps]).astype(np.float64)


def tanimoto_distance_matrix(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """
    Pairwise Tanimoto distances between rows of two 0/1 matrices

    Empty-vs-empty pairs get distance 0, matching tanimoto_distance.
    """
    if left.shape[1] != right.shape[1]:
        raise LengthMismatch(f"Bit widths differ: {left.shape[1]} vs {right.shape[1]}")
    intersection = left @ right.T
    counts_left = left.sum(axis=1)[:, None]
    counts_right = right.sum(axis=1)[None, :]
    union = counts_left + counts_right - intersection
    with np.errstate(divide='ignore', invalid='ignore'):
        similarity = np.where(union > 0, intersection / np.where(union > 0, union, 1.0), 1.0)
    return 1.0 - similarity
