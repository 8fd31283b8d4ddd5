# modules/datagen.py
"""
Synthetic molecule corpora with descriptor-formula endpoints.
One job: build reproducible donor and acceptor datasets without downloads.

Molecules are grown as random trees of C/N/O/S atoms with optional benzene
or pyridine units, written straight to SMILES, and deduplicated by a
structural key (radius-4 fingerprint plus formula).
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.datasets import Dataset, Record, RecordError, Task
from core.fingerprint import ecfp
from core.molgraph import DescriptorVector, MolecularGraph, SmilesError, compute_descriptors, parse_smiles
from utils.errors import GraftError

logger = logging.getLogger(__name__)

GENERATOR_PREFIX = 'gen:'

ATOM_VALENCE = {'C': 4, 'N': 3, 'O': 2, 'S': 2}
ATOM_WEIGHTS = (('C', 0.6), ('N', 0.15), ('O', 0.15), ('S', 0.1))
RING_TEMPLATES = {
    'benzene': ('c', 'c', 'c', 'c', 'c', 'c'),
    'pyridine': ('c', 'c', 'c', 'n', 'c', 'c'),
}
RING_SIZE = 6

FORMULAS: Dict[str, Callable[[DescriptorVector], float]] = {
    'donor_default': lambda d: 0.5 * d.molecular_weight / 100.0 + 1.0 * d.aromatic_rings,
    'acceptor_related': lambda d: (0.4 * d.molecular_weight / 100.0 + 0.8 * d.aromatic_rings
                                   + 0.5 * d.rotatable_bonds),
    'acceptor_unrelated': lambda d: float(d.hbd - d.hba),
}


class GenerationExhausted(GraftError, RuntimeError):
    """Could not reach the requested number of unique molecules"""


class UnknownFormula(GraftError, KeyError):
    """Endpoint formula name not in the registry"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ''


@dataclass(frozen=True)
class GenConfig:
    n_molecules: int = 2000
    max_heavy_atoms: int = 12
    seed: int = 0
    donor_target: str = 'donor_default'
    acceptor_target: str = 'acceptor_related'
    noise_sd: float = 0.0
    ring_probability: float = 0.25
    double_bond_probability: float = 0.15
    attempts_per_molecule: int = 50

    def __post_init__(self):
        if self.n_molecules < 1:
            raise ValueError(f"n_molecules must be >= 1, got {self.n_molecules}")
        if self.max_heavy_atoms < 1:
            raise ValueError(f"max_heavy_atoms must be >= 1, got {self.max_heavy_atoms}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")


@dataclass
class _Unit:
    """One atom or one aromatic six-ring in the growing tree"""
    element: Optional[str] = None
    ring: Optional[str] = None
    parent_order: int = 0
    free_slots: List[int] = field(default_factory=list)
    children: List[Tuple[int, int, '_Unit']] = field(default_factory=list)

    @property
    def is_ring(self) -> bool:
        return self.ring is not None

    @property
    def size(self) -> int:
        return RING_SIZE if self.is_ring else 1

    @property
    def free_valence(self) -> int:
        if self.is_ring:
            return len(self.free_slots)
        return ATOM_VALENCE[self.element] - self.parent_order - sum(order for _, order, _ in self.children)

    @property
    def is_hetero_atom(self) -> bool:
        return not self.is_ring and self.element != 'C'


def _new_atom(rng: np.random.Generator, carbon_only: bool) -> _Unit:
    if carbon_only:
        return _Unit(element='C')
    elements, weights = zip(*ATOM_WEIGHTS)
    return _Unit(element=elements[rng.choice(len(elements), p=np.array(weights))])


def _new_ring(rng: np.random.Generator, attached: bool) -> _Unit:
    name = 'pyridine' if rng.random() < 0.3 else 'benzene'
    template = RING_TEMPLATES[name]
    slots = [p for p, symbol in enumerate(template) if symbol == 'c' and not (attached and p == 0)]
    return _Unit(ring=name, free_slots=slots)


def _grow_tree(rng: np.random.Generator, cfg: GenConfig) -> _Unit:
    target = int(rng.integers(1, cfg.max_heavy_atoms + 1))
    if target >= RING_SIZE and rng.random() < cfg.ring_probability:
        root = _new_ring(rng, attached=False)
    else:
        root = _new_atom(rng, carbon_only=False)

    units = [root]
    size = root.size
    while size < target:
        parents = [unit for unit in units if unit.free_valence > 0]
        if not parents:
            break
        parent = parents[int(rng.integers(len(parents)))]
        remaining = target - size

        if remaining >= RING_SIZE and not parent.is_hetero_atom and rng.random() < cfg.ring_probability:
            child = _new_ring(rng, attached=True)
            order = 1
        else:
            child = _new_atom(rng, carbon_only=parent.is_hetero_atom)
            can_double = (
                not parent.is_ring
                and parent.free_valence >= 2
                and not (parent.is_hetero_atom and child.is_hetero_atom)
            )
            order = 2 if can_double and rng.random() < cfg.double_bond_probability else 1

        if parent.is_ring:
            slot = parent.free_slots.pop(int(rng.integers(len(parent.free_slots))))
        else:
            slot = 0
        child.parent_order = order
        parent.children.append((slot, order, child))
        units.append(child)
        size += child.size
    return root


def _ring_label(number: int) -> str:
    return str(number) if number < 10 else f"%{number:02d}"


def _render(unit: _Unit, ring_counter: List[int]) -> str:
    def bond_symbol(child: _Unit, order: int) -> str:
        if order == 2:
            return '='
        if unit.is_ring and child.is_ring:
            return '-'
        return ''

    if not unit.is_ring:
        parts = [unit.element]
        rendered = [bond_symbol(child, order) + _render(child, ring_counter) for _, order, child in unit.children]
        parts.extend(f"({text})" for text in rendered[:-1])
        if rendered:
            parts.append(rendered[-1])
        return ''.join(parts)

    ring_counter[0] += 1
    label = _ring_label(ring_counter[0])
    by_slot: Dict[int, List[str]] = {}
    for slot, order, child in unit.children:
        by_slot.setdefault(slot, []).append(bond_symbol(child, order) + _render(child, ring_counter))

    parts = []
    template = RING_TEMPLATES[unit.ring]
    last = len(template) - 1
    for position, symbol in enumerate(template):
        parts.append(symbol)
        if position in (0, last):
            parts.append(label)
        substituents = by_slot.get(position, [])
        if position == last and substituents:
            parts.extend(f"({text})" for text in substituents[:-1])
            parts.append(substituents[-1])
        else:
            parts.extend(f"({text})" for text in substituents)
    return ''.join(parts)


def structural_key(mol: MolecularGraph) -> Tuple[Tuple[Tuple[str, int], ...], Tuple[int, ...]]:
    """Formula plus radius-4 fingerprint; equal for the same structure written differently"""
    formula = Counter(atom.element for atom in mol.atoms)
    formula['H'] += sum(atom.total_h for atom in mol.atoms)
    return tuple(sorted(formula.items())), ecfp(mol, radius=4, n_bits=4096).on_bits


def generate_molecules(cfg: GenConfig) -> List[str]:
    """
    Random unique SMILES that parse under core.molgraph

    Args:
        cfg: Generator settings (size, seed, tree shape)

    Returns:
        cfg.n_molecules SMILES strings, deterministic per seed

    Raises:
        GenerationExhausted: uniqueness target not reached within the attempt budget
    """
    rng = np.random.default_rng(cfg.seed)
    seen = set()
    corpus: List[str] = []
    attempts = 0
    max_attempts = cfg.n_molecules * cfg.attempts_per_molecule

    while len(corpus) < cfg.n_molecules:
        if attempts >= max_attempts:
            raise GenerationExhausted(
                f"Only {len(corpus)} unique molecules after {attempts} attempts "
                f"(wanted {cfg.n_molecules}, max {cfg.max_heavy_atoms} heavy atoms)")
        attempts += 1
        smiles = _render(_grow_tree(rng, cfg), [0])
        key = structural_key(parse_smiles(smiles))
        if key in seen:
            continue
        seen.add(key)
        corpus.append(smiles)

    logger.info("Generated %d unique molecules in %d attempts (seed=%d)", len(corpus), attempts, cfg.seed)
    return corpus


def get_formula(name: str) -> Callable[[DescriptorVector], float]:
    try:
        return FORMULAS[name]
    except KeyError:
        raise UnknownFormula(f"Unknown formula {name!r}; available: {', '.join(sorted(FORMULAS))}")


def label_dataset(smiles: Sequence[str], formula: str, noise_sd: float = 0.0, seed: int = 0,
                  name: Optional[str] = None, ids: Optional[Sequence[str]] = None) -> Dataset:
    """
    Attach formula endpoints (plus optional Gaussian noise) to SMILES

    Args:
        smiles: Molecules to label
        formula: Registry name (donor_default, acceptor_related, acceptor_unrelated)
        noise_sd: Standard deviation of additive noise
        seed: Noise seed
        name: Dataset name (defaults to the formula name)
        ids: Record ids (defaults to mol-00001, mol-00002, ...)

    Returns:
        Regression Dataset
    """
    fn = get_formula(formula)
    if noise_sd < 0:
        raise ValueError(f"noise_sd must be >= 0, got {noise_sd}")
    ids = list(ids) if ids is not None else [f"mol-{i:05d}" for i in range(1, len(smiles) + 1)]
    noise = np.random.default_rng(seed).normal(0.0, noise_sd, size=len(smiles)) if noise_sd > 0 \
        else np.zeros(len(smiles))

    records = []
    for record_id, text, eps in zip(ids, smiles, noise):
        try:
            value = fn(compute_descriptors(parse_smiles(text)))
        except SmilesError as e:
            raise RecordError(record_id, e) from e
        records.append(Record(id=record_id, smiles=text, target=float(value + eps)))

    return Dataset(records=tuple(records), task=Task.REGRESSION, name=name or formula,
                   metadata={'formula': formula, 'noise_sd': repr(noise_sd), 'seed': str(seed)})


def parse_generator_spec(spec: str) -> Tuple[GenConfig, str]:
    """
    Read a 'gen:n=2000,seed=1,target=donor_default,noise=0,max_atoms=12' source

    Returns:
        (GenConfig, formula name)
    """
    if not spec.startswith(GENERATOR_PREFIX):
        raise ValueError(f"Generator spec must start with {GENERATOR_PREFIX!r}: {spec!r}")

    fields = {}
    for part in spec[len(GENERATOR_PREFIX):].split(','):
        if not part.strip():
            continue
        key, sep, value = part.partition('=')
        if not sep:
            raise ValueError(f"Bad generator field {part!r} in {spec!r}")
        fields[key.strip()] = value.strip()

    unknown = set(fields) - {'n', 'seed', 'target', 'noise', 'max_atoms'}
    if unknown:
        raise ValueError(f"Unknown generator field(s) {sorted(unknown)} in {spec!r}")

    target = fields.get('target', 'donor_default')
    get_formula(target)
    cfg = GenConfig(
        n_molecules=int(fields.get('n', 2000)),
        max_heavy_atoms=int(fields.get('max_atoms', 12)),
        seed=int(fields.get('seed', 0)),
        noise_sd=float(fields.get('noise', 0.0)),
        donor_target=target,
    )
    return cfg, target


def generate_dataset(spec: str, name: Optional[str] = None) -> Dataset:
    """Dataset for a 'gen:' source string"""
    cfg, target = parse_generator_spec(spec)
    smiles = generate_molecules(cfg)
    return label_dataset(smiles, target, noise_sd=cfg.noise_sd, seed=cfg.seed, name=name or target)
