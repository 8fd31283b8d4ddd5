# core/molgraph.py
"""
SMILES parsing into molecular graphs and the descriptors used as splitting properties.
One job: turn a SMILES string into a validated, immutable graph and describe it.

Supported subset: organic-subset atoms, bracket atoms (isotope and chirality
ignored, charge and explicit H kept), branches, ring closures including %nn,
bond symbols - = # : and the ignored stereo bonds / \\.
Aromaticity is taken from lowercase notation as written.
"""

import enum
import logging
import re
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Dict, FrozenSet, List, Optional, Tuple

import networkx as nx
import numpy as np

from utils.errors import GraftError

logger = logging.getLogger(__name__)

ELEMENTS: Tuple[str, ...] = ('B', 'C', 'N', 'O', 'P', 'S', 'F', 'Cl', 'Br', 'I')
AROMATIC_ELEMENTS = {'b': 'B', 'c': 'C', 'n': 'N', 'o': 'O', 'p': 'P', 's': 'S'}

# Allowed valences of the uncharged organic subset, ascending
VALENCES: Dict[str, Tuple[int, ...]] = {
    'B': (3,), 'C': (4,), 'N': (3, 5), 'O': (2,), 'P': (3, 5), 'S': (2, 4, 6),
    'F': (1,), 'Cl': (1,), 'Br': (1,), 'I': (1,),
}

# Standard atomic weights (g/mol)
ATOMIC_WEIGHTS: Dict[str, float] = {
    'H': 1.008, 'B': 10.812, 'C': 12.011, 'N': 14.007, 'O': 15.999,
    'F': 18.998, 'P': 30.974, 'S': 32.067, 'Cl': 35.453, 'Br': 79.904, 'I': 126.904,
}

MAX_DEGREE = 4
FEATURE_DIM = len(ELEMENTS) + (MAX_DEGREE + 1) + 3
HYDROGEN_SCALE = 1.0

DESCRIPTOR_NAMES: Tuple[str, ...] = (
    'molecular_weight', 'aromatic_rings', 'rotatable_bonds',
    'hba', 'hbd', 'heterocycles', 'tpsa',
)


class SmilesError(GraftError, ValueError):
    """Base class for SMILES parsing failures"""

    def __init__(self, message: str, smiles: str = ''):
        self.smiles = smiles
        super().__init__(f"{message} in {smiles!r}" if smiles else message)


class UnclosedRing(SmilesError):
    """A ring-bond digit was opened but never paired"""


class UnbalancedParenthesis(SmilesError):
    """Branch parentheses do not match"""


class UnsupportedElement(SmilesError):
    """Atom symbol outside the supported element set"""


class ValenceError(SmilesError):
    """Bond order sum exceeds the element's maximum valence"""


class MultiFragmentError(SmilesError):
    """Dot-disconnected SMILES are not accepted"""


class SmilesSyntaxError(SmilesError):
    """Any other malformed input"""


class DegreeOverflow(GraftError, ValueError):
    """An atom has more heavy-atom neighbours than the featurizer encodes"""


class BondOrder(enum.Enum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence(self) -> int:
        """Contribution to the bond-order sum (aromatic bonds count 1)"""
        return 1 if self is BondOrder.AROMATIC else self.value


BOND_SYMBOLS = {
    '-': BondOrder.SINGLE, '/': BondOrder.SINGLE, '\\': BondOrder.SINGLE,
    '=': BondOrder.DOUBLE, '#': BondOrder.TRIPLE, ':': BondOrder.AROMATIC,
}


@dataclass(frozen=True)
class Atom:
    """Heavy atom of a parsed molecule"""
    element: str
    is_aromatic: bool = False
    formal_charge: int = 0
    explicit_h: Optional[int] = None
    implicit_h: int = 0
    degree: int = 0

    @property
    def total_h(self) -> int:
        return self.implicit_h + (self.explicit_h or 0)


@dataclass(frozen=True)
class Bond:
    """Bond between two heavy atoms"""
    begin: int
    end: int
    order: BondOrder
    in_ring: bool = False

    @property
    def endpoints(self) -> Tuple[int, int]:
        return self.begin, self.end

    def other(self, index: int) -> int:
        return self.end if index == self.begin else self.begin


@dataclass(frozen=True)
class MolecularGraph:
    """Validated, connected molecular graph with implicit hydrogens"""
    atoms: Tuple[Atom, ...]
    bonds: Tuple[Bond, ...]
    rings: Tuple[Tuple[int, ...], ...]
    source_smiles: str = ''

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @cached_property
    def incident_bonds(self) -> Tuple[Tuple[int, ...], ...]:
        """Bond indices touching each atom"""
        incident: List[List[int]] = [[] for _ in self.atoms]
        for index, bond in enumerate(self.bonds):
            incident[bond.begin].append(index)
            incident[bond.end].append(index)
        return tuple(tuple(bonds) for bonds in incident)

    @cached_property
    def ring_atoms(self) -> FrozenSet[int]:
        return frozenset(i for ring in self.rings for i in ring)

    def neighbors(self, index: int) -> List[int]:
        return [self.bonds[b].other(index) for b in self.incident_bonds[index]]

    def in_ring_of_size(self, index: int, size: int) -> bool:
        return any(len(ring) == size and index in ring for ring in self.rings)


@dataclass(frozen=True)
class DescriptorVector:
    """The seven splitting properties of one molecule"""
    molecular_weight: float
    aromatic_rings: int
    rotatable_bonds: int
    hba: int
    hbd: int
    heterocycles: int
    tpsa: float

    def value(self, name: str) -> float:
        if name not in DESCRIPTOR_NAMES:
            raise KeyError(f"Unknown descriptor: {name}")
        return float(getattr(self, name))

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


# ---------------------------------------------------------------------------
# Parsing

_BRACKET_RE = re.compile(
    r'^(?P<isotope>\d+)?'
    r'(?P<symbol>[A-Z][a-z]?|[a-z]{1,2})'
    r'(?P<chiral>@{1,2}(?:TH|AL|SP|TB|OH)?\d*)?'
    r'(?P<hcount>H\d*)?'
    r'(?P<charge>\++\d*|-+\d*)?'
    r'(?::\d+)?$'
)


@dataclass
class _RawAtom:
    element: str
    aromatic: bool
    charge: int = 0
    explicit_h: Optional[int] = None


def _parse_bracket(body: str, smiles: str) -> _RawAtom:
    match = _BRACKET_RE.match(body)
    if not match:
        raise SmilesSyntaxError(f"Malformed bracket atom [{body}]", smiles)

    symbol = match.group('symbol')
    if symbol in AROMATIC_ELEMENTS:
        element, aromatic = AROMATIC_ELEMENTS[symbol], True
    elif symbol in ELEMENTS:
        element, aromatic = symbol, False
    else:
        raise UnsupportedElement(f"Unsupported element {symbol!r}", smiles)

    hcount = match.group('hcount')
    explicit_h = 0
    if hcount:
        explicit_h = int(hcount[1:]) if len(hcount) > 1 else 1

    charge = 0
    charge_text = match.group('charge')
    if charge_text:
        sign = 1 if charge_text[0] == '+' else -1
        digits = charge_text.lstrip('+-')
        charge = sign * (int(digits) if digits else len(charge_text))

    return _RawAtom(element=element, aromatic=aromatic, charge=charge, explicit_h=explicit_h)


def _allowed_valences(element: str, charge: int) -> Tuple[int, ...]:
    base = VALENCES[element]
    if charge == 0:
        return base
    if element in ('N', 'P', 'O', 'S'):
        shifted = tuple(v + charge for v in base)
    elif element == 'B':
        shifted = tuple(v - charge for v in base)
    else:
        shifted = tuple(v - abs(charge) for v in base)
    shifted = tuple(v for v in shifted if v >= 0)
    return shifted or (0,)


def parse_smiles(smiles: str) -> MolecularGraph:
    """
    Parse a SMILES string into a validated molecular graph

    Args:
        smiles: SMILES text in the supported subset

    Returns:
        MolecularGraph with implicit hydrogens, ring flags and cycle basis

    Raises:
        UnclosedRing, UnbalancedParenthesis, UnsupportedElement,
        ValenceError, MultiFragmentError, SmilesSyntaxError
    """
    if not isinstance(smiles, str) or not smiles.strip():
        raise SmilesSyntaxError("Empty SMILES")
    smiles = smiles.strip()

    raw_atoms: List[_RawAtom] = []
    bond_map: Dict[Tuple[int, int], BondOrder] = {}
    bond_list: List[Tuple[int, int]] = []
    branch_stack: List[int] = []
    ring_open: Dict[int, Tuple[int, Optional[str]]] = {}
    previous: Optional[int] = None
    pending: Optional[str] = None

    def add_bond(a: int, b: int, symbol: Optional[str]) -> None:
        if a == b:
            raise SmilesSyntaxError("Ring closure bonds an atom to itself", smiles)
        key = (min(a, b), max(a, b))
        if key in bond_map:
            raise SmilesSyntaxError(f"Duplicate bond between atoms {a} and {b}", smiles)
        if symbol is None:
            both_aromatic = raw_atoms[a].aromatic and raw_atoms[b].aromatic
            order = BondOrder.AROMATIC if both_aromatic else BondOrder.SINGLE
        else:
            order = BOND_SYMBOLS[symbol]
        bond_map[key] = order
        bond_list.append(key)

    def add_atom(atom: _RawAtom) -> None:
        nonlocal previous, pending
        raw_atoms.append(atom)
        index = len(raw_atoms) - 1
        if previous is not None:
            add_bond(previous, index, pending)
        elif pending is not None:
            raise SmilesSyntaxError("Bond symbol before the first atom", smiles)
        pending = None
        previous = index

    i = 0
    n = len(smiles)
    while i < n:
        ch = smiles[i]

        if ch == '[':
            close = smiles.find(']', i)
            if close < 0:
                raise SmilesSyntaxError("Unterminated bracket atom", smiles)
            add_atom(_parse_bracket(smiles[i + 1:close], smiles))
            i = close + 1
            continue

        if smiles.startswith(('Cl', 'Br'), i):
            add_atom(_RawAtom(element=smiles[i:i + 2], aromatic=False))
            i += 2
            continue

        if ch in ELEMENTS:
            add_atom(_RawAtom(element=ch, aromatic=False))
        elif ch in AROMATIC_ELEMENTS:
            add_atom(_RawAtom(element=AROMATIC_ELEMENTS[ch], aromatic=True))
        elif ch.isalpha() or ch == '*':
            raise UnsupportedElement(f"Unsupported element {ch!r}", smiles)
        elif ch == '(':
            if previous is None:
                raise SmilesSyntaxError("Branch opened before any atom", smiles)
            branch_stack.append(previous)
        elif ch == ')':
            if not branch_stack:
                raise UnbalancedParenthesis("Unmatched ')'", smiles)
            if pending is not None:
                raise SmilesSyntaxError("Dangling bond symbol before ')'", smiles)
            previous = branch_stack.pop()
        elif ch in BOND_SYMBOLS:
            if pending is not None:
                raise SmilesSyntaxError("Two consecutive bond symbols", smiles)
            pending = ch
        elif ch.isdigit() or ch == '%':
            if ch == '%':
                digits = smiles[i + 1:i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise SmilesSyntaxError("'%' must be followed by two digits", smiles)
                ring_number = int(digits)
                i += 2
            else:
                ring_number = int(ch)
            if previous is None:
                raise SmilesSyntaxError("Ring closure before any atom", smiles)

            if ring_number in ring_open:
                partner, opening_symbol = ring_open.pop(ring_number)
                symbol = pending
                if opening_symbol is not None and symbol is not None \
                        and BOND_SYMBOLS[opening_symbol] != BOND_SYMBOLS[symbol]:
                    raise SmilesSyntaxError(f"Conflicting bond orders on ring closure {ring_number}", smiles)
                add_bond(partner, previous, symbol if symbol is not None else opening_symbol)
            else:
                ring_open[ring_number] = (previous, pending)
            pending = None
        elif ch == '.':
            raise MultiFragmentError("Disconnected fragments are not supported", smiles)
        else:
            raise SmilesSyntaxError(f"Unexpected character {ch!r}", smiles)
        i += 1

    if branch_stack:
        raise UnbalancedParenthesis("Unclosed '('", smiles)
    if ring_open:
        raise UnclosedRing(f"Ring bond(s) {sorted(ring_open)} never closed", smiles)
    if pending is not None:
        raise SmilesSyntaxError("Trailing bond symbol", smiles)
    if not raw_atoms:
        raise SmilesSyntaxError("No atoms", smiles)

    return _build_graph(raw_atoms, bond_list, bond_map, smiles)


def _build_graph(raw_atoms: List[_RawAtom], bond_list: List[Tuple[int, int]],
                 bond_map: Dict[Tuple[int, int], BondOrder], smiles: str) -> MolecularGraph:
    graph = nx.Graph()
    graph.add_nodes_from(range(len(raw_atoms)))
    graph.add_edges_from(bond_list)

    rings = tuple(tuple(cycle) for cycle in nx.cycle_basis(graph, 0))
    ring_atoms = {i for ring in rings for i in ring}
    bridges = {(min(a, b), max(a, b)) for a, b in nx.bridges(graph)}
    # a link between two aromatic rings is a plain single bond
    bond_map = {key: BondOrder.SINGLE if order is BondOrder.AROMATIC and key in bridges else order
                for key, order in bond_map.items()}

    order_sum = [0] * len(raw_atoms)
    degree = [0] * len(raw_atoms)
    for a, b in bond_list:
        contribution = bond_map[(a, b)].valence
        for index in (a, b):
            order_sum[index] += contribution
            degree[index] += 1

    atoms = []
    for index, raw in enumerate(raw_atoms):
        if raw.aromatic and index not in ring_atoms:
            raise SmilesSyntaxError(f"Aromatic atom {index} ({raw.element.lower()}) outside any ring", smiles)

        allowed = _allowed_valences(raw.element, raw.charge)
        bond_sum = order_sum[index]

        if raw.explicit_h is not None:
            if bond_sum + raw.explicit_h > allowed[-1]:
                raise ValenceError(
                    f"Atom {index} ({raw.element}) has valence {bond_sum + raw.explicit_h} > {allowed[-1]}", smiles)
            implicit_h = 0
        else:
            if bond_sum > allowed[-1]:
                raise ValenceError(f"Atom {index} ({raw.element}) has valence {bond_sum} > {allowed[-1]}", smiles)
            if raw.aromatic:
                implicit_h = max(0, allowed[0] - 1 - bond_sum)
            else:
                target = next(v for v in allowed if v >= bond_sum)
                implicit_h = target - bond_sum

        atoms.append(Atom(
            element=raw.element,
            is_aromatic=raw.aromatic,
            formal_charge=raw.charge,
            explicit_h=raw.explicit_h,
            implicit_h=implicit_h,
            degree=degree[index],
        ))

    bonds = tuple(
        Bond(begin=a, end=b, order=bond_map[(a, b)], in_ring=(a, b) not in bridges)
        for a, b in bond_list
    )
    return MolecularGraph(atoms=tuple(atoms), bonds=bonds, rings=rings, source_smiles=smiles)


# ---------------------------------------------------------------------------
# Descriptors

def molecular_weight(mol: MolecularGraph) -> float:
    """Average molecular weight including hydrogens"""
    return sum(ATOMIC_WEIGHTS[atom.element] + atom.total_h * ATOMIC_WEIGHTS['H'] for atom in mol.atoms)


def _tpsa_contribution(mol: MolecularGraph, index: int) -> float:
    """Polar surface contribution of one N or O atom (Ertl fragment table)"""
    atom = mol.atoms[index]
    n_h = atom.total_h
    charge = atom.formal_charge
    neighbors = atom.degree
    n_single = n_double = n_triple = n_aromatic = 0
    for bond_index in mol.incident_bonds[index]:
        order = mol.bonds[bond_index].order
        if order is BondOrder.AROMATIC:
            n_aromatic += 1
        elif order is BondOrder.SINGLE:
            n_single += 1
        elif order is BondOrder.DOUBLE:
            n_double += 1
        else:
            n_triple += 1
    in_3_ring = mol.in_ring_of_size(index, 3)

    value = -1.0
    if atom.element == 'N':
        if neighbors == 1:
            if n_h == 0 and n_triple == 1 and charge == 0:
                value = 23.79
            elif n_h == 1 and n_double == 1 and charge == 0:
                value = 23.85
            elif n_h == 2 and n_single == 1 and charge == 0:
                value = 26.02
            elif n_h == 2 and n_double == 1 and charge == 1:
                value = 25.59
            elif n_h == 3 and n_single == 1 and charge == 1:
                value = 27.64
        elif neighbors == 2:
            if n_h == 0 and n_single == 1 and n_double == 1 and charge == 0:
                value = 12.36
            elif n_h == 0 and n_triple == 1 and n_double == 1 and charge == 0:
                value = 13.60
            elif n_h == 1 and n_single == 2 and charge == 0:
                value = 21.94 if in_3_ring else 12.03
            elif n_h == 0 and n_triple == 1 and n_single == 1 and charge == 1:
                value = 4.36
            elif n_h == 1 and n_double == 1 and n_single == 1 and charge == 1:
                value = 13.97
            elif n_h == 2 and n_single == 2 and charge == 1:
                value = 16.61
            elif n_h == 0 and n_aromatic == 2 and charge == 0:
                value = 12.89
            elif n_h == 1 and n_aromatic == 2 and charge == 0:
                value = 15.79
            elif n_h == 1 and n_aromatic == 2 and charge == 1:
                value = 14.14
        elif neighbors == 3:
            if n_h == 0 and n_single == 3 and charge == 0:
                value = 3.01 if in_3_ring else 3.24
            elif n_h == 0 and n_single == 1 and n_double == 2 and charge == 0:
                value = 11.68
            elif n_h == 0 and n_single == 2 and n_double == 1 and charge == 1:
                value = 3.01
            elif n_h == 1 and n_single == 3 and charge == 1:
                value = 4.44
            elif n_h == 0 and n_aromatic == 3 and charge == 0:
                value = 4.41
            elif n_h == 0 and n_single == 1 and n_aromatic == 2 and charge == 0:
                value = 4.93
            elif n_h == 0 and n_double == 1 and n_aromatic == 2 and charge == 0:
                value = 8.39
            elif n_h == 0 and n_aromatic == 3 and charge == 1:
                value = 4.10
            elif n_h == 0 and n_single == 1 and n_aromatic == 2 and charge == 1:
                value = 3.88
        elif neighbors == 4:
            if n_h == 0 and n_single == 4 and charge == 1:
                value = 0.0
        if value < 0.0:
            value = max(0.0, 30.5 - neighbors * 8.2 + n_h * 1.5)

    elif atom.element == 'O':
        if neighbors == 1:
            if n_h == 0 and n_double == 1 and charge == 0:
                value = 17.07
            elif n_h == 1 and n_single == 1 and charge == 0:
                value = 20.23
            elif n_h == 0 and n_single == 1 and charge == -1:
                value = 23.06
        elif neighbors == 2:
            if n_h == 0 and n_single == 2 and charge == 0:
                value = 12.53 if in_3_ring else 9.23
            elif n_h == 0 and n_aromatic == 2 and charge == 0:
                value = 13.14
        if value < 0.0:
            value = max(0.0, 28.5 - neighbors * 8.6 + n_h * 1.5)

    else:
        value = 0.0
    return value


def topological_polar_surface_area(mol: MolecularGraph) -> float:
    """TPSA from N and O contributions only"""
    return sum(_tpsa_contribution(mol, i) for i, atom in enumerate(mol.atoms) if atom.element in ('N', 'O'))


def is_rotatable(mol: MolecularGraph, bond: Bond) -> bool:
    """Acyclic single bond between two atoms of heavy degree >= 2"""
    return (
        bond.order is BondOrder.SINGLE
        and not bond.in_ring
        and mol.atoms[bond.begin].degree >= 2
        and mol.atoms[bond.end].degree >= 2
    )


def compute_descriptors(mol: MolecularGraph) -> DescriptorVector:
    """
    Compute the seven splitting-property descriptors

    Ring counts use the cycle basis: aromatic rings have every atom aromatic,
    heterocycles contain at least one non-carbon atom.
    """
    aromatic_rings = sum(1 for ring in mol.rings if all(mol.atoms[i].is_aromatic for i in ring))
    heterocycles = sum(1 for ring in mol.rings if any(mol.atoms[i].element != 'C' for i in ring))
    rotatable = sum(1 for bond in mol.bonds if is_rotatable(mol, bond))
    hba = sum(1 for atom in mol.atoms if atom.element in ('N', 'O'))
    hbd = sum(1 for atom in mol.atoms if atom.element in ('N', 'O') and atom.total_h > 0)

    return DescriptorVector(
        molecular_weight=molecular_weight(mol),
        aromatic_rings=aromatic_rings,
        rotatable_bonds=rotatable,
        hba=hba,
        hbd=hbd,
        heterocycles=heterocycles,
        tpsa=topological_polar_surface_area(mol),
    )


def descriptors_from_smiles(smiles: str) -> DescriptorVector:
    return compute_descriptors(parse_smiles(smiles))


# ---------------------------------------------------------------------------
# Featurization

def atom_feature_matrix(mol: MolecularGraph) -> np.ndarray:
    """
    Per-atom input features for the graph network

    Columns: element one-hot (10) | degree one-hot 0-4 (5) | hydrogen count
    (1) | aromatic flag (1) | formal charge (1).

    Raises:
        DegreeOverflow: an atom has more than four heavy neighbours
    """
    features = np.zeros((mol.n_atoms, FEATURE_DIM), dtype=np.float64)
    degree_offset = len(ELEMENTS)
    tail = degree_offset + MAX_DEGREE + 1

    for row, atom in enumerate(mol.atoms):
        if atom.degree > MAX_DEGREE:
            raise DegreeOverflow(f"Atom {row} ({atom.element}) has degree {atom.degree} > {MAX_DEGREE}")
        features[row, ELEMENTS.index(atom.element)] = 1.0
        features[row, degree_offset + atom.degree] = 1.0
        features[row, tail] = atom.total_h * HYDROGEN_SCALE
        features[row, tail + 1] = 1.0 if atom.is_aromatic else 0.0
        features[row, tail + 2] = float(atom.formal_charge)
    return features
