import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import FormulaSyntaxError, UnknownElementError
from .periodic import ATOMIC_NUMBERS

_TOKEN = re.compile(r"\s*(?:([A-Z][a-z]?)|(\d+(?:\.\d+)?|\.\d+)|([()\[\]])|([·*]))")
_CLOSING = {"(": ")", "[": "]"}


@dataclass(frozen=True)
class Composition:
    """Composición de un compuesto: conteos por elemento y fracciones normalizadas."""

    formula: str
    terms: Tuple[Tuple[str, float], ...]
    weights: Dict[str, float]

    @property
    def symbols(self) -> Tuple[str, ...]:
        return tuple(symbol for symbol, _ in self.terms)

    def weight_vector(self, symbols: Sequence[str]) -> np.ndarray:
        """Pesos w_1..w_N alineados con el orden de `symbols`."""
        index = {s: i for i, s in enumerate(symbols)}
        vector = np.zeros(len(symbols))
        for symbol, weight in self.weights.items():
            if symbol not in index:
                raise UnknownElementError(f"'{symbol}' de {self.formula} no está en el conjunto de elementos.")
            vector[index[symbol]] = weight
        return vector


def _tokenize(formula: str) -> List[Tuple[str, str]]:
    tokens = []
    position = 0
    stripped = formula.rstrip()
    while position < len(stripped):
        match = _TOKEN.match(stripped, position)
        if not match or match.end() == position:
            raise FormulaSyntaxError(f"Carácter inválido en '{formula}' (posición {position}).")
        symbol, number, bracket, adduct = match.groups()
        if symbol:
            tokens.append(("element", symbol))
        elif number:
            tokens.append(("number", number))
        elif bracket:
            tokens.append(("bracket", bracket))
        else:
            tokens.append(("adduct", adduct))
        position = match.end()
    return tokens


class _FormulaParser:
    """Descenso recursivo sobre los tokens de una fórmula."""

    def __init__(self, formula: str, known_symbols: Optional[Iterable[str]]):
        self.formula = formula
        self.tokens = _tokenize(formula)
        self.position = 0
        self.known = set(known_symbols) if known_symbols is not None else None

    def _peek(self) -> Optional[Tuple[str, str]]:
        return self.tokens[self.position] if self.position < len(self.tokens) else None

    def _count(self) -> float:
        token = self._peek()
        if token and token[0] == "number":
            self.position += 1
            value = float(token[1])
            if value <= 0:
                raise FormulaSyntaxError(f"Conteo no positivo '{token[1]}' en '{self.formula}'.")
            return value
        return 1.0

    def parse(self) -> Dict[str, float]:
        if not self.tokens:
            raise FormulaSyntaxError("Fórmula vacía.")
        counts: Dict[str, float] = {}
        while True:
            multiplier = self._count()
            segment = self._sequence(closing=None)
            if not segment:
                raise FormulaSyntaxError(f"Segmento vacío en '{self.formula}'.")
            for symbol, count in segment.items():
                counts[symbol] = counts.get(symbol, 0.0) + multiplier * count
            token = self._peek()
            if token is None:
                return counts
            if token[0] == "adduct":
                self.position += 1
                continue
            raise FormulaSyntaxError(f"Token inesperado '{token[1]}' en '{self.formula}'.")

    def _sequence(self, closing: Optional[str]) -> Dict[str, float]:
        counts: Dict[str, float] = {}
        while True:
            token = self._peek()
            if token is None or token[0] == "adduct":
                if closing is not None:
                    raise FormulaSyntaxError(f"Paréntesis sin cerrar en '{self.formula}'.")
                return counts
            kind, value = token
            if kind == "element":
                self.position += 1
                self._check_symbol(value)
                count = self._count()
                counts[value] = counts.get(value, 0.0) + count
            elif kind == "bracket" and value in _CLOSING:
                self.position += 1
                inner = self._sequence(closing=_CLOSING[value])
                if not inner:
                    raise FormulaSyntaxError(f"Grupo vacío en '{self.formula}'.")
                count = self._count()
                for symbol, inner_count in inner.items():
                    counts[symbol] = counts.get(symbol, 0.0) + inner_count * count
            elif kind == "bracket":
                if value != closing:
                    raise FormulaSyntaxError(f"Paréntesis desbalanceados en '{self.formula}'.")
                self.position += 1
                return counts
            else:
                raise FormulaSyntaxError(f"Número fuera de lugar '{value}' en '{self.formula}'.")

    def _check_symbol(self, symbol: str) -> None:
        if symbol not in ATOMIC_NUMBERS:
            raise UnknownElementError(f"Símbolo desconocido '{symbol}' en '{self.formula}'.")
        if self.known is not None and symbol not in self.known:
            raise UnknownElementError(f"'{symbol}' no pertenece al conjunto de elementos de la tabla.")


def parse_formula(formula: str, known_symbols: Optional[Iterable[str]] = None) -> Composition:
    """
    Convierte una fórmula química en una composición normalizada.

    Soporta paréntesis y corchetes anidados, conteos fraccionarios y aductos de hidratos
    ("CuSO4·5H2O" o "CuSO4*5H2O").

    Examples:
        "H2O" → {H: 2/3, O: 1/3}
        "Ca(OH)2" → {Ca: 0.2, O: 0.4, H: 0.4}
    """
    if not isinstance(formula, str):
        raise FormulaSyntaxError(f"La fórmula debe ser texto, se recibió {type(formula).__name__}.")
    counts = _FormulaParser(formula, known_symbols).parse()
    total = sum(counts.values())
    terms = tuple(counts.items())
    weights = {symbol: count / total for symbol, count in terms}
    return Composition(formula=formula.strip(), terms=terms, weights=weights)
