"""Datos mínimos de la tabla periódica estándar: símbolo, número atómico, periodo y grupo."""

from typing import Dict

SYMBOLS = (
    "H", "He",
    "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar",
    "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy",
    "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt",
    "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn",
    "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf",
    "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
)

ATOMIC_NUMBERS: Dict[str, int] = {symbol: z for z, symbol in enumerate(SYMBOLS, start=1)}

# Último número atómico de cada periodo
_PERIOD_ENDS = (2, 10, 18, 36, 54, 86, 118)


def period_of(atomic_number: int) -> int:
    """Periodo (fila) del elemento en la tabla estándar."""
    if not 1 <= atomic_number <= 118:
        raise ValueError(f"Número atómico fuera de rango: {atomic_number}")
    for period, last in enumerate(_PERIOD_ENDS, start=1):
        if atomic_number <= last:
            return period
    raise ValueError(f"Número atómico fuera de rango: {atomic_number}")


def group_of(atomic_number: int) -> int:
    """Grupo (columna 1-18); lantánidos y actínidos se ubican en el grupo 3."""
    period = period_of(atomic_number)
    if period == 1:
        return 1 if atomic_number == 1 else 18
    start = _PERIOD_ENDS[period - 2] + 1
    position = atomic_number - start + 1
    if period in (2, 3):
        return position if position <= 2 else position + 10
    if period in (4, 5):
        return position
    if position <= 2:
        return position
    if position <= 17:
        return 3
    return position - 14
