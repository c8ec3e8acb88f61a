class DataModelError(Exception):
    """Excepción base para errores de ingesta y validación de datos."""


class MissingValueError(DataModelError):
    """Columnas con valores faltantes en modo estricto."""


class StandardizationError(DataModelError):
    """Errores al estandarizar o des-estandarizar una tabla de elementos."""


class FormulaError(DataModelError):
    """Excepción base para fórmulas químicas inválidas."""


class UnknownElementError(FormulaError):
    """Símbolo que no corresponde a ningún elemento conocido."""


class FormulaSyntaxError(FormulaError):
    """Paréntesis desbalanceados, conteos no positivos o caracteres inválidos."""
