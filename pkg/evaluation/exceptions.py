class EvaluationError(Exception):
    """Errores de descriptores, validación cruzada o análisis de enriquecimiento."""
