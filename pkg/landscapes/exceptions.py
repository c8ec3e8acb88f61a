class LandscapeError(Exception):
    """Error al construir o exportar un paisaje de propiedades."""
