from typing import Optional


class SamplerError(Exception):
    """Excepción base de la cadena MCMC."""


class AscentError(SamplerError):
    """El ascenso de Newton sobre s(r) no converge o diverge."""


class ChainError(SamplerError):
    """Fallo numérico durante la cadena; conserva la iteración y el checkpoint escrito."""

    def __init__(self, message: str, iteration: int, checkpoint: Optional[str] = None):
        super().__init__(f"{message} (iteración {iteration})")
        self.iteration = iteration
        self.checkpoint = checkpoint
