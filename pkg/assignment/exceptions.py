from typing import Optional


class AssignmentError(Exception):
    """Excepción base del paso de asignación elemento → nodo."""


class InfeasibleAssignmentError(AssignmentError):
    """Hay menos nodos que elementos (K < N)."""


class PipelineError(Exception):
    """Fallo en una etapa de run_ptg; conserva la etapa y la semilla del reinicio."""

    def __init__(self, message: str, stage: str, seed: Optional[int] = None, numerical: bool = True):
        super().__init__(f"[{stage}] semilla={seed}: {message}")
        self.stage = stage
        self.seed = seed
        self.numerical = numerical
