import json
import logging
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError

from gp_kernels.kernels import KernelError

from .exceptions import ChainError, SamplerError
from .sampler import LDLVSampler, initial_state
from .state import ChainConfig, LatentState, PosteriorSummary, Priors, TraceRecord

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
TRACE_COLUMNS = ["iter", "loglik", "beta", "accept_r"]


class _Accumulator:
    """Sumas del ensamble posterior a burn-in."""

    def __init__(self, n_nodes: int, n_elements: int, n_features: int):
        self.count = 0
        self.beta = 0.0
        self.g = np.zeros(n_nodes)
        self.H = np.zeros((n_nodes, n_features))
        self.r = np.zeros(n_nodes)
        self.responsibilities = np.zeros((n_nodes, n_elements))

    def add(self, state: LatentState, responsibilities: np.ndarray) -> None:
        self.count += 1
        self.beta += state.beta
        self.g += state.g
        self.H += state.H
        self.r += state.r
        self.responsibilities += responsibilities

    def to_dict(self) -> Dict[str, Any]:
        return {
            "count": self.count,
            "beta": self.beta,
            "g": self.g.tolist(),
            "H": self.H.tolist(),
            "r": self.r.tolist(),
            "responsibilities": self.responsibilities.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "_Accumulator":
        H = np.asarray(data["H"], dtype=float)
        resp = np.asarray(data["responsibilities"], dtype=float)
        acc = cls(H.shape[0], resp.shape[1], H.shape[1])
        acc.count = int(data["count"])
        acc.beta = float(data["beta"])
        acc.g = np.asarray(data["g"], dtype=float)
        acc.H = H
        acc.r = np.asarray(data["r"], dtype=float)
        acc.responsibilities = resp
        return acc


def _summarize(acc: _Accumulator, trace: List[TraceRecord], accepted: int, iterations: int,
               last_state: LatentState) -> PosteriorSummary:
    if acc.count == 0:
        raise SamplerError("La cadena no registró ningún estado tras el burn-in.")
    responsibilities = acc.responsibilities / acc.count
    return PosteriorSummary(
        beta=acc.beta / acc.count,
        g=acc.g / acc.count,
        H=acc.H / acc.count,
        r=acc.r / acc.count,
        labels=np.argmax(responsibilities, axis=0),
        responsibilities=responsibilities,
        trace=list(trace),
        acceptance_rate=accepted / max(iterations, 1),
        last_state=last_state,
    )


def write_checkpoint(
    path: Union[str, Path],
    iteration: int,
    state: LatentState,
    rng_state: Dict[str, Any],
    acc: _Accumulator,
    trace: List[TraceRecord],
    accepted: int,
    config: ChainConfig,
    priors: Priors,
) -> Path:
    """Volcado JSON versionado del estado, el contador, el estado del RNG y los acumuladores."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "iteration": iteration,
        "state": state.to_dict(),
        "rng_state": rng_state,
        "accumulator": acc.to_dict(),
        "trace": [asdict(record) for record in trace],
        "accepted": accepted,
        "config": asdict(config),
        "priors": priors.to_dict(),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload), encoding="utf-8")
    tmp.replace(path)
    return path


def read_checkpoint(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise SamplerError(f"No existe el checkpoint: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SamplerError(f"Checkpoint corrupto {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise SamplerError(f"Versión de checkpoint no soportada: {version}")
    return payload


def write_trace_csv(trace: List[TraceRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    frame = pd.DataFrame([asdict(record) for record in trace], columns=["iteration", "loglik", "beta", "accept_r"])
    frame.columns = TRACE_COLUMNS
    frame.to_csv(path, index=False, float_format="%.10g")
    return path


def _run(
    sampler: LDLVSampler,
    config: ChainConfig,
    state: LatentState,
    rng: np.random.Generator,
    start: int,
    acc: _Accumulator,
    trace: List[TraceRecord],
    accepted: int,
    checkpoint_path: Optional[Path],
    tag: str,
) -> PosteriorSummary:
    started = time.perf_counter()
    t = start
    rng_state = rng.bit_generator.state
    try:
        for t in range(start + 1, config.iterations + 1):
            rng_state = rng.bit_generator.state
            new_state, was_accepted = sampler.step(state, rng)
            if config.is_recorded(t):
                record = TraceRecord(
                    iteration=t,
                    loglik=sampler.marginal_log_likelihood(new_state),
                    beta=new_state.beta,
                    accept_r=(accepted + int(was_accepted)) / t,
                )
                acc.add(new_state, sampler.responsibilities(new_state))
                trace.append(record)
            state = new_state
            accepted += int(was_accepted)
            if config.log_every and t % config.log_every == 0:
                logger.info(
                    f"{tag} iter {t}/{config.iterations} | β={state.beta:.4g} | "
                    f"loglik={sampler.marginal_log_likelihood(state):.4f} | aceptación r={accepted / t:.3f}"
                )
            if checkpoint_path is not None and config.checkpoint_every and t % config.checkpoint_every == 0:
                write_checkpoint(checkpoint_path, t, state, rng.bit_generator.state, acc, trace, accepted,
                                 config, sampler.priors)
    except (SamplerError, KernelError, LinAlgError, FloatingPointError) as exc:
        written = None
        if checkpoint_path is not None:
            # estado, contadores y RNG tal como estaban antes de la iteración fallida
            written = str(write_checkpoint(checkpoint_path, t - 1, state, rng_state, acc, trace, accepted,
                                           config, sampler.priors))
        logger.error(f"{tag} fallo numérico en la iteración {t}: {exc}")
        raise ChainError(f"Fallo numérico en la cadena: {exc}", iteration=t, checkpoint=written) from exc

    if checkpoint_path is not None:
        write_checkpoint(checkpoint_path, config.iterations, state, rng.bit_generator.state, acc, trace, accepted,
                         config, sampler.priors)
    logger.info(f"{tag} cadena completa en {time.perf_counter() - started:.1f}s ({acc.count} estados registrados)")
    return _summarize(acc, trace, accepted, config.iterations, state)


def run_chain(
    X: np.ndarray,
    nodes,
    priors: Priors,
    config: ChainConfig,
    init: Optional[LatentState] = None,
    rng: Optional[np.random.Generator] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    tag: str = "",
) -> PosteriorSummary:
    """
    Ejecuta T barridos Z, β, g, H, r y promedia los estados registrados tras el burn-in.

    El RNG por defecto es default_rng(config.seed). Con checkpoint_path se escribe un checkpoint
    cada `checkpoint_every` iteraciones, al final y ante un fallo numérico.
    """
    sampler = LDLVSampler(X, nodes, priors, analytic_gradient=config.analytic_gradient)
    state = init if init is not None else initial_state(sampler.X, sampler.coords)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    acc = _Accumulator(sampler.n_nodes, sampler.n_elements, sampler.n_features)
    logger.info(
        f"{tag} inicio de cadena: K={sampler.n_nodes}, N={sampler.n_elements}, D={sampler.n_features}, "
        f"T={config.iterations}, T_b={config.burn_in}, stride={config.stride}"
    )
    return _run(sampler, config, state, rng, 0, acc, [], 0,
                Path(checkpoint_path) if checkpoint_path else None, tag)


def resume_chain(
    X: np.ndarray,
    nodes,
    checkpoint_path: Union[str, Path],
    config: Optional[ChainConfig] = None,
    tag: str = "",
) -> PosteriorSummary:
    """Continúa una cadena desde su checkpoint; el resultado coincide con la corrida sin interrupción."""
    payload = read_checkpoint(checkpoint_path)
    saved_config = ChainConfig(**payload["config"])
    config = config or saved_config
    priors = Priors.from_dict(payload["priors"])
    state = LatentState.from_dict(payload["state"])
    rng = np.random.default_rng()
    try:
        rng.bit_generator.state = payload["rng_state"]
    except (TypeError, ValueError) as exc:
        raise SamplerError(f"Estado de RNG incompatible en {checkpoint_path}: {exc}") from exc
    acc = _Accumulator.from_dict(payload["accumulator"])
    trace = [TraceRecord(**record) for record in payload["trace"]]
    start = int(payload["iteration"])
    sampler = LDLVSampler(X, nodes, priors, analytic_gradient=config.analytic_gradient)
    logger.info(f"{tag} reanudando cadena desde la iteración {start}/{config.iterations}")
    return _run(sampler, config, state, rng, start, acc, trace, int(payload["accepted"]),
                Path(checkpoint_path), tag)
