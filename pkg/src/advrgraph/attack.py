"""Targeted Fast Gradient Method attacks and strength sweeps.

Single-step only: the input moves against the gradient of the cross-entropy
toward the chosen target class, scaled to an L2 or Linf budget, then clipped
back into pixel range. Sweeps attack every input independently at each
strength and persist the attacked tensors content-addressed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .model import ModelHandle, input_gradient, predict
from .store import Store

METHODS = ("FGM_L2", "FGM_LINF")
ZERO_GRAD_EPS = 1e-12


@dataclass(frozen=True)
class AttackConfig:
    method: str
    benign_class: int
    target_class: int
    strengths: tuple[float, ...]
    pixel_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown attack method {self.method!r}; expected one of {METHODS}")
        if self.target_class == self.benign_class:
            raise ConfigError("target class must differ from benign class")
        s = tuple(float(v) for v in self.strengths)
        if not s:
            raise ConfigError("strengths must be non-empty")
        if any(v < 0 for v in s):
            raise ConfigError("strengths must be >= 0")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ConfigError("strengths must be strictly ascending")
        object.__setattr__(self, "strengths", s)
        lo, hi = self.pixel_range
        if not lo < hi:
            raise ConfigError(f"invalid pixel range ({lo}, {hi})")

    def describe(self) -> dict:
        return {
            "method": self.method,
            "benignClass": self.benign_class,
            "targetClass": self.target_class,
            "strengths": list(self.strengths),
            "pixelRange": list(self.pixel_range),
        }


@dataclass(frozen=True)
class AttackResult:
    input_id: int
    adversarial: np.ndarray
    predicted_class: int
    success: bool
    applied_strength: float
    zero_gradient: bool = False


@dataclass(frozen=True)
class SweepEntry:
    attacked_ref: str
    success_rate: float
    predicted: tuple[int, ...]
    zero_gradient_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class SweepResult:
    config: AttackConfig
    model_digest: str
    input_set_ref: str
    input_ids: tuple[int, ...]
    per_strength: dict[float, SweepEntry] = field(default_factory=dict)

    def curve(self) -> list[tuple[float, float]]:
        return [(eps, self.per_strength[eps].success_rate) for eps in self.config.strengths]


def fgm_step(model: ModelHandle, x: np.ndarray, target: int, eps: float,
             norm: str, pixel_range: tuple[float, float]) -> tuple[np.ndarray, bool]:
    """One targeted FGM step; returns (adversarial, zero_gradient_flag)."""
    if eps < 0:
        raise ConfigError("attack strength must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if eps == 0:
        return x.copy(), False
    g = input_gradient(model, x, target)
    gnorm = float(np.linalg.norm(g))
    if gnorm < ZERO_GRAD_EPS:
        return x.copy(), True
    if norm == "FGM_L2":
        step = eps * g / gnorm
    elif norm == "FGM_LINF":
        step = eps * np.sign(g)
    else:
        raise ConfigError(f"unknown attack method {norm!r}")
    return np.clip(x - step, pixel_range[0], pixel_range[1]), False


def success_rate(model: ModelHandle, attacked: np.ndarray, target: int) -> float:
    """Fraction of attacked inputs whose argmax prediction is the target."""
    attacked = np.asarray(attacked, dtype=np.float64)
    if attacked.ndim != 4 or len(attacked) == 0:
        raise ConfigError("attacked set must be a non-empty batch")
    preds = predict(model, attacked).argmax(axis=-1)
    return float((preds == target).mean())


def attack_batch(model: ModelHandle, inputs: np.ndarray, input_ids: np.ndarray,
                 eps: float, config: AttackConfig) -> list[AttackResult]:
    """Attack each input independently at one strength."""
    results = []
    for i in range(len(inputs)):
        adversarial, flat = fgm_step(model, inputs[i], config.target_class,
                                     eps, config.method, config.pixel_range)
        predicted = int(predict(model, adversarial).argmax())
        results.append(AttackResult(
            input_id=int(input_ids[i]),
            adversarial=adversarial,
            predicted_class=predicted,
            success=predicted == config.target_class,
            applied_strength=eps,
            zero_gradient=flat))
    return results


def attack_sweep(model: ModelHandle, inputs: np.ndarray, input_ids: np.ndarray,
                 config: AttackConfig, store: Store) -> SweepResult:
    """Attack every input at every strength; persist attacked sets by content."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 4 or len(inputs) == 0:
        raise ConfigError("sweep needs a non-empty batch of benign inputs")
    input_ids = np.asarray(input_ids, dtype=np.int64)
    input_ref = store.put_arrays({"images": inputs, "ids": input_ids})
    per_strength: dict[float, SweepEntry] = {}
    for eps in config.strengths:
        results = attack_batch(model, inputs, input_ids, eps, config)
        attacked = np.stack([r.adversarial for r in results])
        ref = store.put_arrays({"images": attacked, "ids": input_ids})
        per_strength[eps] = SweepEntry(
            attacked_ref=ref,
            success_rate=sum(r.success for r in results) / len(results),
            predicted=tuple(r.predicted_class for r in results),
            zero_gradient_ids=tuple(r.input_id for r in results if r.zero_gradient))
    return SweepResult(config, model.weight_digest, input_ref,
                       tuple(int(i) for i in input_ids), per_strength)


def sweep_to_doc(sweep: SweepResult) -> dict:
    return {
        "schema": "advrgraph/sweep/v1",
        "modelDigest": sweep.model_digest,
        "config": sweep.config.describe(),
        "inputSetRef": sweep.input_set_ref,
        "inputIds": list(sweep.input_ids),
        "perStrength": [
            {
                "strength": eps,
                "attackedRef": entry.attacked_ref,
                "successRate": entry.success_rate,
                "predicted": list(entry.predicted),
                "zeroGradientIds": list(entry.zero_gradient_ids),
            }
            for eps, entry in sorted(sweep.per_strength.items())
        ],
    }


def sweep_from_doc(doc: dict) -> SweepResult:
    cfg = AttackConfig(
        method=doc["config"]["method"],
        benign_class=int(doc["config"]["benignClass"]),
        target_class=int(doc["config"]["targetClass"]),
        strengths=tuple(doc["config"]["strengths"]),
        pixel_range=tuple(doc["config"]["pixelRange"]))
    per = {
        float(e["strength"]): SweepEntry(
            attacked_ref=e["attackedRef"],
            success_rate=float(e["successRate"]),
            predicted=tuple(int(p) for p in e["predicted"]),
            zero_gradient_ids=tuple(int(i) for i in e["zeroGradientIds"]))
        for e in doc["perStrength"]
    }
    return SweepResult(cfg, doc["modelDigest"], doc["inputSetRef"],
                       tuple(int(i) for i in doc["inputIds"]), per)
