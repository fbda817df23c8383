"""
Run Safeguards - The Safety Net
Bounds runaway loops and rejects values that signal a solver or assembly defect.
"""
from typing import Callable, Dict, Optional, Tuple

import numpy as np

import config
from exceptions import StepCapExceeded


class RunSafeguard:
    """
    Runtime checks of the adaptive loop. Checks return (allowed, reason) tuples;
    register_step raises once the step cap is hit.
    """

    def __init__(
        self,
        max_total_steps: int = config.MAX_TOTAL_STEPS,
        roundoff: float = config.DL2_ROUNDOFF,
        on_event: Optional[Callable[[str, str, str], None]] = None,
    ):
        self.max_total_steps = max_total_steps
        self.roundoff = roundoff
        self.on_event = on_event
        self.steps = 0
        self.clamped_increments = 0
        self.worst_clamped = 0.0

    def _event(self, event_type: str, message: str, severity: str = "INFO"):
        if self.on_event is not None:
            self.on_event(event_type, message, severity)

    def can_continue(self) -> Tuple[bool, str]:
        """Master check before every algebraic step"""
        if self.steps >= self.max_total_steps:
            return False, f"Step cap of {self.max_total_steps} algebraic steps reached"
        return True, "All run checks passed"

    def register_step(self):
        allowed, reason = self.can_continue()
        if not allowed:
            self._event("STEP_CAP", reason, "WARNING")
            raise StepCapExceeded(reason, steps=self.steps)
        self.steps += 1

    def validate_increment(self, dl2: float, energy_scale: float) -> Tuple[bool, float, str]:
        """
        An accepted energy decrease must be nonnegative up to round-off.
        Returns: (is_valid, value to use, reason)
        """
        if not np.isfinite(dl2):
            return False, dl2, "Energy increment is not finite"
        if dl2 >= 0:
            return True, dl2, "Energy decreased"
        if dl2 >= -self.roundoff * abs(energy_scale):
            self.clamped_increments += 1
            self.worst_clamped = min(self.worst_clamped, dl2)
            return True, 0.0, f"Round-off increment {dl2:.3e} clamped to 0"
        message = f"Energy increased by {-dl2:.6e} (scale {abs(energy_scale):.6e})"
        self._event("ENERGY_INCREASE", message, "CRITICAL")
        return False, dl2, message

    def clamp_roundoff(self, dl2: float, energy_scale: float) -> float:
        """Round-off negatives to 0; genuine negatives are kept"""
        if -self.roundoff * abs(energy_scale) <= dl2 < 0:
            return 0.0
        return dl2

    def check_finite(self, name: str, values) -> Tuple[bool, str]:
        values = np.asarray(values, dtype=float)
        if np.all(np.isfinite(values)):
            return True, f"{name} is finite"
        bad = int(np.sum(~np.isfinite(values)))
        self._event("NON_FINITE", f"{name}: {bad} non-finite values", "CRITICAL")
        return False, f"{name} has {bad} non-finite values"

    def get_report(self) -> Dict:
        return {
            "steps": self.steps,
            "max_total_steps": self.max_total_steps,
            "remaining_steps": self.max_total_steps - self.steps,
            "clamped_increments": self.clamped_increments,
            "worst_clamped": self.worst_clamped,
        }
