"""Counter-based derivation of independent random streams from one master seed."""
import numpy as np

__all__ = ["STAGES", "derive_rng", "derive_seed_sequence"]

# stage indices used as the first spawn-key component
STAGES = {
    "data": 0,
    "simulate": 1,
    "filter": 2,
    "mcmc": 3,
    "design": 4,
    "benchmark": 5,
}


def derive_seed_sequence(master, stage, point=0, replicate=0):
    """Seed sequence for ``(stage, point, replicate)`` under ``master``.

    ``stage`` may be a name from :data:`STAGES` or an integer.  Streams with
    different keys are statistically independent.
    """
    if isinstance(stage, str):
        stage = STAGES[stage]
    key = (int(stage), int(point), int(replicate))
    if min(key) < 0:
        raise ValueError("spawn key components must be nonnegative")
    return np.random.SeedSequence(int(master), spawn_key=key)


def derive_rng(master, stage, point=0, replicate=0):
    """``numpy.random.Generator`` (PCG64) for the given key."""
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(master, stage, point, replicate)))
