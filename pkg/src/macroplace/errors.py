"""Exception hierarchy shared across the package."""


class MacroplaceError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(MacroplaceError):
    """Netlist/config document is structurally malformed (missing field, wrong type, unknown key)."""


class ValidationError(MacroplaceError):
    """Document parsed but violates a data-model invariant (dangling reference, oversized macro, duplicate id)."""


class InvalidTarget(MacroplaceError):
    """Clustering target out of the valid range."""


class InfeasibleSpec(MacroplaceError):
    """Synthetic-netlist spec cannot be satisfied (macro area budget exceeded)."""


class EmptyNet(MacroplaceError):
    """HPWL requested for an empty pin list."""


class UnplacedNode(MacroplaceError):
    """Cost evaluation found a net pin whose owner has no position."""

    def __init__(self, node_id: int):
        super().__init__(f"node {node_id} has no position")
        self.node_id = node_id


class LegalizationFailed(MacroplaceError):
    """Greedy legalization could not find a feasible cell for some macro."""


class MacrosUnplaced(MacroplaceError):
    """Force-directed placement requires every macro to have a position."""


class NoFeasibleStart(MacroplaceError):
    """The first macro of an episode has an all-zero feasibility mask."""


class InfeasibleAction(MacroplaceError):
    """A masked-out cell was passed to env.step; masking must precede sampling."""


class DeadEndError(MacroplaceError):
    """No feasible cell exists for a later macro mid-episode.

    Carries the aborted trajectory (with the configured penalty reward)
    when raised out of a rollout, so training code can still learn from it.
    """

    def __init__(self, step: int, trajectory=None):
        super().__init__(f"all-zero feasibility mask at step {step}")
        self.step = step
        self.trajectory = trajectory


class AllMasked(MacroplaceError):
    """Policy forward pass received an all-zero feasibility mask."""


class ShapeMismatch(MacroplaceError):
    """Tensor dimensions inconsistent with the model architecture."""


class CheckpointMismatch(MacroplaceError):
    """Checkpoint parameter shapes disagree with the model."""


class Diverged(MacroplaceError):
    """Training loss became non-finite."""


class EmptyDataset(MacroplaceError):
    """Supervised pretraining received no records."""


class NoFeasibleInitial(MacroplaceError):
    """Simulated annealing could not construct a feasible initial placement."""
