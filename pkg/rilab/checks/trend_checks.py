"""Qualitative phase-transition trends: criterion 16."""
from __future__ import annotations

from rilab.checks.base import SuiteContext, criterion
from rilab.config import ExperimentConfig
from rilab.harness import EstimateRecord, run_experiment

ARM_CEILING = 0.05
EXIST_FLOOR = 0.9


def _rates(ctx: SuiteContext, experiment: str, radii: tuple[int, ...], u: float,
           trials: int) -> list[EstimateRecord]:
    config = ExperimentConfig(experiment=experiment, trials=trials, radii=radii, levels=(u,),
                              kappa=2.0, seed=16)
    return run_experiment(config, workers=ctx.workers)


@criterion(16, "phase-transition trends")
def check_trends(ctx: SuiteContext):
    arms = _rates(ctx, "one_arm", ctx.size((5, 10, 20), (10, 20, 40)), 5.0, ctx.size(100, 400))
    decay = [r.estimate for r in arms]
    # nonincreasing up to the Wilson interval of the previous radius
    arm_ok = all(b.estimate <= a.interval[1] for a, b in zip(arms, arms[1:])) \
        and decay[-1] < ARM_CEILING

    (exist,) = _rates(ctx, "exist", (ctx.size(20, 40),), 0.1, ctx.size(100, 300))
    exist_ok = exist.estimate >= EXIST_FLOOR

    near, far = _rates(ctx, "two_arms", (10, 20), 0.1, ctx.size(100, 400))
    arms2_ok = far.estimate <= near.estimate

    metrics = {"one_arm": decay, "exist": exist.estimate,
               "two_arms": [near.estimate, far.estimate]}
    failed = [name for name, ok in (("one-arm decay", arm_ok), ("existence", exist_ok),
                                    ("two arms", arms2_ok)) if not ok]
    return not failed, ", ".join(failed), metrics
