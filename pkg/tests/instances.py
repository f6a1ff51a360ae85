"""Shared random instance generators for scheduler tests.

Two families:

* ``tiny_instance`` — instances small enough for the exhaustive oracle,
  used to sandwich the LP bound, the optimum, and the rounded schedule.
* ``scale_instance`` — a 10-box / 6-kind family used for trend tests.
  Four large boxes carry essentially all capacity; six boxes are so small
  that any hop placed on them is a mistake.  Every kind offers a balanced
  implementation (equal per-unit demand on both resources) plus one or two
  skewed ones that halve one resource but more than double the other.  The
  skewed options are listed first, so a placement rule that breaks ties in
  listing order keeps drifting onto them whenever slack hides the damage,
  while any aggregate-aware solution avoids them entirely: the instance is
  resource-symmetric, so at the optimum both resources bind at once and a
  skewed option strictly raises one of them.
"""

from __future__ import annotations

import random

from ofc.scheduling import Box, Flow, Impl, Sdm, SchedulingProblem

# Joint-path cap keeping the exhaustive oracle comfortably fast.
TINY_JOINT_PATH_LIMIT = 50_000


def tiny_instance(rng: random.Random) -> SchedulingProblem:
    """Random instance with <=3 boxes, <=3 kinds, <=2 impls, <=6 flows."""
    while True:
        n_boxes = rng.randint(1, 3)
        n_sdms = rng.randint(1, 3)
        n_impls = [rng.randint(1, 2) for _ in range(n_sdms)]
        resources = ["cpu", "mem"][: rng.randint(1, 2)]
        boxes = [
            Box(
                id=f"b{n}",
                capacity={r: rng.uniform(1.0, 10.0) for r in resources},
                utilization={r: rng.uniform(0.0, 0.3) for r in resources},
            )
            for n in range(n_boxes)
        ]
        sdms = [
            Sdm(
                id=f"s{k}",
                impls=[
                    Impl(
                        id=f"i{k}_{i}",
                        demand={r: rng.uniform(0.1, 1.0) for r in resources},
                    )
                    for i in range(n_impls[k])
                ],
            )
            for k in range(n_sdms)
        ]
        flows = []
        for f in range(rng.randint(1, 6)):
            chain = [f"s{rng.randrange(n_sdms)}" for _ in range(rng.randint(1, 3))]
            flows.append(Flow(id=f"f{f}", amount=rng.uniform(0.1, 2.0), chain=chain))
        prob = SchedulingProblem(boxes, sdms, flows)
        joint = 1
        for fl in flows:
            for s in fl.chain:
                joint *= len(prob.options(s))
            if joint > TINY_JOINT_PATH_LIMIT:
                break
        if joint <= TINY_JOINT_PATH_LIMIT:
            return prob


def scale_instance(seed: int, n_flows: int) -> SchedulingProblem:
    """10 boxes, 6 kinds, chain lengths uniform on [1, 5], 2-3 impls."""
    rng = random.Random(seed)
    resources = ["cpu", "mem"]
    boxes = []
    for n in range(10):
        scale = 200.0 if n < 4 else 0.1
        jit = rng.uniform(0.95, 1.05) if n < 4 else rng.uniform(0.9, 1.1)
        g = rng.uniform(0.0, 0.03)
        boxes.append(
            Box(
                id=f"b{n}",
                capacity={r: scale * jit for r in resources},
                utilization={r: g for r in resources},
            )
        )
    sdms = []
    for k in range(6):
        base = rng.uniform(0.4, 0.9)
        impls = [
            Impl(id=f"i{k}_0", demand={"cpu": 0.5 * base, "mem": 2.2 * base}),
            Impl(id=f"i{k}_1", demand={"cpu": base, "mem": base}),
        ]
        if rng.random() < 0.5:
            impls.append(
                Impl(id=f"i{k}_2", demand={"cpu": 2.2 * base, "mem": 0.5 * base})
            )
        sdms.append(Sdm(id=f"s{k}", impls=impls))
    flows = []
    for f in range(n_flows):
        chain_len = rng.randint(1, 5)
        chain = [f"s{rng.randrange(6)}" for _ in range(chain_len)]
        flows.append(Flow(id=f"f{f}", amount=1.0, chain=chain))
    return SchedulingProblem(boxes, sdms, flows)
