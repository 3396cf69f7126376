"""Fixed reference scenarios and seeded generators for the experiment suites.

The reference suite is a set of ten hand-tuned desk-scale scenes: the EE
starts at the origin and pursues a target on the +x axis through vertical
or tilted branches planted at z = -0.15.  Scenario names carry ``blocking``
and ``stiff`` tags through the module constants below; the behavioural
suite checks controller orderings against those tags.

Brittle branches get their break angle from a surface-strain limit: the
outer-fibre strain of a bent link is (d/2) * theta / l, so the joint angle
at which a branch of diameter d snaps scales as 2 * l * strain / d --
thicker branches tolerate less bending before failure.
"""

from dataclasses import replace

import numpy as np

from .canopy import BranchSpec, LeafSpec
from .harness import Scenario

BRITTLE_STRAIN = 0.006  # outer-fibre strain at failure for "stiff" scenes


def strain_break_angle(spec, strain=BRITTLE_STRAIN):
    """Joint break angle from an outer-fibre strain limit."""
    return 2.0 * spec.link_length() * strain / spec.dimension


def _brittle(spec, strain=BRITTLE_STRAIN):
    return replace(spec, break_angle=strain_break_angle(spec, strain))


def reference_suite():
    """The fixed 10-scenario behavioural suite (controller left at default)."""
    scenarios = [
        Scenario(
            name="01-free-space",
            canopy=(),
            x_target=(0.30, 0.0, 0.0),
            max_duration=60.0,
        ),
        Scenario(
            name="02-compliant-blocker",
            canopy=(BranchSpec(attach_position=(0.23, -0.02, -0.15), dimension=0.010),),
            x_target=(0.40, 0.0, 0.0),
            max_duration=90.0,
        ),
        Scenario(
            name="03-stiff-blocker",
            canopy=(
                _brittle(BranchSpec(attach_position=(0.23, -0.02, -0.15), dimension=0.010)),
            ),
            x_target=(0.40, 0.0, 0.0),
            max_duration=90.0,
        ),
        Scenario(
            name="04-staggered-pair",
            canopy=(
                BranchSpec(attach_position=(0.20, -0.025, -0.15), dimension=0.010),
                BranchSpec(attach_position=(0.30, 0.030, -0.15), dimension=0.010),
            ),
            x_target=(0.45, 0.0, 0.0),
            max_duration=120.0,
        ),
        Scenario(
            name="05-staggered-pair-stiff",
            canopy=(
                _brittle(BranchSpec(attach_position=(0.20, -0.025, -0.15), dimension=0.010)),
                _brittle(BranchSpec(attach_position=(0.30, 0.030, -0.15), dimension=0.010)),
            ),
            x_target=(0.45, 0.0, 0.0),
            max_duration=120.0,
        ),
        Scenario(
            name="06-offset-bystander",
            canopy=(BranchSpec(attach_position=(0.25, -0.045, -0.15), dimension=0.006),),
            x_target=(0.40, 0.0, 0.0),
            max_duration=90.0,
        ),
        Scenario(
            name="07-tilted-stiff",
            canopy=(
                _brittle(
                    BranchSpec(
                        attach_position=(0.26, -0.09, -0.12),
                        attach_orientation=(-0.5, 0.0, 0.0),
                        dimension=0.009,
                    )
                ),
            ),
            x_target=(0.40, 0.0, 0.0),
            max_duration=90.0,
        ),
        Scenario(
            name="08-leaf-curtain",
            canopy=(
                BranchSpec(
                    attach_position=(0.24, 0.045, -0.15),
                    dimension=0.006,
                    leaf_specs=(
                        LeafSpec(attach_particle_index=2, patch_half_extents=(0.03, 0.02)),
                        LeafSpec(attach_particle_index=3, patch_half_extents=(0.03, 0.02)),
                    ),
                ),
            ),
            x_target=(0.40, 0.0, 0.0),
            max_duration=90.0,
        ),
        Scenario(
            name="09-corridor",
            canopy=(
                BranchSpec(attach_position=(0.18, -0.020, -0.15), dimension=0.009),
                BranchSpec(attach_position=(0.28, 0.022, -0.15), dimension=0.009),
                BranchSpec(attach_position=(0.38, -0.024, -0.15), dimension=0.009),
            ),
            x_target=(0.50, 0.0, 0.0),
            max_duration=120.0,
        ),
        Scenario(
            name="10-stiff-highside",
            canopy=(
                _brittle(BranchSpec(attach_position=(0.27, 0.022, -0.15), dimension=0.012)),
            ),
            x_target=(0.40, 0.0, 0.0),
            max_duration=90.0,
        ),
    ]
    return tuple(scenarios)


# scenarios whose straight-line path contacts the canopy hard enough to
# hold the admittance baseline at its force setpoint
BLOCKING_NAMES = frozenset(
    {
        "02-compliant-blocker",
        "03-stiff-blocker",
        "04-staggered-pair",
        "05-staggered-pair-stiff",
        "07-tilted-stiff",
        "09-corridor",
        "10-stiff-highside",
    }
)

# scenarios with brittle branches: pushing straight through snaps them
STIFF_NAMES = frozenset(
    {
        "03-stiff-blocker",
        "05-staggered-pair-stiff",
        "07-tilted-stiff",
        "10-stiff-highside",
    }
)


def sweep_scenario():
    """The reference blocking scenario used for the force-weight sweep."""
    base = reference_suite()[1]  # 02-compliant-blocker
    return replace(base, name="sweep-blocker", controller="rice")


def repetition_scenarios():
    """Five quick fixed scenarios for the repeatability experiment."""
    return (
        Scenario(
            name="rep-1-free",
            canopy=(),
            x_target=(0.25, 0.0, 0.0),
            max_duration=40.0,
        ),
        Scenario(
            name="rep-2-compliant",
            canopy=(BranchSpec(attach_position=(0.18, -0.02, -0.15), dimension=0.010),),
            x_target=(0.30, 0.0, 0.0),
            max_duration=60.0,
        ),
        Scenario(
            name="rep-3-stiff",
            canopy=(
                _brittle(BranchSpec(attach_position=(0.18, -0.02, -0.15), dimension=0.010)),
            ),
            x_target=(0.30, 0.0, 0.0),
            max_duration=60.0,
        ),
        Scenario(
            name="rep-4-bystander",
            canopy=(BranchSpec(attach_position=(0.20, -0.045, -0.15), dimension=0.006),),
            x_target=(0.30, 0.0, 0.0),
            max_duration=60.0,
        ),
        Scenario(
            name="rep-5-highside",
            canopy=(
                _brittle(BranchSpec(attach_position=(0.20, 0.022, -0.15), dimension=0.012)),
            ),
            x_target=(0.30, 0.0, 0.0),
            max_duration=60.0,
        ),
    )


def dense_random_scenario(seed, n_branches=None):
    """Seeded dense artificial plant: 8-15 leafy branches in the EE's path."""
    rng = np.random.default_rng(seed)
    if n_branches is None:
        n_branches = int(rng.integers(8, 16))
    if not 8 <= n_branches <= 15:
        raise ValueError("dense scenarios use 8 to 15 branches")
    branches = []
    for _ in range(n_branches):
        n_leaves = int(rng.integers(0, 4))
        particle_count = 6
        leaves = tuple(
            LeafSpec(
                attach_particle_index=int(rng.integers(2, particle_count)),
                patch_half_extents=(
                    float(rng.uniform(0.015, 0.03)),
                    float(rng.uniform(0.01, 0.02)),
                ),
            )
            for _ in range(n_leaves)
        )
        branches.append(
            BranchSpec(
                attach_position=(
                    float(rng.uniform(0.15, 0.55)),
                    float(rng.uniform(-0.12, 0.12)),
                    -0.15,
                ),
                attach_orientation=(
                    float(rng.uniform(-0.25, 0.25)),
                    float(rng.uniform(-0.25, 0.25)),
                    0.0,
                ),
                dimension=float(rng.uniform(0.005, 0.012)),
                length=float(rng.uniform(0.20, 0.35)),
                particle_count=particle_count,
                leaf_specs=leaves,
            )
        )
    return Scenario(
        name="dense-random-%d" % seed,
        canopy=tuple(branches),
        x_target=(0.70, 0.0, 0.0),
        controller="rice",
        max_duration=240.0,
        seed=int(seed),
    )
