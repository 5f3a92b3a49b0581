"""Shared fixtures: small datasets and run configs."""

import pytest

from dsgd_stability.dataset import generate_synthetic
from dsgd_stability.engine import RunConfig, StepSchedule
from dsgd_stability.losses import LossModel
from dsgd_stability.models import LossFamily, TopologyKind
from dsgd_stability.topology import TopologySchedule, build_topology


@pytest.fixture
def make_run():
    """Factory for a small logistic run on a ring; keyword arguments override RunConfig fields."""

    def factory(m=4, n=8, dim=3, T=30, eta=0.1, family=LossFamily.LOGISTIC, mu=0.0, topology=None, **kwargs):
        dataset = generate_synthetic(m, n, dim, 1.0, seed=0)
        model = LossModel(family, dim, domain_radius=2.0, feature_bound=1.0, mu=mu)
        schedule = kwargs.pop("schedule", StepSchedule.constant(eta))
        if topology is None:
            topology = TopologySchedule.static(build_topology(TopologyKind.RING, m))
        return RunConfig(
            model=model,
            dataset=dataset,
            schedule=schedule,
            topology=topology,
            T=T,
            master_seed=kwargs.pop("master_seed", 1),
            **kwargs,
        )

    return factory
