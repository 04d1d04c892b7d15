"""Shared game instances. Expensive solves are session-scoped."""

from __future__ import annotations

import numpy as np
import pytest

import splitgame as sg


def make_spec(payoff_text, *, types=((0.0,), (1.0,)), prior=(0.5, 0.5),
              controls_u=((-1.0,), (1.0,)), controls_v=((-1.0,), (1.0,)),
              horizon=1.0, time_steps=4, grid_resolution=8) -> sg.GameSpec:
    return sg.GameSpec(
        type_points=[list(p) for p in types],
        prior=list(prior),
        controls_u=[list(c) for c in controls_u],
        controls_v=[list(c) for c in controls_v],
        payoff=sg.parse(payoff_text),
        horizon=horizon,
        time_steps=time_steps,
        grid_resolution=grid_resolution,
    )


def make_random_two_type(seed: int, *, time_steps=4, grid_resolution=8) -> sg.GameSpec:
    """A random two-type instance with both a guessing and a concealment term."""
    rng = np.random.Generator(np.random.Philox(seed))
    a, b, c = rng.uniform(-1.0, 1.0, 3)
    text = (f"({a:.6f})*t*u1*v1 + ({b:.6f})*abs(x1 - u1)"
            f" + ({c:.6f})*x1*u1*v1")
    return make_spec(text, time_steps=time_steps,
                     grid_resolution=grid_resolution)


@pytest.fixture(scope="session")
def revealing_spec() -> sg.GameSpec:
    """Guess-the-type game: the informed player matches u to x, so W = 0."""
    return make_spec("abs(x1 - u1)", controls_u=((0.0,), (1.0,)),
                     controls_v=((0.0,),), time_steps=4, grid_resolution=8)


@pytest.fixture(scope="session")
def revealing_field(revealing_spec) -> sg.ValueField:
    return sg.solve_backward(revealing_spec)


@pytest.fixture(scope="session")
def constant_spec() -> sg.GameSpec:
    return make_spec("0.75", controls_u=((0.0,), (1.0,)),
                     controls_v=((0.0,),), time_steps=4, grid_resolution=8)


@pytest.fixture(scope="session")
def pennies_spec() -> sg.GameSpec:
    """Matching pennies; the type never enters, so no information leaks."""
    return make_spec("u1*v1", time_steps=4, grid_resolution=8)


@pytest.fixture(scope="session")
def timedep_spec() -> sg.GameSpec:
    """Pennies early, concealment late; splitting is strictly valuable."""
    return make_spec("t*u1*v1 + (1 - t)*abs(x1 - u1)",
                     time_steps=6, grid_resolution=10)


@pytest.fixture(scope="session")
def timedep_field(timedep_spec) -> sg.ValueField:
    return sg.solve_backward(timedep_spec)
