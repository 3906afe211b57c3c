import numpy as np
import pytest

from dflsim.errors import ColdStartError, ConfigurationError, StalenessViolationError
from dflsim.staleness import (
    DelaySchedule,
    NeighborVersionStore,
    VersionCache,
    validate_schedule,
)


class TestVersionIndex:
    def test_zero_kind_returns_current(self):
        sched = DelaySchedule("zero", bounds=(3, 3))
        assert sched.version_index(0, 17) == 17

    def test_fixed_offset(self):
        sched = DelaySchedule("fixed", bounds=(2,), offset=2)
        assert sched.version_index(0, 10) == 8

    def test_fixed_clamps_at_first_version(self):
        sched = DelaySchedule("fixed", bounds=(2,), offset=2)
        assert sched.version_index(0, 1) == 1
        assert sched.version_index(0, 2) == 1

    def test_periodic_cycles_all_ages(self):
        sched = DelaySchedule("periodic", bounds=(2,))
        ages = [sched.age_at(0, t) for t in range(3, 10)]
        assert ages == [(t - 1) % 3 for t in range(3, 10)]

    def test_uniform_random_is_pure_function(self):
        sched = DelaySchedule("uniform-random", bounds=(3, 3), seed=5)
        first = [sched.version_index(1, t) for t in range(1, 50)]
        # Different call order, same answers.
        second = [sched.version_index(1, t) for t in reversed(range(1, 50))]
        assert first == list(reversed(second))

    def test_uniform_random_age_distribution(self):
        # Oracle: multinomial frequency counts across 10^4 seeds, 3 sigma.
        draws = 10_000
        counts = np.zeros(4, dtype=int)
        for seed in range(draws):
            sched = DelaySchedule("uniform-random", bounds=(3, 3), seed=seed)
            counts[sched.age_at(1, 5)] += 1
        expected = draws / 4
        sigma = np.sqrt(draws * 0.25 * 0.75)
        assert np.all(np.abs(counts - expected) <= 3 * sigma), counts

    def test_uniform_random_respects_early_iterations(self):
        sched = DelaySchedule("uniform-random", bounds=(5,), seed=1)
        for t in range(1, 8):
            assert sched.version_index(0, t) >= 1

    def test_nonmonotone_allowed(self):
        sched = DelaySchedule("uniform-random", bounds=(4,), seed=3)
        indices = [sched.version_index(0, t) for t in range(10, 60)]
        assert any(b < a for a, b in zip(indices, indices[1:]))

    def test_domain_errors(self):
        with pytest.raises(ConfigurationError):
            DelaySchedule("nope", bounds=(1,))
        with pytest.raises(ConfigurationError):
            DelaySchedule("zero", bounds=(-1,))
        with pytest.raises(ConfigurationError):
            DelaySchedule("fixed", bounds=(1,))
        with pytest.raises(ConfigurationError):
            DelaySchedule("zero", bounds=(1,), offset=2)
        sched = DelaySchedule("zero", bounds=(1,))
        with pytest.raises(ConfigurationError):
            sched.version_index(0, 0)


class TestValidateSchedule:
    def test_zero_kind_valid(self):
        sched = DelaySchedule("zero", bounds=(2, 2, 2))
        assert validate_schedule(sched, 100) == []

    def test_fixed_breach_flags_every_late_iteration(self):
        sched = DelaySchedule("fixed", bounds=(1, 1), offset=2)
        violations = validate_schedule(sched, 10)
        assert violations == [
            (k, t, 2, 1) for k in range(2) for t in range(3, 11)
        ]

    def test_uniform_random_valid_over_long_horizon(self):
        sched = DelaySchedule("uniform-random", bounds=tuple([3] * 8), seed=9)
        assert validate_schedule(sched, 1000) == []


class TestVersionCache:
    def test_ring_semantics(self):
        cache = VersionCache(capacity=3)
        for t in range(1, 6):
            cache.push(t, np.full(2, float(t)))
        for t in (3, 4, 5):
            assert cache.fetch(t)[0] == t
        with pytest.raises(StalenessViolationError):
            cache.fetch(2)

    def test_capacity_one(self):
        cache = VersionCache(capacity=1)
        cache.push(1, np.zeros(1))
        cache.push(2, np.ones(1))
        assert cache.fetch(2)[0] == 1.0
        with pytest.raises(StalenessViolationError):
            cache.fetch(1)

    def test_fetch_is_bit_identical(self):
        cache = VersionCache(capacity=2)
        vec = np.random.default_rng(0).standard_normal(5)
        cache.push(1, vec)
        got = cache.fetch(1)
        assert got.tobytes() == vec.tobytes()

    def test_stored_copy_immune_to_caller_mutation(self):
        cache = VersionCache(capacity=2)
        vec = np.ones(3)
        cache.push(1, vec)
        vec[:] = 99.0
        assert np.array_equal(cache.fetch(1), np.ones(3))

    def test_non_contiguous_push_asserts(self):
        cache = VersionCache(capacity=3)
        cache.push(1, np.zeros(1))
        with pytest.raises(AssertionError):
            cache.push(3, np.zeros(1))

    def test_valid_schedules_never_fault_replay(self):
        # Replay property: capacity max bound + 1 suffices for any valid schedule.
        for seed in range(20):
            rng = np.random.default_rng(seed)
            bounds = tuple(int(b) for b in rng.integers(0, 6, size=4))
            sched = DelaySchedule("uniform-random", bounds=bounds, seed=seed)
            cache = VersionCache(capacity=max(bounds) + 1)
            for t in range(1, 1001):
                cache.push(t, np.array([float(t)]))
                for k in range(4):
                    index = sched.version_index(k, t)
                    assert cache.fetch(index)[0] == index


class TestNeighborVersionStore:
    def test_fresh_delivery_age_zero(self):
        store = NeighborVersionStore(bounds=(3, 3))
        store.deliver(0, 1, 4, np.array([1.0]))
        vec, age = store.latest_available(0, 1, 4)
        assert age == 0 and vec[0] == 1.0

    def test_reuse_rule_within_bound(self):
        store = NeighborVersionStore(bounds=(3, 3))
        delivered = np.array([2.5, -1.0])
        store.deliver(0, 1, 4, delivered)
        vec, age = store.latest_available(0, 1, 6)
        assert age == 2
        assert vec.tobytes() == delivered.tobytes()

    def test_over_age_fetch_faults(self):
        store = NeighborVersionStore(bounds=(3, 3))
        store.deliver(0, 1, 4, np.array([1.0]))
        with pytest.raises(StalenessViolationError):
            store.latest_available(0, 1, 8)

    def test_cold_start(self):
        store = NeighborVersionStore(bounds=(3, 3))
        with pytest.raises(ColdStartError):
            store.latest_available(0, 1, 1)

    def test_keeps_newest_version_only(self):
        store = NeighborVersionStore(bounds=(5,))
        store.deliver(0, 1, 3, np.array([3.0]))
        store.deliver(0, 1, 5, np.array([5.0]))
        store.deliver(0, 1, 4, np.array([4.0]))
        vec, age = store.latest_available(0, 1, 5)
        assert vec[0] == 5.0 and age == 0
