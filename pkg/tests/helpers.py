"""Small builders and random-instance generators shared by the test modules."""

from ziptrace.attacker import build_profiles
from ziptrace.traces import AnonTrace, Dataset, TowerEvent, Trace


def mk_trace(owner, *events):
    return Trace(owner, tuple(TowerEvent(t, s, e) for t, s, e in events))


def mk_dataset(*traces):
    return Dataset(tuple(traces))


def alternating_trace(owner=1, dwell=5, n_events=2000, towers=(0, 1), start=0):
    """A trace that switches towers at every boundary."""
    events = []
    t = start
    for i in range(n_events):
        events.append(TowerEvent(towers[i % len(towers)], t, t + dwell))
        t += dwell
    return Trace(owner, tuple(events))


def random_walk_trace(rng, owner, n_towers, n_events, start=0):
    events = []
    t = start
    for _ in range(n_events):
        dwell = int(rng.integers(1, 20))
        events.append(TowerEvent(int(rng.integers(n_towers)), t, t + dwell))
        t += dwell + int(rng.integers(0, 3))
    return Trace(owner, tuple(events))


def random_profiles_instance(rng, max_users=10, max_towers=8, max_len=12):
    """A random (profiles, sequence) classification instance."""
    n_users = int(rng.integers(2, max_users + 1))
    n_towers = int(rng.integers(2, max_towers + 1))
    ds = Dataset(tuple(
        random_walk_trace(rng, u, n_towers, int(rng.integers(3, 26)))
        for u in range(n_users)
    ))
    profiles = build_profiles(ds)
    seq_len = int(rng.integers(1, max_len + 1))
    # Occasionally include a tower the training never saw.
    seq = [int(rng.integers(n_towers + 1)) for _ in range(seq_len)]
    return profiles, seq


def random_link_instance(rng, max_fragments=6, n_towers=6):
    """A random (link matrix, fragment views, target) linking instance."""
    from ziptrace.attacker import train_link_matrix

    train = Dataset(tuple(
        random_walk_trace(rng, u, n_towers, int(rng.integers(4, 15)))
        for u in range(int(rng.integers(1, 4)))
    ))
    window = int(rng.integers(3, 15))
    lm = train_link_matrix(train, window)
    n_frags = int(rng.integers(1, max_fragments + 1))
    views = []
    t = 0
    for i in range(n_frags):
        t += int(rng.integers(0, window + 3))
        events = []
        for _ in range(int(rng.integers(1, 4))):
            dwell = int(rng.integers(1, 6))
            events.append(TowerEvent(int(rng.integers(n_towers)), t, t + dwell))
            t = events[-1].end
        views.append(AnonTrace(1000 + i, tuple(events)))
    target = views[int(rng.integers(n_frags))].pseudonym
    return lm, views, target
