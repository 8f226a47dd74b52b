"""Seeded, splittable random streams for the simulator.

Every server owns one stream and the dispatcher owns another (arrival gaps
and policy coins), all spawned from one master ``numpy.random.SeedSequence``.
The draws a server makes therefore do not depend on how events interleave.
"""

import numpy as np

from hetero_dispatch.models import ServiceDistribution, ServiceKind

_BLOCK = 4096


class BufferedStream:
    """A numpy Generator that hands out uniforms and exponentials from pre-drawn blocks."""

    __slots__ = ("_gen", "_uniforms", "_u_pos", "_exponentials", "_e_pos")

    def __init__(self, seed_seq: np.random.SeedSequence):
        self._gen = np.random.default_rng(seed_seq)
        self._uniforms: list[float] = []
        self._u_pos = 0
        self._exponentials: list[float] = []
        self._e_pos = 0

    def random(self) -> float:
        """Uniform on [0, 1)."""
        if self._u_pos >= len(self._uniforms):
            self._uniforms = self._gen.random(_BLOCK).tolist()
            self._u_pos = 0
        value = self._uniforms[self._u_pos]
        self._u_pos += 1
        return value

    def exponential(self) -> float:
        """Exponential with mean 1."""
        if self._e_pos >= len(self._exponentials):
            self._exponentials = self._gen.standard_exponential(_BLOCK).tolist()
            self._e_pos = 0
        value = self._exponentials[self._e_pos]
        self._e_pos += 1
        return value

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return min(int(self.random() * n), n - 1)

    def choice(self, items: list):
        """Uniformly chosen element of a non-empty list."""
        return items[self.below(len(items))]

    def sample(self, population: int, d: int) -> list[int]:
        """
        d distinct indices from range(population), uniformly without replacement.

        Small samples use rejection; large ones a partial Fisher-Yates shuffle.
        """
        if d * 2 <= population:
            chosen: list[int] = []
            while len(chosen) < d:
                index = self.below(population)
                if index not in chosen:
                    chosen.append(index)
            return chosen
        pool = list(range(population))
        for i in range(d):
            j = i + self.below(population - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:d]


class ServiceSampler:
    """Draws service requirements of a fixed shape and mean."""

    __slots__ = ("kind", "mean", "phases", "p1", "mean1", "mean2")

    def __init__(self, dist: ServiceDistribution):
        self.kind = dist.kind
        self.mean = dist.mean
        self.phases = dist.erlang_k or 1
        self.p1 = self.mean1 = self.mean2 = 0.0
        if dist.kind is ServiceKind.HYPEREXPONENTIAL2:
            self.p1, rate1, rate2 = dist.hyperexponential_branches()
            self.mean1, self.mean2 = 1.0 / rate1, 1.0 / rate2

    def draw(self, stream: BufferedStream) -> float:
        match self.kind:
            case ServiceKind.EXPONENTIAL:
                return self.mean * stream.exponential()
            case ServiceKind.DETERMINISTIC:
                return self.mean
            case ServiceKind.ERLANG:
                return self.mean / self.phases * sum(stream.exponential() for _ in range(self.phases))
            case ServiceKind.HYPEREXPONENTIAL2:
                branch_mean = self.mean1 if stream.random() < self.p1 else self.mean2
                return branch_mean * stream.exponential()
        raise ValueError(f"Unhandled service kind {self.kind}")


def spawn_streams(seed: int, num_servers: int) -> tuple[BufferedStream, list[BufferedStream]]:
    """
    Derive the dispatcher stream and one stream per server from a master seed.

    Returns:
        (dispatcher stream, server streams indexed by server id)
    """
    children = np.random.SeedSequence(seed).spawn(num_servers + 1)
    return BufferedStream(children[0]), [BufferedStream(child) for child in children[1:]]
