"""Concrete network kernels: single server, two-station tandem, m-server
queue with the Kiefer-Wolfowitz workload vector, and generalized Jackson
networks with FIFO stations.

Each kernel computes the last-activity epoch of a realized window with a fast
recursion; the tandem additionally carries an independent brute-force
evaluator (explicit maximization over all split pairs) used as an oracle.

Jackson driving variables are presampled per customer: a route walk records
the visited stations with one service draw per visit.  Evaluation pools these
records into per-station slot sequences consumed in completion order, so the
n-th service at a station and the routing of its n-th completion are fixed by
the window data.  Jobs in service swap identities relative to the sampled
routes (which leaves the dater distribution unchanged), and the last-activity
epoch is a deterministic, monotone function of the arrival epochs.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import ClassVar, List, Optional, Sequence, Tuple

import numpy as np

from .distributions import (
    ArrivalSpec,
    Distribution,
    RngStream,
    SERVICE_ROLE,
    ROUTE_ROLE,
    arrivals_from_config,
    arrivals_to_config,
    dist_from_config,
    dist_to_config,
)
from .netcore import Kernel, Window

__all__ = [
    "SingleServerModel",
    "TandemModel",
    "MultiServerModel",
    "JacksonModel",
    "JacksonRoute",
    "lindley_path",
    "kw_step",
    "tandem_dater_supform",
    "tandem_path",
    "TandemPath",
    "jackson_simulate",
    "jackson_single_customer",
    "model_from_config",
    "model_to_config",
]


def lindley_path(sigma: Sequence[float], tau: Sequence[float]) -> np.ndarray:
    """Waiting-time path W_0=0, W_{k+1} = (W_k + sigma_k - tau_k)^+."""
    sigma = np.asarray(sigma, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if sigma.shape != tau.shape:
        raise ValueError(f"length mismatch: {sigma.shape} vs {tau.shape}")
    w = np.empty(len(sigma) + 1)
    w[0] = 0.0
    acc = 0.0
    for k in range(len(sigma)):
        acc = max(0.0, acc + sigma[k] - tau[k])
        w[k + 1] = acc
    return w


def kw_step(w: np.ndarray, sigma: float, tau: float) -> np.ndarray:
    """One arrival step of the ordered workload vector: assign the job to the
    least-loaded server, elapse tau, clip at zero, re-sort."""
    w = np.asarray(w, dtype=float)
    if np.any(np.diff(w) < 0.0):
        raise ValueError("workload vector must be sorted nondecreasing")
    if np.any(w < 0.0):
        raise ValueError("workload vector must be nonnegative")
    v = w.copy()
    v[0] += sigma
    v -= tau
    np.clip(v, 0.0, None, out=v)
    v.sort()
    return v


# ---------------------------------------------------------------------------
# Single-server queue
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SingleServerModel(Kernel):
    """FIFO single-server queue; the window dater is the response time of the
    last customer when the system starts empty."""

    service: Distribution
    arrivals: ArrivalSpec

    name: ClassVar[str] = "single_server"
    has_AA: ClassVar[bool] = True
    r: ClassVar[int] = 1

    @property
    def mean_service(self) -> float:
        return self.service.mean()

    @property
    def load(self) -> float:
        return self.mean_service / self.arrivals.mean_spacing

    def gamma0_reference(self) -> float:
        return self.mean_service

    def sample_driving_gens(self, count: int, service_gen: np.random.Generator,
                            route_gen=None) -> np.ndarray:
        # scalar draws so shared-uniform comparisons across kernels couple
        # bit-exactly (vectorized transforms may differ in the last ulp)
        return np.array([self.service.quantile(service_gen.random())
                         for _ in range(count)])

    def _last_activity(self, epochs: np.ndarray, driving: np.ndarray) -> float:
        done = -math.inf
        for t, s in zip(epochs, driving):
            done = max(t, done) + s
        return done

    def customer_station_work(self, window: Window) -> np.ndarray:
        return np.asarray(window.driving, dtype=float).reshape(-1, 1)


# ---------------------------------------------------------------------------
# Two-station tandem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TandemModel(Kernel):
    """Two FIFO single-server stations in series.  Driving records are rows
    (sigma1, sigma2); optional comonotone coupling draws both from one
    uniform."""

    services: Tuple[Distribution, Distribution]
    arrivals: ArrivalSpec
    coupling: str = "independent"  # or "comonotone"

    name: ClassVar[str] = "tandem"
    has_AA: ClassVar[bool] = True
    r: ClassVar[int] = 2

    def __post_init__(self):
        if self.coupling not in ("independent", "comonotone"):
            raise ValueError(f"unknown coupling {self.coupling!r}")

    @property
    def station_means(self) -> Tuple[float, float]:
        return (self.services[0].mean(), self.services[1].mean())

    def gamma0_reference(self) -> float:
        return max(self.station_means)

    def sample_driving_gens(self, count: int, service_gen: np.random.Generator,
                            route_gen=None) -> np.ndarray:
        out = np.empty((count, 2))
        for i in range(count):
            if self.coupling == "comonotone":
                u1 = u2 = service_gen.random()
            else:
                u = service_gen.random(2)
                u1, u2 = float(u[0]), float(u[1])
            out[i, 0] = self.services[0].quantile(u1)
            out[i, 1] = self.services[1].quantile(u2)
        return out

    def _last_activity(self, epochs: np.ndarray, driving: np.ndarray) -> float:
        d1 = -math.inf
        d2 = -math.inf
        s1 = driving[:, 0]
        s2 = driving[:, 1]
        for k in range(len(epochs)):
            d1 = max(epochs[k], d1) + s1[k]
            d2 = max(d1, d2) + s2[k]
        return d2

    def customer_station_work(self, window: Window) -> np.ndarray:
        return np.asarray(window.driving, dtype=float)


def tandem_dater_supform(window: Window) -> float:
    """Brute-force window dater of the tandem: explicit maximization over all
    pairs p <= q of (station-1 work on p..q) + (station-2 work on q..n)
    - (T_n - T_p).  Oracle path, quadratic on purpose."""
    driving = np.asarray(window.driving, dtype=float)
    s1 = driving[:, 0]
    s2 = driving[:, 1]
    t = window.epochs
    size = len(t)
    # suffix sums of station-2 services: suf2[q] = s2[q] + ... + s2[-1]
    suf2 = np.cumsum(s2[::-1])[::-1]
    best = -math.inf
    for p in range(size):
        acc1 = 0.0
        head = t[-1] - t[p]
        for q in range(p, size):
            acc1 += s1[q]
            v = acc1 + suf2[q] - head
            if v > best:
                best = v
    return best


@dataclass(frozen=True)
class TandemPath:
    """Recursion output for one tandem window: waiting times at both stations,
    the induced interarrival times at station 2, and the end-to-end dater."""

    w1: np.ndarray
    w2: np.ndarray
    tau2: np.ndarray
    z: float


def tandem_path(window: Window) -> TandemPath:
    """Waiting-time recursions of the tandem on a window that starts empty.

    Station 1 is a plain waiting-time recursion; station-2 interarrivals are
    the departure spacings of station 1; the dater is the full sojourn of the
    last customer.
    """
    driving = np.asarray(window.driving, dtype=float)
    s1 = driving[:, 0]
    s2 = driving[:, 1]
    tau = np.diff(window.epochs)
    size = len(s1)
    w1 = np.zeros(size)
    tau2 = np.zeros(max(size - 1, 0))
    for k in range(size - 1):
        drift = w1[k] + s1[k] - tau[k]
        w1[k + 1] = max(0.0, drift)
        tau2[k] = s1[k + 1] - min(0.0, drift)
    w2 = np.zeros(size)
    for k in range(size - 1):
        w2[k + 1] = max(0.0, w2[k] + s2[k] - tau2[k])
    z = w1[-1] + s1[-1] + w2[-1] + s2[-1]
    return TandemPath(w1=w1, w2=w2, tau2=tau2, z=z)


# ---------------------------------------------------------------------------
# Multiserver queue (ordered workload vector)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiServerModel(Kernel):
    """m-server FIFO queue.  The window dater is the time to clear every
    customer present at the last arrival, measured from that arrival."""

    servers: int
    service: Distribution
    arrivals: ArrivalSpec

    name: ClassVar[str] = "multiserver"
    has_AA: ClassVar[bool] = False
    r: ClassVar[int] = 1

    def __post_init__(self):
        if self.servers < 1:
            raise ValueError(f"server count must be >= 1, got {self.servers}")

    @property
    def load(self) -> float:
        return self.service.mean() / (self.servers * self.arrivals.mean_spacing)

    def gamma0_reference(self) -> float:
        return self.service.mean() / self.servers

    def sample_driving_gens(self, count: int, service_gen: np.random.Generator,
                            route_gen=None) -> np.ndarray:
        return np.array([self.service.quantile(service_gen.random())
                         for _ in range(count)])

    def _last_activity(self, epochs: np.ndarray, driving: np.ndarray) -> float:
        w = np.zeros(self.servers)
        for k in range(len(epochs) - 1):
            w[0] += driving[k]
            w -= epochs[k + 1] - epochs[k]
            np.clip(w, 0.0, None, out=w)
            w.sort()
        return epochs[-1] + max(w[0] + driving[-1], w[-1])

    def workload_path(self, window: Window) -> np.ndarray:
        """Ordered workload vectors seen by each customer (size x m)."""
        out = np.zeros((window.size, self.servers))
        w = np.zeros(self.servers)
        for k in range(window.size - 1):
            w = kw_step(w, window.driving[k], window.epochs[k + 1] - window.epochs[k])
            out[k + 1] = w
        return out


# ---------------------------------------------------------------------------
# Generalized Jackson network
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JacksonRoute:
    """One customer's presampled path: visited stations and the service time
    drawn for each visit."""

    stations: np.ndarray
    services: np.ndarray

    def station_work(self, r: int) -> np.ndarray:
        out = np.zeros(r)
        np.add.at(out, self.stations, self.services)
        return out


@dataclass(frozen=True)
class JacksonModel(Kernel):
    """Open network of r FIFO single-server stations with probabilistic
    routing; column r of the routing matrix is the exit probability."""

    services: Tuple[Distribution, ...]
    routing: np.ndarray           # (r, r+1), rows sum to 1, last column = exit
    external: np.ndarray          # (r,), entry-station probabilities
    arrivals: ArrivalSpec
    event_cap: int = 10_000_000
    route_cap: int = 1_000_000

    name: ClassVar[str] = "jackson"
    has_AA: ClassVar[bool] = True

    def __post_init__(self):
        routing = np.asarray(self.routing, dtype=float)
        external = np.asarray(self.external, dtype=float)
        object.__setattr__(self, "routing", routing)
        object.__setattr__(self, "external", external)
        r = len(self.services)
        if routing.shape != (r, r + 1):
            raise ValueError(f"routing must be shape {(r, r + 1)}, got {routing.shape}")
        if external.shape != (r,):
            raise ValueError(f"external row must be shape {(r,)}, got {external.shape}")
        if np.any(routing < 0.0) or np.any(external < 0.0):
            raise ValueError("routing probabilities must be nonnegative")
        if np.any(np.abs(routing.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("each routing row must sum to 1")
        if abs(external.sum() - 1.0) > 1e-9:
            raise ValueError("external routing row must sum to 1")
        internal = routing[:, :r]
        radius = max(abs(np.linalg.eigvals(internal)))
        if radius >= 1.0 - 1e-12:
            raise ValueError(f"internal routing spectral radius {radius:.6f} >= 1")
        object.__setattr__(self, "_route_cum", np.cumsum(routing, axis=1))
        object.__setattr__(self, "_external_cum", np.cumsum(external))

    @property
    def r(self) -> int:  # type: ignore[override]
        return len(self.services)

    def visit_means(self) -> np.ndarray:
        """Expected number of visits to each station for a lone customer."""
        r = self.r
        internal = self.routing[:, :r]
        return np.linalg.solve(np.eye(r) - internal.T, self.external)

    def station_means(self) -> np.ndarray:
        """Expected per-customer work at each station."""
        means = np.array([d.mean() for d in self.services])
        return self.visit_means() * means

    def gamma0_reference(self) -> float:
        return float(self.station_means().max())

    def sample_route(self, service_gen: np.random.Generator,
                     route_gen: np.random.Generator) -> JacksonRoute:
        stations: List[int] = []
        services: List[float] = []
        station = int(np.searchsorted(self._external_cum, route_gen.random(), side="right"))
        for _ in range(self.route_cap):
            stations.append(station)
            services.append(float(self.services[station].quantile(service_gen.random())))
            nxt = int(np.searchsorted(self._route_cum[station], route_gen.random(), side="right"))
            if nxt >= self.r:
                return JacksonRoute(np.asarray(stations, dtype=np.int64),
                                    np.asarray(services, dtype=float))
            station = nxt
        raise RuntimeError(f"route length cap {self.route_cap} exceeded; "
                           "routing is too close to critical")

    def sample_driving_gens(self, count: int, service_gen: np.random.Generator,
                            route_gen=None) -> Tuple[JacksonRoute, ...]:
        if route_gen is None:
            raise ValueError("routing draws need a route generator")
        return tuple(self.sample_route(service_gen, route_gen) for _ in range(count))

    def _last_activity(self, epochs: np.ndarray, driving: Tuple[JacksonRoute, ...]) -> float:
        x, _ = _jackson_run(self, epochs, driving, collect_log=False)
        return x

    def customer_station_work(self, window: Window) -> np.ndarray:
        return np.stack([route.station_work(self.r) for route in window.driving])


def jackson_simulate(model: JacksonModel, window,
                     collect_log: bool = True) -> Tuple[Optional[list], float]:
    """Event-driven FIFO simulation of a Jackson window.

    Returns the event log (rows (epoch, kind, station, customer)) and the
    window dater.  Simultaneous events are processed in
    (epoch, station, customer) order.
    """
    x, log = _jackson_run(model, window.epochs, window.driving, collect_log)
    return log, float(x - window.epochs[-1])


def _jackson_run(model: JacksonModel, epochs: np.ndarray,
                 driving: Tuple[JacksonRoute, ...],
                 collect_log: bool = False) -> Tuple[float, Optional[list]]:
    """Counter dynamics of the network on one window.

    Service times and routing decisions are attached to stations: the n-th
    service at station k consumes the pooled slot n (the per-customer records
    concatenated in customer order).  Jobs in service therefore swap
    identities relative to their sampled routes; this is what makes the
    last-activity epoch monotone in the arrival epochs, and it leaves every
    per-station total unchanged.
    """
    r = model.r
    # pooled per-station slots (service, next station or r for exit)
    slots: List[List[Tuple[float, int]]] = [[] for _ in range(r)]
    for route in driving:
        stations = route.stations
        services = route.services
        for v in range(len(stations)):
            nxt = int(stations[v + 1]) if v + 1 < len(stations) else r
            slots[int(stations[v])].append((float(services[v]), nxt))
    consumed = [0] * r

    queues: List[list] = [[] for _ in range(r)]   # waiting tokens, FIFO
    q_head = [0] * r
    busy = [False] * r
    inflight_next = [r] * r
    log: Optional[list] = [] if collect_log else None
    last = epochs[-1] if len(epochs) else 0.0

    # heap of (epoch, station, token, is_departure)
    heap: List[Tuple[float, int, int, int]] = []
    for i, (t, route) in enumerate(zip(epochs, driving)):
        heapq.heappush(heap, (float(t), int(route.stations[0]), i, 0))

    events = 0

    def start_service(station: int, epoch: float, token: int) -> None:
        service, nxt = slots[station][consumed[station]]
        consumed[station] += 1
        inflight_next[station] = nxt
        busy[station] = True
        if log is not None:
            log.append((epoch, "start", station, token))
        heapq.heappush(heap, (epoch + service, station, token, 1))

    while heap:
        epoch, station, token, is_dep = heapq.heappop(heap)
        events += 1
        if events > model.event_cap:
            raise RuntimeError(f"event cap {model.event_cap} exceeded; "
                               "check the routing configuration")
        if not is_dep:
            if log is not None:
                log.append((epoch, "arrive", station, token))
            queues[station].append(token)
            if not busy[station]:
                nxt_token = queues[station][q_head[station]]
                q_head[station] += 1
                start_service(station, epoch, nxt_token)
        else:
            if log is not None:
                log.append((epoch, "depart", station, token))
            last = max(last, epoch)
            busy[station] = False
            nxt = inflight_next[station]
            if nxt < r:
                heapq.heappush(heap, (epoch, nxt, token, 0))
            if q_head[station] < len(queues[station]):
                nxt_token = queues[station][q_head[station]]
                q_head[station] += 1
                start_service(station, epoch, nxt_token)
    return last, log


def jackson_single_customer(model: JacksonModel, stream: RngStream
                            ) -> Tuple[np.ndarray, np.ndarray]:
    """Visit counts and per-station work of one lone customer."""
    route = model.sample_route(stream.generator(SERVICE_ROLE),
                               stream.generator(ROUTE_ROLE))
    nu = np.zeros(model.r, dtype=np.int64)
    np.add.at(nu, route.stations, 1)
    return nu, route.station_work(model.r)


# ---------------------------------------------------------------------------
# Configuration literals
# ---------------------------------------------------------------------------


def model_from_config(cfg: dict) -> Kernel:
    """Build a kernel from a JSON model description."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValueError("model description must carry a 'kind' key")
    kind = cfg["kind"]
    if kind == "single_server":
        _require_keys(cfg, {"kind", "service", "arrivals"})
        return SingleServerModel(service=dist_from_config(cfg["service"]),
                                 arrivals=arrivals_from_config(cfg["arrivals"]))
    if kind == "tandem":
        _require_keys(cfg, {"kind", "services", "arrivals"}, optional={"coupling"})
        services = cfg["services"]
        if len(services) != 2:
            raise ValueError("tandem needs exactly two service distributions")
        return TandemModel(services=(dist_from_config(services[0]),
                                     dist_from_config(services[1])),
                           arrivals=arrivals_from_config(cfg["arrivals"]),
                           coupling=cfg.get("coupling", "independent"))
    if kind == "multiserver":
        _require_keys(cfg, {"kind", "servers", "service", "arrivals"})
        return MultiServerModel(servers=int(cfg["servers"]),
                                service=dist_from_config(cfg["service"]),
                                arrivals=arrivals_from_config(cfg["arrivals"]))
    if kind == "jackson":
        _require_keys(cfg, {"kind", "services", "routing", "external", "arrivals"},
                      optional={"event_cap", "route_cap"})
        return JacksonModel(services=tuple(dist_from_config(d) for d in cfg["services"]),
                            routing=np.asarray(cfg["routing"], dtype=float),
                            external=np.asarray(cfg["external"], dtype=float),
                            arrivals=arrivals_from_config(cfg["arrivals"]),
                            event_cap=int(cfg.get("event_cap", 10_000_000)),
                            route_cap=int(cfg.get("route_cap", 1_000_000)))
    raise ValueError(f"unknown model kind {kind!r}")


def model_to_config(model: Kernel) -> dict:
    if isinstance(model, SingleServerModel):
        return {"kind": "single_server", "service": dist_to_config(model.service),
                "arrivals": arrivals_to_config(model.arrivals)}
    if isinstance(model, TandemModel):
        return {"kind": "tandem",
                "services": [dist_to_config(d) for d in model.services],
                "arrivals": arrivals_to_config(model.arrivals),
                "coupling": model.coupling}
    if isinstance(model, MultiServerModel):
        return {"kind": "multiserver", "servers": model.servers,
                "service": dist_to_config(model.service),
                "arrivals": arrivals_to_config(model.arrivals)}
    if isinstance(model, JacksonModel):
        return {"kind": "jackson",
                "services": [dist_to_config(d) for d in model.services],
                "routing": model.routing.tolist(),
                "external": model.external.tolist(),
                "arrivals": arrivals_to_config(model.arrivals)}
    raise TypeError(f"unknown model type {type(model)!r}")


def _require_keys(cfg: dict, required: set, optional: set = frozenset()) -> None:
    extra = set(cfg) - required - set(optional)
    if extra:
        raise ValueError(f"unknown model fields: {sorted(extra)}")
    missing = required - set(cfg)
    if missing:
        raise ValueError(f"missing model fields: {sorted(missing)}")
