"""Asynchronous time integrator.

Each element carries a fixed stable step and lives on a priority queue keyed
by (next update time, push sequence, element id). Popping an event advances
the nodal displacements of that element by their individually elapsed
intervals, solves the patch-local bound-constrained phase problem, applies
the elemental impulse to the nodal momenta and reschedules the element.
State mutation is strictly sequential; sampling sinks receive the live state
between processing windows and must copy whatever they keep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from . import element as _element
from .material import MaterialParams, PhaseFieldVariant
from .mesh import Mesh


class PhaseSolveError(RuntimeError):
    """Local phase solve failed to converge; carries the last iterate."""

    def __init__(self, element: int, time: float, iterate: np.ndarray):
        self.element = element
        self.time = time
        self.iterate = iterate
        super().__init__(
            f"phase-field solve for element {element} at t={time:.6e} did not "
            f"converge; last iterate {iterate.tolist()}")


class CausalityError(RuntimeError):
    pass


@dataclass(frozen=True)
class TractionLoad:
    """Constant (optionally ramped) traction on a set of boundary edges."""
    edges: Sequence[tuple[int, int]]
    value: tuple[float, float]
    ramp: float = 0.0  # linear ramp-in time; 0 means constant from t0


@dataclass(frozen=True)
class KinematicBC:
    """Prescribed velocity on a node set, per masked component."""
    nodes: Sequence[int]
    velocity: tuple[float, float]
    components: tuple[bool, bool] = (True, True)


@dataclass
class LoadCase:
    tractions: list[TractionLoad] = field(default_factory=list)
    body: tuple[float, float] = (0.0, 0.0)
    kinematic: list[KinematicBC] = field(default_factory=list)


@dataclass
class ElementUpdateRecord:
    element: int
    time: float


@dataclass
class SimState:
    """Mutable integrator state plus the immutable precomputed tables."""

    mesh: Mesh
    params: MaterialParams
    variant: PhaseFieldVariant
    cfl: float
    t0: float
    tf: float
    mode: str
    fracture: bool
    cache: _element.ElementKernelCache
    # nodal state
    u: np.ndarray
    pmom: np.ndarray
    d: np.ndarray
    tau_a: np.ndarray
    mass: np.ndarray
    # element state
    tau_e: np.ndarray
    dt_e: np.ndarray
    tol_e: np.ndarray
    counts: np.ndarray
    # loads / constraints
    f_ext_e: np.ndarray
    f_trac_node: np.ndarray
    kin_free: np.ndarray
    kin_vel: np.ndarray
    ramp_time: float
    # patch structure in the active solver mode
    p_ptr: np.ndarray
    p_elems: np.ndarray
    p_rows: np.ndarray
    # event queue and accumulators
    heap_t: np.ndarray
    heap_s: np.ndarray
    heap_e: np.ndarray
    istate: np.ndarray
    facc: np.ndarray
    psip_buf: np.ndarray
    fail_d: np.ndarray
    max_outer: int = 20
    max_newton: int = 25

    @property
    def t_now(self) -> float:
        """Time of the most recently processed event."""
        return float(self.facc[2])

    @property
    def n_updates(self) -> int:
        return int(self.counts.sum())

    @property
    def work_external(self) -> float:
        return float(self.facc[0] + self.facc[1])

    @property
    def queue_size(self) -> int:
        return int(self.istate[0])

    def velocity(self) -> np.ndarray:
        return self.pmom / self.mass[:, None]


def assemble_external_forces(mesh: Mesh, load: LoadCase):
    """Per-element constant nodal forces from tractions and body force.

    Each tagged boundary edge is owned by exactly one element, so traction
    impulses are applied once. Also returns the assembled per-node traction
    force used by the work accumulator.
    """
    f_ext_e = np.zeros((mesh.n_elements, 4, 2))
    f_trac_node = np.zeros((mesh.n_nodes, 2))
    ramp = 0.0
    boundary = set(mesh.boundary)
    for trac in load.tractions:
        if trac.ramp:
            ramp = max(ramp, float(trac.ramp))
        for (e, local) in trac.edges:
            if (e, local) not in boundary:
                raise ValueError(f"traction on non-boundary edge {(e, local)}")
            a, b = mesh.edge_node_ids(e, local)
            f_nodes = _element.edge_traction_force(mesh.nodes[[a, b]], trac.value)
            la, lb = _locals_of_edge(local)
            f_ext_e[e, la] += f_nodes[0]
            f_ext_e[e, lb] += f_nodes[1]
            f_trac_node[a] += f_nodes[0]
            f_trac_node[b] += f_nodes[1]
    if load.body != (0.0, 0.0):
        b = np.asarray(load.body, float)
        for e in range(mesh.n_elements):
            f_ext_e[e] += _element.body_force(mesh.nodes[mesh.elements[e]], b)
    return f_ext_e, f_trac_node, ramp


def _locals_of_edge(local: int) -> tuple[int, int]:
    from .mesh import EDGE_NODES
    return EDGE_NODES[local]


def initialize(mesh: Mesh, params: MaterialParams, variant: PhaseFieldVariant,
               load: LoadCase | None = None, *, cfl: float = 0.6,
               t0: float = 0.0, tf: float, mode: str = "patch",
               fracture: bool = True, v0: np.ndarray | None = None,
               d0: np.ndarray | None = None, tol_scale: float = 1e-8,
               max_outer: int = 20, max_newton: int = 25) -> SimState:
    """Build the ready-to-run state: caches, masses, steps, queue.

    v0 is an optional (n_nodes, 2) initial velocity field; d0 an optional
    initial phase field. Kinematic constraints override v0 on their masked
    components. The first event of every element lands at t0 + dt_e.
    """
    if not (0.0 < cfl <= 1.0):
        raise ValueError("cfl must lie in (0, 1]")
    if tf < t0:
        raise ValueError("tf must not precede t0")
    if mode not in ("patch", "local"):
        raise ValueError("mode must be 'patch' or 'local'")
    load = load or LoadCase()

    cache = _element.build_cache(mesh.nodes, mesh.elements)
    m_ea = params.rho * np.einsum("ga,eg->ea", cache.shape_values, cache.detjw)
    mass = np.zeros(mesh.n_nodes)
    np.add.at(mass, mesh.elements, m_ea)
    if np.any(mass <= 0.0):
        raise ValueError("mesh contains nodes with zero assembled mass")

    dt_e = _element.critical_time_steps(mesh.nodes, mesh.elements, params, cfl, cache)
    tol_e = tol_scale * params.gc * cache.areas / params.ell

    f_ext_e, f_trac_node, ramp_time = assemble_external_forces(mesh, load)

    kin_free = np.ones((mesh.n_nodes, 2), dtype=np.uint8)
    kin_vel = np.zeros((mesh.n_nodes, 2))
    for bc in load.kinematic:
        for c in range(2):
            if bc.components[c]:
                ids = np.asarray(bc.nodes, dtype=np.int64)
                if np.any(kin_free[ids, c] == 0):
                    clash = ids[kin_free[ids, c] == 0]
                    raise ValueError(f"conflicting kinematic constraints at nodes {clash.tolist()}")
                kin_free[ids, c] = 0
                kin_vel[ids, c] = bc.velocity[c]

    u = np.zeros((mesh.n_nodes, 2))
    pmom = np.zeros((mesh.n_nodes, 2))
    if v0 is not None:
        pmom[:] = mass[:, None] * np.asarray(v0, float).reshape(mesh.n_nodes, 2)
    constrained = kin_free == 0
    pmom[constrained] = (mass[:, None] * kin_vel)[constrained]

    d = np.zeros(mesh.n_nodes)
    if d0 is not None:
        d[:] = np.asarray(d0, float).reshape(mesh.n_nodes)
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("initial phase field must lie in [0, 1]")

    if mode == "patch":
        p_ptr, p_elems, p_rows = mesh.patch_csr()
    else:
        p_ptr, p_elems, p_rows = mesh.self_patch_csr()
    max_patch = int(np.diff(p_ptr).max()) if mesh.n_elements else 0

    n = mesh.n_elements
    heap_t = np.empty(n)
    heap_s = np.empty(n, dtype=np.int64)
    heap_e = np.empty(n, dtype=np.int64)
    istate = np.zeros(2, dtype=np.int64)
    facc = np.zeros(4)
    facc[2] = t0
    state = SimState(
        mesh=mesh, params=params, variant=variant, cfl=cfl, t0=t0, tf=tf,
        mode=mode, fracture=fracture, cache=cache,
        u=u, pmom=pmom, d=d, tau_a=np.full(mesh.n_nodes, t0),
        mass=mass, tau_e=np.full(n, t0), dt_e=dt_e, tol_e=tol_e,
        counts=np.zeros(n, dtype=np.int64),
        f_ext_e=f_ext_e, f_trac_node=f_trac_node,
        kin_free=kin_free, kin_vel=kin_vel, ramp_time=ramp_time,
        p_ptr=np.asarray(p_ptr, np.int64), p_elems=np.asarray(p_elems, np.int64),
        p_rows=np.asarray(p_rows, np.int64),
        heap_t=heap_t, heap_s=heap_s, heap_e=heap_e, istate=istate, facc=facc,
        psip_buf=np.empty(max(1, max_patch * 4)), fail_d=np.zeros(4),
        max_outer=max_outer, max_newton=max_newton,
    )
    if t0 < tf:
        for e in range(n):
            _kernels.heap_push(heap_t, heap_s, heap_e, istate,
                               t0 + dt_e[e], e, e)
        istate[1] = n
    return state


def _run_kernel(state: SimState, n_max: int):
    return _kernels.run_updates(
        state.mesh.elements, state.cache.grads, state.cache.detjw,
        state.p_ptr, state.p_elems, state.p_rows,
        state.mass, state.dt_e, state.tol_e, state.f_ext_e, state.f_trac_node,
        state.kin_free, state.kin_vel,
        state.params.lam, state.params.mu, state.params.gc, state.params.ell,
        4.0 * state.variant.cw, state.variant.is_at1,
        state.ramp_time, state.tf, 1 if state.fracture else 0,
        state.u, state.pmom, state.d, state.tau_a, state.tau_e, state.counts,
        state.heap_t, state.heap_s, state.heap_e, state.istate, state.facc,
        state.psip_buf, state.fail_d, state.max_outer, state.max_newton, n_max)


def _raise_for_status(state: SimState, status: int, elem: int):
    if status == 2:
        raise PhaseSolveError(elem, state.t_now, state.fail_d.copy())
    if status == 3:
        raise CausalityError(
            f"event for element {elem} popped before the previous event time "
            f"{state.facc[2]:.17g}")


def step(state: SimState) -> ElementUpdateRecord:
    """Process exactly one elemental event; raises when the queue is empty."""
    if state.queue_size == 0:
        raise RuntimeError("event queue is empty")
    elem = int(state.heap_e[0])
    n_done, status, err_elem = _run_kernel(state, 1)
    _raise_for_status(state, status, err_elem)
    return ElementUpdateRecord(element=elem, time=state.t_now)


def run(state: SimState, sampling_every: int,
        sinks: Iterable[Callable[[SimState], None]] = ()) -> None:
    """Drain the event queue, invoking every sink after each sampling window.

    Sinks also fire once on the trailing partial window so the final state is
    always observed. Post-processing reads the most recent nodal values; no
    temporal interpolation is applied.
    """
    if sampling_every < 1:
        raise ValueError("sampling interval must be at least 1")
    sinks = list(sinks)
    while True:
        n_done, status, elem = _run_kernel(state, sampling_every)
        _raise_for_status(state, status, elem)
        if n_done > 0:
            for sink in sinks:
                sink(state)
        if status == 1:
            return


def apply_traction_impulse(mesh: Mesh, e: int, local: int,
                           traction: tuple[float, float], dt: float) -> np.ndarray:
    """Impulse (2 nodes, 2 comps) a traction delivers over one elemental interval."""
    if (e, local) not in set(mesh.boundary):
        raise ValueError(f"traction on non-boundary edge {(e, local)}")
    a, b = mesh.edge_node_ids(e, local)
    return dt * _element.edge_traction_force(mesh.nodes[[a, b]], traction)


def synchronous_reference(mesh: Mesh, params: MaterialParams, *, dt: float,
                          n_steps: int, v0: np.ndarray | None = None,
                          load: LoadCase | None = None):
    """Synchronous leapfrog oracle on the undamaged linear problem.

    Assembles the global stiffness once and marches u_{k+1} = u_k + dt M^-1 p,
    p_{k+1} = p_k - dt (K u_{k+1} - f_ext). Independent integration path used
    to pin down the equal-step limit of the event-driven engine.
    """
    load = load or LoadCase()
    cache = _element.build_cache(mesh.nodes, mesh.elements)
    m_ea = params.rho * np.einsum("ga,eg->ea", cache.shape_values, cache.detjw)
    mass = np.zeros(mesh.n_nodes)
    np.add.at(mass, mesh.elements, m_ea)
    ndof = 2 * mesh.n_nodes
    kglob = np.zeros((ndof, ndof))
    kmats = _element._stiffness_batch(cache.grads, cache.detjw, params.lam, params.mu)
    for e in range(mesh.n_elements):
        dofs = np.empty(8, dtype=int)
        dofs[0::2] = 2 * mesh.elements[e]
        dofs[1::2] = 2 * mesh.elements[e] + 1
        kglob[np.ix_(dofs, dofs)] += kmats[e]
    f_ext_e, _, _ = assemble_external_forces(mesh, load)
    fext = np.zeros((mesh.n_nodes, 2))
    np.add.at(fext, mesh.elements, f_ext_e)
    u = np.zeros(ndof)
    p = np.zeros(ndof)
    if v0 is not None:
        p[:] = (np.asarray(v0, float).reshape(mesh.n_nodes, 2)
                * mass[:, None]).ravel()
    minv = 1.0 / np.repeat(mass, 2)
    f = fext.ravel()
    traj_u, traj_p = [u.copy()], [p.copy()]
    for _ in range(n_steps):
        u = u + dt * minv * p
        p = p - dt * (kglob @ u - f)
        traj_u.append(u.copy())
        traj_p.append(p.copy())
    return np.array(traj_u), np.array(traj_p)
