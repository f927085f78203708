"""Dislocation network state, dynamics step and volume-averaged observables.

Mobile segments are polylines (nodes roughly every 100 b) gliding on their
slip plane under the Peach-Koehler force from the applied stress and the
non-singular fields of all other lines; sessile segments are rigid two-node
obstacles. Mobile nodes pin when they come within the capture radius of
another line (the sessile forest, and by default crossing mobile lines as
well); pinned nodes are released when their junction's thermal breaking
deadline passes, and can re-pin once they have glided a couple of capture
radii. Box boundaries are open: line ends terminate on the box surface and
content swept outside is discarded.

Two regularizations keep the drag-only dynamics well posed without line
tension: glide velocities saturate at ``MaterialParams.max_glide_velocity``
(phonon-drag saturation), and motion is arrested exclusively by pinning, so
between junction events the network reaches an exactly stationary state and
the integrator can jump to the next breaking deadline.

A node's driving stress excludes the sub-segments of its own line, so a
straight free line glides rigidly and its observables match the single
segment formulas exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from mesoplast.dd.fields import stress_sum_masked
from mesoplast.dd.materials import JunctionParams, MaterialParams

_EPS = 1e-30
# chunk limit for the (points x sources) stress tensor product
_MAX_PAIR_BLOCK = 4_000_000


class StepRejected(RuntimeError):
    """Raised when a step would move a node farther than box_size / 10."""

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


@dataclass
class Segment:
    """One dislocation line: polyline nodes, Burgers vector, slip geometry."""

    nodes: np.ndarray          # (N, 3) positions, m
    node_ids: np.ndarray       # (N,) stable ids
    burgers: np.ndarray        # (3,) full Burgers vector, m, global frame
    plane_normal: np.ndarray   # (3,) unit glide-plane normal, global frame
    slip_system: int
    mobile: bool
    seg_id: int = -1

    @property
    def line_dir(self) -> np.ndarray:
        d = self.nodes[-1] - self.nodes[0]
        n = np.linalg.norm(d)
        return d / n if n > 0 else d

    @property
    def p0(self) -> np.ndarray:
        return self.nodes[0]

    @property
    def p1(self) -> np.ndarray:
        return self.nodes[-1]

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.nodes, axis=0), axis=1)))

    def copy(self) -> "Segment":
        return Segment(self.nodes.copy(), self.node_ids.copy(), self.burgers.copy(),
                       self.plane_normal.copy(), self.slip_system, self.mobile,
                       self.seg_id)


@dataclass
class Junction:
    """A mobile node pinned where it met another line."""

    node_id: int
    partner_id: int            # seg_id of the line it pinned against
    formed_at: float
    breaks_at: float


@dataclass
class CoarseObservables:
    """Volume-averaged density, plastic distortion rate and polar velocity."""

    rho: float                 # 1/m^2
    Lp: np.ndarray             # (3,3), 1/s
    V: np.ndarray              # (3,), m/s


@dataclass
class DislocationNetwork:
    box_size: float
    segments: list = field(default_factory=list)
    junctions: list = field(default_factory=list)
    rng: np.random.Generator = None
    time: float = 0.0
    next_node_id: int = 0
    next_seg_id: int = 0
    # (node_id, partner_id) -> remaining glide arc before re-capture allowed
    immune: dict = field(default_factory=dict)
    # reversal damping, indexed by node id: step factor g, last raw velocity
    # and a validity flag; overshoot oscillation about glide-force equilibria
    # shrinks g so a node settles instead of limit-cycling (the model has no
    # line tension)
    damping_g: np.ndarray = None
    damping_v: np.ndarray = None
    damping_valid: np.ndarray = None
    # gather cache bookkeeping: bumped whenever the segment topology changes
    topo_version: int = 0

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(0)
        if self.damping_g is None:
            self._resize_damping(max(self.next_node_id, 64))

    def _resize_damping(self, n: int):
        size = max(n, 64)
        g = np.ones(size)
        v = np.zeros((size, 3))
        valid = np.zeros(size, dtype=bool)
        if self.damping_g is not None:
            old = len(self.damping_g)
            g[:old] = self.damping_g
            v[:old] = self.damping_v
            valid[:old] = self.damping_valid
        self.damping_g, self.damping_v, self.damping_valid = g, v, valid

    def reset_damping(self):
        self.damping_g[:] = 1.0
        self.damping_valid[:] = False

    def new_node_ids(self, n: int) -> np.ndarray:
        ids = np.arange(self.next_node_id, self.next_node_id + n)
        self.next_node_id += n
        if self.next_node_id > len(self.damping_g):
            self._resize_damping(2 * self.next_node_id)
        return ids

    def add_segment(self, seg: Segment) -> Segment:
        seg.seg_id = self.next_seg_id
        self.next_seg_id += 1
        self.segments.append(seg)
        self.topo_version += 1
        return seg

    @property
    def volume(self) -> float:
        return self.box_size ** 3

    @property
    def pinned_node_ids(self) -> set:
        return {j.node_id for j in self.junctions}

    def total_length(self) -> float:
        return sum(s.length for s in self.segments)

    def density(self) -> float:
        return self.total_length() / self.volume

    def mobile_segments(self):
        return [s for s in self.segments if s.mobile]

    def sessile_segments(self):
        return [s for s in self.segments if not s.mobile]

    def next_break_time(self):
        times = [j.breaks_at for j in self.junctions if np.isfinite(j.breaks_at)]
        return min(times) if times else None

    def copy(self) -> "DislocationNetwork":
        net = DislocationNetwork(
            box_size=self.box_size,
            segments=[s.copy() for s in self.segments],
            junctions=[Junction(j.node_id, j.partner_id, j.formed_at, j.breaks_at)
                       for j in self.junctions],
            rng=np.random.default_rng(),
            time=self.time,
            next_node_id=self.next_node_id,
            next_seg_id=self.next_seg_id,
            immune=dict(self.immune),
        )
        net.damping_g = self.damping_g.copy()
        net.damping_v = self.damping_v.copy()
        net.damping_valid = self.damping_valid.copy()
        net.rng.bit_generator.state = self.rng.bit_generator.state
        return net


# ---------------------------------------------------------------------------
# flattened view of the network
# ---------------------------------------------------------------------------

class _SubSegments:
    """Flat sub-segment arrays plus the mobile node table.

    The topology-dependent index structure is cached on the network and
    rebuilt only when the segment list changes; positions and pinned flags
    refresh on every gather.
    """

    def __init__(self, net: DislocationNetwork):
        cache = getattr(net, "_gather_cache", None)
        if cache is None or cache["version"] != net.topo_version:
            cache = self._build_static(net)
            net._gather_cache = cache
        for k, v in cache["static"].items():
            setattr(self, k, v)
        self._refresh_dynamic(net, cache)

    @staticmethod
    def _build_static(net: DislocationNetwork) -> dict:
        burg, parent, normal, mob = [], [], [], []
        node_seg, node_parent = [], []
        sub_ids_lo, sub_ids_hi, mob_ids = [], [], []
        seg_slices = []
        sub_cursor = 0
        node_cursor = 0
        for seg in net.segments:
            n = len(seg.nodes)
            if n < 2:
                continue
            nsub = n - 1
            burg.append(np.broadcast_to(seg.burgers, (nsub, 3)))
            normal.append(np.broadcast_to(seg.plane_normal, (nsub, 3)))
            parent.append(np.full(nsub, seg.seg_id))
            mob.append(np.full(nsub, seg.mobile))
            sub_ids_lo.append(seg.node_ids[:-1])
            sub_ids_hi.append(seg.node_ids[1:])
            if seg.mobile:
                node_seg.append(seg)
                node_parent.append(np.full(n, seg.seg_id))
                mob_ids.append(seg.node_ids)
                seg_slices.append((seg, sub_cursor, sub_cursor + nsub,
                                   node_cursor, node_cursor + n))
                node_cursor += n
            else:
                seg_slices.append((seg, sub_cursor, sub_cursor + nsub, -1, -1))
            sub_cursor += nsub

        z3 = np.zeros((0, 3))
        burgers = np.concatenate(burg) if burg else z3
        bmag = np.linalg.norm(burgers, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            mhat = np.where(bmag[:, None] > 0,
                            burgers / np.maximum(bmag, _EPS)[:, None], 0.0)
        static = {
            "seg_slices": seg_slices,
            "burgers": burgers,
            "bmag": bmag,
            "mhat": mhat,
            "normal": np.concatenate(normal) if normal else z3,
            "parent": np.concatenate(parent) if parent else np.zeros(0, int),
            "mobile": np.concatenate(mob) if mob else np.zeros(0, bool),
            "mob_node_seg": node_seg,
            "mob_node_parent": (np.concatenate(node_parent) if node_parent
                                else np.zeros(0, int)),
            "mob_node_ids": (np.concatenate(mob_ids) if mob_ids
                             else np.zeros(0, int)),
        }
        return {
            "version": net.topo_version,
            "static": static,
            "sub_ids_lo": np.concatenate(sub_ids_lo) if sub_ids_lo
            else np.zeros(0, int),
            "sub_ids_hi": np.concatenate(sub_ids_hi) if sub_ids_hi
            else np.zeros(0, int),
        }

    def _refresh_dynamic(self, net: DislocationNetwork, cache: dict):
        z3 = np.zeros((0, 3))
        p0_parts, p1_parts, node_parts = [], [], []
        for seg, slo, shi, nlo, nhi in self.seg_slices:
            p0_parts.append(seg.nodes[:-1])
            p1_parts.append(seg.nodes[1:])
            if nlo >= 0:
                node_parts.append(seg.nodes)
        self.p0 = np.concatenate(p0_parts) if p0_parts else z3
        self.p1 = np.concatenate(p1_parts) if p1_parts else z3
        d = self.p1 - self.p0
        self.length = np.linalg.norm(d, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.tangent = np.where(self.length[:, None] > 0,
                                    d / np.maximum(self.length, _EPS)[:, None], 0.0)
        self.mid = 0.5 * (self.p0 + self.p1)
        self.mob_nodes = np.concatenate(node_parts) if node_parts else z3

        pinned = np.zeros(max(net.next_node_id, 1), dtype=bool)
        for j in net.junctions:
            pinned[j.node_id] = True
        self.sub_pinned = pinned[cache["sub_ids_lo"]] & pinned[cache["sub_ids_hi"]]
        self.mob_node_pinned = pinned[self.mob_node_ids] \
            if len(self.mob_node_ids) else np.zeros(0, bool)


def _stress_at(points, point_parents, sub: _SubSegments, applied, mat: MaterialParams):
    """Total stress at points: applied + all sub-segments of other lines."""
    npts = len(points)
    out = np.broadcast_to(np.asarray(applied, float), (npts, 3, 3)).copy()
    if len(sub.p0) == 0 or npts == 0:
        return out
    out += stress_sum_masked(sub.p0, sub.p1, sub.burgers, points, point_parents,
                             sub.parent, mat.shear_modulus, mat.poisson,
                             mat.core_radius)
    return out


class NetworkState:
    """One evaluation of stresses, velocities and observables on a network."""

    net: DislocationNetwork
    sub: _SubSegments
    tau: np.ndarray            # effective (velocity-capped) resolved shear
    node_vel: np.ndarray       # raw glide velocities (saturated at the cap)
    node_g: np.ndarray         # per-node reversal damping factors
    max_speed: float           # fastest undamped node; 0 when all settled
    obs: CoarseObservables


def evaluate(net: DislocationNetwork, applied_stress, mat: MaterialParams) -> NetworkState:
    """Stresses, velocities and observables for the current configuration."""
    state = object.__new__(NetworkState)
    state.net = net
    state.sub = sub = _SubSegments(net)
    applied = np.asarray(applied_stress, float)

    mob_sub = np.flatnonzero(sub.mobile)
    sig_mid = _stress_at(sub.mid[mob_sub], sub.parent[mob_sub], sub, applied, mat)

    # per-sub-segment glide velocity (saturating at the drag cap)
    f_sub = np.cross(np.einsum("sij,sj->si", sig_mid, sub.burgers[mob_sub]),
                     sub.tangent[mob_sub])
    f_sub -= np.einsum("si,si->s", f_sub, sub.normal[mob_sub])[:, None] \
        * sub.normal[mob_sub]
    v_sub = f_sub / mat.drag
    v_norm = np.linalg.norm(v_sub, axis=1)
    clamp = np.minimum(1.0, mat.max_glide_velocity / np.maximum(v_norm, _EPS))
    v_sub = v_sub * clamp[:, None]
    # effective resolved shear consistent with the capped velocity
    tau_raw = np.einsum("si,sij,sj->s", sub.mhat[mob_sub], sig_mid,
                        sub.normal[mob_sub])
    tau_cap = mat.max_glide_velocity * mat.drag / np.maximum(sub.bmag[mob_sub], _EPS)
    state.tau = np.clip(tau_raw, -tau_cap, tau_cap)

    # nodal velocities: mean of the adjacent sub-segment velocities
    nmob = len(sub.mob_nodes)
    node_vel = np.zeros((nmob, 3))
    if nmob:
        row_of = np.full(len(sub.mobile), -1, dtype=int)
        row_of[mob_sub] = np.arange(len(mob_sub))
        for seg, slo, shi, nlo, nhi in sub.seg_slices:
            if nlo < 0:
                continue
            rows = row_of[slo:shi]
            vseg = v_sub[rows]
            nv = node_vel[nlo:nhi]
            nv[0] = vseg[0]
            nv[-1] = vseg[-1]
            if len(vseg) > 1:
                nv[1:-1] = 0.5 * (vseg[:-1] + vseg[1:])
        node_vel[sub.mob_node_pinned] = 0.0
    state.node_vel = node_vel
    node_g = (net.damping_g[sub.mob_node_ids] if nmob else np.ones(0))
    state.node_g = node_g
    if nmob:
        speeds = np.linalg.norm(node_vel, axis=1)
        undamped = speeds[node_g >= 1.0]
        state.max_speed = float(undamped.max()) if len(undamped) else 0.0
    else:
        state.max_speed = 0.0

    # observables
    vol = net.volume
    rho = sub.length.sum() / vol
    Lp = np.zeros((3, 3))
    Vavg = np.zeros(3)
    if len(mob_sub):
        free = (~sub.sub_pinned[mob_sub]).astype(float)
        bmag2 = sub.bmag[mob_sub] ** 2
        coeff = state.tau * bmag2 * sub.length[mob_sub] / mat.drag / vol
        dyad = np.einsum("si,sj->sij", sub.mhat[mob_sub], sub.normal[mob_sub])
        Lp = np.einsum("s,sij->ij", coeff * free, dyad)
        Vavg = np.einsum("s,si->i", free * sub.length[mob_sub] * bmag2 / vol, v_sub)
    state.obs = CoarseObservables(rho=float(rho), Lp=Lp, V=Vavg)
    return state


def observables(net: DislocationNetwork, applied_stress, mat: MaterialParams) -> CoarseObservables:
    """Volume-averaged (rho, Lp, V) for the current configuration."""
    return evaluate(net, applied_stress, mat).obs


# ---------------------------------------------------------------------------
# geometry: open-box boundary handling
# ---------------------------------------------------------------------------

def _exit_distance(origin, direction, box):
    """Distance along +direction from an in-box point to the box surface."""
    t_exit = np.inf
    for ax in range(3):
        d = direction[ax]
        if d > 1e-300:
            t_exit = min(t_exit, (box - origin[ax]) / d)
        elif d < -1e-300:
            t_exit = min(t_exit, -origin[ax] / d)
    return max(t_exit, 0.0)


def _inside(p, box, tol=0.0):
    return bool(np.all(p >= -tol) and np.all(p <= box + tol))


def _clip_polyline(nodes, node_ids, box, id_source):
    """Clip a polyline to the box: pieces inside plus the length removed."""
    tol = 1e-12 * box
    inside = np.all((nodes >= -tol) & (nodes <= box + tol), axis=1)
    if inside.all():
        return [(nodes, node_ids)], 0.0
    removed = 0.0
    pieces = []
    cur_pts, cur_ids = [], []

    def crossing(p_in, p_out):
        d = p_out - p_in
        t_hit = 1.0
        for ax in range(3):
            if abs(d[ax]) < 1e-300:
                continue
            for face in (0.0, box):
                t = (face - p_in[ax]) / d[ax]
                if 1e-12 < t < t_hit:
                    cand = p_in + t * d
                    if _inside(cand, box, 1e-9 * box):
                        t_hit = t
        return p_in + t_hit * d

    for k in range(len(nodes)):
        if inside[k]:
            if not cur_pts and k > 0 and not inside[k - 1]:
                pt = crossing(nodes[k], nodes[k - 1])
                cur_pts.append(pt)
                cur_ids.append(id_source())
                removed += np.linalg.norm(nodes[k - 1] - pt)
            cur_pts.append(nodes[k])
            cur_ids.append(node_ids[k])
        else:
            if cur_pts:
                pt = crossing(nodes[k - 1], nodes[k])
                cur_pts.append(pt)
                cur_ids.append(id_source())
                removed += np.linalg.norm(nodes[k] - pt)
                if len(cur_pts) >= 2:
                    pieces.append((np.array(cur_pts), np.array(cur_ids, dtype=int)))
                cur_pts, cur_ids = [], []
            else:
                if k > 0 and not inside[k - 1]:
                    removed += np.linalg.norm(nodes[k] - nodes[k - 1])
    if len(cur_pts) >= 2:
        pieces.append((np.array(cur_pts), np.array(cur_ids, dtype=int)))
    return pieces, removed


def _point_segment_distance(points, a, b):
    """Distances from points (N,3) to segments a->b (M,3): (N, M)."""
    ab = b - a
    denom = np.einsum("mi,mi->m", ab, ab)
    denom = np.where(denom > 0, denom, 1.0)
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("nmi,mi->nm", ap, ab) / denom, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(points[:, None, :] - closest, axis=2)


# ---------------------------------------------------------------------------
# the dynamics step
# ---------------------------------------------------------------------------

def _form_junctions(net: DislocationNetwork, therm: JunctionParams) -> int:
    """Pin mobile nodes whose line passes within the capture radius of another.

    Proximity is tested at the nodes and at interior sample points of every
    mobile sub-segment, so lines crossing between nodes are captured too;
    the sub-segment's nearest unpinned node takes the pin.
    """
    sub = _SubSegments(net)
    mob_sub = np.flatnonzero(sub.mobile & ~sub.sub_pinned)
    if len(mob_sub) == 0:
        return 0

    # candidate points: sub-segment interior fractions; the pin target is
    # the nearer end node (falling back to the other end if pinned)
    fracs = (0.0, 0.25, 0.5, 0.75, 1.0)
    pts = []
    for f in fracs:
        pts.append(sub.p0[mob_sub] * (1.0 - f) + sub.p1[mob_sub] * f)
    pts = np.concatenate(pts)
    pts_parent = np.tile(sub.parent[mob_sub], len(fracs))
    sub_of_pt = np.tile(mob_sub, len(fracs))
    frac_of_pt = np.repeat(np.array(fracs), len(mob_sub))

    if therm.pin_mobile_mobile:
        obst_rows = np.arange(len(sub.p0))
    else:
        obst_rows = np.flatnonzero(~sub.mobile)
    if len(obst_rows) == 0:
        return 0
    dmat = _point_segment_distance(pts, sub.p0[obst_rows], sub.p1[obst_rows])
    dmat[pts_parent[:, None] == sub.parent[obst_rows][None, :]] = np.inf

    # map each sub-segment row back to its end-node ids
    end_nodes = {}
    for seg, slo, shi, nlo, nhi in sub.seg_slices:
        if nlo < 0:
            continue
        for k, srow in enumerate(range(slo, shi)):
            end_nodes[srow] = (int(seg.node_ids[k]), int(seg.node_ids[k + 1]))

    pinned = net.pinned_node_ids
    formed = 0
    captured = set()
    hits = np.argwhere(dmat <= therm.capture_radius)
    for r, c in hits:
        srow = int(sub_of_pt[r])
        na, nb = end_nodes[srow]
        # nearer end first
        order = (na, nb) if frac_of_pt[r] <= 0.5 else (nb, na)
        nid = next((n for n in order if n not in pinned and n not in captured),
                   None)
        if nid is None:
            continue
        pid = int(sub.parent[obst_rows[c]])
        if (nid, pid) in net.immune:
            continue
        f = float(net.rng.uniform()) if therm.enabled else np.inf
        breaks = net.time + f * therm.max_breaking_time if therm.enabled else np.inf
        net.junctions.append(Junction(nid, pid, net.time, breaks))
        captured.add(nid)
        formed += 1
    return formed


def step_network(net: DislocationNetwork, applied_stress, dt: float,
                 mat: MaterialParams, therm: JunctionParams,
                 state: NetworkState | None = None) -> dict:
    """Advance the network by one explicit step of length dt (fast time).

    Sequence: release junctions past their deadline, move unpinned mobile
    nodes by v*dt, re-terminate line ends on the box surface, clip content
    outside the box, then form new junctions within the capture radius.
    Returns a diagnostics dict; the network is updated in place.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")

    released = 0
    keep = []
    for j in net.junctions:
        if j.breaks_at <= net.time + 1e-18:
            # released nodes must glide away before re-capture on any line
            net.immune[(j.node_id, j.partner_id)] = \
                therm.release_factor * therm.capture_radius
            released += 1
        else:
            keep.append(j)
    net.junctions = keep
    if released:
        # the stress landscape changed; let settled nodes integrate freshly
        net.reset_damping()

    if state is None or released:
        state = evaluate(net, applied_stress, mat)
    sub = state.sub

    if state.max_speed * dt > net.box_size / 10.0:
        raise StepRejected(
            f"displacement {state.max_speed * dt:.3e} m exceeds box/10",
            suggested_dt=0.5 * net.box_size / 10.0 / max(state.max_speed, _EPS))

    # per-node displacements: Euler for undamped nodes, clamped swing for
    # nodes oscillating about a force equilibrium; update damping factors
    speeds = np.linalg.norm(state.node_vel, axis=1)
    disp = state.node_vel * dt
    clamp_len = state.node_g * therm.capture_radius
    norms = np.linalg.norm(disp, axis=1)
    over = norms > clamp_len
    if np.any(over):
        disp[over] *= (clamp_len[over] / np.maximum(norms[over], _EPS))[:, None]
    ids = sub.mob_node_ids
    if len(ids):
        moving = speeds > 0.0
        vprev = net.damping_v[ids]
        valid = net.damping_valid[ids]
        g_old = net.damping_g[ids]
        reversed_ = moving & valid \
            & (np.einsum("ni,ni->n", state.node_vel, vprev) < 0.0)
        g_new = np.where(reversed_, np.maximum(g_old * 0.5, 2.0 ** -12),
                         np.where(moving, np.minimum(g_old * 2.0, 1.0), g_old))
        net.damping_g[ids] = g_new
        net.damping_v[ids] = np.where(moving[:, None], state.node_vel, vprev)
        net.damping_valid[ids] = valid | moving

    moved = np.linalg.norm(disp, axis=1)
    if net.immune:
        arc_of = dict(zip((int(i) for i in sub.mob_node_ids), moved))
        spent = {}
        for (nid, pid), remaining in net.immune.items():
            left = remaining - arc_of.get(nid, 0.0)
            if left > 0:
                spent[(nid, pid)] = left
        net.immune = spent
    for seg, slo, shi, nlo, nhi in sub.seg_slices:
        if nlo < 0:
            continue
        seg.nodes = seg.nodes + disp[nlo:nhi]

    # re-terminate mobile line ends on the surface, then clip to the box
    length_exited = 0.0
    pinned_ids = net.pinned_node_ids
    new_segments = []
    topo_changed = False
    for seg in net.segments:
        if not seg.mobile:
            new_segments.append(seg)
            continue
        pts = seg.nodes
        if len(pts) >= 2:
            for end, nb in ((0, 1), (len(pts) - 1, len(pts) - 2)):
                if int(seg.node_ids[end]) in pinned_ids:
                    continue
                d = pts[end] - pts[nb]
                dn = np.linalg.norm(d)
                if dn <= 0 or not _inside(pts[nb], net.box_size, 1e-9 * net.box_size):
                    continue
                d = d / dn
                t_exit = _exit_distance(pts[nb], d, net.box_size)
                if np.isfinite(t_exit):
                    old = pts[end].copy()
                    pts[end] = pts[nb] + t_exit * d
                    length_exited += max(0.0, np.linalg.norm(old - pts[nb]) - t_exit)
        pieces, removed = _clip_polyline(seg.nodes, seg.node_ids, net.box_size,
                                         lambda: int(net.new_node_ids(1)[0]))
        length_exited += removed
        if len(pieces) == 1 and pieces[0][1].shape == seg.node_ids.shape \
                and np.array_equal(pieces[0][1], seg.node_ids):
            seg.nodes = pieces[0][0]
            new_segments.append(seg)
        else:
            topo_changed = True
            for pts_i, ids_i in pieces:
                piece = Segment(pts_i, ids_i, seg.burgers.copy(),
                                seg.plane_normal.copy(), seg.slip_system, True)
                piece.seg_id = net.next_seg_id
                net.next_seg_id += 1
                new_segments.append(piece)
    kept = [s for s in new_segments if len(s.nodes) >= 2]
    if len(kept) != len(net.segments):
        topo_changed = True
    net.segments = kept
    if topo_changed:
        net.topo_version += 1

    # junctions whose node vanished with its piece are dropped
    live_ids = {int(i) for s in net.segments for i in s.node_ids}
    net.junctions = [j for j in net.junctions if j.node_id in live_ids]

    net.time += dt
    formed = _form_junctions(net, therm)

    return {"released": released, "formed": formed,
            "length_exited": length_exited, "max_speed": state.max_speed}


# ---------------------------------------------------------------------------
# plain-text snapshot
# ---------------------------------------------------------------------------

_SNAPSHOT_VERSION = "mesoplast-network v3"


def _hexf(x: float) -> str:
    return "inf" if np.isinf(x) else float(x).hex()


def _unhexf(s: str) -> float:
    return np.inf if s == "inf" else float.fromhex(s)


def dump_network(net: DislocationNetwork) -> str:
    """Serialize to an exact, versioned plain-text record."""
    lines = [f"# {_SNAPSHOT_VERSION}"]
    lines.append("META " + json.dumps({
        "box_size": float(net.box_size).hex(),
        "time": float(net.time).hex(),
        "next_node_id": int(net.next_node_id),
        "next_seg_id": int(net.next_seg_id),
    }))
    for s in net.segments:
        rec = [str(s.seg_id), "M" if s.mobile else "S", str(s.slip_system)]
        rec += [float(v).hex() for v in s.burgers]
        rec += [float(v).hex() for v in s.plane_normal]
        rec.append(str(len(s.nodes)))
        for nid, p in zip(s.node_ids, s.nodes):
            rec.append(str(int(nid)))
            rec += [float(v).hex() for v in p]
        lines.append("SEG " + " ".join(rec))
    for j in net.junctions:
        lines.append(f"JUN {j.node_id} {j.partner_id} "
                     f"{float(j.formed_at).hex()} {_hexf(j.breaks_at)}")
    for (nid, pid), arc in sorted(net.immune.items()):
        lines.append(f"IMM {nid} {pid} {float(arc).hex()}")
    interesting = np.flatnonzero(net.damping_valid[:net.next_node_id]
                                 | (net.damping_g[:net.next_node_id] != 1.0))
    for nid in interesting:
        g = net.damping_g[nid]
        v = net.damping_v[nid]
        flag = "1" if net.damping_valid[nid] else "0"
        lines.append(f"DMP {nid} {float(g).hex()} {flag} "
                     + " ".join(float(x).hex() for x in v))
    lines.append("RNG " + json.dumps(net.rng.bit_generator.state))
    return "\n".join(lines) + "\n"


def load_network(text: str) -> DislocationNetwork:
    """Restore a network from :func:`dump_network` output."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != f"# {_SNAPSHOT_VERSION}":
        raise ValueError("unrecognized network snapshot version")
    net = None
    for ln in lines[1:]:
        tag, _, rest = ln.partition(" ")
        if tag == "META":
            meta = json.loads(rest)
            net = DislocationNetwork(box_size=float.fromhex(meta["box_size"]))
            net.time = float.fromhex(meta["time"])
            net.next_node_id = int(meta["next_node_id"])
            net.next_seg_id = int(meta["next_seg_id"])
            net._resize_damping(net.next_node_id)
        elif tag == "SEG":
            f = rest.split()
            seg_id, mobile, system = int(f[0]), f[1] == "M", int(f[2])
            burg = np.array([float.fromhex(v) for v in f[3:6]])
            norm = np.array([float.fromhex(v) for v in f[6:9]])
            npts = int(f[9])
            ids, pts = [], []
            cur = 10
            for _ in range(npts):
                ids.append(int(f[cur]))
                pts.append([float.fromhex(v) for v in f[cur + 1:cur + 4]])
                cur += 4
            net.segments.append(Segment(np.array(pts), np.array(ids, dtype=int),
                                        burg, norm, system, mobile, seg_id))
        elif tag == "JUN":
            f = rest.split()
            net.junctions.append(Junction(int(f[0]), int(f[1]),
                                          float.fromhex(f[2]), _unhexf(f[3])))
        elif tag == "IMM":
            f = rest.split()
            net.immune[(int(f[0]), int(f[1]))] = float.fromhex(f[2])
        elif tag == "DMP":
            f = rest.split()
            nid = int(f[0])
            if nid >= len(net.damping_g):
                net._resize_damping(2 * (nid + 1))
            net.damping_g[nid] = float.fromhex(f[1])
            net.damping_valid[nid] = f[2] == "1"
            net.damping_v[nid] = [float.fromhex(x) for x in f[3:6]]
        elif tag == "RNG":
            net.rng.bit_generator.state = json.loads(rest)
    if net is None:
        raise ValueError("snapshot missing META record")
    return net
