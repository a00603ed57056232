"""Quasi-static simulator of a two-finger tendon-driven underactuated hand.

Each finger has two compliant revolute joints with torsion springs and a
single inextensible tendon routed over per-joint moment arms and wound on an
actuator spool, so per finger

    r1 * (q1 - q1_rest) + r2 * (q2 - q2_rest) = spool_radius * actuator_angle

holds at all times and one joint coordinate per finger remains free. A rigid
planar object (a closed polyline cross-section) sits between the fingers.
Every actuator command is resolved into a static equilibrium: the minimizer of

    E = spring energy + one-sided quadratic contact penalties
      + tangential sticking penalties at the distal pads
      + a tiny pose tether (regularizes the contact-free null space)

over (q1_left, q1_right, object pose). Distal pads stick (no-slip within a
step, anchor refreshed between steps, so rolling accumulates across steps);
proximal links are frictionless. The tendon is modeled as an equality
constraint; its multiplier is the tension, recovered from the torque balance
at the distal joint, and the measured actuator torque is tension * spool
radius. Observations expose only actuator angles and torques (plus the action
echo); object pose is internal ground truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .core import Episode, EpisodeMeta, KinestheticState
from .errors import GraspFailed, GraspLost, NonConvergent
from .shapes import BoundaryPolyline, ShapeSpec, make_shape

DEG = math.pi / 180.0

GRAD_TOL = 1e-8
STEP_TOL = 1e-10
MAX_ITER = 500
TRUST_RADIUS = 2.0  # max Newton step norm (mixed rad / mm coordinates)


@dataclass(frozen=True)
class HandConfig:
    """Geometry, stiffness, contact and sensor parameters of the hand."""

    link1_mm: float = 50.0
    link2_mm: float = 50.0
    k1_nmm_per_rad: float = 200.0
    k2_nmm_per_rad: float = 200.0
    rest_angle1_rad: float = 0.0
    rest_angle2_rad: float = 0.0
    moment_arm1_mm: float = 8.0
    moment_arm2_mm: float = 8.0
    spool_radius_mm: float = 10.0
    palm_separation_mm: float = 90.0
    mu_tip: float = 1.2
    mu_proximal: float = 0.0
    torque_noise: float = 3.0          # sigma of additive torque noise (N*mm)
    angle_noise_deg: float = 0.1

    # Contact / solver parameters.
    contact_stiffness: float = 5000.0  # N/mm, one-sided penalty
    contact_smoothing_mm: float = 2e-3  # C2 boundary layer of the penalty
    stick_stiffness: float = 500.0     # N/mm, tangential pad anchor
    # Weak pose spring toward the warm start: stands in for the reset-string
    # support of the rig and makes contact-free pose modes well-posed.
    pose_tether: float = 0.05          # N/mm
    samples_link1: int = 6
    samples_link2: int = 8
    penetration_tol_mm: float = 0.01

    # Episode generation.
    grasp_height_mm: float = 60.0
    place_jitter_mm: float = 5.0
    max_close_steps: int = 150
    squeeze_margin_deg: float = 3.0
    max_place_retries: int = 20
    workspace_mm: tuple = (-60.0, 60.0, 15.0, 115.0)  # xmin, xmax, ymin, ymax

    def __post_init__(self):
        for name in ("link1_mm", "link2_mm", "k1_nmm_per_rad", "k2_nmm_per_rad",
                     "moment_arm1_mm", "moment_arm2_mm", "spool_radius_mm",
                     "palm_separation_mm", "contact_stiffness", "stick_stiffness"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if not (self.mu_tip > self.mu_proximal >= 0):
            raise ValueError("need mu_tip > mu_proximal >= 0")

    def to_json(self) -> str:
        d = asdict(self)
        d["workspace_mm"] = list(self.workspace_mm)
        return json.dumps(d, indent=2)

    @staticmethod
    def from_json(text: str) -> "HandConfig":
        d = json.loads(text)
        if "workspace_mm" in d:
            d["workspace_mm"] = tuple(d["workspace_mm"])
        return HandConfig(**d)


@dataclass(frozen=True)
class FingerContact:
    """Deepest contact of one finger at an equilibrium."""

    link: int              # 1 = proximal, 2 = distal
    arclength_mm: float    # along the link, from its proximal joint
    point_obj: tuple       # closest boundary point, object frame
    point_world: tuple
    normal_world: tuple    # outward object normal at the contact
    depth_mm: float        # penetration depth (>= 0)


@dataclass(frozen=True)
class HandObjectState:
    """Full simulator state at one equilibrium (includes hidden object pose)."""

    q: tuple               # (q1_l, q2_l, q1_r, q2_r) rad
    actuator_deg: tuple    # commanded cumulative actuator angles (deg)
    pose: tuple            # object (x_mm, y_mm, theta_rad)
    contacts: tuple        # per finger: FingerContact | None
    tensions: tuple        # noise-free tendon tensions (N)
    energy: float
    grad_norm: float

    @property
    def n_active_contacts(self) -> int:
        return sum(c is not None for c in self.contacts)


@dataclass(frozen=True)
class _Anchor:
    finger: int
    arclength_mm: float
    point_obj: np.ndarray
    tangent_world: np.ndarray


# ---------------------------------------------------------------------------
# Energy model
# ---------------------------------------------------------------------------

class _EnergyModel:
    """E(u) with analytic gradient and Gauss-Newton Hessian.

    Reduced coordinates u = [q1_left, q1_right, x, y, theta]; the distal joint
    of each finger is eliminated through the tendon constraint.
    """

    def __init__(self, config: HandConfig, poly: BoundaryPolyline,
                 actuator_deg: np.ndarray, anchors: tuple,
                 tether_pose: np.ndarray):
        self.cfg = config
        self.poly = poly
        self.anchors = anchors
        self.tether_pose = np.asarray(tether_pose, dtype=np.float64)
        c = config
        self.kappa = -c.moment_arm1_mm / c.moment_arm2_mm  # dq2/dq1
        th_rad = np.asarray(actuator_deg, dtype=np.float64) * DEG
        # q2 = q2_rest + q2_gain * theta_act + kappa * (q1 - q1_rest)
        self.q2_gain = c.spool_radius_mm / c.moment_arm2_mm
        self.q2_base = c.rest_angle2_rad + self.q2_gain * th_rad \
            - self.kappa * c.rest_angle1_rad
        self.base = np.array([[-c.palm_separation_mm / 2.0, 0.0],
                              [+c.palm_separation_mm / 2.0, 0.0]])
        self.sigma = np.array([1.0, -1.0])  # inward flexion sign per finger
        # Sample arclengths along each link.
        self.s1 = np.linspace(0.2, 1.0, c.samples_link1) * c.link1_mm
        self.s2 = np.linspace(0.06, 1.0, c.samples_link2) * c.link2_mm
        n1, n2 = c.samples_link1, c.samples_link2
        self.n_per_finger = n1 + n2
        # Static per-sample metadata, both fingers stacked.
        self.pt_finger = np.repeat([0, 1], self.n_per_finger)
        self.pt_link = np.tile(np.r_[np.ones(n1), 2 * np.ones(n2)], 2).astype(int)
        self.pt_s = np.tile(np.r_[self.s1, self.s2], 2)

    def split(self, u):
        q1 = u[:2]
        q2 = self.q2_base + self.kappa * q1
        pose = u[2:]
        return q1, q2, pose

    def sample_points(self, q1, q2, pose):
        """World positions of all finger sample points plus their derivatives."""
        c = self.cfg
        th2 = q1 + q2
        s1t, c1t = np.sin(q1), np.cos(q1)
        s2t, c2t = np.sin(th2), np.cos(th2)
        e1 = np.empty((2, 2))
        e1[:, 0], e1[:, 1] = self.sigma * s1t, c1t
        e2 = np.empty((2, 2))
        e2[:, 0], e2[:, 1] = self.sigma * s2t, c2t
        d1 = np.empty((2, 2))
        d1[:, 0], d1[:, 1] = self.sigma * c1t, -s1t
        d2 = np.empty((2, 2))
        d2[:, 0], d2[:, 1] = self.sigma * c2t, -s2t
        joint2 = self.base + c.link1_mm * e1

        pw = np.empty((2 * self.n_per_finger, 2))
        dp_dth1 = np.empty_like(pw)
        dp_dth2 = np.zeros_like(pw)
        n1 = c.samples_link1
        for f in range(2):
            lo = f * self.n_per_finger
            sl1 = slice(lo, lo + n1)
            sl2 = slice(lo + n1, lo + self.n_per_finger)
            pw[sl1] = self.base[f] + self.s1[:, None] * e1[f]
            dp_dth1[sl1] = self.s1[:, None] * d1[f]
            pw[sl2] = joint2[f] + self.s2[:, None] * e2[f]
            dp_dth1[sl2] = c.link1_mm * d1[f]
            dp_dth2[sl2] = self.s2[:, None] * d2[f]
        return pw, dp_dth1, dp_dth2

    def _finger_point(self, finger, s, q1, q2):
        """One distal-link point and its angle derivatives (for anchors)."""
        c = self.cfg
        th1, th2 = q1[finger], q1[finger] + q2[finger]
        sg = self.sigma[finger]
        e1 = np.array([sg * math.sin(th1), math.cos(th1)])
        e2 = np.array([sg * math.sin(th2), math.cos(th2)])
        d1 = np.array([sg * math.cos(th1), -math.sin(th1)])
        d2 = np.array([sg * math.cos(th2), -math.sin(th2)])
        p = self.base[finger] + c.link1_mm * e1 + s * e2
        return p, c.link1_mm * d1, s * d2

    def evaluate(self, u, order=2):
        """Energy and (optionally) its exact derivatives at u.

        order 0: (E, None, None, info) -- cheap path for line searches.
        order 1: adds the analytic gradient.
        order 2: adds the analytic Hessian (exact, including the distance
                 field curvature at vertex-closest contacts).
        """
        c = self.cfg
        q1, q2, pose = self.split(u)
        x, y, phi = pose
        cs, sn = math.cos(phi), math.sin(phi)
        R = np.array([[cs, -sn], [sn, cs]])
        t = np.array([x, y])

        E = 0.5 * c.k1_nmm_per_rad * np.sum((q1 - c.rest_angle1_rad) ** 2) \
            + 0.5 * c.k2_nmm_per_rad * np.sum((q2 - c.rest_angle2_rad) ** 2)
        dq = pose - self.tether_pose
        kr = c.pose_tether * 400.0  # rotation tether, lever ~20 mm
        E += 0.5 * c.pose_tether * (dq[0] ** 2 + dq[1] ** 2) + 0.5 * kr * dq[2] ** 2

        g = None if order < 1 else np.zeros(5)
        H = None if order < 2 else np.zeros((5, 5))
        if order >= 1:
            g[:2] = c.k1_nmm_per_rad * (q1 - c.rest_angle1_rad) \
                + self.kappa * c.k2_nmm_per_rad * (q2 - c.rest_angle2_rad)
            g[2] = c.pose_tether * dq[0]
            g[3] = c.pose_tether * dq[1]
            g[4] = kr * dq[2]
        if order >= 2:
            H[0, 0] = H[1, 1] = c.k1_nmm_per_rad + self.kappa ** 2 * c.k2_nmm_per_rad
            H[2, 2] = H[3, 3] = c.pose_tether
            H[4, 4] = kr

        dE_dq2 = c.k2_nmm_per_rad * (q2 - c.rest_angle2_rad)  # tension recovery

        pw, dp_dth1, dp_dth2 = self.sample_points(q1, q2, pose)
        v_all = pw - t
        # Cheap exact lower bound |p| - R_poly rules out far-away samples.
        lower = np.sqrt(np.einsum("kj,kj->k", v_all, v_all)) \
            - self.poly.bounding_radius
        cand = lower < 1.0
        K = len(pw)
        d = np.maximum(lower, 1.0)
        cp = np.zeros((K, 2))
        n_o = np.zeros((K, 2))
        at_vx = np.zeros(K, dtype=bool)
        if np.any(cand):
            po = v_all[cand] @ R
            dc, cpc, noc, vxc = self.poly.signed_distance_batch(po)
            d[cand], cp[cand], n_o[cand], at_vx[cand] = dc, cpc, noc, vxc
        active = d < 0.0
        info = {"d": d, "cp": cp, "n_o": n_o, "pw": pw, "R": R, "t": t,
                "q1": q1, "q2": q2}

        if np.any(active):
            ai = np.nonzero(active)[0]
            da = d[ai]
            # C2-smoothed one-sided penalty: quadratic in the depth y = -d,
            # cubically blended to zero over a thin boundary layer.
            y = -da
            delta = c.contact_smoothing_mm
            small = y < delta
            k = c.contact_stiffness
            phi = np.where(small, y ** 3 / (6 * delta),
                           0.5 * (y - 0.5 * delta) ** 2 + delta ** 2 / 24.0)
            E += k * float(phi.sum())
            if order >= 1:
                w1 = -k * np.where(small, y ** 2 / (2 * delta), y - 0.5 * delta)
                nw = n_o[ai] @ R.T                  # outward normal, world
                A = len(ai)
                fingers = self.pt_finger[ai]
                rows = np.arange(A)
                # World-frame velocity of each point per unit of the owning q1.
                vq = dp_dth1[ai] + (1.0 + self.kappa) * dp_dth2[ai]
                v = v_all[ai]
                dd = np.zeros((A, 5))
                dd[rows, fingers] = np.einsum("kj,kj->k", nw, vq)
                dd[:, 2:4] = -nw
                dd[:, 4] = nw[:, 0] * v[:, 1] - nw[:, 1] * v[:, 0]
                g += dd.T @ w1
                dd_dth2 = np.einsum("kj,kj->k", nw, dp_dth2[ai])
                np.add.at(dE_dq2, fingers, w1 * dd_dth2)
                if order >= 2:
                    w2 = k * np.where(small, y / delta, 1.0)
                    H += np.einsum("k,ki,kj->ij", w2, dd, dd)
                    # Distance-field curvature (I - nn^T)/d at vertex-closest
                    # points, weighted by dE/dd; finite since w1 ~ d near 0.
                    vx = at_vx[ai]
                    if np.any(vx):
                        cv = w1[vx] / da[vx]
                        W = np.zeros((A, 2, 5))
                        W[rows, :, fingers] = vq
                        W[:, 0, 2] = -1.0
                        W[:, 1, 3] = -1.0
                        W[:, 0, 4] = v[:, 1]
                        W[:, 1, 4] = -v[:, 0]
                        WtW = np.einsum("kja,kjb->kab", W[vx], W[vx])
                        ddv = dd[vx]
                        H += np.einsum(
                            "k,kab->ab", cv,
                            WtW - np.einsum("ka,kb->kab", ddv, ddv))
                    # Second position derivatives (rotation of links and pose).
                    th2 = q1 + q2
                    e1 = np.stack([self.sigma * np.sin(q1), np.cos(q1)], axis=1)
                    e2 = np.stack([self.sigma * np.sin(th2), np.cos(th2)], axis=1)
                    g2 = (1.0 + self.kappa) ** 2
                    pdd = np.where(
                        (self.pt_link[ai] == 1)[:, None],
                        -self.pt_s[ai, None] * e1[fingers],
                        -c.link1_mm * e1[fingers] - g2 * self.pt_s[ai, None] * e2[fingers])
                    S = np.zeros((A, 5, 5))
                    S[rows, fingers, fingers] = np.einsum("kj,kj->k", nw, pdd)
                    cr_q = nw[:, 0] * vq[:, 1] - nw[:, 1] * vq[:, 0]
                    S[rows, fingers, 4] = cr_q
                    S[rows, 4, fingers] = cr_q
                    S[:, 2, 4] = S[:, 4, 2] = nw[:, 1]
                    S[:, 3, 4] = S[:, 4, 3] = -nw[:, 0]
                    S[:, 4, 4] = -np.einsum("kj,kj->k", nw, v)
                    H += np.einsum("k,kab->ab", w1, S)

        for a in self.anchors:
            p_fin, dpf_dth1, dpf_dth2 = self._finger_point(
                a.finger, a.arclength_mm, q1, q2)
            p_obj = t + R @ a.point_obj
            th = a.tangent_world
            rho = float(th @ (p_fin - p_obj))
            E += 0.5 * c.stick_stiffness * rho * rho
            if order >= 1:
                vq = dpf_dth1 + (1.0 + self.kappa) * dpf_dth2
                dr = np.zeros(5)
                dr[a.finger] = th @ vq
                dr[2:4] = -th
                w = R @ np.array([-a.point_obj[1], a.point_obj[0]])
                dr[4] = -float(th @ w)
                g += c.stick_stiffness * rho * dr
                dE_dq2[a.finger] += c.stick_stiffness * rho * float(th @ dpf_dth2)
                if order >= 2:
                    Ha = c.stick_stiffness * np.outer(dr, dr)
                    # rho'' terms: link rotation plus object-frame rotation.
                    f = a.finger
                    sg = self.sigma[f]
                    th1v, th2v = q1[f], q1[f] + q2[f]
                    e1f = np.array([sg * math.sin(th1v), math.cos(th1v)])
                    e2f = np.array([sg * math.sin(th2v), math.cos(th2v)])
                    pdd = -c.link1_mm * e1f \
                        - (1.0 + self.kappa) ** 2 * a.arclength_mm * e2f
                    rr = c.stick_stiffness * rho
                    Ha[f, f] += rr * float(th @ pdd)
                    hpp = rr * float(th @ (R @ a.point_obj))
                    Ha[4, 4] += hpp
                    H += Ha

        info["tensions"] = dE_dq2 / c.moment_arm2_mm
        return E, g, H, info


# ---------------------------------------------------------------------------
# Equilibrium solver
# ---------------------------------------------------------------------------

def _minimize(model: _EnergyModel, u0: np.ndarray):
    """Levenberg-damped exact-Newton descent, monotone in energy.

    Converges when the gradient norm drops below GRAD_TOL or the accepted (or
    fully damped) step falls below STEP_TOL.
    """
    u = u0.astype(np.float64).copy()
    E, g, H, _ = model.evaluate(u, order=2)
    lam = 1e-6
    for _ in range(MAX_ITER):
        gnorm = float(np.linalg.norm(g))
        if gnorm < GRAD_TOL:
            return u, E, gnorm
        step = _solve_damped(H, g, lam)
        if not np.all(np.isfinite(step)):
            lam = max(lam * 10.0, 1e-4)
            continue
        snorm = float(np.linalg.norm(step))
        if snorm < STEP_TOL:
            return u, E, gnorm
        if snorm > TRUST_RADIUS:
            step = step * (TRUST_RADIUS / snorm)
        alpha, accepted = 1.0, False
        for _ls in range(15):
            u_new = u + alpha * step
            E_new, _, _, _ = model.evaluate(u_new, order=0)
            if E_new <= E + 1e-12 * (1.0 + abs(E)):
                accepted = True
                break
            alpha *= 0.5
        if accepted:
            moved = alpha * float(np.linalg.norm(step))
            u = u_new
            E, g, H, _ = model.evaluate(u, order=2)
            # Damping tracks how far the local quadratic model can be trusted.
            if alpha >= 0.99:
                lam = max(lam * 0.25, 1e-9)
            elif alpha < 0.1:
                lam = min(lam * 4.0, 1e8)
            if moved < STEP_TOL:
                return u, E, float(np.linalg.norm(g))
        else:
            lam *= 10.0
            if lam > 1e11:
                raise NonConvergent(f"line search stalled at |g|={gnorm:.2e}")
    raise NonConvergent(
        f"no convergence in {MAX_ITER} iterations, |g|={np.linalg.norm(g):.2e}")


def _solve_damped(H, g, lam):
    try:
        return np.linalg.solve(H + lam * np.eye(len(g)), -g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(H + (lam + 1e-8) * np.eye(len(g)), -g,
                               rcond=None)[0]


def _contacts_from_info(model: _EnergyModel, info) -> tuple:
    """Per-finger deepest contact (distal preferred) from an evaluated state."""
    cfg = model.cfg
    d, cp, n_o, pw = info["d"], info["cp"], info["n_o"], info["pw"]
    R = info["R"]
    out = []
    for f in range(2):
        mask = (model.pt_finger == f) & (d < 0.0)
        if not np.any(mask):
            out.append(None)
            continue
        idx = np.nonzero(mask)[0]
        distal = idx[model.pt_link[idx] == 2]
        pick_from = distal if len(distal) else idx
        k = pick_from[np.argmin(d[pick_from])]
        out.append(FingerContact(
            link=int(model.pt_link[k]),
            arclength_mm=float(model.pt_s[k]),
            point_obj=tuple(cp[k]),
            point_world=tuple(info["t"] + R @ cp[k]),
            normal_world=tuple(n_o[k] @ R.T),
            depth_mm=float(-d[k]),
        ))
    return tuple(out)


def _anchors_from_contacts(state: HandObjectState) -> tuple:
    """Sticking anchors for the next step: distal contacts of the last one."""
    anchors = []
    for f, c in enumerate(state.contacts):
        if c is None or c.link != 2:
            continue
        n = np.asarray(c.normal_world)
        anchors.append(_Anchor(
            finger=f,
            arclength_mm=c.arclength_mm,
            point_obj=np.asarray(c.point_obj),
            tangent_world=np.array([-n[1], n[0]]),
        ))
    return tuple(anchors)


def solve_equilibrium(config: HandConfig, poly: BoundaryPolyline,
                      actuator_deg, pose_guess, q_guess=None,
                      anchors: tuple = ()) -> HandObjectState:
    """Resolve actuator angles into a static equilibrium near the guess."""
    actuator_deg = np.asarray(actuator_deg, dtype=np.float64)
    pose_guess = np.asarray(pose_guess, dtype=np.float64)
    reach = config.link1_mm + config.link2_mm
    radius = math.hypot(*pose_guess[:2])
    if radius > math.hypot(config.palm_separation_mm / 2.0, reach) + 60.0:
        raise GraspLost("object pose is outside the reach of both fingers")
    model = _EnergyModel(config, poly, actuator_deg, anchors, pose_guess)
    if q_guess is None:
        # Split the commanded flexion evenly between the joints.
        th_rad = actuator_deg * DEG
        total = config.spool_radius_mm * th_rad / (
            config.moment_arm1_mm + config.moment_arm2_mm)
        q1 = config.rest_angle1_rad + total
    else:
        q1 = np.asarray(q_guess, dtype=np.float64)[[0, 2]]
    u0 = np.r_[q1, pose_guess]
    u, E, gnorm = _minimize(model, u0)
    _, _, _, info = model.evaluate(u, order=1)
    q1f, q2f, pose = model.split(u)
    return HandObjectState(
        q=(float(q1f[0]), float(q2f[0]), float(q1f[1]), float(q2f[1])),
        actuator_deg=tuple(actuator_deg),
        pose=tuple(pose),
        contacts=_contacts_from_info(model, info),
        tensions=tuple(info["tensions"]),
        energy=float(E),
        grad_norm=gnorm,
    )


def equilibrium_energy_model(config: HandConfig, poly: BoundaryPolyline,
                             state: HandObjectState) -> tuple:
    """The (model, u) pair describing the energy landscape at `state`.

    The anchors are rebuilt the same way `step` builds them, so evaluating the
    model at u reproduces the solved equilibrium. Used by verification probes
    (finite-difference gradients, local-minimality checks).
    """
    model = _EnergyModel(config, poly, np.asarray(state.actuator_deg),
                         _anchors_from_contacts(state),
                         np.asarray(state.pose))
    u = np.r_[state.q[0], state.q[2], state.pose]
    return model, u


def measured_torque(config: HandConfig, state: HandObjectState,
                    rng: np.random.Generator | None = None) -> tuple:
    """Actuator torques: tendon tension times spool radius, plus sensor noise."""
    tau = np.asarray(state.tensions) * config.spool_radius_mm
    if rng is not None and config.torque_noise > 0:
        tau = tau + rng.normal(0.0, config.torque_noise, size=2)
    return float(tau[0]), float(tau[1])


def step(config: HandConfig, poly: BoundaryPolyline, state: HandObjectState,
         action, rng: np.random.Generator | None = None,
         timestamp_index: int = 0):
    """Advance the actuators by one action and re-solve the equilibrium.

    Returns (new_state, observation, dropped). The observation carries the
    commanded cumulative actuator angles and the tendon torques, each with
    additive Gaussian sensor noise when an rng is supplied.
    """
    action = np.asarray(action, dtype=np.int64)
    if action.shape != (2,) or np.any(np.abs(action) > 1):
        raise ValueError(f"action must be two values in {{-1, 0, 1}}, got {action}")
    th_new = np.asarray(state.actuator_deg) + action
    new_state = solve_equilibrium(
        config, poly, th_new, pose_guess=state.pose, q_guess=state.q,
        anchors=_anchors_from_contacts(state))

    angles = th_new.astype(np.float64)
    if rng is not None and config.angle_noise_deg > 0:
        angles = angles + rng.normal(0.0, config.angle_noise_deg, size=2)
    tau_l, tau_r = measured_torque(config, new_state, rng)
    obs = KinestheticState(
        motor_angle_left=float(angles[0]),
        motor_angle_right=float(angles[1]),
        motor_torque_left=tau_l,
        motor_torque_right=tau_r,
        action_left=int(action[0]),
        action_right=int(action[1]),
        timestamp_index=timestamp_index,
    )
    x, y, _ = new_state.pose
    xmin, xmax, ymin, ymax = config.workspace_mm
    dropped = (new_state.n_active_contacts < 2
               or not (xmin <= x <= xmax and ymin <= y <= ymax))
    return new_state, obs, dropped


# ---------------------------------------------------------------------------
# Action scripts and episode generation
# ---------------------------------------------------------------------------

# Fixed tail segment; net-zero drift, shared by every episode.
_MIXED_TAIL = np.array([
    (1, 0), (0, -1), (-1, 1), (1, 1), (0, -1), (-1, 0),
    (1, -1), (-1, 1), (1, 0), (-1, 1), (0, -1), (0, 0),
], dtype=np.int64)

# (d_left, d_right, fraction of episode); a closed loop in actuator space so
# that any cyclic phase shift keeps excursions bounded.
_BASE_SEGMENTS = (
    (1, 1, 0.12), (1, -1, 0.08), (-1, 1, 0.16), (1, -1, 0.16),
    (-1, 1, 0.16), (1, -1, 0.08), (-1, -1, 0.12),
)


@dataclass(frozen=True)
class ScriptFamily:
    """Pre-defined squeeze/shift/release action pattern with a random phase.

    The base pattern is shared by every object; per-episode randomness is a
    cyclic rotation of it (plus the initial grasp pose). With a fixed phase the
    sampled script is the base pattern itself.
    """

    z: int = 100
    randomize_phase: bool = True

    def base_pattern(self) -> np.ndarray:
        lens = [int(round(frac * self.z)) for _, _, frac in _BASE_SEGMENTS]
        parts = [np.tile([(dl, dr)], (n, 1))
                 for (dl, dr, _), n in zip(_BASE_SEGMENTS, lens) if n > 0]
        body = np.vstack(parts).astype(np.int64)
        tail_len = self.z - len(body)
        if tail_len < 0:
            return body[:self.z]
        tail = np.tile(_MIXED_TAIL, (tail_len // len(_MIXED_TAIL) + 1, 1))
        return np.vstack([body, tail[:tail_len]])

    def sample(self, rng: np.random.Generator | None) -> np.ndarray:
        base = self.base_pattern()
        if self.randomize_phase and rng is not None:
            base = np.roll(base, int(rng.integers(0, self.z)), axis=0)
        return base


def _close_grasp(config: HandConfig, poly: BoundaryPolyline, pose0,
                 extra_squeeze_deg: int):
    """Close both actuators until both distal pads touch, then squeeze extra.

    Returns the secured state, or None when the placement is infeasible.
    """
    th = np.zeros(2)
    try:
        state = solve_equilibrium(config, poly, th, pose0)
    except NonConvergent:
        return None
    if state.n_active_contacts > 0:  # object overlaps the open hand
        return None

    def distal_secured(s):
        return all(c is not None and c.link == 2 for c in s.contacts)

    for _ in range(config.max_close_steps):
        if distal_secured(state):
            break
        th = th + 1.0
        try:
            state = solve_equilibrium(config, poly, th, state.pose,
                                      q_guess=state.q,
                                      anchors=_anchors_from_contacts(state))
        except NonConvergent:
            return None
    else:
        return None
    for _ in range(extra_squeeze_deg):
        th = th + 1.0
        try:
            state = solve_equilibrium(config, poly, th, state.pose,
                                      q_guess=state.q,
                                      anchors=_anchors_from_contacts(state))
        except NonConvergent:
            return None
    return state


def run_scripted_episode(config: HandConfig, poly: BoundaryPolyline,
                         pose0, script: np.ndarray,
                         rng: np.random.Generator | None,
                         label: int, meta: EpisodeMeta):
    """Close a grasp at pose0 and execute the script; None when undroppable.

    Early drops truncate the episode (flagged in the meta); the drop sample is
    kept. Noise-free when rng is None.
    """
    script = np.asarray(script, dtype=np.int64)
    cum = np.cumsum(script, axis=0)
    worst_release = float(min(0.0, cum.min()))
    extra = int(math.ceil(config.squeeze_margin_deg - worst_release))
    state = _close_grasp(config, poly, pose0, extra)
    if state is None:
        return None
    states = []
    dropped_early, drop_step = False, -1
    for t in range(len(script)):
        state, obs, dropped = step(config, poly, state, script[t], rng=rng,
                                   timestamp_index=t)
        states.append(obs)
        if dropped and t < len(script) - 1:
            dropped_early, drop_step = True, t
            break
    meta = replace(meta, dropped_early=dropped_early, drop_step=drop_step)
    return Episode(states=tuple(states), label=label, meta=meta)


def generate_episode(config: HandConfig, spec: ShapeSpec,
                     script_family: ScriptFamily, rng: np.random.Generator,
                     label: int = 0, seed: int = 0) -> Episode:
    """One grasp-manipulate trial: random initial pose, random script phase."""
    poly = make_shape(spec.kind, spec.scale)
    for _ in range(config.max_place_retries):
        x0 = float(rng.uniform(-config.place_jitter_mm, config.place_jitter_mm))
        th0 = float(rng.uniform(-math.pi, math.pi))
        pose0 = (x0, config.grasp_height_mm, th0)
        script = script_family.sample(rng)
        meta = EpisodeMeta(seed=seed, shape_id=spec.kind.value, scale=spec.scale)
        try:
            ep = run_scripted_episode(config, poly, pose0, script, rng, label, meta)
        except NonConvergent:
            ep = None
        if ep is not None:
            return ep
    raise GraspFailed(
        f"no feasible grasp of {spec.kind.value} (scale {spec.scale:.3f}) "
        f"after {config.max_place_retries} placements")
