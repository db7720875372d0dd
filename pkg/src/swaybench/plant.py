"""Double-inverted-pendulum body on a tilting support surface.

State uses absolute segment angles (leg-in-space, trunk-in-space) so that
platform tilt enters only through sensor readouts and the passive ankle
spring reference, never as an inertial force: the ankle joint is collocated
with the platform rotation axis.

The hot path (one RK4 step of the nonlinear dynamics) is numba-compiled;
closed-loop trial runners in the controllers module call it per step.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import ConfigError

FALL_LIMIT_RAD = math.pi / 2

# Parameter array layout consumed by the numba kernels.
_P_M1, _P_C1, _P_L1, _P_I1 = 0, 1, 2, 3
_P_M2, _P_C2, _P_L2, _P_I2 = 4, 5, 6, 7
_P_G, _P_K1, _P_B1, _P_K2, _P_B2 = 8, 9, 10, 11, 12
N_PARAMS = 13


@dataclass(frozen=True)
class DipParams:
    """Anthropometric and passive-joint parameters.

    Defaults follow a Winter-style segment split of an 80 kg / 1.80 m body
    (legs = link 1, head-arms-trunk = link 2, feet grounded); they are
    plumbing defaults, not measured values, and every test that depends on
    them is parameter-relative.
    """

    m1: float  # both legs [kg]
    c1: float  # leg COM above ankle [m]
    l1: float  # ankle to hip [m]
    i1: float  # legs inertia about own COM [kg m^2]
    m2: float  # head-arms-trunk [kg]
    c2: float  # HAT COM above hip [m]
    l2: float  # HAT length [m]
    i2: float  # HAT inertia about own COM [kg m^2]
    g: float = 9.81
    k_ankle: float = 0.0  # passive ankle stiffness, references the foot [Nm/rad]
    b_ankle: float = 0.0  # [Nm s/rad]
    k_hip: float = 0.0  # passive hip stiffness, references link 1 [Nm/rad]
    b_hip: float = 0.0
    hip_lock_stiffness: float = 1.0e5  # [Nm/rad], SIP mode

    def __post_init__(self):
        if min(self.m1, self.m2, self.c1, self.c2, self.l1, self.l2) <= 0:
            raise ConfigError("masses, lengths and COM offsets must be > 0")
        if self.i1 < 0 or self.i2 < 0:
            raise ConfigError("inertias must be >= 0")

    @classmethod
    def default(cls, total_mass: float = 80.0, height: float = 1.80) -> "DipParams":
        m1 = 0.293 * total_mass
        m2 = 0.678 * total_mass
        l1 = 0.530 * height
        l2 = 0.470 * height
        c1 = 0.55 * l1
        c2 = 0.35 * l2
        return cls(
            m1=m1,
            c1=c1,
            l1=l1,
            i1=m1 * (0.35 * l1) ** 2,
            m2=m2,
            c2=c2,
            l2=l2,
            i2=m2 * (0.40 * l2) ** 2,
            # Intrinsic muscle-tone stiffness/damping; this is also the only
            # pathway coupling platform tilt into a purely space-referenced
            # controller.
            k_ankle=120.0,
            b_ankle=20.0,
            k_hip=15.0,
            b_hip=4.0,
        )

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.m1, self.c1, self.l1, self.i1,
                self.m2, self.c2, self.l2, self.i2,
                self.g, self.k_ankle, self.b_ankle, self.k_hip, self.b_hip,
            ]
        )

    def to_dict(self) -> dict:
        return {
            "m1_kg": self.m1, "c1_m": self.c1, "l1_m": self.l1,
            "i1_kgm2": self.i1, "m2_kg": self.m2, "c2_m": self.c2,
            "l2_m": self.l2, "i2_kgm2": self.i2, "g_ms2": self.g,
            "k_ankle": self.k_ankle, "b_ankle": self.b_ankle,
            "k_hip": self.k_hip, "b_hip": self.b_hip,
            "hip_lock_stiffness": self.hip_lock_stiffness,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DipParams":
        try:
            return cls(
                m1=float(d["m1_kg"]), c1=float(d["c1_m"]), l1=float(d["l1_m"]),
                i1=float(d["i1_kgm2"]), m2=float(d["m2_kg"]), c2=float(d["c2_m"]),
                l2=float(d["l2_m"]), i2=float(d["i2_kgm2"]),
                g=float(d.get("g_ms2", 9.81)),
                k_ankle=float(d.get("k_ankle", 0.0)),
                b_ankle=float(d.get("b_ankle", 0.0)),
                k_hip=float(d.get("k_hip", 0.0)),
                b_hip=float(d.get("b_hip", 0.0)),
                hip_lock_stiffness=float(d.get("hip_lock_stiffness", 1.0e5)),
            )
        except KeyError as exc:
            raise ConfigError(f"plant config missing key {exc}") from exc

    def with_hip_locked(self) -> "DipParams":
        """SIP mode: stiff hip spring with near-critical damping."""
        i_trunk = self.i2 + self.m2 * self.c2**2
        return replace(
            self,
            k_hip=self.hip_lock_stiffness,
            b_hip=2.0 * math.sqrt(self.hip_lock_stiffness * i_trunk),
        )

    @property
    def mgh_total(self) -> float:
        """Gravitational stiffness of the rigid body about the ankle."""
        return (self.m1 * self.c1 + self.m2 * (self.l1 + self.c2)) * self.g

    @property
    def mgh_trunk(self) -> float:
        """Gravitational stiffness of the trunk about the hip."""
        return self.m2 * self.c2 * self.g

    @property
    def inertia_about_ankle(self) -> float:
        return (
            self.i1
            + self.m1 * self.c1**2
            + self.m2 * (self.l1 + self.c2) ** 2
            + self.i2
        )

    @property
    def inertia_trunk_about_hip(self) -> float:
        return self.i2 + self.m2 * self.c2**2


@dataclass(frozen=True)
class DipState:
    alpha_ls: float  # leg-in-space angle [rad]
    alpha_ts: float  # trunk-in-space angle [rad]
    omega_ls: float = 0.0  # [rad/s]
    omega_ts: float = 0.0
    t: float = 0.0

    @property
    def fallen(self) -> bool:
        return abs(self.alpha_ls) >= FALL_LIMIT_RAD or abs(self.alpha_ts) >= FALL_LIMIT_RAD


@dataclass(frozen=True)
class SensorSet:
    """Readouts available to the controllers (perfect sensors)."""

    alpha_bf: float  # body-COM angle relative to the foot [rad]
    alpha_bs: float  # body-COM-in-space angle [rad]
    alpha_ts: float  # trunk-in-space (vestibular) [rad]
    vest_star: float  # leg-in-space reconstruction [rad]
    q1: float  # ankle joint angle (leg vs foot) [rad]
    q2: float  # hip joint angle (trunk vs leg) [rad]
    alpha_bf_rate: float
    alpha_bs_rate: float
    alpha_ts_rate: float
    vest_star_rate: float
    q1_rate: float
    q2_rate: float


@dataclass(frozen=True)
class Linearization:
    b0: np.ndarray  # 2x2 inertia matrix, coordinates (leg-in-space, hip)
    g0: np.ndarray  # 2x2 gravity matrix


@njit(cache=True)
def _accel(th1, th2, om1, om2, tau1, tau2, tilt, tilt_rate, p):
    """Angular accelerations of the two-link dynamics in absolute angles."""
    m1 = p[0]; c1 = p[1]; l1 = p[2]; i1 = p[3]
    m2 = p[4]; c2 = p[5]; i2 = p[7]
    g = p[8]; k1 = p[9]; b1 = p[10]; k2 = p[11]; b2 = p[12]

    # Joint torques: active plus passive (ankle references the foot, hip
    # references link 1).
    t_ankle = tau1 - k1 * (th1 - tilt) - b1 * (om1 - tilt_rate)
    t_hip = tau2 - k2 * (th2 - th1) - b2 * (om2 - om1)

    m11 = i1 + m1 * c1 * c1 + m2 * l1 * l1
    m22 = i2 + m2 * c2 * c2
    h = m2 * l1 * c2
    sd = math.sin(th1 - th2)
    m12 = h * math.cos(th1 - th2)

    g1 = (m1 * c1 + m2 * l1) * g * math.sin(th1)
    g2 = m2 * c2 * g * math.sin(th2)

    rhs1 = (t_ankle - t_hip) + g1 - h * sd * om2 * om2
    rhs2 = t_hip + g2 + h * sd * om1 * om1

    det = m11 * m22 - m12 * m12
    a1 = (m22 * rhs1 - m12 * rhs2) / det
    a2 = (m11 * rhs2 - m12 * rhs1) / det
    return a1, a2


@njit(cache=True)
def _rk4_step(th1, th2, om1, om2, tau1, tau2, tilt, tilt_rate, dt, p):
    """One fixed-step RK4 advance; torques held constant, tilt linear in t."""
    k1a, k1b = _accel(th1, th2, om1, om2, tau1, tau2, tilt, tilt_rate, p)

    h2 = 0.5 * dt
    tilt_m = tilt + tilt_rate * h2
    k2a, k2b = _accel(
        th1 + h2 * om1, th2 + h2 * om2,
        om1 + h2 * k1a, om2 + h2 * k1b,
        tau1, tau2, tilt_m, tilt_rate, p,
    )
    k3a, k3b = _accel(
        th1 + h2 * (om1 + h2 * k1a), th2 + h2 * (om2 + h2 * k1b),
        om1 + h2 * k2a, om2 + h2 * k2b,
        tau1, tau2, tilt_m, tilt_rate, p,
    )
    tilt_e = tilt + tilt_rate * dt
    k4a, k4b = _accel(
        th1 + dt * (om1 + h2 * k2a), th2 + dt * (om2 + h2 * k2b),
        om1 + dt * k3a, om2 + dt * k3b,
        tau1, tau2, tilt_e, tilt_rate, p,
    )

    new_th1 = th1 + dt * (om1 + (dt / 6.0) * (k1a + k2a + k3a))
    new_th2 = th2 + dt * (om2 + (dt / 6.0) * (k1b + k2b + k3b))
    new_om1 = om1 + (dt / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
    new_om2 = om2 + (dt / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
    return new_th1, new_th2, new_om1, new_om2


@njit(cache=True)
def _com_angle_and_rate(th1, th2, om1, om2, w1, w2):
    x = w1 * math.sin(th1) + w2 * math.sin(th2)
    z = w1 * math.cos(th1) + w2 * math.cos(th2)
    xd = w1 * math.cos(th1) * om1 + w2 * math.cos(th2) * om2
    zd = -w1 * math.sin(th1) * om1 - w2 * math.sin(th2) * om2
    ang = math.atan2(x, z)
    rate = (xd * z - zd * x) / (x * x + z * z)
    return ang, rate


def dip_step(
    state: DipState,
    torques,
    params: DipParams,
    dt: float,
    platform_tilt: float = 0.0,
    platform_tilt_rate: float = 0.0,
) -> DipState:
    """Advance the nonlinear plant one RK4 step.

    A fall (|angle| >= pi/2) is reported through DipState.fallen, not as an
    exception; callers terminate the simulation on it.
    """
    if dt <= 0 or dt > 2e-3:
        raise ConfigError(f"dt must be in (0, 2 ms], got {dt}")
    th1, th2, om1, om2 = _rk4_step(
        state.alpha_ls,
        state.alpha_ts,
        state.omega_ls,
        state.omega_ts,
        float(torques[0]),
        float(torques[1]),
        platform_tilt,
        platform_tilt_rate,
        dt,
        params.as_array(),
    )
    return DipState(th1, th2, om1, om2, state.t + dt)


def sensors(
    state: DipState,
    platform_tilt: float,
    params: DipParams,
    platform_tilt_rate: float = 0.0,
) -> SensorSet:
    """Kinematic readouts for a given plant state and platform tilt."""
    th1, th2 = state.alpha_ls, state.alpha_ts
    om1, om2 = state.omega_ls, state.omega_ts
    w1 = params.m1 * params.c1 + params.m2 * params.l1
    w2 = params.m2 * params.c2
    alpha_bs, alpha_bs_rate = _com_angle_and_rate(th1, th2, om1, om2, w1, w2)
    return SensorSet(
        alpha_bf=alpha_bs - platform_tilt,
        alpha_bs=alpha_bs,
        alpha_ts=th2,
        vest_star=th1,
        q1=th1 - platform_tilt,
        q2=th2 - th1,
        alpha_bf_rate=alpha_bs_rate - platform_tilt_rate,
        alpha_bs_rate=alpha_bs_rate,
        alpha_ts_rate=om2,
        vest_star_rate=om1,
        q1_rate=om1 - platform_tilt_rate,
        q2_rate=om2 - om1,
    )


def linearize(params: DipParams) -> Linearization:
    """Inertia and gravity matrices about upright in (leg-in-space, hip).

    In these coordinates the generalized forces coincide with the physical
    ankle/hip torques, so the linear model reads B0 qdd - G0 q = tau.
    """
    m11 = params.i1 + params.m1 * params.c1**2 + params.m2 * params.l1**2
    m22 = params.i2 + params.m2 * params.c2**2
    h = params.m2 * params.l1 * params.c2
    a = (params.m1 * params.c1 + params.m2 * params.l1) * params.g
    b = params.m2 * params.c2 * params.g
    b0 = np.array(
        [[m11 + 2.0 * h + m22, h + m22], [h + m22, m22]]
    )
    g0 = np.array([[a + b, b], [b, b]])
    return Linearization(b0=b0, g0=g0)


def mechanical_energy(state: DipState, params: DipParams) -> float:
    """Kinetic plus gravitational potential energy (no passive springs)."""
    th1, th2 = state.alpha_ls, state.alpha_ts
    om1, om2 = state.omega_ls, state.omega_ts
    m11 = params.i1 + params.m1 * params.c1**2 + params.m2 * params.l1**2
    m22 = params.i2 + params.m2 * params.c2**2
    m12 = params.m2 * params.l1 * params.c2 * math.cos(th1 - th2)
    kin = 0.5 * m11 * om1**2 + 0.5 * m22 * om2**2 + m12 * om1 * om2
    pot = (
        (params.m1 * params.c1 + params.m2 * params.l1) * params.g * math.cos(th1)
        + params.m2 * params.c2 * params.g * math.cos(th2)
    )
    return kin + pot


class DelayLine:
    """Fixed transport delay realized as an integer-step FIFO.

    Push a sample, get back the sample from round(delay/dt) steps ago;
    history is zero-initialized. Works for floats or numpy arrays.
    """

    def __init__(self, delay: float, dt: float, zero=0.0):
        steps_f = delay / dt
        steps = round(steps_f)
        if abs(steps_f - steps) > 1e-9:
            raise ConfigError(
                f"delay {delay} s is not an integer multiple of dt {dt} s"
            )
        if steps < 0:
            raise ConfigError("delay must be >= 0")
        self.steps = steps
        self._buf = [zero] * steps
        self._i = 0

    def push(self, value):
        if self.steps == 0:
            return value
        out = self._buf[self._i]
        self._buf[self._i] = value
        self._i = (self._i + 1) % self.steps
        return out
