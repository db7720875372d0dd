"""The three bio-inspired balance controllers and the closed-loop trial runner.

IC: weighted sensory error into a delayed PD loop with positive torque
feedback, running on the hip-locked (single-inverted-pendulum) plant.
DEC: per-joint servo loops plus feedforward compensation of estimated
disturbances (support tilt, gravity) with sensory dead zones.
EM: PD control of the two eigenmovements of the linearized dynamics,
decoupled by the generalized eigenbasis of (gravity, inertia).

Trial runners are numba-compiled; the per-step control laws are also
exposed as plain functions mirroring exactly what the compiled loops do.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from numba import njit

from .errors import ConfigError, DecompositionError
from .plant import (
    FALL_LIMIT_RAD,
    DipParams,
    Linearization,
    SensorSet,
    _com_angle_and_rate,
    _rk4_step,
    linearize,
)
from .prts import TiltTrajectory


# ---------------------------------------------------------------------------
# Configurations


@dataclass(frozen=True)
class IcConfig:
    """Independent-channel controller parameters."""

    w_prop: float
    w_vest: float
    w_vis: float = 0.0  # zero in eyes-closed runs
    kp: float = 0.0  # [Nm/rad]
    kd: float = 0.0  # [Nm s/rad]
    delay_s: float = 0.1
    k_force: float = 0.0  # positive torque feedback gain
    t_force: float = 5.0  # torque feedback low-pass time constant [s]

    def __post_init__(self):
        total = self.w_prop + self.w_vest + self.w_vis
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"sensory weights must sum to 1, got {total!r}")
        if not all(
            math.isfinite(v)
            for v in (self.kp, self.kd, self.delay_s, self.k_force, self.t_force)
        ):
            raise ConfigError("IC gains and delays must be finite")
        if self.delay_s < 0:
            raise ConfigError("delay must be >= 0")
        if self.k_force != 0.0 and self.t_force <= 0:
            raise ConfigError("t_force must be > 0 when torque feedback is active")

    @classmethod
    def default(cls, plant: DipParams) -> "IcConfig":
        kp = 2.6 * plant.mgh_total
        return cls(
            w_prop=0.25,
            w_vest=0.75,
            w_vis=0.0,
            kp=kp,
            kd=0.25 * kp,
            delay_s=0.1,
            k_force=0.1,
            t_force=5.0,
        )

    def detuned(self, factor: float = 0.5) -> "IcConfig":
        return replace(self, kp=self.kp * factor, kd=self.kd * factor)


@dataclass(frozen=True)
class DecModule:
    """One DEC control module (ankle or hip)."""

    kp: float  # servo PID [Nm/rad]
    ki: float  # [Nm/(rad s)]
    kd: float  # [Nm s/rad]
    kp_passive: float  # intrinsic, undelayed PD on the local joint [Nm/rad]
    kd_passive: float
    delay_s: float
    grav_gain: float  # gravity-torque estimator scale m*g*h [Nm/rad]
    tilt_comp_gain: float = 0.0  # tilt estimate weight in the servo error

    def __post_init__(self):
        vals = (
            self.kp, self.ki, self.kd, self.kp_passive, self.kd_passive,
            self.delay_s, self.grav_gain, self.tilt_comp_gain,
        )
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("DEC module parameters must be finite")
        if self.kp <= 0:
            raise ConfigError("servo kp must be > 0")
        if self.delay_s < 0:
            raise ConfigError("delay must be >= 0")


@dataclass(frozen=True)
class DecConfig:
    """Disturbance-estimation-and-compensation controller parameters."""

    ankle: DecModule
    hip: DecModule
    tilt_threshold: float = 0.0017  # dead zone on tilt rate [rad/s]
    grav_threshold: float = 0.0017  # dead zone on segment angle [rad]
    tilt_time_constant: float = 0.3  # [s]
    grav_time_constant: float = 0.1  # [s]

    def __post_init__(self):
        if self.tilt_threshold < 0 or self.grav_threshold < 0:
            raise ConfigError("dead-zone thresholds must be >= 0")
        if self.tilt_time_constant <= 0 or self.grav_time_constant <= 0:
            raise ConfigError("estimator time constants must be > 0")

    @classmethod
    def default(cls, plant: DipParams) -> "DecConfig":
        ankle = DecModule(
            kp=1.5 * plant.mgh_total,
            ki=0.03 * plant.mgh_total,
            kd=0.35 * plant.mgh_total,
            kp_passive=0.08 * plant.mgh_total,
            kd_passive=0.03 * plant.mgh_total,
            delay_s=0.1,
            grav_gain=plant.mgh_total,
            tilt_comp_gain=0.1,
        )
        hip = DecModule(
            kp=0.6 * plant.mgh_trunk,
            ki=0.03 * plant.mgh_trunk,
            kd=0.3 * plant.mgh_trunk,
            kp_passive=0.1 * plant.mgh_trunk,
            kd_passive=0.04 * plant.mgh_trunk,
            delay_s=0.06,
            grav_gain=plant.mgh_trunk,
            tilt_comp_gain=0.0,
        )
        return cls(ankle=ankle, hip=hip)


@dataclass(frozen=True)
class EmConfig:
    """Eigenmovement controller: one PD loop per mode, equalized delays."""

    kp: tuple  # modal proportional gains [1/s^2]
    kd: tuple  # modal derivative gains [1/s]
    delay1_s: float = 0.06  # ankle-loop delay
    delay2_s: float = 0.06  # hip-loop delay

    def __post_init__(self):
        if len(self.kp) != 2 or len(self.kd) != 2:
            raise ConfigError("EM needs exactly two modal PD gain pairs")
        if self.delay1_s < 0 or self.delay2_s < 0:
            raise ConfigError("delays must be >= 0")

    @property
    def delay_equalized_s(self) -> float:
        """Common loop delay after padding the faster channel."""
        return max(self.delay1_s, self.delay2_s)

    @property
    def added_delays_s(self) -> tuple:
        eq = self.delay_equalized_s
        return (eq - self.delay1_s, eq - self.delay2_s)

    @classmethod
    def default(cls, plant: DipParams) -> "EmConfig":
        lam = em_decompose(linearize(plant)).eigenvalues
        kp = (3.0 * lam[0], 2.0 * lam[1])
        kd = (
            1.4 * math.sqrt(kp[0] - lam[0]),
            1.2 * math.sqrt(kp[1] - lam[1]),
        )
        return cls(kp=kp, kd=kd)


ControllerConfig = IcConfig | DecConfig | EmConfig


# ---------------------------------------------------------------------------
# Eigenmovement basis


@dataclass(frozen=True)
class EmBasis:
    """Modal matrix of the (G0, B0) pencil, columns B0-orthonormal."""

    w: np.ndarray
    w_inv: np.ndarray
    wt_inv: np.ndarray
    eigenvalues: np.ndarray  # ascending [1/s^2]


def em_decompose(lin: Linearization) -> EmBasis:
    """Solve G0 w = lambda B0 w and fix a sign convention.

    Columns of W are B0-orthonormal and simultaneously diagonalize G0;
    eigenvalues come out ascending. The largest-magnitude entry of each
    column is made positive.
    """
    b0, g0 = lin.b0, lin.g0
    try:
        np.linalg.cholesky(b0)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("inertia matrix is not positive definite") from exc
    if np.abs(g0 - g0.T).max() > 1e-10 * max(1.0, np.abs(g0).max()):
        raise DecompositionError("gravity matrix is not symmetric")
    lam, w = scipy.linalg.eigh(g0, b0)
    for j in range(w.shape[1]):
        k = np.argmax(np.abs(w[:, j]))
        if w[k, j] < 0:
            w[:, j] = -w[:, j]
    scale_b = np.abs(np.diag(w.T @ b0 @ w)).max()
    scale_g = np.abs(np.diag(w.T @ g0 @ w)).max()
    res_b = np.abs(w.T @ b0 @ w - np.eye(2)).max()
    res_g = np.abs(w.T @ g0 @ w - np.diag(lam)).max()
    if res_b > 1e-10 * max(1.0, scale_b) or res_g > 1e-10 * max(1.0, scale_g):
        raise DecompositionError("diagonalization residuals exceed tolerance")
    w_inv = np.linalg.inv(w)
    return EmBasis(w=w, w_inv=w_inv, wt_inv=w_inv.T, eigenvalues=lam)


# ---------------------------------------------------------------------------
# Per-step control laws (mirrored inside the compiled loops)


@njit(cache=True)
def dead_zone(x: float, theta: float) -> float:
    """sign(x) * max(|x| - theta, 0)."""
    mag = abs(x) - theta
    if mag <= 0.0:
        return 0.0
    return mag if x > 0.0 else -mag


@dataclass(frozen=True)
class IcFeedbackState:
    """Positive-torque-feedback low-pass state."""

    lp: float = 0.0
    tau_prev: float = 0.0


def ic_step(sens: SensorSet, cfg: IcConfig, fb: IcFeedbackState, dt: float):
    """IC ankle torque from already-delayed sensor readouts.

    Returns (torque, new feedback state). The visual channel reads the
    same body-in-space signal as the vestibular one.
    """
    e = cfg.w_prop * sens.alpha_bf + (cfg.w_vest + cfg.w_vis) * sens.alpha_bs
    er = (
        cfg.w_prop * sens.alpha_bf_rate
        + (cfg.w_vest + cfg.w_vis) * sens.alpha_bs_rate
    )
    lp = fb.lp
    if cfg.k_force != 0.0:
        lp += (dt / cfg.t_force) * (fb.tau_prev - lp)
    tau = -(cfg.kp * e + cfg.kd * er) + cfg.k_force * lp
    return tau, IcFeedbackState(lp=lp, tau_prev=tau)


@dataclass
class DecModuleState:
    integ: float = 0.0  # servo integral
    grav_lp: float = 0.0  # gravity estimate low-pass [rad equivalent]
    tilt_lp: float = 0.0  # dead-zoned tilt rate low-pass [rad/s]
    tilt_est: float = 0.0  # integrated support tilt estimate [rad]


def dec_module_step(
    angle_d: float,
    rate_d: float,
    tilt_rate_d: float,
    q_local: float,
    q_local_rate: float,
    module: DecModule,
    cfg: DecConfig,
    state: DecModuleState,
    dt: float,
) -> float:
    """One DEC module evaluation; mutates the estimator/filter state.

    angle_d / rate_d: delayed controlled variable (body-COM-in-space for
    the ankle module, trunk-in-space for the hip module). tilt_rate_d:
    delayed support-tilt-rate consistency signal (leg-in-space rate minus
    ankle proprioceptive rate); ignored when tilt_comp_gain is 0. q_local:
    undelayed local joint angle for the passive loop.
    """
    if module.tilt_comp_gain != 0.0:
        dz = dead_zone(tilt_rate_d, cfg.tilt_threshold)
        state.tilt_lp += (dt / cfg.tilt_time_constant) * (dz - state.tilt_lp)
        state.tilt_est += state.tilt_lp * dt
    grav_raw = (module.grav_gain / module.kp) * math.sin(
        dead_zone(angle_d, cfg.grav_threshold)
    )
    state.grav_lp += (dt / cfg.grav_time_constant) * (grav_raw - state.grav_lp)

    err = -angle_d - state.grav_lp - module.tilt_comp_gain * state.tilt_est
    state.integ += err * dt
    servo = module.kp * err + module.ki * state.integ + module.kd * (-rate_d)
    passive = -module.kp_passive * q_local - module.kd_passive * q_local_rate
    return servo + passive


def em_step(sens: SensorSet, basis: EmBasis, cfg: EmConfig):
    """EM joint torques from delay-equalized sensor readouts.

    Leg-in-space is the vestibular-augmented first coordinate; torques map
    back through the inverse-transpose of the modal matrix.
    """
    q = np.array([sens.vest_star, sens.q2])
    qr = np.array([sens.vest_star_rate, sens.q2_rate])
    xi = basis.w_inv @ q
    xir = basis.w_inv @ qr
    u = -(np.asarray(cfg.kp) * xi + np.asarray(cfg.kd) * xir)
    tau = basis.wt_inv @ u
    return float(tau[0]), float(tau[1])


# ---------------------------------------------------------------------------
# Compiled closed-loop trial runners


@njit(cache=True)
def _run_ic_loop(
    tilt, tilt_rate, dt, p, w1, w2,
    w_prop, w_sum_space, kp, kd, kf, tf, n_delay,
    noise1, stride, th1_0, th2_0,
    out_sway, out_q1, out_q2, out_tau1, out_tau2, out_state,
):
    n_steps = tilt.shape[0]
    th1 = th1_0
    th2 = th2_0
    om1 = 0.0
    om2 = 0.0
    lp = 0.0
    tau_prev = 0.0
    nbuf = n_delay if n_delay > 0 else 1
    buf_e = np.zeros(nbuf)
    buf_er = np.zeros(nbuf)
    for i in range(n_steps):
        ti = tilt[i]
        tri = tilt_rate[i]
        a_bs, a_bs_r = _com_angle_and_rate(th1, th2, om1, om2, w1, w2)
        e = w_prop * (a_bs - ti) + w_sum_space * a_bs
        er = w_prop * (a_bs_r - tri) + w_sum_space * a_bs_r
        if n_delay > 0:
            j = i % n_delay
            e_d = buf_e[j]
            er_d = buf_er[j]
            buf_e[j] = e
            buf_er[j] = er
        else:
            e_d = e
            er_d = er
        if kf != 0.0:
            lp += (dt / tf) * (tau_prev - lp)
        tau = -(kp * e_d + kd * er_d) + kf * lp
        tau_prev = tau
        tau_cmd = tau + noise1[i]
        if i % stride == 0:
            k = i // stride
            out_sway[k] = a_bs
            out_q1[k] = th1 - ti
            out_q2[k] = th2 - th1
            out_tau1[k] = tau_cmd
            out_tau2[k] = 0.0
            out_state[k, 0] = th1
            out_state[k, 1] = th2
            out_state[k, 2] = om1
            out_state[k, 3] = om2
        th1, th2, om1, om2 = _rk4_step(
            th1, th2, om1, om2, tau_cmd, 0.0, ti, tri, dt, p
        )
        if abs(th1) >= FALL_LIMIT_RAD or abs(th2) >= FALL_LIMIT_RAD:
            return i + 1
    return -1


@njit(cache=True)
def _run_dec_loop(
    tilt, tilt_rate, dt, p, w1, w2,
    kp_a, ki_a, kd_a, kpp_a, kdp_a, grav_a, ctilt_a, n_delay_a,
    kp_h, ki_h, kd_h, kpp_h, kdp_h, grav_h, n_delay_h,
    thr_tilt, thr_grav, t_tilt, t_grav,
    noise1, noise2, stride, th1_0, th2_0,
    out_sway, out_q1, out_q2, out_tau1, out_tau2, out_state,
):
    n_steps = tilt.shape[0]
    th1 = th1_0
    th2 = th2_0
    om1 = 0.0
    om2 = 0.0
    integ_a = 0.0
    grav_lp_a = 0.0
    tilt_lp = 0.0
    tilt_est = 0.0
    integ_h = 0.0
    grav_lp_h = 0.0
    nbuf_a = n_delay_a if n_delay_a > 0 else 1
    nbuf_h = n_delay_h if n_delay_h > 0 else 1
    buf_a = np.zeros((nbuf_a, 3))  # alpha_bs, alpha_bs_rate, tilt-rate signal
    buf_h = np.zeros((nbuf_h, 2))  # alpha_ts, alpha_ts_rate
    for i in range(n_steps):
        ti = tilt[i]
        tri = tilt_rate[i]
        a_bs, a_bs_r = _com_angle_and_rate(th1, th2, om1, om2, w1, w2)
        q1 = th1 - ti
        q1r = om1 - tri
        q2 = th2 - th1
        q2r = om2 - om1
        tilt_sig_rate = om1 - q1r  # vest* rate minus proprioceptive rate

        if n_delay_a > 0:
            j = i % n_delay_a
            a_bs_d = buf_a[j, 0]
            a_bs_r_d = buf_a[j, 1]
            tilt_rate_d = buf_a[j, 2]
            buf_a[j, 0] = a_bs
            buf_a[j, 1] = a_bs_r
            buf_a[j, 2] = tilt_sig_rate
        else:
            a_bs_d = a_bs
            a_bs_r_d = a_bs_r
            tilt_rate_d = tilt_sig_rate
        if n_delay_h > 0:
            j = i % n_delay_h
            a_ts_d = buf_h[j, 0]
            a_ts_r_d = buf_h[j, 1]
            buf_h[j, 0] = th2
            buf_h[j, 1] = om2
        else:
            a_ts_d = th2
            a_ts_r_d = om2

        # Ankle module: servo on body-COM-in-space plus tilt and gravity
        # compensation; passive PD on the ankle joint.
        if ctilt_a != 0.0:
            dz = dead_zone(tilt_rate_d, thr_tilt)
            tilt_lp += (dt / t_tilt) * (dz - tilt_lp)
            tilt_est += tilt_lp * dt
        grav_raw_a = (grav_a / kp_a) * math.sin(dead_zone(a_bs_d, thr_grav))
        grav_lp_a += (dt / t_grav) * (grav_raw_a - grav_lp_a)
        err_a = -a_bs_d - grav_lp_a - ctilt_a * tilt_est
        integ_a += err_a * dt
        tau1 = (
            kp_a * err_a + ki_a * integ_a + kd_a * (-a_bs_r_d)
            - kpp_a * q1 - kdp_a * q1r
        )

        # Hip module: servo on trunk-in-space plus gravity compensation;
        # passive PD on the hip joint.
        grav_raw_h = (grav_h / kp_h) * math.sin(dead_zone(a_ts_d, thr_grav))
        grav_lp_h += (dt / t_grav) * (grav_raw_h - grav_lp_h)
        err_h = -a_ts_d - grav_lp_h
        integ_h += err_h * dt
        tau2 = (
            kp_h * err_h + ki_h * integ_h + kd_h * (-a_ts_r_d)
            - kpp_h * q2 - kdp_h * q2r
        )

        tau1_cmd = tau1 + noise1[i]
        tau2_cmd = tau2 + noise2[i]
        if i % stride == 0:
            k = i // stride
            out_sway[k] = a_bs
            out_q1[k] = q1
            out_q2[k] = q2
            out_tau1[k] = tau1_cmd
            out_tau2[k] = tau2_cmd
            out_state[k, 0] = th1
            out_state[k, 1] = th2
            out_state[k, 2] = om1
            out_state[k, 3] = om2
        th1, th2, om1, om2 = _rk4_step(
            th1, th2, om1, om2, tau1_cmd, tau2_cmd, ti, tri, dt, p
        )
        if abs(th1) >= FALL_LIMIT_RAD or abs(th2) >= FALL_LIMIT_RAD:
            return i + 1
    return -1


@njit(cache=True)
def _run_em_loop(
    tilt, tilt_rate, dt, p, w1, w2,
    wi11, wi12, wi21, wi22, wt11, wt12, wt21, wt22,
    kp1, kd1, kp2, kd2, n_delay,
    noise1, noise2, stride, th1_0, th2_0,
    out_sway, out_q1, out_q2, out_tau1, out_tau2, out_state,
):
    n_steps = tilt.shape[0]
    th1 = th1_0
    th2 = th2_0
    om1 = 0.0
    om2 = 0.0
    nbuf = n_delay if n_delay > 0 else 1
    buf = np.zeros((nbuf, 4))  # leg-in-space, hip, and their rates
    for i in range(n_steps):
        ti = tilt[i]
        tri = tilt_rate[i]
        a_bs, _ = _com_angle_and_rate(th1, th2, om1, om2, w1, w2)
        q1s = th1  # vestibular-augmented leg-in-space
        q2 = th2 - th1
        q1s_r = om1
        q2r = om2 - om1
        if n_delay > 0:
            j = i % n_delay
            q1s_d = buf[j, 0]
            q2_d = buf[j, 1]
            q1s_r_d = buf[j, 2]
            q2r_d = buf[j, 3]
            buf[j, 0] = q1s
            buf[j, 1] = q2
            buf[j, 2] = q1s_r
            buf[j, 3] = q2r
        else:
            q1s_d = q1s
            q2_d = q2
            q1s_r_d = q1s_r
            q2r_d = q2r
        xi1 = wi11 * q1s_d + wi12 * q2_d
        xi2 = wi21 * q1s_d + wi22 * q2_d
        xi1r = wi11 * q1s_r_d + wi12 * q2r_d
        xi2r = wi21 * q1s_r_d + wi22 * q2r_d
        u1 = -(kp1 * xi1 + kd1 * xi1r)
        u2 = -(kp2 * xi2 + kd2 * xi2r)
        tau1 = wt11 * u1 + wt12 * u2
        tau2 = wt21 * u1 + wt22 * u2
        tau1_cmd = tau1 + noise1[i]
        tau2_cmd = tau2 + noise2[i]
        if i % stride == 0:
            k = i // stride
            out_sway[k] = a_bs
            out_q1[k] = th1 - ti
            out_q2[k] = q2
            out_tau1[k] = tau1_cmd
            out_tau2[k] = tau2_cmd
            out_state[k, 0] = th1
            out_state[k, 1] = th2
            out_state[k, 2] = om1
            out_state[k, 3] = om2
        th1, th2, om1, om2 = _rk4_step(
            th1, th2, om1, om2, tau1_cmd, tau2_cmd, ti, tri, dt, p
        )
        if abs(th1) >= FALL_LIMIT_RAD or abs(th2) >= FALL_LIMIT_RAD:
            return i + 1
    return -1


# ---------------------------------------------------------------------------
# Trial runner


@dataclass(frozen=True)
class TrialResult:
    """Closed-loop trial traces decimated to the stimulus grid."""

    t: np.ndarray  # [s]
    tilt_deg: np.ndarray
    q1_deg: np.ndarray
    q2_deg: np.ndarray
    com_sway_deg: np.ndarray
    tau_ankle: np.ndarray  # [Nm]
    tau_hip: np.ndarray
    fell: bool
    fall_time_s: float | None
    states: np.ndarray = field(repr=False, default=None)  # (n, 4) [rad, rad/s]


def _delay_steps(delay_s: float, dt: float) -> int:
    steps_f = delay_s / dt
    steps = round(steps_f)
    if abs(steps_f - steps) > 1e-9:
        raise ConfigError(
            f"delay {delay_s} s is not an integer multiple of dt {dt} s"
        )
    return steps


def _upsample_tilt(stimulus: TiltTrajectory, stride: int):
    coarse = np.deg2rad(stimulus.samples)
    # Periodic tiling: the sample after the last one wraps to the start.
    ext = np.concatenate([coarse, coarse[:1]])
    n = len(coarse) * stride
    i = np.arange(n)
    k = i // stride
    frac = (i - k * stride) / stride
    tilt = ext[k] * (1.0 - frac) + ext[k + 1] * frac
    rate = (ext[k + 1] - ext[k]) * stimulus.sample_rate
    return tilt, rate


def _dispatch_loop(
    controller, plant, tilt, tilt_rate, dt, stride, noise1, noise2,
    th1_0=0.0, th2_0=0.0,
):
    n_steps = len(tilt)
    n_out = (n_steps + stride - 1) // stride
    out = {
        name: np.zeros(n_out)
        for name in ("sway", "q1", "q2", "tau1", "tau2")
    }
    out_state = np.zeros((n_out, 4))
    w1 = plant.m1 * plant.c1 + plant.m2 * plant.l1
    w2 = plant.m2 * plant.c2
    p = plant.as_array()

    if isinstance(controller, IcConfig):
        fall = _run_ic_loop(
            tilt, tilt_rate, dt, p, w1, w2,
            controller.w_prop, controller.w_vest + controller.w_vis,
            controller.kp, controller.kd, controller.k_force, controller.t_force,
            _delay_steps(controller.delay_s, dt),
            noise1, stride, th1_0, th2_0,
            out["sway"], out["q1"], out["q2"], out["tau1"], out["tau2"], out_state,
        )
    elif isinstance(controller, DecConfig):
        a, h = controller.ankle, controller.hip
        fall = _run_dec_loop(
            tilt, tilt_rate, dt, p, w1, w2,
            a.kp, a.ki, a.kd, a.kp_passive, a.kd_passive, a.grav_gain,
            a.tilt_comp_gain, _delay_steps(a.delay_s, dt),
            h.kp, h.ki, h.kd, h.kp_passive, h.kd_passive, h.grav_gain,
            _delay_steps(h.delay_s, dt),
            controller.tilt_threshold, controller.grav_threshold,
            controller.tilt_time_constant, controller.grav_time_constant,
            noise1, noise2, stride, th1_0, th2_0,
            out["sway"], out["q1"], out["q2"], out["tau1"], out["tau2"], out_state,
        )
    elif isinstance(controller, EmConfig):
        basis = em_decompose(linearize(plant))
        wi = basis.w_inv
        wt = basis.wt_inv
        fall = _run_em_loop(
            tilt, tilt_rate, dt, p, w1, w2,
            wi[0, 0], wi[0, 1], wi[1, 0], wi[1, 1],
            wt[0, 0], wt[0, 1], wt[1, 0], wt[1, 1],
            controller.kp[0], controller.kd[0],
            controller.kp[1], controller.kd[1],
            _delay_steps(controller.delay_equalized_s, dt),
            noise1, noise2, stride, th1_0, th2_0,
            out["sway"], out["q1"], out["q2"], out["tau1"], out["tau2"], out_state,
        )
    else:
        raise ConfigError(f"unknown controller config type {type(controller)!r}")
    return fall, out, out_state


BURN_IN_LEAN_RAD = math.radians(0.05)
BURN_IN_LIMIT_RAD = math.radians(0.1)


def check_burn_in(
    controller: ControllerConfig,
    plant: DipParams,
    dt: float = 1e-3,
    duration_s: float = 5.0,
) -> float:
    """Zero-stimulus stability check from a small initial lean.

    Returns the peak body sway [rad]; raises ConfigError when it exceeds
    the 0.1 degree acceptance limit.
    """
    if isinstance(controller, IcConfig):
        plant = plant.with_hip_locked()
    n = int(round(duration_s / dt))
    zeros = np.zeros(n)
    fall, out, _ = _dispatch_loop(
        controller, plant, zeros, zeros, dt, 1, zeros, zeros,
        th1_0=BURN_IN_LEAN_RAD, th2_0=BURN_IN_LEAN_RAD,
    )
    peak = float(np.abs(out["sway"]).max())
    if fall >= 0 or peak >= BURN_IN_LIMIT_RAD:
        raise ConfigError(
            f"controller failed burn-in: peak sway {math.degrees(peak):.3f} deg"
        )
    return peak


def run_trial(
    controller: ControllerConfig,
    plant: DipParams,
    stimulus: TiltTrajectory,
    plant_dt: float = 1e-3,
    burn_in: bool = True,
    noise_ankle: np.ndarray | None = None,
    noise_hip: np.ndarray | None = None,
) -> TrialResult:
    """Closed-loop simulation of one tilt trial.

    The plant integrates at plant_dt; traces are decimated back to the
    stimulus grid by an integer stride. IC runs force the hip lock (SIP
    mode). A fall yields a partial trace plus the fall flag, not an error.
    """
    stride_f = 1.0 / (stimulus.sample_rate * plant_dt)
    stride = round(stride_f)
    if stride < 1 or abs(stride_f - stride) > 1e-9:
        raise ConfigError(
            f"plant_dt {plant_dt} must integer-divide the stimulus sample period"
        )
    if isinstance(controller, IcConfig):
        plant = plant.with_hip_locked()
    if burn_in:
        check_burn_in(controller, plant, dt=plant_dt)

    tilt, tilt_rate = _upsample_tilt(stimulus, stride)
    n_steps = len(tilt)
    noise1 = np.zeros(n_steps) if noise_ankle is None else np.asarray(noise_ankle)
    noise2 = np.zeros(n_steps) if noise_hip is None else np.asarray(noise_hip)
    if len(noise1) != n_steps or len(noise2) != n_steps:
        raise ConfigError("noise arrays must match the plant-rate step count")

    fall, out, out_state = _dispatch_loop(
        controller, plant, tilt, tilt_rate, plant_dt, stride, noise1, noise2
    )

    fell = fall >= 0
    if fell:
        n_valid = (fall - 1) // stride + 1
        fall_time = fall * plant_dt
    else:
        n_valid = len(out["sway"])
        fall_time = None

    sl = slice(0, n_valid)
    t = np.arange(n_valid) / stimulus.sample_rate
    return TrialResult(
        t=t,
        tilt_deg=stimulus.samples[sl],
        q1_deg=np.rad2deg(out["q1"][sl]),
        q2_deg=np.rad2deg(out["q2"][sl]),
        com_sway_deg=np.rad2deg(out["sway"][sl]),
        tau_ankle=out["tau1"][sl],
        tau_hip=out["tau2"][sl],
        fell=fell,
        fall_time_s=fall_time,
        states=out_state[sl],
    )


# ---------------------------------------------------------------------------
# Gain tuning


def _settling_score(controller, plant, dt=1e-3, duration_s=8.0) -> float:
    """Mean |sway| over the last quarter of a perturbed zero-stimulus run."""
    if isinstance(controller, IcConfig):
        plant = plant.with_hip_locked()
    n = int(round(duration_s / dt))
    zeros = np.zeros(n)
    fall, out, _ = _dispatch_loop(
        controller, plant, zeros, zeros, dt, 1, zeros, zeros,
        th1_0=BURN_IN_LEAN_RAD, th2_0=BURN_IN_LEAN_RAD,
    )
    if fall >= 0:
        return math.inf
    tail = out["sway"][3 * n // 4:]
    return float(np.abs(tail).mean())


def tune(kind: str, plant: DipParams) -> ControllerConfig:
    """Grid-search controller gains minimizing burn-in settling sway.

    IC searches kp in [1, 3] x m*g*h and kd in [0.1, 0.5] x kp; DEC and EM
    scale their default proportional/derivative gains over [0.6, 1.6].
    """
    best = None
    best_score = math.inf
    if kind == "ic":
        base = IcConfig.default(plant)
        for kp_mult in np.linspace(1.0, 3.0, 9):
            for kd_mult in np.linspace(0.1, 0.5, 5):
                kp = kp_mult * plant.mgh_total
                cand = replace(base, kp=kp, kd=kd_mult * kp)
                score = _settling_score(cand, plant)
                if score < best_score:
                    best, best_score = cand, score
    elif kind == "dec":
        base = DecConfig.default(plant)
        for p_mult in np.linspace(0.6, 1.6, 6):
            for d_mult in np.linspace(0.6, 1.6, 6):
                cand = replace(
                    base,
                    ankle=replace(
                        base.ankle,
                        kp=base.ankle.kp * p_mult,
                        kd=base.ankle.kd * d_mult,
                    ),
                    hip=replace(
                        base.hip,
                        kp=base.hip.kp * p_mult,
                        kd=base.hip.kd * d_mult,
                    ),
                )
                score = _settling_score(cand, plant)
                if score < best_score:
                    best, best_score = cand, score
    elif kind == "em":
        base = EmConfig.default(plant)
        for p_mult in np.linspace(0.6, 1.6, 6):
            for d_mult in np.linspace(0.6, 1.6, 6):
                cand = replace(
                    base,
                    kp=tuple(k * p_mult for k in base.kp),
                    kd=tuple(k * d_mult for k in base.kd),
                )
                score = _settling_score(cand, plant)
                if score < best_score:
                    best, best_score = cand, score
    else:
        raise ConfigError(f"unknown controller kind {kind!r}")
    if best is None or not math.isfinite(best_score):
        raise ConfigError(f"no stable {kind} configuration found in the grid")
    return best


# ---------------------------------------------------------------------------
# Config (de)serialization


def config_to_dict(cfg: ControllerConfig) -> dict:
    if isinstance(cfg, IcConfig):
        return {
            "type": "ic",
            "w_prop": cfg.w_prop,
            "w_vest": cfg.w_vest,
            "w_vis": cfg.w_vis,
            "kp": cfg.kp,
            "kd": cfg.kd,
            "delay_s": cfg.delay_s,
            "k_force": cfg.k_force,
            "t_force": cfg.t_force,
        }
    if isinstance(cfg, DecConfig):
        def module(m: DecModule) -> dict:
            return {
                "kp": m.kp,
                "ki": m.ki,
                "kd": m.kd,
                "kp_passive": m.kp_passive,
                "kd_passive": m.kd_passive,
                "delay_s": m.delay_s,
                "grav_gain": m.grav_gain,
                "tilt_comp_gain": m.tilt_comp_gain,
            }

        return {
            "type": "dec",
            "ankle": module(cfg.ankle),
            "hip": module(cfg.hip),
            "tilt_threshold": cfg.tilt_threshold,
            "grav_threshold": cfg.grav_threshold,
            "tilt_time_constant": cfg.tilt_time_constant,
            "grav_time_constant": cfg.grav_time_constant,
        }
    if isinstance(cfg, EmConfig):
        return {
            "type": "em",
            "kp": list(cfg.kp),
            "kd": list(cfg.kd),
            "delay1_s": cfg.delay1_s,
            "delay2_s": cfg.delay2_s,
        }
    raise ConfigError(f"unknown controller config type {type(cfg)!r}")


def config_from_dict(d: dict) -> ControllerConfig:
    try:
        kind = d["type"]
        if kind == "ic":
            return IcConfig(
                w_prop=float(d["w_prop"]),
                w_vest=float(d["w_vest"]),
                w_vis=float(d.get("w_vis", 0.0)),
                kp=float(d["kp"]),
                kd=float(d["kd"]),
                delay_s=float(d["delay_s"]),
                k_force=float(d.get("k_force", 0.0)),
                t_force=float(d.get("t_force", 5.0)),
            )
        if kind == "dec":
            def module(md: dict) -> DecModule:
                return DecModule(
                    kp=float(md["kp"]),
                    ki=float(md["ki"]),
                    kd=float(md["kd"]),
                    kp_passive=float(md["kp_passive"]),
                    kd_passive=float(md["kd_passive"]),
                    delay_s=float(md["delay_s"]),
                    grav_gain=float(md["grav_gain"]),
                    tilt_comp_gain=float(md.get("tilt_comp_gain", 0.0)),
                )

            return DecConfig(
                ankle=module(d["ankle"]),
                hip=module(d["hip"]),
                tilt_threshold=float(d["tilt_threshold"]),
                grav_threshold=float(d["grav_threshold"]),
                tilt_time_constant=float(d["tilt_time_constant"]),
                grav_time_constant=float(d["grav_time_constant"]),
            )
        if kind == "em":
            return EmConfig(
                kp=tuple(float(v) for v in d["kp"]),
                kd=tuple(float(v) for v in d["kd"]),
                delay1_s=float(d["delay1_s"]),
                delay2_s=float(d["delay2_s"]),
            )
    except KeyError as exc:
        raise ConfigError(f"controller config missing key {exc}") from exc
    raise ConfigError(f"unknown controller type {d.get('type')!r}")
