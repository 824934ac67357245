import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

from models.states import Ket, SignalState, AMPLITUDE_TOLERANCE
from utils.exceptions import KerrProtocolError, ParameterError

logger = logging.getLogger(__name__)

DEFAULT_MAX_N_THETA = 0.1


@dataclass(frozen=True)
class Branch:
    """联合态的一个分支：信号基矢 ⊗ 探测光 |α·e^{i·probe_phase}⟩

    probe_phase 以弧度存储，不做模 2π 约化。
    """

    ket: Ket
    amplitude: complex
    probe_phase: float = 0.0

    @property
    def weight(self) -> float:
        return abs(self.amplitude) ** 2

    @property
    def peak_index2(self) -> int:
        """|n1 - n2|，峰的位置只依赖于它"""
        return abs(self.ket[0] - self.ket[1])


@dataclass(frozen=True)
class JointState:
    """信号⊗相干探测光的联合态"""

    n: int
    alpha: float
    branches: Tuple[Branch, ...]

    def __post_init__(self):
        if not self.alpha > 0 or not math.isfinite(self.alpha):
            raise ParameterError(f"探测光振幅必须为正: α={self.alpha}")
        kets = [b.ket for b in self.branches]
        if len(set(kets)) != len(kets):
            raise KerrProtocolError(f"联合态中存在重复的信号基矢: {kets}")
        object.__setattr__(self, 'branches', tuple(self.branches))

    def total_weight(self) -> float:
        return sum(b.weight for b in self.branches)

    def phases(self) -> Dict[Ket, float]:
        return {b.ket: b.probe_phase for b in self.branches}

    def signal(self) -> SignalState:
        """丢弃探测光后的信号振幅（仅用于检查）"""
        return SignalState(self.n, {b.ket: b.amplitude for b in self.branches})


def attach_probe(signal: SignalState, alpha: float) -> JointState:
    """引入相干态探测光 |α⟩

    Args:
        signal: 归一化信号态
        alpha: 探测光振幅（实数，> 0）

    Returns:
        JointState: 每个非零基矢一个分支，探测相位为 0
    """
    if not alpha > 0:
        raise ParameterError(f"探测光振幅必须为正: α={alpha}")
    branches = tuple(
        Branch(ket=ket, amplitude=c, probe_phase=0.0)
        for ket, c in signal.kets.items()
        if abs(c) > AMPLITUDE_TOLERANCE
    )
    return JointState(n=signal.n, alpha=float(alpha), branches=branches)


def apply_cross_kerr(j: JointState, mode: int, rate: float) -> JointState:
    """交叉克尔相互作用：探测相位增加 rate × (所选模式的光子数)"""
    if mode not in (1, 2):
        raise KerrProtocolError(f"模式编号必须为 1 或 2: {mode}")
    return replace(j, branches=tuple(
        replace(b, probe_phase=b.probe_phase + rate * b.ket[mode - 1])
        for b in j.branches
    ))


def phase_gate_angle(n: int, theta: float) -> float:
    """R_n(θ) = -n(n+1)θ/2"""
    return -0.5 * n * (n + 1) * theta


def apply_phase_gate(j: JointState, n: int, theta: float) -> JointState:
    """相位门 R_n(θ)：对所有分支的探测光做同一个相位旋转"""
    shift = phase_gate_angle(n, theta)
    return replace(j, branches=tuple(
        replace(b, probe_phase=b.probe_phase + shift) for b in j.branches
    ))


def expected_phase(n: int, theta: float, ket: Ket) -> float:
    """演化后探测相位的闭式解 (n-1)θ(n2-n1)/2

    偶数 n 时等于 ∓m(n-1)θ，奇数 n 时等于 ∓(2m+1)(n-1)θ/2。
    """
    n1, n2 = ket
    return 0.5 * (n - 1) * theta * (n2 - n1)


def max_phase_magnitude(n: int, theta: float) -> float:
    """演化后探测相位的最大绝对值 ⌊n/2⌋(n-1)θ（偶）或 n(n-1)θ/2（奇）"""
    return 0.5 * n * (n - 1) * theta if n % 2 else (n // 2) * (n - 1) * theta


def check_protocol_parameters(n: int,
                              theta: float,
                              alpha: float,
                              max_n_theta: Optional[float] = DEFAULT_MAX_N_THETA) -> None:
    """检查协议参数处于弱非线性区间

    Args:
        n: 光子数
        theta: 单光子相移（弧度）
        alpha: 探测光振幅
        max_n_theta: nθ 的上限，None 表示不检查
    """
    if n < 1:
        raise ParameterError(f"光子数必须为正: n={n}")
    if not (math.isfinite(theta) and theta >= 0):
        raise ParameterError(f"相移 θ 必须为非负有限值: θ={theta}")
    if not (math.isfinite(alpha) and alpha > 0):
        raise ParameterError(f"探测光振幅必须为正: α={alpha}")
    if max_n_theta is not None and n * theta > max_n_theta:
        raise ParameterError(
            f"nθ={n * theta:.6g} 超出弱非线性区间上限 {max_n_theta}"
        )


def evolve_protocol(signal: SignalState,
                    theta: float,
                    alpha: float,
                    max_n_theta: Optional[float] = DEFAULT_MAX_N_THETA) -> JointState:
    """完整演化：引入探测光 → 克尔(模式1, θ) → 克尔(模式2, nθ) → R_n(θ)

    Args:
        signal: 归一化输入信号态
        theta: 单光子相移
        alpha: 探测光振幅
        max_n_theta: nθ 上限

    Returns:
        JointState: 演化后的联合态
    """
    n = signal.n
    check_protocol_parameters(n, theta, alpha, max_n_theta)

    joint = attach_probe(signal, alpha)
    joint = apply_cross_kerr(joint, 1, theta)
    joint = apply_cross_kerr(joint, 2, n * theta)
    joint = apply_phase_gate(joint, n, theta)

    # 闭式相位律
    for b in joint.branches:
        target = expected_phase(n, theta, b.ket)
        if abs(b.probe_phase - target) > 1e-12 * max(1.0, abs(target)) + 1e-15:
            raise KerrProtocolError(
                f"分支 {b.ket} 的探测相位 {b.probe_phase} 偏离闭式解 {target}"
            )

    logger.debug(f"演化完成: n={n}, θ={theta}, α={alpha}, 分支数={len(joint.branches)}")
    return joint
