import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from models.circuit import JointState, evolve_protocol, DEFAULT_MAX_N_THETA
from models.homodyne import PEAK_TOLERANCE, OutcomeDensity, collapse, outcome_density, sample_components
from models.states import SignalState, normalize, phase_shift
from utils.exceptions import DegenerateConfigurationError, KerrProtocolError, ParameterError

logger = logging.getLogger(__name__)


def peak_angle(n: int, theta: float, m: int) -> float:
    """m 号峰对应的探测相位大小 j(n-1)θ，j = m（偶 n）或 (2m+1)/2（奇 n）"""
    return 0.5 * (2 * m + n % 2) * (n - 1) * theta


@dataclass(frozen=True)
class ThresholdSet:
    """中点阈值集合

    cuts 升序排列；第 i 个区间（从左数）对应 l = i，m = ⌊n/2⌋ - i。
    """

    n: int
    theta: float
    alpha: float
    cuts: Tuple[float, ...]
    labels: Tuple[Tuple[int, int], ...]  # 每个区间的 (m, l)

    @property
    def peak_means(self) -> Tuple[float, ...]:
        """各区间对应的峰位置，与 labels 同序"""
        return tuple(
            2.0 * self.alpha * math.cos(peak_angle(self.n, self.theta, m))
            for m, _ in self.labels
        )

    def to_dict(self) -> Dict:
        return {
            'n': self.n,
            'theta': self.theta,
            'alpha': self.alpha,
            'cuts': list(self.cuts),
            'peak_means': list(self.peak_means),
            'labels': [{'m': m, 'l': l} for m, l in self.labels],
        }


def thresholds(n: int, theta: float, alpha: float,
               tolerance: float = PEAK_TOLERANCE) -> ThresholdSet:
    """计算相邻峰之间的中点阈值

    x_{m_k} = α{cos[(n/2-k-1)(n-1)θ] + cos[(n/2-k)(n-1)θ]}，k 升序即阈值升序。
    奇数 n 沿用同一表达式（峰标号为半整数），共 (n-1)/2 个阈值。

    Args:
        n: 光子数
        theta: 单光子相移
        alpha: 探测光振幅
        tolerance: 相邻峰的最小可分辨间距，与 outcome_density 合并分量的阈值一致

    Returns:
        ThresholdSet: 阈值集合
    """
    if n < 1:
        raise ParameterError(f"光子数必须为正: n={n}")
    if not alpha > 0:
        raise ParameterError(f"探测光振幅必须为正: α={alpha}")
    if theta < 0:
        raise ParameterError(f"相移 θ 必须非负: θ={theta}")

    gaps = n // 2
    cuts = []
    for k in range(gaps):
        a = (n / 2 - k - 1) * (n - 1) * theta
        b = (n / 2 - k) * (n - 1) * theta
        # 2α·2 sin((a+b)/2) sin((b-a)/2)，避免相减抵消
        spacing = 4.0 * alpha * math.sin(0.5 * (a + b)) * math.sin(0.5 * (b - a))
        if not spacing >= tolerance:
            raise DegenerateConfigurationError(
                f"n={n}, θ={theta}, α={alpha}: 第 {k} 对相邻峰间距 {spacing:.3g} 无法分辨"
            )
        cuts.append(alpha * (math.cos(a) + math.cos(b)))

    labels = tuple((n // 2 - i, i) for i in range(gaps + 1))
    return ThresholdSet(n=n, theta=float(theta), alpha=float(alpha),
                        cuts=tuple(cuts), labels=labels)


def classify(t: ThresholdSet, x: float) -> Tuple[int, int]:
    """按阈值把测量结果归入区间，恰好落在阈值上时归入左侧区间

    Returns:
        Tuple[int, int]: (bin_m, bin_l)
    """
    index = int(np.searchsorted(t.cuts, x, side='left'))
    return t.labels[index]


def classify_many(t: ThresholdSet, xs: np.ndarray) -> np.ndarray:
    """批量分类，返回 bin_m 数组"""
    index = np.searchsorted(np.asarray(t.cuts, dtype=float), xs, side='left')
    return np.array([m for m, _ in t.labels])[index]


def phi_j(n: int, theta: float, alpha: float, m: int, x: float) -> float:
    """φ_j(x) = α sin[j(n-1)θ]{x - 2α cos[j(n-1)θ]}（不约化）"""
    angle = peak_angle(n, theta, m)
    return alpha * math.sin(angle) * (x - 2.0 * alpha * math.cos(angle))


def correction_phase(n: int, theta: float, alpha: float, bin_m: int, x: float) -> float:
    """前馈修正：模式 s1 上每个光子的相移 δ

    偶数 n：δ = φ_m(x)/m（m=0 时为 0）；奇数 n：δ = 2φ_{(2m+1)/2}(x)/(2m+1)。
    """
    if not 0 <= bin_m <= n // 2:
        raise KerrProtocolError(f"区间标号 m={bin_m} 与 n={n} 不符")
    twice_j = 2 * bin_m + n % 2
    if twice_j == 0:
        return 0.0
    return 2.0 * phi_j(n, theta, alpha, bin_m, x) / twice_j


@dataclass(frozen=True)
class MeasurementRecord:
    """单次检测记录"""

    x: float
    bin_m: int
    bin_l: int
    correction: float
    output: SignalState
    true_m: Optional[int] = None  # 实际抽到的混合分量（仅模拟时已知）

    def to_dict(self) -> Dict:
        data = {
            'x': self.x,
            'bin_m': self.bin_m,
            'bin_l': self.bin_l,
            'correction': self.correction,
            'output': self.output.to_records(),
        }
        if self.true_m is not None:
            data['true_m'] = self.true_m
        return data


def detect_from_joint(joint: JointState,
                      threshold_set: ThresholdSet,
                      rng: np.random.Generator,
                      density: Optional[OutcomeDensity] = None) -> MeasurementRecord:
    """在已演化的联合态上完成一次测量、分类与前馈修正"""
    density = density or outcome_density(joint)
    index, xs = sample_components(joint, rng, 1, density)
    x = float(xs[0])
    true_m = density.components[int(index[0])].m

    bin_m, bin_l = classify(threshold_set, x)
    collapsed = collapse(joint, x)
    delta = correction_phase(joint.n, threshold_set.theta, joint.alpha, bin_m, x)
    output = normalize(phase_shift(collapsed, delta, mode=1))

    return MeasurementRecord(x=x, bin_m=bin_m, bin_l=bin_l, correction=delta,
                             output=output, true_m=true_m)


def detect(signal: SignalState,
           theta: float,
           alpha: float,
           rng: np.random.Generator,
           max_n_theta: Optional[float] = DEFAULT_MAX_N_THETA,
           tolerance: float = PEAK_TOLERANCE) -> MeasurementRecord:
    """单次非破坏性检测：演化 → 零差测量 → 分类 → 坍缩 → 修正

    Args:
        signal: 归一化输入态
        theta: 单光子相移
        alpha: 探测光振幅
        rng: 独立的随机数生成器
        max_n_theta: nθ 上限
        tolerance: 峰间距容差

    Returns:
        MeasurementRecord: 完整检测记录
    """
    joint = evolve_protocol(signal, theta, alpha, max_n_theta)
    return detect_from_joint(joint, thresholds(signal.n, theta, alpha, tolerance), rng,
                             outcome_density(joint, tolerance))
