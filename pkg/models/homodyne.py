import cmath
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import ndtr

from models.circuit import JointState
from models.states import Ket, SignalState, normalize
from utils.exceptions import NumericallyVoidOutcomeError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
KERNEL_PREFACTOR = (2.0 * math.pi) ** -0.25
PEAK_TOLERANCE = 1e-9
VOID_NORM = 1e-300


def kernel_eval(alpha: float, phi: float, x: float) -> complex:
    """X 正交分量测量核 f(x, α cos φ)·e^{iφcorr(x)}

    f(x, β) = (2π)^{-1/4} exp(-(x-2β)²/4)，φcorr(x) = α sin φ (x - 2α cos φ) mod 2π。

    Args:
        alpha: 探测光振幅
        phi: 分支探测相位（弧度）
        x: 测量结果

    Returns:
        complex: 核函数值
    """
    offset = x - 2.0 * alpha * math.cos(phi)
    magnitude = KERNEL_PREFACTOR * math.exp(-offset * offset / 4.0)
    correction = math.fmod(alpha * math.sin(phi) * offset, TWO_PI)
    if correction < 0:
        correction += TWO_PI
    if correction == 0.0:
        return complex(magnitude, 0.0)
    return magnitude * cmath.exp(1j * correction)


def peak_mean(alpha: float, phi: float) -> float:
    """分支对应的高斯峰位置 2α cos φ"""
    return 2.0 * alpha * math.cos(phi)


@dataclass(frozen=True)
class MixtureComponent:
    """单位方差高斯分量"""

    weight: float
    mean: float
    m_values: Tuple[int, ...]  # 归入该分量的 m 标号

    @property
    def m(self) -> int:
        return self.m_values[0]


@dataclass(frozen=True)
class OutcomeDensity:
    """测量结果 x 的高斯混合分布，分量按均值升序排列"""

    components: Tuple[MixtureComponent, ...]

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for c in self.components:
            d = x - c.mean
            total = total + c.weight * np.exp(-0.5 * d * d) / math.sqrt(TWO_PI)
        return total

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for c in self.components:
            total = total + c.weight * ndtr(x - c.mean)
        return total

    def default_grid(self, points: int = 2001, padding: float = 6.0) -> np.ndarray:
        means = self.means
        return np.linspace(means.min() - padding, means.max() + padding, points)

    def to_frame(self, grid: Optional[Sequence[float]] = None,
                 points: int = 2001, padding: float = 6.0) -> pd.DataFrame:
        """导出密度曲线 (x, p)

        Args:
            grid: 自定义网格，None 时使用 [最小均值-padding, 最大均值+padding]
            points: 默认网格点数
            padding: 默认网格边距

        Returns:
            pd.DataFrame: 列为 x, p
        """
        xs = np.asarray(grid, dtype=float) if grid is not None else self.default_grid(points, padding)
        return pd.DataFrame({'x': xs, 'p': self.pdf(xs)})


def _m_label(n: int, peak_index2: int) -> int:
    return (peak_index2 - n % 2) // 2


def outcome_density(j: JointState, tolerance: float = PEAK_TOLERANCE) -> OutcomeDensity:
    """由联合态计算测量结果的精确分布

    不同信号基矢相互正交，|·|² 中的交叉项为零，因此分布是单位方差高斯的混合。
    探测相位 ±φ 的分支共用一个分量。

    Args:
        j: 归一化联合态
        tolerance: 两个均值合并为同一分量的阈值

    Returns:
        OutcomeDensity: 高斯混合分布
    """
    entries = sorted(
        ((peak_mean(j.alpha, b.probe_phase), b.weight, _m_label(j.n, b.peak_index2))
         for b in j.branches),
        key=lambda e: e[0]
    )

    groups: List[List] = []
    for mean, weight, m in entries:
        if groups and abs(mean - groups[-1][0]) < tolerance:
            group = groups[-1]
            group[1] += weight
            if m not in group[2]:
                group[2].append(m)
        else:
            groups.append([mean, weight, [m]])

    total = sum(g[1] for g in groups)
    components = tuple(
        MixtureComponent(weight=g[1] / total, mean=g[0], m_values=tuple(g[2]))
        for g in groups
    )
    return OutcomeDensity(components=components)


def sample_components(j: JointState, rng: np.random.Generator, size: int,
                      density: Optional[OutcomeDensity] = None) -> Tuple[np.ndarray, np.ndarray]:
    """批量抽样：先按权重抽分量，再抽单位方差高斯

    Returns:
        Tuple[np.ndarray, np.ndarray]: (分量下标, 测量结果 x)
    """
    density = density or outcome_density(j)
    weights = density.weights
    index = rng.choice(len(weights), size=size, p=weights / weights.sum())
    xs = rng.normal(loc=density.means[index], scale=1.0)
    return index, xs


def sample_outcome(j: JointState, rng: np.random.Generator,
                   density: Optional[OutcomeDensity] = None) -> float:
    """抽取一次 X 零差测量结果"""
    _, xs = sample_components(j, rng, 1, density)
    return float(xs[0])


def collapse_numerator(j: JointState, x: float) -> Dict[Ket, complex]:
    """测量后未归一化的信号振幅：每个分支乘以 kernel_eval(α, φ, x)"""
    return {
        b.ket: b.amplitude * kernel_eval(j.alpha, b.probe_phase, x)
        for b in j.branches
    }


def collapse(j: JointState, x: float, void_norm: float = VOID_NORM) -> SignalState:
    """测量结果为 x 时信号光子坍缩后的态

    Args:
        j: 归一化联合态
        x: 测量结果
        void_norm: 低于该范数视为数值上无效的结果

    Returns:
        SignalState: 归一化后的信号态
    """
    if not math.isfinite(x):
        raise NumericallyVoidOutcomeError(f"测量结果不是有限值: x={x}")
    amplitudes = collapse_numerator(j, x)
    scale = max((abs(c) for c in amplitudes.values()), default=0.0)
    norm = scale * math.sqrt(sum(abs(c / scale) ** 2 for c in amplitudes.values())) if scale > 0 else 0.0
    if norm < void_norm:
        raise NumericallyVoidOutcomeError(
            f"x={x} 远离所有高斯峰，坍缩后范数 {norm:.3g} 低于 {void_norm:g}"
        )
    return normalize(SignalState(j.n, {k: c / norm for k, c in amplitudes.items()}))
