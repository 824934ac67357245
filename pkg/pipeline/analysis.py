import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import integrate, optimize
from scipy.special import erfc, erfcinv
from tqdm import tqdm

from models.circuit import evolve_protocol, check_protocol_parameters, DEFAULT_MAX_N_THETA
from models.homodyne import PEAK_TOLERANCE, outcome_density
from models.states import SignalState, component_state, fidelity, normalize
from pipeline.discriminator import classify_many, detect_from_joint, thresholds
from utils.exceptions import ParameterError, ZeroNormError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
SQRT2 = math.sqrt(2.0)
DISCUSSION_N_THETA = 1.0e-2
DISCUSSION_SCALED_ALPHA = 4.0 * SQRT2 * 1.0e4


def _gap_angles(n: int, theta: float, k: int):
    if not 0 <= k < n // 2:
        raise ParameterError(f"n={n} 的间隙编号 k 必须在 0..{n // 2 - 1} 之间: k={k}")
    a = (n / 2 - k - 1) * (n - 1) * theta
    b = (n / 2 - k) * (n - 1) * theta
    return a, b


def peak_distance(n: int, theta: float, alpha: float, k: int) -> float:
    """相邻峰间距 x_{d_k} 的精确值

    2α(cos A - cos B) 改写为 4α sin((A+B)/2) sin((B-A)/2)，避免相减抵消。
    """
    a, b = _gap_angles(n, theta, k)
    return 4.0 * alpha * math.sin(0.5 * (a + b)) * math.sin(0.5 * (b - a))


def peak_distance_approx(n: int, theta: float, alpha: float, k: int) -> float:
    """小角近似 x_{d_k} ≈ (n-2k-1)(n-1)²αθ²"""
    _gap_angles(n, theta, k)
    return (n - 2 * k - 1) * (n - 1) ** 2 * alpha * theta ** 2


def epsilon_from_distance(distance: float) -> float:
    """ε = erfc(d/2√2)/2"""
    return 0.5 * float(erfc(distance / (2.0 * SQRT2)))


def distance_for_epsilon(epsilon: float) -> float:
    """epsilon_from_distance 的反函数"""
    if not 0 < epsilon <= 0.5:
        raise ParameterError(f"错误概率必须在 (0, 1/2] 内: {epsilon}")
    return 2.0 * SQRT2 * float(erfcinv(2.0 * epsilon))


def theta_for_gap(n: int, alpha: float, distance: float) -> float:
    """求 θ 使最小间隙（k = ⌊n/2⌋-1）恰好等于 distance"""
    if n < 2:
        raise ParameterError(f"n={n} 没有相邻峰")
    k = n // 2 - 1
    # 最小间隙两侧的角度为 (j-1)(n-1)θ 与 j(n-1)θ，j = n/2 - k；
    # (n-1)θ < π/(2j-1) 时间距随 θ 单调增加
    j = n / 2 - k
    upper = math.pi / ((2 * j - 1) * (n - 1))
    if not 0 < distance < peak_distance(n, upper, alpha, k):
        raise ParameterError(f"n={n}, α={alpha} 无法得到间距 {distance}")
    return optimize.brentq(
        lambda theta: peak_distance(n, theta, alpha, k) - distance,
        0.0, upper, xtol=1e-16, rtol=1e-15, maxiter=500
    )


@dataclass(frozen=True)
class GapRecord:
    k: int
    cut: float
    x_d_exact: float
    x_d_approx: float
    epsilon: float

    @property
    def approx_relative_error(self) -> float:
        return abs(self.x_d_exact - self.x_d_approx) / self.x_d_exact


@dataclass(frozen=True)
class ErrorReport:
    """各间隙的峰距与错误概率"""

    n: Optional[int]
    theta: Optional[float]
    alpha: float
    gaps: tuple
    epsilon_max: float
    n_alpha: float

    @property
    def n_theta(self) -> Optional[float]:
        if self.n is None or self.theta is None:
            return None
        return self.n * self.theta

    def to_dict(self) -> Dict:
        return {
            'schema_version': SCHEMA_VERSION,
            'n': self.n,
            'theta': self.theta,
            'n_theta': self.n_theta,
            'alpha': self.alpha,
            'n_alpha': self.n_alpha,
            'epsilon_max': self.epsilon_max,
            'gaps': [
                {
                    'k': g.k,
                    'cut': g.cut,
                    'x_d_exact': g.x_d_exact,
                    'x_d_approx': g.x_d_approx,
                    'approx_relative_error': g.approx_relative_error,
                    'epsilon': g.epsilon,
                }
                for g in self.gaps
            ],
        }

    def to_frame(self) -> pd.DataFrame:
        """每个间隙一行"""
        columns = ['k', 'cut', 'x_d_exact', 'x_d_approx', 'approx_relative_error', 'epsilon']
        rows = self.to_dict()['gaps']
        frame = pd.DataFrame(rows, columns=columns)
        frame.insert(0, 'n', self.n)
        frame.insert(1, 'theta', self.theta)
        frame.insert(2, 'alpha', self.alpha)
        return frame


def error_probabilities(n: int, theta: float, alpha: float,
                        max_n_theta: Optional[float] = None) -> ErrorReport:
    """计算所有间隙的错误概率 ε_k = erfc(x_{d_k}/2√2)/2

    Args:
        n: 光子数
        theta: 单光子相移
        alpha: 探测光振幅
        max_n_theta: nθ 上限，None 表示不检查

    Returns:
        ErrorReport: 错误概率报告
    """
    check_protocol_parameters(n, theta, alpha, max_n_theta)
    cuts = thresholds(n, theta, alpha).cuts if n >= 2 else ()

    gaps = []
    for k in range(n // 2):
        exact = peak_distance(n, theta, alpha, k)
        gaps.append(GapRecord(
            k=k,
            cut=cuts[k],
            x_d_exact=exact,
            x_d_approx=peak_distance_approx(n, theta, alpha, k),
            epsilon=epsilon_from_distance(exact),
        ))

    epsilon_max = max((g.epsilon for g in gaps), default=0.0)
    return ErrorReport(n=n, theta=float(theta), alpha=float(alpha), gaps=tuple(gaps),
                       epsilon_max=epsilon_max, n_alpha=float(alpha) ** 2)


def error_probability_oracle(n: int, theta: float, alpha: float, k: int,
                             side: str = 'left') -> float:
    """数值积分验证 erfc 公式

    side='left'：以间隙左侧峰为中心的单位高斯越过中点阈值的尾部概率；
    side='right'：右侧峰越过阈值到左侧的尾部概率。
    """
    a, b = _gap_angles(n, theta, k)
    cut = thresholds(n, theta, alpha).cuts[k]
    left_mean = 2.0 * alpha * math.cos(b)
    right_mean = 2.0 * alpha * math.cos(a)

    def density(t: float) -> float:
        return math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)

    if side == 'left':
        lower = cut - left_mean
    elif side == 'right':
        lower = right_mean - cut
    else:
        raise ParameterError(f"side 必须为 'left' 或 'right': {side}")

    value, _ = integrate.quad(density, lower, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return value


def analytic_bin_error(report: ErrorReport, m: int) -> float:
    """仅计最近邻泄漏的分区错误率：左右相邻间隙的 ε 之和"""
    n = report.n
    i = n // 2 - m  # 从左数的区间序号
    total = 0.0
    if i - 1 >= 0:
        total += report.gaps[i - 1].epsilon
    if i < len(report.gaps):
        total += report.gaps[i].epsilon
    return total


@dataclass
class BinStatistics:
    m: int
    l: int
    weight: float
    trials: int
    errors: int
    analytic_rate: float

    @property
    def rate(self) -> float:
        return self.errors / self.trials if self.trials else float('nan')

    @property
    def stderr(self) -> float:
        if not self.trials:
            return float('nan')
        p = self.rate
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.trials)

    @property
    def analytic_stderr(self) -> float:
        if not self.trials:
            return float('nan')
        p = self.analytic_rate
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.trials)


@dataclass
class MonteCarloReport:
    """蒙特卡洛误判率"""

    n: int
    theta: float
    alpha: float
    trials: int
    bins: List[BinStatistics]
    seed: Optional[int] = None

    @property
    def errors(self) -> int:
        return sum(b.errors for b in self.bins)

    @property
    def rate(self) -> float:
        return self.errors / self.trials

    @property
    def stderr(self) -> float:
        p = self.rate
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.trials)

    @property
    def analytic_rate(self) -> float:
        return sum(b.weight * b.analytic_rate for b in self.bins)

    def bin(self, m: int) -> Optional[BinStatistics]:
        for b in self.bins:
            if b.m == m:
                return b
        return None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {
                'm': b.m, 'l': b.l, 'weight': b.weight, 'trials': b.trials,
                'errors': b.errors, 'rate': b.rate, 'stderr': b.stderr,
                'analytic_rate': b.analytic_rate,
            }
            for b in self.bins
        ])

    def to_dict(self) -> Dict:
        return {
            'schema_version': SCHEMA_VERSION,
            'n': self.n,
            'theta': self.theta,
            'alpha': self.alpha,
            'trials': self.trials,
            'seed': self.seed,
            'errors': self.errors,
            'rate': self.rate,
            'stderr': self.stderr,
            'analytic_rate': self.analytic_rate,
            'bins': self.to_frame().to_dict(orient='records'),
        }


def monte_carlo_error(signal: SignalState,
                      theta: float,
                      alpha: float,
                      trials: int,
                      rng: np.random.Generator,
                      max_n_theta: Optional[float] = DEFAULT_MAX_N_THETA,
                      tolerance: float = PEAK_TOLERANCE) -> MonteCarloReport:
    """蒙特卡洛估计误判率

    每次试验：按权重抽取混合分量（真实 m），抽取 x，再按阈值分类；
    分类结果与真实 m 不同即记为错误。零权重分量不会被抽到，也不出现在报告中。

    Args:
        signal: 归一化输入态
        theta: 单光子相移
        alpha: 探测光振幅
        trials: 试验次数
        rng: 随机数生成器
        max_n_theta: nθ 上限
        tolerance: 峰间距容差

    Returns:
        MonteCarloReport: 各分区与总体的误判率
    """
    if trials < 1:
        raise ParameterError(f"试验次数必须至少为 1: {trials}")

    joint = evolve_protocol(signal, theta, alpha, max_n_theta)
    density = outcome_density(joint, tolerance)
    threshold_set = thresholds(signal.n, theta, alpha, tolerance)
    report = error_probabilities(signal.n, theta, alpha)

    weights = density.weights
    index = rng.choice(len(weights), size=trials, p=weights / weights.sum())
    xs = rng.normal(loc=density.means[index], scale=1.0)
    truth = np.array([c.m for c in density.components])[index]
    detected = classify_many(threshold_set, xs)

    bins = []
    for ci, component in enumerate(density.components):
        mask = index == ci
        count = int(mask.sum())
        bins.append(BinStatistics(
            m=component.m,
            l=signal.n // 2 - component.m,
            weight=component.weight,
            trials=count,
            errors=int((detected[mask] != truth[mask]).sum()),
            analytic_rate=analytic_bin_error(report, component.m),
        ))
    bins.sort(key=lambda b: b.l)

    result = MonteCarloReport(n=signal.n, theta=float(theta), alpha=float(alpha),
                              trials=trials, bins=bins)
    logger.info(f"蒙特卡洛完成: {trials} 次试验, 误判率 {result.rate:.6g} ± {result.stderr:.2g}")
    return result


@dataclass(frozen=True)
class DiscussionReport:
    """参考工作点的参数复现"""

    report: ErrorReport
    asymptotic: bool
    n_theta: float
    scaled_alpha: float
    epsilon_max_small_angle: float

    def to_dict(self) -> Dict:
        data = self.report.to_dict()
        data.update({
            'asymptotic': self.asymptotic,
            'n_theta': self.n_theta,
            'scaled_alpha': self.scaled_alpha,
            'epsilon_max_small_angle': self.epsilon_max_small_angle,
            'note': 'epsilon_max = erfc(2)/2 ≈ 2.339e-3; the quoted value 0.003 is a one-figure round-up',
        })
        return data


def reproduce_discussion(n: Optional[int] = None,
                         asymptotic: bool = False,
                         n_theta: float = DISCUSSION_N_THETA,
                         scaled_alpha: float = DISCUSSION_SCALED_ALPHA) -> DiscussionReport:
    """复现参考工作点的数值：nθ = 10⁻²，(1-1/n)²α = 4√2×10⁴

    asymptotic=True 时取 n ≫ 1 极限，(1-1/n)² 因子取 1，α = 4√2×10⁴；
    此时若未给出 n，报告中不含逐间隙记录。

    Returns:
        DiscussionReport: ErrorReport 与派生参数
    """
    if asymptotic:
        alpha = scaled_alpha
        epsilon_small = epsilon_from_distance(scaled_alpha * n_theta ** 2)
        if n is None:
            report = ErrorReport(n=None, theta=None, alpha=alpha, gaps=(),
                                 epsilon_max=epsilon_small, n_alpha=alpha ** 2)
        else:
            report = error_probabilities(n, n_theta / n, alpha)
    else:
        if n is None or n < 2:
            raise ParameterError(f"复现参考工作点需要 n >= 2 或 asymptotic: n={n}")
        alpha = scaled_alpha / (1.0 - 1.0 / n) ** 2
        epsilon_small = epsilon_from_distance((1.0 - 1.0 / n) ** 2 * alpha * n_theta ** 2)
        report = error_probabilities(n, n_theta / n, alpha)

    logger.info(f"参考工作点: n={n}, asymptotic={asymptotic}, n_α={report.n_alpha:.6g}, "
                f"ε_max={report.epsilon_max:.6g}")
    return DiscussionReport(report=report, asymptotic=asymptotic, n_theta=n_theta,
                            scaled_alpha=scaled_alpha, epsilon_max_small_angle=epsilon_small)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """第 trial 次试验的独立随机流，由 (seed, trial) 决定"""
    return np.random.default_rng([int(seed), int(trial)])


@dataclass
class SimulationReport:
    """重复检测的汇总"""

    n: int
    theta: float
    alpha: float
    trials: int
    seed: int
    bins: pd.DataFrame
    errors: int
    mean_fidelity: float
    photon_numbers: List[int]
    records: List[Dict] = field(default_factory=list)

    @property
    def rate(self) -> float:
        return self.errors / self.trials

    def to_dict(self) -> Dict:
        return {
            'schema_version': SCHEMA_VERSION,
            'n': self.n,
            'theta': self.theta,
            'n_theta': self.n * self.theta,
            'alpha': self.alpha,
            'trials': self.trials,
            'seed': self.seed,
            'errors': self.errors,
            'rate': self.rate,
            'mean_fidelity': self.mean_fidelity,
            'output_photon_numbers': sorted(set(self.photon_numbers)),
            'bins': self.bins.to_dict(orient='records'),
            'records': self.records,
        }


def bin_target(signal: SignalState, l: int) -> Optional[SignalState]:
    """区间 l 的修正目标态；输入中该分量为零时返回 None"""
    try:
        return normalize(component_state(signal, l))
    except ZeroNormError:
        return None


def run_simulation(signal: SignalState,
                   theta: float,
                   alpha: float,
                   trials: int,
                   seed: int,
                   keep_records: int = 0,
                   max_n_theta: Optional[float] = DEFAULT_MAX_N_THETA,
                   progress: bool = True,
                   tolerance: float = PEAK_TOLERANCE) -> SimulationReport:
    """重复执行单次检测

    第 i 次试验使用 trial_rng(seed, i)，结果与执行顺序无关。

    Args:
        signal: 归一化输入态
        theta: 单光子相移
        alpha: 探测光振幅
        trials: 试验次数
        seed: 随机种子
        keep_records: 保留前若干条检测记录
        max_n_theta: nθ 上限
        progress: 是否显示进度条
        tolerance: 峰间距容差

    Returns:
        SimulationReport: 各区间计数、误判率、平均保真度
    """
    if trials < 1:
        raise ParameterError(f"试验次数必须至少为 1: {trials}")

    joint = evolve_protocol(signal, theta, alpha, max_n_theta)
    density = outcome_density(joint, tolerance)
    threshold_set = thresholds(signal.n, theta, alpha, tolerance)
    targets = {l: bin_target(signal, l) for _, l in threshold_set.labels}

    counts = {m: 0 for m, _ in threshold_set.labels}
    sampled = {m: 0 for m, _ in threshold_set.labels}
    errors = {m: 0 for m, _ in threshold_set.labels}
    fidelity_sums = {m: 0.0 for m, _ in threshold_set.labels}
    photon_numbers = []
    records = []

    for i in tqdm(range(trials), desc="检测", disable=None if progress else True, leave=False):
        record = detect_from_joint(joint, threshold_set, trial_rng(seed, i), density)
        counts[record.bin_m] += 1
        sampled[record.true_m] += 1
        if record.true_m != record.bin_m:
            errors[record.true_m] += 1
        target = targets[record.bin_l]
        fidelity_sums[record.bin_m] += fidelity(target, record.output) if target is not None else 0.0
        photon_numbers.append(record.output.photon_number())
        if i < keep_records:
            records.append(record.to_dict())

    rows = []
    for m, l in threshold_set.labels:
        rows.append({
            'm': m,
            'l': l,
            'sampled': sampled[m],
            'detected': counts[m],
            'errors': errors[m],
            'error_rate': errors[m] / sampled[m] if sampled[m] else None,
            'mean_fidelity': fidelity_sums[m] / counts[m] if counts[m] else None,
        })
    bins = pd.DataFrame(rows, columns=['m', 'l', 'sampled', 'detected', 'errors',
                                       'error_rate', 'mean_fidelity'])

    total_errors = sum(errors.values())
    mean_fidelity = sum(fidelity_sums.values()) / trials
    logger.info(f"模拟完成: {trials} 次检测, 误判 {total_errors} 次, 平均保真度 {mean_fidelity:.6g}")
    return SimulationReport(n=signal.n, theta=float(theta), alpha=float(alpha), trials=trials,
                            seed=int(seed), bins=bins, errors=total_errors,
                            mean_fidelity=mean_fidelity, photon_numbers=photon_numbers,
                            records=records)
