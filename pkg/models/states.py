import cmath
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from utils.exceptions import InvalidSpecError, ZeroNormError, KerrProtocolError

logger = logging.getLogger(__name__)

AMPLITUDE_TOLERANCE = 1e-12

Ket = Tuple[int, int]


def l_to_m(n: int, l: int) -> int:
    """l 标号转换为 m 标号（l = ⌊n/2⌋ - m）"""
    return n // 2 - l


def m_to_l(n: int, m: int) -> int:
    """m 标号转换为 l 标号"""
    return n // 2 - m


@dataclass(frozen=True)
class InputSpec:
    """输入态描述：光子数 n 与振幅对 (a_l, b_l)，l = 0..⌊n/2⌋"""

    n: int
    amps: Tuple[Tuple[complex, complex], ...]

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool) or self.n < 1:
            raise InvalidSpecError(f"光子数必须为正整数: {self.n!r}")
        amps = tuple((complex(a), complex(b)) for a, b in self.amps)
        if len(amps) != self.n // 2 + 1:
            raise InvalidSpecError(
                f"n={self.n} 需要 {self.n // 2 + 1} 组振幅，实际为 {len(amps)} 组"
            )
        for a, b in amps:
            if not (cmath.isfinite(a) and cmath.isfinite(b)):
                raise InvalidSpecError(f"振幅必须为有限值: {(a, b)}")
        object.__setattr__(self, 'n', int(self.n))
        object.__setattr__(self, 'amps', amps)

    @classmethod
    def from_dict(cls, document: Dict) -> 'InputSpec':
        """从 JSON 文档构造

        文档格式: {"n": int, "amps": [[re_a, im_a, re_b, im_b], ...]}，按 l 升序。

        Args:
            document: 已解析的 JSON 对象

        Returns:
            InputSpec: 输入态描述
        """
        try:
            n = document['n']
            rows = document['amps']
        except (KeyError, TypeError) as e:
            raise InvalidSpecError(f"输入态文档缺少字段: {str(e)}") from e

        if not isinstance(rows, list):
            raise InvalidSpecError(f"amps 必须为列表: {rows!r}")
        amps = []
        for row in rows:
            if not isinstance(row, list) or len(row) != 4:
                raise InvalidSpecError(f"振幅行必须为 [re_a, im_a, re_b, im_b]: {row!r}")
            try:
                re_a, im_a, re_b, im_b = (float(v) for v in row)
            except (TypeError, ValueError) as e:
                raise InvalidSpecError(f"振幅必须为数值: {row!r}") from e
            amps.append((complex(re_a, im_a), complex(re_b, im_b)))
        return cls(n=n, amps=tuple(amps))

    @classmethod
    def from_json(cls, text: str) -> 'InputSpec':
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidSpecError(f"输入态 JSON 解析失败: {str(e)}") from e
        return cls.from_dict(document)

    def to_dict(self) -> Dict:
        return {
            'n': self.n,
            'amps': [[a.real, a.imag, b.real, b.imag] for a, b in self.amps],
        }


@dataclass(frozen=True, eq=False)
class SignalState:
    """双模信号态：稀疏映射 (n1, n2) -> 复振幅"""

    n: int
    kets: Dict[Ket, complex] = field(default_factory=dict)

    def __post_init__(self):
        kets = {}
        for (n1, n2), amplitude in dict(self.kets).items():
            n1, n2 = int(n1), int(n2)
            if n1 < 0 or n2 < 0 or n1 + n2 != self.n:
                raise InvalidSpecError(f"Fock 基矢 |{n1},{n2}⟩ 与光子数 n={self.n} 不符")
            kets[(n1, n2)] = complex(amplitude)
        object.__setattr__(self, 'kets', dict(sorted(kets.items(), reverse=True)))

    def amplitude(self, ket: Ket) -> complex:
        return self.kets.get(tuple(ket), 0j)

    def norm(self) -> float:
        return math.sqrt(sum(abs(c) ** 2 for c in self.kets.values()))

    def scaled(self, factor: complex) -> 'SignalState':
        return SignalState(self.n, {ket: factor * c for ket, c in self.kets.items()})

    def photon_number(self) -> int:
        """由非零分量读出的总光子数（非破坏性检验用）

        Raises:
            ZeroNormError: 没有非零分量
            KerrProtocolError: 各分量的 n1 + n2 不一致
        """
        totals = {n1 + n2 for (n1, n2), c in self.kets.items() if abs(c) > AMPLITUDE_TOLERANCE}
        if not totals:
            raise ZeroNormError(f"信号态没有非零分量: {self!r}")
        if len(totals) > 1:
            raise KerrProtocolError(f"信号态的光子数不确定: {sorted(totals)}")
        return totals.pop()

    def to_records(self) -> List[List[float]]:
        """序列化为 [[n1, n2, re, im], ...]"""
        return [[n1, n2, c.real, c.imag] for (n1, n2), c in self.kets.items()]

    def isclose(self, other: 'SignalState', tol: float = AMPLITUDE_TOLERANCE) -> bool:
        """逐分量比较（不忽略全局相位）"""
        if self.n != other.n:
            return False
        keys = set(self.kets) | set(other.kets)
        return all(abs(self.amplitude(k) - other.amplitude(k)) <= tol for k in keys)

    def __repr__(self) -> str:
        terms = ' + '.join(f"({c:.6g})|{n1},{n2}⟩" for (n1, n2), c in self.kets.items())
        return f"SignalState(n={self.n}, {terms or '0'})"


def normalize(u: SignalState) -> SignalState:
    """归一化信号态

    Args:
        u: 范数为正的信号态

    Returns:
        SignalState: 范数平方为 1 的信号态（相位保持不变）
    """
    norm = u.norm()
    if norm <= AMPLITUDE_TOLERANCE:
        raise ZeroNormError(f"信号态范数为零，无法归一化: {u!r}")
    return SignalState(u.n, {ket: c / norm for ket, c in u.kets.items()})


def build_input_state(spec: InputSpec) -> SignalState:
    """构造输入态 Σ_l a_l|n-l,l⟩ + b_l|l,n-l⟩

    n 为偶数时 l=n/2 的两项指向同一个基矢 |n/2,n/2⟩，振幅合并为 a+b。
    归一化在合并后的矢量上进行。

    Args:
        spec: 输入态描述

    Returns:
        SignalState: 归一化后的信号态
    """
    n = spec.n
    kets: Dict[Ket, complex] = {}
    for l, (a, b) in enumerate(spec.amps):
        kets[(n - l, l)] = kets.get((n - l, l), 0j) + a
        kets[(l, n - l)] = kets.get((l, n - l), 0j) + b

    resolved = {ket: c for ket, c in kets.items() if abs(c) > AMPLITUDE_TOLERANCE}
    if not resolved:
        raise ZeroNormError(f"n={n} 的输入态在合并后范数为零（完全相消干涉）")

    state = normalize(SignalState(n, resolved))
    logger.debug(f"构造输入态: {state!r}")
    return state


def fidelity(u: SignalState, v: SignalState) -> float:
    """保真度 |⟨u|v⟩|²

    Args:
        u: 归一化信号态
        v: 归一化信号态（光子数与 u 相同）

    Returns:
        float: [0, 1] 区间内的保真度
    """
    if u.n != v.n:
        raise KerrProtocolError(f"光子数不同，无法计算保真度: {u.n} != {v.n}")
    overlap = sum(c.conjugate() * v.amplitude(ket) for ket, c in u.kets.items())
    return min(max(abs(overlap) ** 2, 0.0), 1.0)


def phase_shift(u: SignalState, delta: float, mode: int = 1) -> SignalState:
    """在单个信号模式上施加移相器 e^{iδ·N_mode}"""
    if mode not in (1, 2):
        raise KerrProtocolError(f"模式编号必须为 1 或 2: {mode}")
    return SignalState(u.n, {
        ket: c * cmath.exp(1j * delta * ket[mode - 1]) for ket, c in u.kets.items()
    })


def component_state(u: SignalState, l: int) -> SignalState:
    """取出 l 对应的基矢对 {|n-l,l⟩, |l,n-l⟩} 分量，未归一化"""
    pair = {(u.n - l, l), (l, u.n - l)}
    return SignalState(u.n, {ket: c for ket, c in u.kets.items() if ket in pair})


def entangled_number_state(n: int, l: int) -> SignalState:
    """最大纠缠数态 (|n-l,l⟩ + |l,n-l⟩)/√2；偶数 n 且 l=n/2 时为 |n/2,n/2⟩"""
    if not 0 <= l <= n // 2:
        raise InvalidSpecError(f"l 超出范围 0..{n // 2}: {l}")
    amps = [(0j, 0j)] * (n // 2 + 1)
    amps[l] = (1 / math.sqrt(2), 1 / math.sqrt(2))
    return build_input_state(InputSpec(n=n, amps=tuple(amps)))


def noon_state(n: int) -> SignalState:
    return entangled_number_state(n, 0)


def spec_from_pairs(n: int, pairs: Union[Dict[int, Tuple[complex, complex]], Sequence[Tuple[complex, complex]]]) -> InputSpec:
    """由 {l: (a, b)} 或完整列表构造 InputSpec，缺省项取 0"""
    if isinstance(pairs, dict):
        amps = [(0j, 0j)] * (n // 2 + 1)
        for l, pair in pairs.items():
            amps[l] = pair
        return InputSpec(n=n, amps=tuple(amps))
    return InputSpec(n=n, amps=tuple(pairs))


def random_spec(n: int, rng: np.random.Generator, density: float = 1.0) -> InputSpec:
    """随机输入态（测试与演示用）

    Args:
        n: 光子数
        rng: 随机数生成器
        density: 每组振幅非零的概率

    Returns:
        InputSpec: 随机输入态描述
    """
    while True:
        amps = []
        for _ in range(n // 2 + 1):
            if rng.random() < density:
                a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
            else:
                a, b = 0j, 0j
            amps.append((complex(a), complex(b)))
        spec = InputSpec(n=n, amps=tuple(amps))
        try:
            build_input_state(spec)
        except ZeroNormError:
            continue
        return spec


def iter_labels(n: int) -> Iterable[Tuple[int, int]]:
    """按 l 升序给出 (m, l) 标号对"""
    for l in range(n // 2 + 1):
        yield l_to_m(n, l), l
