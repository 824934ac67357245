import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from models.states import InputSpec
from utils.exceptions import ConfigError, InvalidSpecError

logger = logging.getLogger(__name__)

COMMANDS = ('analyze', 'simulate', 'density', 'demo')
SCENARIOS = ('entangler', 'parity2', 'analyzer')
FORMATS = ('json', 'csv')


@dataclass(frozen=True)
class RunConfig:
    """一次命令行运行的完整配置（θ、α 均已解析为原始值）"""

    command: str
    n: int
    theta: float
    alpha: float
    theta_source: str  # 'theta' | 'n_theta' | 'default'
    alpha_source: str  # 'alpha' | 'n_alpha' | 'default'
    spec: Optional[InputSpec] = None
    trials: int = 10000
    seed: int = 20150601
    output_format: str = 'json'
    output: Optional[str] = None
    sidecar: Optional[str] = None
    grid_points: int = 2001
    grid_padding: float = 6.0
    grid_min: Optional[float] = None
    grid_max: Optional[float] = None
    reproduce: bool = False
    asymptotic: bool = False
    scenario: Optional[str] = None
    level: int = 0
    records: int = 20
    max_n_theta: Optional[float] = 0.1

    @property
    def n_theta(self) -> float:
        return self.n * self.theta

    @property
    def n_alpha(self) -> float:
        return self.alpha ** 2

    def echo(self) -> Dict[str, Any]:
        """输出中回显的参数"""
        return {
            'n': self.n,
            'theta': self.theta,
            'n_theta': self.n_theta,
            'theta_source': self.theta_source,
            'alpha': self.alpha,
            'n_alpha': self.n_alpha,
            'alpha_source': self.alpha_source,
            'seed': self.seed,
        }


def load_run_file(path: Optional[str]) -> Dict[str, Any]:
    """读取与命令行参数同名的 JSON 配置文件

    Args:
        path: 文件路径，None 时返回空字典

    Returns:
        Dict[str, Any]: 配置项（键名中的 '-' 统一替换为 '_'）
    """
    if not path:
        return {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except Exception as e:
        logger.error(f"加载运行配置失败: {str(e)}")
        raise ConfigError(f"无法读取运行配置 {path}: {str(e)}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"运行配置必须是 JSON 对象: {path}")
    return {key.replace('-', '_'): value for key, value in document.items()}


def _finite_float(name: str, value: Any) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name} 必须是数值: {value!r}") from e
    if not math.isfinite(number):
        raise ConfigError(f"{name} 必须是有限值: {value!r}")
    return number


def _positive_float(name: str, value: Any) -> float:
    number = _finite_float(name, value)
    if number < 0:
        raise ConfigError(f"{name} 必须是非负有限值: {value!r}")
    return number


def _integer(name: str, value: Any, default: Any) -> int:
    """未给出（None）时取默认值；0 等给定值照常验证"""
    if value is None:
        value = default
    if isinstance(value, bool):
        raise ConfigError(f"{name} 必须为整数: {value!r}")
    if isinstance(value, int):
        return value
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name} 必须为整数: {value!r}") from e
    if not number.is_integer():
        raise ConfigError(f"{name} 必须为整数: {value!r}")
    return int(number)


def _load_spec(options: Dict[str, Any]) -> Optional[InputSpec]:
    amps = options.get('amps')
    source = options.get('input')
    if amps is not None and source is not None:
        raise ConfigError("--amps 与 --input 只能给出一个")
    try:
        if isinstance(amps, dict):
            return InputSpec.from_dict(amps)
        if isinstance(amps, str):
            return InputSpec.from_json(amps)
        if amps is not None:
            raise InvalidSpecError(f"--amps 必须为 JSON 对象: {amps!r}")
        if source is not None:
            return InputSpec.from_json(Path(source).read_text(encoding='utf-8'))
    except (OSError, TypeError, InvalidSpecError) as e:
        raise ConfigError(f"输入态无效: {str(e)}") from e
    return None


def build_run_config(command: str,
                     options: Dict[str, Any],
                     defaults: Dict[str, Any]) -> RunConfig:
    """合并命令行参数、运行配置文件与 YAML 默认值，并验证

    Args:
        command: 子命令
        options: 已合并的选项（命令行优先于文件），未给出的项为 None
        defaults: load_config 返回的默认配置

    Returns:
        RunConfig: 验证后的运行配置
    """
    if command not in COMMANDS:
        raise ConfigError(f"未知子命令: {command}")

    protocol = defaults['protocol']
    discussion = protocol['discussion']
    spec = _load_spec(options)

    n = _integer('n', options.get('n'), spec.n if spec is not None else 2)
    if n < 1:
        raise ConfigError(f"n 必须为正整数: {n}")
    if spec is not None and spec.n != n:
        raise ConfigError(f"输入态的光子数 {spec.n} 与 --n {n} 不一致")

    # θ：θ 与 nθ 只能给出一个
    theta, n_theta = options.get('theta'), options.get('n_theta')
    if theta is not None and n_theta is not None:
        raise ConfigError("--theta 与 --n-theta 只能给出一个")
    if theta is not None:
        theta, theta_source = _positive_float('theta', theta), 'theta'
    elif n_theta is not None:
        theta, theta_source = _positive_float('n_theta', n_theta) / n, 'n_theta'
    else:
        theta, theta_source = float(discussion['n_theta']) / n, 'default'

    # α：α 与 n_α 只能给出一个
    alpha, n_alpha = options.get('alpha'), options.get('n_alpha')
    if alpha is not None and n_alpha is not None:
        raise ConfigError("--alpha 与 --n-alpha 只能给出一个")
    if alpha is not None:
        alpha, alpha_source = _positive_float('alpha', alpha), 'alpha'
    elif n_alpha is not None:
        alpha, alpha_source = math.sqrt(_positive_float('n_alpha', n_alpha)), 'n_alpha'
    else:
        factor = (1.0 - 1.0 / n) ** 2 if n >= 2 else 1.0
        alpha, alpha_source = float(discussion['scaled_alpha']) / factor, 'default'
    if not alpha > 0:
        raise ConfigError(f"α 必须为正: {alpha}")

    output_format = options.get('format') or 'json'
    if output_format not in FORMATS:
        raise ConfigError(f"输出格式必须为 json 或 csv: {output_format}")

    scenario = options.get('scenario')
    if command == 'demo' and scenario not in SCENARIOS:
        raise ConfigError(f"未知演示场景: {scenario!r}，可选 {', '.join(SCENARIOS)}")
    if scenario == 'parity2' and n != 2:
        raise ConfigError(f"parity2 演示只适用于 n = 2: n={n}")

    simulation = defaults['simulation']
    default_trials = simulation['demo_trials'] if command == 'demo' else simulation['trials']
    trials = _integer('trials', options.get('trials'), default_trials)
    if trials < 1:
        raise ConfigError(f"试验次数必须至少为 1: {trials}")

    level = _integer('level', options.get('level'), 0)
    if not 0 <= level <= n // 2:
        raise ConfigError(f"--level 必须在 0..{n // 2} 之间: {level}")

    density = defaults['density']
    grid_points = _integer('grid_points', options.get('grid_points'), density['points'])
    if grid_points < 2:
        raise ConfigError(f"网格点数至少为 2: {grid_points}")
    padding = options.get('grid_padding')
    grid_padding = _positive_float('grid_padding', padding if padding is not None else density['padding'])
    if not grid_padding > 0:
        raise ConfigError(f"grid_padding 必须为正: {grid_padding}")
    grid_min, grid_max = options.get('grid_min'), options.get('grid_max')
    if (grid_min is None) != (grid_max is None):
        raise ConfigError("--grid-min 与 --grid-max 必须同时给出")
    if grid_min is not None:
        grid_min, grid_max = _finite_float('grid_min', grid_min), _finite_float('grid_max', grid_max)
        if not grid_min < grid_max:
            raise ConfigError("--grid-min 必须小于 --grid-max")

    records = _integer('records', options.get('records'), simulation['records'])
    if records < 0:
        raise ConfigError(f"records 必须非负: {records}")

    max_n_theta = options.get('max_n_theta', protocol['max_n_theta'])
    if options.get('no_regime_check') or max_n_theta is None:
        max_n_theta = None
    else:
        max_n_theta = _positive_float('max_n_theta', max_n_theta)

    config = RunConfig(
        command=command,
        n=n,
        theta=theta,
        alpha=alpha,
        theta_source=theta_source,
        alpha_source=alpha_source,
        spec=spec,
        trials=trials,
        seed=_integer('seed', options.get('seed'), protocol['default_seed']),
        output_format=output_format,
        output=options.get('output'),
        sidecar=options.get('sidecar'),
        grid_points=grid_points,
        grid_padding=grid_padding,
        grid_min=grid_min,
        grid_max=grid_max,
        reproduce=bool(options.get('reproduce')),
        asymptotic=bool(options.get('asymptotic')),
        scenario=scenario,
        level=level,
        records=records,
        max_n_theta=max_n_theta,
    )

    logger.debug(f"运行配置: {config.echo()}")
    return config
