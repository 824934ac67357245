import copy
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / 'config' / 'protocol_config.yaml'

# 配置文件缺失时使用的内置默认值
DEFAULTS: Dict[str, Any] = {
    'protocol': {
        'default_seed': 20150601,
        'max_n_theta': 0.1,
        'discussion': {
            'n_theta': 1.0e-2,
            'scaled_alpha': 4.0 * 2.0 ** 0.5 * 1.0e4,
        },
    },
    'numerics': {
        'peak_tolerance': 1.0e-9,
    },
    'density': {
        'points': 2001,
        'padding': 6.0,
    },
    'simulation': {
        'trials': 10000,
        'records': 20,
        'demo_trials': 2000,
    },
    'logging': {
        'level': 'INFO',
        'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        'file': None,
    },
}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """递归合并两个配置字典，override 优先"""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """加载配置文件

    读取顺序：内置默认值 < YAML 文件 < 环境变量（KERR_SEED, KERR_LOG_LEVEL）。
    路径未指定时先查看 KERR_CONFIG 环境变量。

    Args:
        config_path: 配置文件路径

    Returns:
        Dict[str, Any]: 配置信息
    """
    load_dotenv()
    path = config_path or os.getenv('KERR_CONFIG') or str(DEFAULT_CONFIG_PATH)

    file_config: Dict[str, Any] = {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            file_config = yaml.safe_load(f) or {}
    except Exception as e:
        logger.error(f"加载配置文件失败: {str(e)}")

    config = _merge(DEFAULTS, file_config)

    seed = os.getenv('KERR_SEED')
    if seed:
        config['protocol']['default_seed'] = int(seed)
    level = os.getenv('KERR_LOG_LEVEL')
    if level:
        config['logging']['level'] = level.upper()

    return config


def setup_logging(config: Dict[str, Any]) -> None:
    """根据配置初始化日志

    标准输出保留给结果数据，日志只写到标准错误和可选的日志文件。

    Args:
        config: load_config 返回的配置
    """
    log_config = config.get('logging', {})
    handlers = [logging.StreamHandler(sys.stderr)]

    log_file = log_config.get('file')
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, str(log_config.get('level', 'INFO')).upper(), logging.INFO),
        format=log_config.get('format', DEFAULTS['logging']['format']),
        handlers=handlers,
        force=True
    )
