import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = '%.17g'


def _plain(value: Any) -> Any:
    """转换为可 JSON 序列化的原生类型，NaN/inf 写为 null"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def render_json(data: Any) -> str:
    return json.dumps(_plain(data), indent=2, ensure_ascii=False, allow_nan=False) + '\n'


def render_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')


def _emit(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    logger.info(f"结果已保存到: {target}")


def save_json(data: Any, path: Optional[str] = None) -> None:
    """保存 JSON 结果

    Args:
        data: 结果字典
        path: 文件路径，None 时写到标准输出
    """
    _emit(render_json(data), path)


def save_csv(frame: pd.DataFrame, path: Optional[str] = None) -> None:
    """保存 CSV 结果（带表头）

    Args:
        frame: 结果表
        path: 文件路径，None 时写到标准输出
    """
    _emit(render_csv(frame), path)


DEFAULT_SIDECAR = 'density.thresholds.json'


def sidecar_path(output: Optional[str], sidecar: Optional[str]) -> str:
    """密度曲线的阈值附属文件路径

    默认与输出文件同名，后缀 .thresholds.json；曲线写到标准输出时为当前目录下的 density.thresholds.json。
    """
    if sidecar:
        return sidecar
    if output is None:
        return DEFAULT_SIDECAR
    path = Path(output)
    return str(path.with_name(path.stem + '.thresholds.json'))
