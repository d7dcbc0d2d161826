import json
import logging
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

# 設定日誌
logger = logging.getLogger(__name__)


def _default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class TraceWriter:
    """
    以 JSON-lines 格式寫出每次疊代的診斷紀錄

    每筆紀錄會加上建構時給定的固定欄位 (例如 method、trial)。
    """

    def __init__(self, path: Optional[Union[str, Path]] = None, **context: Any):
        self.path = Path(path) if path else None
        self.context = context
        self.records: List[Dict[str, Any]] = []
        self._lock = threading.Lock()

    def bind(self, **context: Any) -> "TraceWriter":
        """回傳共用同一檔案、但附加更多固定欄位的 writer"""
        child = TraceWriter(None, **{**self.context, **context})
        child.path = self.path
        child.records = self.records
        child._lock = self._lock
        return child

    def write(self, record: Dict[str, Any]) -> None:
        line = {**self.context, **record}
        with self._lock:
            self.records.append(line)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(line, default=_default, ensure_ascii=False) + "\n")


def load_trace(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """
    讀取 JSON-lines 追蹤檔

    Returns:
        List[Dict[str, Any]]: 每行一筆紀錄；檔案不存在時回傳空列表
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
    except FileNotFoundError:
        logger.warning(f"找不到追蹤檔 {path}，將使用空列表")
        return []
