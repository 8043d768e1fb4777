import json
import logging
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd

logger = logging.getLogger(__name__)


class LoaderError(ValueError):
    """A source file could not be parsed; `line` is set for line-oriented formats."""

    def __init__(self, message, source=None, line=None):
        where = f"{source}:{line}" if line is not None else f"{source}"
        super().__init__(f"{where}: {message}" if source else message)
        self.source = source
        self.line = line


class DynamicDataLoader:
    """
    Loads experiment configs, robot descriptions and run logs.

    Config-like sources (json, kv) come back as flat dicts with dotted keys;
    for kv files the line number of every key is kept in `line_numbers`.
    """

    def __init__(self):
        self.line_numbers: Dict[str, int] = {}

    def load(self, source, source_type=None, **kwargs):
        """
        Load data from a specified source.

        :param source: Path to the file
        :param source_type: 'csv', 'json', 'kv'
        :param kwargs: Additional arguments (like flatten=False for json)
        """
        source = str(source)
        if not source_type:
            source_type = self._infer_type(source)

        loader_map = {
            'csv': self._load_csv,
            'json': self._load_json,
            'kv': self._load_kv,
        }

        if source_type not in loader_map:
            raise ValueError(f"Unsupported source type: {source_type}")

        return loader_map[source_type](source, **kwargs)

    def load_runs(self, directory) -> List[pd.DataFrame]:
        """Per-seed run logs of one run directory, ordered by file name."""
        paths = sorted(Path(directory).glob("seed_*.csv"))
        if not paths:
            raise LoaderError("no seed_*.csv files found", source=directory)
        frames = []
        for path in paths:
            frame = self._load_csv(str(path))
            frame.attrs["source"] = str(path)
            frames.append(frame)
        return frames

    def _infer_type(self, source):
        if source.endswith('.csv'):
            return 'csv'
        elif source.endswith('.json'):
            return 'json'
        elif source.endswith(('.cfg', '.conf', '.ini', '.txt')):
            return 'kv'
        else:
            raise ValueError("Unable to infer source type. Please specify source_type.")

    def _load_csv(self, path, **kwargs):
        return pd.read_csv(path, **kwargs)

    def _load_json(self, path, flatten=True, **kwargs):
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise LoaderError(e.msg, source=path, line=e.lineno) from e
        if not flatten:
            return data
        if not isinstance(data, dict):
            raise LoaderError("top-level JSON value must be an object", source=path)
        return flatten_keys(data)

    def _load_kv(self, path, **kwargs):
        values: Dict[str, Any] = {}
        self.line_numbers = {}
        with open(path, 'r', encoding='utf-8') as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.strip()
                if not line or line.startswith(('#', ';', '[')):
                    continue
                if ' #' in line:
                    line = line.split(' #', 1)[0].rstrip()
                if '=' not in line:
                    raise LoaderError("expected 'key = value'", source=path, line=lineno)
                key, value = (part.strip() for part in line.split('=', 1))
                if not key:
                    raise LoaderError("empty key", source=path, line=lineno)
                if key in values:
                    raise LoaderError(f"duplicate key '{key}'", source=path, line=lineno)
                values[key] = parse_value(value)
                self.line_numbers[key] = lineno
        return values


def flatten_keys(data: dict, prefix: str = "") -> Dict[str, Any]:
    """{"ges": {"alpha": 0.5}} -> {"ges.alpha": 0.5}; lists are kept as values."""
    flat = {}
    for key, value in data.items():
        name = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, dict):
            flat.update(flatten_keys(value, name))
        else:
            flat[name] = value
    return flat


def parse_value(text: str):
    """JSON literal if possible, a comma-separated list of literals, else the raw string."""
    try:
        return json.loads(text)
    except ValueError:
        pass
    if ',' in text:
        items = [item.strip() for item in text.split(',')]
        try:
            return [json.loads(item) for item in items]
        except ValueError:
            return items
    return text
