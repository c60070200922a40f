"""Configuration Management Module

This module provides functionality to load and manage model files: the
dynamical system, its partition functions and the numeric options, stored as
YAML or JSON. Supports downloading model files from GitHub repositories.
"""

__all__ = ["ModelConfig", "DEFAULT_OPTIONS", "load_model", "model_to_dict", "print_model"]

import json
import math
import tempfile
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import requests
import yaml

from .dynamics import Box, DynSystem
from .exceptions import ExpressionSyntaxError, ModelFileError, PartitionError
from .expression import parse, to_source
from .partition import PartitionFunction

DEFAULT_OPTIONS: dict[str, Any] = {
    "grid": 201,
    "rk4_step": 1e-3,
    "t_max": 50.0,
    "seed": 42,
    "tol_complete": 1e-4,
    "tol_rel": 1e-3,
    "samples_per_level": 200,
    "extra_level_pairs": 5,
    "tol_psi": 1e-9,
    "init_samples": 1000,
    "manifold_delta": 1e-4,
    "manifold_horizon": 20.0,
    "proper_radius": 0.1,
    "proper_tol": 1e-8,
    "newton_seeds": 9,
    "sound_trajectories": 200,
    "sound_horizon": 2.0,
    "sound_times": 50,
}

_INTEGER_OPTIONS = {
    "grid",
    "seed",
    "samples_per_level",
    "extra_level_pairs",
    "init_samples",
    "newton_seeds",
    "sound_trajectories",
    "sound_times",
}


def _level_value(value: Any, block: str) -> float:
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf"):
            return math.inf
        if text == "-inf":
            return -math.inf
    if isinstance(value, bool) or not isinstance(value, int | float | str):
        raise ModelFileError(f"Invalid level value {value!r}", block=block)
    try:
        return float(value)
    except ValueError as e:
        raise ModelFileError(f"Invalid level value {value!r}", block=block) from e


def _level_text(value: float) -> float | str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _box(value: Any, dim: int, block: str, name: str) -> Box:
    if not isinstance(value, list) or len(value) != dim:
        raise ModelFileError(f"'{name}' must list {dim} [lower, upper] intervals", block=block)
    for interval in value:
        if not isinstance(interval, list) or len(interval) != 2:
            raise ModelFileError(f"Malformed interval {interval!r} in '{name}'", block=block)
    try:
        return Box.from_intervals([[float(lo), float(hi)] for lo, hi in value])
    except (TypeError, ValueError) as e:
        raise ModelFileError(f"Malformed '{name}': {e}", block=block) from e


def model_to_dict(system: DynSystem, families: Sequence[PartitionFunction], options: dict[str, Any] | None = None):
    """Model-file document describing ``system``, ``families`` and ``options``."""
    document: dict[str, Any] = {
        "system": {
            "dim": system.dim,
            "f": [to_source(component) for component in system.f],
            "domain": system.domain.intervals,
        },
        "partitions": [
            {"name": pf.name, "phi": to_source(pf.phi), "levels": [_level_text(a) for a in pf.levels]}
            for pf in families
        ],
    }
    if system.init_box is not None:
        document["system"]["init"] = system.init_box.intervals
    if options:
        document["options"] = dict(options)
    return document


def print_model(
    system: DynSystem, families: Sequence[PartitionFunction], options: dict[str, Any] | None = None
) -> str:
    """YAML model-file text of a model; ``load_model`` of the text gives it back."""
    return yaml.safe_dump(model_to_dict(system, families, options), default_flow_style=None, sort_keys=False)


class ModelConfig:
    """
    Handler for loading and managing model files.

    Supports loading from YAML or JSON files with profile-specific option overrides.
    Can download model files from GitHub repositories.
    """

    def __init__(
        self,
        config_path: str | None = None,
        repo_owner: str | None = None,
        repo_name: str | None = None,
        config_file_path: str | None = None,
        branch: str = "main",
        github_token: str | None = None,
    ):
        """
        Initialize the model configuration.

        Can load from a local file or download from a GitHub repository.

        Args:
            config_path: Path to local model file (YAML or JSON)
            repo_owner: GitHub repository owner (for downloading from GitHub)
            repo_name: GitHub repository name (for downloading from GitHub)
            config_file_path: Path to the model file within the GitHub repository
            branch: Git branch to download from (default: "main")
            github_token: GitHub personal access token (optional, for private repos)

        Example (local file):
            config = ModelConfig(config_path="models/saddle.yaml")

        Example (from GitHub):
            config = ModelConfig(
                repo_owner="myorg",
                repo_name="my-models",
                config_file_path="models/saddle.yaml",
            )
        """
        self.config_path = config_path
        self.config: dict[str, Any] = {}

        if repo_owner and repo_name and config_file_path:
            print(f"📥 Downloading model from GitHub: {repo_owner}/{repo_name}/{config_file_path}")
            self.config_path = self._download_config_from_github(
                repo_owner=repo_owner,
                repo_name=repo_name,
                file_path=config_file_path,
                branch=branch,
                github_token=github_token,
            )
            print("✅ Model downloaded successfully")

        if self.config_path:
            self.load_config(self.config_path)

    def _download_config_from_github(
        self, repo_owner: str, repo_name: str, file_path: str, branch: str = "main", github_token: str | None = None
    ) -> str:
        """
        Download a model file from a GitHub repository.

        Returns:
            Path to the downloaded file (in a temp directory)

        Raises:
            FileNotFoundError: If the file does not exist in the repository
            PermissionError: If access is denied
            ConnectionError: On any other download failure
        """
        source = f"{repo_owner}/{repo_name}@{branch}:{file_path}"
        url = f"https://raw.githubusercontent.com/{repo_owner}/{repo_name}/{branch}/{file_path}"
        headers = {"Authorization": f"token {github_token}"} if github_token else {}

        try:
            response = requests.get(url, headers=headers, timeout=30)
            response.raise_for_status()
        except requests.exceptions.HTTPError as e:
            status = e.response.status_code if e.response is not None else None
            if status == 404:
                raise FileNotFoundError(f"No model file at {source} ({url})") from e
            if status in (401, 403):
                raise PermissionError(
                    f"GitHub refused access to {source}; pass github_token for private repositories"
                ) from e
            raise ConnectionError(f"Downloading {source} failed with HTTP {status}") from e
        except requests.exceptions.RequestException as e:
            raise ConnectionError(f"Could not reach GitHub for {source}: {e}") from e

        with tempfile.NamedTemporaryFile(
            mode="w", suffix=Path(file_path).suffix, delete=False, encoding="utf-8"
        ) as temp_file:
            temp_file.write(response.text)
            return temp_file.name

    def load_config(self, config_path: str) -> dict[str, Any]:
        """
        Load a model file.

        Args:
            config_path: Path to a .yaml, .yml or .json file

        Returns:
            The raw document

        Raises:
            FileNotFoundError: If the file doesn't exist
            ModelFileError: If the format is unsupported or the file does not parse
        """
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"Model file not found: {config_path}")

        file_ext = path.suffix.lower()
        with open(path, encoding="utf-8") as f:
            if file_ext in (".yaml", ".yml"):
                try:
                    document = yaml.safe_load(f) or {}
                except yaml.YAMLError as e:
                    mark = getattr(e, "problem_mark", None)
                    line = mark.line + 1 if mark is not None else None
                    column = mark.column + 1 if mark is not None else None
                    raise ModelFileError(f"Invalid YAML: {e}", line=line, column=column) from e
            elif file_ext == ".json":
                try:
                    document = json.load(f)
                except json.JSONDecodeError as e:
                    raise ModelFileError(f"Invalid JSON: {e.msg}", line=e.lineno, column=e.colno) from e
            else:
                raise ModelFileError(f"Unsupported file format: {file_ext}. Use .yaml, .yml, or .json")

        if not isinstance(document, dict):
            raise ModelFileError("Model file must contain a mapping at the top level")
        self.config = document
        self.config_path = str(path)
        print(f"✅ Model loaded from {config_path}")
        return self.config

    def get(self, key: str, default: Any = None, profile: str | None = None) -> Any:
        """
        Get a configuration value.

        Args:
            key: Configuration key (supports dot notation, e.g., "options.grid")
            default: Default value if key not found
            profile: Profile name for profile-specific overrides

        Returns:
            Configuration value or default
        """
        if profile:
            value = self._get_nested(self.config, f"profiles.{profile}.{key}")
            if value is not None:
                return value
        value = self._get_nested(self.config, key)
        return value if value is not None else default

    def _get_nested(self, data: dict, key: str) -> Any:
        """Get nested dictionary value using dot notation."""
        value: Any = data
        for k in key.split("."):
            if not isinstance(value, dict):
                return None
            value = value.get(k)
            if value is None:
                return None
        return value

    def get_options(self, profile: str | None = None) -> dict[str, Any]:
        """
        Numeric options with defaults applied.

        Profile overrides live under ``profiles.<name>.options``.

        Raises:
            ModelFileError: On unknown profile, unknown option or invalid value
        """
        if profile and self._get_nested(self.config, f"profiles.{profile}") is None:
            raise ModelFileError(f"Unknown profile '{profile}'", block="profiles")
        given = self.config.get("options") or {}
        if not isinstance(given, dict):
            raise ModelFileError("'options' must be a mapping", block="options")
        overrides = self._get_nested(self.config, f"profiles.{profile}.options") or {} if profile else {}
        unknown = sorted(set(given) - set(DEFAULT_OPTIONS) | set(overrides) - set(DEFAULT_OPTIONS))
        if unknown:
            raise ModelFileError(f"Unknown option(s): {', '.join(unknown)}", block="options")

        options = {}
        for key, default in DEFAULT_OPTIONS.items():
            value = self.get(f"options.{key}", default, profile=profile)
            try:
                value = int(value) if key in _INTEGER_OPTIONS else float(value)
            except (TypeError, ValueError) as e:
                raise ModelFileError(f"Option '{key}' must be numeric, got {value!r}", block="options") from e
            if key != "seed" and value <= 0 and key != "extra_level_pairs":
                raise ModelFileError(f"Option '{key}' must be positive, got {value}", block="options")
            options[key] = value
        if options["grid"] < 3:
            raise ModelFileError("Option 'grid' must be at least 3", block="options")
        if options["extra_level_pairs"] < 0:
            raise ModelFileError("Option 'extra_level_pairs' must be nonnegative", block="options")
        return options

    def get_system(self) -> DynSystem:
        """
        Build the dynamical system from the ``system`` block.

        Raises:
            ModelFileError: If the block is missing or malformed
        """
        block = self.config.get("system")
        if not isinstance(block, dict):
            raise ModelFileError("Exactly one 'system' block is required", block="system")
        dim = block.get("dim")
        if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
            raise ModelFileError(f"'dim' must be a positive integer, got {dim!r}", block="system")
        sources = block.get("f")
        if not isinstance(sources, list) or len(sources) != dim:
            raise ModelFileError(f"'f' must list {dim} expressions", block="system")

        components = []
        for index, source in enumerate(sources, start=1):
            try:
                components.append(parse(str(source), dim))
            except ExpressionSyntaxError as e:
                raise ModelFileError(f"f{index}: {e}", block="system") from e

        domain = _box(block.get("domain"), dim, "system", "domain")
        init_box = _box(block["init"], dim, "system", "init") if block.get("init") is not None else None
        try:
            return DynSystem(dim=dim, f=tuple(components), domain=domain, init_box=init_box)
        except ValueError as e:
            raise ModelFileError(str(e), block="system") from e

    def get_partitions(self, system: DynSystem) -> list[PartitionFunction]:
        """
        Build the partition functions of the ``partitions`` blocks.

        Raises:
            ModelFileError: On duplicate names, unparsable phi or malformed levels
        """
        blocks = self.config.get("partitions") or []
        if not isinstance(blocks, list):
            raise ModelFileError("'partitions' must be a list", block="partitions")
        families = []
        seen = set()
        for position, block in enumerate(blocks):
            if not isinstance(block, dict):
                raise ModelFileError("Each partition must be a mapping", block=f"partitions[{position}]")
            name = str(block.get("name") or f"phi{position + 1}")
            label = f"partition '{name}'"
            if name in seen:
                raise ModelFileError(f"Duplicate partition name '{name}'", block=label)
            seen.add(name)
            levels = block.get("levels")
            if not isinstance(levels, list):
                raise ModelFileError("'levels' must be a list", block=label)
            values = [_level_value(v, label) for v in levels]
            if any(b <= a for a, b in zip(values, values[1:], strict=False)):
                raise ModelFileError("levels not strictly increasing", block=label)
            try:
                families.append(PartitionFunction.create(name, str(block.get("phi", "")), values, system))
            except ExpressionSyntaxError as e:
                raise ModelFileError(f"phi: {e}", block=label) from e
            except PartitionError as e:
                raise ModelFileError(str(e), block=label) from e
        return families

    def load_model(self, profile: str | None = None) -> tuple[DynSystem, list[PartitionFunction], dict[str, Any]]:
        """Fully validated (system, partition functions, options)."""
        system = self.get_system()
        return system, self.get_partitions(system), self.get_options(profile)

    def save_config(self, output_path: str, format: str = "yaml") -> None:
        """
        Save the current document to file.

        Args:
            output_path: Path to save the document
            format: Output format ('yaml' or 'json')
        """
        _write_document(self.config, output_path, format)
        print(f"✅ Model saved to {output_path}")

    @classmethod
    def from_model(
        cls, system: DynSystem, families: Sequence[PartitionFunction], options: dict[str, Any] | None = None
    ) -> "ModelConfig":
        """Configuration holding the document of an in-memory model."""
        config = cls()
        config.config = model_to_dict(system, families, options)
        return config

    @staticmethod
    def create_template(output_path: str, format: str = "yaml") -> None:
        """
        Create a template model file (the planar saddle x1' = -x1, x2' = x2).

        Args:
            output_path: Path to save the template
            format: Output format ('yaml' or 'json')
        """
        template = {
            "system": {
                "dim": 2,
                "f": ["-x1", "x2"],
                "domain": [[-4, 4], [-4, 4]],
                "init": [[4, 4], [-0.1, 0.1]],
            },
            "partitions": [
                {"name": "phi1", "phi": "x1^2", "levels": [0, 1, 4, 16]},
                {"name": "phi2", "phi": "-x2^2", "levels": [-16, -4, -1, 0]},
            ],
            "options": dict(DEFAULT_OPTIONS),
            "profiles": {
                "quick": {"options": {"grid": 101, "samples_per_level": 50, "t_max": 10}},
                "fine": {"options": {"grid": 301, "rk4_step": 5e-4}},
            },
        }
        _write_document(template, output_path, format)
        print(f"✅ Model template created at {output_path}")
        print("📝 Edit this file with your system and partition functions")


def _write_document(document: dict[str, Any], output_path: str, format: str) -> None:
    path = Path(output_path)
    if path.parent != Path():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        if format.lower() == "yaml":
            yaml.safe_dump(document, f, default_flow_style=None, sort_keys=False)
        elif format.lower() == "json":
            json.dump(document, f, indent=2)
        else:
            raise ValueError(f"Unsupported format: {format}")


def load_model(path: str, profile: str | None = None) -> tuple[DynSystem, list[PartitionFunction], dict[str, Any]]:
    """Load and validate a model file."""
    return ModelConfig(config_path=path).load_model(profile)
