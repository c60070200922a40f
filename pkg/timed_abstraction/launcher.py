"""Timed Abstraction - Main Orchestration Module

This module provides the main AbstractionLauncher class that orchestrates all operations:
- Loading a model file (locally or from GitHub)
- Validating partition functions
- Building the level-set partition
- Generating the timed-automaton abstraction
- Simulating the system and the automaton
- Verifying the abstraction and reporting the verdicts
"""

__all__ = ["AbstractionLauncher", "ALL_CHECKS", "resolve_checks"]

import math
import shutil
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .abstraction import AbstractionGenerator, TransitTimeTable, is_critical_level, sample_level_set
from .config_manager import DEFAULT_OPTIONS, ModelConfig
from .dynamics import DynSystem, FlowSample, flow
from .exceptions import TimedAbstractionError
from .partition import Partition, PartitionBuilder, PartitionFunction
from .serialization import (
    export_dot,
    export_ta_json,
    import_ta_json,
    write_membership_csv,
    write_run_csv,
    write_trajectory_csv,
)
from .timed_automaton import Run, TimedAutomaton, simulate_run
from .verification import CHECKS, AbstractionVerifier
from .verification_report import VerificationReport

ALL_CHECKS = CHECKS


def resolve_checks(checks: Iterable[str]) -> list[str]:
    """
    Expand "all" and validate check names, keeping the canonical order.

    Raises:
        ValueError: On an unknown check name
    """
    requested = set()
    for check in checks:
        if check == "all":
            requested.update(ALL_CHECKS)
        elif check in ALL_CHECKS:
            requested.add(check)
        else:
            raise ValueError(f"Unknown check '{check}'. Choose from: {', '.join(ALL_CHECKS)}, all")
    return [check for check in ALL_CHECKS if check in requested]


class AbstractionLauncher:
    """
    Main orchestrator for building and verifying timed-automaton abstractions.

    Example usage:
        >>> from timed_abstraction import AbstractionLauncher
        >>>
        >>> launcher = AbstractionLauncher(model_file="models/saddle.yaml")
        >>> ta = launcher.generate_abstraction(output="saddle_ta.json")
        >>> report = launcher.verify(["complete", "sound"])
        >>> report.all_passed
        True
    """

    @staticmethod
    def download_model_from_github(
        repo_owner: str,
        repo_name: str,
        model_file_path: str,
        branch: str = "main",
        github_token: str | None = None,
        save_to: str | None = None,
    ) -> str:
        """
        Download a model file from a GitHub repository.

        Args:
            repo_owner: GitHub repository owner
            repo_name: GitHub repository name
            model_file_path: Path to the model file within the repository
            branch: Git branch (default: "main")
            github_token: GitHub token for private repos (optional)
            save_to: Local path to save the model file (optional, uses temp file if None)

        Returns:
            Path to the downloaded model file
        """
        config = ModelConfig(
            repo_owner=repo_owner,
            repo_name=repo_name,
            config_file_path=model_file_path,
            branch=branch,
            github_token=github_token,
        )
        if save_to and config.config_path:
            shutil.copy(config.config_path, save_to)
            print(f"💾 Model saved to: {save_to}")
            return save_to
        return config.config_path

    def __init__(
        self,
        model_file: str | None = None,
        profile: str | None = None,
        model_repo_owner: str | None = None,
        model_repo_name: str | None = None,
        model_file_path: str | None = None,
        model_branch: str = "main",
        model_github_token: str | None = None,
        system: DynSystem | None = None,
        families: Sequence[PartitionFunction] | None = None,
        options: dict[str, Any] | None = None,
    ):
        """
        Initialize the launcher from a model file, a GitHub model or in-memory objects.

        Args:
            model_file: Path to a local model file (YAML or JSON)
            profile: Name of the option profile to apply
            model_repo_owner: GitHub repository owner (for downloading the model)
            model_repo_name: GitHub repository name (for downloading the model)
            model_file_path: Path to the model file within the GitHub repository
            model_branch: Git branch for the model file (default: "main")
            model_github_token: GitHub token for private repositories (optional)
            system: Dynamical system (when no model file is given)
            families: Partition functions (when no model file is given)
            options: Option overrides (when no model file is given)

        Raises:
            ValueError: If neither a model file nor a system is given
            ModelFileError: If the model file is invalid
        """
        self.config: ModelConfig | None = None
        if model_repo_owner and model_repo_name and model_file_path:
            self.config = ModelConfig(
                repo_owner=model_repo_owner,
                repo_name=model_repo_name,
                config_file_path=model_file_path,
                branch=model_branch,
                github_token=model_github_token,
            )
            self.model_name = Path(model_file_path).stem
        elif model_file:
            self.config = ModelConfig(config_path=model_file)
            self.model_name = Path(model_file).stem
        elif system is None:
            raise ValueError("Provide a model file, a GitHub model location or a system")
        else:
            self.model_name = "model"

        if self.config is not None:
            self.system, self.families, self.options = self.config.load_model(profile)
        else:
            self.system = system
            self.families = list(families or [])
            self.options = {**DEFAULT_OPTIONS, **(options or {})}
        self.profile = profile

        self._partition_builder: PartitionBuilder | None = None
        self._partition: Partition | None = None
        self._generator: AbstractionGenerator | None = None
        self._ta: TimedAutomaton | None = None

        print(f"🚀 Timed abstraction launcher initialized for '{self.model_name}'")
        print(f"📐 Dimension: {self.system.dim}, partition functions: {len(self.families)}")
        if profile:
            print(f"🏷️ Profile: {profile}")

    @property
    def partition_builder(self) -> PartitionBuilder:
        """Get or create the partition builder instance."""
        if self._partition_builder is None:
            self._partition_builder = PartitionBuilder(
                self.system, resolution=self.options["grid"], tol_psi=self.options["tol_psi"]
            )
            for pf in self.families:
                self._partition_builder.families.append(pf)
        return self._partition_builder

    @property
    def partition(self) -> Partition:
        """Get or build the partition."""
        if self._partition is None:
            self._partition = self.partition_builder.build()
        return self._partition

    @property
    def generator(self) -> AbstractionGenerator:
        """Get or create the abstraction generator instance."""
        if self._generator is None:
            self._generator = AbstractionGenerator(self.system, self.partition, self.options)
        return self._generator

    @property
    def tables(self) -> list[TransitTimeTable]:
        if not self.generator.tables:
            self.generator.estimate_tables()
        return self.generator.tables

    @property
    def ta(self) -> TimedAutomaton:
        """Get or generate the timed automaton."""
        if self._ta is None:
            self._ta = self.generator.generate()
        return self._ta

    def use_abstraction(self, ta_path: str) -> TimedAutomaton:
        """Use a previously exported automaton instead of generating one."""
        self._ta = import_ta_json(ta_path)
        print(f"📄 Loaded timed automaton from {ta_path}")
        return self._ta

    def validate(self) -> VerificationReport:
        """
        Check that every partition function is nonincreasing and diagnose its levels.

        Critical levels are reported as warnings; they do not fail validation.

        Returns:
            Report holding one "nonincreasing" verdict per partition function
        """
        report = VerificationReport(model=self.model_name)
        report.start_verification(**self.options)
        print("🔍 Validating partition functions")
        builder = self.partition_builder
        for verdict in builder.validate():
            report.add_verdict(verdict, verdict.details["family"])

        for pf in self.families:
            for level in pf.levels:
                if not math.isfinite(level):
                    continue
                samples = sample_level_set(pf.phi, builder.grid, level, self.options["samples_per_level"])
                if samples.shape[0] == 0:
                    message = f"level {level:g} of '{pf.name}' does not meet the domain grid"
                elif is_critical_level(pf, builder.grid, level, samples):
                    message = f"level {level:g} of '{pf.name}' is a critical value"
                else:
                    continue
                report.add_warning(message, step="validate")
                print(f"⚠️ Warning: {message}")

        report.add_step("Validation", "success" if report.all_passed else "error")
        report.end_verification()
        return report

    def build_partition(self, membership_csv: str | None = None) -> Partition:
        """
        Build the partition and print its census.

        Args:
            membership_csv: Optional path for a CSV of grid-point cell membership
        """
        partition = self.partition
        print("📋 Cell census (slice indices g: connected components)")
        for g, count in sorted(partition.census().items()):
            print(f"  • g={g}: {count}")
        if membership_csv:
            write_membership_csv(partition, membership_csv)
            print(f"💾 Cell membership written to {membership_csv}")
        return partition

    def generate_abstraction(self, output: str | None = None, dot: str | None = None) -> TimedAutomaton:
        """
        Generate the timed automaton, optionally exporting it.

        Args:
            output: Optional JSON output path
            dot: Optional GraphViz dot output path
        """
        ta = self.ta
        if output:
            export_ta_json(ta, output)
            print(f"💾 Timed automaton written to {output}")
        if dot:
            export_dot(ta, dot, name=self.model_name)
            print(f"💾 Dot graph written to {dot}")
        return ta

    def simulate_ode(self, x0: Sequence[float], t_end: float, output: str | None = None) -> FlowSample:
        """Integrate the system from ``x0`` and optionally write the trajectory CSV."""
        sample = flow(self.system, np.asarray(x0, dtype=float), t_end, h=self.options["rk4_step"])
        if sample.exit_time is not None:
            print(f"⚠️ Warning: trajectory left the domain at t = {sample.exit_time:.6g}")
        final = ", ".join(f"{v:.6g}" for v in sample.final_state)
        print(f"✅ Integrated to t = {sample.final_time:.6g}: ({final})")
        if output:
            write_trajectory_csv(sample, output)
            print(f"💾 Trajectory written to {output}")
        return sample

    def simulate_ta(
        self, e0: str | None = None, horizon: float = 10.0, seed: int | None = None, output: str | None = None
    ) -> Run:
        """Sample a run of the automaton; ``e0`` defaults to the first initial location."""
        ta = self.ta
        if e0 is None:
            e0 = sorted(ta.initial)[0]
        run = simulate_run(ta, e0, self.options["seed"] if seed is None else seed, horizon)
        path = " -> ".join(run.locations)
        print(f"✅ Run from {e0} ({run.outcome}): {path}")
        if output:
            write_run_csv(run, ta.clocks, output)
            print(f"💾 Run written to {output}")
        return run

    def verify(
        self, checks: Iterable[str] = ("all",), report_path: str | None = None, format: str = "json"
    ) -> VerificationReport:
        """
        Run verification checks and collect their verdicts.

        An error raised by a check is recorded in the report and counts as a failure.

        Args:
            checks: Check names ("sound", "complete", "prop2", "lemma1", "theorem1",
                "invariance") or "all"
            report_path: Optional path to save the report
            format: Report format ('json' or 'text')

        Returns:
            The verification report
        """
        selected = resolve_checks(checks)
        print("=" * 60)
        print(f"🔍 Verifying '{self.model_name}': {', '.join(selected)}")
        print("=" * 60)

        report = VerificationReport(model=self.model_name)
        report.start_verification(checks=selected, **self.options)
        verifier = AbstractionVerifier(self.system, self.families, self.options, report)
        steps = {
            "sound": lambda: verifier.verify_soundness(self.partition, self.ta),
            "complete": lambda: verifier.verify_completeness(self.tables),
            "prop2": verifier.verify_levelset_sync,
            "lemma1": verifier.verify_critical_points,
            "theorem1": verifier.verify_manifold_containment,
            "invariance": verifier.verify_invariance,
        }
        for check in selected:
            try:
                steps[check]()
                report.add_step(check, "success")
            except TimedAbstractionError as e:
                report.add_step(check, "error", str(e))
                report.add_error(str(e), step=check)
                print(f"❌ {check} failed to run: {e}")

        report.end_verification()
        report.print_report()
        if report_path:
            report.save_report(report_path, format=format)
        return report
