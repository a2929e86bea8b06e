"""Bundled UNSW-NB15 layout: schema files and the default feature subsets."""

from __future__ import annotations

from importlib import resources

from .data import FeatureSchema

# Re-exported here because they are part of the dataset's layout contract.
from .data import CLASS_NAMES, NORMAL_INDEX  # noqa: F401


def _read_text(name: str) -> str:
    return resources.files("nids_ensemble").joinpath("data", name).read_text("utf-8")


def official_schema() -> FeatureSchema:
    """Schema for the published 45-column train/test CSV files."""
    return FeatureSchema.from_text(_read_text("unsw_nb15.schema"))


def raw_dump_schema() -> FeatureSchema:
    """Schema for the raw 49-column dump (endpoint/time identifiers included)."""
    return FeatureSchema.from_text(_read_text("unsw_nb15_raw.schema"))


def _feature_list(name: str) -> tuple[str, ...]:
    out = []
    for raw_line in _read_text(name).splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return tuple(out)


def wide_feature_list() -> tuple[str, ...]:
    """The 24-feature subset consumed by the bagging and boosting models."""
    return _feature_list("unsw_features_wide.txt")


def narrow_feature_list() -> tuple[str, ...]:
    """The 8-feature subset consumed by the Hellinger forest."""
    return _feature_list("unsw_features_narrow.txt")
