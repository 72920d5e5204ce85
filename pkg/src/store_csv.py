import hashlib
from pathlib import Path
from typing import Dict, List, Mapping

import pandas as pd

from logging_conf import logger
from schemas import Family, FittedModel, KlReport
from utils_text import format_key_values, parse_key_values


class CSVStore:
    """CSV storage for run products with fixed column order"""

    @staticmethod
    def write_table(df: pd.DataFrame, target_csv: Path, columns: List[str]) -> int:
        """
        Write a table with exactly the given columns

        Floats are written in shortest round-trip form and lines end in
        '\\n' so output bytes are platform independent.

        Returns:
            Number of rows written
        """
        missing = [c for c in columns if c not in df.columns]
        if missing:
            raise ValueError(f"table for {target_csv.name} lacks columns {missing}")

        target_csv.parent.mkdir(parents=True, exist_ok=True)
        df[columns].to_csv(target_csv, index=False, encoding='utf-8', lineterminator='\n')
        logger.debug(f"Saved {len(df)} rows to {target_csv.name}")
        return len(df)

    @staticmethod
    def read_table(file_path: Path, columns: List[str]) -> pd.DataFrame:
        """Load a table written by write_table and check its header"""
        if not file_path.exists():
            raise FileNotFoundError(f"missing table {file_path}")
        df = pd.read_csv(file_path, encoding='utf-8', float_precision='round_trip')
        if list(df.columns) != columns:
            raise ValueError(f"{file_path.name} has columns {list(df.columns)}, expected {columns}")
        return df


class CSVSchemas:
    """Column lists of every CSV product"""

    HISTOGRAM = ['bin_lo', 'bin_hi', 'density']

    DETECTIONS = ['row', 'col', 'amplitude', 'threshold']

    KL = ['family', 'p1', 'p2', 'kl']

    FIT = ['family', 'p1', 'p2', 'log_likelihood']


def histogram_frame(bin_edges, density) -> pd.DataFrame:
    return pd.DataFrame({'bin_lo': bin_edges[:-1], 'bin_hi': bin_edges[1:], 'density': density})


def fit_frame(models: Mapping[Family, FittedModel]) -> pd.DataFrame:
    """One row per fitted family, in family order"""
    rows = [
        {'family': fam.value, 'p1': models[fam].p1, 'p2': models[fam].p2, 'log_likelihood': models[fam].log_likelihood}
        for fam in Family if fam in models
    ]
    return pd.DataFrame(rows, columns=CSVSchemas.FIT)


def kl_frame(report: KlReport) -> pd.DataFrame:
    rows = [
        {'family': fam.value, 'p1': report.models[fam].p1, 'p2': report.models[fam].p2, 'kl': report.distances[fam]}
        for fam in Family if fam in report.distances
    ]
    return pd.DataFrame(rows, columns=CSVSchemas.KL)


def load_fitted_models(file_path: Path) -> Dict[Family, FittedModel]:
    """Rebuild FittedModel objects from a fit table"""
    df = CSVStore.read_table(file_path, CSVSchemas.FIT)
    models: Dict[Family, FittedModel] = {}
    for record in df.to_dict('records'):
        family = Family(record['family'])
        p2 = None if pd.isna(record['p2']) else float(record['p2'])
        models[family] = FittedModel(
            family=family,
            p1=float(record['p1']),
            p2=p2,
            log_likelihood=float(record['log_likelihood']),
        )
    return models


def write_key_values(values: Mapping[str, object], target: Path) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(format_key_values(values), encoding='utf-8', newline='\n')


def read_key_values(source: Path) -> Dict[str, str]:
    return parse_key_values(source.read_text(encoding='utf-8'))


def hash_file(file_path: Path) -> str:
    """Calculate SHA256 hash of a file"""
    sha256_hash = hashlib.sha256()
    with open(file_path, "rb") as f:
        for byte_block in iter(lambda: f.read(4096), b""):
            sha256_hash.update(byte_block)
    return sha256_hash.hexdigest()
