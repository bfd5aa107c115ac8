import os
import re
import sqlite3

import pandas as pd


def _table_from_query(query: str) -> str:
    match = re.search(r"from\s+([A-Za-z_][A-Za-z0-9_]*)", query, re.IGNORECASE)
    return match.group(1) if match else "time_series"


def sql_pull_data(query: str):
    """Pull rows from the session's data source.

    Looks for ``database.sqlite`` in the session workdir first; falls back
    to a ``<table>.csv`` file so demos can ship plain CSV data.
    """
    table = _table_from_query(query)
    sql = query if query.strip().lower().startswith("select") else f"SELECT * FROM {table}"
    if os.path.exists("database.sqlite"):
        with sqlite3.connect("database.sqlite") as conn:
            df = pd.read_sql_query(sql, conn)
        return df, sql
    csv_path = f"{table}.csv"
    if not os.path.exists(csv_path):
        raise FileNotFoundError(
            f"no database.sqlite and no {csv_path} in the session workdir"
        )
    df = pd.read_csv(csv_path)
    return df, sql
