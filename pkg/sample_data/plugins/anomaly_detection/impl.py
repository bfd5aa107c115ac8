import pandas as pd
from pandas.api.types import is_numeric_dtype


def anomaly_detection(df: pd.DataFrame, ts_col: str, val_col: str):
    try:
        df[ts_col] = pd.to_datetime(df[ts_col])
    except Exception:
        print("Time column is not datetime")
        return

    if not is_numeric_dtype(df[val_col]):
        try:
            df[val_col] = df[val_col].astype(float)
        except ValueError:
            print("Value column is not numeric")
            return

    mean, std = df[val_col].mean(), df[val_col].std()
    cutoff = std * 3
    lower, upper = mean - cutoff, mean + cutoff
    df["Is_Anomaly"] = df[val_col].apply(lambda x: x < lower or x > upper)
    anomaly_count = df["Is_Anomaly"].sum()
    desc = f"There are {anomaly_count} anomalies in the data"

    return df, desc
