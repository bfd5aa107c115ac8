#!/usr/bin/env python3
"""Regenerate the bundled scripted-LLM scenario files in sample_data/scripts/.

Run from the repository root:

    python scripts/build_demo_scripts.py
"""

from pathlib import Path

from codeloop.gateway import ScriptedExchange
from codeloop.scripting import codegen_exchange, planner_exchange, script_to_yaml

OUT_DIR = Path(__file__).resolve().parent.parent / "sample_data" / "scripts"


def anomaly_script() -> list[ScriptedExchange]:
    """Two-round anomaly hunt: pull data, confirm columns, detect, report."""
    init_plan = (
        "1. pull data from the time_series table in the database\n"
        "2. confirm the columns for anomaly detection with the user "
        "<interactively depends on 1>\n"
        "3. detect anomalies on the pulled data <interactively depends on 2>\n"
        "4. report the detected anomalies to the user <interactively depends on 3>"
    )
    return [
        planner_exchange(
            "detect anomalies",
            init_plan=init_plan,
            plan=init_plan,
            current_plan_step="1. pull data from the time_series table in the database",
            send_to="CodeInterpreter",
            message=(
                "Please pull all data from the time_series table in the database "
                "and show the column names."
            ),
        ),
        codegen_exchange(
            "time_series",
            thought="Use the sql_pull_data plugin and list the columns of the result.",
            code=(
                'query = "SELECT * FROM time_series"\n'
                "df, description = sql_pull_data(query)\n"
                "df.columns.tolist()"
            ),
        ),
        planner_exchange(
            "'ts'",
            init_plan=init_plan,
            plan=init_plan,
            current_plan_step=(
                "2. confirm the columns for anomaly detection with the user"
            ),
            send_to="User",
            message=(
                "The data has two columns: ts and val. Should I run anomaly "
                "detection with ts as the timestamp column and val as the value "
                "column?"
            ),
        ),
        planner_exchange(
            "ts and val",
            init_plan=init_plan,
            plan=init_plan,
            current_plan_step="3. detect anomalies on the pulled data",
            send_to="CodeInterpreter",
            message=(
                "Please run anomaly detection on the pulled data with ts_col='ts' "
                "and val_col='val', and save the labeled data as an artifact."
            ),
        ),
        codegen_exchange(
            "anomaly detection",
            thought="Call the anomaly_detection plugin on the pulled DataFrame.",
            code=(
                "time_col_name = 'ts'\n"
                "value_col_name = 'val'\n"
                "anomaly_df, anomaly_description = anomaly_detection(df, "
                "time_col_name, value_col_name)\n"
                "anomaly_df.to_csv('artifacts/anomalies.csv', index=False)\n"
                "anomaly_description"
            ),
        ),
        planner_exchange(
            "11 anomalies",
            init_plan=init_plan,
            plan=init_plan,
            current_plan_step="4. report the detected anomalies to the user",
            send_to="User",
            message=(
                "Anomaly detection finished: 11 anomalies were detected in the "
                "val column. The labeled data is available as the "
                "anomalies.csv artifact."
            ),
        ),
    ]


def file_chain_script() -> list[ScriptedExchange]:
    """Follow instructions across chained files, replanning after each read."""
    plan_a = (
        "1. read file_A.txt and show its content\n"
        "2. follow the instructions according to the file content "
        "<interactively depends on 1>\n"
        "3. report the result to the user <interactively depends on 2>"
    )
    plan_b = (
        "1. read file_A.txt and show its content\n"
        "2. read file_B.txt in the same directory <interactively depends on 1>\n"
        "3. follow the instructions according to the file content "
        "<interactively depends on 2>\n"
        "4. report the result to the user <interactively depends on 3>"
    )
    plan_c = (
        "1. read file_A.txt and show its content\n"
        "2. read file_B.txt in the same directory <interactively depends on 1>\n"
        "3. read file_C.txt in the same directory <interactively depends on 2>\n"
        "4. report the result to the user <interactively depends on 3>"
    )

    def read_code(name: str) -> str:
        return f"with open('{name}') as f:\n    content = f.read()\nprint(content)"

    return [
        planner_exchange(
            "file_A.txt",
            init_plan=plan_a,
            plan=plan_a,
            current_plan_step="1. read file_A.txt and show its content",
            send_to="CodeInterpreter",
            message="Please read the content of the file file_A.txt",
        ),
        codegen_exchange(
            "file_A.txt", thought="Read the file and print its content.", code=read_code("file_A.txt")
        ),
        planner_exchange(
            "file_B.txt",
            init_plan=plan_b,
            plan=plan_b,
            current_plan_step="2. read file_B.txt in the same directory",
            send_to="CodeInterpreter",
            message="Please read the content of the file file_B.txt",
        ),
        codegen_exchange(
            "file_B.txt", thought="Read the next file in the chain.", code=read_code("file_B.txt")
        ),
        planner_exchange(
            "file_C.txt",
            init_plan=plan_c,
            plan=plan_c,
            current_plan_step="3. read file_C.txt in the same directory",
            send_to="CodeInterpreter",
            message="Please read the content of the file file_C.txt",
        ),
        codegen_exchange(
            "file_C.txt", thought="Read the last file in the chain.", code=read_code("file_C.txt")
        ),
        planner_exchange(
            "12345",
            init_plan=plan_c,
            plan=plan_c,
            current_plan_step="4. report the result to the user",
            send_to="User",
            message="The key is 12345.",
        ),
    ]


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for name, exchanges in (
        ("anomaly_demo.yaml", anomaly_script()),
        ("file_chain_demo.yaml", file_chain_script()),
    ):
        (OUT_DIR / name).write_text(script_to_yaml(exchanges))
        print(f"wrote {OUT_DIR / name}")


if __name__ == "__main__":
    main()
