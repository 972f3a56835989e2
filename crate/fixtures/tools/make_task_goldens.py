"""Writes the study-task fixtures: input tables, programs and golden outputs.

Goldens are computed here with pandas and scipy, independently of the Rust
interpreter. Cells that a program does not touch keep their source token;
computed floats are written with Python's repr, which matches the shortest
round-trip rendering used by the engine.
"""

import csv
import io
import json
import os

import pandas as pd
from scipy import stats

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tasks")


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else v for v in r])
    with open(path, "w", newline="") as f:
        f.write(buf.getvalue())


def fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def task(name, tables, program, expect, scalars=None):
    d = os.path.join(ROOT, name)
    for tname, (header, rows) in tables.items():
        write_csv(os.path.join(d, "tables", tname + ".csv"), header, rows)
    with open(os.path.join(d, "program.json"), "w") as f:
        json.dump({"required_tables": [t + ".csv" for t in tables], "program": program}, f, indent=2)
        f.write("\n")
    files = {}
    for base, (header, rows) in expect.items():
        rel = "golden/%s.csv" % base
        write_csv(os.path.join(d, rel), header, rows)
        files[base] = rel
    doc = {"expect": files}
    if scalars:
        doc["scalars"] = scalars
    with open(os.path.join(d, "fixture.json"), "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def frame(header, rows):
    return pd.DataFrame([[None if v is None else v for v in r] for r in rows], columns=header)


# Task 1: quarterly segmentation of monthly sales.
months = ["January", "February", "March", "April", "May", "June", "July",
          "August", "September", "October", "November", "December"]
sales = [120, 95, 143, 160, 152, 171, 188, 176, 140, 133, 150, 210]
t1_rows = [[m, s] for m, s in zip(months, sales)]
program1 = [{"function": "insert", "table": "sales.csv", "index": 3, "index_name": "Quarter", "axis": 1}]
for q in range(4):
    program1.append({"function": "assign", "table": "sales.csv", "start_row_index": 3 * q + 1,
                     "end_row_index": 3 * q + 3, "start_column_index": "Quarter",
                     "end_column_index": "Quarter", "values": "Q%d" % (q + 1)})
program1.append({"function": "divide", "table": "sales.csv", "by": "Quarter", "axis": 1})
for q in range(4):
    program1.append({"function": "drop", "table": "sales_q%d.csv" % (q + 1), "label": "Quarter", "axis": 1})
df = frame(["Month", "Sales"], t1_rows)
expect1 = {}
for q in range(4):
    part = df.iloc[3 * q:3 * q + 3]
    expect1["sales_q%d" % (q + 1)] = (["Month", "Sales"], part.values.tolist())
task("task1_segmentation", {"sales": (["Month", "Sales"], t1_rows)}, program1, expect1)

# Task 2: mean imputation over every column.
t2_header = ["Student", "Math", "Physics", "Chemistry"]
t2_rows = [
    ["Ava", 78, None, 65],
    ["Ben", None, 82, 70],
    ["Cleo", 91, 88, None],
    ["Dev", 64, 71, 59],
    ["Eli", None, 93, 81],
]
df = frame(t2_header, t2_rows)
out = []
for r in t2_rows:
    row = list(r)
    for j, col in enumerate(t2_header[1:], start=1):
        if row[j] is None:
            row[j] = fmt(float(df[col].dropna().astype(float).mean()))
    out.append(row)
task("task2_imputation", {"grades": (t2_header, t2_rows)},
     [{"function": "fill", "table": "grades.csv", "method": "mean", "labels": None, "axis": 1}],
     {"grades": (t2_header, out)})

# Task 3: split by educational level, then mean income per group.
t3_header = ["Name", "Educational Level", "income"]
t3_rows = [
    ["Ana", "BS", 52000], ["Bo", "MS", 68000], ["Cy", "BS", 48500],
    ["Di", "PhD", 91000], ["Ed", "MS", 71500], ["Flo", "BS", 55250],
    ["Gus", "PhD", 87000],
]
df = frame(t3_header, t3_rows)
program3 = [{"function": "divide", "table": "survey.csv", "by": "Educational Level", "axis": 1}]
expect3 = {}
for level in ["BS", "MS", "PhD"]:
    base = "survey_" + level.lower()
    program3.append({"function": "aggregate", "table": base + ".csv", "functions": {"income": "mean"}, "axis": 1})
    mean = float(df[df["Educational Level"] == level]["income"].mean())
    expect3[base] = (["income"], [[fmt(mean)]])
task("task3_categorical", {"survey": (t3_header, t3_rows)}, program3, expect3)

# Task 4: inner merge on student id, then count "Male".
students = (["StudentID", "Name", "sex"], [
    ["00101", "Ava", "Female"], ["00102", "Ben", "Male"], ["00103", "Cal", "Male"],
    ["00104", "Dee", "Female"], ["00105", "Eric", "Male"],
])
grades = (["StudentID", "Grade"], [
    ["00102", 88], ["00104", 91], ["00105", 79], ["00107", 85],
])
a = frame(*students)
b = frame(*grades)
m = a.merge(b, on="StudentID", how="inner")
males = int((m["sex"] == "Male").sum())
task("task4_integration", {"students": students, "grades": grades},
     [{"function": "merge", "table_a": "students.csv", "table_b": "grades.csv", "how": "inner", "on": "StudentID"},
      {"function": "count", "table": "merged.csv", "label": "sex", "value": "Male", "axis": 1}],
     {"merged": (list(m.columns), m.values.tolist()), "merged_count": (["count"], [[males]])})

# Task 5 (exact-key variant): merge on the full name, split it, sort by last name.
roster = (["Name", "Email"], [
    ["Turing, Alan", "alan@example.org"], ["Hopper, Grace", "grace@example.org"],
    ["Lovelace, Ada", "ada@example.org"], ["Knuth, Donald", "don@example.org"],
])
scores = (["Name", "Score"], [
    ["Lovelace, Ada", 97], ["Turing, Alan", 92], ["Hopper, Grace", 95], ["Dijkstra, Edsger", 90],
])
a = frame(*roster)
b = frame(*scores)
m = a.merge(b, on="Name", how="inner")
parts = m["Name"].str.split(", ", n=1, expand=True)
m["last name"] = parts[0]
m["first name"] = parts[1]
m = m.drop(columns=["Name"]).sort_values("last name", key=lambda s: s.str.lower(), kind="stable")
task("task5_exact_match", {"roster": roster, "scores": scores},
     [{"function": "merge", "table_a": "roster.csv", "table_b": "scores.csv", "how": "inner", "on": "Name"},
      {"function": "split", "table": "merged.csv", "label": "Name", "delimiter": ", ",
       "new_label_list": ["last name", "first name"], "axis": 1},
      {"function": "drop", "table": "merged.csv", "label": "Name", "axis": 1},
      {"function": "rearrange", "table": "merged.csv", "by_values": "last name", "axis": 1}],
     {"merged": (list(m.columns), m.values.tolist())})

# Task 6: drop rows with more than half their cells missing, then mean-fill.
t6_header = ["ID", "Q1", "Q2", "Q3", "Q4"]
t6_rows = [
    ["R01", 4, 5, None, 3],
    ["R02", None, None, None, 2],
    ["R03", 3, None, 4, 4],
    ["R04", 5, 4, 5, None],
    ["R05", None, 2, None, None],
    ["R06", 2, 3, 3, 5],
]
kept = [r for r in t6_rows if sum(v is None for v in r) / len(r) <= 0.5]
df = frame(t6_header, kept)
out = []
for r in kept:
    row = list(r)
    for j, col in enumerate(t6_header[1:], start=1):
        if row[j] is None:
            row[j] = fmt(float(df[col].dropna().astype(float).mean()))
    out.append(row)
task("task6_cleaning", {"responses": (t6_header, t6_rows)},
     [{"function": "drop", "table": "responses.csv", "label": None, "axis": 0, "condition": "missing_ratio > 0.5"},
      {"function": "fill", "table": "responses.csv", "method": "mean", "labels": None, "axis": 1}],
     {"responses": (t6_header, out)})

# Task 7: Welch t-test, then a conditional column drop on significance.
staff = (["Name", "Years of Experience"], [
    ["Ann", 3], ["Bill", 7], ["Cara", 12], ["Dan", 5], ["Eve", 9], ["Finn", 2],
])
people = (["Name", "Age"], [
    ["Gail", 34], ["Hal", 41], ["Ivy", 29], ["Jon", 52], ["Kim", 38], ["Lou", 45], ["Max", 31],
])
res = stats.ttest_ind([r[1] for r in staff[1]], [r[1] for r in people[1]], equal_var=False)
significant = res.pvalue < 0.05
expected_people = (["Name"], [[r[0]] for r in people[1]]) if significant else people
task("task7_statistics", {"staff": staff, "people": people},
     [{"function": "test", "table_a": "staff.csv", "label_a": "Years of Experience", "table_b": "people.csv",
       "label_b": "Age", "strategy": "t-test", "axis": 1},
      {"function": "drop", "table": "people.csv", "label": "Age", "axis": 1, "condition": "p_value < 0.05"}],
     {"people": expected_people},
     scalars={"statistic": float(res.statistic), "p_value": float(res.pvalue)})
print("p =", res.pvalue)
