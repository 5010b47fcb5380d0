#!/usr/bin/env python3
"""Generate the bundled five-language mini corpus.

Writes data/mini/raw.jsonl (with Markdown/HTML records, CRLF line endings and
too-short snippets for the preprocess stage to remove) and data/mini/clean.jsonl
(the same corpus after the default cleaning, produced by the CLI).
"""
import argparse
import json
import random
from pathlib import Path

NAMES = ["count", "total", "items", "user", "name", "value", "result", "data", "index", "path",
         "line", "row", "key", "size", "buffer", "config", "order", "price", "status", "node",
         "message", "token", "record", "limit", "offset", "score", "level", "item", "file", "text"]
TABLES = ["users", "orders", "products", "events", "accounts", "logs", "payments", "sessions"]
WORDS = ["hello", "done", "error", "ok", "missing", "ready", "failed", "retry", "start", "stop"]


def ident(r):
    a = r.choice(NAMES)
    if r.random() < 0.4:
        a += "_" + r.choice(NAMES)
    return a


def camel(r):
    a, b = r.choice(NAMES), r.choice(NAMES)
    return a + b[0].upper() + b[1:]


def num(r):
    return str(r.randint(0, 100))


def word(r):
    return r.choice(WORDS)


def python(r):
    v, w, f = ident(r), ident(r), ident(r)
    lines = r.choice([
        lambda: [f"def {f}({v}, {w}):", f"    return {v} + {w}"],
        lambda: [f"for {v} in range({num(r)}):", f"    print({v})"],
        lambda: [f"{v} = [{w} for {w} in {f} if {w} > {num(r)}]"],
        lambda: [f"import os", f"{v} = os.path.join({w}, '{word(r)}')"],
        lambda: [f"class {camel(r).capitalize()}:", f"    def __init__(self, {v}):", f"        self.{v} = {v}"],
        lambda: [f"if {v} is None:", f"    {v} = {{}}", f"else:", f"    {v}['{w}'] = {num(r)}"],
        lambda: [f"with open({v}) as fh:", f"    {w} = fh.read().split('\\n')"],
        lambda: [f"{v} = {w}.get('{f}', {num(r)})"],
        lambda: [f"try:", f"    {v} = int({w})", f"except ValueError:", f"    {v} = 0"],
        lambda: [f"print(f\"{word(r)} {{{v}}}\")"],
        lambda: [f"{v}, {w} = {w}, {v}"],
        lambda: [f"return sorted({v}, key=lambda x: x.{w})"],
    ])()
    return lines


def javascript(r):
    v, w, f = camel(r), camel(r), camel(r)
    return r.choice([
        lambda: [f"function {f}({v}, {w}) {{", f"  return {v} + {w};", "}"],
        lambda: [f"const {v} = {w}.map(x => x * {num(r)});"],
        lambda: [f"let {v} = document.getElementById('{word(r)}');"],
        lambda: [f"for (let i = 0; i < {v}.length; i++) {{", f"  console.log({v}[i]);", "}"],
        lambda: [f"const {f} = async ({v}) => {{", f"  const res = await fetch({v});", "  return res.json();", "};"],
        lambda: [f"if ({v} === undefined) {{", f"  {v} = {{}};", "}"],
        lambda: [f"module.exports = {{ {f}, {v} }};"],
        lambda: [f"{v}.forEach(function ({w}) {{", f"  {w}.{f} = null;", "});"],
        lambda: [f"const {{ {v}, {w} }} = require('./{word(r)}');"],
        lambda: [f"console.log(`{word(r)} ${{{v}}}`);"],
        lambda: [f"var {v} = {w} || {num(r)};"],
        lambda: [f"return {v}.filter(({w}) => {w}.{f} > {num(r)});"],
    ])()


def java(r):
    v, w, f = camel(r), camel(r), camel(r)
    cls = camel(r).capitalize()
    return r.choice([
        lambda: [f"public int {f}(int {v}, int {w}) {{", f"    return {v} + {w};", "}"],
        lambda: [f"List<String> {v} = new ArrayList<>();"],
        lambda: [f"for (int i = 0; i < {v}.size(); i++) {{", f"    System.out.println({v}.get(i));", "}"],
        lambda: [f"public class {cls} {{", f"    private final String {v};", "}"],
        lambda: [f"if ({v} == null) {{", f"    throw new IllegalArgumentException(\"{word(r)}\");", "}"],
        lambda: [f"Map<String, Integer> {v} = new HashMap<>();", f"{v}.put(\"{word(r)}\", {num(r)});"],
        lambda: [f"@Override", f"public String toString() {{", f"    return {v};", "}"],
        lambda: [f"String {v} = {w}.stream().map(String::valueOf).collect(Collectors.joining());"],
        lambda: [f"private static final int {f.upper()} = {num(r)};"],
        lambda: [f"try {{", f"    {v}.close();", "} catch (IOException e) {", "    e.printStackTrace();", "}"],
        lambda: [f"int {v} = {w}.length;"],
        lambda: [f"return {v}.{f}();"],
    ])()


def bash(r):
    v, w = ident(r).upper(), ident(r)
    return r.choice([
        lambda: [f"for f in *.{r.choice(['txt', 'log', 'csv'])}; do", "  echo \"$f\"", "done"],
        lambda: [f"{v}=$(ls -1 | wc -l)"],
        lambda: [f"if [ -z \"${v}\" ]; then", f"  echo \"{word(r)}\" >&2", "  exit 1", "fi"],
        lambda: [f"grep -r \"{word(r)}\" ./{w} | sort | uniq -c"],
        lambda: [f"export {v}=\"/usr/local/{w}\""],
        lambda: [f"while read -r line; do", f"  echo \"$line\" >> {w}.txt", f"done < {w}.in"],
        lambda: ["#!/bin/bash", "set -euo pipefail", f"cd \"$(dirname \"$0\")\""],
        lambda: [f"{w}() {{", f"  local {v.lower()}=$1", f"  echo \"${{{v.lower()}}}\"", "}"],
        lambda: [f"mkdir -p {w} && cp -r ./{word(r)}/* {w}/"],
        lambda: [f"case \"$1\" in", f"  {word(r)}) echo {num(r)} ;;", "  *) exit 2 ;;", "esac"],
        lambda: [f"echo ${v} | tr '[:lower:]' '[:upper:]'"],
        lambda: [f"sed -i 's/{word(r)}/{word(r)}/g' {w}.conf"],
    ])()


def sql(r):
    t, c, d = r.choice(TABLES), ident(r), ident(r)
    return r.choice([
        lambda: [f"SELECT {c}, {d} FROM {t} WHERE {c} > {num(r)};"],
        lambda: [f"SELECT * FROM {t}", f"WHERE {c} = '{word(r)}'", f"ORDER BY {d} DESC;"],
        lambda: [f"INSERT INTO {t} ({c}, {d}) VALUES ({num(r)}, '{word(r)}');"],
        lambda: [f"UPDATE {t} SET {c} = {num(r)} WHERE {d} IS NULL;"],
        lambda: [f"CREATE TABLE {t} (", f"  {c} INTEGER PRIMARY KEY,", f"  {d} VARCHAR({num(r)}) NOT NULL", ");"],
        lambda: [f"DELETE FROM {t} WHERE {c} < {num(r)};"],
        lambda: [f"SELECT {c}, COUNT(*) FROM {t} GROUP BY {c} HAVING COUNT(*) > {num(r)};"],
        lambda: [f"SELECT a.{c}, b.{d}", f"FROM {t} a", f"JOIN {r.choice(TABLES)} b ON a.id = b.{c}_id;"],
        lambda: [f"ALTER TABLE {t} ADD COLUMN {c} TEXT;"],
        lambda: [f"select {c} from {t} limit {num(r)};"],
        lambda: [f"CREATE INDEX idx_{c} ON {t} ({c});"],
        lambda: [f"SELECT DISTINCT {c} FROM {t};"],
    ])()


GENERATORS = {"Bash": bash, "Java": java, "JavaScript": javascript, "Python": python, "SQL": sql}


def snippet(gen, r):
    parts = []
    for _ in range(r.choice([1, 1, 2, 2, 3])):
        parts.extend(gen(r))
    return "\n".join(parts)


def noise_records(r):
    out = []
    for i in range(20):
        out.append({"text": f"# {word(r).title()}\n\nSome *{word(r)}* notes about `{ident(r)}`.\n", "label": "Markdown"})
        out.append({"text": f"<div class=\"{word(r)}\">\n  <p>{word(r)}</p>\n</div>\n", "label": "HTML"})
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--per-language", type=int, default=400)
    ap.add_argument("--seed", type=int, default=20221)
    ap.add_argument("--output", default=str(Path(__file__).resolve().parent.parent / "data" / "mini" / "raw.jsonl"))
    args = ap.parse_args()
    r = random.Random(args.seed)

    records = []
    for label, gen in GENERATORS.items():
        for _ in range(args.per_language):
            text = snippet(gen, r)
            if r.random() < 0.1:
                text = text.replace("\n", "\r\n") + "   "
            records.append({"text": text, "label": label})
        records.append({"text": "x", "label": label})
    records.extend(noise_records(r))
    r.shuffle(records)

    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
