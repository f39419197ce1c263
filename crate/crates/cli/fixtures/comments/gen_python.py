"""Builds python.json: each snippet with the lines left after removing
comments, as reported by the standard library tokenizer."""

import io
import json
import tokenize

SNIPPETS = [
    "x = 1  # explain\ny = 2\n",
    "# header comment\ndef f():\n    return 0  # zero\n",
    "s = \"# not a comment\"\nt = '#' + \"#\"  # real\n",
    "doc = \"\"\"\nline with # hash\n\"\"\"  # after\nz = 3\n",
    "u = \"esc \\\" # still string\"  # tail\n",
    "b = b'#bytes'  # c\nr = r'\\d+#'  # raw\n",
    "def g(a,  # first arg\n      b):  # second\n    return a + b\n",
    "items = [\n    1,  # one\n    2,\n    # standalone\n    3,\n]\n",
    "msg = 'it''s'  # adjacent literals\n",
    "q = '''single # triple'''\n# done\n",
    "v = {'k': '#'}  # dict\nw = \"a\" \"#b\"  # concat\n",
    "if x:  # cond\n    pass  # nothing\nelse:\n    pass\n",
]


def expected(src):
    comments = {}
    for tok in tokenize.generate_tokens(io.StringIO(src).readline):
        if tok.type == tokenize.COMMENT:
            comments[tok.start[0]] = tok.start[1]
    out = []
    for no, line in enumerate(src.splitlines(), start=1):
        if no not in comments:
            out.append(line)
            continue
        code = line[: comments[no]].rstrip()
        if code.strip():
            out.append(code)
    return out


def main():
    cases = [{"input": s, "expected": expected(s)} for s in SNIPPETS]
    with open("python.json", "w") as f:
        json.dump(cases, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
