"""Regenerates the labeled filter set and the model replay script.

Items 0-49 are mirrorable (label true), 50-99 are not. The replayed model
accepts positives 0-42 and negatives 50-57 and rejects the rest.
"""

import json

POSITIVE = [
    ("Reject empty usernames at signup", "webapp/signup.py", "if not name:", "if not name or not name.strip():"),
    ("Return 404 for unknown profiles", "webapp/profile.py", "return {}, 200", "return {}, 404"),
    ("Validate email format before saving", "webapp/users.py", "save(user)", "save(validated(user))"),
    ("Fix off-by-one in pagination", "webapp/pages.py", "items[start:end - 1]", "items[start:end]"),
    ("Add max length check on bio", "webapp/profile.py", "user.bio = bio", "user.bio = bio[:MAX_BIO]"),
]
NEGATIVE = [
    ("Reword validation error message", "webapp/errors.py", 'MSG = "bad data"', 'MSG = "Bad data."'),
    ("Bump client library pin", "webapp/deps.py", 'PIN = "2.30"', 'PIN = "2.31"'),
    ("Fix typo in log line", "webapp/log.py", 'log("recieved")', 'log("received")'),
    ("Switch CI image to a newer base", "ci/build.py", 'IMAGE = "py3.10"', 'IMAGE = "py3.11"'),
    ("Adjust vendored SDK retry count", "vendor_sdk/retry.py", "RETRIES = 3", "RETRIES = 5"),
]


def item(i):
    label = i < 50
    title, path, old, new = (POSITIVE if label else NEGATIVE)[i % 5]
    diff = f"--- a/{path}\n+++ b/{path}\n@@ -{i + 1},1 +{i + 1},1 @@\n-    {old}\n+    {new}\n"
    return {
        "candidate": {
            "source_repo": f"org{i % 7}/service{i % 11}",
            "pr_number": 100 + i,
            "title": title,
            "body": f"{title}. [item-{i:03}]\n\nFixes #{1000 + i}",
            "linked_issue_bodies": [f"Issue {1000 + i}: {title.lower()}."],
            "diff": diff,
            "merged": True,
            "closed": True,
            "edits_code_files": True,
            "rule_verdict": {"verdict": "Pass"},
        },
        "label": label,
    }


def accepts(i):
    return i <= 42 or 50 <= i <= 57


def main():
    with open("labeled.jsonl", "w") as f:
        for i in range(100):
            f.write(json.dumps(item(i)) + "\n")
    rules = []
    for i in range(100):
        verdict = "True" if accepts(i) else "False"
        reason = "mirrorable change" if accepts(i) else "not worth mirroring"
        rules.append(
            {
                "match": ["<current_repo>", f"[item-{i:03}]"],
                "responses": [f'```python\n[{verdict}, "{reason}"]\n```'],
            }
        )
    with open("lm_script.json", "w") as f:
        json.dump({"rules": rules}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
