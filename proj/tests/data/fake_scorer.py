"""Scorer worker used by the tests.

usage: fake_scorer.py MODE [VALUE]
  const VALUE   every pair scores VALUE
  skip_last     omit the response for the final request
  crash         read input, then exit 3
  sleep         never answer
  error_record  emit an error record before each response
"""
import json
import sys
import time

mode = sys.argv[1]
value = float(sys.argv[2]) if len(sys.argv) > 2 else 0.5
requests = [json.loads(line) for line in sys.stdin if line.strip()]

if mode == "crash":
    sys.stderr.write("model failed to load\n")
    sys.exit(3)
if mode == "sleep":
    time.sleep(30)
if mode == "skip_last":
    requests = requests[:-1]
for r in requests:
    if mode == "error_record":
        print(json.dumps({"error": "bad input"}))
    print(json.dumps({"query_id": r["query_id"], "article_id": r["article_id"], "score": value}))
sys.stdout.flush()
