#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Line-protocol agent for adapter tests: echoes, and misbehaves on cue."""
import json
import sys
import time

for line in sys.stdin:
    msg = json.loads(line)
    text = msg.get("text", "")
    if text == "crash":
        sys.exit(3)
    if text == "hang":
        time.sleep(30)
    if text == "empty":
        reply = ""
    else:
        reply = "echo: " + text
    print("log line that is not protocol", flush=True)
    print(json.dumps({"type": "agent_msg", "session": msg.get("session"), "text": reply}), flush=True)
