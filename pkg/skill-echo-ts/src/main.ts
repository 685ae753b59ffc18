// Minimal out-of-process skill for the clai runtime.
//
// Protocol (newline-delimited JSON over stdio, one object per line):
//   <- {"type":"hello","protocol":1}
//   -> {"type":"ready","name":"echo-ai"}
//   <- {"type":"event","state":{...}}
//   -> {"type":"response","confidence":<n>,"actions":[...]}
// A malformed line is answered with {"type":"error","reason":...} and the
// skill keeps reading: exactly one output line per input line, never more.

const SKILL_NAME = "echo-ai";
const PREFIX = "echo-ai ";

interface WireAction {
  suggested_command: string | null;
  description: string | null;
  explanation: string | null;
  confidence: number;
  execute: boolean;
}

interface TerminalState {
  user_input?: string;
  [key: string]: unknown;
}

function writeLine(message: unknown): void {
  process.stdout.write(`${JSON.stringify(message)}\n`);
}

function respond(state: TerminalState): void {
  const userInput = typeof state.user_input === "string" ? state.user_input : "";
  if (userInput.startsWith(PREFIX)) {
    const rest = userInput.slice(PREFIX.length);
    const action: WireAction = {
      suggested_command: `echo ${rest}`,
      description: `echo ${rest}`,
      explanation: "echoes the text back through the shell",
      confidence: 1.0,
      execute: false,
    };
    writeLine({ type: "response", confidence: 1.0, actions: [action] });
    return;
  }
  writeLine({ type: "response", confidence: 0.0, actions: [] });
}

function handleLine(line: string): void {
  let message: { type?: string; state?: TerminalState };
  try {
    message = JSON.parse(line);
  } catch {
    writeLine({ type: "error", reason: "malformed JSON" });
    return;
  }
  switch (message.type) {
    case "hello":
      writeLine({ type: "ready", name: SKILL_NAME });
      break;
    case "event":
      respond(message.state ?? {});
      break;
    default:
      writeLine({ type: "error", reason: `unknown message type: ${String(message.type)}` });
  }
}

let buffered = "";
process.stdin.setEncoding("utf8");
process.stdin.on("data", (chunk: string) => {
  buffered += chunk;
  let newline = buffered.indexOf("\n");
  while (newline >= 0) {
    const line = buffered.slice(0, newline).trim();
    buffered = buffered.slice(newline + 1);
    if (line.length > 0) {
      handleLine(line);
    }
    newline = buffered.indexOf("\n");
  }
});
process.stdin.on("end", () => process.exit(0));
