import { formatSendResult, sendCommand, validateCommand } from "./commands.js";
import { renderGauge, renderGripper, renderSparkline } from "./render.js";
import type { DrawSurface, GripperView } from "./render.js";
import { initialSession, reduceSession } from "./session.js";
import type { PendingCommand, UiSession } from "./session.js";
import { StreamClient } from "./stream.js";
import type { CommandType, TwinConfig, Vec4 } from "./types.js";

const FALLBACK_LENGTHS_MM: Vec4 = [14.0, 14.0, 12.32, 15.39];
const THETA_RANGE = { min: -100, max: 130 };
const HISTORY_LIMIT = 240;

function must<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

function surface(canvas: HTMLCanvasElement): DrawSurface {
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    throw new Error("canvas 2d context unavailable");
  }
  return ctx;
}

function main(): void {
  // Served by the twin itself by default; ?api=http://host:port for dev.
  const baseUrl = new URLSearchParams(location.search).get("api") ?? "";

  const gripperCanvas = must<HTMLCanvasElement>("gripper-canvas");
  const gaugeCanvas = must<HTMLCanvasElement>("gauge-canvas");
  const sparkCanvas = must<HTMLCanvasElement>("spark-canvas");
  const poseReadout = must<HTMLPreElement>("pose-readout");
  const statusBadge = must<HTMLSpanElement>("status-badge");
  const linkBadge = must<HTMLSpanElement>("link-badge");
  const faultBadge = must<HTMLSpanElement>("fault-badge");
  const messageLine = must<HTMLDivElement>("message-line");
  const ackLog = must<HTMLDivElement>("ack-log");
  const retryButton = must<HTMLButtonElement>("retry-button");
  const posTrigger = must<HTMLInputElement>("pos-trigger");
  const negTrigger = must<HTMLInputElement>("neg-trigger");
  const posInput = must<HTMLInputElement>("pos-target-input");
  const negInput = must<HTMLInputElement>("neg-target-input");

  const gripperCtx = surface(gripperCanvas);
  const gaugeCtx = surface(gaugeCanvas);
  const sparkCtx = surface(sparkCanvas);

  let session: UiSession = initialSession;
  let lengthsMm: Vec4 = FALLBACK_LENGTHS_MM;
  let phisDeg: Vec4 = [0, 0, 0, 0];
  const thetaHistory: number[][] = [[], [], [], []];
  const ackLines: string[] = [];

  const view: GripperView = {
    lengthsMm,
    viewport: { originPx: { x: 200, y: 420 }, pxPerMm: 4 },
    widthPx: gripperCanvas.width,
    heightPx: gripperCanvas.height,
  };

  function renderAll(): void {
    const state = session.latest;
    renderGripper(gripperCtx, state, view, { greyed: session.status !== "live" });
    renderGauge(
      gaugeCtx,
      { x: 10, y: 10, w: gaugeCanvas.width - 110, h: 22 },
      state?.pressure_kpa ?? 0,
    );
    const laneH = sparkCanvas.height / 4;
    for (let i = 0; i < 4; i++) {
      renderSparkline(
        sparkCtx,
        { x: 0, y: i * laneH + 2, w: sparkCanvas.width, h: laneH - 4 },
        thetaHistory[i] ?? [],
        THETA_RANGE,
        `theta${i + 1} deg`,
      );
    }
    if (state !== null) {
      const [x, y, z] = state.tip_position;
      const [qw, qx, qy, qz] = state.tip_quaternion;
      const rows = state.thetas_deg
        .map((t, i) =>
          `  section ${i + 1}: theta ${t.toFixed(2)} deg  ` +
          `kappa ${(state.kappas[i] ?? 0).toFixed(5)} 1/mm  ` +
          `phi ${(phisDeg[i] ?? 0).toFixed(1)} deg`)
        .join("\n");
      poseReadout.textContent =
        `tip  ${x.toFixed(3)}, ${y.toFixed(3)}, ${z.toFixed(3)} mm\n` +
        `quat ${qw.toFixed(5)}, ${qx.toFixed(5)}, ${qy.toFixed(5)}, ${qz.toFixed(5)}\n` +
        rows +
        (state.extrapolated ? "\n  (pressure outside fit range)" : "");
    } else {
      poseReadout.textContent = "no state yet";
    }
    statusBadge.textContent = session.status;
    statusBadge.className = `badge ${session.status === "live" ? "ok" : "warn"}`;
    const linkOk = state?.link_ok ?? false;
    linkBadge.textContent = linkOk ? "link ok" : "link down";
    linkBadge.className = `badge ${linkOk ? "ok" : "bad"}`;
    const faults = state?.controller_faults ?? 0;
    faultBadge.textContent =
      faults !== 0 ? `fault 0x${faults.toString(16).padStart(4, "0")}` : "no faults";
    faultBadge.className = `badge ${faults !== 0 ? "bad" : "ok"}`;
    messageLine.textContent = session.lastMessage ?? "";
    retryButton.hidden = session.failed === null;
    // Toggles reflect only ack-confirmed trigger state.
    posTrigger.checked = session.triggers.pos;
    negTrigger.checked = session.triggers.neg;
    posTrigger.disabled = negTrigger.disabled = session.pending !== null;
    ackLog.textContent = ackLines.slice(-8).join("\n");
  }

  function dispatch(ev: Parameters<typeof reduceSession>[1]): void {
    session = reduceSession(session, ev);
    if (ev.kind === "state") {
      ev.state.thetas_deg.forEach((t, i) => {
        const lane = thetaHistory[i];
        if (lane !== undefined) {
          lane.push(t);
          if (lane.length > HISTORY_LIMIT) {
            lane.shift();
          }
        }
      });
    }
    if (ev.kind === "result") {
      ackLines.push(ev.message);
    }
    renderAll();
  }

  function issueCommand(type: CommandType, value: number): void {
    const blocked = validateCommand(type, value);
    if (blocked !== null) {
      dispatch({ kind: "blocked", message: blocked });
      return;
    }
    const command: PendingCommand = { type, value };
    dispatch({ kind: "send", command });
    void sendCommand(baseUrl, type, value).then((result) => {
      dispatch({ kind: "result", command, result, message: formatSendResult(result) });
    });
  }

  must<HTMLButtonElement>("pos-target-send").addEventListener("click", () => {
    issueCommand("set_pos_target", Number(posInput.value));
  });
  must<HTMLButtonElement>("neg-target-send").addEventListener("click", () => {
    issueCommand("set_neg_target", Number(negInput.value));
  });
  posTrigger.addEventListener("change", () => {
    const want = posTrigger.checked ? 1 : 0;
    posTrigger.checked = session.triggers.pos;
    issueCommand("set_pos_trigger", want);
  });
  negTrigger.addEventListener("change", () => {
    const want = negTrigger.checked ? 1 : 0;
    negTrigger.checked = session.triggers.neg;
    issueCommand("set_neg_trigger", want);
  });
  retryButton.addEventListener("click", () => {
    const failed = session.failed;
    if (failed !== null) {
      issueCommand(failed.type, failed.value);
    }
  });

  void fetch(`${baseUrl}/config`)
    .then((res) => res.json())
    .then((cfg: TwinConfig) => {
      lengthsMm = cfg.lengths_mm;
      phisDeg = cfg.phis_deg;
      view.lengthsMm = lengthsMm;
      must<HTMLSpanElement>("config-line").textContent =
        `controller ${cfg.controller.host}:${cfg.controller.port}  ` +
        `poll ${cfg.poll_hz} Hz  angles ${cfg.angles}`;
      renderAll();
    })
    .catch(() => {
      must<HTMLSpanElement>("config-line").textContent = "config unavailable";
    });

  const stream = new StreamClient(
    `${baseUrl}/stream`,
    (state) => dispatch({ kind: "state", state }),
    (status) => dispatch({ kind: "status", status }),
  );
  stream.connect();
  renderAll();
}

main();
