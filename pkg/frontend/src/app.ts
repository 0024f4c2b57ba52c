/**
 * DOM wiring: square letterboxed canvas, tool buttons, text input, the
 * debounced live result grid, and the optional memorization workflow.
 */

import { CanvasState } from "./canvas_state.js";
import { MemorizationSession } from "./memorization.js";
import { LiveQueryClient, ResultItem, defaultFetcher } from "./query.js";
import { Point, serializeSketch, sketchToSvg } from "./strokes.js";

const API_BASE = (window as { SKETCHQUERY_API?: string }).SKETCHQUERY_API ?? "";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function mountApp(): void {
  const canvas = el<HTMLCanvasElement>("sketch-canvas");
  const ctx = canvas.getContext("2d")!;
  const textInput = el<HTMLInputElement>("text-query");
  const resultsGrid = el<HTMLDivElement>("results");
  const statusLine = el<HTMLDivElement>("status");
  const state = new CanvasState();
  let livePoints: Point[] = [];
  let drawing = false;
  let session: MemorizationSession | null = null;

  const client = new LiveQueryClient({
    fetcher: defaultFetcher(`${API_BASE}/api/query`),
    onResults: renderResults,
    onError: (err) => {
      statusLine.textContent = `query failed: ${String(err)} (showing last results)`;
    },
  });

  function canvasEnabled(): boolean {
    return session === null || session.canvasEnabled();
  }

  function toNormalized(ev: PointerEvent): Point {
    const rect = canvas.getBoundingClientRect();
    return [
      (ev.clientX - rect.left) / rect.width,
      (ev.clientY - rect.top) / rect.height,
    ];
  }

  function redraw(): void {
    ctx.fillStyle = "white";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.strokeStyle = "black";
    ctx.lineWidth = 2;
    const paths = drawing && livePoints.length > 1
      ? [...state.strokes, { points: livePoints }]
      : state.strokes;
    for (const stroke of paths) {
      ctx.beginPath();
      stroke.points.forEach(([x, y], i) => {
        const px = x * canvas.width;
        const py = y * canvas.height;
        if (i === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      });
      ctx.stroke();
    }
  }

  function currentSketchJson() {
    return state.strokes.length > 0 ? serializeSketch(state.strokes) : null;
  }

  function issueQuery(): void {
    client.notifyInput(currentSketchJson(), textInput.value || null);
  }

  function renderResults(results: ResultItem[]): void {
    statusLine.textContent = `${results.length} results`;
    resultsGrid.replaceChildren(
      ...results.map((r) => {
        const card = document.createElement("figure");
        const img = document.createElement("img");
        img.src = `${API_BASE}${r.image_url}`;
        img.alt = r.id;
        const cap = document.createElement("figcaption");
        cap.textContent = `${r.id} (${r.score.toFixed(3)})`;
        card.append(img, cap);
        return card;
      }),
    );
  }

  canvas.addEventListener("pointerdown", (ev) => {
    if (!canvasEnabled()) return;
    if (state.tool === "erase") {
      const [x, y] = toNormalized(ev);
      if (state.eraseAt(x, y)) {
        redraw();
        issueQuery();
      }
      return;
    }
    drawing = true;
    livePoints = [toNormalized(ev)];
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!drawing) return;
    livePoints.push(toNormalized(ev));
    redraw();
  });
  canvas.addEventListener("pointerup", () => {
    if (!drawing) return;
    drawing = false;
    if (state.commitStroke(livePoints)) issueQuery();
    livePoints = [];
    redraw();
  });

  textInput.addEventListener("input", issueQuery);

  el<HTMLButtonElement>("tool-draw").onclick = () => (state.tool = "draw");
  el<HTMLButtonElement>("tool-erase").onclick = () => (state.tool = "erase");
  el<HTMLButtonElement>("undo").onclick = () => {
    if (state.undo()) {
      redraw();
      issueQuery();
    }
  };
  el<HTMLButtonElement>("redo").onclick = () => {
    if (state.redo()) {
      redraw();
      issueQuery();
    }
  };
  el<HTMLButtonElement>("clear").onclick = () => {
    state.clear();
    redraw();
    issueQuery();
  };
  el<HTMLButtonElement>("export-json").onclick = () => {
    download("sketch.json",
             JSON.stringify(serializeSketch(state.strokes)),
             "application/json");
  };
  el<HTMLButtonElement>("export-svg").onclick = () => {
    download("sketch.svg", sketchToSvg(state.strokes), "image/svg+xml");
  };

  const targetImg = el<HTMLImageElement>("memorize-target");
  el<HTMLButtonElement>("memorize-start").onclick = () => {
    const url = prompt("target image URL for memorization mode");
    if (!url) return;
    targetImg.src = url;
    session = new MemorizationSession(url, {
      onPhaseChange: (phase) => {
        targetImg.style.display = phase === "showing" ? "block" : "none";
        statusLine.textContent = `memorization: ${phase}`;
      },
    });
    session.start();
  };
  el<HTMLButtonElement>("memorize-export").onclick = () => {
    if (!session) return;
    const tag = prompt("one or two words describing the image") ?? "";
    const record = session.exportRecord(state.strokes, tag);
    download("memorized_sketch.json", JSON.stringify(record),
             "application/json");
    session = null;
  };

  redraw();
}

function download(name: string, content: string, mime: string): void {
  const blob = new Blob([content], { type: mime });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = name;
  a.click();
  URL.revokeObjectURL(a.href);
}

if (typeof document !== "undefined" && document.getElementById("sketch-canvas")) {
  mountApp();
}
