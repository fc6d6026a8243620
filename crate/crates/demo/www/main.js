import init, { berger_psd, fir_response, detect_beats } from "./pkg/earpipe_demo.js";

const $ = (id) => document.getElementById(id);

// Draws series [{ys, xs?, color}] on a canvas with a shared y range.
function plot(canvas, series, { yMin, yMax, marks = [] } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.ys).filter(Number.isFinite);
  const lo = yMin ?? Math.min(...all);
  const hi = yMax ?? Math.max(...all);
  const y = (v) => h - 8 - ((v - lo) / (hi - lo || 1)) * (h - 16);
  for (const s of series) {
    const n = s.ys.length;
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.ys.forEach((v, i) => {
      const x = (i / (n - 1)) * w;
      i ? ctx.lineTo(x, y(Math.max(lo, v))) : ctx.moveTo(x, y(Math.max(lo, v)));
    });
    ctx.stroke();
  }
  for (const m of marks) {
    ctx.fillStyle = m.color;
    for (const x of m.xs) ctx.fillRect(x * w - 1, m.top ? 0 : h - 10, 3, 10);
  }
}

function guard(out, f) {
  try {
    out.classList.remove("err");
    f();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

function drawPsd() {
  guard($("psd-out"), () => {
    const r = berger_psd(Number($("ratio").value), Number($("berger-seed").value));
    plot($("psd"), [
      { ys: Array.from(r.open_db), color: "#1f77b4" },
      { ys: Array.from(r.closed_db), color: "#d62728" },
    ]);
    $("psd-out").textContent =
      `open (blue) vs closed (red), 0–${r.freqs.at(-1)} Hz; alpha gain ${r.alpha_gain_db.toFixed(2)} dB`;
  });
}

function drawFir() {
  guard($("fir-out"), () => {
    const rate = Number($("rate").value);
    const db = fir_response($("kind").value, Number($("cutoff").value), Number($("order").value), rate, 400);
    plot($("fir"), [{ ys: Array.from(db), color: "#2ca02c" }], { yMin: -100, yMax: 5 });
    $("fir-out").textContent = `0–${rate / 2} Hz, −100 to +5 dB`;
  });
}

function drawEcg() {
  guard($("ecg-out"), () => {
    const d = detect_beats(Number($("bpm").value), Number($("snr").value), Number($("ecg-seed").value));
    const span = d.signal.length / d.rate;
    plot($("ecg"), [{ ys: Array.from(d.signal), color: "#444" }], {
      marks: [
        { xs: Array.from(d.truth, (t) => t / span), color: "#1f77b4", top: true },
        { xs: Array.from(d.detected, (t) => t / span), color: "#d62728" },
      ],
    });
    $("ecg-out").textContent =
      `planted (blue, top) ${d.truth.length}, detected (red, bottom) ${d.detected.length}; ` +
      `sensitivity ${d.sensitivity.toFixed(3)}, precision ${d.precision.toFixed(3)}`;
  });
}

await init();
for (const id of ["ratio", "berger-seed"]) $(id).addEventListener("input", drawPsd);
for (const id of ["kind", "cutoff", "order", "rate"]) $(id).addEventListener("input", drawFir);
for (const id of ["bpm", "snr", "ecg-seed"]) $(id).addEventListener("input", drawEcg);
drawPsd();
drawFir();
drawEcg();
