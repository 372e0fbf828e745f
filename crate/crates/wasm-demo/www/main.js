import init, { simulate_tanks, check_gain, activation_time_for } from "./pkg/mfobserver_demo.js";

const HEADER = 3;
const ROW = 7;
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function fail(el, e) {
  el.innerHTML = "";
  const p = document.createElement("span");
  p.className = "err";
  p.textContent = e instanceof Error ? e.message : String(e);
  el.appendChild(p);
}

// series: [{xs, ys, color, dashed}], vline: x or null
function plot(canvas, series, vline) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 60;
  ctx.clearRect(0, 0, w, h);
  let x0 = Infinity, x1 = -Infinity, y0 = Infinity, y1 = -Infinity;
  for (const s of series) {
    for (let i = 0; i < s.xs.length; i++) {
      if (!Number.isFinite(s.ys[i])) continue;
      x0 = Math.min(x0, s.xs[i]); x1 = Math.max(x1, s.xs[i]);
      y0 = Math.min(y0, s.ys[i]); y1 = Math.max(y1, s.ys[i]);
    }
  }
  if (!(x1 > x0)) return;
  if (!(y1 > y0)) { y0 -= 1; y1 += 1; }
  const sx = (x) => pad + (x - x0) / (x1 - x0) * (w - 2 * pad);
  const sy = (y) => h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad);

  ctx.strokeStyle = "#999"; ctx.lineWidth = 1; ctx.setLineDash([]);
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444"; ctx.font = "22px sans-serif";
  for (let k = 0; k <= 4; k++) {
    const y = y0 + (y1 - y0) * k / 4, x = x0 + (x1 - x0) * k / 4;
    ctx.fillText(y.toPrecision(3), 4, sy(y) + 6);
    ctx.fillText(x.toPrecision(3), sx(x) - 18, h - pad + 28);
  }
  if (vline !== null && vline >= x0 && vline <= x1) {
    ctx.strokeStyle = "#888"; ctx.beginPath();
    ctx.moveTo(sx(vline), pad); ctx.lineTo(sx(vline), h - pad); ctx.stroke();
  }
  for (const s of series) {
    ctx.strokeStyle = s.color; ctx.lineWidth = 3;
    ctx.setLineDash(s.dashed ? [12, 8] : []);
    ctx.beginPath();
    let pen = false;
    for (let i = 0; i < s.xs.length; i++) {
      if (!Number.isFinite(s.ys[i])) { pen = false; continue; }
      const X = sx(s.xs[i]), Y = sy(s.ys[i]);
      if (pen) ctx.lineTo(X, Y); else ctx.moveTo(X, Y);
      pen = true;
    }
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

function runSim() {
  const info = $("sim-info");
  let out;
  try {
    out = simulate_tanks(num("k1"), num("k2"), num("eps"), num("z1"), num("z2"), num("xh2"), num("vp"), num("tend"));
  } catch (e) {
    fail(info, e);
    return;
  }
  const ta = out[0], rows = out[1], lastT = out[2];
  const col = (c, after) => {
    const v = new Float64Array(rows);
    for (let r = 0; r < rows; r++) {
      const t = out[HEADER + r * ROW];
      v[r] = after && t < ta ? NaN : out[HEADER + r * ROW + c];
    }
    return v;
  };
  const t = col(0, false);
  plot($("levels"), [
    { xs: t, ys: col(1, false), color: "#1f77b4" },
    { xs: t, ys: col(2, false), color: "#ff7f0e" },
    { xs: t, ys: col(3, true), color: "#1f77b4", dashed: true },
    { xs: t, ys: col(4, true), color: "#ff7f0e", dashed: true },
  ], ta);
  const err = col(5, true).map((e) => (e > 0 ? Math.log10(e) : NaN));
  plot($("error"), [{ xs: t, ys: err, color: "#2ca02c" }], ta);

  const last = HEADER + (rows - 1) * ROW;
  const stopped = lastT < num("tend") - 1e-9;
  info.textContent = `t_a = ${ta.toFixed(6)} s, final |z - ẑ| = ${out[last + 5].toExponential(3)}` +
    (stopped ? `; run stopped at t = ${lastT.toFixed(3)} s (tank 1 drained or state left the model domain)` : "");
}

function runCheck() {
  const table = $("gain-out");
  let r;
  try {
    r = check_gain(num("gk1"), num("gk2"), num("gq"), num("gmu"), num("ggf"));
  } catch (e) {
    fail(table, e);
    return;
  }
  const ev = (re, im) => (im === 0 ? re.toFixed(6) : `${re.toFixed(6)} ${im < 0 ? "-" : "+"} ${Math.abs(im).toFixed(6)}i`);
  const rows = [
    ["eig(A - KC)", `${ev(r[0], r[1])}, ${ev(r[2], r[3])}`],
    ["λmin(P)", r[4].toExponential(6)],
    ["λmax(P)", r[5].toExponential(6)],
    ["ϖ", `${r[6].toExponential(6)} ${r[6] > 0 ? "(bound available)" : "(no bound)"}`],
  ];
  table.innerHTML = "";
  for (const [k, v] of rows) {
    const tr = table.insertRow();
    tr.insertCell().textContent = k;
    tr.insertCell().textContent = v;
  }
}

function runAct() {
  const el = $("act-out");
  try {
    el.textContent = `t_a = ${activation_time_for(num("an"), num("am"), num("aeps"))} s`;
  } catch (e) {
    fail(el, e);
  }
}

await init();
$("run").addEventListener("click", runSim);
$("check").addEventListener("click", runCheck);
$("act-run").addEventListener("click", runAct);
runSim();
runCheck();
runAct();
