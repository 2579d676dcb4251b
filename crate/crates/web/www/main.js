import init, { shoot, clean_demo, Demo } from "./pkg/kinolearn_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// Maps data coordinates onto a canvas with a small margin.
function frame(canvas, xr, yr) {
  const ctx = canvas.getContext("2d");
  const m = 30;
  const sx = (canvas.width - 2 * m) / (xr[1] - xr[0]);
  const sy = (canvas.height - 2 * m) / (yr[1] - yr[0]);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#ddd";
  ctx.strokeRect(m, m, canvas.width - 2 * m, canvas.height - 2 * m);
  ctx.fillStyle = "#666";
  ctx.fillText(`[${xr[0].toFixed(2)}, ${xr[1].toFixed(2)}] x [${yr[0].toFixed(2)}, ${yr[1].toFixed(2)}]`, m, m - 8);
  const px = (x) => m + (x - xr[0]) * sx;
  const py = (y) => canvas.height - m - (y - yr[0]) * sy;
  return { ctx, px, py, sx };
}

function polyline(f, pts, color, width = 1) {
  if (pts.length < 2) return;
  f.ctx.strokeStyle = color;
  f.ctx.lineWidth = width;
  f.ctx.beginPath();
  f.ctx.moveTo(f.px(pts[0][0]), f.py(pts[0][1]));
  for (const p of pts.slice(1)) f.ctx.lineTo(f.px(p[0]), f.py(p[1]));
  f.ctx.stroke();
  f.ctx.lineWidth = 1;
}

function dots(f, pts, color, r = 2) {
  f.ctx.fillStyle = color;
  for (const p of pts) {
    f.ctx.beginPath();
    f.ctx.arc(f.px(p[0]), f.py(p[1]), r, 0, 2 * Math.PI);
    f.ctx.fill();
  }
}

function extent(pts, pad) {
  let lo = Infinity, hi = -Infinity;
  for (const v of pts) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const d = Math.max(hi - lo, 1e-3) * pad;
  return [lo - d, hi + d];
}

function runShoot() {
  try {
    const r = JSON.parse(shoot(num("sh-theta"), num("sh-omega"), num("sh-phi"), num("sh-tf")));
    const pts = r.points.map((p) => [p[1], p[2]]);
    const f = frame($("sh-canvas"), extent(pts.map((p) => p[0]), 0.1), extent(pts.map((p) => p[1]), 0.1));
    polyline(f, pts, "#1f6feb", 2);
    dots(f, [pts[0]], "#2da44e", 4);
    dots(f, [pts[pts.length - 1]], "#cf222e", 4);
    $("sh-out").textContent =
      `costate (${r.lam_theta.toFixed(4)}, ${r.lam_omega.toFixed(4)})  H(0) ${r.h0.toExponential(2)}  ` +
      `drift ${r.drift.toExponential(2)}  cost ${r.cost.toFixed(4)}`;
  } catch (e) {
    $("sh-out").textContent = `rejected: ${e.message ?? e}`;
  }
}

function runClean() {
  const r = JSON.parse(clean_demo(num("cl-seed"), num("cl-kmax"), $("cl-exh").checked));
  const costs = r.raw.map((p) => p[1]);
  const f = frame($("cl-canvas"), [0, 10], extent(costs, 0.05));
  f.ctx.fillStyle = "#fff4d6";
  f.ctx.fillRect(f.px(r.biased_region[0]), 30, (r.biased_region[1] - r.biased_region[0]) * f.sx, $("cl-canvas").height - 60);
  dots(f, r.raw, "#bbb", 2);
  dots(f, r.kept, "#1f6feb", 2.5);
  polyline(f, r.envelope, "#2da44e", 1.5);
  $("cl-out").textContent = `raw ${r.raw.length}  kept ${r.kept.length}  band ${r.band}`;
}

let demo = null;

function buildModel() {
  $("pl-out").textContent = "building...";
  setTimeout(() => {
    const t0 = performance.now();
    if (demo) demo.free();
    demo = new Demo(num("pl-sims"), num("pl-dseed"));
    const secs = ((performance.now() - t0) / 1000).toFixed(2);
    $("pl-out").textContent = `model: ${demo.entries()} entries, validity threshold ${demo.validity_threshold().toFixed(3)}, built in ${secs} s`;
    $("pl-run").disabled = false;
  }, 10);
}

function runPlan() {
  const t0 = performance.now();
  const r = JSON.parse(demo.plan(num("pl-theta"), num("pl-omega"), num("pl-seed"), num("pl-max")));
  const secs = ((performance.now() - t0) / 1000).toFixed(3);
  const f = frame($("pl-canvas"), [-1.5 * Math.PI, 0.5 * Math.PI], [-Math.PI, Math.PI]);
  for (const e of r.edges) polyline(f, e, "#9aa4b1");
  f.ctx.strokeStyle = "#2da44e";
  f.ctx.beginPath();
  f.ctx.arc(f.px(r.goal[0]), f.py(r.goal[1]), r.goal_radius * f.sx, 0, 2 * Math.PI);
  f.ctx.stroke();
  polyline(f, r.path, "#cf222e", 2.5);
  dots(f, [[num("pl-theta"), num("pl-omega")]], "#1f6feb", 4);
  $("pl-out").textContent =
    `${r.success ? "reached goal" : "no path"}  nodes ${r.nodes}  iterations ${r.iterations}` +
    (r.success ? `  path cost ${r.path_cost.toFixed(3)}` : "") + `  ${secs} s`;
}

await init();
$("sh-run").onclick = runShoot;
$("sh-phi").oninput = runShoot;
$("cl-run").onclick = runClean;
$("pl-build").onclick = buildModel;
$("pl-run").onclick = runPlan;
runShoot();
runClean();
