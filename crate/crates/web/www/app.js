import init, { problems, problem, solveSystem, analyze, probe } from "./pkg/curvetrace_web.js";

const $ = (id) => document.getElementById(id);
const canvas = $("plot");
const ctx = canvas.getContext("2d");
const PAD = 30;
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

let last = null; // { file, result }

function current() {
  return JSON.parse($("source").value);
}

function setStatus(text, error = false) {
  $("status").textContent = text;
  $("status").className = error ? "err" : "";
}

function view(file) {
  const [x0, y0] = [file.lower[0], file.lower[1]];
  const [x1, y1] = [file.upper[0], file.upper[1]];
  const w = canvas.width - 2 * PAD;
  const h = canvas.height - 2 * PAD;
  return {
    toPx: (x, y) => [PAD + ((x - x0) / (x1 - x0)) * w, PAD + (1 - (y - y0) / (y1 - y0)) * h],
    fromPx: (px, py) => [x0 + ((px - PAD) / w) * (x1 - x0), y0 + (1 - (py - PAD) / h) * (y1 - y0)],
  };
}

function drawFrame(file) {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(PAD, PAD, canvas.width - 2 * PAD, canvas.height - 2 * PAD);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(`${file.variables[0]} in [${file.lower[0]}, ${file.upper[0]}]`, PAD, canvas.height - 8);
  ctx.save();
  ctx.translate(12, canvas.height - PAD);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(`${file.variables[1]} in [${file.lower[1]}, ${file.upper[1]}]`, 0, 0);
  ctx.restore();
}

function draw(file, result) {
  drawFrame(file);
  const v = view(file);
  ctx.lineWidth = 1.2;
  for (const sweep of result.sweeps) {
    ctx.strokeStyle = COLORS[sweep.branch % COLORS.length];
    ctx.beginPath();
    sweep.points.forEach((p, k) => {
      const [px, py] = v.toPx(p[0], p[1]);
      if (k === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
  ctx.fillStyle = "#d62728";
  for (const s of result.solutions) {
    const [px, py] = v.toPx(s.x[0], s.x[1]);
    ctx.beginPath();
    ctx.arc(px, py, 3.5, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function listSolutions(result) {
  const rows = result.solutions
    .map((s, k) => `<tr><td>${k + 1}</td>${s.x.map((v) => `<td>${v.toFixed(6)}</td>`).join("")}` +
      `<td>${s.residual.toExponential(1)}</td><td>${s.mechanism}</td></tr>`)
    .join("");
  $("solutions").innerHTML = `<table><tr><th>#</th><th colspan="${result.solutions[0]?.x.length ?? 1}">x</th>` +
    `<th>|F|</th><th>found by</th></tr>${rows}</table>`;
}

function runSolve() {
  try {
    const file = current();
    const t0 = performance.now();
    const result = JSON.parse(solveSystem(JSON.stringify(file)));
    const ms = performance.now() - t0;
    last = { file, result };
    draw(file, result);
    listSolutions(result);
    setStatus(`${result.solutions.length} solutions in ${ms.toFixed(0)} ms; ${result.slices} slices, ` +
      `${result.steps} steps, ${result.halvings} halvings, ${result.bisections} bisections; ordering: ${result.ordering}`);
  } catch (e) {
    setStatus(String(e.message ?? e), true);
  }
}

function runAnalyze() {
  try {
    const a = JSON.parse(analyze($("source").value));
    const d = a.dependence.map((row) => `<tr>${row.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
    const jac = a.jacobian.map((row, i) => row.map((e, j) => `d f${i + 1} / d x${j + 1} = ${e}`).join("\n")).join("\n");
    $("analysis").innerHTML = `<p>D matrix (0 absent, 1 linear, 2 nonlinear), suggestion: <b>${a.suggestion}</b></p>` +
      `<table>${d}</table><pre></pre>`;
    $("analysis").querySelector("pre").textContent = jac;
  } catch (e) {
    setStatus(String(e.message ?? e), true);
  }
}

function loadProblem() {
  try {
    const text = problem($("problem").value, $("refined").checked);
    $("source").value = JSON.stringify(JSON.parse(text), null, 2);
    last = null;
    drawFrame(current());
    $("solutions").innerHTML = "";
    $("analysis").innerHTML = "";
    $("probe").textContent = "";
    setStatus("");
  } catch (e) {
    setStatus(String(e.message ?? e), true);
  }
}

canvas.addEventListener("click", (ev) => {
  try {
    const file = current();
    const rect = canvas.getBoundingClientRect();
    const [x, y] = view(file).fromPx(ev.clientX - rect.left, ev.clientY - rect.top);
    const point = file.lower.map((lo, k) => (k === 0 ? x : k === 1 ? y : (lo + file.upper[k]) / 2));
    const out = JSON.parse(probe(JSON.stringify(file), JSON.stringify(point)));
    $("probe").textContent =
      `x = (${point.map((v) => v.toFixed(4)).join(", ")})\n` +
      out.values.map((v, i) => `f${i + 1} = ${v.toExponential(4)}`).join("\n") +
      `\nmax |f| = ${out.residual.toExponential(3)}${out.in_box ? "" : "  (outside the box)"}`;
  } catch (e) {
    setStatus(String(e.message ?? e), true);
  }
});

await init();
for (const p of JSON.parse(problems())) {
  const opt = document.createElement("option");
  opt.value = p.id;
  opt.textContent = `${p.id} (n = ${p.n}) ${p.title}`;
  $("problem").append(opt);
}
$("problem").value = "T10";
$("problem").addEventListener("change", loadProblem);
$("refined").addEventListener("change", loadProblem);
$("solve").addEventListener("click", runSolve);
$("analyze").addEventListener("click", runAnalyze);
loadProblem();
