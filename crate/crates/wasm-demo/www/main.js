import init, { explore_strategies, simulate_committee, render_prompt } from "./pkg/ics_wasm_demo.js";

await init();

const $ = (id) => document.getElementById(id);

// strategy explorer

const pts = $("pts");
const ctx = pts.getContext("2d");
let points = [];

function toCanvas(p) {
  return [pts.width / 2 + p.x * 40, pts.height / 2 - p.y * 40];
}

function scatter() {
  points = [];
  for (let i = 0; i < 40; i++) {
    const a = Math.random() * 2 * Math.PI;
    const r = Math.abs(Math.random() + Math.random() - 1) * 4;
    points.push({ x: r * Math.cos(a), y: r * Math.sin(a) });
  }
  draw();
}

function draw() {
  ctx.clearRect(0, 0, pts.width, pts.height);
  $("pts-msg").textContent = "";
  $("pts-msg").className = "";
  if (points.length === 0) return;
  let out;
  try {
    out = JSON.parse(explore_strategies(JSON.stringify(points), $("strategy").value,
      Number($("n").value), Number($("seed").value)));
  } catch (e) {
    $("pts-msg").textContent = String(e);
    $("pts-msg").className = "err";
    out = null;
  }
  const lo = out ? Math.min(...out.scores) : 0;
  const hi = out ? Math.max(...out.scores) : 1;
  points.forEach((p, i) => {
    const t = out && hi > lo ? (out.scores[i] - lo) / (hi - lo) : 0.5;
    const [cx, cy] = toCanvas(p);
    ctx.fillStyle = `hsl(220, 70%, ${80 - 55 * t}%)`;
    ctx.beginPath();
    ctx.arc(cx, cy, 5, 0, 2 * Math.PI);
    ctx.fill();
  });
  if (!out) return;
  ctx.font = "11px sans-serif";
  out.selected.forEach((i, order) => {
    const [cx, cy] = toCanvas(points[i]);
    ctx.strokeStyle = "#c33";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(cx, cy, 9, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillStyle = "#c33";
    ctx.fillText(String(order + 1), cx + 10, cy - 8);
  });
  $("pts-msg").textContent = `${points.length} points, selected ${out.selected.join(", ")}`;
}

pts.addEventListener("click", (ev) => {
  const r = pts.getBoundingClientRect();
  points.push({ x: (ev.clientX - r.left - pts.width / 2) / 40, y: -(ev.clientY - r.top - pts.height / 2) / 40 });
  draw();
});
for (const id of ["strategy", "n", "seed"]) $(id).addEventListener("input", draw);
$("scatter").onclick = scatter;
$("clear").onclick = () => { points = []; draw(); };
scatter();

// committee vote

const curve = $("curve");
const cctx = curve.getContext("2d");

function vote() {
  $("vote-msg").className = "";
  let out;
  try {
    out = JSON.parse(simulate_committee(Number($("p").value), Number($("labels").value),
      Number($("maxk").value), 4000, 7));
  } catch (e) {
    $("vote-msg").textContent = String(e);
    $("vote-msg").className = "err";
    return;
  }
  const w = curve.width, h = curve.height, pad = 30;
  const k = out.accuracy.length;
  const x = (i) => pad + (k === 1 ? 0 : (i / (k - 1)) * (w - 2 * pad));
  const y = (v) => h - pad - v * (h - 2 * pad);
  cctx.clearRect(0, 0, w, h);
  cctx.strokeStyle = "#999";
  cctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  cctx.fillStyle = "#555";
  cctx.font = "11px sans-serif";
  cctx.fillText("1.0", 4, y(1) + 4);
  cctx.fillText("0.0", 4, y(0) + 4);
  cctx.fillText(`k = 1..${k}`, w / 2 - 20, h - 8);
  const line = (vals, colour) => {
    cctx.strokeStyle = colour;
    cctx.lineWidth = 2;
    cctx.beginPath();
    vals.forEach((v, i) => (i ? cctx.lineTo(x(i), y(v)) : cctx.moveTo(x(i), y(v))));
    cctx.stroke();
  };
  line(out.accuracy, "#2a6");
  line(out.ties_broken, "#c93");
  const last = out.accuracy[k - 1];
  $("vote-msg").textContent =
    `single prompt ${out.accuracy[0].toFixed(3)}, committee of ${k} ${last.toFixed(3)} (green); tie rate in orange`;
}
$("vote").onclick = vote;
vote();

// prompt renderer

$("req").value = JSON.stringify({
  dataset: "esnli",
  demonstrations: [
    { id: "d1", content: { kind: "nli", premise: "A man is riding a bicycle down a busy street.", hypothesis: "A person is riding a bike." }, gold: "entailment" },
    { id: "d2", content: { kind: "nli", premise: "Two children are playing in the park.", hypothesis: "The children are asleep." }, gold: "contradiction" },
  ],
  target: { id: "t1", content: { kind: "nli", premise: "An old dog is lying on a porch.", hypothesis: "An animal is resting." }, gold: null },
  completion: " Entailment.",
}, null, 2);

$("render").onclick = () => {
  const out = $("prompt");
  out.className = "";
  try {
    const r = JSON.parse(render_prompt($("req").value));
    out.textContent = r.rendered + "\n\n-- labels: " + r.labels.join(", ") +
      "\n-- parsed: " + (r.parsed ?? "INVALID");
  } catch (e) {
    out.textContent = String(e);
    out.className = "err";
  }
};
$("render").onclick();
