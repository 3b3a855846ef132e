import init, { Session, regionMask } from "./pkg/rectiscope_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

let session = null;
let view = { cx: 0, cy: 0, scale: 1 };
let selected = null;

function showError(e) {
  $("error").textContent = e ? String(e.message ?? e) : "";
}

function fitView(coords) {
  let [minX, minY, maxX, maxY] = [Infinity, Infinity, -Infinity, -Infinity];
  for (let i = 0; i < coords.length; i += 2) {
    minX = Math.min(minX, coords[i]); maxX = Math.max(maxX, coords[i]);
    minY = Math.min(minY, coords[i + 1]); maxY = Math.max(maxY, coords[i + 1]);
  }
  const span = Math.max(maxX - minX, maxY - minY, 1e-9) * 1.1;
  view = { cx: (minX + maxX) / 2, cy: (minY + maxY) / 2, scale: $("cloud").width / span };
}

const toCanvas = (x, y) => {
  const c = $("cloud");
  return [c.width / 2 + (x - view.cx) * view.scale, c.height / 2 - (y - view.cy) * view.scale];
};

function drawCloud(profile) {
  const canvas = $("cloud");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const coords = session.coords();
  ctx.fillStyle = "#333";
  for (let i = 0; i < coords.length; i += 2) {
    const [u, v] = toCanvas(coords[i], coords[i + 1]);
    ctx.fillRect(u - 0.75, v - 0.75, 1.5, 1.5);
  }
  if (!profile) return;
  const [x, y] = profile.x;
  profile.radii.forEach((r, j) => {
    const [u, v] = toCanvas(x, y);
    ctx.strokeStyle = profile.valid[j] ? "rgba(30,90,200,0.5)" : "rgba(150,150,150,0.4)";
    ctx.beginPath();
    ctx.arc(u, v, r * view.scale, 0, 2 * Math.PI);
    ctx.stroke();
    const d = profile.directions[j];
    if (d) {
      const [a, b] = toCanvas(x - r * d[0], y - r * d[1]);
      const [c, e] = toCanvas(x + r * d[0], y + r * d[1]);
      ctx.strokeStyle = "rgba(200,60,30,0.7)";
      ctx.beginPath(); ctx.moveTo(a, b); ctx.lineTo(c, e); ctx.stroke();
    }
  });
}

const fmt = (v) => (v === null || v === undefined ? "–" : Number(v).toExponential(3));

function showProfile(p) {
  const rows = p.radii.map((r, j) =>
    `<tr><td>${fmt(r)}</td><td>${p.valid[j] ? "yes" : "no"}</td><td>${fmt(p.beta2[j])}</td>` +
    `<td>${fmt(p.beta_inf[j])}</td><td>${fmt(p.theta[j])}</td><td>${fmt(p.cyl_excess[j])}</td>` +
    `<td>${fmt(p.parab_excess[j])}</td></tr>`);
  $("profile").innerHTML =
    "<tr><th>r</th><th>valid</th><th>β₂</th><th>β∞</th><th>θ</th><th>cyl. excess</th><th>parab. excess</th></tr>" +
    rows.join("");
  const tag = (name, outcome) => `<span class="${outcome}">${name}: ${outcome}</span>`;
  $("verdicts").innerHTML = `point ${p.index} · ${tag("fixed plane", p.fixed_plane)} · ` +
    `${tag("rotating", p.rotating)} · β∞ slope ${p.beta_inf_slope === null ? "–" : p.beta_inf_slope.toFixed(3)}`;
}

function profileSelected() {
  if (!session || selected === null) return;
  try {
    const p = JSON.parse(session.profile(selected, num("r0"), num("rho"), num("scales"), num("alpha"), num("lambda")));
    showProfile(p);
    drawCloud(p);
    showError(null);
  } catch (e) {
    drawCloud(null);
    showError(e);
  }
}

function generate() {
  try {
    session?.free();
    session = new Session($("kind").value, num("count"), num("param"), BigInt(num("seed")));
    selected = null;
    fitView(session.coords());
    drawCloud(null);
    $("profile").innerHTML = "";
    $("verdicts").textContent = `${session.pointCount()} points; resolution floor ${fmt(session.resolutionFloor())}`;
    showError(null);
  } catch (e) {
    showError(e);
  }
}

function drawRegion() {
  const canvas = $("regions");
  const size = canvas.width;
  try {
    const mask = regionMask($("region").value, num("angle"), num("rlambda"), num("ralpha"), num("slope"), size, 1.5);
    const ctx = canvas.getContext("2d");
    const image = ctx.createImageData(size, size);
    for (let i = 0; i < mask.length; i++) {
      const inside = mask[i] === 1;
      image.data.set(inside ? [70, 130, 220, 255] : [250, 250, 250, 255], 4 * i);
    }
    ctx.putImageData(image, 0, 0);
    ctx.strokeStyle = "#999";
    ctx.beginPath();
    ctx.moveTo(size / 2, 0); ctx.lineTo(size / 2, size);
    ctx.moveTo(0, size / 2); ctx.lineTo(size, size / 2);
    ctx.stroke();
    showError(null);
  } catch (e) {
    showError(e);
  }
}

await init();
$("generate").addEventListener("click", generate);
$("cloud").addEventListener("click", (ev) => {
  if (!session) return;
  const rect = ev.target.getBoundingClientRect();
  const u = ev.clientX - rect.left, v = ev.clientY - rect.top;
  const x = view.cx + (u - ev.target.width / 2) / view.scale;
  const y = view.cy - (v - ev.target.height / 2) / view.scale;
  selected = session.nearest(x, y);
  profileSelected();
});
for (const id of ["r0", "rho", "scales", "alpha", "lambda"]) $(id).addEventListener("change", profileSelected);
for (const id of ["region", "angle", "rlambda", "ralpha", "slope"]) $(id).addEventListener("input", drawRegion);
generate();
drawRegion();
