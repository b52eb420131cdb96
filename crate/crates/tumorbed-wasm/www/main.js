import init, {
  extent_from_points,
  pipeline_run,
  pipeline_slide_rgba,
  mining_run,
} from "./pkg/tumorbed_wasm.js";

const COLORS = {
  hull: "#2e8b57",
  d1: "#20c5c5",
  d2: "#4169e1",
  gt: "#333",
  point: "#555",
  centroid: "#111",
  kmeans: "#2e8b57",
  random: "#d2691e",
};

function drawSegment(ctx, seg, color, width, scale = 1) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  ctx.moveTo(seg[0][0] * scale, seg[0][1] * scale);
  ctx.lineTo(seg[1][0] * scale, seg[1][1] * scale);
  ctx.stroke();
}

function drawRing(ctx, ring, color, width, scale = 1, dashed = false) {
  if (!ring || ring.length < 2) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.setLineDash(dashed ? [6, 4] : []);
  ctx.beginPath();
  ctx.moveTo(ring[0][0] * scale, ring[0][1] * scale);
  for (const [x, y] of ring.slice(1)) ctx.lineTo(x * scale, y * scale);
  ctx.closePath();
  ctx.stroke();
  ctx.setLineDash([]);
}

// --- 1: extent explorer -----------------------------------------------------

const extentState = { points: [] };

function setupExtent() {
  const canvas = document.getElementById("extent-canvas");
  const ctx = canvas.getContext("2d");
  const readout = document.getElementById("extent-readout");

  function render() {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const mpp = parseFloat(document.getElementById("extent-mpp").value) || 1;
    if (extentState.points.length >= 3) {
      const res = JSON.parse(
        extent_from_points(JSON.stringify(extentState.points), mpp)
      );
      if (res.error) {
        readout.textContent = res.error;
      } else {
        drawRing(ctx, res.hull, COLORS.hull, 2);
        drawSegment(ctx, res.d1_segment, COLORS.d1, 2.5);
        drawSegment(ctx, res.d2_segment, COLORS.d2, 2.5);
        readout.textContent =
          `d1 = ${res.d1_px.toFixed(1)} px = ${res.d1_mm.toFixed(2)} mm\n` +
          `d2 = ${res.d2_px.toFixed(1)} px = ${res.d2_mm.toFixed(2)} mm\n` +
          `d_prim = ${res.d_prim_mm.toFixed(2)} mm   (theta = ${res.theta.toFixed(3)} rad)`;
      }
    } else {
      readout.textContent = `add at least 3 points (${extentState.points.length} so far)`;
    }
    ctx.fillStyle = COLORS.point;
    for (const [x, y] of extentState.points) {
      ctx.beginPath();
      ctx.arc(x, y, 3, 0, Math.PI * 2);
      ctx.fill();
    }
  }

  canvas.addEventListener("click", (ev) => {
    const rect = canvas.getBoundingClientRect();
    extentState.points.push([ev.clientX - rect.left, ev.clientY - rect.top]);
    render();
  });
  document.getElementById("extent-clear").addEventListener("click", () => {
    extentState.points = [];
    render();
  });
  document.getElementById("extent-random").addEventListener("click", () => {
    extentState.points = [];
    const n = 8 + Math.floor(Math.random() * 18);
    for (let i = 0; i < n; i++) {
      const a = Math.random() * Math.PI * 2;
      const r = Math.sqrt(Math.random());
      extentState.points.push([
        240 + 200 * r * Math.cos(a),
        200 + 160 * r * Math.sin(a),
      ]);
    }
    render();
  });
  document.getElementById("extent-mpp").addEventListener("input", render);
  render();
}

// --- 2: pipeline explorer ---------------------------------------------------

const PIPELINE_DIMS = 768;

function pipelineParams() {
  const stride = parseInt(document.getElementById("pl-stride").value, 10);
  return {
    seed: parseInt(document.getElementById("pl-seed").value, 10) || 0,
    dims: PIPELINE_DIMS,
    mpp: 16.0,
    tissue_density: parseFloat(document.getElementById("pl-density").value),
    tumor: document.getElementById("pl-tumor").checked,
    side: 96,
    stride,
    tau: parseFloat(document.getElementById("pl-tau").value),
    p_fp: parseFloat(document.getElementById("pl-pfp").value),
    p_fn: parseFloat(document.getElementById("pl-pfn").value),
    overlap_rule: parseFloat(document.getElementById("pl-overlap").value),
  };
}

function setupPipeline() {
  const canvas = document.getElementById("pipeline-canvas");
  const ctx = canvas.getContext("2d");
  const readout = document.getElementById("pipeline-readout");
  const slideCanvas = document.createElement("canvas");
  slideCanvas.width = PIPELINE_DIMS;
  slideCanvas.height = PIPELINE_DIMS;
  const slideCtx = slideCanvas.getContext("2d");

  function render() {
    const params = pipelineParams();
    const json = JSON.stringify(params);
    const rgba = pipeline_slide_rgba(json);
    const res = JSON.parse(pipeline_run(json));
    if (res.error) {
      readout.textContent = res.error;
      return;
    }
    const scale = canvas.width / params.dims;

    slideCtx.putImageData(
      new ImageData(new Uint8ClampedArray(rgba), params.dims, params.dims),
      0,
      0
    );
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(slideCanvas, 0, 0, canvas.width, canvas.height);

    const hm = res.heatmap;
    const cell = hm.cell_size * scale;
    if (document.getElementById("pl-show-heatmap").checked) {
      for (let cy = 0; cy < hm.height; cy++) {
        for (let cx = 0; cx < hm.width; cx++) {
          const mean = hm.means[cy * hm.width + cx];
          if (mean > 0) {
            ctx.fillStyle = `rgba(220, 60, 60, ${0.45 * (mean / 255)})`;
            ctx.fillRect(cx * cell, cy * cell, cell, cell);
          }
          if (hm.mask[cy * hm.width + cx]) {
            ctx.strokeStyle = "rgba(160, 30, 30, 0.8)";
            ctx.lineWidth = 1;
            ctx.strokeRect(cx * cell, cy * cell, cell, cell);
          }
        }
      }
    }

    drawRing(ctx, res.ground_truth, COLORS.gt, 2, scale, true);
    drawRing(ctx, res.hull, COLORS.hull, 2.5, scale);
    if (res.extent_pred) {
      drawSegment(ctx, res.extent_pred.d1_segment, COLORS.d1, 2.5, scale);
      drawSegment(ctx, res.extent_pred.d2_segment, COLORS.d2, 2.5, scale);
    }

    let text = `label: ${res.label}`;
    if (res.extent_gt) {
      text += `\nplanted d_prim = ${res.extent_gt.d_prim_mm.toFixed(2)} mm`;
    }
    if (res.extent_pred) {
      text += `\npredicted d_prim = ${res.extent_pred.d_prim_mm.toFixed(2)} mm`;
    }
    if (res.dice != null) {
      text += `\nDice = ${res.dice.toFixed(3)}   |d_prim error| = ${res.dprim_error_mm.toFixed(2)} mm`;
    }
    readout.textContent = text;
  }

  for (const id of [
    "pl-seed",
    "pl-tumor",
    "pl-stride",
    "pl-show-heatmap",
  ]) {
    document.getElementById(id).addEventListener("change", render);
  }
  const sliders = [
    ["pl-density", "pl-density-v", 2],
    ["pl-tau", "pl-tau-v", 2],
    ["pl-pfp", "pl-pfp-v", 2],
    ["pl-pfn", "pl-pfn-v", 2],
    ["pl-overlap", "pl-overlap-v", 2],
  ];
  for (const [id, label, digits] of sliders) {
    const el = document.getElementById(id);
    el.addEventListener("input", () => {
      document.getElementById(label).textContent = parseFloat(el.value).toFixed(digits);
      render();
    });
  }
  render();
}

// --- 3: mining explorer -----------------------------------------------------

function setupMining() {
  const canvas = document.getElementById("mining-canvas");
  const ctx = canvas.getContext("2d");
  const readout = document.getElementById("mining-readout");

  function render() {
    const params = {
      seed: parseInt(document.getElementById("mn-seed").value, 10) || 0,
      k: parseInt(document.getElementById("mn-k").value, 10) || 3,
      m: parseInt(document.getElementById("mn-m").value, 10) || 3,
      per_blob: parseInt(document.getElementById("mn-per").value, 10) || 120,
      sigma: parseFloat(document.getElementById("mn-sigma").value),
      spacing: 200.0,
    };
    params.random_total = Math.min(params.k * params.m, 3 * params.per_blob);
    const res = JSON.parse(mining_run(JSON.stringify(params)));
    if (res.error) {
      readout.textContent = res.error;
      return;
    }

    // Fit the point cloud into the canvas.
    const xs = res.points.map((p) => p[0]);
    const ys = res.points.map((p) => p[1]);
    const pad = 20;
    const minX = Math.min(...xs), maxX = Math.max(...xs);
    const minY = Math.min(...ys), maxY = Math.max(...ys);
    const sx = (canvas.width - 2 * pad) / (maxX - minX || 1);
    const sy = (canvas.height - 2 * pad) / (maxY - minY || 1);
    const s = Math.min(sx, sy);
    const tx = (x) => pad + (x - minX) * s;
    const ty = (y) => pad + (y - minY) * s;

    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const blobShades = ["#9aa0a6", "#7d8a99", "#a5948a"];
    res.points.forEach(([x, y], i) => {
      ctx.fillStyle = blobShades[res.blob[i]] ?? "#999";
      ctx.beginPath();
      ctx.arc(tx(x), ty(y), 2.2, 0, Math.PI * 2);
      ctx.fill();
    });
    for (const i of res.random_selected) {
      const [x, y] = res.points[i];
      ctx.strokeStyle = COLORS.random;
      ctx.lineWidth = 2;
      ctx.strokeRect(tx(x) - 5, ty(y) - 5, 10, 10);
    }
    for (const i of res.kmeans_selected) {
      const [x, y] = res.points[i];
      ctx.strokeStyle = COLORS.kmeans;
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.arc(tx(x), ty(y), 6.5, 0, Math.PI * 2);
      ctx.stroke();
    }
    for (const [x, y] of res.centroids) {
      ctx.strokeStyle = COLORS.centroid;
      ctx.lineWidth = 2.5;
      ctx.beginPath();
      ctx.moveTo(tx(x) - 6, ty(y) - 6);
      ctx.lineTo(tx(x) + 6, ty(y) + 6);
      ctx.moveTo(tx(x) - 6, ty(y) + 6);
      ctx.lineTo(tx(x) + 6, ty(y) - 6);
      ctx.stroke();
    }

    readout.textContent =
      `k-means picks cover ${res.kmeans_blobs_covered}/3 blobs; ` +
      `random picks cover ${res.random_blobs_covered}/3\n` +
      `WCSS = ${res.wcss.toFixed(1)}  (${res.kmeans_selected.length} k-means picks, ` +
      `${res.random_selected.length} random picks)`;
  }

  for (const id of ["mn-seed", "mn-k", "mn-m", "mn-per"]) {
    document.getElementById(id).addEventListener("change", render);
  }
  const sigma = document.getElementById("mn-sigma");
  sigma.addEventListener("input", () => {
    document.getElementById("mn-sigma-v").textContent = sigma.value;
    render();
  });
  document.getElementById("mn-reroll").addEventListener("click", () => {
    const el = document.getElementById("mn-seed");
    el.value = String((parseInt(el.value, 10) || 0) + 1);
    render();
  });
  render();
}

init().then(() => {
  setupExtent();
  setupPipeline();
  setupMining();
});
